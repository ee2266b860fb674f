"""Indivisible goods with bounded integer utilities.

Players are numbered ``0..k-1`` and goods ``0..n-1``. Utilities live in
``{1, ..., M}``; a profile is a read-only ``k x n`` integer array.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import ValidationError
from .streams import derive_seed, stream

BIN_SPLIT, LEFTOVER, RAW_RANDOM = 0, 1, 2
PROVENANCE = ("bin-split", "leftover", "raw-random")


@dataclass(frozen=True, eq=False)
class DiscreteProfile:
    utilities: np.ndarray
    M: int

    def __post_init__(self):
        if isinstance(self.M, bool) or not isinstance(self.M, (int, np.integer)) or self.M < 1:
            raise ValidationError(f"M must be a positive integer, got {self.M!r}")
        raw = np.asarray(self.utilities)
        if raw.ndim != 2 or raw.shape[0] < 1:
            raise ValidationError("utilities must be a non-empty k x n matrix")
        if raw.size and not np.issubdtype(raw.dtype, np.integer):
            raise ValidationError("utilities must be integers")
        u = raw.astype(np.int64)
        bad = np.argwhere((u < 1) | (u > self.M))
        if bad.size:
            i, j = (int(x) for x in bad[0])
            raise ValidationError(
                f"utility of player {i} for good {j} is {u[i, j]}; "
                f"every utility must lie in {{1, ..., M}} with M = {self.M}"
            )
        u.setflags(write=False)
        object.__setattr__(self, "utilities", u)
        object.__setattr__(self, "M", int(self.M))

    @property
    def k(self) -> int:
        return self.utilities.shape[0]

    @property
    def n(self) -> int:
        return self.utilities.shape[1]

    @cached_property
    def totals(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.utilities.sum(axis=1))

    def with_row(self, i: int, row) -> DiscreteProfile:
        """Copy of the profile with player i's utilities replaced."""
        u = self.utilities.copy()
        u[i] = row
        return DiscreteProfile(u, self.M)

    def __eq__(self, other):
        if not isinstance(other, DiscreteProfile):
            return NotImplemented
        return self.M == other.M and np.array_equal(self.utilities, other.utilities)

    __hash__ = None

    @cached_property
    def bins(self) -> tuple[BinIndex, ...]:
        return _bin(self)


@dataclass(frozen=True, eq=False)
class BinIndex:
    """Goods whose column of utilities equals ``signature``."""

    signature: tuple[int, ...]
    members: np.ndarray

    def __len__(self) -> int:
        return len(self.members)


def _bin(profile: DiscreteProfile) -> tuple[BinIndex, ...]:
    u = profile.utilities
    if profile.n == 0:
        return ()
    if profile.M ** profile.k < 2**62:
        weights = profile.M ** np.arange(profile.k - 1, -1, -1, dtype=np.int64)
        codes = (u - 1).T @ weights
        _, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    else:
        _, first, inverse = np.unique(u, axis=1, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(first) + 1))
    out = []
    for b, col in enumerate(first):
        members = order[bounds[b] : bounds[b + 1]]
        members.setflags(write=False)
        out.append(BinIndex(tuple(int(x) for x in u[:, col]), members))
    return tuple(out)


def bin_goods(declared: DiscreteProfile) -> list[BinIndex]:
    """Group goods by their declared utility column, sorted by signature."""
    return list(declared.bins)


@dataclass(frozen=True, eq=False)
class DiscreteAllocation:
    """``owner[g]`` is the player (or part) holding good g."""

    owner: np.ndarray
    provenance: np.ndarray
    n_owners: int
    superfair_accepted: bool = False

    def __post_init__(self):
        owner = np.asarray(self.owner, dtype=np.int64)
        prov = np.asarray(self.provenance, dtype=np.int8)
        if owner.shape != prov.shape or owner.ndim != 1:
            raise ValueError("owner and provenance must be vectors of equal length")
        if owner.size and (owner.min() < 0 or owner.max() >= self.n_owners):
            raise ValueError("owner index out of range")
        owner.setflags(write=False)
        prov.setflags(write=False)
        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "provenance", prov)

    @property
    def n(self) -> int:
        return len(self.owner)

    def tags(self) -> list[str]:
        return [PROVENANCE[p] for p in self.provenance]

    def goods_of(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.owner == j)

    def values(self, profile: DiscreteProfile) -> np.ndarray:
        """``V[i, j]`` = player i's utility for everything owner j holds."""
        if profile.n != self.n:
            raise ValueError(f"profile has {profile.n} goods, allocation has {self.n}")
        V = np.zeros((profile.k, self.n_owners), dtype=np.int64)
        for j in range(self.n_owners):
            V[:, j] = profile.utilities[:, self.owner == j].sum(axis=1)
        return V

    def own_values(self, profile: DiscreteProfile) -> np.ndarray:
        return np.diagonal(self.values(profile)).copy()


def mechanism3(declared: DiscreteProfile, seed) -> DiscreteAllocation:
    """Split every bin into k equal blocks, leftovers to uniform players.

    A uniform shuffle of each bin followed by contiguous blocks is uniform
    over ordered splits, so each good lands with each player with
    probability exactly 1/k.
    """
    k, n = declared.k, declared.n
    owner = np.empty(n, dtype=np.int64)
    prov = np.full(n, BIN_SPLIT, dtype=np.int8)
    split_rng = stream(seed, "bin-split")
    left_rng = stream(seed, "leftover")
    for b in declared.bins:
        members = split_rng.permutation(b.members)
        q = len(members) // k
        owner[members[: q * k]] = np.repeat(np.arange(k), q)
        rest = members[q * k :]
        owner[rest] = left_rng.integers(0, k, size=len(rest))
        prov[rest] = LEFTOVER
    return DiscreteAllocation(owner, prov, k)


def superfair_check_discrete(profile: DiscreteProfile, alloc: DiscreteAllocation) -> bool:
    """Every player i values their own share strictly above total_i / k."""
    if alloc.n_owners != profile.k:
        raise ValueError("allocation and profile disagree on the number of players")
    own = alloc.own_values(profile)
    return all(profile.k * int(v) > t for v, t in zip(own, profile.totals))


def mechanism4(declared: DiscreteProfile, seed) -> DiscreteAllocation:
    """One uniform assignment of goods; keep it iff super-fair, else ``mechanism3``."""
    owner = stream(seed, "draw").integers(0, declared.k, size=declared.n)
    raw = DiscreteAllocation(owner, np.full(declared.n, RAW_RANDOM), declared.k)
    if superfair_check_discrete(declared, raw):
        return replace(raw, superfair_accepted=True)
    return mechanism3(declared, derive_seed(seed, "fallback"))


def fairness_floor(profile: DiscreteProfile) -> tuple[Fraction, ...]:
    """Per-player deterministic floor ``total_i / k - M * M**k`` for truthful play.

    Each bin leaves fewer than k goods over and there are at most M**k bins,
    so a truthful player loses at most ``M * M**k`` against ``total_i / k``.
    """
    k, M = profile.k, profile.M
    return tuple(Fraction(t, k) - M * M**k for t in profile.totals)


@dataclass(frozen=True)
class EpsilonBound:
    """Error scale ``M k M**k / n`` of the discrete regime."""

    epsilon: Fraction
    M: int
    k: int
    n: int
    regime_scale: Fraction = field(init=False)

    def __post_init__(self):
        scale = Fraction(self.M * self.k * self.M**self.k, self.n)
        object.__setattr__(self, "regime_scale", scale)
        if self.epsilon < scale:
            raise ValueError(f"epsilon {self.epsilon} is below the regime scale {scale}")

    @classmethod
    def tight(cls, M: int, k: int, n: int) -> EpsilonBound:
        if n < 1:
            raise ValueError("the error scale needs at least one good")
        return cls(Fraction(M * k * M**k, n), M, k, n)

    @property
    def relative_floor(self) -> Fraction:
        """Guaranteed fraction of ``total_i / k`` for truthful players."""
        return 1 - self.epsilon
