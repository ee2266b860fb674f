"""Turning fractional ownership of indivisible goods into integral allocations.

A ``FractionMatrix`` ``D`` says which fraction of each good belongs to each
part. The random scheme gives each good to part i with probability
``D[i][g]``; the binned scheme hands out ``floor(n_S * D[i][S])`` goods of
every bin deterministically and randomizes only the few leftovers, which
bounds the realized value on every single run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .discrete import BIN_SPLIT, LEFTOVER, RAW_RANDOM, DiscreteAllocation, DiscreteProfile
from .measures import as_rational
from .streams import stream, uniform_below

TargetMatrix = tuple[tuple[Fraction, ...], ...]


def _lcm(values) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


@dataclass(frozen=True, eq=False)
class FractionMatrix:
    """``rows[i][g]``: fraction of good g held by part i; columns sum to 1."""

    rows: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(as_rational(x) for x in row) for row in self.rows)
        if not rows:
            raise ValueError("need at least one part")
        n = len(rows[0])
        if any(len(r) != n for r in rows):
            raise ValueError("fraction matrix is ragged")
        for g in range(n):
            col = [r[g] for r in rows]
            if any(x < 0 or x > 1 for x in col):
                raise ValueError(f"column {g} has an entry outside [0, 1]")
            if sum(col) != 1:
                raise ValueError(f"column {g} sums to {sum(col)}, expected 1")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def uniform(cls, n_parts: int, n_goods: int) -> FractionMatrix:
        x = Fraction(1, n_parts)
        return cls(tuple((x,) * n_goods for _ in range(n_parts)))

    @classmethod
    def from_owner(cls, owner: Sequence[int], n_parts: int) -> FractionMatrix:
        return cls(
            tuple(tuple(Fraction(int(o == i)) for o in owner) for i in range(n_parts))
        )

    @property
    def n_parts(self) -> int:
        return len(self.rows)

    @property
    def n_goods(self) -> int:
        return len(self.rows[0])

    def column(self, g: int) -> tuple[Fraction, ...]:
        return tuple(r[g] for r in self.rows)

    def integer_form(self) -> tuple[int, np.ndarray]:
        """Common denominator L and the numerator matrix ``L * D`` as Python ints."""
        L = _lcm(x.denominator for r in self.rows for x in r)
        nums = np.array(
            [[x.numerator * (L // x.denominator) for x in r] for r in self.rows], dtype=object
        )
        return L, nums


def extension_value(profile: DiscreteProfile, D: FractionMatrix) -> TargetMatrix:
    """``T[i][j] = sum_g utilities[i][g] * D[j][g]``: what player i would value
    part j at if goods could be split."""
    if profile.n != D.n_goods:
        raise ValueError(f"profile has {profile.n} goods, D has {D.n_goods}")
    L, nums = D.integer_form()
    if profile.n == 0:
        return tuple((Fraction(0),) * D.n_parts for _ in range(profile.k))
    raw = profile.utilities.astype(object) @ nums.T
    return tuple(tuple(Fraction(int(x), L) for x in row) for row in raw)


def _categorical(rng: np.random.Generator, weights: Sequence[Fraction], size: int) -> np.ndarray:
    """Exact draws from a finite distribution given by rational weights."""
    total = sum(weights)
    weights = [w / total for w in weights]
    L = _lcm(w.denominator for w in weights)
    cum = np.cumsum([w.numerator * (L // w.denominator) for w in weights])
    if L < 2**62:
        u = uniform_below(rng, L, size=size)
        return np.searchsorted(cum.astype(np.int64), u, side="right")
    cum = [int(c) for c in cum]
    out = np.empty(size, dtype=np.int64)
    for t in range(size):
        x = uniform_below(rng, L)
        out[t] = next(i for i, c in enumerate(cum) if x < c)
    return out


def random_scheme(profile: DiscreteProfile, D: FractionMatrix, seed) -> DiscreteAllocation:
    """Give each good g to part i independently with probability ``D[i][g]``."""
    if profile.n != D.n_goods:
        raise ValueError(f"profile has {profile.n} goods, D has {D.n_goods}")
    rng = stream(seed, "random-scheme")
    n = D.n_goods
    L, nums = D.integer_form()
    if L < 2**62:
        cum = np.cumsum(nums.astype(np.int64), axis=0)
        u = uniform_below(rng, L, size=n)
        owner = (u[None, :] >= cum).sum(axis=0)
    else:
        owner = np.array([_categorical(rng, D.column(g), 1)[0] for g in range(n)], dtype=np.int64)
    return DiscreteAllocation(owner, np.full(n, RAW_RANDOM), D.n_parts)


def average_per_bin(profile: DiscreteProfile, D: FractionMatrix) -> dict[tuple[int, ...], tuple[Fraction, ...]]:
    """Replace D by its mean over each bin; utilities are unchanged by this."""
    if profile.n != D.n_goods:
        raise ValueError(f"profile has {profile.n} goods, D has {D.n_goods}")
    out = {}
    for b in profile.bins:
        size = len(b)
        out[b.signature] = tuple(
            sum((row[int(g)] for g in b.members), Fraction(0)) / size for row in D.rows
        )
    return out


def per_bin_matrix(profile: DiscreteProfile, per_bin: Mapping) -> FractionMatrix:
    """Expand per-bin fraction columns back to a per-good ``FractionMatrix``."""
    columns: list = [None] * profile.n
    for b in profile.bins:
        col = tuple(as_rational(x) for x in per_bin[b.signature])
        for g in b.members:
            columns[int(g)] = col
    if profile.n == 0:
        n_parts = len(next(iter(per_bin.values()))) if per_bin else 1
        return FractionMatrix(tuple(() for _ in range(n_parts)))
    return FractionMatrix(tuple(zip(*columns)))


def binned_scheme(profile: DiscreteProfile, per_bin: Mapping, seed) -> DiscreteAllocation:
    """Integral allocation that tracks per-bin fractions up to the leftovers.

    From a bin of size ``n_S`` part i gets ``floor(n_S * D[i][S])`` goods
    chosen uniformly. The ``r`` leftovers go independently to part i with
    probability ``frac_i / r``, where ``frac_i`` is the fractional part of
    ``n_S * D[i][S]``; that keeps every part's expected count at exactly
    ``n_S * D[i][S]``.
    """
    n = profile.n
    owner = np.empty(n, dtype=np.int64)
    prov = np.full(n, BIN_SPLIT, dtype=np.int8)
    split_rng = stream(seed, "bin-split")
    left_rng = stream(seed, "leftover")
    n_parts = None
    for b in profile.bins:
        if b.signature not in per_bin:
            raise ValueError(f"no fractions given for bin {b.signature}")
        col = [as_rational(x) for x in per_bin[b.signature]]
        if n_parts is None:
            n_parts = len(col)
        if len(col) != n_parts or any(x < 0 for x in col) or sum(col) != 1:
            raise ValueError(f"fractions for bin {b.signature} are not a distribution")
        size = len(b)
        exact = [size * x for x in col]
        counts = [math.floor(x) for x in exact]
        members = split_rng.permutation(b.members)
        start = 0
        for i, c in enumerate(counts):
            owner[members[start : start + c]] = i
            start += c
        rest = members[start:]
        if len(rest):
            frac = [x - c for x, c in zip(exact, counts)]
            owner[rest] = _categorical(left_rng, frac, len(rest))
            prov[rest] = LEFTOVER
    if n_parts is None:
        n_parts = len(next(iter(per_bin.values()))) if per_bin else 1
    return DiscreteAllocation(owner, prov, n_parts)


def theorem_epsilon(profile: DiscreteProfile) -> Fraction:
    """``M k M**k / n``; asymptotically O(M**k / n) for fixed k and M."""
    M, k = profile.M, profile.k
    return Fraction(M * k * M**k, profile.n)


def binned_bounds(profile: DiscreteProfile, target: TargetMatrix):
    """Per-run window ``[T_ij - eps * total_i, T_ij + k * eps * total_i]``
    for the value player i assigns to part j."""
    eps = theorem_epsilon(profile)
    k = profile.k
    lower = tuple(
        tuple(t - eps * total for t in row) for row, total in zip(target, profile.totals)
    )
    upper = tuple(
        tuple(t + k * eps * total for t in row) for row, total in zip(target, profile.totals)
    )
    return lower, upper


def within_binned_bounds(profile: DiscreteProfile, target: TargetMatrix, alloc: DiscreteAllocation) -> bool:
    lower, upper = binned_bounds(profile, target)
    V = alloc.values(profile)
    return all(
        lower[i][j] <= int(V[i, j]) <= upper[i][j]
        for i in range(profile.k)
        for j in range(alloc.n_owners)
    )
