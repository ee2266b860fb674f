"""Randomized truthful cake cutting over piecewise-constant measures.

``mechanism1`` cuts the cake into k pieces that every declared measure values
at exactly 1/k and hands them out by a uniform random permutation.
``mechanism2`` draws one partition from a distribution whose support is every
finite rational-interval partition; it keeps the draw when every player's
declared value of their own part exceeds 1/k and otherwise falls back to
``mechanism1``.
"""

from __future__ import annotations

import decimal
import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvariantError
from .measures import (
    ONE,
    ZERO,
    IntervalSet,
    Partition,
    StepMeasure,
    as_rational,
    common_refinement,
    measure_of,
)
from .streams import check_seed, derive_seed, stream


@dataclass(frozen=True)
class ContinuousAllocation:
    """``pieces[i]`` is the slice handed to player i."""

    pieces: tuple[IntervalSet, ...]
    permutation_used: tuple[int, ...] | None = None
    superfair_accepted: bool = False
    drawn: Partition | None = field(default=None, compare=False)

    def __post_init__(self):
        Partition(self.pieces)


@dataclass(frozen=True)
class QSamplerConfig:
    """Grid denominator d ~ Geometric(denominator_halting) on {1, 2, ...};
    each of the d grid cells then gets an independent uniform label."""

    denominator_halting: Fraction = Fraction(1, 2)
    rng_seed: int = 0

    def __post_init__(self):
        p = as_rational(self.denominator_halting)
        object.__setattr__(self, "denominator_halting", p)
        if not ZERO < p < ONE:
            raise ValueError("denominator_halting must lie strictly in (0, 1)")
        object.__setattr__(self, "rng_seed", check_seed(self.rng_seed))


def _check_profile(declared: Sequence[StepMeasure]) -> int:
    if len(declared) == 0:
        raise ValueError("need at least one player")
    for m in declared:
        if not isinstance(m, StepMeasure):
            raise TypeError(f"expected StepMeasure, got {type(m).__name__}")
    return len(declared)


def equal_partition(declared: Sequence[StepMeasure]) -> Partition:
    """Partition [0, 1) into k parts worth exactly 1/k to every declared measure.

    Every measure is constant on each cell of the common refinement, so
    splitting each cell into k equal-length slots and giving slot j of every
    cell to part j hands each part exactly 1/k of every cell's mass.
    """
    k = _check_profile(declared)
    cuts = common_refinement(declared)
    slots: list[list[tuple[Fraction, Fraction]]] = [[] for _ in range(k)]
    for a, b in zip(cuts, cuts[1:]):
        width = (b - a) / k
        for j in range(k):
            slots[j].append((a + j * width, a + (j + 1) * width))
    return Partition(tuple(IntervalSet(s) for s in slots))


def assign(parts: Sequence[IntervalSet], permutation: Sequence[int]) -> tuple[IntervalSet, ...]:
    """Give ``parts[permutation[i]]`` to player i."""
    return tuple(parts[int(j)] for j in permutation)


def mechanism1(declared: Sequence[StepMeasure], seed) -> ContinuousAllocation:
    partition = equal_partition(declared)
    tau = stream(seed, "permutation").permutation(len(declared))
    tau = tuple(int(j) for j in tau)
    return ContinuousAllocation(
        pieces=assign(partition.parts, tau),
        permutation_used=tau,
        superfair_accepted=False,
        drawn=partition,
    )


def partition_from_labels(labels: Sequence[int], k: int) -> Partition:
    """Partition whose part j is the union of grid cells labelled j."""
    d = len(labels)
    cells: list[list[tuple[Fraction, Fraction]]] = [[] for _ in range(k)]
    for t, j in enumerate(labels):
        cells[int(j)].append((Fraction(t, d), Fraction(t + 1, d)))
    return Partition(tuple(IntervalSet(c) for c in cells))


def draw_grid_labels(k: int, halting: Fraction, rng: np.random.Generator) -> np.ndarray:
    d = int(rng.geometric(float(halting)))
    return rng.integers(0, k, size=d)


def sample_rational_partition(
    k: int, config: QSamplerConfig, rng: np.random.Generator | None = None
) -> Partition:
    """Draw one partition from the grid sampler.

    Every partition of [0, 1) into finite unions of rational half-open
    intervals has some common denominator d and is hit with probability at
    least ``P[d] * k**-d > 0``. Pass ``rng`` to draw many samples from one
    generator; otherwise the draw stream of ``config.rng_seed`` is used.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if rng is None:
        rng = stream(config.rng_seed, "draw")
    return partition_from_labels(draw_grid_labels(k, config.denominator_halting, rng), k)


def denominator_probability(d: int, halting: Fraction) -> Fraction:
    """P[grid denominator = d]."""
    halting = as_rational(halting)
    return halting * (1 - halting) ** (d - 1)


def partition_probability(partition: Partition, config: QSamplerConfig) -> Fraction:
    """Closed-form probability that the sampler returns exactly ``partition``.

    A grid of denominator d reproduces the partition through exactly one
    labelling when the partition's least common denominator d0 divides d, and
    through none otherwise. Summing ``p (1-p)^(d-1) k^-d`` over d = m*d0 gives
    a geometric series.
    """
    p = config.denominator_halting
    k = partition.k
    d0 = partition.denominator()
    x = ((1 - p) / k) ** d0
    return p / (1 - p) * x / (1 - x)


def is_superfair(measures: Sequence[StepMeasure], partition: Partition) -> bool:
    """True iff ``measures[i]`` values part i strictly above 1/k for every i."""
    k = len(measures)
    if len(partition) != k:
        raise ValueError(f"{k} measures but {len(partition)} parts")
    threshold = Fraction(1, k)
    return all(measure_of(m, partition[i]) > threshold for i, m in enumerate(measures))


def mechanism2(declared: Sequence[StepMeasure], config: QSamplerConfig) -> ContinuousAllocation:
    """Single-draw super-fair mechanism with fallback to ``mechanism1``.

    Exactly one partition is drawn. Redrawing until acceptance would let a
    player veto an early draw in favour of a later one and breaks
    truthfulness, so it is deliberately not offered.
    """
    k = _check_profile(declared)
    drawn = sample_rational_partition(k, config)
    if is_superfair(declared, drawn):
        return ContinuousAllocation(
            pieces=drawn.parts, permutation_used=None, superfair_accepted=True, drawn=drawn
        )
    fallback = mechanism1(declared, derive_seed(config.rng_seed, "fallback"))
    return ContinuousAllocation(
        pieces=fallback.pieces,
        permutation_used=fallback.permutation_used,
        superfair_accepted=False,
        drawn=drawn,
    )


# Rational approximation of arbitrary interval partitions -------------------


def _exact(x) -> tuple[Fraction, bool]:
    """Exact value of an endpoint and whether it was given as a rational type."""
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return Fraction(x), True
    if isinstance(x, (numbers.Real, decimal.Decimal)):
        try:
            return Fraction(x), False
        except TypeError:
            return Fraction(float(x)), False
    raise TypeError(f"endpoint {x!r} is not a real number")


def approximate_by_rational_partition(
    target: Sequence[Sequence[Sequence]],
    measures: Sequence[StepMeasure],
    delta,
) -> Partition:
    """Rational partition Q with ``measure_of(m, Q[j] ^ target[j]) < delta``
    for every measure m and every part j.

    ``target[j]`` is a list of ``(lo, hi)`` pairs. Endpoints given as ``int``
    or ``Fraction`` are kept; any other real endpoint is rounded to the
    nearest multiple of 1/N. The rounded pieces are repaired into a
    partition: the uncovered remainder joins part 0, then each part loses
    whatever earlier parts already hold.

    Writing n for the number of target intervals and rho for the largest
    density, the repair at most doubles the rounding error, so moving each
    endpoint by at most 1/(2N) < delta / (4 n rho) keeps every symmetric
    difference below delta.
    """
    delta = as_rational(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    k = len(target)
    if k == 0 or k != len(measures):
        raise ValueError(f"target has {k} parts for {len(measures)} measures")

    exact_parts: list[IntervalSet] = []
    endpoints: list[list[tuple[tuple[Fraction, bool], tuple[Fraction, bool]]]] = []
    for part in target:
        pairs = []
        for piece in part:
            if len(piece) != 2:
                raise ValueError(f"malformed interval {piece!r}")
            lo, hi = _exact(piece[0]), _exact(piece[1])
            if not ZERO <= lo[0] <= hi[0] <= ONE:
                raise ValueError(f"malformed interval [{piece[0]}, {piece[1]})")
            if lo[0] < hi[0]:
                pairs.append((lo, hi))
        endpoints.append(pairs)
        exact_parts.append(IntervalSet((lo[0], hi[0]) for lo, hi in pairs))
    if sum((p.length for p in exact_parts), ZERO) != ONE or (
        IntervalSet(iv for p in exact_parts for iv in p) != IntervalSet.full()
    ):
        raise ValueError("target parts must be disjoint and cover [0, 1)")

    n_intervals = max(1, sum(len(p) for p in endpoints))
    rho = max(m.max_density for m in measures)
    grid = int(2 * rho * n_intervals / delta) + 1

    def snap(value: Fraction, keep: bool) -> Fraction:
        return value if keep else Fraction(round(value * grid), grid)

    rounded = [
        IntervalSet((snap(*lo), snap(*hi)) for lo, hi in pairs) for pairs in endpoints
    ]
    covered = IntervalSet(iv for p in rounded for iv in p)
    rounded[0] = rounded[0] | covered.complement()

    result: list[IntervalSet] = []
    taken = IntervalSet.empty()
    for p in rounded:
        result.append(p - taken)
        taken = taken | p
    partition = Partition(tuple(result))

    for m in measures:
        for q, b in zip(partition, exact_parts):
            if measure_of(m, q ^ b) >= delta:
                raise InvariantError("rational approximation exceeded delta")
    return partition
