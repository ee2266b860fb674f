"""Exact interval sets and piecewise-constant probability measures on [0, 1).

Everything here is rational: endpoints, densities and measure values are
``fractions.Fraction`` instances, so every equality the mechanisms rely on can
be checked with ``==``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

Rational = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


def as_rational(x) -> Fraction:
    """Coerce ints, Fractions, decimal strings and "p/q" strings to a Fraction.

    Floats are read through their shortest repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational")


class Interval(NamedTuple):
    """Half-open interval [lo, hi)."""

    lo: Fraction
    hi: Fraction

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo


def _canonical(pairs: Iterable[Sequence]) -> tuple[Interval, ...]:
    items = []
    for pair in pairs:
        lo, hi = (as_rational(v) for v in pair)
        if not (ZERO <= lo <= ONE and ZERO <= hi <= ONE):
            raise ValueError(f"interval [{lo}, {hi}) leaves [0, 1]")
        if hi < lo:
            raise ValueError(f"interval [{lo}, {hi}) has hi < lo")
        if lo < hi:
            items.append((lo, hi))
    items.sort()
    merged: list[list[Fraction]] = []
    for lo, hi in items:
        if merged and lo <= merged[-1][1]:
            if hi > merged[-1][1]:
                merged[-1][1] = hi
        else:
            merged.append([lo, hi])
    return tuple(Interval(lo, hi) for lo, hi in merged)


@dataclass(frozen=True, init=False)
class IntervalSet:
    """A finite union of half-open rational intervals inside [0, 1).

    The constructor accepts overlapping or touching pieces and stores the
    canonical form (sorted, disjoint, maximally merged), so ``==`` is set
    equality.
    """

    intervals: tuple[Interval, ...]

    def __init__(self, intervals: Iterable[Sequence] = ()):
        object.__setattr__(self, "intervals", _canonical(intervals))

    @classmethod
    def empty(cls) -> IntervalSet:
        return cls()

    @classmethod
    def full(cls) -> IntervalSet:
        return cls([(ZERO, ONE)])

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def __repr__(self) -> str:
        body = " ∪ ".join(f"[{iv.lo}, {iv.hi})" for iv in self.intervals)
        return f"IntervalSet({body or '∅'})"

    @property
    def length(self) -> Fraction:
        return sum((iv.length for iv in self.intervals), ZERO)

    def endpoints(self) -> list[Fraction]:
        return [x for iv in self.intervals for x in iv]

    def contains(self, x) -> bool:
        x = as_rational(x)
        i = bisect.bisect_right(self.intervals, (x, ONE + 1)) - 1
        return i >= 0 and self.intervals[i].lo <= x < self.intervals[i].hi

    def _combine(self, other: IntervalSet, keep) -> IntervalSet:
        points = sorted(set(self.endpoints()) | set(other.endpoints()))
        pieces = [
            (a, b)
            for a, b in zip(points, points[1:])
            if keep(self.contains(a), other.contains(a))
        ]
        return IntervalSet(pieces)

    def union(self, other: IntervalSet) -> IntervalSet:
        return IntervalSet(self.intervals + other.intervals)

    def intersection(self, other: IntervalSet) -> IntervalSet:
        return self._combine(other, lambda a, b: a and b)

    def difference(self, other: IntervalSet) -> IntervalSet:
        return self._combine(other, lambda a, b: a and not b)

    def symmetric_difference(self, other: IntervalSet) -> IntervalSet:
        return self._combine(other, lambda a, b: a != b)

    def complement(self) -> IntervalSet:
        return IntervalSet.full().difference(self)

    __or__ = union
    __and__ = intersection
    __sub__ = difference
    __xor__ = symmetric_difference
    __invert__ = complement

    def denominator(self) -> int:
        """Least common denominator of all endpoints (1 for the empty set)."""
        d = 1
        for x in self.endpoints():
            d = d * x.denominator // _gcd(d, x.denominator)
        return d


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


@dataclass(frozen=True, eq=False)
class StepMeasure:
    """Probability measure on [0, 1) with constant density on each cell.

    Cell ``c`` is ``[breakpoints[c], breakpoints[c+1])`` with density
    ``densities[c]``. Equality is equality of measures, so two step measures
    that differ only by a redundant breakpoint compare equal.
    """

    breakpoints: tuple[Fraction, ...]
    densities: tuple[Fraction, ...]

    def __post_init__(self):
        bps = tuple(as_rational(b) for b in self.breakpoints)
        dens = tuple(as_rational(d) for d in self.densities)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "densities", dens)
        if len(bps) < 2 or bps[0] != ZERO or bps[-1] != ONE:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if any(a >= b for a, b in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(dens) != len(bps) - 1:
            raise ValueError(
                f"expected {len(bps) - 1} densities, got {len(dens)}"
            )
        if any(d < 0 for d in dens):
            raise ValueError("densities must be non-negative")
        total = sum((d * (b - a) for d, a, b in zip(dens, bps, bps[1:])), ZERO)
        if total != ONE:
            raise ValueError(f"measure has total mass {total}, expected 1")

    @classmethod
    def uniform(cls) -> StepMeasure:
        return cls((ZERO, ONE), (ONE,))

    @classmethod
    def from_masses(cls, breakpoints: Sequence, masses: Sequence) -> StepMeasure:
        """Build a measure from per-cell masses instead of densities."""
        bps = [as_rational(b) for b in breakpoints]
        dens = [as_rational(m) / (b - a) for m, a, b in zip(masses, bps, bps[1:])]
        return cls(tuple(bps), tuple(dens))

    def cells(self):
        return zip(self.breakpoints, self.breakpoints[1:], self.densities)

    def canonical(self) -> StepMeasure:
        """Same measure with adjacent equal-density cells merged."""
        bps = [self.breakpoints[0]]
        dens: list[Fraction] = []
        for _, hi, d in self.cells():
            if dens and dens[-1] == d:
                bps[-1] = hi
            else:
                dens.append(d)
                bps.append(hi)
        return StepMeasure(tuple(bps), tuple(dens))

    def __eq__(self, other):
        if not isinstance(other, StepMeasure):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return a.breakpoints == b.breakpoints and a.densities == b.densities

    def __hash__(self):
        c = self.canonical()
        return hash((c.breakpoints, c.densities))

    @property
    def max_density(self) -> Fraction:
        return max(self.densities)

    def interval_mass(self, lo: Fraction, hi: Fraction) -> Fraction:
        total = ZERO
        for a, b, d in self.cells():
            if b <= lo:
                continue
            if a >= hi:
                break
            if d:
                total += d * (min(b, hi) - max(a, lo))
        return total


def measure_of(m: StepMeasure, s: IntervalSet) -> Fraction:
    """Exact measure of ``s`` under ``m``."""
    total = ZERO
    cells = list(m.cells())
    c = 0
    for lo, hi in s:
        while c < len(cells) and cells[c][1] <= lo:
            c += 1
        j = c
        while j < len(cells) and cells[j][0] < hi:
            a, b, d = cells[j]
            if d:
                total += d * (min(b, hi) - max(a, lo))
            j += 1
    return total


def common_refinement(measures: Sequence[StepMeasure]) -> list[Fraction]:
    """Sorted union of the breakpoints of all ``measures``."""
    if not measures:
        raise ValueError("need at least one measure")
    return sorted({b for m in measures for b in m.breakpoints})


def measures_identical(measures: Sequence[StepMeasure]) -> bool:
    return all(m == measures[0] for m in measures[1:])


@dataclass(frozen=True)
class Partition:
    """k pairwise-disjoint interval sets whose union is [0, 1)."""

    parts: tuple[IntervalSet, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        if not parts:
            raise ValueError("a partition needs at least one part")
        # disjointness follows from the lengths summing to 1 once the union is full
        if sum((p.length for p in parts), ZERO) != ONE:
            raise ValueError("parts overlap or fail to cover [0, 1)")
        union = IntervalSet(iv for p in parts for iv in p)
        if union != IntervalSet.full():
            raise ValueError("parts do not cover [0, 1)")

    @property
    def k(self) -> int:
        return len(self.parts)

    def __getitem__(self, j) -> IntervalSet:
        return self.parts[j]

    def __iter__(self):
        return iter(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def denominator(self) -> int:
        d = 1
        for p in self.parts:
            q = p.denominator()
            d = d * q // _gcd(d, q)
        return d


def value_matrix(measures: Sequence[StepMeasure], parts: Sequence[IntervalSet]):
    """``V[i][j] = measure_of(measures[i], parts[j])``."""
    return [[measure_of(m, p) for p in parts] for m in measures]


# JSON ----------------------------------------------------------------------


def rational_to_json(x: Fraction) -> str:
    x = as_rational(x)
    return f"{x.numerator}/{x.denominator}"


def interval_set_to_json(s: IntervalSet) -> list[list[str]]:
    return [[rational_to_json(iv.lo), rational_to_json(iv.hi)] for iv in s]


def interval_set_from_json(data) -> IntervalSet:
    return IntervalSet((lo, hi) for lo, hi in data)


def measure_to_json(m: StepMeasure) -> dict:
    return {
        "breakpoints": [rational_to_json(b) for b in m.breakpoints],
        "densities": [rational_to_json(d) for d in m.densities],
    }


def measure_from_json(data) -> StepMeasure:
    return StepMeasure(tuple(data["breakpoints"]), tuple(data["densities"]))


def partition_to_json(p: Partition) -> list:
    return [interval_set_to_json(s) for s in p]


def partition_from_json(data) -> Partition:
    return Partition(tuple(interval_set_from_json(s) for s in data))
