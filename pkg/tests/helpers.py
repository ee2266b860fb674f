"""Random instance builders and brute-force oracles shared by the tests."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from fairdiv.measures import IntervalSet, StepMeasure


def random_step_measure(rng: np.random.Generator, max_cells: int = 5, grid: int = 12) -> StepMeasure:
    n_cuts = int(rng.integers(0, max_cells))
    inner = sorted(set(int(x) for x in rng.integers(1, grid, size=n_cuts)))
    bps = [Fraction(0)] + [Fraction(x, grid) for x in inner] + [Fraction(1)]
    weights = [int(w) for w in rng.integers(0, 6, size=len(bps) - 1)]
    if sum(weights) == 0:
        weights[0] = 1
    total = sum(weights)
    return StepMeasure.from_masses(bps, [Fraction(w, total) for w in weights])


def random_profile_utilities(rng, k, n, M):
    return rng.integers(1, M + 1, size=(k, n))


rationals01 = st.fractions(min_value=0, max_value=1, max_denominator=24)


@st.composite
def interval_sets(draw, max_pieces=4):
    pts = draw(st.lists(rationals01, min_size=0, max_size=2 * max_pieces))
    pts = sorted(pts)
    pairs = [(pts[i], pts[i + 1]) for i in range(0, len(pts) - 1, 2)]
    return IntervalSet(pairs)


@st.composite
def step_measures(draw, max_cells=5):
    inner = draw(st.lists(st.fractions(min_value=0, max_value=1, max_denominator=16)
                          .filter(lambda x: 0 < x < 1), max_size=max_cells - 1, unique=True))
    bps = [Fraction(0)] + sorted(inner) + [Fraction(1)]
    weights = draw(st.lists(st.integers(0, 9), min_size=len(bps) - 1, max_size=len(bps) - 1)
                   .filter(lambda w: sum(w) > 0))
    total = sum(weights)
    return StepMeasure.from_masses(bps, [Fraction(w, total) for w in weights])


def members_oracle(s: IntervalSet, points):
    """Pointwise membership straight from the interval list (no canonical form needed)."""
    return [any(lo <= x < hi for lo, hi in s.intervals) for x in points]


def mechanism3_outcomes(utilities, k):
    """Exact distribution of mechanism 3 outcomes, built from its description.

    Yields ``(owner_tuple, probability)``: each bin is uniformly ordered,
    cut into k equal blocks for players 0..k-1, and leftovers go to uniform
    independent players.
    """
    u = np.asarray(utilities)
    n = u.shape[1]
    groups: dict = {}
    for g in range(n):
        groups.setdefault(tuple(u[:, g]), []).append(g)
    per_bin = []
    for members in groups.values():
        m = len(members)
        q = m // k
        options = []
        orders = list(itertools.permutations(members))
        for order in orders:
            for left in itertools.product(range(k), repeat=m - q * k):
                assignment = {}
                for idx, g in enumerate(order[: q * k]):
                    assignment[g] = idx // q if q else None
                for g, who in zip(order[q * k:], left):
                    assignment[g] = who
                options.append((assignment, Fraction(1, len(orders) * k ** (m - q * k))))
        per_bin.append(options)
    for combo in itertools.product(*per_bin):
        owner = [None] * n
        prob = Fraction(1)
        for assignment, p in combo:
            prob *= p
            for g, who in assignment.items():
                owner[g] = who
        yield tuple(owner), prob


def _value_matrix(utilities, owner, n_parts):
    u = np.asarray(utilities)
    return [[sum(int(u[i, g]) for g in range(u.shape[1]) if owner[g] == j) for j in range(n_parts)]
            for i in range(u.shape[0])]


def expected_values(outcomes, utilities, n_parts):
    k = np.asarray(utilities).shape[0]
    E = [[Fraction(0)] * n_parts for _ in range(k)]
    for owner, prob in outcomes:
        V = _value_matrix(utilities, owner, n_parts)
        for i in range(k):
            for j in range(n_parts):
                E[i][j] += prob * V[i][j]
    return E


def random_scheme_outcomes(rows):
    """All owner vectors of the independent per-good draw, with probabilities."""
    n_parts, n = len(rows), len(rows[0])
    for owner in itertools.product(range(n_parts), repeat=n):
        prob = Fraction(1)
        for g, j in enumerate(owner):
            prob *= rows[j][g]
        if prob:
            yield owner, prob


def binned_scheme_outcomes(utilities, per_bin):
    """Floor counts to each part from a uniform ordering of the bin; every
    leftover independently to part i with probability frac_i / r."""
    u = np.asarray(utilities)
    n = u.shape[1]
    groups: dict = {}
    for g in range(n):
        groups.setdefault(tuple(int(x) for x in u[:, g]), []).append(g)
    per_group = []
    for sig, members in groups.items():
        col = [Fraction(x) for x in per_bin[sig]]
        size = len(members)
        counts = [int(size * x) for x in col]
        frac = [size * x - c for x, c in zip(col, counts)]
        r = size - sum(counts)
        options = []
        orders = list(itertools.permutations(members))
        for order in orders:
            fixed = {}
            pos = 0
            for j, c in enumerate(counts):
                for g in order[pos:pos + c]:
                    fixed[g] = j
                pos += c
            rest = order[pos:]
            for left in itertools.product(range(len(col)), repeat=len(rest)):
                prob = Fraction(1, len(orders))
                for j in left:
                    prob *= frac[j] / r
                if prob:
                    a = dict(fixed)
                    a.update(zip(rest, left))
                    options.append((a, prob))
        per_group.append(options)
    for combo in itertools.product(*per_group):
        owner = [None] * n
        prob = Fraction(1)
        for a, p in combo:
            prob *= p
            for g, j in a.items():
                owner[g] = j
        yield tuple(owner), prob
