import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairdiv.continuous import (
    ContinuousAllocation,
    QSamplerConfig,
    approximate_by_rational_partition,
    assign,
    denominator_probability,
    equal_partition,
    is_superfair,
    mechanism1,
    mechanism2,
    partition_from_labels,
    partition_probability,
    sample_rational_partition,
)
from fairdiv.errors import InvariantError
from fairdiv.measures import IntervalSet, Partition, StepMeasure, measure_of, value_matrix
from fairdiv.streams import derive_seed, stream

from helpers import random_step_measure, step_measures

U = StepMeasure.uniform()
LEFT = StepMeasure((0, F(1, 2), 1), (F(3, 2), F(1, 2)))
RIGHT = StepMeasure((0, F(1, 2), 1), (F(1, 2), F(3, 2)))


def test_equal_partition_uniform_pair():
    p = equal_partition([U, U])
    assert p[0] == IntervalSet([(0, F(1, 2))])
    assert p[1] == IntervalSet([(F(1, 2), 1)])


def test_equal_partition_interleaves_cells():
    m = StepMeasure((0, F(1, 2), 1), (2, 0))
    p = equal_partition([U, m])
    assert p[0] == IntervalSet([(0, F(1, 4)), (F(1, 2), F(3, 4))])
    assert value_matrix([U, m], p.parts) == [[F(1, 2)] * 2] * 2


def test_equal_partition_single_player():
    assert equal_partition([LEFT]).parts == (IntervalSet.full(),)


@given(st.lists(step_measures(), min_size=1, max_size=4))
def test_equal_partition_is_exactly_proportional(ms):
    k = len(ms)
    p = equal_partition(ms)
    assert all(v == F(1, k) for row in value_matrix(ms, p.parts) for v in row)


def test_mechanism1_rejects_empty_and_wrong_types():
    with pytest.raises(ValueError):
        mechanism1([], 0)
    with pytest.raises(TypeError):
        mechanism1([U, "x"], 0)


def test_mechanism1_is_seeded():
    ms = [LEFT, RIGHT, U]
    a, b = mechanism1(ms, 11), mechanism1(ms, 11)
    assert a == b
    assert sorted(a.permutation_used) == [0, 1, 2]
    assert not a.superfair_accepted
    assert a.pieces == assign(equal_partition(ms).parts, a.permutation_used)
    perms = {mechanism1(ms, s).permutation_used for s in range(60)}
    assert len(perms) == 6


def test_allocation_must_be_a_partition():
    half = IntervalSet([(0, F(1, 2))])
    with pytest.raises(ValueError):
        ContinuousAllocation((half, half))


# sampler --------------------------------------------------------------------


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        QSamplerConfig(F(0))
    with pytest.raises(ValueError):
        QSamplerConfig(F(1))
    with pytest.raises(ValueError):
        QSamplerConfig(F(1, 2), -1)
    assert QSamplerConfig("1/3").denominator_halting == F(1, 3)


def test_sampler_single_player_is_trivial():
    for s in range(5):
        p = sample_rational_partition(1, QSamplerConfig(rng_seed=s))
        assert p.parts == (IntervalSet.full(),)


def test_sampler_outputs_valid_rational_partitions():
    rng = stream(3, "test")
    for _ in range(200):
        p = sample_rational_partition(3, QSamplerConfig(), rng)
        assert isinstance(p, Partition) and p.k == 3


def test_partition_from_labels_merges_neighbours():
    p = partition_from_labels([0, 0, 1, 0], 2)
    assert p[0] == IntervalSet([(0, F(1, 2)), (F(3, 4), 1)])
    assert p.denominator() == 4


def _brute_probability(target: Partition, k: int, p: F, dmax: int) -> F:
    """Sum P[d] * (#labelings at d reproducing target) / k**d over d <= dmax."""
    total = F(0)
    for d in range(1, dmax + 1):
        hits = sum(
            1 for labels in itertools.product(range(k), repeat=d)
            if partition_from_labels(labels, k) == target
        )
        total += denominator_probability(d, p) * F(hits, k**d)
    return total


@pytest.mark.parametrize("labels", [(0,), (0, 1), (1, 0, 1), (0, 0, 1, 1)])
def test_closed_form_probability_matches_enumeration(labels):
    k, p, dmax = 2, F(1, 2), 12
    target = partition_from_labels(labels, k)
    brute = _brute_probability(target, k, p, dmax)
    closed = partition_probability(target, QSamplerConfig(p))
    tail = (1 - p) ** dmax  # P[d > dmax] bounds what the truncated sum can miss
    assert brute <= closed <= brute + tail


def test_closed_form_examples():
    cfg = QSamplerConfig(F(1, 2))
    trivial = Partition((IntervalSet.full(), IntervalSet.empty()))
    assert partition_probability(trivial, cfg) == F(1, 3)
    halves = partition_from_labels([0, 1], 2)
    # only d = 2 contributes at the lowest level: P[d=2] * 2**-2
    assert denominator_probability(2, F(1, 2)) * F(1, 4) == F(1, 16)
    assert partition_probability(halves, cfg) == F(1, 15)
    assert partition_probability(halves, cfg) > F(1, 16)


def test_closed_form_sums_to_one_over_k2_support():
    # all primitive labelings up to d = 12 plus the remaining tail
    cfg = QSamplerConfig(F(1, 2))
    total = F(0)
    seen = set()
    for d in range(1, 13):
        for labels in itertools.product(range(2), repeat=d):
            key = partition_from_labels(labels, 2)
            if key.denominator() == d and key not in seen:
                seen.add(key)
                total += partition_probability(key, cfg)
    assert F(1) - total < F(1, 2**11)
    assert total < 1


# super-fair check and mechanism 2 ------------------------------------------------


def test_is_superfair_examples():
    halves = partition_from_labels([0, 1], 2)
    assert is_superfair([LEFT, RIGHT], halves)
    assert not is_superfair([U, U], halves)
    assert not is_superfair([RIGHT, LEFT], halves)
    with pytest.raises(ValueError):
        is_superfair([U], halves)


def test_mechanism2_identical_declarations_always_fall_back():
    for s in range(40):
        out = mechanism2([LEFT, LEFT], QSamplerConfig(rng_seed=s))
        assert not out.superfair_accepted
        assert out == mechanism1([LEFT, LEFT], derive_seed(s, "fallback"))


def test_mechanism2_accepts_some_draws_on_distinct_profiles():
    runs = [mechanism2([LEFT, RIGHT], QSamplerConfig(rng_seed=s)) for s in range(200)]
    accepted = [r for r in runs if r.superfair_accepted]
    assert accepted
    for r in accepted:
        assert r.pieces == r.drawn.parts
        assert measure_of(LEFT, r.pieces[0]) > F(1, 2)
        assert measure_of(RIGHT, r.pieces[1]) > F(1, 2)


@given(st.lists(step_measures(max_cells=3), min_size=2, max_size=3), st.integers(0, 2**64 - 1))
def test_mechanism2_truthful_floor(ms, seed):
    out = mechanism2(ms, QSamplerConfig(rng_seed=seed))
    k = len(ms)
    assert all(measure_of(m, out.pieces[i]) >= F(1, k) for i, m in enumerate(ms))


# rational approximation --------------------------------------------------


def test_approximation_keeps_rational_targets():
    target = [[(0, F(1, 3))], [(F(1, 3), 1)]]
    p = approximate_by_rational_partition(target, [U, LEFT], F(1, 100))
    assert p[0] == IntervalSet([(0, F(1, 3))])


def test_approximation_of_irrational_cut():
    r = 1 / math.sqrt(2)
    target = [[(0, r)], [(r, 1)]]
    for delta in (F(1, 10), F(1, 1000), F(1, 10**6)):
        p = approximate_by_rational_partition(target, [U, RIGHT], delta)
        cut = p[0].intervals[0].hi
        assert abs(F(r) - cut) * 2 < delta


def test_approximation_repairs_overlaps_and_gaps():
    # two cuts closer than one grid step collapse onto the same grid point
    a, b = 0.3, 0.3000001
    target = [[(0, a)], [(a, b)], [(b, 1)]]
    p = approximate_by_rational_partition(target, [U, U, LEFT], F(1, 10))
    assert isinstance(p, Partition) and p.k == 3
    assert measure_of(U, p[1]) < F(1, 10)


@pytest.mark.parametrize(
    "target, delta",
    [
        ([[(0, 0.5)], [(0.4, 1)]], F(1, 100)),
        ([[(0, 0.5)]], F(1, 100)),
        ([[(0, 0.5)], [(0.5, 1)]], F(0)),
        ([[(0, 1.5)], []], F(1, 100)),
    ],
)
def test_approximation_rejects_bad_input(target, delta):
    with pytest.raises(ValueError):
        approximate_by_rational_partition(target, [U, U], delta)


def test_approximation_post_check_raises_invariant_error(monkeypatch):
    import fairdiv.continuous as c

    real = c.measure_of
    monkeypatch.setattr(c, "measure_of", lambda m, s: real(m, s) + 1)
    with pytest.raises(InvariantError):
        approximate_by_rational_partition([[(0, 0.5)], [(0.5, 1)]], [U, U], F(1, 100))
