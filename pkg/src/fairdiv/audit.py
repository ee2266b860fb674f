"""Exact and sampled checks of the mechanisms' incentive and fairness claims.

Figures computed exactly (closed forms, full enumeration) are kept apart from
Monte Carlo figures in every report.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import continuous, discrete
from .continuous import ContinuousAllocation, QSamplerConfig
from .discrete import DiscreteProfile
from .errors import InstanceTooLarge, InvariantError
from .measures import (
    IntervalSet,
    StepMeasure,
    common_refinement,
    measure_of,
    measures_identical,
    value_matrix,
)
from .streams import derive_seed

CONTINUOUS = ("1", "2", "naive")
DISCRETE = ("3", "4")
MECHANISMS = CONTINUOUS + DISCRETE

DEFAULT_CUTOFF = 10
DEFAULT_MAX_ATOMS = 10**6
DEFAULT_HALTING = Fraction(1, 2)


def _mech_id(mechanism) -> str:
    m = str(mechanism)
    if m not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}; choose from {', '.join(MECHANISMS)}")
    return m


def _check_kind(m: str, profile):
    if m in CONTINUOUS:
        if isinstance(profile, DiscreteProfile) or not all(isinstance(x, StepMeasure) for x in profile):
            raise TypeError(f"mechanism {m} needs a list of StepMeasure")
    elif not isinstance(profile, DiscreteProfile):
        raise TypeError(f"mechanism {m} needs a DiscreteProfile")


# Deterministic super-fair mechanism (the impossibility foil) ----------------


def naive_superfair(declared: Sequence[StepMeasure]) -> ContinuousAllocation:
    """Deterministic two-player mechanism: equal split on identical declarations,
    a super-fair split otherwise.

    On the common refinement, cells where player 0's density beats player 1's
    form a set A with masses a > b. Player 0 takes the left fraction t of every
    A cell and the left fraction s of every other cell, with (t, s) chosen
    strictly inside the region where both players get more than 1/2.
    """
    if len(declared) != 2:
        raise ValueError("the deterministic foil is defined for two players")
    if declared[0] == declared[1]:
        parts = continuous.equal_partition(declared)
        return ContinuousAllocation(parts.parts, None, False, parts)
    cuts = common_refinement(declared)
    cells = [(lo, hi, declared[0].interval_mass(lo, hi), declared[1].interval_mass(lo, hi))
             for lo, hi in zip(cuts, cuts[1:])]
    a = sum((w0 for _, _, w0, w1 in cells if w0 > w1), Fraction(0))
    b = sum((w1 for _, _, w0, w1 in cells if w0 > w1), Fraction(0))
    half = Fraction(1, 2)
    if a > half:
        hi = min(Fraction(1), 1 / (2 * b)) if b else Fraction(1)
        t, s = (1 / (2 * a) + hi) / 2, Fraction(0)
    else:
        lo = (1 - 2 * a) / (2 * (1 - a))
        hi = (1 - 2 * b) / (2 * (1 - b))
        t, s = Fraction(1), (lo + hi) / 2
    mine = IntervalSet(
        (lo, lo + (t if w0 > w1 else s) * (hi_ - lo)) for lo, hi_, w0, w1 in cells
    )
    return ContinuousAllocation((mine, mine.complement()), None, True)


# Exact expectations --------------------------------------------------------


@dataclass(frozen=True)
class Expectation:
    """Expected true value per player.

    ``values`` is exact for the mechanism run with the sampler truncated at
    ``cutoff`` (tail mass sent to the fallback), which is itself a mechanism
    of the same family. ``lower``/``upper`` bracket the untruncated
    mechanism; they coincide with ``values`` whenever ``exact`` is true.
    """

    mechanism: str
    values: tuple[Fraction, ...]
    lower: tuple[Fraction, ...]
    upper: tuple[Fraction, ...]
    exact: bool
    method: str
    atoms: int = 0
    acceptance_probability: Fraction | None = None
    tail_mass: Fraction = Fraction(0)


def _closed(m, values, method="closed-form") -> Expectation:
    values = tuple(values)
    return Expectation(m, values, values, values, True, method)


def _mech1_values(true, declared) -> list[Fraction]:
    # each part reaches each player with probability 1/k under the permutation
    parts = continuous.equal_partition(declared).parts
    k = len(parts)
    return [sum((measure_of(mu, p) for p in parts), Fraction(0)) / k for mu in true]


def _grid_masses(measures, d: int):
    """Integer cell masses on the grid of denominator d, with their common scale."""
    fr = [[m.interval_mass(Fraction(t, d), Fraction(t + 1, d)) for t in range(d)] for m in measures]
    L = 1
    for row in fr:
        for x in row:
            L = L * x.denominator // math.gcd(L, x.denominator)
    dtype = np.int64 if L * d < 2**62 else object
    return L, np.array([[int(x * L) for x in row] for row in fr], dtype=dtype)


def _labelings(k: int, d: int) -> np.ndarray:
    codes = np.arange(k**d, dtype=np.int64)
    return (codes[:, None] // (k ** np.arange(d, dtype=np.int64))[None, :]) % k


def _mech2_expectation(true, declared, halting, cutoff, max_atoms) -> Expectation:
    k = len(true)
    atoms = sum(k**d for d in range(1, cutoff + 1))
    if atoms > max_atoms:
        raise InstanceTooLarge(f"{atoms} partition atoms exceed the budget of {max_atoms}")
    fallback = _mech1_values(true, declared)
    enumerated = [Fraction(0)] * k
    accepted_mass = Fraction(0)
    for d in range(1, cutoff + 1):
        per_labeling = continuous.denominator_probability(d, halting) / k**d
        labels = _labelings(k, d)
        Ld, dec = _grid_masses(declared, d)
        Lt, tru = _grid_masses(true, d)
        own_dec = np.stack([(labels == i).astype(dec.dtype) @ dec[i] for i in range(k)])
        own_tru = np.stack([(labels == i).astype(tru.dtype) @ tru[i] for i in range(k)])
        accept = np.all(own_dec * k > Ld, axis=0)
        n_acc = int(accept.sum())
        rejected = len(labels) - n_acc
        accepted_mass += per_labeling * n_acc
        for i in range(k):
            got = Fraction(int(own_tru[i][accept].sum()), Lt)
            enumerated[i] += per_labeling * (got + rejected * fallback[i])
    tail = (1 - halting) ** cutoff
    values = tuple(e + tail * f for e, f in zip(enumerated, fallback))
    if k == 1 or measures_identical(declared):
        # nothing in the tail can pass the declared test
        return Expectation("2", values, values, values, True, "enumeration", atoms, accepted_mass, tail)
    lower = tuple(
        e + tail * (f if true[i] == declared[i] else 0)
        for i, (e, f) in enumerate(zip(enumerated, fallback))
    )
    upper = tuple(e + tail * max(Fraction(1), f) for e, f in zip(enumerated, fallback))
    return Expectation("2", values, lower, upper, False, "truncated-enumeration", atoms, accepted_mass, tail)


def _mech4_expectation(true: DiscreteProfile, declared: DiscreteProfile, max_atoms) -> Expectation:
    k, n = true.k, true.n
    atoms = k**n
    if atoms > max_atoms:
        raise InstanceTooLarge(f"{atoms} assignments exceed the budget of {max_atoms}")
    fallback = [Fraction(t, k) for t in true.totals]
    got = [0] * k
    n_acc = 0
    chunk = max(1, 2**20 // max(n, 1))
    for start in range(0, atoms, chunk):
        codes = np.arange(start, min(atoms, start + chunk), dtype=np.int64)
        owners = (codes[:, None] // (k ** np.arange(n, dtype=np.int64))[None, :]) % k
        own_dec = np.stack([((owners == i) * declared.utilities[i]).sum(axis=1) for i in range(k)])
        accept = np.all(own_dec * k > np.array(declared.totals)[:, None], axis=0)
        n_acc += int(accept.sum())
        for i in range(k):
            got[i] += int(((owners[accept] == i) * true.utilities[i]).sum())
    rejected = atoms - n_acc
    values = tuple(Fraction(g, atoms) + Fraction(rejected, atoms) * f for g, f in zip(got, fallback))
    return Expectation("4", values, values, values, True, "enumeration", atoms, Fraction(n_acc, atoms))


def exact_expectation(
    mechanism,
    true,
    declared=None,
    *,
    halting=DEFAULT_HALTING,
    cutoff: int = DEFAULT_CUTOFF,
    max_atoms: int = DEFAULT_MAX_ATOMS,
) -> Expectation:
    """Exact expected true value of every player's share.

    Mechanisms 1 and 3 use per-piece / per-good marginals (every piece or good
    reaches every player with probability 1/k). Mechanisms 2 and 4 enumerate
    the draw space and account for the fallback exactly; ``InstanceTooLarge``
    is raised rather than silently sampling.
    """
    m = _mech_id(mechanism)
    declared = true if declared is None else declared
    _check_kind(m, true)
    _check_kind(m, declared)
    if m in CONTINUOUS:
        mismatch = len(true) != len(declared)
    else:
        mismatch = true.utilities.shape != declared.utilities.shape or true.M != declared.M
    if mismatch:
        raise ValueError("true and declared profiles have different shapes")
    if m == "1":
        return _closed(m, _mech1_values(true, declared))
    if m == "2":
        return _mech2_expectation(true, declared, Fraction(halting), cutoff, max_atoms)
    if m == "naive":
        pieces = naive_superfair(declared).pieces
        return _closed(m, [measure_of(mu, pieces[i]) for i, mu in enumerate(true)], "deterministic")
    if m == "3":
        k = true.k
        return _closed(m, [sum((Fraction(int(u), k) for u in row), Fraction(0)) for row in true.utilities])
    return _mech4_expectation(true, declared, max_atoms)


# Truthfulness sweeps -------------------------------------------------------


@dataclass(frozen=True)
class Deviation:
    player: int
    declaration: object
    truthful_value: Fraction
    deviant_value: Fraction
    provable: bool = True

    @property
    def gain(self) -> Fraction:
        return self.deviant_value - self.truthful_value


@dataclass
class TruthfulnessVerdict:
    mechanism: str
    truthful: bool
    witness: Deviation | None
    checked: int
    best_gain: Fraction
    unresolved: int = 0
    rows: list[Deviation] = field(default_factory=list, repr=False)


def _discrete_space(profile: DiscreteProfile):
    return itertools.product(range(1, profile.M + 1), repeat=profile.n)


def truthfulness_sweep(
    mechanism,
    true,
    deviations=None,
    *,
    players: Sequence[int] | None = None,
    max_deviations: int = 10**4,
    **options,
) -> TruthfulnessVerdict:
    """Compare each player's truthful expected value with every unilateral lie.

    Everyone else declares truthfully. For discrete mechanisms the default
    deviation space is all ``M**n`` utility rows; continuous mechanisms need
    an explicit finite list of step measures. A violation is any deviation
    whose exact expectation is strictly higher. For mechanism 2 that
    comparison runs on the truncated sampler (itself a valid mechanism), and
    ``unresolved`` counts lies whose bracket for the untruncated sampler
    still overlaps the truthful one; a bracket lying entirely above truth is
    also reported as a violation.
    """
    m = _mech_id(mechanism)
    _check_kind(m, true)
    k = true.k if isinstance(true, DiscreteProfile) else len(true)
    players = range(k) if players is None else players
    if deviations is None:
        if m in CONTINUOUS:
            raise ValueError("continuous sweeps need an explicit list of deviations")
        if true.M**true.n > max_deviations:
            raise InstanceTooLarge(f"{true.M ** true.n} declarations exceed {max_deviations}")
    base = exact_expectation(m, true, **options)
    rows: list[Deviation] = []
    witness = None
    unresolved = 0
    best = None
    for i in players:
        space = _discrete_space(true) if deviations is None else deviations
        for lie in space:
            if m in CONTINUOUS:
                declared = list(true)
                declared[i] = lie
            else:
                declared = true.with_row(i, lie)
            e = exact_expectation(m, true, declared, **options)
            provable = e.lower[i] > base.upper[i]
            row = Deviation(i, lie, base.values[i], e.values[i], provable or base.exact and e.exact)
            rows.append(row)
            if row.gain <= 0 and e.upper[i] > base.lower[i] and not (base.exact and e.exact):
                unresolved += 1
            if row.gain > 0 or provable:
                if witness is None or row.gain > witness.gain:
                    witness = row
            best = row.gain if best is None else max(best, row.gain)
    return TruthfulnessVerdict(m, witness is None, witness, len(rows), best or Fraction(0), unresolved, rows)


# Impossibility demonstration -----------------------------------------------


@dataclass(frozen=True)
class DemoReport:
    common_measure: StepMeasure
    true_measure: StepMeasure
    symmetric_split: tuple[IntervalSet, ...]
    symmetric_values: tuple[Fraction, ...]
    truthful_pieces: tuple[IntervalSet, ...]
    utility_if_lying: Fraction
    utility_if_truthful: Fraction
    others_values_if_truthful: tuple[Fraction, ...]

    @property
    def lie_profitable(self) -> bool:
        return self.utility_if_lying > self.utility_if_truthful


def impossibility_demo() -> DemoReport:
    """Player 0 gains by hiding their true measure from the deterministic foil.

    Everyone declares the uniform measure and the foil returns the equal
    split, giving player 0 the piece [0, 1/2). The true measure puts all its
    mass on that piece, so lying earns 1. Declaring the truth makes the
    profile non-identical, the foil must give player 1 more than 1/2 of the
    uniform measure, and player 0 ends with strictly less than 1.
    """
    common = StepMeasure.uniform()
    sym = naive_superfair([common, common])
    true = StepMeasure((0, Fraction(1, 2), 1), (2, 0))
    if measure_of(true, sym.pieces[0]) != 1:
        raise InvariantError("equal split of the uniform profile should start with [0, 1/2)")
    honest = naive_superfair([true, common])
    return DemoReport(
        common_measure=common,
        true_measure=true,
        symmetric_split=sym.pieces,
        symmetric_values=tuple(measure_of(common, p) for p in sym.pieces),
        truthful_pieces=honest.pieces,
        utility_if_lying=measure_of(true, sym.pieces[0]),
        utility_if_truthful=measure_of(true, honest.pieces[0]),
        others_values_if_truthful=(measure_of(common, honest.pieces[1]),),
    )


# Risk, envy and Monte Carlo -------------------------------------------------


@dataclass(frozen=True)
class PlayerStats:
    mean: Fraction
    variance: Fraction
    minimum: Fraction
    maximum: Fraction
    std_error: float


@dataclass(frozen=True)
class RiskStats:
    mechanism: str
    trials: int
    seed: int
    players: tuple[PlayerStats, ...]
    max_envy: Fraction
    floor_violations: int
    acceptance_rate: Fraction | None
    envy_reference: float | None = None


def run_once(m: str, declared, seed, halting=DEFAULT_HALTING):
    if m == "1":
        return continuous.mechanism1(declared, seed)
    if m == "2":
        return continuous.mechanism2(declared, QSamplerConfig(halting, seed))
    if m == "naive":
        return naive_superfair(declared)
    if m == "3":
        return discrete.mechanism3(declared, seed)
    return discrete.mechanism4(declared, seed)


def _value_matrix(m, true, alloc):
    if m in CONTINUOUS:
        return value_matrix(true, alloc.pieces)
    V = alloc.values(true)
    return [[Fraction(int(x)) for x in row] for row in V]


def _floor_ok(m, true, declared, i, own, accepted) -> bool:
    if m in CONTINUOUS:
        if true[i] != declared[i]:
            return True
        return own >= Fraction(1, len(true))
    if not np.array_equal(true.utilities[i], declared.utilities[i]):
        return True
    if m == "4" and accepted:
        return own * true.k > true.totals[i]
    # mechanism 3 output, or mechanism 4's fallback, with bins from the declared profile
    return own >= discrete.fairness_floor(true)[i]


def risk_and_envy_stats(mechanism, true, declared=None, *, trials: int, seed: int,
                        halting=DEFAULT_HALTING) -> RiskStats:
    """Realized-value statistics over seeded trials.

    Trial t runs on ``derive_seed(seed, "trial", t)``. Means, variances and
    extremes are exact rationals over the sample; ``std_error`` is the usual
    float estimate. Envy is max over i != j of ``V[i][j] - V[i][i]`` in true
    values, reported as a diagnostic only.
    """
    m = _mech_id(mechanism)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    declared = true if declared is None else declared
    _check_kind(m, true)
    _check_kind(m, declared)
    k = true.k if isinstance(true, DiscreteProfile) else len(true)
    values: list[list[Fraction]] = [[] for _ in range(k)]
    envy = None
    violations = 0
    accepted = 0
    for t in range(trials):
        alloc = run_once(m, declared, derive_seed(seed, "trial", t), halting)
        V = _value_matrix(m, true, alloc)
        for i in range(k):
            own = V[i][i]
            values[i].append(own)
            if not _floor_ok(m, true, declared, i, own, alloc.superfair_accepted):
                violations += 1
            for j in range(k):
                if j != i:
                    gap = V[i][j] - own
                    envy = gap if envy is None else max(envy, gap)
        accepted += bool(alloc.superfair_accepted)
    stats = []
    for vals in values:
        mean = sum(vals, Fraction(0)) / trials
        var = sum(((v - mean) ** 2 for v in vals), Fraction(0)) / trials
        stats.append(PlayerStats(mean, var, min(vals), max(vals), math.sqrt(var / trials)))
    reference = None
    if isinstance(true, DiscreteProfile) and k > 1:
        reference = 3 * true.M * math.sqrt(true.n * math.log(k))
    return RiskStats(
        mechanism=m,
        trials=trials,
        seed=seed,
        players=tuple(stats),
        max_envy=envy if envy is not None else Fraction(0),
        floor_violations=violations,
        acceptance_rate=Fraction(accepted, trials) if m in ("2", "4") else None,
        envy_reference=reference,
    )


def monte_carlo_consistent(exp: Expectation, stats: RiskStats, sigmas: int = 5) -> list[bool]:
    """Per player: does the sample mean sit within ``sigmas`` standard errors
    of the exact expectation (or of its bracket)?"""
    out = []
    for lo, hi, p in zip(exp.lower, exp.upper, stats.players):
        slack = sigmas * p.std_error
        mean = p.mean
        if mean < lo:
            out.append(float(lo - mean) <= slack)
        elif mean > hi:
            out.append(float(mean - hi) <= slack)
        else:
            out.append(True)
    return out


# Full report ---------------------------------------------------------------


@dataclass
class AuditReport:
    mechanism: str
    regime: str | None
    expectation: Expectation | None
    expectation_note: str | None
    sampled: RiskStats | None
    monte_carlo_ok: list[bool] | None
    verdict: TruthfulnessVerdict | None
    verdict_note: str | None


def audit(mechanism, true, declared=None, deviations=None, *, trials: int = 100, seed: int = 0,
          halting=DEFAULT_HALTING, cutoff: int = DEFAULT_CUTOFF,
          max_atoms: int = DEFAULT_MAX_ATOMS) -> AuditReport:
    m = _mech_id(mechanism)
    declared = true if declared is None else declared
    opts = dict(halting=halting, cutoff=cutoff, max_atoms=max_atoms)
    regime = None
    if m in CONTINUOUS:
        regime = "identical" if measures_identical(true) else "distinct"
    exp, note = None, None
    try:
        exp = exact_expectation(m, true, declared, **opts)
    except InstanceTooLarge as err:
        note = f"exact mode refused: {err}"
    sampled = risk_and_envy_stats(m, true, declared, trials=trials, seed=seed, halting=halting) if trials else None
    mc = monte_carlo_consistent(exp, sampled) if exp is not None and sampled is not None else None
    verdict, vnote = None, None
    if m in CONTINUOUS and deviations is None:
        vnote = "no deviation grid supplied"
    else:
        try:
            verdict = truthfulness_sweep(m, true, deviations, **opts)
        except InstanceTooLarge as err:
            vnote = f"sweep refused: {err}"
    return AuditReport(m, regime, exp, note, sampled, mc, verdict, vnote)
