"""``fairdiv`` command line: seeded, reproducible runs with JSON in and out.

Exit codes: 0 success, 1 invalid input, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from fractions import Fraction

import jsonschema
import numpy as np

from . import audit as audit_mod
from . import continuous, discrete, realize
from .errors import InstanceTooLarge, InvariantError, ValidationError
from .measures import (
    IntervalSet,
    Partition,
    StepMeasure,
    as_rational,
    interval_set_to_json,
    measure_from_json,
    measure_to_json,
    measure_of,
    rational_to_json,
)
from .streams import check_seed, derive_seed

RATIONAL = {
    "anyOf": [
        {"type": "integer"},
        {"type": "number"},
        {"type": "string", "pattern": r"^\s*-?(\d+(\s*/\s*\d+)?|\d*\.\d+)\s*$"},
    ]
}
MEASURE = {
    "type": "object",
    "required": ["breakpoints", "densities"],
    "properties": {
        "breakpoints": {"type": "array", "items": RATIONAL, "minItems": 2},
        "densities": {"type": "array", "items": RATIONAL, "minItems": 1},
    },
    "additionalProperties": False,
}
MEASURES = {"type": "array", "items": MEASURE, "minItems": 1}
PROFILE = {
    "type": "object",
    "required": ["M", "utilities"],
    "properties": {
        "M": {"type": "integer", "minimum": 1},
        "utilities": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": {"type": "integer"}},
        },
    },
    "additionalProperties": False,
}
FRACTIONS = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "array", "items": RATIONAL},
}


# JSON helpers --------------------------------------------------------------


def to_jsonable(obj):
    if isinstance(obj, Fraction):
        return rational_to_json(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, float):
        return obj
    if isinstance(obj, IntervalSet):
        return interval_set_to_json(obj)
    if isinstance(obj, Partition):
        return [interval_set_to_json(p) for p in obj]
    if isinstance(obj, StepMeasure):
        return measure_to_json(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as err:
        raise ValidationError(f"{path}: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: invalid JSON at line {err.lineno} column {err.colno}: {err.msg}") from err


def _validate(data, schema, where: str):
    error = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(data))
    if error is not None:
        raise ValidationError(f"{where}: field {error.json_path}: {error.message}")


def _unwrap(data, key):
    if isinstance(data, dict) and key in data:
        return data[key]
    return data


def parse_measures(data, where: str) -> list[StepMeasure]:
    data = _unwrap(data, "measures")
    _validate(data, MEASURES, where)
    out = []
    for i, item in enumerate(data):
        try:
            out.append(measure_from_json(item))
        except (ValueError, ZeroDivisionError) as err:
            raise ValidationError(f"{where}: field $[{i}]: {err}") from err
    return out


def parse_profile(data, where: str) -> discrete.DiscreteProfile:
    _validate(data, PROFILE, where)
    rows = data["utilities"]
    if len({len(r) for r in rows}) > 1:
        raise ValidationError(f"{where}: field $.utilities: rows must all have the same length")
    try:
        return discrete.DiscreteProfile(np.array(rows, dtype=np.int64).reshape(len(rows), -1), data["M"])
    except ValidationError as err:
        raise ValidationError(f"{where}: field $.utilities: {err}") from err


def parse_fractions(data, where: str) -> realize.FractionMatrix:
    data = _unwrap(data, "D")
    _validate(data, FRACTIONS, where)
    try:
        return realize.FractionMatrix(tuple(tuple(as_rational(x) for x in row) for row in data))
    except (ValueError, ZeroDivisionError) as err:
        raise ValidationError(f"{where}: field $.D: {err}") from err


def _true_and_declared(data, parser, where):
    if isinstance(data, dict) and "true" in data:
        true = parser(data["true"], where + " (true)")
        declared = parser(data["declared"], where + " (declared)") if "declared" in data else true
        return true, declared
    profile = parser(data, where)
    return profile, profile


# Subcommands ---------------------------------------------------------------


def _resolve_seed(args) -> int:
    if args.seed is not None:
        raw = args.seed
    elif os.environ.get("FAIRDIV_SEED"):
        raw = os.environ["FAIRDIV_SEED"]
    else:
        raw = "0"
    try:
        return check_seed(int(raw))
    except (TypeError, ValueError) as err:
        raise ValidationError(f"seed: {err}") from err


def _halting(args) -> Fraction:
    try:
        p = as_rational(args.halting)
    except (ValueError, ZeroDivisionError) as err:
        raise ValidationError(f"--halting: {err}") from err
    if not 0 < p < 1:
        raise ValidationError("--halting must lie strictly between 0 and 1")
    return p


def cmd_continuous_run(args, seed) -> dict:
    declared = parse_measures(_load(args.declared), args.declared)
    true = parse_measures(_load(args.true), args.true) if args.true else declared
    if len(true) != len(declared):
        raise ValidationError("--true and --declared list different numbers of players")
    if args.mechanism == "1":
        alloc = continuous.mechanism1(declared, seed)
        halting = None
    else:
        halting = _halting(args)
        alloc = continuous.mechanism2(declared, continuous.QSamplerConfig(halting, seed))
    return {
        "command": "continuous run",
        "mechanism": args.mechanism,
        "seed": seed,
        "denominator_halting": halting,
        "pieces": alloc.pieces,
        "permutation": alloc.permutation_used,
        "superfair_accepted": alloc.superfair_accepted,
        "drawn_partition": alloc.drawn if args.mechanism == "2" else None,
        "declared_values": [measure_of(m, p) for m, p in zip(declared, alloc.pieces)],
        "true_values": [measure_of(m, p) for m, p in zip(true, alloc.pieces)],
    }


def cmd_discrete_run(args, seed) -> dict:
    declared = parse_profile(_load(args.declared), args.declared)
    true = parse_profile(_load(args.true), args.true) if args.true else declared
    if true.utilities.shape != declared.utilities.shape:
        raise ValidationError("--true and --declared profiles have different shapes")
    if args.trials < 1:
        raise ValidationError("--trials must be at least 1")
    run = discrete.mechanism3 if args.mechanism == "3" else discrete.mechanism4
    floors = discrete.fairness_floor(true)
    truthful = [bool(np.array_equal(true.utilities[i], declared.utilities[i])) for i in range(true.k)]
    trials = []
    own = np.zeros((args.trials, true.k), dtype=np.int64)
    for t in range(args.trials):
        trial_seed = derive_seed(seed, "trial", t)
        alloc = run(declared, trial_seed)
        own[t] = alloc.own_values(true)
        trials.append({
            "trial": t,
            "seed": trial_seed,
            "owner": alloc.owner,
            "provenance": alloc.tags(),
            "superfair_accepted": alloc.superfair_accepted,
            "declared_values": alloc.own_values(declared),
            "true_values": own[t],
        })
    players = []
    for i in range(true.k):
        lowest = int(own[:, i].min())
        check = ("pass" if lowest >= floors[i] else "fail") if truthful[i] else "n/a"
        players.append({
            "player": i,
            "truthful": truthful[i],
            "mean": Fraction(int(own[:, i].sum()), args.trials),
            "min": lowest,
            "max": int(own[:, i].max()),
            "floor": floors[i],
            "floor_check": check,
        })
    return {
        "command": "discrete run",
        "mechanism": args.mechanism,
        "seed": seed,
        "trials": trials,
        "aggregate": {"players": players, "n_trials": args.trials},
    }


def cmd_realize(args, seed) -> dict:
    profile = parse_profile(_load(args.profile), args.profile)
    D = parse_fractions(_load(args.fractions), args.fractions)
    if D.n_goods != profile.n:
        raise ValidationError(f"{args.fractions}: D has {D.n_goods} columns for {profile.n} goods")
    out = {"command": "realize", "scheme": args.scheme, "seed": seed}
    if args.scheme == "random":
        alloc = realize.random_scheme(profile, D, seed)
        target = realize.extension_value(profile, D)
    else:
        per_bin = realize.average_per_bin(profile, D)
        target = realize.extension_value(profile, realize.per_bin_matrix(profile, per_bin))
        alloc = realize.binned_scheme(profile, per_bin, seed)
        if profile.n:
            lower, upper = realize.binned_bounds(profile, target)
            out.update(
                epsilon=realize.theorem_epsilon(profile),
                lower_bounds=lower,
                upper_bounds=upper,
                within_bounds=realize.within_binned_bounds(profile, target, alloc),
            )
    out.update(
        owner=alloc.owner,
        provenance=alloc.tags(),
        target=target,
        realized=alloc.values(profile),
    )
    return out


def cmd_bins(args, seed) -> dict:
    profile = parse_profile(_load(args.profile), args.profile)
    return {
        "command": "bins",
        "k": profile.k,
        "n": profile.n,
        "M": profile.M,
        "bins": [
            {"signature": b.signature, "size": len(b), "members": b.members}
            for b in discrete.bin_goods(profile)
        ],
    }


def _expectation_dict(e, fair_share):
    if e is None:
        return None
    return {
        "margin": [v - f for v, f in zip(e.values, fair_share)],
        "label": "exact",
        "method": e.method,
        "exact": e.exact,
        "values": e.values,
        "lower": e.lower,
        "upper": e.upper,
        "atoms": e.atoms,
        "acceptance_probability": e.acceptance_probability,
        "tail_mass": e.tail_mass,
    }


def _stats_dict(s):
    if s is None:
        return None
    return {
        "label": "sampled",
        "trials": s.trials,
        "seed": s.seed,
        "players": [
            {
                "mean": p.mean,
                "variance": p.variance,
                "min": p.minimum,
                "max": p.maximum,
                "std_error": p.std_error,
            }
            for p in s.players
        ],
        "max_envy": s.max_envy,
        "envy_reference": s.envy_reference,
        "floor_violations": s.floor_violations,
        "acceptance_rate": s.acceptance_rate,
    }


def _verdict_dict(v):
    if v is None:
        return None
    w = v.witness
    return {
        "truthful": v.truthful,
        "deviations_checked": v.checked,
        "best_gain": v.best_gain,
        "unresolved": v.unresolved,
        "witness": None if w is None else {
            "player": w.player,
            "declaration": w.declaration if isinstance(w.declaration, StepMeasure) else list(w.declaration),
            "truthful_value": w.truthful_value,
            "deviant_value": w.deviant_value,
            "gain": w.gain,
            "provable": w.provable,
        },
    }


def demo_dict() -> dict:
    r = audit_mod.impossibility_demo()
    return {
        "command": "audit",
        "mechanism": "demo",
        "common_measure": r.common_measure,
        "true_measure": r.true_measure,
        "symmetric_split": r.symmetric_split,
        "symmetric_values": r.symmetric_values,
        "truthful_pieces": r.truthful_pieces,
        "utility_if_lying": r.utility_if_lying,
        "utility_if_truthful": r.utility_if_truthful,
        "others_values_if_truthful": r.others_values_if_truthful,
        "lie_profitable": r.lie_profitable,
    }


def cmd_audit(args, seed) -> dict:
    if args.mechanism == "demo":
        return demo_dict()
    if not args.instance:
        raise ValidationError("--instance is required unless --mechanism demo")
    if args.trials < 0:
        raise ValidationError("--trials must be non-negative")
    data = _load(args.instance)
    if args.mechanism in ("1", "2"):
        true, declared = _true_and_declared(data, parse_measures, args.instance)
        if len(true) != len(declared):
            raise ValidationError(f"{args.instance}: true and declared list different numbers of players")
        deviations = parse_measures(_load(args.deviations), args.deviations) if args.deviations else None
    else:
        true, declared = _true_and_declared(data, parse_profile, args.instance)
        if true.utilities.shape != declared.utilities.shape:
            raise ValidationError(f"{args.instance}: true and declared profiles have different shapes")
        deviations = None
        if args.deviations:
            rows = _load(args.deviations)
            _validate(rows, {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                      args.deviations)
            deviations = [tuple(r) for r in rows]
    if args.mechanism in ("1", "2"):
        fair_share = [Fraction(1, len(true))] * len(true)
    else:
        fair_share = [Fraction(t, true.k) for t in true.totals]
    report = audit_mod.audit(
        args.mechanism, true, declared, deviations,
        trials=args.trials, seed=seed, halting=_halting(args),
        cutoff=args.cutoff, max_atoms=args.max_atoms,
    )
    return {
        "command": "audit",
        "mechanism": args.mechanism,
        "seed": seed,
        "regime": report.regime,
        "exact": _expectation_dict(report.expectation, fair_share),
        "exact_note": report.expectation_note,
        "sampled": _stats_dict(report.sampled),
        "monte_carlo_within_5_sigma": report.monte_carlo_ok,
        "truthfulness": _verdict_dict(report.verdict),
        "truthfulness_note": report.verdict_note,
    }


def render_table(obj, prefix: str = "") -> list[str]:
    """Flatten a JSON-ready mapping into aligned ``key  value`` lines."""
    lines = []
    if isinstance(obj, dict):
        for key in sorted(obj):
            lines.extend(render_table(obj[key], f"{prefix}.{key}" if prefix else key))
    elif isinstance(obj, list) and any(isinstance(x, (dict, list)) for x in obj):
        for i, x in enumerate(obj):
            lines.extend(render_table(x, f"{prefix}[{i}]"))
    else:
        lines.append((prefix, json.dumps(obj, ensure_ascii=False)))
    return lines


def format_table(obj) -> str:
    rows = render_table(to_jsonable(obj))
    width = max((len(k) for k, _ in rows), default=0)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows)


# Parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairdiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", help="unsigned 64-bit master seed (fallback: $FAIRDIV_SEED, then 0)")

    cont = sub.add_parser("continuous", help="cake-cutting mechanisms 1 and 2")
    cont_sub = cont.add_subparsers(dest="action", required=True)
    p = cont_sub.add_parser("run")
    p.add_argument("--mechanism", choices=["1", "2"], required=True)
    p.add_argument("--declared", required=True)
    p.add_argument("--true")
    p.add_argument("--halting", default="1/2", help="geometric parameter of the grid sampler")
    seeded(p)
    p.set_defaults(handler=cmd_continuous_run)

    disc = sub.add_parser("discrete", help="indivisible-goods mechanisms 3 and 4")
    disc_sub = disc.add_subparsers(dest="action", required=True)
    p = disc_sub.add_parser("run")
    p.add_argument("--mechanism", choices=["3", "4"], required=True)
    p.add_argument("--declared", required=True)
    p.add_argument("--true")
    p.add_argument("--trials", type=int, default=1)
    seeded(p)
    p.set_defaults(handler=cmd_discrete_run)

    p = sub.add_parser("realize", help="random or binned realization of fractional shares")
    p.add_argument("--profile", required=True)
    p.add_argument("--fractions", required=True)
    p.add_argument("--scheme", choices=["random", "binned"], required=True)
    seeded(p)
    p.set_defaults(handler=cmd_realize)

    p = sub.add_parser("audit", help="exact expectations, truthfulness sweeps, risk and envy")
    p.add_argument("--mechanism", choices=["1", "2", "3", "4", "demo"], required=True)
    p.add_argument("--instance")
    p.add_argument("--deviations")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--format", choices=["json", "table"], default="json")
    p.add_argument("--halting", default="1/2")
    p.add_argument("--cutoff", type=int, default=audit_mod.DEFAULT_CUTOFF,
                   help="largest grid denominator enumerated for mechanism 2")
    p.add_argument("--max-atoms", type=int, default=audit_mod.DEFAULT_MAX_ATOMS)
    seeded(p)
    p.set_defaults(handler=cmd_audit)

    p = sub.add_parser("bins", help="show the bins of a profile")
    p.add_argument("--profile", required=True)
    p.set_defaults(handler=cmd_bins, seed=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        seed = _resolve_seed(args)
        result = args.handler(args, seed)
        text = format_table(result) if getattr(args, "format", "json") == "table" else dumps(result)
    except (ValidationError, InstanceTooLarge) as err:
        print(f"fairdiv: error: {err}", file=sys.stderr)
        return 1
    except (InvariantError, AssertionError):
        traceback.print_exc()
        print("fairdiv: internal invariant violated (this is a bug)", file=sys.stderr)
        return 2
    except (ValueError, ZeroDivisionError) as err:
        print(f"fairdiv: error: {err}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        print("fairdiv: unexpected internal error (this is a bug)", file=sys.stderr)
        return 2
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
