import json
from fractions import Fraction as F

import pytest

from fairdiv.cli import FRACTIONS, MEASURES, PROFILE, _validate, main, parse_measures
from fairdiv.measures import IntervalSet, Partition, interval_set_from_json, measure_from_json


@pytest.fixture
def files(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return str(path)

    return {
        "profile": write("p.json", {"M": 2, "utilities": [[1, 2, 1, 2, 1, 1], [2, 1, 1, 2, 2, 2]]}),
        "measures": write("m.json", [
            {"breakpoints": ["0", "1"], "densities": ["1"]},
            {"breakpoints": [0, "3/4", 1], "densities": [0, 4]},
        ]),
        "fractions": write("d.json", {"D": [["1/2"] * 6, ["1/2"] * 6]}),
        "pair": write("pair.json", {"M": 2, "utilities": [[2, 1], [1, 2]]}),
        "bad_utility": write("bad.json", {"M": 2, "utilities": [[1, 3]]}),
        "bad_type": write("bad2.json", {"M": 2, "utilities": [["x"]]}),
        "bad_measure": write("bad3.json", [{"breakpoints": [0, 1], "densities": [2]}]),
        "not_json": write("bad4.json", None),
        "write": write,
    }


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_discrete_run_round_trip(capsys, files):
    code, out, _ = run(capsys, "discrete", "run", "--mechanism", "3", "--declared", files["profile"],
                       "--seed", "7", "--trials", "1")
    assert code == 0
    data = json.loads(out)
    assert data["seed"] == 7
    trial = data["trials"][0]
    assert len(trial["owner"]) == 6
    assert set(trial["provenance"]) <= {"bin-split", "leftover"}
    assert data["aggregate"]["players"][0]["floor_check"] == "pass"


def test_continuous_run_outputs_partition(capsys, files):
    for mech in ("1", "2"):
        code, out, _ = run(capsys, "continuous", "run", "--mechanism", mech, "--declared", files["measures"],
                           "--seed", "3")
        assert code == 0
        data = json.loads(out)
        Partition(tuple(interval_set_from_json(p) for p in data["pieces"]))
        assert all(F(v) >= F(1, 2) for v in data["true_values"])


def test_realize_and_bins(capsys, files):
    code, out, _ = run(capsys, "realize", "--profile", files["profile"], "--fractions", files["fractions"],
                       "--scheme", "binned", "--seed", "1")
    assert code == 0 and json.loads(out)["within_bounds"] is True
    code, out, _ = run(capsys, "realize", "--profile", files["profile"], "--fractions", files["fractions"],
                       "--scheme", "random")
    assert code == 0 and json.loads(out)["seed"] == 0
    code, out, _ = run(capsys, "bins", "--profile", files["profile"])
    bins = json.loads(out)["bins"]
    assert sum(b["size"] for b in bins) == 6


def test_audit_outputs(capsys, files):
    code, out, _ = run(capsys, "audit", "--mechanism", "demo")
    data = json.loads(out)
    assert code == 0 and data["lie_profitable"] and data["utility_if_lying"] == "1/1"
    measure_from_json(data["true_measure"])
    code, out, _ = run(capsys, "audit", "--mechanism", "4", "--instance", files["pair"], "--trials", "20")
    data = json.loads(out)
    assert code == 0
    assert data["exact"]["values"] == ["13/8", "13/8"]
    assert data["exact"]["acceptance_probability"] == "1/4"
    assert data["exact"]["margin"] == ["1/8", "1/8"]
    assert data["truthfulness"]["truthful"] is True
    code, out, _ = run(capsys, "audit", "--mechanism", "4", "--instance", files["pair"], "--format", "table")
    assert code == 0 and "exact.values[0]" not in out and "truthfulness.truthful" in out


def test_audit_continuous_with_deviations(capsys, files):
    code, out, _ = run(capsys, "audit", "--mechanism", "2", "--instance", files["measures"],
                       "--deviations", files["measures"], "--cutoff", "6", "--trials", "10")
    data = json.loads(out)
    assert code == 0 and data["regime"] == "distinct" and data["truthfulness"]["truthful"]


def test_true_and_declared_instance(capsys, files):
    inst = files["write"]("td.json", {
        "true": {"M": 2, "utilities": [[2, 1], [1, 2]]},
        "declared": {"M": 2, "utilities": [[1, 1], [1, 2]]},
    })
    code, out, _ = run(capsys, "audit", "--mechanism", "4", "--instance", inst, "--trials", "5")
    assert code == 0 and json.loads(out)["exact"]["values"][0] != "13/8"


@pytest.mark.parametrize("key, needle", [
    ("bad_utility", "{1, ..., M}"),
    ("bad_type", "$.utilities[0][0]"),
    ("not_json", "$"),
])
def test_validation_errors_exit_1(capsys, files, key, needle):
    code, _, err = run(capsys, "discrete", "run", "--mechanism", "3", "--declared", files[key])
    assert code == 1 and needle in err


def test_other_input_errors_exit_1(capsys, files, tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert run(capsys, "bins", "--profile", str(bad))[0] == 1
    assert run(capsys, "bins", "--profile", str(tmp_path / "missing.json"))[0] == 1
    code, _, err = run(capsys, "continuous", "run", "--mechanism", "1", "--declared", files["bad_measure"])
    assert code == 1 and "$[0]" in err
    assert run(capsys, "discrete", "run", "--mechanism", "3", "--declared", files["profile"], "--seed", "-1")[0] == 1
    assert run(capsys, "discrete", "run", "--mechanism", "9", "--declared", files["profile"])[0] == 1
    assert run(capsys, "audit", "--mechanism", "4")[0] == 1
    assert run(capsys, "audit", "--mechanism", "2", "--instance", files["measures"], "--halting", "2")[0] == 1


def test_invariant_violation_exits_2(capsys, files, monkeypatch):
    import fairdiv.cli as cli
    from fairdiv.errors import InvariantError

    def boom(*a, **k):
        raise InvariantError("broken")

    monkeypatch.setattr(cli.discrete, "mechanism3", boom)
    code, _, err = run(capsys, "discrete", "run", "--mechanism", "3", "--declared", files["profile"])
    assert code == 2 and "bug" in err


def test_seed_falls_back_to_environment(capsys, files, monkeypatch):
    args = ("discrete", "run", "--mechanism", "4", "--declared", files["profile"], "--trials", "3")
    monkeypatch.setenv("FAIRDIV_SEED", "42")
    _, env_out, _ = run(capsys, *args)
    _, flag_out, _ = run(capsys, *args, "--seed", "42")
    assert env_out == flag_out and json.loads(env_out)["seed"] == 42


def test_emitted_inputs_reparse_under_schemas(capsys, files):
    _, out, _ = run(capsys, "audit", "--mechanism", "demo")
    data = json.loads(out)
    _validate([data["true_measure"], data["common_measure"]], MEASURES, "demo")
    assert parse_measures([data["true_measure"]], "demo")[0].densities == (2, 0)
    _validate({"M": 2, "utilities": [[1, 2]]}, PROFILE, "x")
    _validate([["1/2", 0.5, 1]], FRACTIONS, "x")
    for piece in data["truthful_pieces"]:
        assert isinstance(interval_set_from_json(piece), IntervalSet)
