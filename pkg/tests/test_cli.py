import csv
import io
import json
import math

import jsonschema
import numpy as np
import pytest

from zenosim.circuit import Circuit
from zenosim import circuit as C
from zenosim.cli import main, parse_angle, parse_int_range
from zenosim.device import resolve
from zenosim.experiments import SWEEP_COLUMNS
from zenosim.transpiler import equivalence_error
from zenosim.zeno import rabi_survival_theory

FIT_SCHEMA = {
    "type": "object",
    "required": ["device", "qubit", "obs_time_us", "T_us", "sigma_us", "N"],
    "properties": {
        "T_us": {"type": "number", "exclusiveMinimum": 0},
        "sigma_us": {"type": "number", "minimum": 0},
        "obs_time_us": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 1},
    },
}
DIST = {"type": "array", "items": {"type": "number"}}
MITIGATION_SCHEMA = {
    "type": "object",
    "required": ["M", "condition_number", "distributions", "fidelity", "clipped"],
    "properties": {
        "distributions": {
            "type": "object",
            "required": ["ideal", "raw", "inverse", "constrained"],
            "properties": {k: DIST for k in ("ideal", "raw", "inverse", "constrained")},
        },
        "fidelity": {
            "type": "object",
            "required": ["raw", "inverse", "constrained"],
            "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1},
        },
    },
}
SCHEDULE_SCHEMA = {
    "type": "object",
    "required": ["total_duration_dt", "delay_rounding_errors_dt", "delay_error_bound_dt", "schedule"],
}


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def read_sweep(path):
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    assert tuple(rows[0].keys()) == SWEEP_COLUMNS
    return rows


def test_parsers():
    assert parse_angle("pi/2") == pytest.approx(math.pi / 2)
    assert parse_angle("2pi/3") == pytest.approx(2 * math.pi / 3)
    assert parse_angle("pi") == pytest.approx(math.pi)
    assert parse_angle(0.25) == 0.25
    assert parse_angle("0.5") == 0.5
    assert parse_int_range("0-4") == [0, 1, 2, 3, 4]
    assert parse_int_range("1,3") == [1, 3]
    assert parse_int_range([2, 5]) == [2, 5]


def test_rabi_ideal_matches_theory(tmp_path):
    code, out = run(tmp_path, "r", "rabi", "--theta", "pi/2", "--n", "0-4", "--backend", "ideal")
    assert code == 0
    rows = read_sweep(out / "sweep.csv")
    assert [int(r["N"]) for r in rows] == [0, 1, 2, 3, 4]
    for r in rows:
        assert float(r["p"]) == pytest.approx(float(r["p_theory"]), abs=1e-14)
        assert float(r["p_theory"]) == rabi_survival_theory(math.pi / 2, int(r["N"]))
        assert r["shots"] == "20000"


def test_bad_snapshot_path(tmp_path, capsys):
    code, _ = run(tmp_path, "r", "rabi", "--snapshot", "missing/snap.json", "--seed", "1", "--backend", "noisy")
    assert code == 2
    assert "missing/snap.json" in capsys.readouterr().err


def test_seed_is_required_for_sampling(tmp_path, capsys):
    code, _ = run(tmp_path, "r", "rabi", "--n", "1")
    assert code == 2
    assert "seed" in capsys.readouterr().err


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "rabi.json"
    cfg.write_text(json.dumps({"schema": "zenosim.config/1", "command": "rabi", "theta": ["pi/3"], "n": "1-2",
                               "shots": 500, "seed": 3}))
    code, out = run(tmp_path, "a", "rabi", "--config", str(cfg))
    assert code == 0
    rows = read_sweep(out / "sweep.csv")
    assert len(rows) == 2 and rows[0]["shots"] == "500"
    code, out = run(tmp_path, "b", "rabi", "--config", str(cfg), "--shots", "700")
    assert read_sweep(out / "sweep.csv")[0]["shots"] == "700"


@pytest.mark.parametrize("doc", [
    {"schema": "zenosim.config/1", "bogus": 1},
    {"schema": "other"},
    {"command": "decay"},
])
def test_bad_configs(tmp_path, doc):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    assert run(tmp_path, "x", "rabi", "--config", str(cfg), "--seed", "1")[0] == 2


def test_out_of_range_values_are_config_errors(tmp_path):
    assert run(tmp_path, "x", "rabi", "--n", "7", "--seed", "1")[0] == 2
    assert run(tmp_path, "x", "rabi", "--theta", "0", "--seed", "1")[0] == 2
    assert run(tmp_path, "x", "decay", "--coupling", "0.1", "--t", "", "--seed", "1")[0] == 2
    assert run(tmp_path, "x", "decay", "--seed", "1")[0] == 2


def test_rabi_mitigation_reports(tmp_path):
    code, out = run(tmp_path, "m", "rabi", "--theta", "pi/2,pi/4", "--n", "1-2", "--backend", "noisy",
                    "--snapshot", "nairobi-like", "--noise", "readout", "--mitigate", "--seed", "4", "--shots", "4000")
    assert code == 0
    reports = sorted(p.name for p in out.glob("mitigation_*.json"))
    assert reports == ["mitigation_theta0_N1.json", "mitigation_theta0_N2.json",
                       "mitigation_theta1_N1.json", "mitigation_theta1_N2.json"]
    for name in reports:
        doc = json.loads((out / name).read_text())
        jsonschema.validate(doc, MITIGATION_SCHEMA)
        assert min(doc["distributions"]["constrained"]) >= 0


def test_decay_pseudomode_fit(tmp_path):
    code, out = run(tmp_path, "d", "decay", "--coupling", str(1 / 15.8), "--n", "6", "--t-max", "10.25", "--seed", "21")
    assert code == 0
    fit = json.loads((out / "fit.json").read_text())
    jsonschema.validate(fit, FIT_SCHEMA)
    assert abs(fit["T_us"] - 15.8) <= 0.5
    assert fit["device"] == "pseudomode" and fit["obs_time_us"] == 10.25
    rows = read_sweep(out / "sweep.csv")
    assert [float(r["theta_or_t"]) for r in rows] == [2.05, 4.1, 6.15, 8.2, 10.25]


def test_decay_comparison_curves(tmp_path):
    code, out = run(tmp_path, "d", "decay", "--coupling", "0.08", "--n", "3", "--t", "1,2,3,4,5", "--seed", "2")
    assert code == 0
    curve = list(csv.DictReader(io.StringIO((out / "curve.csv").read_text())))
    assert len({r["T_us"] for r in curve}) == 2
    assert {r["N"] for r in curve} == {"3"}


def test_decay_on_device(tmp_path):
    code, out = run(tmp_path, "d", "decay", "--snapshot", "nairobi-like", "--n", "2", "--t", "9,12,15",
                    "--noise", "relaxation", "--seed", "2", "--shots", "5000")
    assert code == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["device"] == "nairobi-like" and fit["qubit"] == 5
    assert 0 <= fit["obs_time_err_us"] < 0.05


def test_fit_command(tmp_path):
    run(tmp_path, "d", "decay", "--coupling", str(1 / 15.8), "--seed", "21")
    code, out = run(tmp_path, "f", "fit", "--input", str(tmp_path / "d" / "sweep.csv"), "--n", "6",
                    "--device", "pseudomode")
    assert code == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["T_us"] == json.loads((tmp_path / "d" / "fit.json").read_text())["T_us"]
    assert run(tmp_path, "g", "fit", "--input", str(tmp_path / "nothing.csv"))[0] == 2
    assert run(tmp_path, "g", "fit", "--input", str(tmp_path / "d" / "sweep.csv"), "--n", "2")[0] == 2


def test_calibrate_noiseless(tmp_path):
    code, out = run(tmp_path, "c", "calibrate", "--m", "2", "--snapshot", "nairobi-like", "--noise", "none",
                    "--seed", "1", "--shots", "1000")
    assert code == 0
    lines = (out / "calibration.csv").read_text().splitlines()
    assert lines[0] == "# M=2,shots=1000"
    assert np.array_equal(np.loadtxt(lines[1:], delimiter=","), np.eye(4))
    doc = json.loads((out / "mitigation.json").read_text())
    for state in doc["states"]:
        jsonschema.validate(state, MITIGATION_SCHEMA)
        assert state["fidelity"] == {"raw": 1.0, "inverse": 1.0, "constrained": 1.0}


def test_calibrate_readout_noise_improves_fidelity(tmp_path):
    code, out = run(tmp_path, "c", "calibrate", "--m", "3", "--snapshot", "nairobi-like", "--noise", "readout",
                    "--readout-error", "0.05", "--seed", "6")
    assert code == 0
    for state in json.loads((out / "mitigation.json").read_text())["states"]:
        assert state["fidelity"]["inverse"] > state["fidelity"]["raw"]
        assert state["fidelity"]["constrained"] > state["fidelity"]["raw"]


def test_calibrate_size_limit(tmp_path):
    assert run(tmp_path, "c", "calibrate", "--m", "8", "--snapshot", "nairobi-like", "--seed", "1")[0] == 2


def test_transpile(tmp_path):
    circ = Circuit(3, 3, (C.u3(0.3, 0.2, 0.1, 0), C.cx(0, 2), C.delay(41000, 1), C.cx(2, 1),
                          *(C.measure(q, q) for q in range(3))))
    src = tmp_path / "circ.json"
    src.write_text(circ.to_json())
    code, out = run(tmp_path, "t", "transpile", "--circuit", str(src), "--snapshot", "lima-like")
    assert code == 0
    lowered = Circuit.from_json((out / "lowered.json").read_text())
    report = json.loads((out / "schedule.json").read_text())
    jsonschema.validate(report, SCHEDULE_SCHEMA)
    assert report["delay_rounding_errors_dt"] == [8]
    dev = resolve("lima-like")
    assert all(i.qubits in dev.coupling_edges for i in lowered if len(i.qubits) == 2)
    err = equivalence_error(circ, lowered, report["initial_layout"], report["final_layout"])
    assert err < 1e-8


def test_transpile_errors(tmp_path):
    assert run(tmp_path, "t", "transpile", "--circuit", str(tmp_path / "none.json"), "--snapshot", "lima-like")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": "zenosim.circuit/1", "n_qubits": 1, "instructions": [{"kind": "cz", "qubits": [0]}]}')
    assert run(tmp_path, "t", "transpile", "--circuit", str(bad), "--snapshot", "lima-like")[0] == 2
    big = tmp_path / "big.json"
    big.write_text(Circuit(6, 0, (C.cx(0, 5),)).to_json())
    assert run(tmp_path, "t", "transpile", "--circuit", str(big), "--snapshot", "lima-like")[0] == 1


COMMANDS = {
    "rabi": ["rabi", "--n", "0-3", "--backend", "noisy", "--snapshot", "nairobi-like", "--mitigate",
             "--seed", "9", "--shots", "3000"],
    "decay": ["decay", "--coupling", "0.07", "--seed", "9"],
    "device-decay": ["decay", "--snapshot", "nairobi-like", "--n", "2", "--t", "9,11,13", "--seed", "9"],
    "calibrate": ["calibrate", "--m", "2", "--snapshot", "lima-like", "--seed", "9"],
}


@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_outputs_are_byte_identical(tmp_path, name):
    argv = COMMANDS[name]
    assert run(tmp_path, "one", *argv)[0] == 0
    assert run(tmp_path, "two", *argv, "--workers", "8")[0] == 0
    one = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert one == sorted(p.name for p in (tmp_path / "two").iterdir())
    for fname in one:
        assert (tmp_path / "one" / fname).read_bytes() == (tmp_path / "two" / fname).read_bytes()
