"""Command-line front end.

Each command reads an optional JSON config (``--config``), applies flag
overrides, validates everything, then writes its outputs into ``--out``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

from . import experiments as X
from .circuit import Circuit
from .device import DeviceSnapshot, resolve
from .mitigation import MAX_CALIBRATION_QUBITS
from .transpiler import lower
from .zeno import DEFAULT_SHOTS, MAX_ANCILLAS, DecaySpec, RabiSpec, FitError, centered_layout, fit_report, fit_zeno_time

CONFIG_SCHEMA = "zenosim.config/1"
DEFAULT_THETAS = ["pi/2", "pi/3", "pi/4", "pi/5", "pi/6"]


class ConfigError(ValueError):
    pass


_ANGLE = re.compile(r"^\s*([0-9.]*)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*$")


def parse_angle(value) -> float:
    """A number, or a multiple of pi such as ``pi/2`` or ``2pi/3``."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _ANGLE.match(str(value))
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"cannot read angle {value!r}") from None


def parse_int_range(value) -> list[int]:
    """``3``, ``[1, 2, 5]`` or ``"0-6"``."""
    if isinstance(value, int):
        return [value]
    if isinstance(value, list):
        return [int(v) for v in value]
    text = str(value)
    if "-" in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def _list(value) -> list:
    if isinstance(value, list):
        return value
    return [v for v in str(value).split(",") if v.strip()]


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults, then the config file, then any flag given on the command line."""
    cfg = dict(defaults)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if doc.pop("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
            raise ConfigError(f"{path}: expected schema {CONFIG_SCHEMA}")
        command = doc.pop("command", args.command)
        if command != args.command:
            raise ConfigError(f"{path}: config is for {command!r}, not {args.command!r}")
        unknown = sorted(set(doc) - set(defaults))
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
        cfg.update(doc)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _device(ref) -> DeviceSnapshot:
    try:
        return resolve(ref)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"snapshot {ref}: {exc}") from None


def _seed(cfg: dict, sampling: bool) -> int:
    if cfg["seed"] is None:
        if sampling:
            raise ConfigError("a seed is required for sampled runs (--seed)")
        return 0
    return int(cfg["seed"])


def _runner(cfg: dict) -> X.Runner:
    device = None
    if cfg.get("snapshot") is not None:
        device = _device(cfg["snapshot"])
        if cfg.get("readout_error") is not None:
            p = float(cfg["readout_error"])
            device = device.with_noise(readout_p01=p, readout_p10=p)
    if cfg["backend"] == "noisy" and device is None:
        raise ConfigError("the noisy backend needs --snapshot")
    return X.Runner(cfg["backend"], device, cfg["noise"])


# ---------------------------------------------------------------- commands


def cmd_rabi(cfg: dict, out: Path):
    thetas = [parse_angle(t) for t in _list(cfg["theta"])]
    ns = parse_int_range(cfg["n"])
    shots = int(cfg["shots"])
    for theta in thetas:
        for n in ns:
            RabiSpec(theta, n, shots)
    runner = _runner(cfg)
    seed = _seed(cfg, runner.samples)
    if cfg["mitigate"] and max(ns) + 1 > MAX_CALIBRATION_QUBITS:
        raise ConfigError(f"mitigation calibrates N+1 qubits; N={max(ns)} exceeds {MAX_CALIBRATION_QUBITS}")

    def run():
        rows, reports = X.rabi_sweep(thetas, ns, runner, shots, seed, bool(cfg["mitigate"]), int(cfg["workers"]))
        (out / "sweep.csv").write_text(X.sweep_csv(rows))
        for report in reports:
            i = thetas.index(report["theta"])
            write_json(out / f"mitigation_theta{i}_N{report['N']}.json", report)

    return run


def cmd_decay(cfg: dict, out: Path):
    n = int(cfg["n"])
    shots = int(cfg["shots"])
    if cfg["t"] is not None:
        t_grid = [float(t) for t in _list(cfg["t"])]
    else:
        t_grid = X.default_t_grid(float(cfg["t_max"]), int(cfg["points"]))
    if not t_grid:
        raise ConfigError("empty time grid")
    coupling = cfg["coupling"]
    if coupling is not None:
        coupling = float(coupling)
        if cfg["snapshot"] is not None:
            raise ConfigError("choose either --coupling (pseudomode) or --snapshot (device noise)")
        if cfg["backend"] == "noisy":
            raise ConfigError("the pseudomode model runs on the ideal or sampling backend")
    elif cfg["snapshot"] is None:
        raise ConfigError("decay needs --coupling or --snapshot")
    elif cfg["backend"] != "noisy":
        cfg = {**cfg, "backend": "noisy"}
    for t in t_grid:
        DecaySpec(t, n, coupling, shots)
    runner = _runner(cfg)
    seed = _seed(cfg, runner.samples)
    workers = int(cfg["workers"])
    t_max = max(t_grid)

    def run():
        rows = X.decay_sweep(t_grid, n, shots, seed, coupling, runner, workers)
        (out / "sweep.csv").write_text(X.sweep_csv(rows))
        if len(rows) < 3:
            return
        fit = _fit_with_retry([r.point() for r in rows], n, t_max)
        if coupling is not None:
            device, qubit, err = "pseudomode", 0, 0.0
        else:
            dev = runner.device
            layout = centered_layout(dev, n + 1)
            circ = X.build_decay_circuit(DecaySpec(t_max, n, None, shots), dev, layout)
            total = lower(circ, dev, layout).schedule.total_duration
            device, qubit = dev.name, layout[0]
            err = abs(total * dev.dt_ns * 1e-3 - t_max)
        write_json(out / "fit.json", fit_report(fit, device, qubit, t_max, err))
        dense = [t_max * k / 100 for k in range(101)]
        T_values = [fit.T_us - fit.sigma_us, fit.T_us + fit.sigma_us]
        (out / "curve.csv").write_text(X.curve_csv(dense, n, T_values))

    return run


def _fit_with_retry(points, n: int, t_max: float):
    try:
        return fit_zeno_time(points, n)
    except FitError as exc:
        print(f"fit failed ({exc}); retrying from T0={2 * t_max / n:.4g} us", file=sys.stderr)
        return fit_zeno_time(points, n, T0=2 * t_max / n)


def cmd_fit(cfg: dict, out: Path):
    path = Path(cfg["input"]) if cfg["input"] else None
    if path is None or not path.is_file():
        raise ConfigError(f"sweep CSV not found: {path}")
    rows = X.read_sweep_csv(path.read_text())
    n = int(cfg["n"])
    points = [r.point() for r in rows if r.n == n]
    if len(points) < 3:
        raise ConfigError(f"{path}: need at least 3 rows with N={n}, found {len(points)}")
    t_max = max(p.t_us for p in points)

    def run():
        fit = _fit_with_retry(points, n, t_max)
        write_json(out / "fit.json", fit_report(fit, cfg["device"], cfg["qubit"], t_max, 0.0))

    return run


def cmd_calibrate(cfg: dict, out: Path):
    m = int(cfg["m"])
    if not 1 <= m <= MAX_CALIBRATION_QUBITS:
        raise ConfigError(f"M={m} is outside the supported range 1..{MAX_CALIBRATION_QUBITS}")
    shots = int(cfg["shots"])
    if cfg["snapshot"] is None:
        raise ConfigError("calibrate needs --snapshot")
    runner = _runner({**cfg, "backend": "noisy"})
    if m > runner.device.n_qubits:
        raise ConfigError(f"M={m} exceeds the {runner.device.n_qubits} qubits of {runner.device.name}")
    seed = _seed(cfg, True)
    workers = int(cfg["workers"])

    def run():
        cal = X.calibrate(runner, m, shots, seed, workers)
        (out / "calibration.csv").write_text(cal.to_csv())
        states = X.basis_state_report(runner, cal, shots, seed, workers)
        doc = {
            "device": runner.device.name,
            "noise": cfg["noise"],
            "M": m,
            "shots": shots,
            "condition_number": cal.condition_number,
            "states": states,
        }
        write_json(out / "mitigation.json", doc)

    return run


def cmd_transpile(cfg: dict, out: Path):
    path = Path(cfg["circuit"]) if cfg["circuit"] else None
    if path is None or not path.is_file():
        raise ConfigError(f"circuit file not found: {path}")
    try:
        circuit = Circuit.from_json(path.read_text())
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg["snapshot"] is None:
        raise ConfigError("transpile needs --snapshot")
    device = _device(cfg["snapshot"])
    layout = parse_int_range(cfg["layout"]) if cfg["layout"] is not None else None

    def run():
        lowered = lower(circuit, device, layout)
        (out / "lowered.json").write_text(lowered.circuit.to_json())
        report = lowered.report(device)
        report["schedule"] = lowered.schedule.to_dict()
        write_json(out / "schedule.json", report)

    return run


COMMANDS = {
    "rabi": (cmd_rabi, {
        "theta": DEFAULT_THETAS, "n": f"0-{MAX_ANCILLAS}", "shots": DEFAULT_SHOTS, "backend": "sampling",
        "snapshot": None, "noise": "full", "readout_error": None, "mitigate": False, "seed": None, "workers": 1,
    }),
    "decay": (cmd_decay, {
        "t": None, "t_max": 10.25, "points": 5, "n": 6, "coupling": None, "snapshot": None,
        "backend": "sampling", "noise": "full", "readout_error": None, "shots": DEFAULT_SHOTS, "seed": None,
        "workers": 1,
    }),
    "fit": (cmd_fit, {"input": None, "n": 6, "device": "unknown", "qubit": 0}),
    "calibrate": (cmd_calibrate, {
        "m": 3, "shots": DEFAULT_SHOTS, "snapshot": None, "noise": "full", "readout_error": None, "seed": None,
        "workers": 1,
    }),
    "transpile": (cmd_transpile, {"circuit": None, "snapshot": None, "layout": None}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zenosim", description="Quantum Zeno experiments on simulated devices.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sampled=True):
        p.add_argument("--config", help="JSON config; flags override its fields")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        if sampled:
            p.add_argument("--shots", type=int, help=f"shots per circuit (default {DEFAULT_SHOTS})")
            p.add_argument("--seed", type=int, help="sampling seed (required unless the backend is ideal)")
            p.add_argument("--workers", type=int, help="parallel tasks; output does not depend on it")

    def device_flags(p):
        p.add_argument("--snapshot", help="snapshot file or name (see ZENOSIM_SNAPSHOT_DIR)")
        p.add_argument("--noise", choices=sorted(X.NOISE_PRESETS), help="noise processes to simulate")
        p.add_argument("--readout-error", dest="readout_error", type=float,
                       help="override every qubit's readout flip probabilities")

    p = sub.add_parser("rabi", help="Rabi survival sweep over theta and N")
    common(p)
    device_flags(p)
    p.add_argument("--theta", help="comma-separated angles, e.g. pi/2,pi/3")
    p.add_argument("--n", help="measurement counts, e.g. 0-6 or 1,3,5")
    p.add_argument("--backend", choices=X.BACKENDS)
    p.add_argument("--mitigate", action="store_true", default=None, help="write a mitigation report per (theta, N)")

    p = sub.add_parser("decay", help="free-decay sweep over total time, with a Zeno-time fit")
    common(p)
    device_flags(p)
    p.add_argument("--t", help="comma-separated total times in us")
    p.add_argument("--t-max", dest="t_max", type=float, help="last time of an evenly spaced grid (us)")
    p.add_argument("--points", type=int, help="number of grid points")
    p.add_argument("--n", type=int, help="number of measurements")
    p.add_argument("--coupling", type=float, help="pseudomode coupling g in rad/us")
    p.add_argument("--backend", choices=X.BACKENDS)

    p = sub.add_parser("fit", help="fit the Zeno time to a sweep CSV")
    common(p, sampled=False)
    p.add_argument("--input", help="sweep CSV")
    p.add_argument("--n", type=int, help="fit the rows with this N")
    p.add_argument("--device", help="device label for the report")
    p.add_argument("--qubit", type=int, help="qubit label for the report")

    p = sub.add_parser("calibrate", help="calibration matrix and mitigation of basis states")
    common(p)
    device_flags(p)
    p.add_argument("--m", type=int, help=f"number of qubits (1..{MAX_CALIBRATION_QUBITS})")

    p = sub.add_parser("transpile", help="lower a circuit onto a device")
    common(p, sampled=False)
    p.add_argument("--circuit", help="circuit JSON")
    p.add_argument("--snapshot", help="snapshot file or name")
    p.add_argument("--layout", help="initial layout, e.g. 5,3,4")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command, defaults = COMMANDS[args.command]
    out = Path(args.out)
    try:
        cfg = load_config(args, defaults)
        run = command(cfg, out)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"zenosim {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        out.mkdir(parents=True, exist_ok=True)
        run()
    except Exception as exc:
        print(f"zenosim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
