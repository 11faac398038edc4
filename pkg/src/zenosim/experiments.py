"""Experiment sweeps: Rabi, free decay, calibration with mitigation.

Every sampled task draws from its own seed, spawned from the sweep seed by
task position, so results do not depend on ``workers`` or execution order.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circuit import Circuit
from .device import DeviceSnapshot
from .mitigation import assemble_matrix, build_calibration_circuits, mitigation_report, CalibrationMatrix
from .simulator import CountsHistogram, NoiseModel, noisy_evolution, run_ideal, sample_counts
from .transpiler import lower
from .zeno import (
    DecaySpec,
    RabiSpec,
    SurvivalPoint,
    ZenoError,
    build_decay_circuit,
    build_rabi_circuit,
    centered_layout,
    fit_zeno_time,
    rabi_survival_theory,
    stderr_of,
    survival_from_distribution,
    theory_decay,
)

BACKENDS = ("ideal", "sampling", "noisy")
NOISE_PRESETS = {
    "full": {},
    "readout": {"relaxation": False, "dephasing": False},
    "relaxation": {"dephasing": False, "readout": False},
    "decoherence": {"readout": False},
    "none": {"relaxation": False, "dephasing": False, "readout": False},
}
SWEEP_COLUMNS = ("experiment", "theta_or_t", "N", "shots", "p", "stderr", "p_theory")


def noise_model(device: DeviceSnapshot, preset: str = "full") -> NoiseModel:
    if preset not in NOISE_PRESETS:
        raise ZenoError(f"unknown noise preset {preset!r}; choose from {sorted(NOISE_PRESETS)}")
    return NoiseModel(device, **NOISE_PRESETS[preset])


@dataclass(frozen=True)
class SweepRow:
    experiment: str
    theta_or_t: float
    n: int
    shots: int
    p: float
    stderr: float
    p_theory: float | None

    def point(self) -> SurvivalPoint:
        return SurvivalPoint(self.theta_or_t, self.n, self.p, self.stderr, self.shots)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([r.experiment, _fmt(r.theta_or_t), r.n, r.shots, _fmt(r.p), _fmt(r.stderr), _fmt(r.p_theory)])
    return out.getvalue()


def read_sweep_csv(text: str) -> list[SweepRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
        raise ZenoError(f"sweep CSV must have columns {','.join(SWEEP_COLUMNS)}")
    return [
        SweepRow(
            row["experiment"], float(row["theta_or_t"]), int(row["N"]), int(row["shots"]),
            float(row["p"]), float(row["stderr"]), float(row["p_theory"]) if row["p_theory"] else None,
        )
        for row in reader
    ]


def task_seeds(seed: int, count: int, stream: int = 0) -> list[int]:
    """``count`` independent integer seeds for tasks in ``stream``."""
    root = np.random.SeedSequence(seed).spawn(stream + 1)[stream]
    return [int(child.generate_state(1, np.uint64)[0]) for child in root.spawn(count)]


def _map(fn: Callable, jobs: Sequence, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


@dataclass(frozen=True)
class Runner:
    """Executes logical circuits on one backend.

    ``noisy`` lowers each circuit onto ``device`` with the centred layout and
    evolves the density matrix; the other two ignore the device.
    """

    backend: str = "sampling"
    device: DeviceSnapshot | None = None
    noise: str = "full"

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ZenoError(f"unknown backend {self.backend!r}; choose from {list(BACKENDS)}")
        if self.backend == "noisy" and self.device is None:
            raise ZenoError("the noisy backend needs a device snapshot")
        if self.backend == "noisy":
            noise_model(self.device, self.noise)

    def distribution(self, circuit: Circuit) -> np.ndarray:
        """Exact clbit distribution under this backend's model."""
        if self.backend != "noisy":
            return run_ideal(circuit)[1]
        lowered = lower(circuit, self.device, centered_layout(self.device, circuit.n_qubits))
        return noisy_evolution(lowered.circuit, noise_model(self.device, self.noise))[0]

    def counts(self, circuit: Circuit, shots: int, seed: int) -> CountsHistogram:
        return sample_counts(self.distribution(circuit), shots, seed)

    @property
    def samples(self) -> bool:
        return self.backend != "ideal"


def _observe(runner: Runner, circuit: Circuit, shots: int, seed: int, survive: Callable) -> tuple[float, float, np.ndarray]:
    """Survival and stderr from the exact distribution or a sampled histogram."""
    exact = runner.distribution(circuit)
    if not runner.samples:
        p = survive(exact)
        return p, stderr_of(p, shots), exact
    hist = sample_counts(exact, shots, seed)
    p = survive(hist.probabilities())
    return p, stderr_of(p, shots), hist.probabilities()


def _trajectory(n: int, target: int) -> Callable[[np.ndarray], float]:
    return lambda probs: survival_from_distribution(probs, 0, target, range(1, n + 1))


def calibrate(
    runner: Runner, m: int, shots: int, seed: int, workers: int = 1, stream: int = 1
) -> CalibrationMatrix:
    circuits = build_calibration_circuits(m)
    seeds = task_seeds(seed, len(circuits), stream)
    hists = _map(lambda job: runner.counts(job[0], shots, job[1]), list(zip(circuits, seeds)), workers)
    return assemble_matrix(hists)


def rabi_sweep(
    thetas: Sequence[float],
    ns: Sequence[int],
    runner: Runner,
    shots: int,
    seed: int = 0,
    mitigate: bool = False,
    workers: int = 1,
) -> tuple[list[SweepRow], list[dict]]:
    """Survival for every (theta, N); optionally a mitigation report for each.

    Survival is the probability that the system and all N ancilla records
    read 0.  Mitigation calibrates once per N on the same backend.
    """
    jobs = [(theta, n) for theta in thetas for n in ns]
    for theta, n in jobs:
        RabiSpec(theta, n, shots)
    seeds = task_seeds(seed, len(jobs))

    def run(job):
        (theta, n), task_seed = job
        return _observe(runner, build_rabi_circuit(RabiSpec(theta, n, shots)), shots, task_seed, _trajectory(n, 0))

    results = _map(run, list(zip(jobs, seeds)), workers)
    rows = [
        SweepRow("rabi", theta, n, shots, p, err, rabi_survival_theory(theta, n))
        for (theta, n), (p, err, _) in zip(jobs, results)
    ]
    reports: list[dict] = []
    if mitigate:
        cals = {n: calibrate(runner, n + 1, shots, seed, workers, stream=2 + n) for n in sorted(set(ns))}
        for (theta, n), (_, _, measured) in zip(jobs, results):
            ideal = run_ideal(build_rabi_circuit(RabiSpec(theta, n, shots)))[1]
            report = mitigation_report(cals[n], measured, ideal, _trajectory(n, 0))
            reports.append({"experiment": "rabi", "theta": theta, "N": n, "shots": shots, **report})
    return rows, reports


def decay_sweep(
    t_grid: Sequence[float],
    n: int,
    shots: int,
    seed: int = 0,
    coupling: float | None = None,
    runner: Runner | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """Free-decay survival at each total time with N measurements.

    Pseudomode (``coupling`` given) scores the full record and compares with
    the Zeno-time law at ``T = 1/g``.  Device noise needs the noisy backend;
    there survival is the system bit alone and ``p_theory`` is the exact
    model value, since Markovian noise has no Zeno time.
    """
    if not len(t_grid):
        raise ZenoError("empty time grid")
    if coupling is None and (runner is None or runner.backend != "noisy"):
        raise ZenoError("device-noise decay needs the noisy backend")
    runner = runner if coupling is None else Runner("sampling" if runner is None else runner.backend)
    seeds = task_seeds(seed, len(t_grid))

    def run(job):
        t, task_seed = job
        spec = DecaySpec(t, n, coupling, shots)
        if coupling is not None:
            circ = build_decay_circuit(spec)
            p, err, _ = _observe(runner, circ, shots, task_seed, _trajectory(n, 1))
            T = 1 / coupling
            theory = theory_decay(t, n, T) if t < n * T else None
            return p, err, theory
        circ = build_decay_circuit(spec, runner.device)
        survive = lambda probs: survival_from_distribution(probs, 0, 1)
        p, err, _ = _observe(runner, circ, shots, task_seed, survive)
        return p, err, survive(runner.distribution(circ))

    results = _map(run, list(zip(t_grid, seeds)), workers)
    label = "decay_pseudomode" if coupling is not None else "decay_device"
    return [SweepRow(label, t, n, shots, p, err, theory) for t, (p, err, theory) in zip(t_grid, results)]


def fit_rows(rows: Sequence[SweepRow], n: int):
    points = [r.point() for r in rows if r.n == n]
    return fit_zeno_time(points, n)


def curve_csv(t_grid: Sequence[float], n: int, T_values: Sequence[float]) -> str:
    """Zeno-law curves for several T, in long format (t_us, N, T_us, p)."""
    lines = ["t_us,N,T_us,p"]
    for T in T_values:
        for t in t_grid:
            if t < n * T:
                lines.append(f"{float(t)!r},{n},{float(T)!r},{theory_decay(t, n, T)!r}")
    return "\n".join(lines) + "\n"


def basis_state_report(
    runner: Runner, cal: CalibrationMatrix, shots: int, seed: int, workers: int = 1
) -> list[dict]:
    """Mitigate fresh runs of each calibration state and score them against the exact basis state."""
    circuits = build_calibration_circuits(cal.n_qubits)
    seeds = task_seeds(seed, len(circuits), stream=0)
    hists = _map(lambda job: runner.counts(job[0], shots, job[1]), list(zip(circuits, seeds)), workers)
    reports = []
    for j, hist in enumerate(hists):
        ideal = np.zeros(len(circuits))
        ideal[j] = 1.0
        report = mitigation_report(cal, hist.probabilities(), ideal)
        reports.append({"prepared": format(j, f"0{cal.n_qubits}b"), **report})
    return reports


def default_t_grid(t_max: float, points: int = 5) -> list[float]:
    """``points`` equally spaced times ending at ``t_max``, e.g. 2.05, 4.1, ..., 10.25."""
    if points < 1 or not t_max > 0:
        raise ZenoError("t grid needs t_max > 0 and at least one point")
    return [round(t_max * k / points, 12) for k in range(1, points + 1)]
