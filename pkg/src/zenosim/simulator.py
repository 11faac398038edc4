"""Simulation backends: exact statevector, shot sampling, noisy density matrix.

Bitstrings are written with clbit 0 as the rightmost character.

Markovian T1/T2 channels alone cannot produce a Zeno effect in free decay,
since an exponential decay is unchanged by interleaved measurements.  The
short-time quadratic regime is instead modelled with a *pseudomode*: the
system qubit exchanges its excitation coherently with one environment qubit
through :func:`xy_gate`, giving exact ``cos^2(g t)`` survival between
measurements.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import Circuit, run_statevector, schedule, xy_matrix
from .device import DeviceSnapshot
from .qcore import DensityMatrix, StateVector, apply_gate, apply_kraus, marginal_probabilities

MAX_IDEAL_QUBITS = 10
MAX_NOISY_QUBITS = 7
SHOT_CHUNK = 1024

HISTOGRAM_SCHEMA = "zenosim.counts/1"


class SimulationError(ValueError):
    pass


def xy_gate(beta: float) -> np.ndarray:
    return xy_matrix(beta)


def bitstring(index: int, n_bits: int) -> str:
    return format(index, f"0{n_bits}b") if n_bits else ""


@dataclass(frozen=True)
class CountsHistogram:
    shots: int
    counts: dict
    n_bits: int

    def __post_init__(self):
        counts = {k: int(v) for k, v in sorted(self.counts.items()) if int(v) > 0}
        if any(v < 0 for v in self.counts.values()):
            raise SimulationError("counts must be non-negative")
        if sum(counts.values()) != self.shots:
            raise SimulationError(f"counts sum to {sum(counts.values())}, expected {self.shots} shots")
        if any(len(k) != self.n_bits for k in counts):
            raise SimulationError(f"bitstrings must have {self.n_bits} characters")
        object.__setattr__(self, "counts", counts)

    def probabilities(self) -> np.ndarray:
        p = np.zeros(1 << self.n_bits)
        for key, value in self.counts.items():
            p[int(key, 2) if key else 0] = value
        return p / self.shots

    def to_dict(self) -> dict:
        return {"schema": HISTOGRAM_SCHEMA, "shots": self.shots, "counts": dict(self.counts)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CountsHistogram":
        counts = d["counts"]
        n_bits = len(next(iter(counts))) if counts else 0
        return cls(int(d["shots"]), counts, n_bits)


def distribution_csv(probs: np.ndarray) -> str:
    n_bits = int(np.log2(len(probs)))
    lines = ["bitstring,probability"]
    lines += [f"{bitstring(i, n_bits)},{float(p)!r}" for i, p in enumerate(probs)]
    return "\n".join(lines) + "\n"


def _normalized(probs: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    total = p.sum()
    if total <= 0:
        raise SimulationError("distribution has no weight")
    return p / total


def sample_counts(probs: np.ndarray, shots: int, seed: int, workers: int = 1) -> CountsHistogram:
    """Multinomial draw of ``shots`` outcomes.

    Shots are split in fixed-size chunks, each with its own stream spawned
    from ``seed``; the result is therefore identical for any ``workers``.
    """
    if shots < 1:
        raise SimulationError(f"shots must be >= 1, got {shots}")
    p = _normalized(probs)
    n_bits = int(round(math.log2(p.size)))
    sizes = [SHOT_CHUNK] * (shots // SHOT_CHUNK)
    if shots % SHOT_CHUNK:
        sizes.append(shots % SHOT_CHUNK)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def draw(job):
        size, stream = job
        return np.random.default_rng(stream).multinomial(size, p)

    jobs = list(zip(sizes, streams))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(draw, jobs))
    else:
        parts = [draw(job) for job in jobs]
    total = np.sum(parts, axis=0)
    counts = {bitstring(i, n_bits): int(c) for i, c in enumerate(total) if c}
    return CountsHistogram(shots, counts, n_bits)


def clbit_distribution(probs: np.ndarray, circuit: Circuit) -> np.ndarray:
    """Distribution over the circuit's clbits from qubit probabilities."""
    measured = circuit.measured_qubits()
    n_c = circuit.n_clbits
    if not measured:
        out = np.zeros(1 << n_c)
        out[0] = 1.0
        return out
    clbits = sorted(measured)
    marg = marginal_probabilities(probs, [measured[c] for c in clbits])
    if clbits == list(range(n_c)):
        return marg
    out = np.zeros(1 << n_c)
    for i, value in enumerate(marg):
        index = sum(1 << c for bit, c in enumerate(clbits) if i >> bit & 1)
        out[index] += value
    return out


def run_ideal(circuit: Circuit) -> tuple[StateVector, np.ndarray]:
    """Exact final state and measured-clbit distribution, ignoring delays and noise."""
    if circuit.n_qubits > MAX_IDEAL_QUBITS:
        raise SimulationError(f"ideal backend limited to {MAX_IDEAL_QUBITS} qubits")
    psi = run_statevector(circuit)
    return psi, clbit_distribution(psi.probabilities(), circuit)


def run_sampling(circuit: Circuit, shots: int, seed: int, workers: int = 1) -> CountsHistogram:
    _, probs = run_ideal(circuit)
    return sample_counts(probs, shots, seed, workers)


@dataclass(frozen=True)
class NoiseModel:
    """Which noise processes to simulate; all parameters come from ``device``."""

    device: DeviceSnapshot
    relaxation: bool = True
    dephasing: bool = True
    readout: bool = True
    idle_noise_on_delays: bool = True
    noise_on_gate_durations: bool = True

    @classmethod
    def noiseless(cls, device: DeviceSnapshot) -> "NoiseModel":
        return cls(device, relaxation=False, dephasing=False, readout=False)

    @property
    def any_decoherence(self) -> bool:
        return self.relaxation or self.dephasing


_I2 = np.eye(2, dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)


def idle_kraus(
    duration_us: float, T1_us: float, T2_us: float, relaxation: bool = True, dephasing: bool = True
) -> list[np.ndarray]:
    """Kraus operators of free evolution for ``duration_us``.

    Amplitude damping with ``gamma = 1 - exp(-t/T1)`` followed by pure
    dephasing at rate ``1/T2 - 1/(2 T1)``; with both enabled the coherence
    decays by exactly ``exp(-t/T2)`` and the excited population by
    ``exp(-t/T1)``.
    """
    if T2_us > 2 * T1_us * (1 + 1e-12):
        raise SimulationError(f"T2={T2_us} exceeds 2*T1={2 * T1_us}")
    if duration_us < 0:
        raise SimulationError("duration must be non-negative")
    ops = [_I2]
    if relaxation:
        gamma = -math.expm1(-duration_us / T1_us)
        ops = [
            np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
            np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex),
        ]
    if dephasing:
        rate = max(1 / T2_us - 1 / (2 * T1_us), 0.0)
        lam = math.exp(-duration_us * rate)
        if lam < 1:
            phase = [math.sqrt((1 + lam) / 2) * _I2, math.sqrt((1 - lam) / 2) * _Z]
            ops = [p @ k for p in phase for k in ops]
    return ops


def idle_channel(
    rho: DensityMatrix, qubit: int, dt_count: int, T1_us: float, T2_us: float, dt_ns: float,
    relaxation: bool = True, dephasing: bool = True,
) -> DensityMatrix:
    if dt_count < 0:
        raise SimulationError(f"dt_count must be non-negative, got {dt_count}")
    kraus = idle_kraus(dt_count * dt_ns * 1e-3, T1_us, T2_us, relaxation, dephasing)
    if len(kraus) == 1:
        return rho
    return apply_kraus(rho, kraus, [qubit])


def readout_matrix(p01: float, p10: float) -> np.ndarray:
    """Column-stochastic confusion matrix; column = true state, row = reading."""
    return np.array([[1 - p01, p10], [p01, 1 - p10]])


def apply_readout(probs: np.ndarray, circuit: Circuit, device: DeviceSnapshot) -> np.ndarray:
    n_c = circuit.n_clbits
    t = np.asarray(probs, dtype=float).reshape([2] * n_c) if n_c else np.asarray(probs)
    for c, q in circuit.measured_qubits().items():
        props = device.qubits[q]
        t = np.moveaxis(np.tensordot(readout_matrix(props.readout_p01, props.readout_p10), t, axes=([1], [n_c - 1 - c])), 0, n_c - 1 - c)
    return t.reshape(-1)


def noisy_evolution(circuit: Circuit, noise: NoiseModel) -> tuple[np.ndarray, DensityMatrix]:
    """Density-matrix evolution along the ASAP schedule.

    Each gate is applied as a unitary followed by idle noise for its duration
    on its qubits.  Spectators catch up lazily: before a qubit is next used
    it receives the idle channel for the time it waited.  Single-qubit idle
    channels on different qubits commute with each other and with gates on
    other qubits, so this equals slot-by-slot evolution.  Noise on a qubit
    stops when its terminal measurement starts.
    """
    device = noise.device
    n = circuit.n_qubits
    if n > MAX_NOISY_QUBITS:
        raise SimulationError(f"noisy backend limited to {MAX_NOISY_QUBITS} qubits, circuit has {n}")
    if n > device.n_qubits:
        raise SimulationError(f"circuit has {n} qubits, device {device.name} has {device.n_qubits}")
    sched = schedule(circuit, device)
    rho = DensityMatrix.zero(n)
    clock = [0] * n
    touched: set[int] = set()

    def idle(rho, q, dt):
        if dt <= 0 or not noise.any_decoherence or q not in touched:
            return rho
        props = device.qubits[q]
        return idle_channel(rho, q, dt, props.T1_us, props.T2_us, device.dt_ns, noise.relaxation, noise.dephasing)

    for instr, start, dur in zip(circuit.instructions, sched.starts, sched.durations):
        for q in instr.qubits:
            rho = idle(rho, q, start - clock[q])
            clock[q] = start
        if instr.kind == "measure":
            continue
        if instr.kind == "barrier":
            continue
        if instr.kind == "delay":
            if noise.idle_noise_on_delays:
                rho = idle(rho, instr.qubits[0], dur)
        else:
            rho = apply_gate(rho, instr.matrix(), instr.qubits)
            touched.update(instr.qubits)
            if noise.noise_on_gate_durations:
                for q in instr.qubits:
                    rho = idle(rho, q, dur)
        for q in instr.qubits:
            clock[q] = start + dur
    probs = clbit_distribution(rho.probabilities(), circuit)
    if noise.readout:
        probs = apply_readout(probs, circuit, device)
    return probs, rho


def run_noisy(
    circuit: Circuit, noise: NoiseModel, shots: int, seed: int, workers: int = 1
) -> tuple[CountsHistogram, DensityMatrix]:
    probs, rho = noisy_evolution(circuit, noise)
    return sample_counts(probs, shots, seed, workers), rho


def kraus_completeness_error(kraus: Sequence[np.ndarray]) -> float:
    total = sum(k.conj().T @ k for k in kraus)
    return float(np.linalg.norm(total - np.eye(total.shape[0])))
