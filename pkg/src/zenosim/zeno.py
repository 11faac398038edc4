"""Quantum Zeno experiments: circuit builders, closed-form curves, fitting.

Units: times in microseconds, energies and couplings in rad/us, hbar = 1.

Survival is read off the whole measurement record.  Qubit 0 is the system;
qubits ``1..N`` are the ancillas that record it after each segment (their
clbits have the same indices).  A shot *survives* when the system bit and
every ancilla bit equal the initial state, i.e. the system was found
undisturbed at each of the N measurements.  That is the event whose
probability is ``[p(t/N)]^N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import circuit as C
from .circuit import Circuit
from .device import DeviceSnapshot
from .qcore import StateVector
from .simulator import CountsHistogram
from .transpiler import lower, quantize_dt

DEFAULT_SHOTS = 20000
MAX_ANCILLAS = 6


class ZenoError(ValueError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class RabiSpec:
    theta: float
    n_measurements: int
    shots: int = DEFAULT_SHOTS
    max_ancillas: int = MAX_ANCILLAS

    def __post_init__(self):
        if not 0 < self.theta <= 2 * math.pi:
            raise ZenoError(f"theta must lie in (0, 2pi], got {self.theta}")
        if self.n_measurements < 0:
            raise ZenoError("n_measurements must be >= 0")
        if self.n_measurements > self.max_ancillas:
            raise ZenoError(f"{self.n_measurements} measurements exceed the ancilla budget of {self.max_ancillas}")
        if self.shots < 1:
            raise ZenoError("shots must be >= 1")


@dataclass(frozen=True)
class DecaySpec:
    """Free decay from |1> over ``total_time_us`` with N equally spaced measurements.

    ``coupling`` (g, rad/us) selects the pseudomode model; ``None`` selects
    plain device noise, where each segment is a delay.
    """

    total_time_us: float
    n_measurements: int
    coupling: float | None = None
    shots: int = DEFAULT_SHOTS

    def __post_init__(self):
        if not self.total_time_us > 0:
            raise ZenoError(f"total_time_us must be positive, got {self.total_time_us}")
        if self.n_measurements < 1:
            raise ZenoError("n_measurements must be >= 1")
        if self.coupling is not None and not self.coupling > 0:
            raise ZenoError("coupling must be positive")

    @property
    def pseudomode(self) -> bool:
        return self.coupling is not None


@dataclass(frozen=True)
class SurvivalPoint:
    t_us: float
    n_measurements: int
    p: float
    stderr: float
    shots: int = DEFAULT_SHOTS


@dataclass(frozen=True)
class ZenoFit:
    T_us: float
    sigma_us: float
    residual_norm: float
    n_measurements: int
    iterations: int = 0


def build_rabi_circuit(spec: RabiSpec) -> Circuit:
    """N rotations by theta/N about the Rabi axis, each recorded by a CNOT onto a fresh ancilla."""
    n = spec.n_measurements
    instrs: list[C.Instruction] = []
    if n == 0:
        instrs.append(C.u3(spec.theta, -math.pi / 2, math.pi / 2, 0))
    for k in range(1, n + 1):
        instrs.append(C.u3(spec.theta / n, -math.pi / 2, math.pi / 2, 0))
        instrs.append(C.cx(0, k))
    instrs += [C.measure(q, q) for q in range(n + 1)]
    return Circuit(n + 1, n + 1, tuple(instrs))


def centered_layout(device: DeviceSnapshot, n_logical: int) -> list[int]:
    """Put logical qubit 0 on the best-connected physical qubit, the rest by distance.

    Ties in degree go to the larger index (qubit 5 on the nairobi-like map).
    """
    adj = device.coupling.adjacency
    center = max(range(device.n_qubits), key=lambda q: (len(adj[q]), q))
    dist = device.coupling.distances_from(center)
    order = sorted(dist, key=lambda q: (dist[q], q))
    if len(order) < n_logical:
        raise ZenoError(f"{device.name}: only {len(order)} qubits reachable, need {n_logical}")
    return order[:n_logical]


def build_decay_circuit(
    spec: DecaySpec, device: DeviceSnapshot | None = None, layout: Sequence[int] | None = None
) -> Circuit:
    """Free-decay circuit: X on the system, then N segments each followed by a CNOT record.

    Pseudomode: each segment is ``XY(2 g t / N)`` between the system and an
    environment qubit (the last qubit, never measured).

    Device noise: each segment is a delay on the system.  All N delays are
    equal and sized so that the lowered circuit's scheduled duration
    (gates, SWAPs, delays and readout) is ``total_time_us``.  ``layout``
    defaults to :func:`centered_layout` and must match the one used to lower.
    """
    n = spec.n_measurements
    if spec.pseudomode:
        budget = device.n_qubits if device is not None else 10
        if n + 2 > budget:
            raise ZenoError(f"pseudomode decay with N={n} needs {n + 2} qubits, {budget} available")
        env = n + 1
        beta = 2 * spec.coupling * spec.total_time_us / n
        instrs = [C.x(0)]
        for k in range(1, n + 1):
            instrs += [C.xy(beta, 0, env), C.cx(0, k)]
        instrs += [C.measure(q, q) for q in range(n + 1)]
        return Circuit(n + 2, n + 1, tuple(instrs))

    if device is None:
        raise ZenoError("device-noise decay needs a device snapshot")
    if n + 1 > device.n_qubits:
        raise ZenoError(f"decay with N={n} needs {n + 1} qubits, {device.name} has {device.n_qubits}")

    def make(delay_dt: int) -> Circuit:
        instrs = [C.x(0)]
        for k in range(1, n + 1):
            instrs += [C.delay(delay_dt, 0), C.cx(0, k)]
        instrs += [C.measure(q, q) for q in range(n + 1)]
        return Circuit(n + 1, n + 1, tuple(instrs))

    layout = list(layout) if layout is not None else centered_layout(device, n + 1)
    overhead = lower(make(0), device, layout).schedule.total_duration
    target = int(round(spec.total_time_us * 1e3 / device.dt_ns))
    per_segment = int(round((target - overhead) / n))
    if quantize_dt(per_segment, device.granularity_dt) <= 0:
        raise ZenoError(
            f"t={spec.total_time_us} us leaves no delay: gates and readout alone take "
            f"{overhead * device.dt_ns * 1e-3:.3f} us"
        )
    return make(per_segment)


def survival_probability(
    hist: CountsHistogram, system_bit: int = 0, target: int = 0, record_bits: Sequence[int] = ()
) -> tuple[float, float]:
    """Fraction of shots whose system bit, and every record bit, reads ``target``.

    Returns ``(p, stderr)`` with ``stderr = sqrt(p (1 - p) / shots)``.
    """
    if hist.shots < 1 or not hist.counts:
        raise ZenoError("empty histogram")
    bits = [system_bit, *record_bits]
    for b in bits:
        if not 0 <= b < hist.n_bits:
            raise ZenoError(f"bit {b} out of range for {hist.n_bits}-bit outcomes")
    want = str(target)
    hits = sum(c for key, c in hist.counts.items() if all(key[-1 - b] == want for b in bits))
    p = hits / hist.shots
    return p, math.sqrt(p * (1 - p) / hist.shots)


def survival_from_distribution(
    probs: np.ndarray, system_bit: int = 0, target: int = 0, record_bits: Sequence[int] = ()
) -> float:
    """Exact counterpart of :func:`survival_probability` for a distribution."""
    probs = np.asarray(probs)
    bits = [system_bit, *record_bits]
    idx = np.arange(probs.size)
    mask = np.ones(probs.size, dtype=bool)
    for b in bits:
        mask &= (idx >> b & 1) == target
    return float(probs[mask].sum())


def stderr_of(p: float, shots: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / shots)


def theory_rabi(theta: float, n: int) -> float:
    """``[cos^2(theta / 2N)]^N``: survival of N equally spaced measurements."""
    if n < 1:
        raise ZenoError("theory_rabi needs N >= 1; without measurements use cos^2(theta/2)")
    return math.cos(theta / (2 * n)) ** (2 * n)


def rabi_survival_theory(theta: float, n: int) -> float:
    return math.cos(theta / 2) ** 2 if n == 0 else theory_rabi(theta, n)


def theory_rabi_limit(theta: float, n: int) -> float:
    """Large-N form ``exp(-theta^2 / 4N)`` (``theta = 2 omega t``)."""
    return math.exp(-theta**2 / (4 * n))


def theory_decay(t_us: float, n: int, T_us: float) -> float:
    """``(1 - t^2 / (N^2 T^2))^N``, valid for ``t < N T``."""
    if n < 1:
        raise ZenoError("N must be >= 1")
    if t_us >= n * T_us:
        raise ZenoError(f"t={t_us} is outside the quadratic regime t < N T = {n * T_us}")
    return float((1 - (t_us / (n * T_us)) ** 2) ** n)


def theory_decay_limit(t_us: float, n: int, T_us: float) -> float:
    return math.exp(-(t_us**2) / (n * T_us**2))


def pseudomode_survival(t_us: float, n: int, g: float) -> float:
    """Exact pseudomode survival ``cos^{2N}(g t / N)``."""
    return math.cos(g * t_us / n) ** (2 * n)


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


def rabi_hamiltonian(omega: float) -> np.ndarray:
    return omega * SIGMA_X


def pseudomode_hamiltonian(g: float) -> np.ndarray:
    """Exchange coupling ``g (s+ s- + s- s+)``; qubit 0 is the system, qubit 1 the mode."""
    h = np.zeros((4, 4), dtype=complex)
    h[1, 2] = h[2, 1] = g
    return h


def zeno_time(hamiltonian: np.ndarray, psi0: StateVector | np.ndarray) -> float:
    """``T = 1 / sqrt(<H^2> - <H>^2)`` for the initial state (hbar = 1)."""
    h = np.asarray(hamiltonian, dtype=complex)
    psi = psi0.data if isinstance(psi0, StateVector) else np.asarray(psi0, dtype=complex)
    if h.shape != (psi.size, psi.size):
        raise ZenoError(f"Hamiltonian shape {h.shape} does not match a state of size {psi.size}")
    if not np.allclose(h, h.conj().T, atol=1e-12):
        raise ZenoError("Hamiltonian must be Hermitian")
    psi = psi / np.linalg.norm(psi)
    h_psi = h @ psi
    mean = np.vdot(psi, h_psi).real
    var = np.vdot(h_psi, h_psi).real - mean**2
    if var <= 1e-14 * max(1.0, np.vdot(h_psi, h_psi).real):
        raise ZenoError("energy variance vanishes: the state is stationary and has no Zeno time")
    return 1 / math.sqrt(var)


def _model(t: np.ndarray, n: int, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Model values and their derivative with respect to T."""
    x = (t / (n * T)) ** 2
    base = 1 - x
    value = base**n
    deriv = n * base ** (n - 1) * 2 * x / T
    return value, deriv


def fit_zeno_time(points: Sequence[SurvivalPoint], n: int, max_iter: int = 200, T0: float | None = None) -> ZenoFit:
    """Weighted least-squares fit of ``(1 - t^2/(N^2 T^2))^N`` over the Zeno time T.

    Weights are ``1/stderr^2``; points with zero stderr borrow the smallest
    positive one.  Levenberg-Marquardt on the single parameter with the
    analytic derivative, kept inside the domain ``T > t_max / N``.  The
    uncertainty is ``(J^T W J)^{-1/2}`` at the optimum.
    """
    if len(points) < 3:
        raise ZenoError(f"need at least 3 points to fit, got {len(points)}")
    if n < 1:
        raise ZenoError("N must be >= 1")
    t = np.array([pt.t_us for pt in points], dtype=float)
    y = np.array([pt.p for pt in points], dtype=float)
    err = np.array([pt.stderr for pt in points], dtype=float)
    positive = err[err > 0]
    if positive.size == 0 or not np.all(np.isfinite(err)):
        raise FitError("degenerate weights: no point carries a positive finite stderr")
    sw = 1 / np.where(err > 0, err, positive.min())
    if np.ptp(t) == 0:
        raise FitError("all points share one time; T is not identifiable")

    t_floor = t.max() / n
    if T0 is None:
        T0 = _initial_guess(t, y, n)
    if not T0 > t_floor:
        T0 = 2 * t_floor

    def cost_at(T):
        f, d = _model(t, n, T)
        r = sw * (y - f)
        return r, -sw * d

    T = T0
    r, J = cost_at(T)
    cost = r @ r
    damping = 1e-3
    for it in range(1, max_iter + 1):
        jtj = J @ J
        grad = J @ r
        if jtj == 0:
            raise FitError("model is flat in T on these points")
        step = -grad / (jtj * (1 + damping))
        T_new = T + step
        if T_new <= t_floor:
            damping *= 10
            if damping > 1e12:
                raise FitError("fit cannot move without leaving t < N T")
            continue
        r_new, J_new = cost_at(T_new)
        cost_new = r_new @ r_new
        if cost_new <= cost:
            converged = abs(step) <= 1e-13 * T or (damping < 1 and cost - cost_new <= 1e-15 * cost)
            T, r, J, cost = T_new, r_new, J_new, cost_new
            damping = max(damping / 10, 1e-12)
            if converged:
                return ZenoFit(float(T), float(1 / math.sqrt(J @ J)), float(math.sqrt(cost)), n, it)
        else:
            damping *= 10
            if damping > 1e12:
                # no downhill step exists: stationary point reached
                return ZenoFit(float(T), float(1 / math.sqrt(J @ J)), float(math.sqrt(cost)), n, it)
    raise FitError(f"no convergence after {max_iter} iterations (T={T})")


def _initial_guess(t: np.ndarray, y: np.ndarray, n: int) -> float:
    """Invert the model at the earliest informative point."""
    for i in np.argsort(t):
        if t[i] > 0 and 0 < y[i] < 1:
            return float(t[i] / (n * math.sqrt(1 - y[i] ** (1 / n))))
    return 2 * float(t.max()) / n


def fit_report(fit: ZenoFit, device: str, qubit: int | str, obs_time_us: float, obs_time_err_us: float = 0.0) -> dict:
    """Fields mirroring a Zeno-time table row."""
    return {
        "device": device,
        "qubit": qubit,
        "obs_time_us": obs_time_us,
        "obs_time_err_us": obs_time_err_us,
        "N": fit.n_measurements,
        "T_us": fit.T_us,
        "sigma_us": fit.sigma_us,
        "residual_norm": fit.residual_norm,
        "iterations": fit.iterations,
    }
