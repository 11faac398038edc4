"""State-preparation and readout (SPAM) error mitigation.

Calibration prepares each of the ``2^M`` basis states with (noisy) X gates
and measures it, so the calibration matrix ``A`` absorbs preparation errors
as well as readout errors.  Two corrections are offered:

* :func:`mitigate_inverse` applies ``A^{-1}`` and may return negative
  quasi-probabilities;
* :func:`mitigate_constrained` finds the closest valid distribution,
  ``argmin ||A q - p||_2`` over the probability simplex.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import circuit as C
from .circuit import Circuit
from .simulator import CountsHistogram

MAX_CALIBRATION_QUBITS = 7


class MitigationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationMatrix:
    """Column ``j`` is the measured distribution when basis state ``j`` is prepared."""

    matrix: np.ndarray
    shots: int = 0

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float)
        dim = a.shape[0]
        if a.ndim != 2 or a.shape != (dim, dim) or dim & (dim - 1):
            raise MitigationError(f"calibration matrix must be 2^M square, got shape {a.shape}")
        if (a < -1e-12).any() or not np.allclose(a.sum(axis=0), 1.0, atol=1e-9):
            raise MitigationError("calibration columns must be non-negative and sum to 1")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def n_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# M={self.n_qubits},shots={self.shots}\n")
        for row in self.matrix:
            out.write(",".join(repr(float(x)) for x in row) + "\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CalibrationMatrix":
        header, _, body = text.partition("\n")
        if not header.startswith("#"):
            raise MitigationError("calibration CSV must start with a '# M=...,shots=...' header")
        fields = dict(item.split("=") for item in header[1:].strip().split(","))
        matrix = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        cal = cls(matrix, int(fields["shots"]))
        if cal.n_qubits != int(fields["M"]):
            raise MitigationError(f"header says M={fields['M']} but matrix is {matrix.shape}")
        return cal


def build_calibration_circuits(m: int) -> list[Circuit]:
    """Circuit ``j`` prepares basis state ``|j>`` (X on every set bit) and measures all qubits."""
    if not 1 <= m <= MAX_CALIBRATION_QUBITS:
        raise MitigationError(f"calibration supports 1..{MAX_CALIBRATION_QUBITS} qubits, got {m}")
    circuits = []
    for j in range(1 << m):
        prep = [C.x(q) for q in range(m) if j >> q & 1]
        meas = [C.measure(q, q) for q in range(m)]
        circuits.append(Circuit(m, m, tuple(prep + meas)))
    return circuits


def assemble_matrix(histograms: Sequence[CountsHistogram]) -> CalibrationMatrix:
    count = len(histograms)
    if count < 2 or count & (count - 1):
        raise MitigationError(f"need 2^M calibration histograms, got {count}")
    m = count.bit_length() - 1
    shots = {h.shots for h in histograms}
    if len(shots) != 1:
        raise MitigationError(f"calibration histograms use inconsistent shot counts {sorted(shots)}")
    if any(h.n_bits != m for h in histograms):
        raise MitigationError(f"calibration histograms must have {m}-bit outcomes")
    return CalibrationMatrix(np.column_stack([h.probabilities() for h in histograms]), shots.pop())


def mitigate_inverse(cal: CalibrationMatrix, p_meas: np.ndarray) -> np.ndarray:
    """Quasi-distribution ``A^{-1} p``; entries may be negative, the sum stays 1."""
    a = cal.matrix
    p = np.asarray(p_meas, dtype=float)
    if p.shape != (a.shape[0],):
        raise MitigationError(f"distribution of length {p.size} does not match a {a.shape[0]}-state calibration")
    if cal.condition_number > 1e12:
        raise MitigationError(f"calibration matrix is singular (condition number {cal.condition_number:.3g})")
    return np.linalg.solve(a, p)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{q >= 0, sum q = 1}`` (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    k = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / k > 0)
    return np.maximum(v - css[rho - 1] / rho, 0.0)


def _kkt_polish(a: np.ndarray, p: np.ndarray, support: np.ndarray) -> np.ndarray | None:
    """Exact minimiser restricted to ``support`` with the sum constraint, if feasible."""
    s = np.flatnonzero(support)
    k = s.size
    sub = a[:, s]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = sub.T @ sub
    kkt[:k, k] = kkt[k, :k] = 1.0
    rhs = np.append(sub.T @ p, 1.0)
    try:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None
    if (sol[:k] < 0).any():
        return None
    q = np.zeros(a.shape[1])
    q[s] = sol[:k]
    return q


def _is_optimal(a: np.ndarray, p: np.ndarray, q: np.ndarray, tol: float) -> bool:
    grad = a.T @ (a @ q - p)
    on = q > 0
    nu = -grad[on].mean()
    return bool(np.all(np.abs(grad[on] + nu) <= tol) and np.all(grad[~on] + nu >= -tol))


def mitigate_constrained(
    cal: CalibrationMatrix, p_meas: np.ndarray, max_iter: int = 100_000, tol: float = 1e-13
) -> np.ndarray:
    """Closest valid distribution: ``argmin ||A q - p||_2`` subject to ``q >= 0, sum q = 1``.

    Accelerated projected gradient identifies the support; an exact solve of
    the optimality conditions on that support then removes iteration error.
    """
    a = cal.matrix
    p = np.asarray(p_meas, dtype=float)
    if p.shape != (a.shape[0],):
        raise MitigationError(f"distribution of length {p.size} does not match a {a.shape[0]}-state calibration")
    try:
        q_inv = np.linalg.solve(a, p)
        if q_inv.min() >= 0:
            return q_inv / q_inv.sum()
        start = project_simplex(q_inv)
    except np.linalg.LinAlgError:
        start = project_simplex(p)

    lipschitz = np.linalg.norm(a, 2) ** 2
    q = y = start
    momentum = 1.0
    for it in range(max_iter):
        grad = a.T @ (a @ y - p)
        q_next = project_simplex(y - grad / lipschitz)
        m_next = (1 + math.sqrt(1 + 4 * momentum**2)) / 2
        y = q_next + (momentum - 1) / m_next * (q_next - q)
        shift = np.abs(q_next - q).max()
        q, momentum = q_next, m_next
        if it % 50 == 49 or shift < tol:
            polished = _kkt_polish(a, p, q > 0)
            if polished is not None and _is_optimal(a, p, polished, 1e-11):
                return polished / polished.sum()
            if shift < tol:
                if _is_optimal(a, p, q, 1e-9):
                    return q / q.sum()
                # restart momentum when stalled away from the optimum
                y, momentum = q, 1.0
    raise MitigationError(f"constrained mitigation did not converge in {max_iter} iterations")


def fidelity(p: np.ndarray, q: np.ndarray, with_flag: bool = False):
    """Classical fidelity ``(sum_i sqrt(p_i q_i))^2``.

    Negative entries (quasi-probabilities) are clipped to zero and the vector
    renormalised first; ``with_flag=True`` also returns whether that happened.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise MitigationError(f"length mismatch: {p.size} vs {q.size}")
    clipped = bool((p < 0).any() or (q < 0).any())
    p = np.clip(p, 0, None)
    q = np.clip(q, 0, None)
    p, q = p / p.sum(), q / q.sum()
    f = float(min(np.sum(np.sqrt(p * q)) ** 2, 1.0))
    return (f, clipped) if with_flag else f


def mitigation_report(
    cal: CalibrationMatrix,
    p_raw: np.ndarray,
    p_ideal: np.ndarray,
    survival=None,
) -> dict:
    """Raw, inverse and constrained distributions scored against the ideal one.

    ``survival`` maps a distribution to a survival probability; when given,
    the report also carries that number for every distribution.
    """
    p_raw = np.asarray(p_raw, dtype=float)
    p_ideal = np.asarray(p_ideal, dtype=float)
    inverse = mitigate_inverse(cal, p_raw)
    constrained = mitigate_constrained(cal, p_raw)
    dists = {"ideal": p_ideal, "raw": p_raw, "inverse": inverse, "constrained": constrained}
    report = {
        "M": cal.n_qubits,
        "calibration_shots": cal.shots,
        "condition_number": cal.condition_number,
        "distributions": {k: [float(x) for x in v] for k, v in dists.items()},
        "fidelity": {},
        "clipped": {},
    }
    for key in ("raw", "inverse", "constrained"):
        f, clipped = fidelity(dists[key], p_ideal, with_flag=True)
        report["fidelity"][key] = f
        report["clipped"][key] = clipped
    if survival is not None:
        report["survival"] = {k: float(survival(v)) for k, v in dists.items()}
    return report
