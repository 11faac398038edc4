"""Dense linear algebra for small quantum registers.

Qubit ordering is little-endian throughout the package: qubit 0 is the least
significant bit of a basis-state index, so ``|q2 q1 q0>`` has index
``4*q2 + 2*q1 + q0``.  Bitstrings are printed the same way, highest qubit
(or clbit) first, lowest last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

ATOL = 1e-10


class QuantumError(ValueError):
    """Invalid argument or violated invariant in a quantum-state operation."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


def _n_qubits_of(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise QuantumError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state over ``n_qubits`` qubits, little-endian amplitudes."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(np.ravel(self.data))
        _n_qubits_of(data.size)
        norm = float(np.vdot(data, data).real)
        if abs(norm - 1) > ATOL:
            raise QuantumError(f"state is not normalised: sum |a|^2 = {norm:.12g}")
        object.__setattr__(self, "data", data)

    @property
    def n_qubits(self) -> int:
        return _n_qubits_of(self.data.size)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        data = np.zeros(1 << n_qubits, dtype=complex)
        data[0] = 1.0
        return cls(data)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        data = np.zeros(1 << n_qubits, dtype=complex)
        data[index] = 1.0
        return cls(data)

    def norm(self) -> float:
        return float(np.vdot(self.data, self.data).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.data) ** 2

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.data, self.data.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Mixed state over ``n_qubits`` qubits as a dense ``2^n x 2^n`` matrix."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise QuantumError(f"density matrix must be square, got shape {data.shape}")
        _n_qubits_of(data.shape[0])
        if abs(np.trace(data) - 1) > ATOL:
            raise QuantumError(f"density matrix trace is {complex(np.trace(data)):.12g}, expected 1")
        object.__setattr__(self, "data", data)

    @property
    def n_qubits(self) -> int:
        return _n_qubits_of(self.data.shape[0])

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        return StateVector.zero(n_qubits).to_density()

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.data).real, 0.0, None)

    def is_valid(self, atol: float = ATOL) -> bool:
        rho = self.data
        if not np.allclose(rho, rho.conj().T, atol=atol):
            return False
        if abs(np.trace(rho) - 1) > atol:
            return False
        return bool(np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -1e-9)


State = Union[StateVector, DensityMatrix]


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    """Single-qubit rotation

    ``[[cos(t/2), -e^{i lam} sin(t/2)], [e^{i phi} sin(t/2), e^{i(phi+lam)} cos(t/2)]]``.
    """
    for name, value in (("theta", theta), ("phi", phi), ("lambda", lam)):
        if not math.isfinite(value):
            raise QuantumError(f"{name} must be finite, got {value}")
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=complex,
    )


def is_unitary(u: np.ndarray, atol: float = ATOL) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and bool(
        np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) <= atol
    )


def _check_targets(targets: Sequence[int], n_qubits: int, k: int) -> list[int]:
    targets = [int(t) for t in targets]
    if len(targets) != k:
        raise QuantumError(f"gate acts on {k} qubit(s) but {len(targets)} target(s) given")
    if len(set(targets)) != len(targets):
        raise QuantumError(f"duplicate targets {targets}")
    for t in targets:
        if not 0 <= t < n_qubits:
            raise QuantumError(f"qubit index {t} out of range for {n_qubits} qubits")
    return targets


def apply_to_axes(tensor: np.ndarray, u: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract ``u`` into the given tensor axes.

    ``axes`` lists the tensor axis for each gate qubit, gate qubit 0 first
    (little-endian inside the gate matrix too).
    """
    k = len(axes)
    u_t = np.asarray(u).reshape([2] * (2 * k))
    # gate tensor axes run most-significant first, so reverse the target order
    src = list(reversed(axes))
    out = np.tensordot(u_t, tensor, axes=(list(range(k, 2 * k)), src))
    return np.moveaxis(out, list(range(k)), src)


def apply_gate(state: State, u: np.ndarray, targets: Sequence[int]) -> State:
    """Apply unitary ``u`` to ``targets``; ``targets[0]`` is the gate's low qubit."""
    u = np.asarray(u, dtype=complex)
    k = _n_qubits_of(u.shape[0])
    n = state.n_qubits
    targets = _check_targets(targets, n, k)
    if isinstance(state, StateVector):
        psi = state.data.reshape([2] * n)
        psi = apply_to_axes(psi, u, [n - 1 - t for t in targets])
        return StateVector(psi.reshape(-1))
    rho = state.data.reshape([2] * (2 * n))
    rho = apply_to_axes(rho, u, [n - 1 - t for t in targets])
    rho = apply_to_axes(rho, u.conj(), [2 * n - 1 - t for t in targets])
    dim = 1 << n
    return DensityMatrix(rho.reshape(dim, dim))


def apply_kraus(rho: DensityMatrix, kraus: Sequence[np.ndarray], targets: Sequence[int]) -> DensityMatrix:
    """Apply the channel ``rho -> sum_k K rho K^dagger`` on ``targets``."""
    n = rho.n_qubits
    k = _n_qubits_of(np.asarray(kraus[0]).shape[0])
    targets = _check_targets(targets, n, k)
    row_axes = [n - 1 - t for t in targets]
    col_axes = [2 * n - 1 - t for t in targets]
    tensor = rho.data.reshape([2] * (2 * n))
    out = np.zeros_like(tensor)
    for op in kraus:
        op = np.asarray(op, dtype=complex)
        term = apply_to_axes(tensor, op, row_axes)
        out += apply_to_axes(term, op.conj(), col_axes)
    dim = 1 << n
    return DensityMatrix(out.reshape(dim, dim))


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on ``keep``; ``keep[i]`` becomes qubit ``i`` of the result."""
    n = rho.n_qubits
    keep = [int(q) for q in keep]
    if not keep:
        raise QuantumError("keep list must be non-empty")
    _check_targets(keep, n, len(keep))
    rows = list(_LETTERS[:n])
    cols = list(_LETTERS[n : 2 * n])
    for q in range(n):
        if q not in keep:
            cols[n - 1 - q] = rows[n - 1 - q]
    out_rows = [rows[n - 1 - q] for q in reversed(keep)]
    out_cols = [cols[n - 1 - q] for q in reversed(keep)]
    spec = "".join(rows) + "".join(cols) + "->" + "".join(out_rows) + "".join(out_cols)
    reduced = np.einsum(spec, rho.data.reshape([2] * (2 * n)))
    dim = 1 << len(keep)
    return DensityMatrix(reduced.reshape(dim, dim))


def tensor(a: State, b: State) -> State:
    """Kronecker product; ``a``'s qubits become the low-order qubits."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(b.data, a.data))
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(np.kron(b.data, a.data))
    raise QuantumError("tensor requires two states of the same kind")


def marginal_probabilities(probs: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Marginal distribution of ``qubits``; ``qubits[i]`` becomes bit ``i``."""
    probs = np.asarray(probs, dtype=float)
    n = _n_qubits_of(probs.size)
    t = probs.reshape([2] * n)
    drop = tuple(n - 1 - q for q in range(n) if q not in qubits)
    t = t.sum(axis=drop) if drop else t
    # remaining axes are ordered by descending qubit index
    remaining = sorted((q for q in range(n) if q in qubits), reverse=True)
    order = [remaining.index(q) for q in reversed(list(qubits))]
    return np.transpose(t, order).reshape(-1)


def global_phase_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Frobenius distance between ``u`` and ``v`` after the best global phase."""
    u = np.asarray(u)
    v = np.asarray(v)
    overlap = np.vdot(v, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v))
