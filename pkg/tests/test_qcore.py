import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from zenosim.qcore import (
    DensityMatrix,
    QuantumError,
    StateVector,
    apply_gate,
    apply_kraus,
    global_phase_distance,
    is_unitary,
    marginal_probabilities,
    partial_trace,
    tensor,
    u3_matrix,
)

I2 = np.eye(2)
PX = np.array([[0, 1], [1, 0]], dtype=complex)
PY = np.array([[0, -1j], [1j, 0]])
PZ = np.diag([1.0, -1.0]).astype(complex)

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def embed(u, targets, n):
    """Full matrix of a gate by explicit permutation of basis states (little-endian)."""
    k = len(targets)
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        sub_in = sum(((col >> t) & 1) << i for i, t in enumerate(targets))
        rest = col & ~sum(1 << t for t in targets)
        for sub_out in range(1 << k):
            row = rest | sum(((sub_out >> i) & 1) << t for i, t in enumerate(targets))
            out[row, col] += u[sub_out, sub_in]
    return out


def random_state(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_unitary(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / abs(np.diag(r)))


def test_zero_state_and_basis():
    assert StateVector.zero(3).probabilities()[0] == 1.0
    assert StateVector.basis(2, 2).probabilities().tolist() == [0, 0, 1, 0]
    assert DensityMatrix.zero(2).is_valid()


def test_state_rejects_bad_input():
    with pytest.raises(QuantumError):
        StateVector(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(QuantumError):
        StateVector(np.array([1.0, 1.0]))


@given(angles, angles, angles)
def test_u3_matches_euler_rotations(theta, phi, lam):
    rz = lambda a: expm(-0.5j * a * PZ)
    ry = expm(-0.5j * theta * PY)
    assert global_phase_distance(u3_matrix(theta, phi, lam), rz(phi) @ ry @ rz(lam)) < 1e-10
    assert is_unitary(u3_matrix(theta, phi, lam))


def test_u3_rejects_nan():
    with pytest.raises(QuantumError):
        u3_matrix(float("nan"), 0, 0)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_apply_gate_matches_explicit_embedding(seed, n):
    rng = np.random.default_rng(seed)
    targets = [int(t) for t in rng.permutation(n)[:2]]
    u = random_unitary(rng, 4)
    psi = random_state(rng, n)
    got = apply_gate(StateVector(psi), u, targets).data
    assert np.allclose(got, embed(u, targets, n) @ psi, atol=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_density_and_state_evolution_agree(seed):
    rng = np.random.default_rng(seed)
    psi = StateVector(random_state(rng, 3))
    u = random_unitary(rng, 4)
    rho = apply_gate(psi.to_density(), u, [2, 0])
    assert np.allclose(rho.data, apply_gate(psi, u, [2, 0]).to_density().data, atol=1e-12)


def test_gate_target_order_is_low_qubit_first():
    cx = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]])
    # control on qubit 1, target qubit 0: |10> (index 2) -> |11> (index 3)
    out = apply_gate(StateVector.basis(2, 2), cx, [1, 0])
    assert out.probabilities()[3] == pytest.approx(1.0)


def test_apply_gate_errors():
    with pytest.raises(QuantumError):
        apply_gate(StateVector.zero(2), np.eye(4), [0, 0])
    with pytest.raises(QuantumError):
        apply_gate(StateVector.zero(2), np.eye(2), [2])


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_partial_trace_matches_loop(seed):
    rng = np.random.default_rng(seed)
    n = 3
    psi = random_state(rng, n)
    rho = np.outer(psi, psi.conj())
    keep = [2, 0]
    expected = np.zeros((4, 4), dtype=complex)
    for r in range(8):
        for c in range(8):
            if (r >> 1) & 1 != (c >> 1) & 1:
                continue
            rr = ((r >> 2) & 1) | ((r & 1) << 1)
            cc = ((c >> 2) & 1) | ((c & 1) << 1)
            expected[rr, cc] += rho[r, c]
    assert np.allclose(partial_trace(DensityMatrix(rho), keep).data, expected, atol=1e-12)


def test_tensor_puts_first_argument_low():
    a = StateVector.basis(1, 1)
    b = StateVector.basis(1, 0)
    assert tensor(a, b).probabilities().tolist() == [0, 1, 0, 0]


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_partial_trace_of_product_state(seed):
    rng = np.random.default_rng(seed)
    a = StateVector(random_state(rng, 1))
    b = StateVector(random_state(rng, 2))
    rho = tensor(a, b).to_density()
    assert np.allclose(partial_trace(rho, [0]).data, a.to_density().data, atol=1e-12)
    assert np.allclose(partial_trace(rho, [1, 2]).data, b.to_density().data, atol=1e-12)


def test_marginal_probabilities_reorders():
    probs = np.zeros(8)
    probs[0b110] = 1.0
    assert marginal_probabilities(probs, [1]).tolist() == [0, 1]
    assert marginal_probabilities(probs, [0, 2]).tolist() == [0, 0, 1, 0]


@settings(max_examples=30)
@given(st.floats(0, 1))
def test_kraus_channel_preserves_trace(gamma):
    kraus = [np.array([[1, 0], [0, math.sqrt(1 - gamma)]]), np.array([[0, math.sqrt(gamma)], [0, 0]])]
    rho = StateVector(np.array([0.6, 0.8j])).to_density()
    out = apply_kraus(tensor(rho, DensityMatrix.zero(1)), kraus, [0])
    assert out.is_valid()
    assert out.probabilities()[1] == pytest.approx(0.64 * (1 - gamma))


def test_global_phase_distance_ignores_phase():
    u = reduce(np.kron, [PX, PZ])
    assert global_phase_distance(u, np.exp(0.7j) * u) < 1e-12
    assert global_phase_distance(u, np.eye(4)) > 1
