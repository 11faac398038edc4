import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from zenosim import circuit as C
from zenosim.circuit import Circuit, CircuitError, Instruction, schedule, unitary_of
from zenosim.device import synthetic_snapshot
from zenosim.qcore import StateVector, global_phase_distance, partial_trace

PX = np.array([[0, 1], [1, 0]], dtype=complex)
PY = np.array([[0, -1j], [1j, 0]])
SP = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0| on the low factor


def test_instruction_validation():
    with pytest.raises(CircuitError):
        Instruction("cz", (0, 1))
    with pytest.raises(CircuitError):
        C.cx(1, 1)
    with pytest.raises(CircuitError):
        C.delay(1.5, 0)
    with pytest.raises(CircuitError):
        C.delay(-16, 0)
    with pytest.raises(CircuitError):
        C.rz(float("inf"), 0)
    assert C.delay(32.0, 0).params == (32,)


def test_gate_after_measure_is_rejected():
    circ = Circuit(2, 2, (C.x(0), C.measure(0, 0)))
    with pytest.raises(CircuitError):
        circ.append(C.x(0))
    circ.append(C.barrier(0, 1))
    circ.append(C.x(1))


def test_out_of_range_indices():
    with pytest.raises(CircuitError):
        Circuit(2, 1, (C.x(2),))
    with pytest.raises(CircuitError):
        Circuit(2, 1, (C.measure(0, 1),))


def test_cx_matches_projector_form():
    p0, p1 = np.diag([1, 0]), np.diag([0, 1])
    # control is the gate's low qubit: kron(high, low)
    expected = np.kron(np.eye(2), p0) + np.kron(PX, p1)
    assert np.allclose(C.CX, expected)


def test_ecr_is_cx_equivalent():
    # ECR = X(0) CX (S(0) (x) SX(1))
    s = np.diag([1, 1j])
    rhs = np.kron(np.eye(2), C.X) @ C.CX @ np.kron(C.SX, s)
    assert global_phase_distance(C.ECR, rhs) < 1e-12


@given(st.floats(-10, 10))
def test_xy_is_exchange_propagator(beta):
    h = np.kron(SP, SP.conj().T) + np.kron(SP.conj().T, SP)
    assert np.allclose(C.xy_matrix(beta), expm(-0.5j * beta * h), atol=1e-12)


def test_swap_from_three_cx():
    circ = Circuit(2, 0, (C.cx(0, 1), C.cx(1, 0), C.cx(0, 1)))
    assert np.array_equal(unitary_of(circ), C.SWAP)


def test_unitary_of_rejects_measure_and_size():
    with pytest.raises(CircuitError):
        unitary_of(Circuit(1, 1, (C.measure(0, 0),)))
    with pytest.raises(CircuitError):
        unitary_of(Circuit(7, 0, ()))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_unitary_of_matches_statevector_run(seed):
    rng = np.random.default_rng(seed)
    instrs = []
    for _ in range(8):
        a, b = (int(q) for q in rng.permutation(3)[:2])
        instrs.append(C.cx(a, b) if rng.random() < 0.4 else C.u3(*rng.uniform(-3, 3, 3), a))
    circ = Circuit(3, 0, tuple(instrs))
    psi = StateVector.basis(3, 5)
    assert np.allclose(C.run_statevector(circ, psi).data, unitary_of(circ) @ psi.data, atol=1e-12)


instruction_strategy = st.one_of(
    st.builds(lambda t, p, l, q: C.u3(t, p, l, q), st.floats(-7, 7), st.floats(-7, 7), st.floats(-7, 7), st.integers(0, 2)),
    st.builds(lambda a, b: C.cx(a, (a + b) % 3), st.integers(0, 2), st.integers(1, 2)),
    st.builds(lambda d, q: C.delay(d, q), st.integers(0, 10**6), st.integers(0, 2)),
    st.builds(lambda b, q: C.xy(b, q, (q + 1) % 3), st.floats(-7, 7), st.integers(0, 2)),
)


@given(st.lists(instruction_strategy, max_size=12))
def test_json_round_trip(instrs):
    circ = Circuit(3, 3, tuple(instrs) + tuple(C.measure(q, q) for q in range(3)))
    back = Circuit.from_json(circ.to_json())
    assert back == circ
    assert back.to_json() == circ.to_json()


def test_json_schema_is_checked():
    doc = Circuit(1, 0, (C.x(0),)).to_dict()
    doc["schema"] = "other/9"
    with pytest.raises(CircuitError):
        Circuit.from_dict(doc)


def test_asap_schedule():
    dev = synthetic_snapshot(3)
    circ = Circuit(3, 3, (C.x(0), C.delay(160, 1), C.cx(0, 1), C.rz(1.0, 2), C.measure(0, 0)))
    sched = schedule(circ, dev)
    x_dt, cx_dt = dev.duration("x", (0,)), dev.duration("cx", (0, 1))
    assert sched.starts == (0, 0, max(x_dt, 160), 0, max(x_dt, 160) + cx_dt)
    assert sched.durations[3] == 0
    assert sched.total_duration == sched.starts[-1] + dev.duration("measure", (0,))


@settings(max_examples=100)
@given(st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_ancilla_cnot_is_dephasing(pa, phase):
    alpha = math.sqrt(pa)
    beta = math.sqrt(1 - pa) * np.exp(1j * phase)
    psi = StateVector(np.array([alpha, beta]))
    # system is qubit 0, ancilla qubit 1 starts in |0>
    joint = C.run_statevector(Circuit(2, 0, (C.cx(0, 1),)), StateVector(np.kron([1, 0], psi.data)))
    reduced = partial_trace(joint.to_density(), [0]).data
    rho = psi.to_density().data
    assert np.allclose(reduced, np.diag(np.diag(rho)), atol=1e-12)
