"""Lowering of abstract circuits onto a device snapshot.

Pipeline (see :func:`lower`)::

    decompose_u3 -> route -> quantize_delays -> schedule

Routing is greedy: every two-qubit gate on non-adjacent qubits moves its
first qubit along the shortest coupling path with SWAPs, and the resulting
logical-to-physical permutation persists for the rest of the circuit.
Equivalence is always up to a global phase and that permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import circuit as C
from .circuit import Circuit, CircuitError, Instruction, Schedule, schedule, unitary_of
from .device import DeviceSnapshot, shortest_path
from .qcore import global_phase_distance

PI = math.pi
TWO_QUBIT = ("cx", "ecr", "swap")


class TranspileError(ValueError):
    pass


def _wrap(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(angle, 2 * PI)
    return PI if math.isclose(a, -PI) else a


def u3_params(u: np.ndarray) -> tuple[float, float, float]:
    """Angles (theta, phi, lambda) with ``u = e^{i alpha} U3(theta, phi, lambda)``."""
    u = np.asarray(u, dtype=complex)
    a, b = abs(u[0, 0]), abs(u[1, 0])
    theta = 2 * math.atan2(b, a)
    if b < 1e-12:
        return theta, 0.0, float(np.angle(u[1, 1]) - np.angle(u[0, 0]))
    if a < 1e-12:
        alpha = float(np.angle(-u[0, 1]))
        return theta, float(np.angle(u[1, 0])) - alpha, 0.0
    alpha = float(np.angle(u[0, 0]))
    return theta, float(np.angle(u[1, 0])) - alpha, float(np.angle(-u[0, 1])) - alpha


def decompose_u3(instr: Instruction) -> list[Instruction]:
    """RZ(lam) SX RZ(theta+pi) SX RZ(phi+pi), equal to U3 up to global phase."""
    if instr.kind != "u3":
        raise TranspileError(f"decompose_u3 expects a u3 instruction, got {instr.kind}")
    theta, phi, lam = instr.params
    q = instr.qubits[0]
    return [
        C.rz(_wrap(lam), q),
        C.sx(q),
        C.rz(_wrap(theta + PI), q),
        C.sx(q),
        C.rz(_wrap(phi + PI), q),
    ]


def one_qubit_to_basis(u: np.ndarray, q: int) -> list[Instruction]:
    return decompose_u3(C.u3(*u3_params(u), q))


def decompose_all_u3(circuit: Circuit) -> Circuit:
    out: list[Instruction] = []
    for instr in circuit.instructions:
        out.extend(decompose_u3(instr) if instr.kind == "u3" else [instr])
    return Circuit(circuit.n_qubits, circuit.n_clbits, tuple(out))


def _h(q: int) -> list[Instruction]:
    return [C.rz(PI / 2, q), C.sx(q), C.rz(PI / 2, q)]


class _Emitter:
    """Writes CX/ECR/SWAP onto directed device edges in the device's basis."""

    def __init__(self, device: DeviceSnapshot):
        self.device = device
        self.cmap = device.coupling
        basis = set(device.basis_gates)
        if not {"rz", "sx"} <= basis:
            raise TranspileError(f"{device.name}: basis {sorted(basis)} lacks rz/sx")
        if "cx" in basis:
            self.native = "cx"
        elif "ecr" in basis:
            self.native = "ecr"
        else:
            raise TranspileError(f"{device.name}: basis has no cx or ecr")
        self.has_x = "x" in basis

    def x(self, q: int) -> list[Instruction]:
        return [C.x(q)] if self.has_x else [C.sx(q), C.sx(q)]

    def cx(self, a: int, b: int) -> list[Instruction]:
        """CX(a->b) on an adjacent pair."""
        if not self.cmap.adjacent(a, b):
            raise TranspileError(f"qubits {a} and {b} are not adjacent")
        if self.cmap.has_edge(a, b) and (self.native, (a, b)) in self.device.gate_durations:
            if self.native == "cx":
                return [C.cx(a, b)]
            # CX = X(a) . ECR . (Sdg(a) SXdg(b)), up to phase; SXdg ~ RZ(pi) SX RZ(pi)
            return [C.rz(-PI / 2, a), C.rz(PI, b), C.sx(b), C.rz(PI, b), C.ecr(a, b), *self.x(a)]
        # reverse orientation: CX(a->b) = (H (x) H) CX(b->a) (H (x) H)
        if not self.cmap.has_edge(b, a):
            raise TranspileError(f"no directed edge between {a} and {b}")
        return [*_h(a), *_h(b), *self.cx(b, a), *_h(a), *_h(b)]

    def ecr(self, a: int, b: int) -> list[Instruction]:
        if self.native == "ecr" and self.cmap.has_edge(a, b):
            return [C.ecr(a, b)]
        # ECR = X(a) . CX . (S(a) SX(b)), up to phase
        return [C.rz(PI / 2, a), C.sx(b), *self.cx(a, b), *self.x(a)]

    def cost(self, instrs: Sequence[Instruction]) -> int:
        return sum(self.device.duration(i.kind, i.qubits) for i in instrs)

    def swap(self, a: int, b: int) -> list[Instruction]:
        """SWAP as three alternating CNOTs, in the faster orientation."""
        first = [*self.cx(a, b), *self.cx(b, a), *self.cx(a, b)]
        second = [*self.cx(b, a), *self.cx(a, b), *self.cx(b, a)]
        return second if self.cost(second) < self.cost(first) else first

    def emit(self, kind: str, a: int, b: int) -> list[Instruction]:
        return {"cx": self.cx, "ecr": self.ecr, "swap": self.swap}[kind](a, b)


@dataclass(frozen=True)
class RoutedCircuit:
    """Routing output.

    Layouts map logical qubit ``i`` to a physical qubit.  Both are complete
    permutations of the device's qubits: logical indices past the input
    circuit's width stand for the idle physical qubits.
    """

    circuit: Circuit
    initial_layout: tuple[int, ...]
    final_layout: tuple[int, ...]


def _full_layout(layout: Sequence[int] | None, n_logical: int, n_physical: int) -> list[int]:
    if n_logical > n_physical:
        raise TranspileError(f"circuit needs {n_logical} qubits, device has {n_physical}")
    layout = list(range(n_logical)) if layout is None else [int(p) for p in layout]
    if len(layout) != n_logical:
        raise TranspileError(f"layout has {len(layout)} entries for {n_logical} qubits")
    if len(set(layout)) != len(layout) or any(not 0 <= p < n_physical for p in layout):
        raise TranspileError(f"invalid layout {layout}")
    return layout + [p for p in range(n_physical) if p not in layout]


def route(circuit: Circuit, device: DeviceSnapshot, initial_layout: Sequence[int] | None = None) -> RoutedCircuit:
    """Place two-qubit gates on coupling edges, inserting SWAPs as needed."""
    emitter = _Emitter(device)
    l2p = _full_layout(initial_layout, circuit.n_qubits, device.n_qubits)
    start = tuple(l2p)
    p2l = {p: l for l, p in enumerate(l2p)}
    out: list[Instruction] = []
    for instr in circuit.instructions:
        if len(instr.qubits) == 2 and instr.kind != "barrier":
            if instr.kind not in TWO_QUBIT:
                raise TranspileError(f"cannot route {instr.kind}; only {TWO_QUBIT} are supported")
            la, lb = instr.qubits
            pa, pb = l2p[la], l2p[lb]
            if not device.coupling.adjacent(pa, pb):
                path = shortest_path(device.coupling, pa, pb)
                for u, v in zip(path[:-2], path[1:-1]):
                    out.extend(emitter.swap(u, v))
                    lu, lv = p2l[u], p2l[v]
                    l2p[lu], l2p[lv] = v, u
                    p2l[u], p2l[v] = lv, lu
                pa = l2p[la]
            out.extend(emitter.emit(instr.kind, pa, pb))
        else:
            out.append(instr.remap(l2p))
    routed = Circuit(device.n_qubits, circuit.n_clbits, tuple(out))
    return RoutedCircuit(routed, start, tuple(l2p))


def quantize_dt(count: int, granularity: int) -> int:
    """Nearest multiple of ``granularity``, ties rounding up."""
    return ((2 * count + granularity) // (2 * granularity)) * granularity


def quantize_delays(circuit: Circuit, device: DeviceSnapshot) -> Circuit:
    g = device.granularity_dt
    out = tuple(
        C.delay(quantize_dt(i.params[0], g), i.qubits[0]) if i.kind == "delay" else i
        for i in circuit.instructions
    )
    return Circuit(circuit.n_qubits, circuit.n_clbits, out)


def delay_rounding_errors(circuit: Circuit, device: DeviceSnapshot) -> list[int]:
    """Signed rounding error (quantized minus requested) of each delay, in dt."""
    g = device.granularity_dt
    return [quantize_dt(i.params[0], g) - i.params[0] for i in circuit.instructions if i.kind == "delay"]


@dataclass(frozen=True)
class LoweredCircuit:
    circuit: Circuit
    schedule: Schedule
    initial_layout: tuple[int, ...]
    final_layout: tuple[int, ...]
    delay_errors_dt: tuple[int, ...]

    def report(self, device: DeviceSnapshot) -> dict:
        return {
            "device": device.name,
            "total_duration_dt": self.schedule.total_duration,
            "total_duration_us": self.schedule.total_duration * device.dt_ns * 1e-3,
            "granularity_dt": device.granularity_dt,
            "delay_rounding_errors_dt": list(self.delay_errors_dt),
            "total_delay_error_dt": sum(self.delay_errors_dt),
            "delay_error_bound_dt": len(self.delay_errors_dt) * device.granularity_dt,
            "initial_layout": list(self.initial_layout),
            "final_layout": list(self.final_layout),
            "gate_counts": self.circuit.count_ops(),
        }


def lower(circuit: Circuit, device: DeviceSnapshot, initial_layout: Sequence[int] | None = None) -> LoweredCircuit:
    decomposed = decompose_all_u3(circuit)
    routed = route(decomposed, device, initial_layout)
    errors = delay_rounding_errors(routed.circuit, device)
    quantized = quantize_delays(routed.circuit, device)
    allowed = set(device.basis_gates) | set(C.NON_UNITARY)
    stray = sorted({i.kind for i in quantized.instructions} - allowed)
    if stray:
        raise TranspileError(f"{device.name} cannot execute {stray}")
    sched = schedule(quantized, device)
    return LoweredCircuit(quantized, sched, routed.initial_layout, routed.final_layout, tuple(errors))


def layout_permutation(layout: Sequence[int]) -> np.ndarray:
    """Matrix sending a logical basis state to the physical one under ``layout``."""
    n = len(layout)
    dim = 1 << n
    perm = np.zeros((dim, dim))
    for x in range(dim):
        y = 0
        for logical, physical in enumerate(layout):
            if x >> logical & 1:
                y |= 1 << physical
        perm[y, x] = 1.0
    return perm


def equivalence_error(
    original: Circuit,
    lowered: Circuit,
    initial_layout: Sequence[int],
    final_layout: Sequence[int],
    max_qubits: int = 7,
) -> float:
    """Phase-insensitive distance between the lowered circuit and the original.

    Checks ``U_lowered P_initial = P_final U_original`` with the original
    padded by idle qubits to the device width.  Delays and barriers are
    dropped, as they act as the identity.
    """
    n = lowered.n_qubits

    def strip(c: Circuit, width: int) -> Circuit:
        keep = tuple(i for i in c.instructions if i.kind not in ("delay", "barrier", "measure"))
        return Circuit(width, 0, keep)

    u_orig = unitary_of(strip(original, n), max_qubits)
    u_low = unitary_of(strip(lowered, n), max_qubits)
    p_init = layout_permutation(initial_layout)
    p_final = layout_permutation(final_layout)
    return global_phase_distance(u_low @ p_init, p_final @ u_orig)


def check_equivalent(original, lowered: LoweredCircuit | RoutedCircuit, atol: float = 1e-8) -> None:
    err = equivalence_error(original, lowered.circuit, lowered.initial_layout, lowered.final_layout)
    if err > atol:
        raise CircuitError(f"lowered circuit differs from the original by {err:.3e}")
