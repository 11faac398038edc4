"""Circuit intermediate representation.

A :class:`Circuit` is an immutable, ordered list of :class:`Instruction`
values.  Measurement is terminal: once a qubit is measured no further
instruction may touch it.  Projective measurement in the middle of an
experiment is emulated with a CNOT onto a fresh ancilla instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .qcore import StateVector, apply_to_axes, u3_matrix

if TYPE_CHECKING:
    from .device import DeviceSnapshot

SCHEMA = "zenosim.circuit/1"
MAX_UNITARY_QUBITS = 6


class CircuitError(ValueError):
    pass


# kind -> (number of qubits, number of params)
ARITY = {
    "u3": (1, 3),
    "rz": (1, 1),
    "sx": (1, 0),
    "x": (1, 0),
    "cx": (2, 0),
    "ecr": (2, 0),
    "xy": (2, 1),
    "swap": (2, 0),
    "delay": (1, 1),
    "measure": (1, 0),
    "barrier": (None, 0),
}

NON_UNITARY = frozenset({"delay", "measure", "barrier"})

_SQ2 = 1 / math.sqrt(2)

X = np.array([[0, 1], [1, 0]], dtype=complex)
SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex)
# control is the gate's qubit 0 (low bit)
CX = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
# Echoed cross-resonance gate.  It is CNOT-equivalent up to single-qubit
# rotations: CX(0->1) = X(0) . ECR(0,1) . (Sdg(0) (x) SXdg(1)) up to a
# global phase.  The transpiler relies on exactly this identity.
ECR = _SQ2 * np.array(
    [[0, 1, 0, 1j], [1, 0, -1j, 0], [0, 1j, 0, 1], [-1j, 0, 1, 0]], dtype=complex
)


def rz_matrix(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def xy_matrix(beta: float) -> np.ndarray:
    """Partial iSWAP: identity on |00>,|11>, rotation by beta/2 inside {|01>,|10>}.

    Equals ``exp(-i (beta/2) (XX + YY)/2)``, the propagator of the exchange
    Hamiltonian ``g (s+ s- + s- s+)`` over a time ``t`` with ``beta = 2 g t``.
    """
    if not math.isfinite(beta):
        raise CircuitError(f"beta must be finite, got {beta}")
    c, s = math.cos(beta / 2), math.sin(beta / 2)
    u = np.eye(4, dtype=complex)
    u[1, 1] = u[2, 2] = c
    u[1, 2] = u[2, 1] = -1j * s
    return u


@dataclass(frozen=True)
class Instruction:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    clbits: tuple[int, ...] = ()

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ARITY:
            raise CircuitError(f"unknown instruction kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "clbits", tuple(int(c) for c in self.clbits))
        n_q, n_p = ARITY[kind]
        if n_q is not None and len(self.qubits) != n_q:
            raise CircuitError(f"{kind} acts on {n_q} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{kind} has repeated qubits {self.qubits}")
        if len(self.params) != n_p:
            raise CircuitError(f"{kind} takes {n_p} parameter(s), got {self.params}")
        if kind == "delay":
            count = self.params[0]
            if int(count) != count or count < 0:
                raise CircuitError(f"delay must be a non-negative integer dt count, got {count}")
            object.__setattr__(self, "params", (int(count),))
        else:
            if not all(math.isfinite(p) for p in self.params):
                raise CircuitError(f"{kind} parameters must be finite, got {self.params}")
            object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if kind == "measure":
            if len(self.clbits) != 1:
                raise CircuitError("measure needs exactly one clbit")
        elif self.clbits:
            raise CircuitError(f"{kind} does not write clbits")

    @property
    def is_unitary(self) -> bool:
        return self.kind not in NON_UNITARY

    def matrix(self) -> np.ndarray:
        k = self.kind
        if k == "u3":
            return u3_matrix(*self.params)
        if k == "rz":
            return rz_matrix(self.params[0])
        if k == "xy":
            return xy_matrix(self.params[0])
        fixed = {"sx": SX, "x": X, "cx": CX, "ecr": ECR, "swap": SWAP}
        if k in fixed:
            return fixed[k]
        raise CircuitError(f"{k} has no unitary matrix")

    def remap(self, mapping: Sequence[int]) -> "Instruction":
        return Instruction(self.kind, tuple(mapping[q] for q in self.qubits), self.params, self.clbits)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "qubits": list(self.qubits), "params": list(self.params)}
        if self.clbits:
            d["clbits"] = list(self.clbits)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Instruction":
        return cls(d["kind"], tuple(d["qubits"]), tuple(d.get("params", ())), tuple(d.get("clbits", ())))


# small constructors, named after the instruction kinds
def u3(theta, phi, lam, q):
    return Instruction("u3", (q,), (theta, phi, lam))


def rz(phi, q):
    return Instruction("rz", (q,), (phi,))


def sx(q):
    return Instruction("sx", (q,))


def x(q):
    return Instruction("x", (q,))


def cx(control, target):
    return Instruction("cx", (control, target))


def ecr(a, b):
    return Instruction("ecr", (a, b))


def xy(beta, a, b):
    return Instruction("xy", (a, b), (beta,))


def swap(a, b):
    return Instruction("swap", (a, b))


def delay(dt_count, q):
    return Instruction("delay", (q,), (dt_count,))


def measure(q, c):
    return Instruction("measure", (q,), (), (c,))


def barrier(*qubits):
    return Instruction("barrier", tuple(qubits))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    n_clbits: int = 0
    instructions: tuple[Instruction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if self.n_qubits < 1 or self.n_clbits < 0:
            raise CircuitError("need at least one qubit and a non-negative clbit count")
        measured: set[int] = set()
        for instr in self.instructions:
            _validate(instr, self.n_qubits, self.n_clbits, measured)

    def append(self, instr: Instruction) -> "Circuit":
        return append(self, instr)

    def extend(self, instrs: Iterable[Instruction]) -> "Circuit":
        return Circuit(self.n_qubits, self.n_clbits, self.instructions + tuple(instrs))

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def count_ops(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for instr in self.instructions:
            counts[instr.kind] = counts.get(instr.kind, 0) + 1
        return counts

    def measured_qubits(self) -> dict[int, int]:
        """Map clbit -> measured qubit."""
        return {i.clbits[0]: i.qubits[0] for i in self.instructions if i.kind == "measure"}

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "n_qubits": self.n_qubits,
            "n_clbits": self.n_clbits,
            "instructions": [i.to_dict() for i in self.instructions],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        if d.get("schema") != SCHEMA:
            raise CircuitError(f"unsupported circuit schema {d.get('schema')!r}, expected {SCHEMA!r}")
        return cls(d["n_qubits"], d.get("n_clbits", 0), tuple(Instruction.from_dict(i) for i in d["instructions"]))

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


def _validate(instr: Instruction, n_qubits: int, n_clbits: int, measured: set[int]) -> None:
    for q in instr.qubits:
        if not 0 <= q < n_qubits:
            raise CircuitError(f"qubit {q} out of range for {n_qubits} qubits in {instr.kind}")
        if q in measured and instr.kind != "barrier":
            raise CircuitError(f"{instr.kind} on qubit {q} after its terminal measurement")
    for c in instr.clbits:
        if not 0 <= c < n_clbits:
            raise CircuitError(f"clbit {c} out of range for {n_clbits} clbits")
    if instr.kind == "measure":
        measured.add(instr.qubits[0])


def append(circuit: Circuit, instr: Instruction) -> Circuit:
    """Return a new circuit with ``instr`` appended."""
    measured = {i.qubits[0] for i in circuit.instructions if i.kind == "measure"}
    _validate(instr, circuit.n_qubits, circuit.n_clbits, measured)
    new = object.__new__(Circuit)
    object.__setattr__(new, "n_qubits", circuit.n_qubits)
    object.__setattr__(new, "n_clbits", circuit.n_clbits)
    object.__setattr__(new, "instructions", circuit.instructions + (instr,))
    return new


def unitary_of(circuit: Circuit, max_qubits: int = MAX_UNITARY_QUBITS) -> np.ndarray:
    """Unitary implemented by a measurement- and delay-free circuit."""
    n = circuit.n_qubits
    if n > max_qubits:
        raise CircuitError(f"unitary_of limited to {max_qubits} qubits, circuit has {n}")
    dim = 1 << n
    # columns of the running unitary ride along as an extra trailing axis
    u = np.eye(dim, dtype=complex).reshape([2] * n + [dim])
    for instr in circuit.instructions:
        if instr.kind == "barrier":
            continue
        if not instr.is_unitary:
            raise CircuitError(f"{instr.kind} is not a unitary instruction")
        u = apply_to_axes(u, instr.matrix(), [n - 1 - q for q in instr.qubits])
    return u.reshape(dim, dim)


def run_statevector(circuit: Circuit, initial: StateVector | None = None) -> StateVector:
    """Evolve a statevector, treating delays, barriers and measurements as identity."""
    n = circuit.n_qubits
    psi = (initial or StateVector.zero(n)).data.reshape([2] * n)
    for instr in circuit.instructions:
        if instr.is_unitary:
            psi = apply_to_axes(psi, instr.matrix(), [n - 1 - q for q in instr.qubits])
    return StateVector(psi.reshape(-1))


@dataclass(frozen=True)
class Schedule:
    starts: tuple[int, ...]
    durations: tuple[int, ...]
    total_duration: int
    qubit_end: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "starts_dt": list(self.starts),
            "durations_dt": list(self.durations),
            "total_duration_dt": self.total_duration,
        }


def schedule(circuit: Circuit, device: "DeviceSnapshot") -> Schedule:
    """As-soon-as-possible schedule in units of dt."""
    free = [0] * circuit.n_qubits
    starts, durations = [], []
    for instr in circuit.instructions:
        start = max((free[q] for q in instr.qubits), default=0)
        if instr.kind == "delay":
            dur = instr.params[0]
        elif instr.kind == "barrier":
            dur = 0
        else:
            dur = device.duration(instr.kind, instr.qubits)
        for q in instr.qubits:
            free[q] = start + dur
        starts.append(start)
        durations.append(dur)
    total = max((s + d for s, d in zip(starts, durations)), default=0)
    return Schedule(tuple(starts), tuple(durations), total, dict(enumerate(free)))
