"""Quantum Zeno effect experiments on simulated NISQ devices."""

from .circuit import Circuit, Instruction, Schedule, schedule, unitary_of
from .device import DeviceSnapshot, load_snapshot, resolve as resolve_snapshot
from .qcore import DensityMatrix, StateVector, apply_gate, partial_trace, tensor, u3_matrix

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "DensityMatrix",
    "DeviceSnapshot",
    "Instruction",
    "Schedule",
    "StateVector",
    "apply_gate",
    "load_snapshot",
    "partial_trace",
    "resolve_snapshot",
    "schedule",
    "tensor",
    "u3_matrix",
    "unitary_of",
]
