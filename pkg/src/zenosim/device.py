"""Device snapshots: connectivity, native gates, timing and noise parameters.

Snapshots are frozen local JSON files (schema ``zenosim.snapshot/1``); no
vendor service is ever contacted.  Field reference::

    {
      "schema": "zenosim.snapshot/1",
      "name": "nairobi-like",
      "n_qubits": 7,
      "coupling_edges": [[0, 1], [1, 0], ...],      # directed, control first
      "basis_gates": ["cx", "rz", "sx", "x"],
      "dt_ns": 0.2222222222222222,
      "granularity_dt": 16,
      "qubits": [{"T1_us": 100.0, "T2_us": 80.0,
                  "readout_p01": 0.02,               # P(read 1 | state 0)
                  "readout_p10": 0.04}, ...],        # P(read 0 | state 1)
      "gate_durations": [{"gate": "cx", "qubits": [0, 1], "duration_dt": 1350}, ...],
      "estimated": true
    }
"""

from __future__ import annotations

import json
import math
import os
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

SCHEMA = "zenosim.snapshot/1"
DEFAULT_DT_NS = 2 / 9
DEFAULT_GRANULARITY = 16
SNAPSHOT_DIR_ENV = "ZENOSIM_SNAPSHOT_DIR"

# mean durations quoted for the IBM devices the experiments ran on
MEAN_1Q_NS = 35.7
MEAN_CX_NS = 300.0
# not published; a plausible transmon readout length
MEAN_MEASURE_NS = 4000.0


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class QubitProperties:
    T1_us: float
    T2_us: float
    readout_p01: float = 0.0
    readout_p10: float = 0.0


@dataclass(frozen=True)
class CouplingMap:
    n_qubits: int
    edges: tuple[tuple[int, int], ...]

    @property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, set[int]] = {q: set() for q in range(self.n_qubits)}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return {q: tuple(sorted(v)) for q, v in adj.items()}

    def has_edge(self, a: int, b: int) -> bool:
        return (a, b) in self.edges

    def adjacent(self, a: int, b: int) -> bool:
        return (a, b) in self.edges or (b, a) in self.edges

    def distances_from(self, source: int) -> dict[int, int]:
        adj = self.adjacency
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist


def _check_qubit(cmap: CouplingMap, q: int) -> None:
    if not 0 <= q < cmap.n_qubits:
        raise SnapshotError(f"qubit {q} out of range for {cmap.n_qubits} qubits")


def neighbors(cmap: CouplingMap, q: int) -> list[int]:
    _check_qubit(cmap, q)
    return list(cmap.adjacency[q])


def shortest_path(cmap: CouplingMap, a: int, b: int) -> list[int]:
    """Minimal-length path from ``a`` to ``b``; ties go to the lexicographically smallest path."""
    _check_qubit(cmap, a)
    _check_qubit(cmap, b)
    if a == b:
        raise SnapshotError("shortest_path needs two distinct qubits")
    dist = cmap.distances_from(b)
    if a not in dist:
        raise SnapshotError(f"qubits {a} and {b} are not connected")
    adj = cmap.adjacency
    path = [a]
    while path[-1] != b:
        here = path[-1]
        path.append(min(v for v in adj[here] if dist.get(v) == dist[here] - 1))
    return path


@dataclass(frozen=True)
class DeviceSnapshot:
    name: str
    n_qubits: int
    coupling_edges: tuple[tuple[int, int], ...]
    basis_gates: tuple[str, ...]
    qubits: tuple[QubitProperties, ...]
    gate_durations: dict = field(default_factory=dict)
    dt_ns: float = DEFAULT_DT_NS
    granularity_dt: int = DEFAULT_GRANULARITY
    estimated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coupling_edges", tuple(tuple(map(int, e)) for e in self.coupling_edges))
        object.__setattr__(self, "basis_gates", tuple(self.basis_gates))
        object.__setattr__(self, "qubits", tuple(self.qubits))
        durations = {(g, tuple(qs)): int(d) for (g, qs), d in self.gate_durations.items()}
        object.__setattr__(self, "gate_durations", durations)
        validate(self)

    @property
    def coupling(self) -> CouplingMap:
        return CouplingMap(self.n_qubits, self.coupling_edges)

    def duration(self, gate: str, qubits: Sequence[int]) -> int:
        try:
            return self.gate_durations[(gate, tuple(qubits))]
        except KeyError:
            raise SnapshotError(f"{self.name}: no duration for {gate} on qubits {tuple(qubits)}") from None

    def ns_to_dt(self, ns: float) -> int:
        return int(round(ns / self.dt_ns))

    def with_noise(self, **changes) -> "DeviceSnapshot":
        """Copy with every qubit's properties updated, e.g. ``readout_p01=0.0``."""
        return replace(self, qubits=tuple(replace(q, **changes) for q in self.qubits))

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "n_qubits": self.n_qubits,
            "coupling_edges": [list(e) for e in self.coupling_edges],
            "basis_gates": list(self.basis_gates),
            "dt_ns": self.dt_ns,
            "granularity_dt": self.granularity_dt,
            "qubits": [
                {"T1_us": q.T1_us, "T2_us": q.T2_us, "readout_p01": q.readout_p01, "readout_p10": q.readout_p10}
                for q in self.qubits
            ],
            "gate_durations": [
                {"gate": g, "qubits": list(qs), "duration_dt": d}
                for (g, qs), d in sorted(self.gate_durations.items())
            ],
            "estimated": self.estimated,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def validate(snap: DeviceSnapshot) -> None:
    """Check every snapshot invariant; errors name the offending field path."""
    n = snap.n_qubits
    if n < 1:
        raise SnapshotError("n_qubits: must be positive")
    if len(snap.qubits) != n:
        raise SnapshotError(f"qubits: expected {n} entries, got {len(snap.qubits)}")
    if not (snap.dt_ns > 0 and math.isfinite(snap.dt_ns)):
        raise SnapshotError(f"dt_ns: must be positive, got {snap.dt_ns}")
    if snap.granularity_dt < 1:
        raise SnapshotError(f"granularity_dt: must be positive, got {snap.granularity_dt}")
    for i, (a, b) in enumerate(snap.coupling_edges):
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise SnapshotError(f"coupling_edges[{i}]: invalid edge ({a}, {b})")
    for i, q in enumerate(snap.qubits):
        if not (q.T1_us > 0 and q.T2_us > 0):
            raise SnapshotError(f"qubits[{i}]: T1_us and T2_us must be positive")
        if q.T2_us > 2 * q.T1_us * (1 + 1e-12):
            raise SnapshotError(f"qubits[{i}]: T2_us={q.T2_us} exceeds 2*T1_us={2 * q.T1_us}")
        for name in ("readout_p01", "readout_p10"):
            p = getattr(q, name)
            if not 0.0 <= p <= 1.0:
                raise SnapshotError(f"qubits[{i}].{name}: {p} is not a probability")
    for (g, qs), d in snap.gate_durations.items():
        if d < 0:
            raise SnapshotError(f"gate_durations[{g}{list(qs)}]: negative duration {d}")
        if any(not 0 <= q < n for q in qs):
            raise SnapshotError(f"gate_durations[{g}{list(qs)}]: qubit out of range")


def from_dict(doc: dict) -> DeviceSnapshot:
    if doc.get("schema") != SCHEMA:
        raise SnapshotError(f"schema: unsupported {doc.get('schema')!r}, expected {SCHEMA!r}")
    try:
        qubits = tuple(
            QubitProperties(
                float(q["T1_us"]), float(q["T2_us"]),
                float(q.get("readout_p01", 0.0)), float(q.get("readout_p10", 0.0)),
            )
            for q in doc["qubits"]
        )
        durations = {(e["gate"], tuple(e["qubits"])): int(e["duration_dt"]) for e in doc.get("gate_durations", [])}
        return DeviceSnapshot(
            name=str(doc["name"]),
            n_qubits=int(doc["n_qubits"]),
            coupling_edges=tuple(tuple(e) for e in doc["coupling_edges"]),
            basis_gates=tuple(doc["basis_gates"]),
            qubits=qubits,
            gate_durations=durations,
            dt_ns=float(doc.get("dt_ns", DEFAULT_DT_NS)),
            granularity_dt=int(doc.get("granularity_dt", DEFAULT_GRANULARITY)),
            estimated=bool(doc.get("estimated", False)),
        )
    except (KeyError, TypeError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc!r}") from exc


def load_snapshot(document: str) -> DeviceSnapshot:
    """Parse and validate a snapshot JSON document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"snapshot is not valid JSON: {exc}") from exc
    return from_dict(doc)


def bundled_names() -> list[str]:
    files = resources.files("zenosim").joinpath("data", "snapshots").iterdir()
    return sorted(f.name[: -len(".json")] for f in files if f.name.endswith(".json"))


def resolve(ref: str | os.PathLike) -> DeviceSnapshot:
    """Load a snapshot from a path, the snapshot directory, or the bundled set.

    Bare names are looked up first in ``$ZENOSIM_SNAPSHOT_DIR`` and then among
    the bundled snapshots.  ``linear-N`` is generated on the fly for any N.
    """
    path = Path(ref)
    if path.is_file():
        return load_snapshot(path.read_text())
    name = str(ref)
    env_dir = os.environ.get(SNAPSHOT_DIR_ENV)
    if env_dir and (Path(env_dir) / f"{name}.json").is_file():
        return load_snapshot((Path(env_dir) / f"{name}.json").read_text())
    res = resources.files("zenosim").joinpath("data", "snapshots", f"{name}.json")
    if res.is_file():
        return load_snapshot(res.read_text())
    if name.startswith("linear-") and name[7:].isdigit():
        return synthetic_snapshot(int(name[7:]), topology="linear")
    raise SnapshotError(f"snapshot not found: {name}")


def synthetic_snapshot(
    n_qubits: int,
    edges: Sequence[tuple[int, int]] | None = None,
    *,
    topology: str = "linear",
    name: str | None = None,
    T1_us: float = 100.0,
    T2_us: float = 80.0,
    readout_p01: float = 0.02,
    readout_p10: float = 0.04,
    basis_gates: Sequence[str] = ("cx", "rz", "sx", "x"),
    dt_ns: float = DEFAULT_DT_NS,
    granularity_dt: int = DEFAULT_GRANULARITY,
) -> DeviceSnapshot:
    """Snapshot with uniform qubits and mean gate durations.

    ``edges`` are undirected pairs; both directions are added.  Without
    ``edges`` the ``topology`` ("linear", "ring", "star" or "full") is used.
    """
    if edges is None:
        if topology == "linear":
            edges = [(i, i + 1) for i in range(n_qubits - 1)]
        elif topology == "ring":
            edges = [(i, (i + 1) % n_qubits) for i in range(n_qubits)] if n_qubits > 2 else [(0, 1)]
        elif topology == "star":
            edges = [(0, i) for i in range(1, n_qubits)]
        elif topology == "full":
            edges = [(i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)]
        else:
            raise SnapshotError(f"unknown topology {topology!r}")
    directed = sorted({(a, b) for a, b in edges} | {(b, a) for a, b in edges})
    one_q = int(round(MEAN_1Q_NS / dt_ns))
    two_q = int(round(MEAN_CX_NS / dt_ns))
    meas = int(round(MEAN_MEASURE_NS / dt_ns))
    durations: dict = {}
    for q in range(n_qubits):
        durations[("rz", (q,))] = 0
        durations[("sx", (q,))] = one_q
        durations[("x", (q,))] = one_q
        durations[("measure", (q,))] = meas
    for a, b in directed:
        for g in basis_gates:
            if g in ("cx", "ecr"):
                durations[(g, (a, b))] = two_q
    props = QubitProperties(T1_us, T2_us, readout_p01, readout_p10)
    return DeviceSnapshot(
        name=name or f"{topology}-{n_qubits}",
        n_qubits=n_qubits,
        coupling_edges=tuple(directed),
        basis_gates=tuple(basis_gates),
        qubits=(props,) * n_qubits,
        gate_durations=durations,
        dt_ns=dt_ns,
        granularity_dt=granularity_dt,
        estimated=True,
    )


NAIROBI_EDGES = [(0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6)]
LIMA_EDGES = [(0, 1), (1, 2), (1, 3), (3, 4)]


def _write_bundled(directory: Path) -> None:
    """Regenerate the bundled snapshot files (maintenance helper)."""
    for snap in (
        synthetic_snapshot(7, NAIROBI_EDGES, name="nairobi-like"),
        synthetic_snapshot(5, LIMA_EDGES, name="lima-like"),
        synthetic_snapshot(5, topology="linear", name="linear-5"),
    ):
        (directory / f"{snap.name}.json").write_text(snap.to_json())
