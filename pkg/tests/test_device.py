import json

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from zenosim.device import (
    NAIROBI_EDGES,
    SNAPSHOT_DIR_ENV,
    SnapshotError,
    bundled_names,
    load_snapshot,
    neighbors,
    resolve,
    shortest_path,
    synthetic_snapshot,
)


def test_bundled_snapshots_load():
    assert {"nairobi-like", "lima-like", "linear-5"} <= set(bundled_names())
    for name in bundled_names():
        snap = resolve(name)
        assert snap.name == name
        assert snap.estimated


def test_nairobi_like_connectivity():
    snap = resolve("nairobi-like")
    assert snap.n_qubits == 7
    assert neighbors(snap.coupling, 5) == [3, 4, 6]
    assert shortest_path(snap.coupling, 5, 0) == [5, 3, 1, 0]
    assert snap.duration("cx", (3, 5)) == snap.duration("cx", (5, 3)) == 1350
    assert snap.duration("sx", (0,)) == 161


def test_json_round_trip():
    snap = resolve("lima-like")
    assert load_snapshot(snap.to_json()) == snap


def test_validation_names_the_field():
    doc = resolve("linear-5").to_dict()
    doc["qubits"][2]["T2_us"] = 500.0
    with pytest.raises(SnapshotError, match=r"qubits\[2\]: T2_us"):
        load_snapshot(json.dumps(doc))
    doc = resolve("linear-5").to_dict()
    doc["qubits"][0]["readout_p10"] = 1.5
    with pytest.raises(SnapshotError, match=r"qubits\[0\].readout_p10"):
        load_snapshot(json.dumps(doc))
    doc = resolve("linear-5").to_dict()
    doc["coupling_edges"].append([0, 9])
    with pytest.raises(SnapshotError, match="coupling_edges"):
        load_snapshot(json.dumps(doc))


def test_bad_schema_and_json():
    with pytest.raises(SnapshotError, match="schema"):
        load_snapshot(json.dumps({"schema": "x"}))
    with pytest.raises(SnapshotError):
        load_snapshot("{not json")


def test_missing_duration_is_an_error():
    with pytest.raises(SnapshotError, match="no duration"):
        resolve("linear-5").duration("cx", (0, 4))


def test_resolve_order(tmp_path, monkeypatch):
    custom = synthetic_snapshot(3, name="nairobi-like", T1_us=50.0, T2_us=40.0)
    (tmp_path / "nairobi-like.json").write_text(custom.to_json())
    monkeypatch.setenv(SNAPSHOT_DIR_ENV, str(tmp_path))
    assert resolve("nairobi-like").n_qubits == 3
    assert resolve(tmp_path / "nairobi-like.json").qubits[0].T1_us == 50.0
    monkeypatch.delenv(SNAPSHOT_DIR_ENV)
    assert resolve("nairobi-like").n_qubits == 7
    assert resolve("linear-9").n_qubits == 9
    with pytest.raises(SnapshotError, match="not found"):
        resolve("no-such-device")


def test_with_noise_copies():
    snap = resolve("linear-5")
    quiet = snap.with_noise(readout_p01=0.0, readout_p10=0.0)
    assert all(q.readout_p01 == 0 for q in quiet.qubits)
    assert snap.qubits[0].readout_p01 == 0.02


def test_disconnected_and_degenerate_paths():
    snap = synthetic_snapshot(4, edges=[(0, 1), (2, 3)])
    with pytest.raises(SnapshotError, match="not connected"):
        shortest_path(snap.coupling, 0, 3)
    with pytest.raises(SnapshotError):
        shortest_path(snap.coupling, 1, 1)
    with pytest.raises(SnapshotError):
        neighbors(snap.coupling, 7)


@settings(max_examples=60)
@given(st.integers(3, 9), st.data())
def test_shortest_path_matches_bfs_oracle(n, data):
    extra = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    edges = [(i, i + 1) for i in range(n - 1)] + [(a, b) for a, b in extra if a != b]
    snap = synthetic_snapshot(n, edges=edges)
    graph = nx.Graph(edges)
    a, b = data.draw(st.integers(0, n - 1)), data.draw(st.integers(0, n - 1))
    if a == b:
        return
    path = shortest_path(snap.coupling, a, b)
    assert len(path) - 1 == nx.shortest_path_length(graph, a, b)
    assert all(graph.has_edge(u, v) for u, v in zip(path, path[1:]))
    assert path == min(nx.all_shortest_paths(graph, a, b))


def test_nairobi_edges_are_undirected_pairs():
    snap = resolve("nairobi-like")
    for a, b in NAIROBI_EDGES:
        assert snap.coupling.has_edge(a, b) and snap.coupling.has_edge(b, a)
