import json
import struct

import numpy as np
import pytest

from app.errors import ArtifactIOError, ConfigurationError
from app.state import ProbeTraces, RunArtifacts, Seismogram, SnapshotField
from app.tools.converter import (
    ArtifactConverter,
    read_mwv1,
    read_nodes_csv,
    read_seismogram_csv,
    write_mwv1,
)
from app.tools.nodes import UniformGrid
from app.tools.rbf import assemble_laplacian


def test_nodes_csv_preserves_values(tmp_path, unit_nodes):
    path = ArtifactConverter(str(tmp_path)).convert(unit_nodes, "csv", "nodes")
    restored = read_nodes_csv(path)
    assert np.array_equal(restored.positions, unit_nodes.positions)
    assert np.array_equal(restored.kinds, unit_nodes.kinds)
    assert np.array_equal(restored.spacing, unit_nodes.spacing)
    with open(path, encoding="utf-8") as f:
        assert f.readline().strip() == "x,z,kind,spacing"
        kinds = {line.split(",")[2] for line in f}
    assert kinds == {"interior", "top_boundary", "side_or_bottom_boundary"}


def test_nodes_csv_kind_codes(tmp_path):
    path = tmp_path / "nodes.csv"
    path.write_text("x,z,kind,spacing\n0,0,1,1\n5,5,interior,1\n0,5,2,1\n", encoding="utf-8")
    assert read_nodes_csv(path).kinds.tolist() == [1, 0, 2]
    path.write_text("x,z,kind,spacing\n0,0,corner,1\n", encoding="utf-8")
    with pytest.raises(ArtifactIOError):
        read_nodes_csv(path)
    path.write_text("x,z,kind,spacing\n0,0,interior\n", encoding="utf-8")
    with pytest.raises(ArtifactIOError):
        read_nodes_csv(path)


def test_operator_dump(tmp_path, small_grid_nodes):
    op = assemble_laplacian(small_grid_nodes, support_size=5, threads=1)
    path = ArtifactConverter(str(tmp_path)).convert(op, "csv", "operator")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (81 * 5, 3)
    assert data[0, 0] == data[0, 1] == op.centers[0]
    assert np.allclose(data[:, 2], op.weights.ravel())


def test_seismogram_csv(tmp_path):
    seismogram = Seismogram(
        receivers=np.array([0.0, 5.0, 10.0]),
        receiver_depth=1.0,
        times=np.array([0.0, 0.001]),
        values=np.array([[0.0, 0.5, -0.25], [1e-9, 2.0, 3.0]]),
    )
    path = ArtifactConverter(str(tmp_path)).convert(seismogram, "csv", "seismogram")
    with open(path, encoding="utf-8") as f:
        assert f.readline().strip() == "t,0.0,5.0,10.0"
    restored = read_seismogram_csv(path, receiver_depth=1.0)
    assert np.array_equal(restored.receivers, seismogram.receivers)
    assert np.array_equal(restored.values, seismogram.values)


def test_mwv1_layout(tmp_path):
    grid = UniformGrid(nx=3, nz=2, h=0.5, x0=1.0, z0=2.0)
    values = np.arange(6, dtype=float).reshape(2, 3)
    path = write_mwv1(values, grid, tmp_path / "field.mwv1")
    raw = (tmp_path / "field.mwv1").read_bytes()
    assert raw[:4] == b"MWV1"
    assert struct.unpack_from("<II3d", raw, 4) == (3, 2, 1.0, 2.0, 0.5)
    assert len(raw) == 4 + 8 + 24 + 6 * 8
    restored, restored_grid = read_mwv1(path)
    assert np.array_equal(restored, values)
    assert restored_grid == grid


def test_mwv1_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.mwv1"
    bad.write_bytes(b"XXXX" + bytes(32))
    with pytest.raises(ArtifactIOError):
        read_mwv1(bad)
    short = tmp_path / "short.mwv1"
    short.write_bytes(b"MWV1")
    with pytest.raises(ArtifactIOError):
        read_mwv1(short)
    grid = UniformGrid(nx=2, nz=2, h=1.0)
    truncated = tmp_path / "truncated.mwv1"
    write_mwv1(np.ones((2, 2)), grid, truncated)
    truncated.write_bytes(truncated.read_bytes()[:-8])
    with pytest.raises(ArtifactIOError):
        read_mwv1(truncated)
    with pytest.raises(ArtifactIOError):
        read_mwv1(tmp_path / "missing.mwv1")


def test_scattered_snapshot_needs_grid_for_binary(tmp_path, unit_nodes):
    converter = ArtifactConverter(str(tmp_path))
    snapshot = SnapshotField(t=0.01, positions=unit_nodes.positions, values=unit_nodes.x.copy(), backend="rbffd")
    with pytest.raises(ConfigurationError):
        converter.convert(snapshot, "mwv1", "snapshot")
    path = converter.convert(snapshot, "mwv1", "snapshot", grid=UniformGrid(nx=11, nz=11, h=1.0))
    values, _ = read_mwv1(path)
    assert np.allclose(values[0], np.arange(11), atol=1e-8)


def test_unknown_format_and_artifact(tmp_path, unit_nodes):
    converter = ArtifactConverter(str(tmp_path))
    with pytest.raises(ConfigurationError):
        converter.convert(unit_nodes, "xlsx", "nodes")
    with pytest.raises(ConfigurationError):
        converter.convert({"a": 1}, "csv", "dict")


def test_write_run(tmp_path, small_grid, small_grid_nodes):
    snapshot = SnapshotField(
        t=0.002, positions=small_grid.positions(), values=np.zeros(small_grid.size), backend="fdm", grid=small_grid
    )
    artifacts = RunArtifacts(
        scenario="tiny",
        backend="fdm",
        nodes=small_grid_nodes,
        dt=1e-4,
        n_steps=20,
        snapshots=[snapshot],
        seismogram=Seismogram(np.array([0.0, 5.0]), 1.0, np.array([0.0]), np.zeros((1, 2))),
        probes=ProbeTraces(np.array([[5.0, 5.0]]), np.array([0.0]), np.zeros((1, 1))),
        diagnostics=["스텝 100"],
        summary={"node_count": small_grid_nodes.size},
    )
    written = ArtifactConverter(str(tmp_path)).write_run(artifacts, "[scenario]\nname = tiny\n", binary=True)
    names = sorted(p.rsplit("/", 1)[-1] for p in written)
    assert names == sorted([
        "scenario.cfg", "snapshot_0.002000.csv", "snapshot_0.002000.mwv1", "seismogram.csv",
        "probes.csv", "diagnostics.log", "summary.json",
    ])
    assert json.loads((tmp_path / "summary.json").read_text(encoding="utf-8")) == {"node_count": 121}
