import logging
import struct
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from app.errors import ArtifactIOError, ConfigurationError
from app.state import ProbeTraces, RunArtifacts, Seismogram, SnapshotField
from app.tools.nodes import NodeKind, NodeSet, UniformGrid
from app.tools.post import to_grid
from app.tools.rbf import LaplacianOperator
from app.utils.common import save_json

logger = logging.getLogger(__name__)

MWV1_MAGIC = b"MWV1"
# magic, nx, nz (u32), x0, z0, h (f64), 리틀 엔디언
MWV1_HEADER = struct.Struct("<4sII3d")
FLOAT_FORMAT = "%.17g"


def _savetxt(path: Path, data: np.ndarray, header: str, fmt=FLOAT_FORMAT) -> str:
    try:
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=fmt)
    except OSError as exc:
        raise ArtifactIOError(f"파일을 쓸 수 없습니다: {path} ({exc})") from exc
    return str(path)


def _loadtxt(path: Path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ArtifactIOError(f"파일을 읽을 수 없습니다: {path} ({exc})") from exc
    except ValueError as exc:
        raise ArtifactIOError(f"CSV 형식이 올바르지 않습니다: {path} ({exc})") from exc


NODE_KIND_NAMES = {
    NodeKind.INTERIOR: "interior",
    NodeKind.TOP_BOUNDARY: "top_boundary",
    NodeKind.SIDE_OR_BOTTOM_BOUNDARY: "side_or_bottom_boundary",
}
_NODE_KINDS_BY_NAME = {name: kind for kind, name in NODE_KIND_NAMES.items()}


def write_nodes_csv(nodes: NodeSet, path: Path) -> str:
    """노드 CSV (x, z, kind, spacing). kind 는 interior / top_boundary / side_or_bottom_boundary 입니다."""
    path = Path(path)
    lines = ["x,z,kind,spacing"]
    for (x, z), kind, spacing in zip(nodes.positions, nodes.kinds, nodes.spacing):
        lines.append(f"{FLOAT_FORMAT % x},{FLOAT_FORMAT % z},{NODE_KIND_NAMES[NodeKind(int(kind))]},{FLOAT_FORMAT % spacing}")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(f"파일을 쓸 수 없습니다: {path} ({exc})") from exc
    return str(path)


def _parse_kind(text: str, path: Path, line: int) -> int:
    if text in _NODE_KINDS_BY_NAME:
        return int(_NODE_KINDS_BY_NAME[text])
    try:
        return int(NodeKind(int(text)))
    except ValueError as exc:
        raise ArtifactIOError(f"{path}:{line} 알 수 없는 노드 종류 '{text}'") from exc


def read_nodes_csv(path: Path) -> NodeSet:
    """write_nodes_csv 로 저장한 노드 집합을 읽습니다. 정수 kind 코드도 받습니다."""
    path = Path(path)
    try:
        rows = path.read_text(encoding="utf-8").splitlines()[1:]
    except OSError as exc:
        raise ArtifactIOError(f"파일을 읽을 수 없습니다: {path} ({exc})") from exc
    positions, kinds, spacing = [], [], []
    for number, row in enumerate(rows, start=2):
        if not row.strip():
            continue
        fields = [field.strip() for field in row.split(",")]
        if len(fields) != 4:
            raise ArtifactIOError(f"노드 CSV 는 4개 열이 필요합니다: {path}:{number}")
        try:
            positions.append((float(fields[0]), float(fields[1])))
            spacing.append(float(fields[3]))
        except ValueError as exc:
            raise ArtifactIOError(f"CSV 형식이 올바르지 않습니다: {path}:{number} ({exc})") from exc
        kinds.append(_parse_kind(fields[2], path, number))
    return NodeSet(
        positions=np.array(positions, dtype=float).reshape(-1, 2),
        kinds=np.array(kinds, dtype=np.int8),
        spacing=np.array(spacing, dtype=float),
    )


def write_operator_csv(op: LaplacianOperator, path: Path) -> str:
    """스텐실 가중치 덤프 (center, neighbor, weight)"""
    centers = np.repeat(op.centers, op.support_size).astype(float)
    data = np.column_stack([centers, op.supports.ravel().astype(float), op.weights.ravel()])
    return _savetxt(Path(path), data, "center,neighbor,weight", fmt=["%d", "%d", FLOAT_FORMAT])


def write_seismogram_csv(seismogram: Seismogram, path: Path) -> str:
    """
    첫 행은 수신기 x 좌표, 이후 행은 t 와 수신기별 값입니다.
    """
    header = ",".join(["t"] + [repr(float(x)) for x in seismogram.receivers])
    data = np.column_stack([seismogram.times, seismogram.values]) if len(seismogram.times) else np.empty((0, 1 + len(seismogram.receivers)))
    return _savetxt(Path(path), data, header)


def read_seismogram_csv(path: Path, receiver_depth: float = 0.0) -> Seismogram:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip().split(",")
    except OSError as exc:
        raise ArtifactIOError(f"파일을 읽을 수 없습니다: {path} ({exc})") from exc
    receivers = np.array([float(x) for x in header[1:]])
    data = _loadtxt(path)
    if data.size == 0:
        data = np.empty((0, 1 + len(receivers)))
    return Seismogram(receivers=receivers, receiver_depth=receiver_depth, times=data[:, 0], values=data[:, 1:])


def write_snapshot_csv(snapshot: SnapshotField, path: Path) -> str:
    """스냅샷 CSV (x, z, u)"""
    return _savetxt(Path(path), np.column_stack([snapshot.positions, snapshot.values]), "x,z,u")


def write_probes_csv(probes: ProbeTraces, path: Path) -> str:
    header = ",".join(["t"] + [f"{x!r}:{z!r}" for x, z in probes.positions.tolist()])
    return _savetxt(Path(path), np.column_stack([probes.times, probes.values]), header)


def write_mwv1(values: np.ndarray, grid: UniformGrid, path: Path) -> str:
    """
    격자 필드를 MWV1 이진 형식으로 저장합니다.

    Args:
        values: (nz, nx) 값
        grid: 격자 정보
        path: 저장 경로
    """
    values = np.asarray(values, dtype="<f8")
    if values.shape != (grid.nz, grid.nx):
        raise ConfigurationError(f"값 배열 크기 {values.shape} 가 격자 ({grid.nz}, {grid.nx}) 와 다릅니다.")
    header = MWV1_HEADER.pack(MWV1_MAGIC, grid.nx, grid.nz, grid.x0, grid.z0, grid.h)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(values.tobytes(order="C"))
    except OSError as exc:
        raise ArtifactIOError(f"파일을 쓸 수 없습니다: {path} ({exc})") from exc
    return str(path)


def read_mwv1(path: Path) -> Tuple[np.ndarray, UniformGrid]:
    """
    MWV1 파일을 읽습니다.

    Returns:
        Tuple[np.ndarray, UniformGrid]: (nz, nx) 값과 격자

    Raises:
        ArtifactIOError: 파일을 읽을 수 없거나 형식이 다른 경우
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise ArtifactIOError(f"파일을 읽을 수 없습니다: {path} ({exc})") from exc
    if len(raw) < MWV1_HEADER.size:
        raise ArtifactIOError(f"MWV1 헤더가 잘렸습니다: {path}")
    magic, nx, nz, x0, z0, h = MWV1_HEADER.unpack_from(raw)
    if magic != MWV1_MAGIC:
        raise ArtifactIOError(f"MWV1 파일이 아닙니다: {path}")
    expected = MWV1_HEADER.size + 8 * nx * nz
    if len(raw) != expected:
        raise ArtifactIOError(f"MWV1 데이터 크기가 맞지 않습니다: {len(raw)} != {expected}")
    values = np.frombuffer(raw, dtype="<f8", offset=MWV1_HEADER.size).reshape(nz, nx).copy()
    return values, UniformGrid(nx=nx, nz=nz, h=h, x0=x0, z0=z0)


class ArtifactConverter:
    """
    실행 결과를 파일로 변환하는 도구: CSV, MWV1 이진 형식, JSON 요약
    """

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactIOError(f"출력 디렉토리를 만들 수 없습니다: {output_dir} ({exc})") from exc

    def convert(self, artifact, format: str = "csv", filename: str = "artifact", grid: Optional[UniformGrid] = None) -> str:
        """
        결과물 하나를 지정된 형식으로 저장

        Args:
            artifact: NodeSet, SnapshotField, Seismogram, ProbeTraces, LaplacianOperator 중 하나
            format: 출력 형식 (csv, mwv1)
            filename: 출력 파일 이름 (확장자 제외)
            grid: mwv1 형식에 쓸 격자 (산점 스냅샷이면 보간 격자)

        Returns:
            str: 저장된 파일 경로
        """
        if format == "csv":
            return self._save_csv(artifact, filename)
        elif format == "mwv1":
            return self._save_mwv1(artifact, filename, grid)
        else:
            raise ConfigurationError(f"지원되지 않는 형식: {format}")

    def _save_csv(self, artifact, filename: str) -> str:
        path = self.output_dir / f"{filename}.csv"
        if isinstance(artifact, NodeSet):
            return write_nodes_csv(artifact, path)
        if isinstance(artifact, SnapshotField):
            return write_snapshot_csv(artifact, path)
        if isinstance(artifact, Seismogram):
            return write_seismogram_csv(artifact, path)
        if isinstance(artifact, ProbeTraces):
            return write_probes_csv(artifact, path)
        if isinstance(artifact, LaplacianOperator):
            return write_operator_csv(artifact, path)
        raise ConfigurationError(f"CSV 로 저장할 수 없는 대상: {type(artifact).__name__}")

    def _save_mwv1(self, artifact, filename: str, grid: Optional[UniformGrid]) -> str:
        if not isinstance(artifact, SnapshotField):
            raise ConfigurationError("MWV1 형식은 스냅샷만 저장할 수 있습니다.")
        grid = grid or artifact.grid
        if grid is None:
            raise ConfigurationError("산점 스냅샷을 MWV1 로 저장하려면 격자가 필요합니다.")
        values = grid.reshape(artifact.values) if artifact.grid == grid else to_grid(artifact, grid)
        return write_mwv1(values, grid, self.output_dir / f"{filename}.mwv1")

    def write_text(self, content: str, filename: str) -> str:
        path = self.output_dir / filename
        try:
            path.write_text(content, encoding="utf-8")
        except OSError as exc:
            raise ArtifactIOError(f"파일을 쓸 수 없습니다: {path} ({exc})") from exc
        return str(path)

    def write_table(self, data: np.ndarray, header: str, filename: str) -> str:
        return _savetxt(self.output_dir / filename, data, header)

    def write_run(self, artifacts: RunArtifacts, config_text: str, binary: bool = False, binary_grid: Optional[UniformGrid] = None) -> List[str]:
        """
        실행 결과 전체를 저장합니다. 진단 로그는 CSV 와 별도 파일로 씁니다.

        Returns:
            List[str]: 저장된 파일 경로 목록
        """
        written = [self.write_text(config_text, "scenario.cfg")]
        for snapshot in artifacts.snapshots:
            name = f"snapshot_{snapshot.t:.6f}"
            written.append(self.convert(snapshot, "csv", name))
            if binary and (binary_grid is not None or snapshot.grid is not None):
                written.append(self.convert(snapshot, "mwv1", name, grid=binary_grid))
        if artifacts.seismogram is not None:
            written.append(self.convert(artifacts.seismogram, "csv", "seismogram"))
        if artifacts.probes is not None and len(artifacts.probes.positions):
            written.append(self.convert(artifacts.probes, "csv", "probes"))
        written.append(self.write_text("\n".join(artifacts.diagnostics) + "\n", "diagnostics.log"))
        summary_path = self.output_dir / "summary.json"
        try:
            save_json(artifacts.summary, str(summary_path))
        except OSError as exc:
            raise ArtifactIOError(f"파일을 쓸 수 없습니다: {summary_path} ({exc})") from exc
        written.append(str(summary_path))
        logger.info("결과물 %d개 저장: %s", len(written), self.output_dir)
        return written
