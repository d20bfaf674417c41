import logging
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.signal
import scipy.sparse
from scipy.spatial import cKDTree

from app.errors import ConfigurationError
from app.state import Seismogram, SnapshotField, WaveState
from app.tools.media import ShepardInterpolator
from app.tools.nodes import NodeSet, UniformGrid

logger = logging.getLogger(__name__)

SAMPLER_NEIGHBORS = 8
# 격자점에서 이 배수의 국소 간격 안에 노드가 없으면 빈 영역
HOLE_FACTOR = 3.0


class PointSampler:
    """
    노드 값을 임의 위치 값으로 옮기는 선형 사상 (희소 행렬)

    산점 노드는 기울기 보정 Shepard, 격자는 쌍선형 보간을 씁니다.
    두 방법 모두 노드와 일치하는 위치에서는 노드 값을 그대로 돌려줍니다.
    """

    def __init__(self, matrix: scipy.sparse.csr_matrix):
        self.matrix = matrix

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.matrix.shape[1],):
            raise ConfigurationError(f"값 개수 {values.shape} 가 노드 수 {self.matrix.shape[1]} 와 다릅니다.")
        return self.matrix @ values

    @classmethod
    def scattered(cls, positions: np.ndarray, query: np.ndarray, k: int = SAMPLER_NEIGHBORS, linear: bool = True) -> "PointSampler":
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        interpolator = ShepardInterpolator(positions, k=k, linear=linear)
        indices, weights = interpolator.weights(query)
        rows = np.repeat(np.arange(len(query)), indices.shape[1])
        matrix = scipy.sparse.csr_matrix(
            (weights.ravel(), (rows, indices.ravel())), shape=(len(query), len(interpolator.points))
        )
        return cls(matrix)

    @classmethod
    def bilinear(cls, grid: UniformGrid, query: np.ndarray) -> "PointSampler":
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        fx = (query[:, 0] - grid.x0) / grid.h
        fz = (query[:, 1] - grid.z0) / grid.h
        i = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
        j = np.clip(np.floor(fz).astype(int), 0, grid.nz - 2)
        tx = np.clip(fx - i, 0.0, 1.0)
        tz = np.clip(fz - j, 0.0, 1.0)
        corners = [
            (j * grid.nx + i, (1 - tx) * (1 - tz)),
            (j * grid.nx + i + 1, tx * (1 - tz)),
            ((j + 1) * grid.nx + i, (1 - tx) * tz),
            ((j + 1) * grid.nx + i + 1, tx * tz),
        ]
        rows = np.tile(np.arange(len(query)), 4)
        cols = np.concatenate([c for c, _ in corners])
        data = np.concatenate([w for _, w in corners])
        return cls(scipy.sparse.csr_matrix((data, (rows, cols)), shape=(len(query), grid.size)))

    @classmethod
    def for_field(cls, positions: np.ndarray, query: np.ndarray, grid: Optional[UniformGrid] = None) -> "PointSampler":
        if grid is not None:
            return cls.bilinear(grid, query)
        return cls.scattered(positions, query)


def sample(snapshot: SnapshotField, points: np.ndarray) -> np.ndarray:
    """스냅샷을 임의 위치에서 보간합니다."""
    return PointSampler.for_field(snapshot.positions, points, snapshot.grid)(snapshot.values)


def receiver_positions(receivers, receiver_depth: float, z_top: float) -> np.ndarray:
    """수신기 x 목록 또는 (R, 2) 위치를 (R, 2) 위치 배열로 변환"""
    receivers = np.asarray(receivers, dtype=float)
    if receivers.ndim == 2:
        return receivers.reshape(-1, 2)
    return np.column_stack([receivers, np.full(len(receivers), z_top + receiver_depth)])


class SeismogramRecorder:
    """
    지표면 아래 receiver_depth 깊이의 수신기 값을 스텝마다 모읍니다.

    Args:
        nodes: 노드 집합
        receivers: 수신기 x 좌표
        receiver_depth: 지표면으로부터의 깊이 (m)
        z_top: 지표면 z
        grid: 격자 해석이면 격자
    """

    def __init__(self, nodes: NodeSet, receivers: Sequence[float], receiver_depth: float, z_top: float, grid: Optional[UniformGrid] = None):
        self.receivers = np.asarray(receivers, dtype=float)
        self.receiver_depth = float(receiver_depth)
        positions = receiver_positions(self.receivers, self.receiver_depth, z_top)
        self.sampler = PointSampler.for_field(nodes.positions, positions, grid)
        self.times = []
        self.values = []

    def record(self, state: WaveState) -> None:
        self.times.append(state.t)
        self.values.append(self.sampler(state.u_curr))

    def result(self) -> Seismogram:
        values = np.array(self.values) if self.values else np.empty((0, len(self.receivers)))
        return Seismogram(
            receivers=self.receivers, receiver_depth=self.receiver_depth, times=np.array(self.times), values=values
        )


def record_seismogram(state: WaveState, nodes: NodeSet, receivers, receiver_depth: float = 0.0) -> np.ndarray:
    """
    현재 파동장의 수신기 값

    Args:
        state: 파동 상태
        nodes: 노드 집합
        receivers: 수신기 x 좌표 또는 (R, 2) 위치
        receiver_depth: x 좌표만 줄 때 지표면으로부터의 깊이

    Returns:
        np.ndarray: (R,) 수신기 값
    """
    z_top = float(nodes.z.min())
    positions = receiver_positions(receivers, receiver_depth, z_top)
    return PointSampler.scattered(nodes.positions, positions)(state.u_curr)


def _node_spacing(snapshot: SnapshotField) -> np.ndarray:
    if snapshot.spacing is not None:
        return np.asarray(snapshot.spacing, dtype=float)
    if snapshot.grid is not None:
        return np.full(len(snapshot.positions), snapshot.grid.h)
    # 간격 정보가 없으면 최근접 이웃 거리로 대신함
    distance, _ = cKDTree(snapshot.positions).query(snapshot.positions, k=2)
    return distance[:, 1]


def grid_holes(snapshot: SnapshotField, grid: UniformGrid, factor: float = HOLE_FACTOR) -> np.ndarray:
    """
    가장 가까운 노드까지의 거리가 그 노드 국소 간격의 factor 배를 넘는 격자점

    Returns:
        np.ndarray: (nz, nx) 불리언 마스크
    """
    spacing = _node_spacing(snapshot)
    distance, index = cKDTree(snapshot.positions).query(grid.positions())
    return grid.reshape(distance > factor * spacing[index])


def to_grid(snapshot: SnapshotField, grid: UniformGrid, return_mask: bool = False):
    """
    스냅샷을 균일 격자로 보간한 (nz, nx) 배열

    근처에 노드가 없는 격자점은 빈 영역으로 표시하고 경고를 남깁니다.

    Args:
        snapshot: 스냅샷
        grid: 대상 격자
        return_mask: True 면 (값, 빈 영역 마스크) 를 돌려줍니다.
    """
    values = grid.reshape(sample(snapshot, grid.positions()))
    holes = grid_holes(snapshot, grid)
    if holes.any():
        logger.warning("t=%.6f s 스냅샷: 격자점 %d개 주변에 노드가 없습니다.", snapshot.t, int(holes.sum()))
    if return_mask:
        return values, holes
    return values


class CircleProbe(NamedTuple):
    """원 위 등각 표본"""
    angles: np.ndarray
    values: np.ndarray
    mean: float
    std: float


def circle_probe(snapshot: SnapshotField, center: Sequence[float], radius: float, n: int = 360) -> CircleProbe:
    """
    원 위 n 개 점의 값과 평균, 표준편차. 등방 매질의 원형 파면이면 표준편차가 작아야 합니다.
    """
    if not radius > 0 or n < 2:
        raise ConfigurationError(f"반지름은 양수, 점 수는 2 이상이어야 합니다: {radius}, {n}")
    angles = 2.0 * np.pi * np.arange(n) / n
    points = np.column_stack([center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)])
    values = sample(snapshot, points)
    return CircleProbe(angles, values, float(np.mean(values)), float(np.std(values)))


def cross_section(snapshot: SnapshotField, start: Sequence[float], end: Sequence[float], n: int = 200) -> Tuple[np.ndarray, np.ndarray]:
    """
    두 점을 잇는 선분 위의 값

    Returns:
        Tuple[np.ndarray, np.ndarray]: (시작점으로부터의 거리, 값)
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    ts = np.linspace(0.0, 1.0, n)
    points = start[None, :] + ts[:, None] * (end - start)[None, :]
    return ts * float(np.hypot(*(end - start))), sample(snapshot, points)


def radial_profile(snapshot: SnapshotField, center: Sequence[float], radii: np.ndarray, n_angles: int = 64) -> np.ndarray:
    """반지름별 원 평균 값"""
    radii = np.asarray(radii, dtype=float)
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    xs = center[0] + radii[:, None] * np.cos(angles)[None, :]
    zs = center[1] + radii[:, None] * np.sin(angles)[None, :]
    values = sample(snapshot, np.column_stack([xs.ravel(), zs.ravel()]))
    return values.reshape(len(radii), n_angles).mean(axis=1)


def envelope(values: np.ndarray) -> np.ndarray:
    """해석 신호 포락선 |values + i·H[values]|"""
    return np.abs(scipy.signal.hilbert(np.asarray(values, dtype=float)))


def envelope_peak(coordinates: np.ndarray, values: np.ndarray) -> float:
    """포락선 최댓값 위치 (포물선 보정)"""
    env = envelope(values)
    k = int(np.argmax(env))
    if 0 < k < len(env) - 1:
        left, mid, right = env[k - 1], env[k], env[k + 1]
        denominator = left - 2.0 * mid + right
        if denominator < 0:
            shift = 0.5 * (left - right) / denominator
            return float(coordinates[k] + shift * (coordinates[1] - coordinates[0]))
    return float(coordinates[k])


def wavefront_radius(snapshot: SnapshotField, center: Sequence[float], r_max: float, dr: Optional[float] = None, r_min: float = 0.0) -> float:
    """
    원 평균 반경 방향 프로파일의 포락선 최댓값으로 파면 반경을 추정합니다.
    """
    if not r_max > r_min:
        raise ConfigurationError(f"r_max({r_max}) 는 r_min({r_min}) 보다 커야 합니다.")
    if dr is None:
        dr = (r_max - r_min) / 400.0
    radii = np.arange(r_min, r_max + 0.5 * dr, dr)
    return envelope_peak(radii, radial_profile(snapshot, center, radii))


def dominant_wavelength(values: np.ndarray, ds: float, pad: int = 4096) -> float:
    """
    공간 신호의 파워 가중 평균 파수로부터 지배 파장을 추정합니다.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 4 or not ds > 0:
        raise ConfigurationError("파장 추정에는 4개 이상의 샘플과 양의 간격이 필요합니다.")
    n = max(pad, len(values))
    power = np.abs(np.fft.rfft(values - values.mean(), n=n)) ** 2
    frequencies = np.fft.rfftfreq(n, d=ds)
    mean_frequency = float(np.sum(frequencies * power) / np.sum(power))
    return 1.0 / mean_frequency


def difference_field(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """격자 필드의 원소별 |a - b|"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigurationError(f"필드 크기가 다릅니다: {a.shape}, {b.shape}")
    return np.abs(a - b)


def difference_summary(reference: np.ndarray, other: np.ndarray) -> Dict[str, float]:
    """두 격자 필드 차이의 요약 통계"""
    reference = np.asarray(reference, dtype=float)
    other = np.asarray(other, dtype=float)
    if reference.shape != other.shape:
        raise ConfigurationError(f"필드 크기가 다릅니다: {reference.shape}, {other.shape}")
    difference = other - reference
    peak = float(np.max(np.abs(reference))) if reference.size else 0.0
    max_difference = float(np.max(np.abs(difference))) if difference.size else 0.0
    return {
        "max_abs_difference": max_difference,
        "rms_difference": float(np.sqrt(np.mean(difference ** 2))) if difference.size else 0.0,
        "reference_peak": peak,
        "relative_max_difference": max_difference / peak if peak > 0 else 0.0,
    }
