import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from app.errors import ConfigurationError

logger = logging.getLogger(__name__)

# 최소 간격 계수 γ: 두 노드는 γ·min(a(p), a(q)) 보다 가까울 수 없음
DEFAULT_SEPARATION = 0.75
# 노드 하나를 확장할 때 원 위에 생성하는 후보 수
DEFAULT_CANDIDATES = 15
# 간격 함수 양수 검사에 사용하는 탐색 격자 크기
SPACING_PROBE_RESOLUTION = 64


class NodeKind(IntEnum):
    """노드 분류"""
    INTERIOR = 0
    TOP_BOUNDARY = 1
    SIDE_OR_BOTTOM_BOUNDARY = 2


@dataclass(frozen=True)
class Rect:
    """
    직사각형 계산 영역. z 축은 아래 방향이며 z_min 이 지표면(상단 경계)입니다.
    """
    x_min: float
    x_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ConfigurationError(f"x_min({self.x_min}) < x_max({self.x_max}) 이어야 합니다.")
        if not self.z_min < self.z_max:
            raise ConfigurationError(f"z_min({self.z_min}) < z_max({self.z_max}) 이어야 합니다.")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.z_max - self.z_min

    @property
    def z_top(self) -> float:
        return self.z_min

    def contains(self, x: float, z: float) -> bool:
        return self.x_min <= x <= self.x_max and self.z_min <= z <= self.z_max


class SpacingField:
    """
    목표 노드 간격 a(x, z) 를 주는 함수와 평균 간격을 묶은 타입

    Args:
        evaluator: (x 배열, z 배열) -> 간격 배열 (m)
        average_spacing: 흡수층 연속형 계산에 쓰이는 평균 간격 (m)
    """

    def __init__(self, evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray], average_spacing: float):
        if not average_spacing > 0:
            raise ConfigurationError(f"평균 간격은 양수여야 합니다: {average_spacing}")
        self._evaluator = evaluator
        self.average_spacing = float(average_spacing)

    def __call__(self, x, z) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        x, z = np.broadcast_arrays(x, z)
        return np.asarray(self._evaluator(x, z), dtype=float)

    def at(self, x: float, z: float) -> float:
        return float(self(np.array([x]), np.array([z]))[0])

    @classmethod
    def constant(cls, a: float) -> "SpacingField":
        if not a > 0:
            raise ConfigurationError(f"노드 간격은 양수여야 합니다: {a}")
        return cls(lambda x, z: np.full(np.shape(x), float(a)), a)

    def probe(self, domain: Rect, resolution: int = SPACING_PROBE_RESOLUTION) -> np.ndarray:
        """영역 전체를 균일 격자로 샘플링한 간격 값"""
        xs = np.linspace(domain.x_min, domain.x_max, resolution)
        zs = np.linspace(domain.z_min, domain.z_max, resolution)
        gx, gz = np.meshgrid(xs, zs)
        return self(gx.ravel(), gz.ravel())

    def validate(self, domain: Rect) -> Tuple[float, float]:
        """
        간격 함수가 영역 전체에서 양수이고 유한한지 확인합니다.

        Returns:
            Tuple[float, float]: 샘플링된 최소/최대 간격

        Raises:
            ConfigurationError: 양수가 아닌 값이 샘플링된 경우
        """
        values = self.probe(domain)
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ConfigurationError("노드 간격 함수가 영역 내에서 양수가 아닌 값을 가집니다.")
        return float(values.min()), float(values.max())


@dataclass(frozen=True)
class NodeSet:
    """
    산점 노드 집합 (이산 영역 Ω)

    positions: (N, 2) 배열 [x, z]
    kinds: (N,) NodeKind 값
    spacing: (N,) 노드 위치에서의 목표 간격 a
    """
    positions: np.ndarray
    kinds: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        positions = np.ascontiguousarray(self.positions, dtype=float).reshape(-1, 2)
        kinds = np.ascontiguousarray(self.kinds, dtype=np.int8).reshape(-1)
        spacing = np.ascontiguousarray(self.spacing, dtype=float).reshape(-1)
        if not (len(positions) == len(kinds) == len(spacing)):
            raise ConfigurationError("노드 위치, 분류, 간격 배열의 길이가 다릅니다.")
        for array in (positions, kinds, spacing):
            array.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "spacing", spacing)

    @property
    def size(self) -> int:
        return len(self.positions)

    def __len__(self) -> int:
        return self.size

    @property
    def x(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def z(self) -> np.ndarray:
        return self.positions[:, 1]

    @property
    def interior_mask(self) -> np.ndarray:
        return self.kinds == NodeKind.INTERIOR

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.kinds != NodeKind.INTERIOR

    @property
    def top_mask(self) -> np.ndarray:
        return self.kinds == NodeKind.TOP_BOUNDARY

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    def nearest(self, x: float, z: float) -> int:
        """(x, z) 에 가장 가까운 노드 인덱스 (동률이면 작은 인덱스)"""
        d2 = (self.x - x) ** 2 + (self.z - z) ** 2
        return int(np.argmin(d2))


def classify_boundary(node: Sequence[float], domain: Rect) -> NodeKind:
    """
    노드 위치를 상단 경계 / 측면·하단 경계 / 내부로 분류합니다.

    Args:
        node: (x, z) 위치
        domain: 계산 영역

    Returns:
        NodeKind: 노드 분류
    """
    x, z = float(node[0]), float(node[1])
    if z == domain.z_top:
        return NodeKind.TOP_BOUNDARY
    if x == domain.x_min or x == domain.x_max or z == domain.z_max:
        return NodeKind.SIDE_OR_BOTTOM_BOUNDARY
    return NodeKind.INTERIOR


def classify_positions(positions: np.ndarray, domain: Rect) -> np.ndarray:
    """classify_boundary 의 배열 버전"""
    x, z = positions[:, 0], positions[:, 1]
    kinds = np.full(len(positions), NodeKind.INTERIOR, dtype=np.int8)
    side = (x == domain.x_min) | (x == domain.x_max) | (z == domain.z_max)
    kinds[side] = NodeKind.SIDE_OR_BOTTOM_BOUNDARY
    kinds[z == domain.z_top] = NodeKind.TOP_BOUNDARY
    return kinds


def edge_distances(positions: np.ndarray, domain: Rect) -> Tuple[np.ndarray, np.ndarray]:
    """
    각 위치에서 상단 경계까지의 거리와 나머지 세 경계까지의 최단 거리

    Returns:
        Tuple[np.ndarray, np.ndarray]: (상단 거리, 측면·하단 최단 거리)
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    x, z = positions[:, 0], positions[:, 1]
    top = z - domain.z_min
    others = np.minimum(np.minimum(x - domain.x_min, domain.x_max - x), domain.z_max - z)
    return top, others


def distance_to_boundary(p: Sequence[float], domain: Rect, exclude_top: bool = False) -> float:
    """
    영역 경계까지의 최단 거리

    Args:
        p: (x, z) 위치 (영역 내부)
        domain: 계산 영역
        exclude_top: True 면 상단 경계(지표면)를 제외
    """
    top, others = edge_distances(np.array([p], dtype=float), domain)
    if exclude_top:
        return float(others[0])
    return float(min(top[0], others[0]))


class _BucketIndex:
    """노드 생성 중 근접 노드 검사를 위한 균일 버킷 격자"""

    def __init__(self, origin: Tuple[float, float], cell: float):
        self.x0, self.z0 = origin
        self.cell = cell
        self.buckets: Dict[Tuple[int, int], List[int]] = {}
        self.xs: List[float] = []
        self.zs: List[float] = []

    def _key(self, x: float, z: float) -> Tuple[int, int]:
        return int(math.floor((x - self.x0) / self.cell)), int(math.floor((z - self.z0) / self.cell))

    def add(self, x: float, z: float) -> int:
        index = len(self.xs)
        self.xs.append(x)
        self.zs.append(z)
        self.buckets.setdefault(self._key(x, z), []).append(index)
        return index

    def is_free(self, x: float, z: float, radius: float) -> bool:
        r2 = radius * radius
        reach = int(math.ceil(radius / self.cell))
        cx, cz = self._key(x, z)
        xs, zs = self.xs, self.zs
        for i in range(cx - reach, cx + reach + 1):
            for j in range(cz - reach, cz + reach + 1):
                bucket = self.buckets.get((i, j))
                if not bucket:
                    continue
                for k in bucket:
                    dx = xs[k] - x
                    dz = zs[k] - z
                    if dx * dx + dz * dz < r2:
                        return False
        return True

    def __len__(self) -> int:
        return len(self.xs)


def _edge_parameters(start: np.ndarray, end: np.ndarray, spacing: SpacingField) -> np.ndarray:
    """한 변을 국소 간격으로 걸어가며 시작점 포함, 끝점 제외 매개변수를 만듭니다."""
    length = float(np.hypot(*(end - start)))
    direction = (end - start) / length
    ts = [0.0]
    while True:
        point = start + ts[-1] * direction
        step = spacing.at(point[0], point[1])
        ts.append(ts[-1] + step)
        if ts[-1] >= length:
            break
    ts = np.asarray(ts)
    # 마지막 구간이 끝점과 맞도록 전체를 균일하게 압축하거나 늘림
    compress = length / ts[-1]
    stretch = length / ts[-2] if len(ts) > 2 else np.inf
    if abs(math.log(compress)) <= abs(math.log(stretch)):
        ts = ts * compress
    else:
        ts = ts[:-1] * stretch
    return ts[:-1]


def generate_nodes(
    domain: Rect,
    spacing: SpacingField,
    seed: int = 0,
    separation: float = DEFAULT_SEPARATION,
    candidates: int = DEFAULT_CANDIDATES,
) -> NodeSet:
    """
    속도 적응형 산점 노드를 생성합니다.

    경계 네 변을 국소 간격으로 먼저 나눈 뒤, 경계 노드에서 출발하는 전진 전선 방식으로
    내부를 채웁니다. 각 노드 p 주위 반지름 a(p) 원 위에 후보를 만들고, 기존 노드와
    γ·a 보다 가까운 후보는 버립니다.

    Args:
        domain: 계산 영역
        spacing: 목표 간격 함수
        seed: 후보 회전각 난수 시드
        separation: 최소 간격 계수 γ
        candidates: 확장당 후보 수

    Returns:
        NodeSet: 생성된 노드 집합

    Raises:
        ConfigurationError: 간격 함수가 양수가 아니거나 파라미터가 잘못된 경우
    """
    if not 0 < separation < 1:
        raise ConfigurationError(f"최소 간격 계수는 (0, 1) 범위여야 합니다: {separation}")
    if candidates < 3:
        raise ConfigurationError(f"후보 수는 3 이상이어야 합니다: {candidates}")
    a_min, a_max = spacing.validate(domain)

    rng = np.random.default_rng(seed)
    index = _BucketIndex((domain.x_min, domain.z_min), separation * a_min)

    corners = [
        np.array([domain.x_min, domain.z_min]),
        np.array([domain.x_max, domain.z_min]),
        np.array([domain.x_max, domain.z_max]),
        np.array([domain.x_min, domain.z_max]),
    ]
    for k in range(4):
        start, end = corners[k], corners[(k + 1) % 4]
        direction = (end - start) / np.hypot(*(end - start))
        for t in _edge_parameters(start, end, spacing):
            point = start + t * direction
            # 변 위의 좌표는 정확히 경계값으로 고정
            if k % 2 == 0:
                point[1] = start[1]
            else:
                point[0] = start[0]
            index.add(float(point[0]), float(point[1]))
    boundary_count = len(index)

    angles = 2.0 * np.pi * np.arange(candidates) / candidates
    unit = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    queue = deque(range(boundary_count))
    while queue:
        i = queue.popleft()
        px, pz = index.xs[i], index.zs[i]
        radius = spacing.at(px, pz)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        rotation = np.array([[np.cos(phase), -np.sin(phase)], [np.sin(phase), np.cos(phase)]])
        offsets = unit @ rotation.T * radius
        cx = px + offsets[:, 0]
        cz = pz + offsets[:, 1]
        inside = (cx > domain.x_min) & (cx < domain.x_max) & (cz > domain.z_min) & (cz < domain.z_max)
        if not inside.any():
            continue
        cx, cz = cx[inside], cz[inside]
        local = spacing(cx, cz)
        for x, z, a in zip(cx.tolist(), cz.tolist(), local.tolist()):
            if index.is_free(x, z, separation * a):
                queue.append(index.add(x, z))

    positions = np.column_stack([index.xs, index.zs])
    kinds = classify_positions(positions, domain)
    node_spacing = spacing(positions[:, 0], positions[:, 1])
    logger.info(
        "노드 생성 완료: 총 %d개 (경계 %d개), 간격 %.4g~%.4g m", len(positions), boundary_count, a_min, a_max
    )
    return NodeSet(positions=positions, kinds=kinds, spacing=node_spacing)


@dataclass(frozen=True)
class UniformGrid:
    """
    균일 격자. 노드 인덱스는 j·nx + i (j 는 지표면부터 아래로 증가) 입니다.
    """
    nx: int
    nz: int
    h: float
    x0: float = 0.0
    z0: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.nz < 2:
            raise ConfigurationError(f"격자는 각 방향 2개 이상의 점이 필요합니다: {self.nx}×{self.nz}")
        if not self.h > 0:
            raise ConfigurationError(f"격자 간격은 양수여야 합니다: {self.h}")

    @classmethod
    def covering(cls, domain: Rect, h: float) -> "UniformGrid":
        """
        영역을 정확히 덮는 격자

        Raises:
            ConfigurationError: 영역 크기가 h 의 정수배가 아닌 경우
        """
        if not h > 0:
            raise ConfigurationError(f"격자 간격은 양수여야 합니다: {h}")
        nx = int(round(domain.width / h)) + 1
        nz = int(round(domain.height / h)) + 1
        if abs((nx - 1) * h - domain.width) > 1e-9 * domain.width or abs((nz - 1) * h - domain.height) > 1e-9 * domain.height:
            raise ConfigurationError(f"영역 크기가 격자 간격 {h} 의 정수배가 아닙니다.")
        return cls(nx=nx, nz=nz, h=float(h), x0=domain.x_min, z0=domain.z_min)

    @property
    def size(self) -> int:
        return self.nx * self.nz

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def zs(self) -> np.ndarray:
        return self.z0 + self.h * np.arange(self.nz)

    @property
    def domain(self) -> Rect:
        return Rect(self.x0, self.x0 + self.h * (self.nx - 1), self.z0, self.z0 + self.h * (self.nz - 1))

    def positions(self) -> np.ndarray:
        gx, gz = np.meshgrid(self.xs, self.zs)
        return np.column_stack([gx.ravel(), gz.ravel()])

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """노드 값 (N,) 을 (nz, nx) 배열로 변환"""
        return np.asarray(values).reshape(self.nz, self.nx)


def grid_nodes(domain: Rect, h: float) -> NodeSet:
    """
    영역을 덮는 균일 격자 노드 집합

    Raises:
        ConfigurationError: 영역 크기가 h 의 정수배가 아닌 경우
    """
    grid = UniformGrid.covering(domain, h)
    positions = grid.positions()
    # 마지막 행과 열은 경계값과 정확히 일치시킴
    positions[positions[:, 0] >= domain.x_max - 1e-9 * h, 0] = domain.x_max
    positions[positions[:, 1] >= domain.z_max - 1e-9 * h, 1] = domain.z_max
    return NodeSet(positions=positions, kinds=classify_positions(positions, domain), spacing=np.full(len(positions), h))


class NeighborQuery:
    """
    노드 위치에 대한 정확한 k-최근접 이웃 검색 (k-d 트리)

    거리 동률은 작은 노드 인덱스가 먼저 오도록 정렬합니다.
    """

    # 상대 오차 범위 안의 거리는 동률로 취급
    TIE_TOLERANCE = 1e-9

    def __init__(self, positions: np.ndarray):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        self.tree = cKDTree(self.positions)

    @property
    def size(self) -> int:
        return len(self.positions)

    def _order(self, distances: np.ndarray, indices: np.ndarray, scale: np.ndarray) -> np.ndarray:
        quantized = np.round(distances / scale[..., None] / self.TIE_TOLERANCE)
        return np.lexsort((indices, quantized), axis=-1)

    def knn_many(self, centers: np.ndarray, k: int) -> np.ndarray:
        """
        여러 중심점의 k-최근접 이웃 인덱스

        Returns:
            np.ndarray: (M, k) 인덱스, 각 행은 거리 오름차순

        Raises:
            ConfigurationError: k 가 노드 수보다 큰 경우
        """
        if k < 1 or k > self.size:
            raise ConfigurationError(f"k={k} 는 1 이상, 노드 수({self.size}) 이하여야 합니다.")
        centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        extra = min(k + 1, self.size)
        distances, indices = self.tree.query(centers, k=extra)
        distances = distances.reshape(len(centers), extra)
        indices = indices.reshape(len(centers), extra)

        kth = distances[:, k - 1]
        scale = np.maximum(kth, np.finfo(float).tiny)
        if extra > k:
            ambiguous = distances[:, k] - kth <= self.TIE_TOLERANCE * scale
        else:
            ambiguous = np.zeros(len(centers), dtype=bool)

        order = self._order(distances[:, :k], indices[:, :k], scale)
        result = np.take_along_axis(indices[:, :k], order, axis=1)

        # k 번째 거리에서 동률이 있는 행은 반경 검색으로 전체 동률 후보를 모은 뒤 다시 정렬
        for row in np.flatnonzero(ambiguous):
            radius = kth[row] * (1.0 + 2.0 * self.TIE_TOLERANCE)
            pool = np.asarray(self.tree.query_ball_point(centers[row], radius), dtype=int)
            d = np.hypot(*(self.positions[pool] - centers[row]).T)
            local = self._order(d[None, :], pool[None, :], scale[row:row + 1])[0]
            result[row] = pool[local[:k]]
        return result

    def knn(self, center: Sequence[float], k: int) -> List[int]:
        return self.knn_many(np.asarray(center, dtype=float)[None, :], k)[0].tolist()


def knn(query: NeighborQuery, center: Sequence[float], k: int) -> List[int]:
    """
    center 에서 가장 가까운 k 개 노드 인덱스 (거리 오름차순, 동률은 인덱스 순)

    Raises:
        ConfigurationError: k 가 노드 수보다 큰 경우
    """
    return query.knn(center, k)
