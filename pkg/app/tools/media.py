import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from app.errors import ConfigurationError
from app.tools.nodes import NodeSet, Rect, SpacingField

logger = logging.getLogger(__name__)

SHEPARD_NEIGHBORS = 8
SHEPARD_POWER = 2.0
# 이동 평균에 쓰는 깊이 방향 샘플 수 (짝수, 구간 중점 규칙)
SMOOTHING_SAMPLES = 16
DEFAULT_SMOOTHING_WINDOW = 40.0


class VelocityModel(ABC):
    """음속 모델 v(x, z) 의 기본 클래스"""

    @abstractmethod
    def velocity(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """위치 배열에서의 속도 (m/s)"""

    @abstractmethod
    def velocity_range(self) -> Tuple[float, float]:
        """모델 전체의 (최소, 최대) 속도"""

    def __call__(self, x, z) -> np.ndarray:
        x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
        return self.velocity(x, z)

    def at_nodes(self, nodes: NodeSet) -> np.ndarray:
        return self(nodes.x, nodes.z)


@dataclass(frozen=True)
class Uniform(VelocityModel):
    v: float

    def __post_init__(self):
        if not self.v > 0:
            raise ConfigurationError(f"속도는 양수여야 합니다: {self.v}")

    def velocity(self, x, z):
        return np.full(np.shape(x), float(self.v))

    def velocity_range(self):
        return float(self.v), float(self.v)


@dataclass(frozen=True)
class TwoLayer(VelocityModel):
    """z >= interface_depth 이면 하부 속도를 쓰는 2층 모델"""
    v_top: float
    v_bottom: float
    interface_depth: float

    def __post_init__(self):
        if not (self.v_top > 0 and self.v_bottom > 0):
            raise ConfigurationError(f"속도는 양수여야 합니다: {self.v_top}, {self.v_bottom}")

    def velocity(self, x, z):
        return np.where(np.asarray(z) >= self.interface_depth, float(self.v_bottom), float(self.v_top))

    def velocity_range(self):
        return min(self.v_top, self.v_bottom), max(self.v_top, self.v_bottom)


class ShepardInterpolator:
    """
    k-최근접 역거리 가중(Shepard) 보간

    샘플과 일치하는 위치에서는 해당 샘플 값을 그대로 돌려줍니다.
    linear=True 이면 역거리 가중 국소 1차 최소제곱(기울기 보정 Shepard)을 사용합니다.

    Args:
        points: (M, 2) 샘플 위치
        k: 사용할 최근접 샘플 수
        power: 역거리 지수
        linear: 기울기 보정 여부
    """

    def __init__(self, points: np.ndarray, k: int = SHEPARD_NEIGHBORS, power: float = SHEPARD_POWER, linear: bool = False):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(self.points) == 0:
            raise ConfigurationError("보간할 샘플이 없습니다.")
        if k < 1:
            raise ConfigurationError(f"k 는 1 이상이어야 합니다: {k}")
        self.k = min(int(k), len(self.points))
        self.power = float(power)
        self.linear = linear
        self.tree = cKDTree(self.points)

    def weights(self, query: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        질의 위치별 (샘플 인덱스, 가중치) 배열. 각 행의 가중치 합은 1 입니다.

        Returns:
            Tuple[np.ndarray, np.ndarray]: (Q, k) 인덱스와 (Q, k) 가중치
        """
        query = np.asarray(query, dtype=float).reshape(-1, 2)
        distances, indices = self.tree.query(query, k=self.k)
        distances = distances.reshape(len(query), self.k)
        indices = indices.reshape(len(query), self.k)

        scale = np.maximum(distances[:, -1], np.finfo(float).tiny)
        exact = distances[:, 0] <= 1e-12 * scale
        safe = np.where(distances > 0, distances, 1.0)
        w = 1.0 / safe ** self.power
        w[distances == 0] = 0.0

        if self.linear and self.k >= 3:
            # 가중 최소제곱 u ≈ c + g·d 에서 c 에 대한 선형 가중치
            offsets = (self.points[indices] - query[:, None, :]) / scale[:, None, None]
            design = np.concatenate([np.ones((len(query), self.k, 1)), offsets], axis=2)
            normal = np.einsum("qk,qki,qkj->qij", w, design, design)
            det = np.linalg.det(normal)
            usable = np.abs(det) > 1e-10 * np.einsum("qii->q", normal) ** 3
            coefficients = w / w.sum(axis=1, keepdims=True)
            if usable.any():
                e1 = np.zeros((int(usable.sum()), 3))
                e1[:, 0] = 1.0
                solution = np.linalg.solve(normal[usable], e1[:, :, None])[:, :, 0]
                coefficients[usable] = w[usable] * np.einsum("qkj,qj->qk", design[usable], solution)
        else:
            coefficients = w / np.maximum(w.sum(axis=1, keepdims=True), np.finfo(float).tiny)

        coefficients[exact] = 0.0
        coefficients[exact, 0] = 1.0
        return indices, coefficients

    def __call__(self, values: np.ndarray, query: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if len(values) != len(self.points):
            raise ConfigurationError(f"값 개수 {len(values)} 가 샘플 수 {len(self.points)} 와 다릅니다.")
        indices, coefficients = self.weights(query)
        return np.sum(values[indices] * coefficients, axis=1)


def shepard_interpolate(samples: np.ndarray, values: np.ndarray, p: Sequence[float], k: int = SHEPARD_NEIGHBORS, power: float = SHEPARD_POWER) -> float:
    """
    k-최근접 Shepard 보간으로 위치 p 의 값을 추정합니다.

    Args:
        samples: (M, 2) 샘플 위치
        values: (M,) 샘플 값
        p: 질의 위치
        k: 최근접 샘플 수
        power: 역거리 지수
    """
    interpolator = ShepardInterpolator(samples, k=k, power=power)
    return float(interpolator(values, np.asarray(p, dtype=float)[None, :])[0])


@dataclass(eq=False)
class Gridded(VelocityModel):
    """
    샘플 기반 속도 모델. 위치를 샘플 경계 상자 안으로 자른 뒤 Shepard 보간합니다.

    Args:
        points: (M, 2) 샘플 위치
        values: (M,) 샘플 속도
    """
    points: np.ndarray
    values: np.ndarray
    k: int = SHEPARD_NEIGHBORS
    power: float = SHEPARD_POWER

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.points) != len(self.values):
            raise ConfigurationError("속도 샘플 위치와 값의 개수가 다릅니다.")
        if len(self.values) == 0:
            raise ConfigurationError("속도 샘플이 비어 있습니다.")
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ConfigurationError("속도 샘플은 모두 양수여야 합니다.")
        self._lower = self.points.min(axis=0)
        self._upper = self.points.max(axis=0)
        self._interpolator = ShepardInterpolator(self.points, k=self.k, power=self.power)

    @classmethod
    def from_grid(cls, values: np.ndarray, dx: float, dz: float, origin: Tuple[float, float] = (0.0, 0.0)) -> "Gridded":
        """
        (nz, nx) 격자 값으로부터 모델 생성. 샘플 위치는 (x0 + i·dx, z0 + j·dz) 입니다.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ConfigurationError("격자 속도 값은 2차원 배열이어야 합니다.")
        if not (dx > 0 and dz > 0):
            raise ConfigurationError(f"격자 간격은 양수여야 합니다: dx={dx}, dz={dz}")
        nz, nx = values.shape
        gx, gz = np.meshgrid(origin[0] + dx * np.arange(nx), origin[1] + dz * np.arange(nz))
        return cls(points=np.column_stack([gx.ravel(), gz.ravel()]), values=values.ravel())

    def velocity(self, x, z):
        query = np.column_stack([np.ravel(x), np.ravel(z)])
        query = np.clip(query, self._lower, self._upper)
        return self._interpolator(self.values, query).reshape(np.shape(x))

    def velocity_range(self):
        return float(self.values.min()), float(self.values.max())


def velocity_at(model: VelocityModel, p: Sequence[float]) -> float:
    """위치 p 에서의 속도"""
    return float(model(np.array([p[0]]), np.array([p[1]]))[0])


def characteristic_period(sigma_r: float) -> float:
    """리커 파형의 특성 주기 T = 2π·σ_R"""
    if not sigma_r > 0:
        raise ConfigurationError(f"σ_R 은 양수여야 합니다: {sigma_r}")
    return 2.0 * np.pi * sigma_r


def _smoothed_step(z: np.ndarray, below: float, above: float, jump_depth: float, window: float) -> np.ndarray:
    """계단 함수 above + (below-above)·H(z-J) 의 폭 W 이동 평균 (닫힌 식)"""
    z = np.asarray(z, dtype=float)
    if window <= 0:
        return np.where(z >= jump_depth, below, above)
    ramp = np.clip((z - jump_depth + window / 2.0) / window, 0.0, 1.0)
    return above + (below - above) * ramp


def delayed_jump_spacing(a_shallow: float, a_deep: float, jump_depth: float, smoothing_window: float = DEFAULT_SMOOTHING_WINDOW) -> SpacingField:
    """
    깊이 jump_depth 에서 a_shallow → a_deep 로 바뀌는 간격을 폭 W 로 평활화한 간격 함수

    Raises:
        ConfigurationError: 간격이 양수가 아니거나 창 폭이 음수인 경우
    """
    if not (a_shallow > 0 and a_deep > 0):
        raise ConfigurationError(f"간격은 양수여야 합니다: {a_shallow}, {a_deep}")
    if smoothing_window < 0:
        raise ConfigurationError(f"평활화 창 폭은 음수일 수 없습니다: {smoothing_window}")

    def evaluate(x, z):
        return _smoothed_step(z, a_deep, a_shallow, jump_depth, smoothing_window)

    return SpacingField(evaluate, 0.5 * (a_shallow + a_deep))


def spacing_from_velocity(
    model: VelocityModel,
    sigma_r: float,
    nodes_per_wavelength: float,
    smoothing_window: float = DEFAULT_SMOOTHING_WINDOW,
    domain: Optional[Rect] = None,
) -> SpacingField:
    """
    속도 모델로부터 파장당 노드 수를 맞추는 간격 함수를 만듭니다.

    a_raw(x, z) = v(x, z)·T / npw 를 깊이 방향 폭 W 이동 평균으로 평활화합니다.
    2층 모델은 닫힌 식을 쓰고, 그 외 모델은 짝수 개 중점 샘플로 평균합니다.

    Args:
        model: 속도 모델
        sigma_r: 리커 폭 파라미터 (s)
        nodes_per_wavelength: 파장당 노드 수
        smoothing_window: 이동 평균 창 폭 W (m)
        domain: 평균 간격 계산에 쓰이는 영역

    Raises:
        ConfigurationError: 입력이 양수가 아닌 경우
    """
    period = characteristic_period(sigma_r)
    if not nodes_per_wavelength > 0:
        raise ConfigurationError(f"파장당 노드 수는 양수여야 합니다: {nodes_per_wavelength}")
    if not smoothing_window > 0:
        raise ConfigurationError(f"평활화 창 폭은 양수여야 합니다: {smoothing_window}")
    factor = period / nodes_per_wavelength

    if isinstance(model, TwoLayer):
        def evaluate(x, z):
            return _smoothed_step(
                z, model.v_bottom * factor, model.v_top * factor, model.interface_depth, smoothing_window
            )
    else:
        offsets = smoothing_window * ((np.arange(SMOOTHING_SAMPLES) + 0.5) / SMOOTHING_SAMPLES - 0.5)

        def evaluate(x, z):
            x = np.asarray(x, dtype=float)
            z = np.asarray(z, dtype=float)
            xs = np.repeat(x.ravel()[:, None], SMOOTHING_SAMPLES, axis=1)
            zs = z.ravel()[:, None] + offsets[None, :]
            return (model(xs, zs).mean(axis=1) * factor).reshape(np.shape(x))

    if domain is not None:
        average = float(SpacingField(evaluate, 1.0).probe(domain).mean())
    else:
        average = float(np.mean(model.velocity_range())) * factor
    return SpacingField(evaluate, average)


def nodes_per_wavelength(nodes: NodeSet, model: VelocityModel, sigma_r: float) -> Tuple[float, float]:
    """
    노드 위치에서의 파장당 노드 수 v·T/a 의 (최소, 평균)
    """
    period = characteristic_period(sigma_r)
    ratio = model.at_nodes(nodes) * period / nodes.spacing
    return float(ratio.min()), float(ratio.mean())
