import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from app.errors import ConfigurationError, NumericalBlowUpError, StabilityError
from app.state import WaveState
from app.tools.nodes import NodeSet, Rect, UniformGrid, edge_distances
from app.tools.source import PointSource

logger = logging.getLogger(__name__)

CERJAN_COEFFICIENT = 0.015
DEFAULT_CFL = 1.0 / np.sqrt(2.0)
# 전체 NaN 검사 주기 (스텝)
FULL_CHECK_INTERVAL = 100
# 매 스텝 NaN 검사에 쓰는 표본 수
CHECK_SAMPLES = 512
# 안정성 보고의 깊이 구간 수
STABILITY_BANDS = 8


class Operator(Protocol):
    """노드 값에 라플라시안을 적용하는 연산자"""

    @property
    def node_count(self) -> int: ...

    def apply(self, u: np.ndarray) -> np.ndarray: ...


def damping_profile(index_distance, i_max: int, coefficient: float = CERJAN_COEFFICIENT) -> np.ndarray:
    """
    흡수층 감쇠 계수 G(i) = exp(-[c·(i_max - i)]²), i >= i_max 이면 1
    """
    i = np.asarray(index_distance, dtype=float)
    return np.where(i < i_max, np.exp(-(coefficient * (i_max - i)) ** 2), 1.0)


@dataclass(frozen=True)
class AbsorbingLayer:
    """노드별 감쇠 계수 G 와 생성 파라미터"""
    factors: np.ndarray
    i_max: int
    average_spacing: float
    coefficient: float = CERJAN_COEFFICIENT

    @property
    def damped_count(self) -> int:
        return int(np.count_nonzero(self.factors < 1.0))


def damping(p: Sequence[float], domain: Rect, i_max: int, average_spacing: float, coefficient: float = CERJAN_COEFFICIENT) -> float:
    """
    위치 p 의 감쇠 계수. 가장 가까운 경계가 지표면이면 감쇠하지 않습니다.

    Args:
        p: (x, z) 위치
        domain: 계산 영역
        i_max: 흡수층 두께 (노드 수)
        average_spacing: 평균 노드 간격 a (m)
    """
    top, others = edge_distances(np.array([p], dtype=float), domain)
    if top[0] < others[0]:
        return 1.0
    return float(damping_profile(others[0] / average_spacing, i_max, coefficient))


def build_damping(nodes: NodeSet, domain: Rect, i_max: int, average_spacing: float, coefficient: float = CERJAN_COEFFICIENT) -> AbsorbingLayer:
    """
    산점 노드용 연속형 흡수층. i = (측면·하단까지의 거리)/a 입니다.

    Raises:
        ConfigurationError: i_max 가 음수이거나 평균 간격이 양수가 아닌 경우
    """
    if i_max < 0:
        raise ConfigurationError(f"흡수층 두께는 음수일 수 없습니다: {i_max}")
    if not average_spacing > 0:
        raise ConfigurationError(f"평균 간격은 양수여야 합니다: {average_spacing}")
    top, others = edge_distances(nodes.positions, domain)
    factors = damping_profile(others / average_spacing, i_max, coefficient)
    factors[top < others] = 1.0
    return AbsorbingLayer(factors=factors, i_max=i_max, average_spacing=average_spacing, coefficient=coefficient)


def build_grid_damping(grid: UniformGrid, i_max: int, coefficient: float = CERJAN_COEFFICIENT) -> AbsorbingLayer:
    """격자용 인덱스형 흡수층. i 는 측면·하단까지의 격자 칸 수입니다."""
    if i_max < 0:
        raise ConfigurationError(f"흡수층 두께는 음수일 수 없습니다: {i_max}")
    ix = np.arange(grid.nx)[None, :]
    jz = np.arange(grid.nz)[:, None]
    others = np.minimum(np.minimum(ix, grid.nx - 1 - ix), grid.nz - 1 - jz)
    top = np.broadcast_to(jz, others.shape)
    factors = damping_profile(others, i_max, coefficient)
    factors[top < others] = 1.0
    return AbsorbingLayer(factors=factors.ravel(), i_max=i_max, average_spacing=grid.h, coefficient=coefficient)


@dataclass
class StepperConfig:
    """
    시간 적분 설정

    dt: 시간 간격 (s)
    velocity_squared: 노드별 v²
    boundary_mask: 디리클레 경계 노드 표시
    cfl_constant: 안정성 상수 C
    """
    dt: float
    velocity_squared: np.ndarray
    boundary_mask: np.ndarray
    cfl_constant: float = DEFAULT_CFL

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"시간 간격은 양수여야 합니다: {self.dt}")
        if len(self.velocity_squared) != len(self.boundary_mask):
            raise ConfigurationError("속도 배열과 경계 표시 배열의 길이가 다릅니다.")


@dataclass(frozen=True)
class RegionLimit:
    """깊이 구간 하나의 국소 안정 한계 C·min(a/v)"""
    z_min: float
    z_max: float
    node_count: int
    dt_max: float


def stability_regions(
    z: np.ndarray, spacing_over_velocity: np.ndarray, cfl_constant: float = DEFAULT_CFL, bands: int = STABILITY_BANDS
) -> Tuple[RegionLimit, ...]:
    """
    노드를 같은 두께의 깊이 구간으로 나눠 구간별 국소 안정 한계를 계산합니다.
    노드가 없는 구간은 빠집니다.
    """
    z = np.asarray(z, dtype=float)
    ratio = np.asarray(spacing_over_velocity, dtype=float)
    if len(z) != len(ratio):
        raise ConfigurationError("노드 깊이와 a/v 배열의 길이가 다릅니다.")
    if len(z) == 0:
        return ()
    edges = np.linspace(float(z.min()), float(z.max()), bands + 1)
    index = np.clip(np.searchsorted(edges, z, side="right") - 1, 0, bands - 1)
    regions = []
    for band in range(bands):
        mask = index == band
        if mask.any():
            regions.append(
                RegionLimit(float(edges[band]), float(edges[band + 1]), int(mask.sum()), cfl_constant * float(ratio[mask].min()))
            )
    return tuple(regions)


@dataclass(frozen=True)
class StabilityReport:
    """
    CFL 안정성 판정 결과

    dt_max 는 C·(최소 간격)/(최대 속도) 전역 한계이고, dt_max_local 은 노드별 C·a/v 의 최솟값입니다.
    국소 값이 있으면 판정에 국소 값을 씁니다. regions 는 깊이 구간별 국소 한계입니다.
    """
    dt: float
    dt_max: float
    dt_max_local: Optional[float]
    cfl_constant: float
    regions: Tuple[RegionLimit, ...] = ()

    @property
    def governing(self) -> float:
        return self.dt_max_local if self.dt_max_local is not None else self.dt_max

    @property
    def passed(self) -> bool:
        return self.dt <= self.governing

    @property
    def global_passed(self) -> bool:
        return self.dt <= self.dt_max

    def describe(self) -> str:
        local = f", 국소 한계 {self.dt_max_local:.4g} s" if self.dt_max_local is not None else ""
        verdict = "통과" if self.passed else "실패"
        return f"CFL 검사 {verdict}: dt={self.dt:.4g} s, 전역 한계 {self.dt_max:.4g} s{local} (C={self.cfl_constant:.4g})"

    def describe_regions(self) -> List[str]:
        """깊이 구간별 한계를 한 줄씩"""
        return [
            f"  z {region.z_min:.4g}~{region.z_max:.4g} m: 노드 {region.node_count}개, 국소 한계 {region.dt_max:.4g} s"
            + (" (위반)" if self.dt > region.dt_max else "")
            for region in self.regions
        ]


def stable_dt(min_spacing: float, max_velocity: float, cfl_constant: float = DEFAULT_CFL) -> float:
    """안정 한계 C·min_spacing/max_velocity"""
    if not (min_spacing > 0 and max_velocity > 0):
        raise ConfigurationError(f"간격과 속도는 양수여야 합니다: {min_spacing}, {max_velocity}")
    return cfl_constant * min_spacing / max_velocity


def check_stability(
    cfg: StepperConfig,
    min_spacing: float,
    max_velocity: float,
    spacing_over_velocity: Optional[np.ndarray] = None,
    depths: Optional[np.ndarray] = None,
    force: bool = False,
) -> StabilityReport:
    """
    CFL 조건을 검사합니다.

    Args:
        cfg: 시간 적분 설정
        min_spacing: 최소 노드 간격 (m)
        max_velocity: 최대 속도 (m/s)
        spacing_over_velocity: 노드별 a/v (있으면 국소 판정)
        depths: 노드별 z (있으면 깊이 구간별 한계를 함께 보고)
        force: True 면 위반 시 경고만 남김

    Raises:
        StabilityError: 조건을 위반하고 force 가 아닌 경우
    """
    dt_max = stable_dt(min_spacing, max_velocity, cfg.cfl_constant)
    dt_max_local = None
    if spacing_over_velocity is not None and len(spacing_over_velocity):
        dt_max_local = cfg.cfl_constant * float(np.min(spacing_over_velocity))
    regions: Tuple[RegionLimit, ...] = ()
    if dt_max_local is not None and depths is not None:
        regions = stability_regions(depths, spacing_over_velocity, cfg.cfl_constant)
    report = StabilityReport(
        dt=cfg.dt, dt_max=dt_max, dt_max_local=dt_max_local, cfl_constant=cfg.cfl_constant, regions=regions
    )
    logger.info(report.describe())
    for line in report.describe_regions():
        logger.info(line)
    if not report.passed:
        if not force:
            raise StabilityError(cfg.dt, report.governing)
        logger.warning("안정성 조건을 위반했지만 강제 실행합니다: %s", report.describe())
    elif not report.global_passed:
        logger.warning("전역 CFL 한계는 넘지만 노드별 국소 한계 안에 있습니다.")
    return report


def _check_finite(u: np.ndarray, step_index: int) -> None:
    stride = max(1, len(u) // CHECK_SAMPLES)
    if not np.all(np.isfinite(u[::stride])):
        raise NumericalBlowUpError(step_index)
    if step_index % FULL_CHECK_INTERVAL == 0 and not np.all(np.isfinite(u)):
        raise NumericalBlowUpError(step_index)


def step(
    state: WaveState,
    op: Operator,
    source: Optional[PointSource],
    damp: Optional[AbsorbingLayer],
    cfg: StepperConfig,
) -> WaveState:
    """
    중앙 차분 한 스텝

    u_next = 2·u_curr - u_prev + dt²·v²·(L u_curr + f(t)) 를 내부 노드에서 계산하고,
    경계 노드는 0 으로 둔 뒤 두 시간 단계 모두에 감쇠 계수를 곱합니다.

    Raises:
        NumericalBlowUpError: NaN/Inf 가 검출된 경우
    """
    forcing = op.apply(state.u_curr)
    if source is not None:
        forcing = forcing + source.field(state.t)
    u_next = 2.0 * state.u_curr - state.u_prev + (cfg.dt * cfg.dt) * cfg.velocity_squared * forcing
    u_next[cfg.boundary_mask] = 0.0
    u_curr = state.u_curr
    if damp is not None:
        u_next *= damp.factors
        u_curr = u_curr * damp.factors
    next_index = state.step_index + 1
    _check_finite(u_next, next_index)
    return WaveState(u_prev=u_curr, u_curr=u_next, step_index=next_index, t=state.t + cfg.dt)
