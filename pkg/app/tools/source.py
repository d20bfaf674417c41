import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.errors import ConfigurationError
from app.tools.nodes import NodeSet

logger = logging.getLogger(__name__)

# 지연 시간을 지정하지 않으면 t_delay = 5·σ_R
DEFAULT_DELAY_FACTOR = 5.0
DEFAULT_EPSILON = 4.0


@dataclass(frozen=True)
class RickerSource:
    """
    리커 파형을 갖는 점 음원

    Args:
        x, z: 음원 위치 (m)
        s0: 진폭
        sigma_r: 파형 폭 (s)
        epsilon: 델타 근사 폭 ε (m)
        t_delay: 주입 지연 시간 (s), None 이면 5·σ_R
    """
    x: float
    z: float
    s0: float = 1.0
    sigma_r: float = 0.00147
    epsilon: float = DEFAULT_EPSILON
    t_delay: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_r > 0:
            raise ConfigurationError(f"σ_R 은 양수여야 합니다: {self.sigma_r}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"ε 는 양수여야 합니다: {self.epsilon}")
        if self.t_delay is None:
            object.__setattr__(self, "t_delay", DEFAULT_DELAY_FACTOR * self.sigma_r)
        elif self.t_delay < 0:
            raise ConfigurationError(f"지연 시간은 음수일 수 없습니다: {self.t_delay}")

    @property
    def position(self):
        return np.array([self.x, self.z])


def ricker(src: RickerSource, t):
    """
    리커 파형 s(t) = s0·(2/(√(3σ)·π^(1/4)))·(1 - (t/σ)²)·exp(-t²/(2σ²))
    """
    t = np.asarray(t, dtype=float)
    sigma = src.sigma_r
    amplitude = src.s0 * 2.0 / (np.sqrt(3.0 * sigma) * np.pi ** 0.25)
    ratio2 = (t / sigma) ** 2
    return amplitude * (1.0 - ratio2) * np.exp(-0.5 * ratio2)


def delta_approx(src: RickerSource, x, z):
    """
    정규화된 점 음원 δ̃(r) = (1/π)·ε/(r² + ε²)
    """
    r2 = (np.asarray(x, dtype=float) - src.x) ** 2 + (np.asarray(z, dtype=float) - src.z) ** 2
    return src.epsilon / (np.pi * (r2 + src.epsilon ** 2))


def source_field(src: RickerSource, nodes: NodeSet, t: float) -> np.ndarray:
    """
    노드별 음원 값 ricker(t)·δ̃(노드). 경계 노드는 0 입니다.
    """
    profile = np.where(nodes.interior_mask, delta_approx(src, nodes.x, nodes.z), 0.0)
    return float(ricker(src, t)) * profile


class PointSource:
    """
    노드 집합에 고정된 음원. 공간 분포를 한 번만 계산하고 시간마다 지연된 리커 값을 곱합니다.
    """

    def __init__(self, src: RickerSource, nodes: NodeSet):
        self.src = src
        self.profile = np.where(nodes.interior_mask, delta_approx(src, nodes.x, nodes.z), 0.0)
        spacing = nodes.spacing[nodes.nearest(src.x, src.z)]
        if src.epsilon < spacing:
            logger.warning("음원 폭 ε=%.3g m 가 음원 근처 노드 간격 %.3g m 보다 작습니다.", src.epsilon, spacing)

    def injected(self, t: float) -> float:
        return float(ricker(self.src, t - self.src.t_delay))

    def field(self, t: float) -> np.ndarray:
        return self.injected(t) * self.profile
