from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from app.errors import ConfigurationError
from app.tools.nodes import NodeSet, UniformGrid


@dataclass
class WaveState:
    """
    두 시간 단계의 파동장

    u_prev: 이전 단계 값 u^(n-1)
    u_curr: 현재 단계 값 u^n
    step_index: 현재 단계 번호 n
    t: 현재 시각 (s)
    """
    u_prev: np.ndarray
    u_curr: np.ndarray
    step_index: int = 0
    t: float = 0.0

    def __post_init__(self):
        self.u_prev = np.asarray(self.u_prev, dtype=float)
        self.u_curr = np.asarray(self.u_curr, dtype=float)
        if self.u_prev.shape != self.u_curr.shape:
            raise ConfigurationError("두 시간 단계의 필드 길이가 다릅니다.")

    @classmethod
    def at_rest(cls, node_count: int) -> "WaveState":
        return cls(np.zeros(node_count), np.zeros(node_count))

    @property
    def node_count(self) -> int:
        return len(self.u_curr)

    def reversed(self) -> "WaveState":
        """두 단계를 맞바꾼 상태 (시간 역전 검사용)"""
        return WaveState(self.u_curr.copy(), self.u_prev.copy(), self.step_index, self.t)


@dataclass
class SnapshotField:
    """
    한 시각의 노드별 파동장. 격자 해석에서 나온 경우 grid 를 함께 가집니다.

    requested_t 는 시나리오가 요청한 시각, t 는 dt 단계로 맞춘 실제 시각입니다.
    spacing 은 노드별 국소 간격으로, 격자 보간 시 빈 영역 판정에 씁니다.
    """
    t: float
    positions: np.ndarray
    values: np.ndarray
    backend: str
    grid: Optional[UniformGrid] = None
    requested_t: Optional[float] = None
    spacing: Optional[np.ndarray] = None

    @property
    def label_t(self) -> float:
        return self.t if self.requested_t is None else self.requested_t


@dataclass
class Seismogram:
    """수신기별 시간 이력. values 는 (시간 수, 수신기 수) 배열입니다."""
    receivers: np.ndarray
    receiver_depth: float
    times: np.ndarray
    values: np.ndarray

    def trace(self, receiver: int) -> np.ndarray:
        return self.values[:, receiver]


@dataclass
class ProbeTraces:
    """지정 위치의 매 스텝 값. values 는 (시간 수, 프로브 수) 배열입니다."""
    positions: np.ndarray
    times: np.ndarray
    values: np.ndarray


@dataclass
class RunArtifacts:
    """한 번의 시뮬레이션 실행 결과"""
    scenario: str
    backend: str
    nodes: NodeSet
    dt: float
    n_steps: int
    snapshots: List[SnapshotField] = field(default_factory=list)
    seismogram: Optional[Seismogram] = None
    probes: Optional[ProbeTraces] = None
    diagnostics: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    def snapshot_at(self, t: float) -> SnapshotField:
        """가장 가까운 시각의 스냅샷"""
        if not self.snapshots:
            raise ConfigurationError("저장된 스냅샷이 없습니다.")
        return min(self.snapshots, key=lambda snapshot: abs(snapshot.t - t))
