import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from app.errors import ConfigurationError
from app.interface.config import ScenarioConfig
from app.solvers.stepping import (
    FULL_CHECK_INTERVAL,
    AbsorbingLayer,
    Operator,
    StabilityReport,
    StepperConfig,
    build_damping,
    check_stability,
    step,
)
from app.state import ProbeTraces, RunArtifacts, SnapshotField, WaveState
from app.tools.media import VelocityModel
from app.tools.nodes import NodeSet, SpacingField, UniformGrid
from app.tools.post import PointSampler, SeismogramRecorder
from app.tools.source import PointSource

logger = logging.getLogger(__name__)

# 진행 상황 콜백 호출 횟수
PROGRESS_UPDATES = 50


class BaseSolver(ABC):
    """
    해석기 기본 클래스
    모든 공간 이산화 백엔드는 이 클래스를 상속받아 discretize 를 구현합니다.
    시간 적분, 흡수층, 기록은 백엔드와 관계없이 공통입니다.
    """

    backend: str = ""

    def __init__(self, scenario: ScenarioConfig, threads: Optional[int] = None):
        """
        BaseSolver 초기화

        Args:
            scenario: 시나리오
            threads: 스텐실 계산 스레드 수
        """
        self.scenario = scenario
        self.threads = threads
        self.nodes: Optional[NodeSet] = None
        self.operator: Optional[Operator] = None
        self.grid: Optional[UniformGrid] = None
        self.average_spacing: Optional[float] = None

        # 해석기 상태 초기화
        self.state: Dict[str, Any] = {
            "diagnostics": [],
            "summary": {},
        }

    def update_state(self, key: str, value: Any) -> None:
        """
        해석기 상태 업데이트

        Args:
            key: 상태 키
            value: 상태 값
        """
        self.state[key] = value

    def get_state(self, key: str = None) -> Any:
        """
        해석기 상태 조회

        Args:
            key: 조회할 상태 키 (None이면 전체 상태 반환)

        Returns:
            Any: 상태 값 또는 전체 상태
        """
        if key is None:
            return self.state
        return self.state.get(key)

    def log_diagnostic(self, message: str, **summary: Any) -> None:
        """진단 메시지를 로그와 진단 기록에 남기고, 요약 값이 있으면 함께 저장합니다."""
        logger.info(message)
        self.state["diagnostics"].append(message)
        self.state["summary"].update(summary)

    @abstractmethod
    def discretize(self, model: VelocityModel, spacing: SpacingField, callback: Optional[Callable[[str], None]] = None) -> NodeSet:
        """
        공간 이산화 (추상 메서드). nodes, operator, average_spacing 을 설정해야 합니다.

        Args:
            model: 속도 모델
            spacing: 목표 간격 함수
            callback: 진행 상황 메시지 콜백

        Returns:
            NodeSet: 이산화에 쓰인 노드 집합
        """
        pass

    @property
    def dt(self) -> float:
        return self.scenario.time.dt

    def _require_discretized(self) -> NodeSet:
        if self.nodes is None or self.operator is None:
            raise ConfigurationError("discretize 를 먼저 호출해야 합니다.")
        return self.nodes

    def damping_layer(self) -> AbsorbingLayer:
        nodes = self._require_discretized()
        return build_damping(nodes, self.scenario.domain, self.scenario.abc.i_max, self.average_spacing)

    def stepper_config(self, model: VelocityModel) -> StepperConfig:
        nodes = self._require_discretized()
        velocity = model.at_nodes(nodes)
        return StepperConfig(
            dt=self.dt,
            velocity_squared=velocity ** 2,
            boundary_mask=nodes.boundary_mask,
            cfl_constant=self.scenario.time.cfl_constant,
        )

    def check_stability(self, model: VelocityModel, force: bool = False) -> StabilityReport:
        """
        CFL 검사. 노드별 a/v 로 국소 한계를 함께 계산합니다.

        Raises:
            StabilityError: 조건 위반이고 force 가 아닌 경우
        """
        nodes = self._require_discretized()
        velocity = model.at_nodes(nodes)
        report = check_stability(
            self.stepper_config(model),
            float(nodes.spacing.min()),
            float(velocity.max()),
            spacing_over_velocity=nodes.spacing / velocity,
            depths=nodes.z,
            force=force,
        )
        self.log_diagnostic(
            report.describe(),
            dt=report.dt,
            dt_max=report.dt_max,
            dt_max_local=report.dt_max_local,
            stability_regions=[
                {"z_min": r.z_min, "z_max": r.z_max, "node_count": r.node_count, "dt_max": r.dt_max}
                for r in report.regions
            ],
        )
        self.state["diagnostics"].extend(report.describe_regions())
        return report

    def _receivers(self) -> np.ndarray:
        record = self.scenario.record
        domain = self.scenario.domain
        if record.receivers:
            return np.asarray(record.receivers, dtype=float)
        if record.receiver_spacing:
            count = int(np.floor(domain.width / record.receiver_spacing + 1e-9)) + 1
            return domain.x_min + record.receiver_spacing * np.arange(count)
        return np.empty(0)

    def integrate(self, model: VelocityModel, callback: Optional[Callable[[str], None]] = None) -> RunArtifacts:
        """
        시간 적분을 수행하고 스냅샷, 탄성파 기록, 프로브 기록을 모읍니다.

        Args:
            model: 속도 모델
            callback: 진행 상황 메시지 콜백

        Returns:
            RunArtifacts: 실행 결과

        Raises:
            NumericalBlowUpError: 수치 발산이 검출된 경우
        """
        nodes = self._require_discretized()
        scenario = self.scenario
        record = scenario.record
        cfg = self.stepper_config(model)
        damp = self.damping_layer() if scenario.abc.i_max > 0 else None
        source = PointSource(scenario.source.build(), nodes)
        n_steps = scenario.time.n_steps

        snapshot_steps: Dict[int, float] = {}
        for t in record.snapshot_times:
            snapshot_steps.setdefault(int(round(t / cfg.dt)), t)

        receivers = self._receivers()
        recorder = None
        if len(receivers):
            depth = record.receiver_depth if record.receiver_depth is not None else self.average_spacing
            recorder = SeismogramRecorder(nodes, receivers, depth, scenario.domain.z_top, self.grid)

        probe_positions = np.asarray(record.probes, dtype=float).reshape(-1, 2)
        probe_sampler = PointSampler.for_field(nodes.positions, probe_positions, self.grid) if len(probe_positions) else None
        probe_times: List[float] = []
        probe_values: List[np.ndarray] = []

        if damp is not None:
            self.log_diagnostic(f"흡수층: i_max={damp.i_max}, 감쇠 노드 {damp.damped_count}개", damped_nodes=damp.damped_count)

        ill_conditioned = int(self.state["summary"].get("ill_conditioned_stencils", 0))
        snapshots: List[SnapshotField] = []
        state = WaveState.at_rest(nodes.size)
        every = max(1, n_steps // PROGRESS_UPDATES)
        for n in range(n_steps + 1):
            if n in snapshot_steps:
                snapshots.append(
                    SnapshotField(
                        t=n * cfg.dt,
                        positions=nodes.positions,
                        values=state.u_curr.copy(),
                        backend=self.backend,
                        grid=self.grid,
                        requested_t=snapshot_steps[n],
                        spacing=nodes.spacing,
                    )
                )
            if recorder is not None and n % record.seismogram_every == 0:
                recorder.record(state)
            if probe_sampler is not None:
                probe_times.append(state.t)
                probe_values.append(probe_sampler(state.u_curr))
            if n == n_steps:
                break
            state = step(state, self.operator, source, damp, cfg)
            if state.step_index % FULL_CHECK_INTERVAL == 0:
                line = (
                    f"스텝 {state.step_index}, t={state.t:.6f} s, 최대 |u| = {float(np.max(np.abs(state.u_curr))):.6e}, "
                    f"조건수 경고 스텐실 {ill_conditioned}개"
                )
                logger.debug(line)
                self.state["diagnostics"].append(line)
            if callback and (n + 1) % every == 0:
                callback(f"[{self.backend}] 시간 적분 {n + 1}/{n_steps} 스텝")

        peak = float(np.max(np.abs(state.u_curr))) if nodes.size else 0.0
        self.log_diagnostic(f"적분 완료: {n_steps} 스텝, 최종 최대 |u| = {peak:.6e}", final_peak=peak)

        summary = dict(self.state["summary"])
        summary.update(
            {
                "scenario": scenario.name,
                "backend": self.backend,
                "node_count": nodes.size,
                "interior_count": int(nodes.interior_mask.sum()),
                "n_steps": n_steps,
                "average_spacing": self.average_spacing,
            }
        )
        probes = None
        if probe_sampler is not None:
            probes = ProbeTraces(positions=probe_positions, times=np.array(probe_times), values=np.array(probe_values))
        return RunArtifacts(
            scenario=scenario.name,
            backend=self.backend,
            nodes=nodes,
            dt=cfg.dt,
            n_steps=n_steps,
            snapshots=snapshots,
            seismogram=recorder.result() if recorder is not None else None,
            probes=probes,
            diagnostics=list(self.state["diagnostics"]),
            summary=summary,
        )
