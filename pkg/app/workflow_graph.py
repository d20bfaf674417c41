import logging
import time
from typing import Any, Callable, Dict, Optional, TypedDict

import numpy as np
from langgraph.graph import StateGraph, END

from app.data.loaders import build_spacing_field, build_velocity_model
from app.errors import ConfigurationError
from app.interface.config import ScenarioConfig, dump_config
from app.solvers import BaseSolver, FDMSolver, RBFFDSolver
from app.solvers.stepping import StabilityReport
from app.state import RunArtifacts
from app.tools.converter import ArtifactConverter
from app.tools.media import VelocityModel
from app.tools.nodes import SpacingField, UniformGrid

logger = logging.getLogger(__name__)

SOLVERS = {
    "rbffd": RBFFDSolver,
    "fdm": FDMSolver,
}


# 상태 유형 정의
class SimulationState(TypedDict):
    """시뮬레이션 워크플로우의 상태를 정의합니다."""
    scenario: ScenarioConfig
    output_dir: Optional[str]
    threads: Optional[int]
    force: bool
    model: Optional[VelocityModel]
    spacing: Optional[SpacingField]
    solver: Optional[BaseSolver]
    stability: Optional[StabilityReport]
    artifacts: Optional[RunArtifacts]
    written: Optional[list]
    status: str
    error: Optional[str]
    failure: Optional[Exception]
    callback: Optional[Callable[[str], None]]


def _fail(state: SimulationState, stage: str, exc: Exception) -> SimulationState:
    state["error"] = f"{stage} 중 오류 발생: {exc}"
    state["failure"] = exc
    state["status"] = "error"
    return state


# 노드 함수 정의
def prepare_medium(state: SimulationState) -> SimulationState:
    """속도 모델과 간격 함수를 준비합니다."""
    if state.get("callback"):
        state["callback"]("매질 준비 중...")

    try:
        scenario = state["scenario"]
        if scenario.backend not in SOLVERS:
            raise ConfigurationError(f"알 수 없는 백엔드: {scenario.backend}")
        model = build_velocity_model(scenario)
        spacing = build_spacing_field(scenario, model)

        state["model"] = model
        state["spacing"] = spacing
        state["status"] = "medium_prepared"
        state["error"] = None
        return state
    except Exception as e:
        return _fail(state, "매질 준비", e)


def discretize(state: SimulationState) -> SimulationState:
    """백엔드에 맞게 공간을 이산화합니다."""
    scenario = state["scenario"]
    if state.get("callback"):
        state["callback"](f"공간 이산화 중 ({scenario.backend})...")

    try:
        solver = SOLVERS[scenario.backend](scenario, threads=state.get("threads"))
        solver.discretize(state["model"], state["spacing"], callback=state.get("callback"))

        state["solver"] = solver
        state["status"] = "discretized"
        state["error"] = None
        return state
    except Exception as e:
        return _fail(state, "공간 이산화", e)


def check_stability(state: SimulationState) -> SimulationState:
    """CFL 안정성 조건을 검사합니다."""
    if state.get("callback"):
        state["callback"]("안정성 검사 중...")

    try:
        report = state["solver"].check_stability(state["model"], force=state.get("force", False))

        state["stability"] = report
        state["status"] = "stability_checked"
        state["error"] = None
        return state
    except Exception as e:
        return _fail(state, "안정성 검사", e)


def integrate(state: SimulationState) -> SimulationState:
    """시간 적분을 수행합니다."""
    if state.get("callback"):
        state["callback"]("시간 적분 중...")

    try:
        started = time.perf_counter()
        artifacts = state["solver"].integrate(state["model"], callback=state.get("callback"))
        elapsed = time.perf_counter() - started
        # 실행 시간은 진단 로그에만 남김
        artifacts.diagnostics.append(f"적분 소요 시간 {elapsed:.2f} s")
        logger.info("적분 소요 시간 %.2f s", elapsed)

        state["artifacts"] = artifacts
        state["status"] = "integrated"
        state["error"] = None
        return state
    except Exception as e:
        return _fail(state, "시간 적분", e)


def write_artifacts(state: SimulationState) -> SimulationState:
    """결과물을 저장합니다. 출력 디렉토리가 없으면 건너뜁니다."""
    output_dir = state.get("output_dir")
    if not output_dir:
        state["written"] = []
        state["status"] = "completed"
        return state

    if state.get("callback"):
        state["callback"](f"결과 저장 중: {output_dir}")

    try:
        scenario = state["scenario"]
        solver = state["solver"]
        binary_grid = None
        if scenario.record.binary_snapshots and solver.grid is None:
            h = solver.average_spacing
            binary_grid = UniformGrid(
                nx=int(np.floor(scenario.domain.width / h)) + 1,
                nz=int(np.floor(scenario.domain.height / h)) + 1,
                h=h,
                x0=scenario.domain.x_min,
                z0=scenario.domain.z_min,
            )
        converter = ArtifactConverter(output_dir)
        written = converter.write_run(
            state["artifacts"],
            dump_config(scenario),
            binary=scenario.record.binary_snapshots,
            binary_grid=binary_grid,
        )

        state["written"] = written
        state["status"] = "completed"
        state["error"] = None
        if state.get("callback"):
            state["callback"](f"워크플로우 완료: {output_dir}")
        return state
    except Exception as e:
        return _fail(state, "결과 저장", e)


def handle_error(state: SimulationState) -> SimulationState:
    """오류를 처리합니다."""
    if state.get("callback"):
        state["callback"](f"오류 발생: {state.get('error', '알 수 없는 오류')}")
    logger.error(state.get("error", "알 수 없는 오류"))
    return state


def end_workflow(state: SimulationState) -> SimulationState:
    """워크플로우를 종료합니다."""
    if state.get("callback"):
        state["callback"]("워크플로우 종료")
    return state


# 조건부 라우팅 함수
def should_handle_error(state: SimulationState) -> str:
    """상태에 오류가 있는지 확인하고 라우팅합니다."""
    if state.get("error"):
        return "error"
    return "continue"


class SimulationGraphWorkflow:
    """LangGraph를 사용한 파동 시뮬레이션 워크플로우 클래스"""

    STAGES = ["prepare_medium", "discretize", "check_stability", "integrate", "write_artifacts"]

    def __init__(self):
        """워크플로우 초기화"""
        builder = StateGraph(SimulationState)

        builder.add_node("prepare_medium", prepare_medium)
        builder.add_node("discretize", discretize)
        builder.add_node("check_stability", check_stability)
        builder.add_node("integrate", integrate)
        builder.add_node("write_artifacts", write_artifacts)
        builder.add_node("handle_error", handle_error)
        builder.add_node("end_workflow", end_workflow)

        builder.set_entry_point("prepare_medium")

        # 각 단계 뒤에 오류 분기
        following = self.STAGES[1:] + ["end_workflow"]
        for stage, next_stage in zip(self.STAGES, following):
            builder.add_conditional_edges(
                stage,
                should_handle_error,
                {
                    "error": "handle_error",
                    "continue": next_stage
                }
            )

        builder.add_edge("handle_error", END)
        builder.add_edge("end_workflow", END)

        self.graph = builder.compile()
        self.state: Optional[Dict[str, Any]] = None

    def setup(
        self,
        scenario: ScenarioConfig,
        output_dir: Optional[str] = None,
        threads: Optional[int] = None,
        force: bool = False,
        callback: Optional[Callable[[str], None]] = None
    ) -> None:
        """
        워크플로우 설정

        Args:
            scenario: 시나리오
            output_dir: 결과 저장 디렉토리 (None 이면 저장하지 않음)
            threads: 스텐실 계산 스레드 수
            force: 안정성 조건 위반 시에도 실행
            callback: 진행 상황 콜백 함수
        """
        self.state = {
            "scenario": scenario,
            "output_dir": output_dir,
            "threads": threads,
            "force": force,
            "model": None,
            "spacing": None,
            "solver": None,
            "stability": None,
            "artifacts": None,
            "written": None,
            "status": "initialized",
            "error": None,
            "failure": None,
            "callback": callback,
        }

    def run(self, callback: Optional[Callable[[str], None]] = None) -> RunArtifacts:
        """
        워크플로우 실행

        Args:
            callback: 진행 상황 콜백 함수

        Returns:
            RunArtifacts: 실행 결과

        Raises:
            MeshwaveError: 단계 중 하나가 실패하면 원래 예외를 다시 발생
        """
        if not self.state:
            raise ConfigurationError("워크플로우가 초기화되지 않았습니다. setup() 메서드를 먼저 호출하세요.")
        if callback:
            self.state["callback"] = callback

        result = self.graph.invoke(dict(self.state))
        self.state = result
        if result.get("error"):
            failure = result.get("failure")
            if isinstance(failure, Exception):
                raise failure
            raise ConfigurationError(result["error"])
        return result["artifacts"]


def simulate(
    scenario: ScenarioConfig,
    output_dir: Optional[str] = None,
    threads: Optional[int] = None,
    force: bool = False,
    callback: Optional[Callable[[str], None]] = None,
) -> RunArtifacts:
    """시나리오 하나를 실행합니다."""
    workflow = SimulationGraphWorkflow()
    workflow.setup(scenario, output_dir=output_dir, threads=threads, force=force, callback=callback)
    return workflow.run()


def fdm_run(scenario: ScenarioConfig, **kwargs) -> RunArtifacts:
    """같은 시나리오를 균일 격자 5점 차분으로 실행합니다."""
    return simulate(scenario.with_backend("fdm"), **kwargs)
