import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from app.data.loaders import build_spacing_field, build_velocity_model
from app.errors import ConfigurationError
from app.interface.config import RecordSpec, ScenarioConfig, dump_config
from app.solvers import RBFFDSolver
from app.state import RunArtifacts, Seismogram
from app.tools.converter import ArtifactConverter
from app.tools.nodes import NodeSet, UniformGrid, generate_nodes
from app.tools.post import circle_probe, difference_field, difference_summary, sample, to_grid
from app.utils.common import save_json
from app.workflow_graph import simulate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvergencePoint:
    """수렴 연구의 한 간격에 대한 결과"""
    spacing: float
    node_count: int
    peak: float
    value: float


def convergence_study(
    scenario: ScenarioConfig,
    spacings: Sequence[float],
    probe: Sequence[float],
    t_probe: float,
    probe_radius: Optional[float] = None,
    threads: Optional[int] = None,
    callback: Optional[Callable[[str], None]] = None,
) -> List[ConvergencePoint]:
    """
    상수 간격을 바꿔가며 같은 시나리오를 실행하고 t_probe 시각 프로브 주변의 최대 진폭을 비교합니다.

    Args:
        scenario: 기준 시나리오 (백엔드 포함)
        spacings: 노드 간격 목록 (m)
        probe: 프로브 위치
        t_probe: 비교 시각 (s)
        probe_radius: 최대 |u| 를 찾을 프로브 주변 반경 (None 이면 가장 큰 간격의 3배)
        threads: 스텐실 계산 스레드 수
        callback: 진행 상황 콜백

    Returns:
        List[ConvergencePoint]: 간격별 결과 (입력 순서)
    """
    if not spacings:
        raise ConfigurationError("간격 목록이 비어 있습니다.")
    if any(not b < a for a, b in zip(spacings, spacings[1:])) or min(spacings) <= 0:
        raise ConfigurationError(f"간격은 양수이고 순감소해야 합니다: {list(spacings)}")
    if probe_radius is None:
        probe_radius = 3.0 * float(max(spacings))
    if not scenario.domain.contains(probe[0], probe[1]):
        raise ConfigurationError(f"프로브 {tuple(probe)} 가 영역 밖입니다.")
    dt = scenario.dt
    n_steps = int(round(t_probe / dt))
    if n_steps < 1:
        raise ConfigurationError(f"t_probe={t_probe} 는 dt={dt} 보다 커야 합니다.")

    points: List[ConvergencePoint] = []
    for a in spacings:
        if callback:
            callback(f"수렴 연구: 간격 {a:g} m")
        refined = replace(
            scenario,
            spacing=replace(scenario.spacing, mode="constant", a=float(a)),
            fdm=replace(scenario.fdm, h=float(a)),
            time=replace(scenario.time, n_steps=n_steps),
            record=RecordSpec(snapshot_times=(n_steps * dt,)),
        )
        artifacts = simulate(refined, threads=threads, callback=callback)
        snapshot = artifacts.snapshots[-1]
        distance = np.hypot(snapshot.positions[:, 0] - probe[0], snapshot.positions[:, 1] - probe[1])
        window = distance <= probe_radius
        if not window.any():
            raise ConfigurationError(f"프로브 반경 {probe_radius} m 안에 노드가 없습니다.")
        peak = float(np.max(np.abs(snapshot.values[window])))
        value = float(sample(snapshot, np.asarray([probe], dtype=float))[0])
        points.append(ConvergencePoint(spacing=float(a), node_count=artifacts.nodes.size, peak=peak, value=value))
        logger.info("간격 %g m: 노드 %d개, 최대 |u| %.6e", a, artifacts.nodes.size, peak)
    return points


def _common_grid(a: RunArtifacts, b: RunArtifacts, scenario: ScenarioConfig) -> UniformGrid:
    h = max(float(np.mean(a.nodes.spacing)), float(np.mean(b.nodes.spacing)))
    domain = scenario.domain
    return UniformGrid(
        nx=int(np.floor(domain.width / h + 1e-9)) + 1,
        nz=int(np.floor(domain.height / h + 1e-9)) + 1,
        h=h,
        x0=domain.x_min,
        z0=domain.z_min,
    )


def _seismogram_difference(a: Seismogram, b: Seismogram) -> Optional[Dict[str, float]]:
    """
    b 를 a 의 시간축(두 기록이 겹치는 구간)으로 선형 보간한 뒤 차이를 요약합니다.
    수신기가 다르거나 겹치는 구간이 없으면 경고 후 None 을 돌려줍니다.
    """
    if a.receivers.shape != b.receivers.shape or not np.allclose(a.receivers, b.receivers):
        logger.warning("수신기 배치가 달라 탄성파 기록을 비교하지 않습니다.")
        return None
    if len(a.times) == 0 or len(b.times) == 0:
        logger.warning("탄성파 기록이 비어 있어 비교하지 않습니다.")
        return None
    end = min(float(a.times[-1]), float(b.times[-1]))
    overlap = a.times <= end * (1 + 1e-12)
    if not overlap.any():
        logger.warning("두 탄성파 기록의 시간 구간이 겹치지 않습니다.")
        return None
    times = a.times[overlap]
    resampled = np.column_stack([np.interp(times, b.times, b.trace(r)) for r in range(len(b.receivers))])
    stats = difference_summary(a.values[overlap], resampled)
    stats["sample_count"] = int(len(times))
    stats["t_end"] = float(times[-1])
    return stats


def compare_scenarios(
    scenario_a: ScenarioConfig,
    scenario_b: ScenarioConfig,
    output_dir: str,
    circle_radius: Optional[float] = None,
    threads: Optional[int] = None,
    callback: Optional[Callable[[str], None]] = None,
) -> Dict[str, Any]:
    """
    두 시나리오를 실행하고 공통 격자 위의 스냅샷 차이와 탄성파 기록 차이를 저장합니다.
    circle_radius 가 주어지면 첫 번째 시나리오의 음원을 중심으로 한 원 위 값의 표준편차도 기록합니다.

    Returns:
        Dict[str, Any]: summary.json 에 저장된 비교 요약
    """
    if scenario_a.domain != scenario_b.domain:
        raise ConfigurationError("비교할 두 시나리오의 영역이 같아야 합니다.")
    run_a = simulate(scenario_a, threads=threads, callback=callback)
    run_b = simulate(scenario_b, threads=threads, callback=callback)
    grid = _common_grid(run_a, run_b, scenario_a)
    converter = ArtifactConverter(output_dir)
    converter.write_text(dump_config(scenario_a), "scenario_a.cfg")
    converter.write_text(dump_config(scenario_b), "scenario_b.cfg")

    summary: Dict[str, Any] = {
        "scenario_a": scenario_a.name,
        "scenario_b": scenario_b.name,
        "backend_a": run_a.backend,
        "backend_b": run_b.backend,
        "node_count_a": run_a.nodes.size,
        "node_count_b": run_b.nodes.size,
        "grid": {"nx": grid.nx, "nz": grid.nz, "h": grid.h},
        "snapshots": [],
    }
    # dt 가 다르면 같은 요청 시각도 실제 시각이 최대 한 스텝까지 어긋남
    tolerance = max(run_a.dt, run_b.dt)
    unmatched_b = list(run_b.snapshots)
    for snapshot_a in run_a.snapshots:
        matches = sorted(
            (s for s in unmatched_b if abs(s.label_t - snapshot_a.label_t) <= tolerance),
            key=lambda s: abs(s.label_t - snapshot_a.label_t),
        )
        if not matches:
            logger.warning("t=%.6f s 스냅샷에 대응하는 %s 스냅샷이 없어 건너뜁니다.", snapshot_a.label_t, scenario_b.name)
            continue
        snapshot_b = matches[0]
        unmatched_b.remove(snapshot_b)
        field_a, holes_a = to_grid(snapshot_a, grid, return_mask=True)
        field_b, holes_b = to_grid(snapshot_b, grid, return_mask=True)
        difference = difference_field(field_a, field_b)
        name = f"difference_{snapshot_a.label_t:.6f}"
        xs, zs = np.meshgrid(grid.xs, grid.zs)
        converter.write_table(
            np.column_stack([xs.ravel(), zs.ravel(), field_a.ravel(), field_b.ravel(), difference.ravel()]),
            "x,z,a,b,difference",
            f"{name}.csv",
        )
        stats = difference_summary(field_a, field_b)
        stats["t"] = snapshot_a.label_t
        stats["t_a"] = snapshot_a.t
        stats["t_b"] = snapshot_b.t
        stats["hole_count"] = int(np.count_nonzero(holes_a | holes_b))
        if circle_radius is not None:
            center = (scenario_a.source.x, scenario_a.source.z)
            stats["circle_std_a"] = circle_probe(snapshot_a, center, circle_radius).std
            stats["circle_std_b"] = circle_probe(snapshot_b, center, circle_radius).std
        summary["snapshots"].append(stats)
    for snapshot_b in unmatched_b:
        logger.warning("t=%.6f s 스냅샷에 대응하는 %s 스냅샷이 없어 건너뜁니다.", snapshot_b.label_t, scenario_a.name)

    if run_a.seismogram is not None:
        converter.convert(run_a.seismogram, "csv", "seismogram_a")
    if run_b.seismogram is not None:
        converter.convert(run_b.seismogram, "csv", "seismogram_b")
    if run_a.seismogram is not None and run_b.seismogram is not None:
        summary["seismogram"] = _seismogram_difference(run_a.seismogram, run_b.seismogram)

    save_json(summary, str(Path(output_dir) / "summary.json"))
    logger.info("비교 결과 저장: %s", output_dir)
    return summary


def generate_scenario_nodes(
    scenario: ScenarioConfig,
    output_dir: Optional[str] = None,
    dump_operator: bool = False,
    threads: Optional[int] = None,
    callback: Optional[Callable[[str], None]] = None,
) -> NodeSet:
    """
    시나리오의 노드만 생성해 저장합니다. dump_operator 면 스텐실 가중치도 저장합니다.
    """
    model = build_velocity_model(scenario)
    spacing = build_spacing_field(scenario, model)
    solver = RBFFDSolver(scenario, threads=threads)
    if dump_operator:
        nodes = solver.discretize(model, spacing, callback=callback)
    else:
        nodes = generate_nodes(
            scenario.domain, spacing, seed=scenario.seed,
            separation=scenario.spacing.separation, candidates=scenario.spacing.candidates,
        )
    if output_dir:
        converter = ArtifactConverter(output_dir)
        converter.convert(nodes, "csv", "nodes")
        if dump_operator:
            converter.convert(solver.operator, "csv", "operator")
    return nodes
