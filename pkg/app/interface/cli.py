import logging
import traceback
from dataclasses import replace
from pathlib import Path
from contextlib import contextmanager
from typing import Callable, Iterator, Optional

import numpy as np
import typer
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from app.errors import (
    ArtifactIOError,
    ConfigurationError,
    NumericalBlowUpError,
    ScenarioValidationError,
    SingularStencilError,
)
from app.data.loaders import build_spacing_field, build_velocity_model
from app.interface.config import BACKENDS, ScenarioConfig, default_threads, load_config, output_root
from app.scenarios import get_scenario_path
from app.solvers.stepping import StepperConfig, check_stability
from app.tools.nodes import SPACING_PROBE_RESOLUTION
from app.utils.common import get_timestamp_str, parse_float_list, setup_logging
from app.workflow import compare_scenarios, convergence_study, generate_scenario_nodes
from app.workflow_graph import simulate

logger = logging.getLogger(__name__)

console = Console()

cli = typer.Typer(help="RBF-FD 2차원 음향파 시뮬레이터", add_completion=False)

# 종료 코드
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def exit_code_for(exc: BaseException) -> int:
    """예외를 종료 코드로 바꿉니다."""
    if isinstance(exc, ConfigurationError):
        return EXIT_VALIDATION
    if isinstance(exc, (NumericalBlowUpError, SingularStencilError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ArtifactIOError, OSError)):
        return EXIT_IO
    return EXIT_FAILURE


def resolve_scenario(config: str) -> ScenarioConfig:
    """
    시나리오 파일 경로 또는 번들 시나리오 이름을 읽습니다.

    Args:
        config: 파일 경로 또는 번들 이름 (예: "homogeneous")
    """
    path = Path(config)
    if not path.exists():
        path = get_scenario_path(config)
    return load_config(str(path))


def run_directory(scenario: ScenarioConfig, out: Optional[str]) -> Path:
    """결과 디렉토리 out/<시나리오>/<타임스탬프>/"""
    return Path(out or output_root()) / scenario.name / get_timestamp_str()


def _report_error(exc: BaseException, verbose: bool) -> int:
    code = exit_code_for(exc)
    if isinstance(exc, ScenarioValidationError):
        console.print(f"[bold red]시나리오 검증 실패 ({len(exc.issues)}건)[/bold red]")
        for issue in exc.issues:
            console.print(f"  {issue}")
    else:
        console.print(f"[bold red]오류가 발생했습니다: {str(exc)}[/bold red]")
    if verbose or code == EXIT_FAILURE:
        console.print(traceback.format_exc())
    return code


@contextmanager
def _progress() -> Iterator[Callable[[str], None]]:
    with Progress(
        SpinnerColumn(),
        TextColumn("[bold blue]{task.description}"),
        console=console,
        transient=True
    ) as progress:
        task = progress.add_task("", total=None)

        # 콜백 함수 정의
        def update_progress(message: str):
            progress.update(task, description=message)

        yield update_progress


def _summary_table(scenario: ScenarioConfig) -> Table:
    table = Table(show_header=False, box=None)
    table.add_row("백엔드", scenario.backend)
    table.add_row("영역", f"{scenario.domain.width:g} m × {scenario.domain.height:g} m")
    table.add_row("속도 모델", scenario.velocity.model)
    table.add_row("간격 모드", scenario.spacing.mode)
    table.add_row("시간 간격", f"{scenario.dt:g} s × {scenario.time.n_steps} 스텝")
    table.add_row("음원", f"({scenario.source.x:g}, {scenario.source.z:g}), σ_R={scenario.source.sigma_r:g}")
    return table


def dry_run(scenario: ScenarioConfig, force: bool = False) -> None:
    """
    노드를 만들지 않고 검증과 안정성 추정만 수행합니다.
    국소 기준은 노드 대신 영역 위 균일 샘플의 a/v 로 계산합니다.

    Raises:
        StabilityError: 안정성 조건을 위반하고 force 가 아닌 경우
    """
    domain = scenario.domain
    model = build_velocity_model(scenario)
    spacing = build_spacing_field(scenario, model)
    a_min, _ = spacing.validate(domain)
    _, v_max = model.velocity_range()
    ratio = depths = None
    if scenario.backend == "fdm":
        a_min = scenario.fdm.h if scenario.fdm.h is not None else a_min
    else:
        gx, gz = np.meshgrid(
            np.linspace(domain.x_min, domain.x_max, SPACING_PROBE_RESOLUTION),
            np.linspace(domain.z_min, domain.z_max, SPACING_PROBE_RESOLUTION),
        )
        ratio = spacing.probe(domain) / model(gx.ravel(), gz.ravel())
        depths = gz.ravel()
    cfg = StepperConfig(
        dt=scenario.dt, velocity_squared=np.empty(0), boundary_mask=np.empty(0, dtype=bool),
        cfl_constant=scenario.time.cfl_constant,
    )
    report = check_stability(cfg, a_min, v_max, spacing_over_velocity=ratio, depths=depths, force=force)
    console.print(f"[green]{report.describe()}[/green]")
    for line in report.describe_regions():
        console.print(line)


@cli.command()
def run(
    config: str = typer.Argument(..., help="시나리오 파일 경로 또는 번들 시나리오 이름"),
    out: Optional[str] = typer.Option(None, "--out", help="결과 루트 디렉토리 (기본: MESHWAVE_OUT 또는 out)"),
    threads: Optional[int] = typer.Option(None, "--threads", help="스텐실 계산 스레드 수"),
    seed: Optional[int] = typer.Option(None, "--seed", help="노드 생성 시드"),
    backend: Optional[str] = typer.Option(None, "--backend", help="rbffd 또는 fdm 으로 덮어쓰기"),
    force: bool = typer.Option(False, "--force", help="안정성 조건 위반 시에도 실행"),
    dry: bool = typer.Option(False, "--dry-run", help="검증만 하고 결과를 쓰지 않음"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="자세한 로그 출력"),
):
    """시나리오를 실행하고 결과물을 저장합니다."""
    setup_logging(verbose, console=console)
    try:
        scenario = resolve_scenario(config)
        if seed is not None:
            scenario = replace(scenario, seed=seed)
        if backend is not None:
            if backend not in BACKENDS:
                raise ConfigurationError(f"알 수 없는 백엔드: {backend}")
            scenario = scenario.with_backend(backend)
        console.print(Panel(_summary_table(scenario), title=f"[bold blue]{scenario.name}[/bold blue]"))

        if dry:
            dry_run(scenario, force=force)
            console.print("[bold green]검증 완료 (실행하지 않음)[/bold green]")
            raise typer.Exit(code=EXIT_OK)

        output_dir = run_directory(scenario, out)
        with _progress() as update_progress:
            artifacts = simulate(
                scenario,
                output_dir=str(output_dir),
                threads=threads or default_threads(),
                force=force,
                callback=update_progress,
            )
    except typer.Exit:
        raise
    except Exception as e:
        raise typer.Exit(code=_report_error(e, verbose))

    console.print(f"\n[bold green]결과가 저장되었습니다: {output_dir}[/bold green]")
    console.print(f"  노드 {artifacts.nodes.size}개, {artifacts.n_steps} 스텝, dt={artifacts.dt:g} s")


@cli.command()
def nodes(
    config: str = typer.Argument(..., help="시나리오 파일 경로 또는 번들 시나리오 이름"),
    out: Optional[str] = typer.Option(None, "--out", help="결과 루트 디렉토리"),
    seed: Optional[int] = typer.Option(None, "--seed", help="노드 생성 시드"),
    threads: Optional[int] = typer.Option(None, "--threads", help="스텐실 계산 스레드 수"),
    dump_operator: bool = typer.Option(False, "--dump-operator", help="스텐실 가중치(center, neighbor, weight)도 저장"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="자세한 로그 출력"),
):
    """노드 집합만 생성해 nodes.csv 로 저장합니다."""
    setup_logging(verbose, console=console)
    try:
        scenario = resolve_scenario(config)
        if seed is not None:
            scenario = replace(scenario, seed=seed)
        output_dir = run_directory(scenario, out)
        with _progress() as update_progress:
            node_set = generate_scenario_nodes(
                scenario,
                output_dir=str(output_dir),
                dump_operator=dump_operator,
                threads=threads or default_threads(),
                callback=update_progress,
            )
    except Exception as e:
        raise typer.Exit(code=_report_error(e, verbose))

    console.print(f"\n[bold green]노드 {node_set.size}개 저장: {output_dir}[/bold green]")


@cli.command()
def converge(
    config: str = typer.Argument(..., help="시나리오 파일 경로 또는 번들 시나리오 이름"),
    spacings: str = typer.Option(..., "--spacings", help="쉼표로 구분한 노드 간격 목록 (예: 2,1,0.5)"),
    probe_x: float = typer.Option(..., "--probe-x", help="프로브 x (m)"),
    probe_z: float = typer.Option(..., "--probe-z", help="프로브 z (m)"),
    t_probe: float = typer.Option(..., "--t-probe", help="비교 시각 (s)"),
    probe_radius: Optional[float] = typer.Option(None, "--probe-radius", help="최대 |u| 를 찾을 반경 (m, 기본: 가장 큰 간격의 3배)"),
    threads: Optional[int] = typer.Option(None, "--threads", help="스텐실 계산 스레드 수"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="자세한 로그 출력"),
):
    """간격을 바꿔가며 실행해 프로브 주변 최대 진폭의 수렴을 확인합니다."""
    setup_logging(verbose, console=console)
    try:
        scenario = resolve_scenario(config)
        with _progress() as update_progress:
            points = convergence_study(
                scenario,
                parse_float_list(spacings),
                (probe_x, probe_z),
                t_probe,
                probe_radius=probe_radius,
                threads=threads or default_threads(),
                callback=update_progress,
            )
    except Exception as e:
        raise typer.Exit(code=_report_error(e, verbose))

    table = Table(title=f"{scenario.name} 수렴 연구 (t={t_probe:g} s)")
    table.add_column("간격 (m)", justify="right")
    table.add_column("노드 수", justify="right")
    table.add_column("최대 |u|", justify="right")
    table.add_column("프로브 값", justify="right")
    table.add_column("직전 대비 |Δ|", justify="right")
    previous = None
    for point in points:
        delta = "-" if previous is None else f"{abs(point.peak - previous.peak):.4e}"
        table.add_row(f"{point.spacing:g}", str(point.node_count), f"{point.peak:.6e}", f"{point.value:.6e}", delta)
        previous = point
    console.print(table)


@cli.command()
def compare(
    config_a: str = typer.Argument(..., help="첫 번째 시나리오"),
    config_b: str = typer.Argument(..., help="두 번째 시나리오"),
    out: Optional[str] = typer.Option(None, "--out", help="결과 루트 디렉토리"),
    circle_radius: Optional[float] = typer.Option(None, "--circle-radius", help="음원 중심 원 위 대칭성 검사 반지름 (m)"),
    threads: Optional[int] = typer.Option(None, "--threads", help="스텐실 계산 스레드 수"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="자세한 로그 출력"),
):
    """두 시나리오를 실행하고 스냅샷 차이와 탄성파 기록을 저장합니다."""
    setup_logging(verbose, console=console)
    try:
        scenario_a = resolve_scenario(config_a)
        scenario_b = resolve_scenario(config_b)
        output_dir = Path(out or output_root()) / f"{scenario_a.name}_vs_{scenario_b.name}" / get_timestamp_str()
        with _progress() as update_progress:
            summary = compare_scenarios(
                scenario_a,
                scenario_b,
                str(output_dir),
                circle_radius=circle_radius,
                threads=threads or default_threads(),
                callback=update_progress,
            )
    except Exception as e:
        raise typer.Exit(code=_report_error(e, verbose))

    for stats in summary["snapshots"]:
        console.print(
            f"  t={stats['t']:.4f} s: 최대 차이 {stats['max_abs_difference']:.4e} "
            f"(상대 {stats['relative_max_difference']:.3%})"
        )
    console.print(f"\n[bold green]비교 결과가 저장되었습니다: {output_dir}[/bold green]")
