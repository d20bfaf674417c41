import numpy as np
import pytest

from app.errors import ConfigurationError, NumericalBlowUpError, StabilityError
from app.solvers.fdm import GridLaplacian
from app.solvers.stepping import (
    StepperConfig,
    build_damping,
    check_stability,
    damping,
    damping_profile,
    stability_regions,
    stable_dt,
    step,
)
from app.state import WaveState
from app.tools.nodes import Rect, UniformGrid, grid_nodes
from app.tools.source import PointSource, RickerSource

BOUNDARY_FACTOR = np.exp(-((0.015 * 30) ** 2))


@pytest.fixture
def grid_setup():
    grid = UniformGrid(nx=21, nz=21, h=1.0)
    nodes = grid_nodes(grid.domain, 1.0)
    cfg = StepperConfig(dt=1e-4, velocity_squared=np.full(nodes.size, 3000.0 ** 2), boundary_mask=nodes.boundary_mask)
    return grid, nodes, GridLaplacian(grid), cfg


def _bump(nodes, x0=10.0, z0=10.0, width=2.0):
    u = np.exp(-((nodes.x - x0) ** 2 + (nodes.z - z0) ** 2) / width ** 2)
    u[nodes.boundary_mask] = 0.0
    return u


def test_damping_profile():
    assert float(damping_profile(0, 30)) == pytest.approx(0.81669, rel=1e-5)
    assert float(damping_profile(30, 30)) == 1.0
    assert float(damping_profile(45, 30)) == 1.0
    assert float(damping_profile(29, 30)) == pytest.approx(np.exp(-(0.015 ** 2)))


def test_damping_skips_surface_side():
    domain = Rect(0.0, 500.0, 0.0, 500.0)
    assert damping((250.0, 0.0), domain, 30, 1.0) == 1.0
    assert damping((250.0, 3.0), domain, 30, 1.0) == 1.0
    assert damping((0.0, 250.0), domain, 30, 1.0) == pytest.approx(BOUNDARY_FACTOR)
    assert damping((250.0, 250.0), domain, 30, 1.0) == 1.0
    # 평균 간격이 2 m 이면 같은 거리에서 i 가 절반
    assert damping((20.0, 250.0), domain, 30, 2.0) == pytest.approx(float(damping_profile(10.0, 30)))


def test_build_damping(small_grid_nodes, small_grid):
    layer = build_damping(small_grid_nodes, small_grid.domain, 3, 1.0)
    assert layer.factors.shape == (small_grid_nodes.size,)
    assert layer.factors[small_grid_nodes.nearest(5.0, 0.0)] == 1.0
    assert layer.factors[small_grid_nodes.nearest(0.0, 5.0)] == pytest.approx(float(damping_profile(0, 3)))
    assert layer.damped_count > 0
    assert np.all(build_damping(small_grid_nodes, small_grid.domain, 0, 1.0).factors == 1.0)
    with pytest.raises(ConfigurationError):
        build_damping(small_grid_nodes, small_grid.domain, -1, 1.0)
    with pytest.raises(ConfigurationError):
        build_damping(small_grid_nodes, small_grid.domain, 3, 0.0)


def test_stable_dt():
    assert stable_dt(1.0, 3000.0) == pytest.approx(2.357e-4, rel=1e-3)


def test_check_stability_rejects_large_step():
    cfg = StepperConfig(dt=2.4e-4, velocity_squared=np.empty(0), boundary_mask=np.empty(0, dtype=bool))
    with pytest.raises(StabilityError) as info:
        check_stability(cfg, 1.0, 3000.0)
    assert info.value.dt_max == pytest.approx(2.357e-4, rel=1e-3)
    report = check_stability(cfg, 1.0, 3000.0, force=True)
    assert not report.passed


def test_local_criterion_governs():
    cfg = StepperConfig(dt=3e-4, velocity_squared=np.empty(0), boundary_mask=np.empty(0, dtype=bool))
    # 가장 작은 간격과 가장 빠른 속도가 서로 다른 곳에 있는 경우
    ratio = np.array([1.0 / 1500.0, 2.0 / 3000.0])
    report = check_stability(cfg, 1.0, 3000.0, spacing_over_velocity=ratio)
    assert report.passed
    assert not report.global_passed
    assert report.governing == pytest.approx(np.sqrt(0.5) / 1500.0)


def test_stability_regions_by_depth():
    z = np.linspace(0.0, 100.0, 101)
    ratio = np.where(z < 50.0, 1.0 / 1500.0, 1.0 / 3000.0)
    regions = stability_regions(z, ratio, bands=8)
    assert len(regions) == 8
    assert sum(r.node_count for r in regions) == 101
    assert (regions[0].z_min, regions[-1].z_max) == (0.0, 100.0)
    assert regions[0].dt_max == pytest.approx(np.sqrt(0.5) / 1500.0)
    assert regions[-1].dt_max == pytest.approx(np.sqrt(0.5) / 3000.0)
    # 노드가 없는 구간은 빠짐
    assert len(stability_regions(np.array([0.0, 100.0]), np.array([1.0, 1.0]), bands=8)) == 2


def test_check_stability_reports_violating_regions():
    cfg = StepperConfig(dt=3e-4, velocity_squared=np.empty(0), boundary_mask=np.empty(0, dtype=bool))
    z = np.linspace(0.0, 100.0, 101)
    ratio = np.where(z < 50.0, 1.0 / 1500.0, 1.0 / 3000.0)
    with pytest.raises(StabilityError):
        check_stability(cfg, 1.0, 3000.0, spacing_over_velocity=ratio, depths=z)
    report = check_stability(cfg, 1.0, 3000.0, spacing_over_velocity=ratio, depths=z, force=True)
    lines = report.describe_regions()
    assert len(lines) == 8
    assert [line.endswith("(위반)") for line in lines] == [False] * 4 + [True] * 4
    assert check_stability(cfg, 1.0, 3000.0, force=True).regions == ()


def test_stepper_config_validation():
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=0.0, velocity_squared=np.ones(3), boundary_mask=np.zeros(3, dtype=bool))
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=1e-4, velocity_squared=np.ones(3), boundary_mask=np.zeros(2, dtype=bool))


def test_step_keeps_boundary_at_zero(grid_setup):
    grid, nodes, op, cfg = grid_setup
    source = PointSource(RickerSource(10.0, 10.0, sigma_r=0.001, t_delay=0.0), nodes)
    state = WaveState(_bump(nodes), _bump(nodes))
    for _ in range(10):
        state = step(state, op, source, None, cfg)
    assert np.all(state.u_curr[nodes.boundary_mask] == 0.0)
    assert state.step_index == 10
    assert state.t == pytest.approx(10 * cfg.dt)


def test_step_is_linear_without_source(grid_setup):
    grid, nodes, op, cfg = grid_setup
    a = WaveState(_bump(nodes, 8.0, 9.0), _bump(nodes, 8.5, 9.0))
    b = WaveState(_bump(nodes, 12.0, 11.0), np.zeros(nodes.size))
    combined = WaveState(2.0 * a.u_prev - 3.0 * b.u_prev, 2.0 * a.u_curr - 3.0 * b.u_curr)
    result = step(combined, op, None, None, cfg)
    expected = 2.0 * step(a, op, None, None, cfg).u_curr - 3.0 * step(b, op, None, None, cfg).u_curr
    assert np.allclose(result.u_curr, expected, rtol=0, atol=1e-12)


def test_time_reversal_without_damping(grid_setup):
    grid, nodes, op, cfg = grid_setup
    initial = WaveState(_bump(nodes), _bump(nodes, 10.2, 10.0))
    state = initial
    for _ in range(50):
        state = step(state, op, None, None, cfg)
    state = state.reversed()
    for _ in range(50):
        state = step(state, op, None, None, cfg)
    scale = np.max(np.abs(initial.u_curr))
    assert np.allclose(state.u_curr, initial.u_prev, rtol=0, atol=1e-6 * scale)
    assert np.allclose(state.u_prev, initial.u_curr, rtol=0, atol=1e-6 * scale)


def test_damping_multiplies_both_levels(grid_setup):
    grid, nodes, op, cfg = grid_setup
    layer = build_damping(nodes, grid.domain, 5, 1.0)
    state = WaveState(_bump(nodes), _bump(nodes))
    damped = step(state, op, None, layer, cfg)
    free = step(state, op, None, None, cfg)
    assert np.allclose(damped.u_curr, free.u_curr * layer.factors)
    assert np.allclose(damped.u_prev, state.u_curr * layer.factors)


def test_nan_is_detected(grid_setup):
    grid, nodes, op, cfg = grid_setup
    u = _bump(nodes)
    u[nodes.interior_indices[40]] = np.nan
    with pytest.raises(NumericalBlowUpError) as info:
        step(WaveState(u.copy(), u.copy()), op, None, None, cfg)
    assert info.value.step_index == 1
