"""데스크 규모 물리 검증. 실행: pytest -m slow"""
import numpy as np
import pytest

from app.interface.config import load_config, parse_config
from app.scenarios import get_scenario_path
from app.tools.post import circle_probe, difference_summary, envelope_peak, wavefront_radius
from app.workflow import convergence_study
from app.workflow_graph import simulate

pytestmark = pytest.mark.slow

SCENARIO = """
[scenario]
name = {name}
backend = {backend}
seed = 0

[domain]
x_min = 0
x_max = {width}
z_min = 0
z_max = {height}

[velocity]
{velocity}

[spacing]
mode = constant
a = 1

[source]
x = {sx}
z = {sz}
sigma_r = {sigma_r}
epsilon = {epsilon}

[time]
dt = {dt}
n_steps = {n_steps}

[abc]
i_max = {i_max}

[record]
{record}
"""


def _scenario(**values):
    defaults = {
        "name": "check",
        "backend": "fdm",
        "velocity": "model = uniform\nv = 3000",
        "epsilon": 2,
        "i_max": 0,
        "record": "",
    }
    defaults.update(values)
    return parse_config(SCENARIO.format(**defaults))


def _window_peak(probes, column, t_delay, start, end):
    times = probes.times - t_delay
    window = (times >= start) & (times <= end)
    return times[window], probes.values[window, column]


def test_wavefront_speed_and_symmetry():
    times = (0.009, 0.012, 0.015)
    t_delay = 5 * 0.0006
    center = (50.0, 50.0)
    runs = {}
    for backend in ("rbffd", "fdm"):
        scenario = _scenario(
            backend=backend, width=100, height=100, sx=50, sz=50, sigma_r=0.0006, dt=0.0001, n_steps=150,
            record="snapshot_times = 0.009, 0.012, 0.015",
        )
        runs[backend] = simulate(scenario, threads=2)

    radii = {}
    for backend, artifacts in runs.items():
        radii[backend] = [
            wavefront_radius(artifacts.snapshot_at(t), center, r_max=45.0, r_min=5.0) for t in times
        ]
        for t, r in zip(times, radii[backend]):
            assert abs(r - 3000.0 * (t - t_delay)) <= 2.0

    rbf_radii = radii["rbffd"]
    assert (rbf_radii[2] - rbf_radii[0]) / 0.006 == pytest.approx(3000.0, rel=0.07)

    for t, r_rbf, r_fdm in zip(times, rbf_radii, radii["fdm"]):
        rbf = circle_probe(runs["rbffd"].snapshot_at(t), center, r_rbf)
        fdm = circle_probe(runs["fdm"].snapshot_at(t), center, r_fdm)
        assert rbf.std / abs(rbf.mean) < 0.15
        assert rbf.std <= fdm.std


@pytest.mark.parametrize("backend", ["rbffd", "fdm"])
def test_absorbing_layer_suppresses_edge_reflection(backend):
    def late_amplitude(i_max):
        scenario = _scenario(
            backend=backend, width=120, height=120, sx=70, sz=80, sigma_r=0.0006, dt=0.00008, n_steps=540,
            i_max=i_max, record="probes = 40 80",
        )
        artifacts = simulate(scenario, threads=2)
        _, trace = _window_peak(artifacts.probes, 0, 0.003, 0.033, 0.040)
        return float(np.max(np.abs(trace)))

    assert late_amplitude(0) >= 5.0 * late_amplitude(30)


def test_grid_refinement_converges():
    scenario = _scenario(width=60, height=60, sx=30, sz=30, sigma_r=0.001, epsilon=4, dt=0.00004, n_steps=10)
    points = convergence_study(scenario, [2.0, 1.0, 0.5, 0.25], (30.0, 48.0), 0.011)
    differences = [abs(b.peak - a.peak) for a, b in zip(points, points[1:])]
    assert differences[0] >= 1.5 * differences[1]
    assert differences[1] >= 1.5 * differences[2]


def test_node_refinement_converges():
    scenario = _scenario(
        backend="rbffd", width=60, height=60, sx=30, sz=30, sigma_r=0.001, epsilon=4, dt=0.00004, n_steps=10
    )
    points = convergence_study(scenario, [2.0, 1.0, 0.5], (30.0, 48.0), 0.011, threads=2)
    assert [p.node_count for p in points] == sorted(p.node_count for p in points)
    differences = [abs(b.peak - a.peak) for a, b in zip(points, points[1:])]
    assert differences[1] < differences[0]


@pytest.mark.parametrize("backend", ["rbffd", "fdm"])
def test_two_layer_speeds_and_reflection(backend):
    scenario = _scenario(
        backend=backend, width=160, height=150, sx=80, sz=40, sigma_r=0.0011, dt=0.0001, n_steps=560,
        velocity="model = two_layer\nv_top = 1500\nv_bottom = 3000\ninterface_depth = 80",
        record="probes = 80 55; 80 75; 80 100; 80 120",
    )
    artifacts = simulate(scenario, threads=2)
    t_delay = 5 * 0.0011

    def arrival(column, start, end):
        return envelope_peak(*_window_peak(artifacts.probes, column, t_delay, start, end))

    top_interval = arrival(1, 0.0, 0.027) - arrival(0, 0.0, 0.027)
    bottom_interval = arrival(3, 0.025, 0.050) - arrival(2, 0.025, 0.050)
    assert 20.0 / top_interval == pytest.approx(1500.0, rel=0.1)
    assert top_interval / bottom_interval == pytest.approx(2.0, rel=0.1)

    _, incident = _window_peak(artifacts.probes, 1, t_delay, 0.0, 0.027)
    _, reflected = _window_peak(artifacts.probes, 1, t_delay, 0.027, 0.036)
    # 반사파는 경계면 너머 거울상 음원(경로 45 m), 입사파는 35 m 를 진행하므로 원통 확산을 보정
    ratio = np.max(np.abs(reflected)) / np.max(np.abs(incident)) * np.sqrt(45.0 / 35.0)
    assert ratio == pytest.approx(1.0 / 3.0, rel=0.2)


def test_rbf_and_grid_seismograms_agree():
    rbf = simulate(load_config(str(get_scenario_path("homogeneous_desk"))), threads=2)
    grid = simulate(load_config(str(get_scenario_path("homogeneous_desk_fdm"))))
    stats = difference_summary(grid.seismogram.values, rbf.seismogram.values)
    assert stats["relative_max_difference"] <= 0.05
