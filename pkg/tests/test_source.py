import numpy as np
import pytest
from scipy.integrate import quad

from app.errors import ConfigurationError
from app.tools.nodes import Rect, grid_nodes
from app.tools.source import PointSource, RickerSource, delta_approx, ricker, source_field


def test_ricker_peak_value():
    src = RickerSource(0.0, 0.0, sigma_r=0.00147)
    assert float(ricker(src, 0.0)) == pytest.approx(22.62, rel=1e-3)


def test_ricker_shape():
    src = RickerSource(0.0, 0.0, sigma_r=0.001)
    t = np.linspace(0.0, 0.005, 11)
    assert np.allclose(ricker(src, t), ricker(src, -t))
    assert float(ricker(src, 0.001)) == pytest.approx(0.0, abs=1e-12)
    area, _ = quad(lambda s: float(ricker(src, s)), -0.05, 0.05, points=[0.0], limit=200)
    magnitude, _ = quad(lambda s: abs(float(ricker(src, s))), -0.05, 0.05, points=[-0.001, 0.0, 0.001], limit=200)
    assert abs(area) < 1e-5 * magnitude


def test_ricker_scales_with_amplitude():
    base = RickerSource(0.0, 0.0)
    doubled = RickerSource(0.0, 0.0, s0=2.0)
    assert float(ricker(doubled, 0.0002)) == pytest.approx(2.0 * float(ricker(base, 0.0002)))


def test_delta_approx_at_center():
    src = RickerSource(10.0, 20.0, epsilon=4.0)
    assert float(delta_approx(src, 10.0, 20.0)) == pytest.approx(0.0795775, rel=1e-6)
    assert float(delta_approx(src, 13.0, 24.0)) == pytest.approx(4.0 / (np.pi * 41.0))


def test_default_delay_is_five_widths():
    assert RickerSource(0.0, 0.0, sigma_r=0.002).t_delay == pytest.approx(0.01)
    assert RickerSource(0.0, 0.0, t_delay=0.0).t_delay == 0.0


def test_invalid_parameters():
    with pytest.raises(ConfigurationError):
        RickerSource(0.0, 0.0, sigma_r=0.0)
    with pytest.raises(ConfigurationError):
        RickerSource(0.0, 0.0, epsilon=-1.0)
    with pytest.raises(ConfigurationError):
        RickerSource(0.0, 0.0, t_delay=-0.001)


def test_source_field_is_zero_on_boundary():
    nodes = grid_nodes(Rect(0.0, 20.0, 0.0, 20.0), 1.0)
    src = RickerSource(10.0, 10.0)
    field = source_field(src, nodes, 0.0)
    assert np.all(field[nodes.boundary_mask] == 0.0)
    center = nodes.nearest(10.0, 10.0)
    assert field[center] == pytest.approx(float(ricker(src, 0.0)) * float(delta_approx(src, 10.0, 10.0)))


def test_point_source_applies_delay():
    nodes = grid_nodes(Rect(0.0, 20.0, 0.0, 20.0), 1.0)
    src = RickerSource(10.0, 10.0, sigma_r=0.001)
    point = PointSource(src, nodes)
    assert point.injected(src.t_delay) == pytest.approx(float(ricker(src, 0.0)))
    assert np.allclose(point.field(src.t_delay + 0.0003), source_field(src, nodes, 0.0003))
