import numpy as np
import pytest

from app.interface.config import parse_config
from app.tools.nodes import Rect, SpacingField, UniformGrid, generate_nodes, grid_nodes

SCENARIO_TEMPLATE = """
[scenario]
name = {name}
backend = {backend}
seed = {seed}

[domain]
x_min = 0
x_max = {width}
z_min = 0
z_max = {height}

[velocity]
model = uniform
v = {v}

[spacing]
mode = constant
a = {a}

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


@pytest.fixture
def square_domain():
    return Rect(0.0, 10.0, 0.0, 10.0)


@pytest.fixture
def unit_nodes(square_domain):
    """10 m × 10 m, a = 1 m 산점 노드"""
    return generate_nodes(square_domain, SpacingField.constant(1.0), seed=0)


@pytest.fixture
def small_grid():
    return UniformGrid(nx=11, nz=11, h=1.0)


@pytest.fixture
def small_grid_nodes(small_grid):
    return grid_nodes(small_grid.domain, small_grid.h)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scenario_text():
    """작은 균질 시나리오 텍스트를 만드는 함수"""

    def build(**overrides):
        values = {
            "name": "tiny",
            "backend": "rbffd",
            "seed": 0,
            "width": 30,
            "height": 30,
            "v": 3000,
            "a": 1.0,
            "sx": 15,
            "sz": 15,
            "sigma_r": 0.001,
            "epsilon": 4,
            "dt": 0.0001,
            "n_steps": 40,
            "i_max": 5,
            "record": "snapshot_times = 0.002, 0.004\nreceiver_spacing = 5\nprobes = 15 20",
        }
        values.update(overrides)
        return SCENARIO_TEMPLATE.format(**values)

    return build


@pytest.fixture
def tiny_scenario(scenario_text):
    return parse_config(scenario_text())
