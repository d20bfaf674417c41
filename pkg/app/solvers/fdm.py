import logging
from typing import Callable, Optional

import numpy as np

from app.errors import ConfigurationError
from app.solvers.base import BaseSolver
from app.solvers.stepping import AbsorbingLayer, build_grid_damping
from app.tools.media import VelocityModel
from app.tools.nodes import NodeSet, SpacingField, UniformGrid, grid_nodes

logger = logging.getLogger(__name__)


def fdm_laplacian(grid: UniformGrid, u: np.ndarray) -> np.ndarray:
    """
    5점 라플라시안. 경계 노드 결과는 0 입니다.

    Args:
        grid: 균일 격자
        u: (nx·nz,) 또는 (nz, nx) 노드 값

    Returns:
        np.ndarray: u 와 같은 모양의 결과
    """
    u = np.asarray(u, dtype=float)
    field = u.reshape(grid.nz, grid.nx)
    result = np.zeros_like(field)
    result[1:-1, 1:-1] = (
        field[1:-1, 2:] + field[1:-1, :-2] + field[2:, 1:-1] + field[:-2, 1:-1] - 4.0 * field[1:-1, 1:-1]
    ) / (grid.h * grid.h)
    return result.reshape(u.shape)


class GridLaplacian:
    """격자 위의 5점 라플라시안 연산자"""

    def __init__(self, grid: UniformGrid):
        self.grid = grid

    @property
    def node_count(self) -> int:
        return self.grid.size

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.node_count,):
            raise ConfigurationError(f"필드 길이 {u.shape} 가 격자 노드 수 {self.node_count} 와 다릅니다.")
        return fdm_laplacian(self.grid, u)


class FDMSolver(BaseSolver):
    """
    균일 격자 5점 차분 해석기
    RBF-FD 결과와 비교하기 위한 기준 해석기로, 시간 적분과 흡수층은 같은 방식을 씁니다.
    """

    backend = "fdm"

    @property
    def dt(self) -> float:
        if self.scenario.time.dt_fdm is not None:
            return self.scenario.time.dt_fdm
        return self.scenario.time.dt

    def grid_spacing(self, spacing: SpacingField) -> float:
        scenario = self.scenario
        if scenario.fdm.h is not None:
            return scenario.fdm.h
        if scenario.spacing.mode == "constant" and scenario.spacing.a is not None:
            return scenario.spacing.a
        return spacing.average_spacing

    def discretize(self, model: VelocityModel, spacing: SpacingField, callback: Optional[Callable[[str], None]] = None) -> NodeSet:
        h = self.grid_spacing(spacing)
        if callback:
            callback(f"격자 생성 중 (h={h:g} m)...")
        self.grid = UniformGrid.covering(self.scenario.domain, h)
        self.nodes = grid_nodes(self.scenario.domain, h)
        self.operator = GridLaplacian(self.grid)
        self.average_spacing = h
        self.log_diagnostic(
            f"격자 {self.grid.nx}×{self.grid.nz} = {self.grid.size}개 노드, h={h:g} m",
            node_count=self.grid.size,
            grid_spacing=h,
        )
        return self.nodes

    def damping_layer(self) -> AbsorbingLayer:
        self._require_discretized()
        return build_grid_damping(self.grid, self.scenario.abc.i_max)
