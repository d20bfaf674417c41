import logging
from typing import Callable, Optional

from app.solvers.base import BaseSolver
from app.tools.media import VelocityModel, nodes_per_wavelength
from app.tools.nodes import NeighborQuery, NodeSet, SpacingField, generate_nodes
from app.tools.rbf import assemble_laplacian

logger = logging.getLogger(__name__)


class RBFFDSolver(BaseSolver):
    """
    산점 노드 위의 RBF-FD 해석기
    속도 적응형 노드를 생성하고 가우시안 기저로 라플라시안 스텐실을 조립합니다.
    """

    backend = "rbffd"

    def discretize(self, model: VelocityModel, spacing: SpacingField, callback: Optional[Callable[[str], None]] = None) -> NodeSet:
        scenario = self.scenario
        if callback:
            callback("노드 생성 중...")
        nodes = generate_nodes(
            scenario.domain,
            spacing,
            seed=scenario.seed,
            separation=scenario.spacing.separation,
            candidates=scenario.spacing.candidates,
        )
        self.nodes = nodes
        self.average_spacing = spacing.average_spacing
        self.log_diagnostic(
            f"노드 {nodes.size}개 (내부 {int(nodes.interior_mask.sum())}개), 평균 간격 {spacing.average_spacing:.4g} m",
            node_count=nodes.size,
        )

        npw_min, npw_mean = nodes_per_wavelength(nodes, model, scenario.source.sigma_r)
        self.log_diagnostic(f"파장당 노드 수: 최소 {npw_min:.3g}, 평균 {npw_mean:.3g}", npw_min=npw_min, npw_mean=npw_mean)

        if callback:
            callback("라플라시안 스텐실 조립 중...")
        operator = assemble_laplacian(
            nodes,
            NeighborQuery(nodes.positions),
            support_size=scenario.rbf.support_size,
            shape=scenario.rbf.shape,
            shape_mode=scenario.rbf.shape_mode,
            threads=self.threads,
            callback=callback,
        )
        self.operator = operator
        for line in operator.diagnostics:
            self.state["diagnostics"].append(line)
        self.state["summary"]["ill_conditioned_stencils"] = operator.ill_conditioned_count
        if len(operator.reciprocal_condition):
            self.state["summary"]["max_condition_estimate"] = float(1.0 / max(operator.reciprocal_condition.min(), 1e-300))
        return nodes
