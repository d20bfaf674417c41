import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from app.errors import ConfigurationError, SingularStencilError, StencilConditioningWarning
from app.tools.nodes import NeighborQuery, NodeSet

logger = logging.getLogger(__name__)

DEFAULT_SUPPORT_SIZE = 7
DEFAULT_SHAPE = 70.0
SHAPE_MODES = ("absolute", "relative")

# 추정 조건수가 이 값을 넘으면 경고
CONDITION_WARNING_THRESHOLD = 1e12
# 가중치 상대 잔차 허용치
RESIDUAL_TOLERANCE = 1e-8
# 스레드 하나가 한 번에 처리하는 스텐실 수
CHUNK_SIZE = 2048


@dataclass(frozen=True)
class GaussianBasis:
    """가우시안 방사 기저 Φ(r) = exp(-r²/σ²)"""
    shape: float

    def __post_init__(self):
        if not self.shape > 0:
            raise ConfigurationError(f"형상 파라미터는 양수여야 합니다: {self.shape}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-(r * r) / self.shape ** 2)

    def laplacian(self, r):
        """2차원 라플라시안 LΦ(r) = (4r²/σ⁴ - 4/σ²)·exp(-r²/σ²)"""
        r = np.asarray(r, dtype=float)
        s2 = self.shape ** 2
        r2 = r * r
        return (4.0 * r2 / (s2 * s2) - 4.0 / s2) * np.exp(-r2 / s2)


def basis_eval(basis: GaussianBasis, r):
    return basis(r)


def basis_laplacian(basis: GaussianBasis, r):
    return basis.laplacian(r)


@dataclass(frozen=True)
class Stencil:
    """중심 노드 하나의 라플라시안 근사 (Lu)(c) ≈ Σ w_j u(s_j)"""
    center: int
    support: np.ndarray
    weights: np.ndarray


class _BatchSolution(NamedTuple):
    weights: np.ndarray
    reciprocal_condition: np.ndarray
    fallbacks: int
    refined: int


def _solve_stencils(
    centers: np.ndarray,
    supports: np.ndarray,
    shapes: np.ndarray,
    labels: np.ndarray,
) -> _BatchSolution:
    """
    여러 스텐실의 가중치 시스템 Φw = b 를 한 번에 풉니다.

    Args:
        centers: (M, 2) 중심 위치
        supports: (M, n, 2) 지지 노드 위치
        shapes: (M,) 스텐실별 형상 파라미터 σ
        labels: (M,) 오류 메시지에 쓰일 중심 노드 인덱스
    """
    diff = supports[:, :, None, :] - supports[:, None, :, :]
    r2 = np.einsum("mijk,mijk->mij", diff, diff)
    n = supports.shape[1]
    off_diagonal = ~np.eye(n, dtype=bool)
    duplicated = np.any((r2 == 0.0) & off_diagonal, axis=(1, 2))
    if duplicated.any():
        row = int(np.flatnonzero(duplicated)[0])
        raise SingularStencilError("지지 노드 위치가 중복되어 스텐실 행렬이 특이합니다.", int(labels[row]))

    s2 = (shapes * shapes)[:, None, None]
    phi = np.exp(-r2 / s2)
    rc2 = np.sum((supports - centers[:, None, :]) ** 2, axis=-1)
    s2c = s2[:, :, 0]
    rhs = (4.0 * rc2 / (s2c * s2c) - 4.0 / s2c) * np.exp(-rc2 / s2c)

    weights = np.empty_like(rhs)
    rcond = np.empty(len(rhs))
    fallbacks = 0
    try:
        lower = np.linalg.cholesky(phi)
        pivots = np.diagonal(lower, axis1=1, axis2=2) ** 2
        rcond[:] = pivots.min(axis=1) / pivots.max(axis=1)
        y = np.linalg.solve(lower, rhs[:, :, None])
        weights[:] = np.linalg.solve(np.transpose(lower, (0, 2, 1)), y)[:, :, 0]
    except np.linalg.LinAlgError:
        # 일부 행렬이 수치적으로 양의 정부호가 아니면 스텐실별로 처리
        for m in range(len(rhs)):
            try:
                factor = scipy.linalg.cho_factor(phi[m], lower=True)
                pivots = np.diagonal(factor[0]) ** 2
                rcond[m] = pivots.min() / pivots.max()
                weights[m] = scipy.linalg.cho_solve(factor, rhs[m])
            except np.linalg.LinAlgError:
                fallbacks += 1
                try:
                    weights[m] = scipy.linalg.solve(phi[m], rhs[m], assume_a="sym")
                except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
                    raise SingularStencilError(f"스텐실 행렬을 풀 수 없습니다: {exc}", int(labels[m])) from exc
                rcond[m] = 1.0 / np.linalg.cond(phi[m])

    residual = np.einsum("mij,mj->mi", phi, weights) - rhs
    scale = np.maximum(np.linalg.norm(rhs, axis=1), np.finfo(float).tiny)
    bad = np.linalg.norm(residual, axis=1) > RESIDUAL_TOLERANCE * scale
    refined = 0
    for m in np.flatnonzero(bad):
        # 한 번의 반복 개선
        correction = scipy.linalg.solve(phi[m], -residual[m], assume_a="sym")
        weights[m] += correction
        refined += 1
    if not np.all(np.isfinite(weights)):
        row = int(np.flatnonzero(~np.all(np.isfinite(weights), axis=1))[0])
        raise SingularStencilError("스텐실 가중치에 NaN/Inf 가 포함되었습니다.", int(labels[row]))
    return _BatchSolution(weights, rcond, fallbacks, refined)


def _report_conditioning(rcond: np.ndarray, labels: np.ndarray) -> None:
    worst = int(np.argmin(rcond))
    condition = 1.0 / max(rcond[worst], np.finfo(float).tiny)
    logger.debug("스텐실 최대 추정 조건수 %.3e (노드 %d)", condition, labels[worst])
    ill = rcond < 1.0 / CONDITION_WARNING_THRESHOLD
    if ill.any():
        message = (
            f"스텐실 {int(ill.sum())}개의 추정 조건수가 {CONDITION_WARNING_THRESHOLD:.0e} 를 넘습니다 "
            f"(최대 {condition:.3e}, 노드 {labels[worst]})."
        )
        warnings.warn(message, StencilConditioningWarning, stacklevel=3)


def compute_weights(center: np.ndarray, support_positions: np.ndarray, basis: GaussianBasis) -> np.ndarray:
    """
    스텐실 하나의 라플라시안 가중치를 계산합니다.

    Args:
        center: 중심 위치 (지지 노드 중 하나와 같아야 함)
        support_positions: (n, 2) 지지 노드 위치
        basis: 가우시안 기저

    Returns:
        np.ndarray: (n,) 가중치

    Raises:
        ConfigurationError: 중심이 지지 집합에 포함되지 않은 경우
        SingularStencilError: 지지 노드가 중복된 경우
    """
    center = np.asarray(center, dtype=float).reshape(2)
    support_positions = np.asarray(support_positions, dtype=float).reshape(-1, 2)
    if not np.any(np.all(support_positions == center, axis=1)):
        raise ConfigurationError("중심 노드가 지지 집합에 포함되어야 합니다.")
    solution = _solve_stencils(
        center[None, :], support_positions[None, :, :], np.array([basis.shape]), np.array([-1])
    )
    _report_conditioning(solution.reciprocal_condition, np.array([-1]))
    return solution.weights[0]


@dataclass
class LaplacianOperator:
    """
    조립된 희소 라플라시안 연산자. 경계 노드 행은 비어 있습니다.

    matrix: (N, N) CSR 행렬
    centers: (M,) 내부 노드 인덱스
    supports: (M, n) 지지 노드 인덱스
    weights: (M, n) 가중치
    reciprocal_condition: (M,) 스텐실별 추정 역조건수
    """
    matrix: scipy.sparse.csr_matrix
    centers: np.ndarray
    supports: np.ndarray
    weights: np.ndarray
    reciprocal_condition: np.ndarray
    diagnostics: List[str] = field(default_factory=list)

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def support_size(self) -> int:
        return self.supports.shape[1]

    @property
    def ill_conditioned_count(self) -> int:
        """추정 조건수가 CONDITION_WARNING_THRESHOLD 를 넘는 스텐실 수"""
        return int(np.count_nonzero(self.reciprocal_condition < 1.0 / CONDITION_WARNING_THRESHOLD))

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.node_count,):
            raise ConfigurationError(f"필드 길이 {u.shape} 가 노드 수 {self.node_count} 와 다릅니다.")
        return self.matrix @ u

    def stencil(self, center: int) -> Stencil:
        rows = np.flatnonzero(self.centers == center)
        if len(rows) == 0:
            raise ConfigurationError(f"노드 {center} 는 내부 노드가 아닙니다.")
        row = int(rows[0])
        return Stencil(center=center, support=self.supports[row].copy(), weights=self.weights[row].copy())

    def rows(self) -> Iterator[Tuple[int, int, float]]:
        """(중심, 이웃, 가중치) 세 값을 차례로 돌려줍니다."""
        for center, support, weights in zip(self.centers, self.supports, self.weights):
            for neighbor, weight in zip(support, weights):
                yield int(center), int(neighbor), float(weight)


def apply(op: LaplacianOperator, u: np.ndarray) -> np.ndarray:
    """노드 값 u 에 라플라시안을 적용합니다. 경계 노드 결과는 0 입니다."""
    return op.apply(u)


def assemble_laplacian(
    nodes: NodeSet,
    query: Optional[NeighborQuery] = None,
    support_size: int = DEFAULT_SUPPORT_SIZE,
    shape: float = DEFAULT_SHAPE,
    shape_mode: str = "absolute",
    threads: Optional[int] = None,
    callback=None,
) -> LaplacianOperator:
    """
    모든 내부 노드에 대해 RBF-FD 라플라시안 스텐실을 조립합니다.

    Args:
        nodes: 노드 집합
        query: 최근접 이웃 검색기 (없으면 생성)
        support_size: 중심을 포함한 지지 노드 수 n
        shape: 형상 파라미터 (absolute 모드는 m 단위 σ, relative 모드는 평균 지지 반경 대비 배수)
        shape_mode: "absolute" 또는 "relative"
        threads: 스텐실 계산 스레드 수 (None 이면 기본값)
        callback: 진행 상황 메시지 콜백

    Returns:
        LaplacianOperator: 조립된 연산자

    Raises:
        ConfigurationError: n 이 노드 수보다 크거나 모드가 잘못된 경우
        SingularStencilError: 특이 스텐실이 있는 경우
    """
    if shape_mode not in SHAPE_MODES:
        raise ConfigurationError(f"알 수 없는 형상 모드: {shape_mode}")
    if support_size < 2 or support_size > nodes.size:
        raise ConfigurationError(f"지지 노드 수 n={support_size} 는 2 이상, 노드 수({nodes.size}) 이하여야 합니다.")
    GaussianBasis(shape)
    if query is None:
        query = NeighborQuery(nodes.positions)

    centers = nodes.interior_indices
    supports = query.knn_many(nodes.positions[centers], support_size)
    if callback:
        callback(f"내부 노드 {len(centers)}개의 스텐실 가중치 계산 중...")

    chunks = [slice(start, min(start + CHUNK_SIZE, len(centers))) for start in range(0, len(centers), CHUNK_SIZE)]

    def solve_chunk(part: slice) -> _BatchSolution:
        support_positions = nodes.positions[supports[part]]
        center_positions = nodes.positions[centers[part]]
        if shape_mode == "relative":
            radius = np.linalg.norm(support_positions - center_positions[:, None, :], axis=-1).mean(axis=1)
            shapes = shape * radius
        else:
            shapes = np.full(len(center_positions), shape)
        return _solve_stencils(center_positions, support_positions, shapes, centers[part])

    if threads is not None and threads <= 1:
        solutions = [solve_chunk(part) for part in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            solutions = list(executor.map(solve_chunk, chunks))

    if solutions:
        weights = np.concatenate([s.weights for s in solutions])
        rcond = np.concatenate([s.reciprocal_condition for s in solutions])
    else:
        weights = np.empty((0, support_size))
        rcond = np.empty(0)
    fallbacks = sum(s.fallbacks for s in solutions)
    refined = sum(s.refined for s in solutions)

    rows = np.repeat(centers, support_size)
    matrix = scipy.sparse.csr_matrix(
        (weights.ravel(), (rows, supports.ravel())), shape=(nodes.size, nodes.size)
    )

    diagnostics = [f"스텐실 수 {len(centers)}, 지지 노드 수 n={support_size}, 형상 {shape} ({shape_mode})"]
    if len(rcond):
        diagnostics.append(f"최대 추정 조건수 {1.0 / max(rcond.min(), np.finfo(float).tiny):.3e}")
        _report_conditioning(rcond, centers)
    if fallbacks:
        diagnostics.append(f"대칭 피벗 해법으로 전환된 스텐실 {fallbacks}개")
    if refined:
        diagnostics.append(f"반복 개선이 적용된 스텐실 {refined}개")
    for line in diagnostics:
        logger.info(line)

    return LaplacianOperator(
        matrix=matrix,
        centers=centers,
        supports=supports,
        weights=weights,
        reciprocal_condition=rcond,
        diagnostics=diagnostics,
    )
