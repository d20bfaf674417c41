import numpy as np
import pytest

from app.errors import ConfigurationError, SingularStencilError
from app.tools import rbf
from app.tools.nodes import NodeSet, Rect, grid_nodes
from app.tools.rbf import GaussianBasis, apply, assemble_laplacian, basis_eval, basis_laplacian, compute_weights

CROSS = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
CROSS_EXPECTED = np.array([-4.0, 1.0, 1.0, 1.0, 1.0])


def test_basis_values():
    basis = GaussianBasis(70.0)
    assert basis_eval(basis, 0.0) == pytest.approx(1.0)
    assert basis_eval(basis, 70.0) == pytest.approx(np.exp(-1.0))
    assert basis_eval(basis, 2.0) == pytest.approx(np.exp(-4.0 / 4900.0))


def test_basis_laplacian_values():
    assert basis_laplacian(GaussianBasis(70.0), 0.0) == pytest.approx(-4.0 / 4900.0)
    assert basis_laplacian(GaussianBasis(1.0), 1.0) == pytest.approx(0.0, abs=1e-15)
    assert basis_laplacian(GaussianBasis(2.0), 1.0) == pytest.approx(-0.58410, rel=1e-4)


def test_basis_rejects_non_positive_shape():
    with pytest.raises(ConfigurationError):
        GaussianBasis(0.0)


def _relative_error(weights, expected):
    return np.max(np.abs(weights - expected) / np.abs(expected))


def test_cross_stencil_approaches_five_point_rule():
    weights = compute_weights(CROSS[0], CROSS, GaussianBasis(70.0))
    assert _relative_error(weights, CROSS_EXPECTED) <= 1e-3
    # 대칭 십자형은 닫힌 형태: 팔 가중치 4δ²e^(-δ)/(1-e^(-2δ))², δ = (h/σ)²
    delta = 1.0 / 70.0 ** 2
    arm = 4.0 * delta ** 2 * np.exp(-delta) / np.expm1(-2.0 * delta) ** 2
    assert weights[1:] == pytest.approx(np.full(4, arm), rel=1e-6)


def test_cross_stencil_error_shrinks_as_basis_flattens():
    errors = [
        _relative_error(compute_weights(CROSS[0], CROSS, GaussianBasis(shape)), CROSS_EXPECTED)
        for shape in (10.0, 30.0, 70.0)
    ]
    assert errors[0] > errors[1] > errors[2]


def test_collinear_stencil_gives_second_difference():
    support = np.array([[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    weights = compute_weights(support[0], support, GaussianBasis(70.0))
    assert _relative_error(weights, np.array([-2.0, 1.0, 1.0])) <= 1e-3


def test_weights_reproduce_basis_laplacian(rng):
    basis = GaussianBasis(1.0)
    off_diagonal = ~np.eye(7, dtype=bool)
    checked = 0
    while checked < 1000:
        support = rng.uniform(-1.0, 1.0, size=(7, 2))
        r = np.hypot(*(support[:, None, :] - support[None, :, :]).transpose(2, 0, 1))
        if r[off_diagonal].min() < 0.3:
            continue
        checked += 1
        center = support[0]
        weights = compute_weights(center, support, basis)
        rhs = basis.laplacian(np.hypot(*(support - center).T))
        residual = basis(r) @ weights - rhs
        assert np.linalg.norm(residual) <= 1e-7 * np.linalg.norm(rhs)


@pytest.mark.parametrize("support_size", [5, 9])
def test_laplacian_error_is_second_order_under_refinement(support_size):
    errors = []
    for h in (0.25, 0.125, 0.0625):
        nodes = grid_nodes(Rect(0.0, 1.0, 0.0, 1.0), h)
        op = assemble_laplacian(nodes, support_size=support_size, shape=1.0, threads=1)
        u = np.sin(np.pi * nodes.x) * np.sin(np.pi * nodes.z)
        exact = -2.0 * np.pi ** 2 * u
        interior = nodes.interior_mask
        errors.append(np.max(np.abs(op.apply(u)[interior] - exact[interior])))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.5)


def test_duplicate_support_is_singular():
    support = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(SingularStencilError):
        compute_weights(support[0], support, GaussianBasis(5.0))


def test_singular_stencil_reports_node_index():
    positions = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0], [1.0, 1.0], [1.0, 1.0]])
    kinds = np.array([1, 1, 2, 2, 0, 0])
    nodes = NodeSet(positions=positions, kinds=kinds, spacing=np.ones(6))
    with pytest.raises(SingularStencilError) as info:
        assemble_laplacian(nodes, support_size=3, shape=5.0)
    assert info.value.node_index in (4, 5)


def test_center_must_be_in_support():
    with pytest.raises(ConfigurationError):
        compute_weights(np.array([0.5, 0.5]), CROSS, GaussianBasis(70.0))


def test_grid_operator_matches_five_point_rule(small_grid_nodes):
    op = assemble_laplacian(small_grid_nodes, support_size=5, shape=70.0, threads=1)
    assert len(op.centers) == 81
    for center in op.centers:
        stencil = op.stencil(int(center))
        assert stencil.support[0] == center
        assert stencil.weights[0] == pytest.approx(-4.0, rel=1e-3)
        assert np.allclose(stencil.weights[1:], 1.0, rtol=1e-3)


def test_boundary_rows_are_empty(small_grid_nodes):
    op = assemble_laplacian(small_grid_nodes, support_size=5, threads=1)
    row_lengths = np.diff(op.matrix.indptr)
    assert np.all(row_lengths[small_grid_nodes.boundary_mask] == 0)
    u = np.ones(small_grid_nodes.size)
    assert np.all(apply(op, u)[small_grid_nodes.boundary_mask] == 0.0)
    with pytest.raises(ConfigurationError):
        op.stencil(0)


def test_apply_checks_field_length(small_grid_nodes):
    op = assemble_laplacian(small_grid_nodes, support_size=5, threads=1)
    with pytest.raises(ConfigurationError):
        op.apply(np.zeros(small_grid_nodes.size + 1))


def test_rows_enumerate_all_weights(small_grid_nodes):
    op = assemble_laplacian(small_grid_nodes, support_size=5, threads=1)
    rows = list(op.rows())
    assert len(rows) == 81 * 5
    center, neighbor, weight = rows[0]
    assert center == neighbor == int(op.centers[0])


def test_quadratic_laplacian_on_scattered_nodes(unit_nodes):
    op = assemble_laplacian(unit_nodes, threads=1)
    u = (unit_nodes.x - 5.0) ** 2 + (unit_nodes.z - 5.0) ** 2
    result = op.apply(u)[unit_nodes.interior_mask]
    assert np.median(np.abs(result - 4.0)) < 0.05 * 4.0


def test_support_size_is_validated(small_grid_nodes):
    with pytest.raises(ConfigurationError):
        assemble_laplacian(small_grid_nodes, support_size=small_grid_nodes.size + 1)
    with pytest.raises(ConfigurationError):
        assemble_laplacian(small_grid_nodes, shape_mode="scaled")


def test_assembly_is_independent_of_chunking(monkeypatch, unit_nodes):
    reference = assemble_laplacian(unit_nodes, shape=5.0, shape_mode="relative", threads=1)
    monkeypatch.setattr(rbf, "CHUNK_SIZE", 16)
    chunked = assemble_laplacian(unit_nodes, shape=5.0, shape_mode="relative", threads=4)
    assert np.array_equal(reference.supports, chunked.supports)
    assert np.allclose(reference.weights, chunked.weights, rtol=0, atol=1e-12 * np.abs(reference.weights).max())


def test_relative_shape_scales_with_stencil_radius():
    coarse = grid_nodes(Rect(0.0, 10.0, 0.0, 10.0), 1.0)
    fine = grid_nodes(Rect(0.0, 5.0, 0.0, 5.0), 0.5)
    a = assemble_laplacian(coarse, support_size=5, shape=3.0, shape_mode="relative", threads=1)
    b = assemble_laplacian(fine, support_size=5, shape=3.0, shape_mode="relative", threads=1)
    # 간격이 절반이면 같은 모양의 스텐실 가중치는 4배
    assert np.allclose(b.weights[0], 4.0 * a.weights[0], rtol=1e-8)
