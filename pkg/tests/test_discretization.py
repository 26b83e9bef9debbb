import numpy as np
import pytest
import scipy.sparse as sps

from monoms import (BoundarySpec, assemble, assemble_mpfa_o, assemble_tpfa, build_cartesian_grid,
                    constant_dirichlet, diagonal_field, direct_solve, left_to_right, lognormal_field,
                    perturb_interior_nodes, rotated_tensor, uniform_tensor)
from monoms.errors import AssemblyError, InvalidArgumentError


def two_cells():
    return build_cartesian_grid((2.0, 1.0), (2, 1))


def test_two_cell_no_flow():
    A = assemble_tpfa(two_cells(), uniform_tensor(np.eye(2)), BoundarySpec()).matrix
    np.testing.assert_allclose(A.toarray(), [[1, -1], [-1, 1]], rtol=1e-12)


def test_two_cell_dirichlet_golden():
    sys_ = assemble_tpfa(two_cells(), uniform_tensor(np.eye(2)), left_to_right(1.0, 0.0))
    np.testing.assert_allclose(sys_.matrix.toarray(), [[3, -1], [-1, 3]], rtol=1e-12)
    np.testing.assert_allclose(sys_.rhs, [2, 0], rtol=1e-12)
    np.testing.assert_allclose(direct_solve(sys_.matrix, sys_.rhs), [0.75, 0.25], rtol=1e-12)


def test_harmonic_averaging():
    field = diagonal_field([[1.0, 4.0], [1.0, 4.0]])
    A = assemble_tpfa(two_cells(), field, BoundarySpec()).matrix
    assert A[0, 1] == pytest.approx(-1.6, rel=1e-12)


def test_tpfa_matrix_structure(lognormal_case):
    grid, field = lognormal_case
    A = assemble_tpfa(grid, field, left_to_right()).matrix
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    assert np.all(A.diagonal() > 0)
    off = (A - sps.diags(A.diagonal())).tocsr()
    off.eliminate_zeros()
    assert off.data.max() < 0
    # no stored zeros, one diagonal per row, sorted column indices
    assert np.count_nonzero(A.data == 0) == 0
    assert A.has_sorted_indices
    dirichlet_cells = np.unique(grid.face_cells[np.concatenate([grid.side_faces("xmin"),
                                                               grid.side_faces("xmax")]), 0])
    rowsum = np.asarray(A.sum(axis=1)).ravel()
    inner = np.setdiff1d(np.arange(grid.num_cells), dirichlet_cells)
    assert np.abs(rowsum[inner]).max() <= 1e-12 * A.diagonal().max()
    assert np.all(rowsum[dirichlet_cells] > 0)


def test_tpfa_sources_enter_rhs():
    g = build_cartesian_grid((1.0, 1.0), (3, 3))
    q = np.arange(9.0)
    sys_ = assemble_tpfa(g, uniform_tensor(np.eye(2)), BoundarySpec(sources=q))
    np.testing.assert_array_equal(sys_.rhs, q)
    with pytest.raises(InvalidArgumentError):
        assemble_tpfa(g, uniform_tensor(np.eye(2)), BoundarySpec(sources=np.ones(4)))


def test_bad_dirichlet_selection():
    g = build_cartesian_grid((1.0, 1.0), (3, 3))
    K = uniform_tensor(np.eye(2))
    with pytest.raises(InvalidArgumentError):
        assemble_tpfa(g, K, BoundarySpec([("xmin", 1.0), (g.side_faces("xmin")[:1], 0.0)]))
    with pytest.raises(InvalidArgumentError):
        assemble_tpfa(g, K, BoundarySpec([(g.interior_faces[:1], 0.0)]))


def test_tpfa_rejects_non_positive_half_transmissibility():
    g = perturb_interior_nodes(build_cartesian_grid((500.0, 200.0), (20, 20)), 0.45, 0)
    with pytest.raises(AssemblyError, match="half transmissibility on face"):
        assemble_tpfa(g, rotated_tensor(45, 1000, 10), left_to_right())


@pytest.mark.parametrize("scheme", ["tpfa", "mpfa-o"])
def test_constant_solution_reproduced(scheme, rough_grid):
    field = rotated_tensor(30, 5, 1) if scheme == "mpfa-o" else uniform_tensor(np.eye(2))
    grid = rough_grid if scheme == "mpfa-o" else build_cartesian_grid((3.0, 2.0), (12, 8))
    sys_ = assemble(grid, field, constant_dirichlet(grid, 2.5), scheme)
    p = direct_solve(sys_.matrix, sys_.rhs)
    assert np.abs(p - 2.5).max() <= 1e-10 * 2.5


def test_mpfa_equals_tpfa_on_cartesian_grid():
    g = build_cartesian_grid((3.0, 2.0), (9, 7))
    rng = np.random.default_rng(5)
    field = diagonal_field([rng.lognormal(size=g.num_cells), rng.lognormal(size=g.num_cells)])
    bc = left_to_right(1.0, 0.0)
    At, Am = assemble_tpfa(g, field, bc), assemble_mpfa_o(g, field, bc)
    D = (Am.matrix - At.matrix).toarray()
    scale = np.maximum(np.abs(At.matrix.toarray()), 1e-300)
    mask = At.matrix.toarray() != 0
    assert np.all(np.abs(D[~mask]) <= 1e-10 * np.abs(At.matrix).max())
    assert np.max(np.abs(D[mask]) / scale[mask]) <= 1e-10
    np.testing.assert_allclose(Am.rhs, At.rhs, rtol=1e-10)


def test_mpfa_linear_field_exactness(rough_grid):
    g = rough_grid
    field = uniform_tensor([[3.0, 1.0], [1.0, 2.0]])
    lin = lambda x: 1.0 + 2.0 * x[:, 0] - 0.5 * x[:, 1]
    bfaces = g.boundary_faces
    bc = BoundarySpec([(bfaces, lin(g.face_centroids[bfaces]))])
    sys_ = assemble_mpfa_o(g, field, bc, boundary="interaction")
    p = direct_solve(sys_.matrix, sys_.rhs)
    exact = lin(g.cell_centroids)
    assert np.abs(p - exact).max() <= 1e-9 * np.abs(exact).max()


def test_tpfa_boundary_fallback_is_not_linearly_exact(rough_grid):
    """The half-cell boundary term is only consistent on K-orthogonal cells."""
    g = rough_grid
    field = uniform_tensor([[3.0, 1.0], [1.0, 2.0]])
    lin = lambda x: 1.0 + 2.0 * x[:, 0] - 0.5 * x[:, 1]
    bfaces = g.boundary_faces
    sys_ = assemble_mpfa_o(g, field, BoundarySpec([(bfaces, lin(g.face_centroids[bfaces]))]))
    p = direct_solve(sys_.matrix, sys_.rhs)
    assert np.abs(p - lin(g.cell_centroids)).max() > 1e-6


def test_mpfa_interior_rows_sum_to_zero(rough_grid):
    g = rough_grid
    sys_ = assemble_mpfa_o(g, rotated_tensor(60, 1000, 100), left_to_right())
    rowsum = np.asarray(sys_.matrix.sum(axis=1)).ravel()
    touched = np.unique(g.face_cells[sys_.dirichlet_faces, 0])
    inner = np.setdiff1d(np.arange(g.num_cells), touched)
    assert np.abs(rowsum[inner]).max() <= 1e-12 * np.abs(sys_.matrix.diagonal()).max()


@pytest.mark.parametrize("theta,k1,k2,extent", [(60, 1000, 100, (200.0, 20.0)), (45, 1000, 10, (500.0, 200.0))])
def test_mpfa_has_positive_offdiagonals_on_rough_anisotropic_grids(theta, k1, k2, extent):
    g = perturb_interior_nodes(build_cartesian_grid(extent, (20, 20)), 0.3, 0)
    A = assemble_mpfa_o(g, rotated_tensor(theta, k1, k2), left_to_right()).matrix
    off = (A - sps.diags(A.diagonal())).tocsr()
    assert np.count_nonzero(off.data > 0) > 0


def test_batched_matches_unbatched(rough_grid):
    field = lognormal_field(rough_grid, seed=2, sigma_log=1.0)
    a = assemble_mpfa_o(rough_grid, field, left_to_right(), batched=True)
    b = assemble_mpfa_o(rough_grid, field, left_to_right(), batched=False)
    assert abs(a.matrix - b.matrix).max() <= 1e-12 * abs(a.matrix).max()
    np.testing.assert_allclose(a.rhs, b.rhs, rtol=1e-12, atol=0)


def test_mpfa_needs_2d():
    g = build_cartesian_grid((1.0, 1.0, 1.0), (2, 2, 2))
    with pytest.raises(InvalidArgumentError):
        assemble_mpfa_o(g, uniform_tensor(np.eye(3)), BoundarySpec())


def test_unknown_scheme_and_boundary_mode(rough_grid):
    K = uniform_tensor(np.eye(2))
    with pytest.raises(InvalidArgumentError):
        assemble(rough_grid, K, BoundarySpec(), scheme="fem")
    with pytest.raises(InvalidArgumentError):
        assemble_mpfa_o(rough_grid, K, BoundarySpec(), boundary="weak")
