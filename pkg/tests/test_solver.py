import numpy as np
import pytest
import scipy.sparse as sps

from monoms import (assemble, assemble_tpfa, bound_check, build_cartesian_grid, build_support_regions,
                    coarse_operator, connectivity_matrix, constant_dirichlet, direct_solve, error_norms,
                    init_prolongation, iterative_multiscale, left_to_right, lognormal_field,
                    m_matrix_fine, nullspace_drift, one_step_multiscale, partition_uniform,
                    perturb_interior_nodes, restriction_cv, restriction_galerkin, rotated_tensor,
                    smooth_prolongation)
from monoms.errors import DivergenceError, InvalidArgumentError
from monoms.monotone import DRIFT_TOL
from monoms.solver import SolveReport, read_residual_csv, write_residual_csv


def setup(grid, field, ratio, scheme="tpfa", bc=None, fine_repair=False):
    bc = bc or left_to_right()
    sys_ = assemble(grid, field, bc, scheme)
    A_basis = m_matrix_fine(sys_.matrix) if fine_repair else sys_.matrix
    part = partition_uniform(grid, ratio)
    sup = build_support_regions(grid, part)
    P = smooth_prolongation(connectivity_matrix(A_basis), init_prolongation(part), sup)
    return sys_, part, P


def test_error_norm_examples():
    assert error_norms([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0)
    l2, linf = error_norms([1.0, 0.0], [0.9, 0.1])
    assert l2 == pytest.approx(np.sqrt(0.02), rel=1e-12)
    assert linf == pytest.approx(0.1, rel=1e-12)
    assert error_norms([10.0, 0.0], [9.0, 1.0]) == pytest.approx((l2, linf), rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        error_norms([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        error_norms([1.0], [1.0, 2.0])


def test_bound_check_examples():
    assert bound_check([0.5, 0.7]).violations == 0
    b = bound_check([0.5, 1.2, -0.1])
    assert (b.above, b.below) == (1, 1)
    assert (b.worst_above, b.worst_below) == (1.2, -0.1)
    assert (b.above_cells, b.below_cells) == ([1], [2])
    with pytest.raises(InvalidArgumentError):
        bound_check([0.5], 1.0, 0.0)


def test_identity_coarsening_is_the_direct_solve(lognormal_case):
    grid, field = lognormal_case
    sys_ = assemble_tpfa(grid, field, left_to_right())
    n = grid.num_cells
    I = sps.identity(n, format="csr")
    p = one_step_multiscale(sys_.matrix, sys_.rhs, I, I, sys_.matrix)
    ref = direct_solve(sys_.matrix, sys_.rhs)
    assert np.linalg.norm(p - ref) <= 1e-12 * np.linalg.norm(ref)
    p_it, rep = iterative_multiscale(sys_.matrix, sys_.rhs, I, I, sys_.matrix)
    assert rep.converged and rep.iterations == 1


@pytest.mark.parametrize("ratio", [(5, 5), (4, 7), (15, 20)])
@pytest.mark.parametrize("repair", [False, True])
def test_constant_reproduction_tpfa(lognormal_case, ratio, repair):
    grid, _ = lognormal_case
    _, part, P = setup(grid, lognormal_field(grid, seed=1, sigma_log=3.0), ratio)
    sys_c = assemble_tpfa(grid, lognormal_field(grid, seed=1, sigma_log=3.0), constant_dirichlet(grid, 1.0))
    R = restriction_cv(part)
    op = coarse_operator(R, sys_c.matrix, P, 0.0 if repair else None)
    p = one_step_multiscale(sys_c.matrix, sys_c.rhs, P, R, op)
    assert np.abs(p - 1.0).max() <= 1e-10


def test_constant_reproduction_mpfa():
    grid = perturb_interior_nodes(build_cartesian_grid((200.0, 20.0), (30, 30)), 0.3, 0)
    field = rotated_tensor(60, 1000, 100)
    _, part, P = setup(grid, field, (10, 10), "mpfa-o", fine_repair=True)
    sys_c = assemble(grid, field, constant_dirichlet(grid, 3.0), "mpfa-o")
    for R in (restriction_cv(part), restriction_galerkin(P)):
        p = one_step_multiscale(sys_c.matrix, sys_c.rhs, P, R, coarse_operator(R, sys_c.matrix, P))
        assert np.abs(p - 3.0).max() <= 1e-10 * 3.0


def test_coarse_mass_balance():
    grid = build_cartesian_grid((300.0, 400.0), (15, 20))
    field = lognormal_field(grid, seed=1, sigma_log=3.0)
    sys_, part, P = setup(grid, field, (3, 5))
    A, q = sys_.matrix, sys_.rhs
    R = restriction_cv(part)
    A_c = coarse_operator(R, A, P)
    p, p_c = one_step_multiscale(A, q, P, R, A_c, return_coarse=True)
    res = R.matrix @ (q - A @ p)
    assert np.abs(res).max() <= 1e-10 * np.abs(R.matrix @ q).max()
    A_m = coarse_operator(R, A, P, 0.0, 1.0)
    assert abs(A_m - A_c).max() > 0
    p, p_c = one_step_multiscale(A, q, P, R, A_m, return_coarse=True)
    res = R.matrix @ (q - A @ p)
    # the repaired coarse system moves its perturbation into the block balances, which still sum to zero
    np.testing.assert_allclose(res, (A_m - A_c) @ p_c, rtol=0, atol=1e-10 * np.abs(R.matrix @ q).max())
    assert abs(res.sum()) <= 1e-10 * np.abs(R.matrix @ q).max()


@pytest.mark.parametrize("kind", ["cv", "galerkin"])
@pytest.mark.parametrize("repair", [False, True])
def test_iterative_matches_direct(lognormal_case, kind, repair):
    grid, field = lognormal_case
    sys_, part, P = setup(grid, field, (3, 4))
    R = restriction_cv(part) if kind == "cv" else restriction_galerkin(P)
    op = coarse_operator(R, sys_.matrix, P, 0.01 if repair else None)
    tol = 1e-8
    p, rep = iterative_multiscale(sys_.matrix, sys_.rhs, P, R, op, smoothing_steps=2, tol=tol, max_cycles=300)
    assert rep.converged
    assert rep.residuals[-1] <= tol and len(rep.residuals) == rep.iterations
    assert all(r > tol for r in rep.residuals[:-1])
    ref = direct_solve(sys_.matrix, sys_.rhs)
    assert np.linalg.norm(p - ref) <= 10 * tol * np.linalg.norm(ref)


def test_non_convergence_keeps_full_history(lognormal_case):
    grid, field = lognormal_case
    sys_, part, P = setup(grid, field, (3, 4))
    R = restriction_cv(part)
    p, rep = iterative_multiscale(sys_.matrix, sys_.rhs, P, R, coarse_operator(R, sys_.matrix, P),
                                  smoothing_steps=0, tol=1e-14, max_cycles=7)
    assert not rep.converged and rep.iterations == 7 and len(rep.residuals) == 7
    assert np.all(np.isfinite(rep.residuals))


def test_divergence_carries_history():
    grid = build_cartesian_grid((1.0, 1.0), (3, 3))
    sys_ = assemble_tpfa(grid, lognormal_field(grid, seed=1), left_to_right())
    I = sps.identity(9, format="csr")
    # a coarse operator 2.5 times too weak overshoots: the error is scaled by -1.5 every cycle
    with pytest.raises(DivergenceError) as info:
        iterative_multiscale(sys_.matrix, sys_.rhs, I, I, 0.4 * sys_.matrix, smoothing_steps=0,
                             max_cycles=5000)
    hist = info.value.history
    assert len(hist) > 100 and not np.isfinite(hist[-1])
    assert np.all(np.isfinite(hist[:-1]))
    assert hist[10] / hist[9] == pytest.approx(1.5, rel=1e-6)


def test_finalize_with_control_volume_restriction(lognormal_case):
    grid, field = lognormal_case
    sys_, part, P = setup(grid, field, (3, 4))
    A, q = sys_.matrix, sys_.rhs
    Rg, Rcv = restriction_galerkin(P), restriction_cv(part)
    p, rep = iterative_multiscale(A, q, P, Rg, coarse_operator(Rg, A, P), tol=1e-3, max_cycles=50,
                                  finalize_cv=True, cv_restriction=Rcv)
    bal = Rcv.matrix @ (q - A @ p)
    assert np.abs(bal).max() <= 1e-10 * np.abs(Rcv.matrix @ q).max()
    with pytest.raises(InvalidArgumentError):
        iterative_multiscale(A, q, P, Rg, coarse_operator(Rg, A, P), max_cycles=2, finalize_cv=True)


def test_zero_rhs_rejected():
    I = sps.identity(3, format="csr")
    with pytest.raises(InvalidArgumentError):
        iterative_multiscale(I, np.zeros(3), I, I, I)


def test_report_and_residual_files(tmp_path):
    path = tmp_path / "res.csv"
    write_residual_csv([0.5, 0.25, 1e-9], path)
    assert read_residual_csv(path) == [0.5, 0.25, 1e-9]
    rep = SolveReport(residuals=[0.5], iterations=1)
    rep.write_json(tmp_path / "r.json")
    assert '"iterations": 1' in (tmp_path / "r.json").read_text()


@pytest.mark.slow
def test_reduced_three_dimensional_case():
    """Coarse repair with a small threshold removes every bound violation in 3-D."""
    grid = build_cartesian_grid((1200.0, 600.0, 30.0), (60, 60, 15))
    field = lognormal_field(grid, seed=1, sigma_log=3.0)
    sys_, part, P = setup(grid, field, (5, 5, 5))
    A, q = sys_.matrix, sys_.rhs
    R = restriction_cv(part)
    A_c = coarse_operator(R, A, P)
    A_m = coarse_operator(R, A, P, 1e-4, 1.0)
    assert nullspace_drift(A_c, A_m) <= DRIFT_TOL * np.abs(A_c.diagonal()).max()
    raw = bound_check(one_step_multiscale(A, q, P, R, A_c))
    fixed = bound_check(one_step_multiscale(A, q, P, R, A_m))
    assert raw.violations >= 1
    assert fixed.violations == 0
