import numpy as np
import pytest
import scipy.sparse as sp

from stokes_biot import fem
from stokes_biot.mesh import build_channel_mesh
from stokes_biot.sparsela import (
    FactorizationError,
    LooseOperator,
    apply_loosely_coupled_preconditioner,
    as_csr,
    dump_matrix,
    factorize,
    gmres,
    spmv,
)


def test_spmv_trivial():
    x = np.arange(5.0)
    assert np.array_equal(spmv(sp.identity(5, format="csr"), x), x)
    assert np.array_equal(spmv(sp.csr_matrix((5, 5)), x), np.zeros(5))


def test_spmv_matches_dense(rng):
    A = rng.standard_normal((20, 20))
    x = rng.standard_normal(20)
    y = spmv(as_csr(A), x)
    ref = A @ x
    assert np.linalg.norm(y - ref) <= 1e-13 * np.linalg.norm(ref)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(sp.identity(3, format="csr"), np.ones(4))


def test_as_csr_rejects_non_finite():
    with pytest.raises(ValueError):
        as_csr(np.array([[1.0, np.nan], [0, 1]]))


def test_factorize_diagonal():
    f = factorize(sp.diags([1.0, 2.0, 3.0]))
    assert np.allclose(f.solve(np.array([1.0, 2.0, 3.0])), 1.0)


def _p1_laplacian():
    mesh = build_channel_mesh(1.0, 0.5, 0.1, 0.05)
    dm = fem.build_dofmap(mesh, "equal-order")
    ed = fem.element_data(dm, "p_f")
    K = as_csr(fem.scatter(dm, "p_f", "p_f", fem.kernel_grad_grad(ed)))[dm["p_f"].slice, dm["p_f"].slice]
    K = sp.lil_matrix(K)
    nodes = dm.boundary_nodes("p_f", "inlet_f")
    for k in nodes:
        K[k, :] = 0
        K[k, k] = 1.0
    return sp.csr_matrix(K)


@pytest.mark.parametrize("large", [False, True])
def test_factorize_laplacian_residual(rng, large, monkeypatch):
    import stokes_biot.sparsela as sl

    if large:
        monkeypatch.setattr(sl, "DENSE_LIMIT", 0)
    K = _p1_laplacian()
    b = rng.standard_normal(K.shape[0])
    x = factorize(K).solve(b)
    assert np.linalg.norm(K @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_factorize_singular_dense():
    with pytest.raises(FactorizationError) as exc:
        factorize(np.array([[1.0, 1.0], [1.0, 1.0]]), group="demo")
    assert exc.value.row == 1 and "demo" in str(exc.value)


def test_factorize_singular_sparse_names_group(monkeypatch):
    import stokes_biot.sparsela as sl

    monkeypatch.setattr(sl, "DENSE_LIMIT", 0)
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(FactorizationError) as exc:
        factorize(A, group="darcy")
    assert exc.value.group == "darcy"


def test_gmres_identity_one_iteration(rng):
    b = rng.standard_normal(30)
    x, rep = gmres(sp.identity(30), b, tol=1e-12)
    assert rep.iterations == 1 and rep.converged
    assert np.allclose(x, b)


def test_gmres_two_by_two(rng):
    b = rng.standard_normal(2)
    x, rep = gmres(sp.diags([1.0, 2.0]), b, tol=1e-12)
    assert rep.iterations <= 2 and rep.converged
    assert np.allclose(x, b / [1, 2], rtol=1e-12)


def test_gmres_perfect_preconditioner(rng):
    A = rng.uniform(-1, 1, (50, 50))
    A = A @ A.T + 50 * np.eye(50)
    f = factorize(A)
    b = rng.standard_normal(50)
    x, rep = gmres(A, b, M=f.solve, tol=1e-10)
    assert rep.iterations == 1
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_gmres_reports_non_convergence(rng):
    n = 60
    A = sp.diags(np.linspace(1, 1e4, n))
    x, rep = gmres(A, rng.standard_normal(n), tol=1e-12, restart=5, maxIter=10)
    assert not rep.converged and rep.iterations == 10
    assert len(rep.relativeResiduals) >= 1


def test_gmres_restarted_nonsymmetric(rng):
    n = 80
    A = np.eye(n) * 4 + rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    x, rep = gmres(A, b, tol=1e-10, restart=10, maxIter=500)
    assert rep.converged
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_gmres_zero_rhs():
    x, rep = gmres(sp.identity(4), np.zeros(4))
    assert rep.converged and np.array_equal(x, np.zeros(4))


def test_gmres_rejects_bad_tol():
    with pytest.raises(ValueError):
        gmres(sp.identity(2), np.ones(2), tol=0.0)


def test_loose_operator_backward_substitution(rng):
    n = 12
    A = np.triu(rng.standard_normal((n, n))) + 5 * np.eye(n)
    A[4:8, 0:4] = 0
    A[0:4, 4:8] = rng.standard_normal((4, 4))
    op = LooseOperator(sp.csr_matrix(A), [slice(0, 4), slice(4, 8), slice(8, 12)], ["a", "b", "c"])
    Y = rng.standard_normal(n)
    z = op.solve(A @ Y)
    assert np.linalg.norm(z - Y) <= 1e-12 * np.linalg.norm(Y)
    assert op.off_diagonal_lower_norm() == 0.0


def test_preconditioner_examples(small_problem, rng):
    from stokes_biot.schemes import field_scaling

    B = small_problem.system
    # natural field magnitudes: the raw operator mixes units over ~17 decades
    Y = B.Q @ (field_scaling(small_problem) * rng.standard_normal(B.n))
    z = apply_loosely_coupled_preconditioner(B, B.A_loose_c @ Y)
    assert np.linalg.norm(z - Y) <= 1e-9 * np.linalg.norm(Y)
    assert np.array_equal(apply_loosely_coupled_preconditioner(B, np.zeros(B.n)), np.zeros(B.n))
    r = rng.standard_normal(B.n)
    z = apply_loosely_coupled_preconditioner(B, r)
    assert np.linalg.norm(B.A_loose_c @ z - r) <= 1e-10 * np.linalg.norm(r)


def test_loose_operator_is_block_upper_triangular(small_problem):
    assert small_problem.system.loose.off_diagonal_lower_norm() == 0.0
    assert small_problem.loose_a.loose.off_diagonal_lower_norm() == 0.0


def test_dump_matrix_round_trip(tmp_path, rng):
    import scipy.io

    A = sp.random(10, 10, density=0.3, random_state=1, format="csr")
    dump_matrix(A, tmp_path / "a.mtx")
    back = scipy.io.mmread(str(tmp_path / "a.mtx"))
    assert abs(back - A).max() == 0
