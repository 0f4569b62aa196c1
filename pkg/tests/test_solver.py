import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, strategies as st

from hdm.assembly import Assembler, SparseSystem
from hdm.problems import get_exact, get_problem, ns_problem, vk_problem
from hdm.solver import NewtonConfig, SingularMatrixError, d_norm, newton_solve, solve_linear
from tests.conftest import cached_hd


def residual_ok(A, x, b):
    A = sp.csr_matrix(A)
    return np.abs(A @ x - b).max() <= 1e-10 * (abs(A).sum(1).max() * np.abs(x).max() + np.abs(b).max())


@pytest.mark.parametrize("method", ["direct", "iterative"])
def test_identity(method):
    b = np.arange(7.0) - 3
    assert np.allclose(solve_linear(sp.eye(7), b, method), b, atol=1e-14)


@pytest.mark.parametrize("method", ["direct", "iterative"])
def test_spd_bilinear_with_constructed_solution(method):
    A = Assembler(cached_hd("morley", 3), ns_problem()).bilinear()
    b = A @ np.ones(A.shape[0])
    x = solve_linear(SparseSystem(A, b), method=method)
    assert np.abs(x - 1).max() <= 1e-9
    assert residual_ok(A, x, b)


@given(st.integers(0, 10 ** 6))
def test_random_sparse_vs_dense(seed):
    rng = np.random.default_rng(seed)
    A = sp.random(50, 50, density=0.1, random_state=rng) + 10 * sp.eye(50)
    b = rng.standard_normal(50)
    ref = sla.solve(A.toarray(), b)
    for method in ("direct", "iterative"):
        x = solve_linear(A, b, method)
        assert np.abs(x - ref).max() <= 1e-9
        assert residual_ok(A, x, b)


def test_singular_reports_pivot():
    A = sp.csr_matrix(np.array([[1.0, 2, 0], [0, 0, 0], [0, 1, 3]]))
    with pytest.raises(SingularMatrixError) as info:
        solve_linear(A, np.ones(3))
    assert info.value.pivot == 1
    B = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrixError) as info:
        solve_linear(B, np.ones(2))
    assert info.value.pivot >= 0


def test_bad_inputs():
    with pytest.raises(ValueError):
        solve_linear(sp.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        solve_linear(sp.eye(3), np.ones(3), "cholesky")
    assert solve_linear(sp.csr_matrix((0, 0)), np.zeros(0)).size == 0


@pytest.mark.parametrize("kw", [{"tol_increment": 0.0}, {"max_iter": 0}, {"linear_solver": "qr"}])
def test_newton_config_validation(kw):
    with pytest.raises(ValueError):
        NewtonConfig(**kw)


@pytest.mark.parametrize("method", ["morley", "adini", "gr"])
def test_zero_load_gives_zero_solution(method):
    hd = cached_hd(method, 2)
    p = vk_problem()
    psi, rep = newton_solve(hd, p, load=np.zeros(2 * hd.n_dofs))
    assert not np.asarray(psi).any()
    assert rep.converged and rep.iterations == 1 and rep.increment_history == [0.0]


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_ns_morley_converges_quickly(level):
    hd = cached_hd("morley", level)
    p, ex = ns_problem(), get_exact("ns", "square")
    asm = Assembler(hd, p)
    psi, rep = newton_solve(hd, p, ex, assembler=asm)
    assert rep.converged and rep.iterations <= 4
    assert len(rep.increment_history) == rep.iterations
    assert rep.increment_history[-1] <= 1e-9
    load = asm.load_vector(ex)
    assert np.abs(asm.residual(psi, load)).max() <= 1e-8 * max(np.abs(load).max(), 1.0)


def test_reported_nonconvergence_is_not_an_exception():
    hd = cached_hd("morley", 1, "lshape")
    psi, rep = newton_solve(hd, vk_problem(), get_exact("vk", "lshape"), NewtonConfig(max_iter=2))
    assert not rep.converged and rep.iterations == 2
    assert np.all(np.isfinite(psi))


def test_iterative_and_direct_agree():
    hd = cached_hd("adini", 3)
    p, ex = vk_problem(), get_exact("vk", "square")
    a, _ = newton_solve(hd, p, ex)
    b, rep = newton_solve(hd, p, ex, NewtonConfig(linear_solver="iterative"))
    assert rep.converged
    assert np.abs(np.asarray(a) - np.asarray(b)).max() <= 1e-9 * np.abs(np.asarray(a)).max()


def test_newton_is_deterministic():
    hd = cached_hd("gr", 4)
    p, ex = ns_problem(), get_exact("ns", "square")
    a, ra = newton_solve(hd, p, ex)
    b, rb = newton_solve(hd, p, ex)
    assert np.array_equal(np.asarray(a), np.asarray(b))
    assert ra.increment_history == rb.increment_history


def test_d_norm_matches_direct_quadrature():
    hd = cached_hd("morley", 3)
    asm = Assembler(hd, get_problem("vk"))
    v = np.random.default_rng(0).standard_normal(2 * hd.n_dofs)
    _, _, H = asm.fields(v)
    direct = np.sqrt(np.sum(asm.w * np.sum(H ** 2, -1)))
    assert d_norm(asm.hessian_gram(), v) == pytest.approx(direct, rel=1e-12)
