import numpy as np
import pytest
import scipy.linalg as sla
import sympy
from hypothesis import given, strategies as st

from hdm.assembly import (Assembler, BlockVector, assemble_bilinear, assemble_jacobian, assemble_load,
                          assemble_residual)
from hdm.problems import ExactSolution, get_exact, get_problem, ns_problem, vk_problem
from tests.conftest import cached_hd

CASES = [(m, p) for m in ("morley", "adini", "gr") for p in ("ns", "vk")]


def assembler(method, problem, level=1, domain="square"):
    return Assembler(cached_hd(method, level, domain), get_problem(problem))


def test_morley_ns_level1_spd():
    A = assemble_bilinear(cached_hd("morley", 1), ns_problem()).toarray()
    assert A.shape == (9, 9)
    sla.cholesky(A)


@pytest.mark.parametrize("method,problem", CASES)
def test_bilinear_symmetric(method, problem):
    A = assembler(method, problem, 2).bilinear().toarray()
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()


@pytest.mark.parametrize("method", ["morley", "adini", "gr"])
def test_vk_bilinear_blocks(method):
    asm = assembler(method, "vk", 2)
    n = asm.n
    A = asm.bilinear().toarray()
    assert not A[:n, n:].any() and not A[n:, :n].any()
    tol = 1e-13 * np.abs(A).max()
    assert np.allclose(A[n:, n:], 2 * A[:n, :n], rtol=0, atol=tol)
    assert np.allclose(A[:n, :n], assembler(method, "ns", 2).bilinear().toarray(), rtol=0, atol=tol)


def test_matrix_storage_invariants():
    asm = assembler("morley", "vk", 2)
    psi = np.random.default_rng(0).standard_normal(asm.k * asm.n)
    for M in (asm.bilinear(), asm.jacobian(psi)):
        assert M.has_sorted_indices
        assert np.all(np.abs(M.data) >= 1e-300)
        for r in range(M.shape[0]):
            cols = M.indices[M.indptr[r]:M.indptr[r + 1]]
            assert np.all(np.diff(cols) > 0)


def test_locality_of_bilinear():
    hd = cached_hd("morley", 2)
    A = assemble_bilinear(hd, ns_problem()).tocoo()
    share = set()
    for cd in hd.cell_dofs:
        d = cd[cd >= 0]
        share.update((int(i), int(j)) for i in d for j in d)
    assert all((int(i), int(j)) in share for i, j in zip(A.row, A.col))


@pytest.mark.parametrize("method,problem", CASES)
def test_residual_zero_and_linear_in_load(method, problem):
    asm = assembler(method, problem, 2)
    N = asm.k * asm.n
    zero = np.zeros(N)
    assert not asm.residual(zero, np.zeros(N)).any()
    load = asm.load_vector(get_exact(problem, "square"))
    assert np.array_equal(asm.residual(zero, load), -load)
    assert np.array_equal(assemble_residual(asm.hd, asm.problem, zero, load), -load)


@pytest.mark.parametrize("method,problem", CASES)
@pytest.mark.parametrize("level", [1, 2])
def test_jacobian_matches_central_differences(method, problem, level):
    asm = assembler(method, problem, level)
    N = asm.k * asm.n
    if N == 0:
        return
    rng = np.random.default_rng(11)
    load = asm.load_vector(get_exact(problem, "square"))
    eps = 1e-5
    for _ in range(3):
        psi, phi = rng.standard_normal((2, N))
        fd = (asm.residual(psi + eps * phi, load) - asm.residual(psi - eps * phi, load)) / (2 * eps)
        jp = asm.jacobian(psi) @ phi
        assert np.linalg.norm(fd - jp) <= 1e-6 * np.linalg.norm(jp)


@pytest.mark.parametrize("method,problem", CASES)
def test_jacobian_identity(method, problem):
    asm = assembler(method, problem, 2)
    N = asm.k * asm.n
    rng = np.random.default_rng(2)
    psi = rng.standard_normal(N)
    load = asm.load_vector(get_exact(problem, "square"))
    lhs = asm.jacobian(psi) @ psi
    rhs = asm.residual(psi, load) + load + asm.trilinear_vector(psi)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())
    sys_ = assemble_jacobian(asm.hd, asm.problem, psi)
    assert np.allclose(sys_.rhs, asm.trilinear_vector(psi))


@pytest.mark.parametrize("method,problem", CASES)
def test_jacobian_at_zero_is_bilinear(method, problem):
    asm = assembler(method, problem, 2)
    J = asm.jacobian(np.zeros(asm.k * asm.n))
    assert abs(J - asm.bilinear()).max() == 0


@pytest.mark.parametrize("method,problem", CASES)
def test_discrete_a3(method, problem):
    asm = assembler(method, problem, 2)
    rng = np.random.default_rng(4)
    for _ in range(20):
        psi = rng.standard_normal(asm.k * asm.n)
        _, G, H = asm.fields(psi)
        scale = np.sum(asm.w * np.linalg.norm(H, axis=-1) * np.sum(G ** 2, -1))
        assert abs(asm.trilinear_form(psi, psi, psi)) <= 1e-11 * scale
        assert abs(asm.trilinear_vector(psi) @ psi) <= 1e-11 * scale


def test_trilinear_form_consistency():
    asm = assembler("adini", "vk", 2)
    rng = np.random.default_rng(8)
    a, b, c = rng.standard_normal((3, asm.k * asm.n))
    assert asm.trilinear_form(a, b, c) == pytest.approx(asm.trilinear_vector(a, b) @ c, rel=1e-12)


def test_zero_load():
    asm = assembler("morley", "ns", 2)
    zero = lambda x, y: 0 * x  # noqa: E731
    assert not asm.load_vector(f=zero).any()
    with pytest.raises(ValueError):
        asm.load_vector()


def test_vk_second_block_zero_without_manufactured_g():
    asm = assembler("morley", "vk", 2)
    ex = get_exact("vk", "square")
    only_f = ExactSolution(ex.components, lambda x, y: ex.load(x, y) * np.array([1.0, 0.0]), "square")
    v = asm.load_vector(only_f)
    assert not v[asm.n:].any() and v[:asm.n].any()


def _morley_basis_integral_oracle(hd, dof):
    """Integral of one Morley basis function, by symbolic integration of each P2 piece."""
    x, y = sympy.symbols("x y")
    m = hd.mesh
    mons = [1, x, y, x ** 2, x * y, y ** 2]
    total = sympy.Integer(0)
    for c in range(m.n_cells):
        loc = np.flatnonzero(hd.cell_dofs[c] == dof)
        if loc.size == 0:
            continue
        V = [sympy.Matrix(p) for p in (m.points[m.cells[c]] * 4).round().astype(int).tolist()]
        V = [v / 4 for v in V]
        rows = []
        for v in V:
            rows.append([sympy.sympify(q).subs({x: v[0], y: v[1]}) for q in mons])
        for e in m.cell_edges[c]:
            mid = sympy.Matrix((m.edge_midpoints[e] * 8).round().astype(int).tolist()) / 8
            n = sympy.Matrix(m.edge_normals[e].tolist())
            n = n.applyfunc(lambda t: sympy.nsimplify(t, [sympy.sqrt(2)]))
            rows.append([(sympy.diff(q, x) * n[0] + sympy.diff(q, y) * n[1]).subs({x: mid[0], y: mid[1]})
                         for q in mons])
        rhs = sympy.zeros(6, 1)
        rhs[int(loc[0])] = 1
        coef = sympy.Matrix(rows).LUsolve(rhs)
        p = sum(cf * q for cf, q in zip(coef, mons))
        # integrate over the triangle via the affine map from the reference triangle
        s, t = sympy.symbols("s t")
        a, b, cc = V
        X = a + s * (b - a) + t * (cc - a)
        jac = abs((b - a)[0] * (cc - a)[1] - (b - a)[1] * (cc - a)[0])
        q = p.subs({x: X[0], y: X[1]}, simultaneous=True)
        total += jac * sympy.integrate(sympy.integrate(q, (t, 0, 1 - s)), (s, 0, 1))
    return float(total)


def test_morley_constant_load_vs_symbolic_oracle():
    hd = cached_hd("morley", 1)
    v = assemble_load(hd, ns_problem(), f=lambda x, y: np.ones_like(x))
    assert v[0] == pytest.approx(_morley_basis_integral_oracle(hd, 0), rel=1e-12)
    assert v[1] == pytest.approx(_morley_basis_integral_oracle(hd, 1), rel=1e-12, abs=1e-14)


def test_threads_do_not_change_results():
    hd = cached_hd("morley", 5)
    p = vk_problem()
    a1, a2 = Assembler(hd, p, threads=1), Assembler(hd, p, threads=2)
    psi = np.random.default_rng(0).standard_normal(2 * hd.n_dofs)
    J1, J2 = a1.jacobian(psi), a2.jacobian(psi)
    assert np.array_equal(J1.data, J2.data) and np.array_equal(J1.indices, J2.indices)
    assert np.array_equal(a1.trilinear_vector(psi), a2.trilinear_vector(psi))


@given(st.integers(1, 3), st.integers(0, 20))
def test_block_vector(k, n):
    v = BlockVector(np.arange(k * n, dtype=float), k)
    assert v.n == n
    for c in range(k):
        assert np.array_equal(v.component(c), np.arange(c * n, (c + 1) * n))


def test_block_vector_rejects_bad_length():
    with pytest.raises(ValueError):
        BlockVector(np.zeros(5), 2)
