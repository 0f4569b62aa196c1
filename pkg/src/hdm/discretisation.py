"""Hessian discretisations: Morley, Adini and gradient-recovery (GR).

Each discretisation tabulates, for every cell, the reconstructed function,
gradient and Hessian of every local basis function at the cell's quadrature
points. Boundary degrees of freedom of the clamped problem are removed from
the global numbering; in ``cell_dofs`` they appear as ``-1``.

Hessian-type tensors use the convention ``T[i, j] = d_j R_i`` for the
derivative of a vector field ``R``; for true Hessians this is symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import QuadratureRule, default_rule, map_to_cells

METHODS = ("morley", "adini", "gr")

P2_EXPONENTS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
ADINI_EXPONENTS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
                   (3, 0), (2, 1), (1, 2), (0, 3), (3, 1), (1, 3)]


class CellEvalTable(NamedTuple):
    pi: np.ndarray    # (nloc, nq)
    grad: np.ndarray  # (nloc, nq, 2)
    hess: np.ndarray  # (nloc, nq, 2, 2)


@dataclass(eq=False)
class DofMap:
    n_dofs: int
    cell_dofs: np.ndarray           # (nC, nloc), -1 for eliminated/padding
    dof_kind: np.ndarray            # (n_dofs,) one of DOF_KINDS
    dof_entity: np.ndarray          # (n_dofs,) vertex or edge id

    DOF_KINDS = ("vertex-value", "vertex-dx", "vertex-dy", "edge-normal-derivative")


@dataclass(eq=False)
class HessianDiscretisation:
    """Tabulated reconstruction operators on a mesh.

    ``pi``, ``grad`` and ``hess`` have leading shape (nC, nloc, nq) and give
    the reconstructed function, gradient and Hessian of each local basis
    function at the quadrature points ``qpoints`` with weights ``qweights``.
    """

    method: str
    mesh: Mesh
    dof_map: DofMap
    rule: QuadratureRule
    qpoints: np.ndarray
    qweights: np.ndarray
    pi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    # Morley/Adini: monomial coefficients of the local basis in scaled coordinates
    coeffs: np.ndarray | None = None
    exponents: list | None = None
    # GR: recovered-gradient map, shape (2 nV, n_dofs)
    gr_aux: sp.csr_matrix | None = None
    stabilisation: tuple = (1.0, 1.0)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.dof_map.n_dofs

    @property
    def cell_dofs(self) -> np.ndarray:
        return self.dof_map.cell_dofs

    def table(self, c: int) -> CellEvalTable:
        return CellEvalTable(self.pi[c], self.grad[c], self.hess[c])

    def eval_local(self, cells, points):
        """Local basis (value, gradient, Hessian) at arbitrary points of ``cells``.

        Only for the polynomial elements (Morley, Adini). ``points`` has shape
        (len(cells), npts, 2).
        """
        if self.coeffs is None:
            raise ValueError("eval_local is only available for morley/adini")
        cells = np.asarray(cells)
        V, G, H = _monomials(self.exponents, self.mesh.centroids[cells],
                             self.mesh.diameters[cells], np.asarray(points, dtype=float))
        C = self.coeffs[cells]
        return (np.einsum("cqm,cmi->ciq", V, C),
                np.einsum("cqmk,cmi->ciqk", G, C),
                np.einsum("cqmkl,cmi->ciqkl", H, C))

    def __repr__(self):
        return f"HessianDiscretisation({self.method}, {self.mesh!r}, n_dofs={self.n_dofs})"


def _monomials(exps, center, scale, pts):
    """Values, gradients and Hessians of scaled monomials.

    The monomials are ``X**a * Y**b`` with ``X = (x - xc)/s``; derivatives are
    taken with respect to physical coordinates. Shapes: pts (nC, nq, 2) ->
    (nC, nq, nm), (nC, nq, nm, 2), (nC, nq, nm, 2, 2).
    """
    s = scale[:, None, None]
    X = (pts[..., 0] - center[:, None, 0])[..., None] / s
    Y = (pts[..., 1] - center[:, None, 1])[..., None] / s
    a = np.array([e[0] for e in exps])
    b = np.array([e[1] for e in exps])

    def pw(Z, k):
        # Z**k with the convention Z**negative == 0 (coefficient vanishes anyway)
        return np.where(k >= 0, Z ** np.maximum(k, 0), 0.0)

    V = pw(X, a) * pw(Y, b)
    Gx = a * pw(X, a - 1) * pw(Y, b) / s
    Gy = b * pw(X, a) * pw(Y, b - 1) / s
    Hxx = a * (a - 1) * pw(X, a - 2) * pw(Y, b) / s ** 2
    Hxy = a * b * pw(X, a - 1) * pw(Y, b - 1) / s ** 2
    Hyy = b * (b - 1) * pw(X, a) * pw(Y, b - 2) / s ** 2
    G = np.stack([Gx, Gy], axis=-1)
    H = np.stack([np.stack([Hxx, Hxy], -1), np.stack([Hxy, Hyy], -1)], -2)
    return V, G, H


def _number(free_mask):
    idx = -np.ones(free_mask.shape[0], dtype=np.int64)
    idx[free_mask] = np.arange(int(free_mask.sum()))
    return idx


def _quadrature(m: Mesh, rule=None):
    rule = rule or default_rule(m.kind)
    pts, w = map_to_cells(rule, m.points[m.cells])
    return rule, pts, w


def _polynomial_hd(method, m, exps, D, cell_dofs, dof_kind, dof_entity, rule):
    rule, qpts, qw = _quadrature(m, rule)
    C = np.linalg.inv(D)  # columns are basis coefficients
    V, G, H = _monomials(exps, m.centroids, m.diameters, qpts)
    pi = np.einsum("cqm,cmi->ciq", V, C)
    grad = np.einsum("cqmk,cmi->ciqk", G, C)
    hess = np.einsum("cqmkl,cmi->ciqkl", H, C)
    dm = DofMap(int(len(dof_kind)), cell_dofs, np.asarray(dof_kind), np.asarray(dof_entity))
    hd = HessianDiscretisation(method, m, dm, rule, qpts, qw, pi, grad, hess,
                               coeffs=C, exponents=exps)
    check_derivative_tables(hd)
    return hd


def check_derivative_tables(hd: HessianDiscretisation, n_cells: int = 8, tol: float = 1e-6):
    """Compare grad/hess tables with central differences of the local basis on a few cells."""
    nC = hd.mesh.n_cells
    cells = np.unique(np.linspace(0, nC - 1, min(n_cells, nC)).astype(int))
    pts = hd.qpoints[cells]
    step = 1e-4 * hd.mesh.diameters[cells][:, None, None]
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1.0
        vp, gp, _ = hd.eval_local(cells, pts + step * e)
        vm, gm, _ = hd.eval_local(cells, pts - step * e)
        d = step[:, None, :, :1] * 2
        fd_grad = (vp - vm)[..., None] / d
        fd_hess = (gp - gm) / d
        ref_g = hd.grad[cells][..., k:k + 1]
        ref_h = hd.hess[cells][..., :, k]
        scale_g = max(np.abs(hd.grad[cells]).max(), 1.0)
        scale_h = max(np.abs(hd.hess[cells]).max(), 1.0)
        if (np.abs(fd_grad - ref_g).max() > tol * scale_g
                or np.abs(fd_hess - ref_h).max() > tol * scale_h):
            raise RuntimeError(f"{hd.method}: derivative tables disagree with finite differences")


def build_morley(m: Mesh, rule: QuadratureRule | None = None) -> HessianDiscretisation:
    """Morley element: P2 per triangle, vertex values and edge-midpoint normal derivatives.

    The normal-derivative degree of freedom of an edge uses the mesh's stored
    edge normal, so both neighbouring cells share the same signed unknown.
    """
    if m.kind != "triangle":
        raise ValueError("Morley element requires a triangle mesh")
    nC = m.n_cells
    vpts = m.points[m.cells]                      # (nC, 3, 2)
    mids = m.edge_midpoints[m.cell_edges]         # (nC, 3, 2)
    nrm = m.edge_normals[m.cell_edges]            # (nC, 3, 2)
    Vv, _, _ = _monomials(P2_EXPONENTS, m.centroids, m.diameters, vpts)
    _, Gm, _ = _monomials(P2_EXPONENTS, m.centroids, m.diameters, mids)
    D = np.empty((nC, 6, 6))
    D[:, :3] = Vv
    D[:, 3:] = np.einsum("cemk,cek->cem", Gm, nrm)

    vnum = _number(~m.boundary_vertices)
    nvf = int((~m.boundary_vertices).sum())
    enum = _number(~m.boundary_edges)
    enum = np.where(enum >= 0, enum + nvf, -1)
    cell_dofs = np.concatenate([vnum[m.cells], enum[m.cell_edges]], axis=1)
    kind = ["vertex-value"] * nvf + ["edge-normal-derivative"] * int((~m.boundary_edges).sum())
    entity = np.concatenate([m.interior_vertices, m.interior_edges])
    return _polynomial_hd("morley", m, P2_EXPONENTS, D, cell_dofs, kind, entity, rule)


def build_adini(m: Mesh, rule: QuadratureRule | None = None) -> HessianDiscretisation:
    """Adini rectangle: P3 + {x y^3, x^3 y}, value and gradient at the four vertices."""
    if m.kind != "rectangle":
        raise ValueError("Adini element requires a rectangle mesh")
    nC = m.n_cells
    vpts = m.points[m.cells]
    Vv, Gv, _ = _monomials(ADINI_EXPONENTS, m.centroids, m.diameters, vpts)
    D = np.empty((nC, 12, 12))
    D[:, 0::3] = Vv
    D[:, 1::3] = Gv[..., 0]
    D[:, 2::3] = Gv[..., 1]

    vnum = _number(~m.boundary_vertices)
    nvf = int((~m.boundary_vertices).sum())
    base = np.where(vnum >= 0, 3 * vnum, -1)[m.cells]            # (nC, 4)
    cell_dofs = np.where(base[..., None] >= 0, base[..., None] + np.arange(3), -1).reshape(nC, 12)
    kind = np.tile(["vertex-value", "vertex-dx", "vertex-dy"], nvf)
    entity = np.repeat(m.interior_vertices, 3)
    return _polynomial_hd("adini", m, ADINI_EXPONENTS, D, cell_dofs, kind, entity, rule)


def _p1_gradients(m: Mesh):
    """Gradients of the barycentric coordinates, shape (nC, 3, 2)."""
    xy = m.points[m.cells]
    J = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=1)  # rows are edge vectors
    Jinv = np.linalg.inv(J)                                            # (nC, 2, 2)
    g12 = np.transpose(Jinv, (0, 2, 1))                                # grad of lambda_1, lambda_2
    return np.concatenate([-g12.sum(1, keepdims=True), g12], axis=1)


def recovery_operator(m: Mesh) -> sp.csr_matrix:
    """Lumped-mass recovery of the broken P1 gradient, shape (2 nV, nV).

    Row ``2a + i`` gives component ``i`` of the recovered gradient at vertex
    ``a`` as a combination of nodal values; rows of boundary vertices are zero.
    """
    nV = m.n_vertices
    dl = _p1_gradients(m)
    patch_area = np.bincount(m.cells.ravel(), weights=np.repeat(m.areas, 3), minlength=nV)
    rows, cols, vals = [], [], []
    for la in range(3):
        a = m.cells[:, la]
        scale = np.where(m.boundary_vertices[a], 0.0, m.areas / patch_area[a])
        for lb in range(3):
            b = m.cells[:, lb]
            for i in range(2):
                rows.append(2 * a + i)
                cols.append(b)
                vals.append(scale * dl[:, lb, i])
    Q = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 * nV, nV)).tocsr()
    Q.eliminate_zeros()
    return Q


def build_gr(m: Mesh, stabilisation=(1.0, 1.0), gradient: str = "recovered",
             rule: QuadratureRule | None = None) -> HessianDiscretisation:
    """Gradient-recovery discretisation on continuous P1 with zero boundary values.

    Pi u = u, grad_D u = Q grad u (``gradient="recovered"``) and
    H_D u = grad(Q grad u) + S (x) (Q grad u - grad u), with ``S`` the constant
    stabilisation vector. ``gradient="broken"`` uses grad_D u = grad u instead.
    """
    if m.kind != "triangle":
        raise ValueError("GR method requires a triangle mesh")
    if gradient not in ("recovered", "broken"):
        raise ValueError(f"unknown GR gradient reconstruction {gradient!r}")
    rule, qpts, qw = _quadrature(m, rule)
    nC, nq = qpts.shape[:2]
    vnum = _number(~m.boundary_vertices)
    n = int((~m.boundary_vertices).sum())
    Q = recovery_operator(m)[:, m.interior_vertices].tocsr()  # (2nV, n)

    # local dof sets: cell vertices plus everything feeding their recovered gradients
    indptr, indices = Q.indptr, Q.indices
    sets = []
    for c in range(nC):
        parts = [vnum[m.cells[c]][vnum[m.cells[c]] >= 0]]
        for a in m.cells[c]:
            parts.append(indices[indptr[2 * a]:indptr[2 * a + 2]])
        sets.append(np.unique(np.concatenate(parts)))
    nloc = max((len(s) for s in sets), default=1) or 1
    cell_dofs = -np.ones((nC, nloc), dtype=np.int64)
    for c, s in enumerate(sets):
        cell_dofs[c, :len(s)] = s

    # barycentric coordinates of the quadrature points
    lam_ref = np.column_stack([1.0 - rule.points.sum(1), rule.points])  # (nq, 3)
    dl = _p1_gradients(m)                                                # (nC, 3, 2)
    valid = cell_dofs >= 0
    safe = np.where(valid, cell_dofs, 0)

    # P1 part: which local dof is which cell vertex
    vert_dof = vnum[m.cells]                                             # (nC, 3)
    match = (safe[:, :, None] == vert_dof[:, None, :]) & valid[:, :, None] & (vert_dof[:, None, :] >= 0)
    P = match.astype(float)                                              # (nC, nloc, 3)
    pi = np.einsum("cjv,qv->cjq", P, lam_ref)
    gradu = np.einsum("cjv,cvk->cjk", P, dl)                             # broken gradient per dof

    # recovered nodal gradients R[c, j, v, i] = Q[2*cells[c,v]+i, dof_j]
    coo = Q.tocoo()
    keys = coo.row.astype(np.int64) * max(n, 1) + coo.col
    order = np.argsort(keys)
    keys, qvals = keys[order], coo.data[order]
    R = np.zeros((nC, nloc, 3, 2))
    for v in range(3):
        for i in range(2):
            want = (2 * m.cells[:, v] + i)[:, None] * max(n, 1) + safe
            pos = np.clip(np.searchsorted(keys, want), 0, max(len(keys) - 1, 0))
            hit = valid & (keys[pos] == want) if len(keys) else np.zeros_like(valid)
            R[:, :, v, i] = np.where(hit, qvals[pos] if len(keys) else 0.0, 0.0)
    rec = np.einsum("cjvi,qv->cjqi", R, lam_ref)                         # Q grad u at points
    drec = np.einsum("cjvi,cvl->cjil", R, dl)                            # d_l (Q grad u)_i
    S = np.asarray(stabilisation, dtype=float)
    defect = rec - gradu[:, :, None, :]
    hess = drec[:, :, None, :, :] + S[None, None, None, :, None] * defect[:, :, :, None, :]
    grad = rec if gradient == "recovered" else np.broadcast_to(gradu[:, :, None, :], rec.shape).copy()

    kind = ["vertex-value"] * n
    dm = DofMap(n, cell_dofs, np.asarray(kind), m.interior_vertices)
    hd = HessianDiscretisation("gr", m, dm, rule, qpts, qw, pi, grad, hess,
                               gr_aux=Q, stabilisation=tuple(S))
    hd._cache["gr_gradient"] = gradient
    return hd


def build_discretisation(method: str, m: Mesh, **kw) -> HessianDiscretisation:
    if method == "morley":
        return build_morley(m, **kw)
    if method == "adini":
        return build_adini(m, **kw)
    if method == "gr":
        return build_gr(m, **kw)
    raise ValueError(f"unknown method {method!r}")


def mesh_kind_for(method: str) -> str:
    return "rectangle" if method == "adini" else "triangle"


def interpolate_dofs(hd: HessianDiscretisation, phi) -> np.ndarray:
    """Canonical interpolant of ``phi`` (needs ``value`` and ``gradient``)."""
    m = hd.mesh
    out = np.zeros(hd.n_dofs)
    kinds = hd.dof_map.dof_kind
    ent = hd.dof_map.dof_entity
    for kind in np.unique(kinds):
        sel = kinds == kind
        if kind == "edge-normal-derivative":
            e = ent[sel]
            g = np.asarray(phi.gradient(m.edge_midpoints[e, 0], m.edge_midpoints[e, 1]))
            out[sel] = (g * m.edge_normals[e]).sum(-1)
            continue
        xy = m.points[ent[sel]]
        if kind == "vertex-value":
            out[sel] = phi.value(xy[:, 0], xy[:, 1])
        else:
            g = np.asarray(phi.gradient(xy[:, 0], xy[:, 1]))
            out[sel] = g[:, 0] if kind == "vertex-dx" else g[:, 1]
    return out


def _coefficients(hd: HessianDiscretisation, dofs: np.ndarray) -> np.ndarray:
    dofs = np.asarray(dofs, dtype=float)
    if dofs.shape[-1] != hd.n_dofs:
        raise ValueError(f"dof vector has length {dofs.shape[-1]}, expected {hd.n_dofs}")
    ext = np.concatenate([dofs, np.zeros(dofs.shape[:-1] + (1,))], axis=-1)
    return ext[..., hd.cell_dofs]  # -1 maps onto the trailing zero


def reconstruct(hd: HessianDiscretisation, dofs: np.ndarray):
    """(Pi, grad_D, H_D) of ``dofs`` at all quadrature points.

    Shapes (nC, nq), (nC, nq, 2), (nC, nq, 2, 2).
    """
    c = _coefficients(hd, dofs)
    return (np.einsum("ci,ciq->cq", c, hd.pi),
            np.einsum("ci,ciqk->cqk", c, hd.grad),
            np.einsum("ci,ciqkl->cqkl", c, hd.hess))


def evaluate(hd: HessianDiscretisation, dofs: np.ndarray, cell: int, q: int):
    """(value, gradient, Hessian) of ``dofs`` at quadrature point ``q`` of ``cell``."""
    nC, _, nq = hd.pi.shape
    if not (0 <= cell < nC and 0 <= q < nq):
        raise IndexError(f"cell {cell} / point {q} out of range ({nC} cells, {nq} points)")
    dofs = np.asarray(dofs, dtype=float)
    idx = hd.cell_dofs[cell]
    coef = np.where(idx >= 0, dofs[np.maximum(idx, 0)] if hd.n_dofs else 0.0, 0.0)
    t = hd.table(cell)
    return (float(coef @ t.pi[:, q]), coef @ t.grad[:, q], np.einsum("i,ikl->kl", coef, t.hess[:, q]))
