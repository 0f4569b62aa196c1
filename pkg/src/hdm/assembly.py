"""Global assembly of the Hessian scheme.

Unknowns are block vectors ``Psi = (psi_1, ..., psi_k)`` stored flat with
component ``c`` occupying ``[c * n, (c + 1) * n)``. The residual is

    R(Psi) . Phi = A(H Psi, H Phi) + B(H Psi, grad Psi, grad Phi) - L(Pi Phi)

and the Jacobian is its exact derivative

    J(Psi)[Theta, Phi] = A(H Theta, H Phi) + B(H Psi, grad Theta, grad Phi)
                         + B(H Theta, grad Psi, grad Phi).

Pointwise kernels are turned into coefficient tensors once per problem (they
are multilinear), so the cell loops reduce to ``einsum`` contractions.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discretisation import HessianDiscretisation, reconstruct
from .problems import ExactSolution, ProblemDefinition

CHUNK = 512  # cells per work item; fixed so results do not depend on thread count


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric_hint: bool = False


class BlockVector(np.ndarray):
    """Flat array view with per-component access, ``k`` blocks of ``n`` entries."""

    def __new__(cls, data, k: int):
        obj = np.asarray(data, dtype=float).view(cls)
        if obj.ndim != 1 or obj.size % k:
            raise ValueError("block vector length must be a multiple of k")
        obj.k = k
        return obj

    def __array_finalize__(self, obj):
        self.k = getattr(obj, "k", 1)

    @property
    def n(self) -> int:
        return self.size // self.k

    def component(self, c: int) -> np.ndarray:
        return np.asarray(self)[c * self.n:(c + 1) * self.n]


class Assembler:
    """Caches block tables and the sparsity pattern of one (discretisation, problem) pair."""

    def __init__(self, hd: HessianDiscretisation, problem: ProblemDefinition, threads: int = 1):
        self.hd = hd
        self.problem = problem
        self.threads = max(1, int(threads))
        k, n = problem.k, hd.n_dofs
        self.k, self.n = k, n
        nC, nloc, nq = hd.pi.shape

        # block dofs: local block index = c * nloc + i
        cd = hd.cell_dofs
        self.block_dofs = np.concatenate([np.where(cd >= 0, cd + c * n, -1) for c in range(k)], axis=1)
        nB = k * nloc
        self.PB = np.zeros((nC, nB, nq, k))
        self.GB = np.zeros((nC, nB, nq, k, 2))
        self.HB = np.zeros((nC, nB, nq, k, 2, 2))
        for c in range(k):
            sl = slice(c * nloc, (c + 1) * nloc)
            self.PB[:, sl, :, c] = hd.pi
            self.GB[:, sl, :, c] = hd.grad
            self.HB[:, sl, :, c] = hd.hess
        self.GB = self.GB.reshape(nC, nB, nq, 2 * k)
        self.HB = self.HB.reshape(nC, nB, nq, 4 * k)
        self.w = hd.qweights
        self._pattern()
        self._A = None

    # -- sparsity pattern --------------------------------------------------------
    def _pattern(self):
        bd = self.block_dofs
        N = self.k * self.n
        rows = np.broadcast_to(bd[:, :, None], bd.shape + bd.shape[1:]).ravel()
        cols = np.broadcast_to(bd[:, None, :], bd.shape + bd.shape[1:]).ravel()
        self._valid = (rows >= 0) & (cols >= 0)
        keys = rows[self._valid].astype(np.int64) * max(N, 1) + cols[self._valid]
        uniq, self._inv = np.unique(keys, return_inverse=True)
        self._inv = self._inv.ravel()
        r, c = np.divmod(uniq, max(N, 1))
        self._indptr = np.searchsorted(r, np.arange(N + 1)).astype(np.int64)
        self._indices = c.astype(np.int64)
        self._nnz = uniq.size
        vb = bd.ravel()
        self._vvalid = vb >= 0
        self._vidx = vb[self._vvalid]

    def _scatter_matrix(self, local: np.ndarray) -> sp.csr_matrix:
        N = self.k * self.n
        data = np.bincount(self._inv, weights=local.ravel()[self._valid], minlength=self._nnz)
        data[np.abs(data) < 1e-300] = 0.0
        M = sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(N, N))
        M.eliminate_zeros()
        return M

    def _scatter_vector(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self._vidx, weights=local.ravel()[self._vvalid], minlength=self.k * self.n)

    def _map_chunks(self, fn):
        nC = self.hd.pi.shape[0]
        chunks = [slice(s, min(s + CHUNK, nC)) for s in range(0, nC, CHUNK)]
        if self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                parts = list(ex.map(fn, chunks))
        else:
            parts = [fn(s) for s in chunks]
        if not parts:
            return np.zeros((0,))
        return np.concatenate(parts, axis=0)

    # -- fields -----------------------------------------------------------------
    def fields(self, psi):
        """Stacked (Pi, grad_D, H_D) of all components at quadrature points."""
        psi = np.asarray(psi, dtype=float).reshape(self.k, self.n)
        parts = [reconstruct(self.hd, psi[c]) for c in range(self.k)]
        P = np.stack([p[0] for p in parts], axis=-1)
        G = np.stack([p[1] for p in parts], axis=-2).reshape(P.shape[:2] + (2 * self.k,))
        H = np.stack([p[2] for p in parts], axis=-3).reshape(P.shape[:2] + (4 * self.k,))
        return P, G, H

    # -- matrices ---------------------------------------------------------------
    def bilinear(self) -> sp.csr_matrix:
        """A-part matrix (Psi-independent, cached)."""
        if self._A is None:
            a = self.problem.a_coef

            def local(s):
                T = np.einsum("cjqm,mn->cjqn", self.HB[s], a)
                return np.einsum("cjqn,ciqn,cq->cij", T, self.HB[s], self.w[s], optimize=True)

            self._A = self._scatter_matrix(self._map_chunks(local))
        return self._A

    def jacobian(self, psi) -> sp.csr_matrix:
        _, G, H = self.fields(psi)
        b = self.problem.b_coef

        def local(s):
            K1 = np.einsum("cqm,mps->cqps", H[s], b)           # B(H psi, ., .)
            K2 = np.einsum("mps,cqp->cqms", b, G[s])           # B(., grad psi, .)
            w = self.w[s]
            J1 = np.einsum("cqps,cjqp,ciqs,cq->cij", K1, self.GB[s], self.GB[s], w, optimize=True)
            J2 = np.einsum("cqms,cjqm,ciqs,cq->cij", K2, self.HB[s], self.GB[s], w, optimize=True)
            return J1 + J2

        return self.bilinear() + self._scatter_matrix(self._map_chunks(local))

    def trilinear_vector(self, psi, theta=None) -> np.ndarray:
        """Vector of B(H psi, grad theta, grad e_i) over all basis functions e_i."""
        _, G, H = self.fields(psi)
        Gt = G if theta is None else self.fields(theta)[1]
        b = self.problem.b_coef

        def local(s):
            K = np.einsum("cqm,mps,cqp->cqs", H[s], b, Gt[s], optimize=True)
            return np.einsum("cqs,ciqs,cq->ci", K, self.GB[s], self.w[s])

        return self._scatter_vector(self._map_chunks(local))

    def trilinear_form(self, psi, theta, phi) -> float:
        """Scalar B(H psi, grad theta, grad phi) by direct quadrature."""
        _, _, H = self.fields(psi)
        Gt = self.fields(theta)[1]
        Gp = self.fields(phi)[1]
        b = self.problem.b_coef
        return float(np.einsum("cqm,mps,cqp,cqs,cq->", H, b, Gt, Gp, self.w, optimize=True))

    def load_vector(self, exact: ExactSolution | None = None, f=None) -> np.ndarray:
        """Load L(Pi e_i), from the exact solution's right-hand sides or a callable ``f(x, y)``."""
        x, y = self.hd.qpoints[..., 0], self.hd.qpoints[..., 1]
        if exact is not None:
            vals = exact.load(x, y)
        elif f is not None:
            vals = np.asarray(f(x, y), dtype=float)
            vals = np.broadcast_to(vals[..., None] if vals.ndim == 2 else vals, x.shape + (self.k,))
        else:
            raise ValueError("need an exact solution or a load callable")
        dens = self.problem.load(vals)  # (nC, nq, k)

        def local(s):
            return np.einsum("cqk,cjqk,cq->cj", dens[s], self.PB[s], self.w[s])

        return self._scatter_vector(self._map_chunks(local))

    def functional(self, fP=None, fG=None, fH=None) -> np.ndarray:
        """Vector of int fP Pi e_i + fG . grad_D e_i + fH : H_D e_i (scalar problems only).

        ``fP`` has shape (nC, nq), ``fG`` (nC, nq, 2) and ``fH`` (nC, nq, 2, 2).
        """
        if self.k != 1:
            raise ValueError("functional() needs a single-component assembler")
        nC, nq = self.w.shape
        fP = np.zeros((nC, nq)) if fP is None else np.asarray(fP, dtype=float)
        fG = np.zeros((nC, nq, 2)) if fG is None else np.asarray(fG, dtype=float)
        fH = np.zeros((nC, nq, 4)) if fH is None else np.asarray(fH, dtype=float).reshape(nC, nq, 4)

        def local(s):
            v = np.einsum("cq,ciq->ci", fP[s] * self.w[s], self.PB[s][..., 0])
            v += np.einsum("cqm,ciqm->ci", fG[s] * self.w[s][..., None], self.GB[s])
            v += np.einsum("cqm,ciqm->ci", fH[s] * self.w[s][..., None], self.HB[s])
            return v

        return self._scatter_vector(self._map_chunks(local))

    def residual(self, psi, load: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        return self.bilinear() @ psi + self.trilinear_vector(psi) - load

    # -- Gram matrices ------------------------------------------------------------
    def _gram(self, X):
        def local(s):
            return np.einsum("cjqm,ciqm,cq->cij", X[s], X[s], self.w[s], optimize=True)
        return self._scatter_matrix(self._map_chunks(local))

    def hessian_gram(self) -> sp.csr_matrix:
        """Gram matrix of ||H_D .||^2 (component-wise, unweighted)."""
        return self._gram(self.HB)

    def value_gram(self) -> sp.csr_matrix:
        return self._gram(self.PB)

    def gradient_gram(self) -> sp.csr_matrix:
        return self._gram(self.GB)


def assemble_bilinear(hd, problem, threads=1) -> sp.csr_matrix:
    return Assembler(hd, problem, threads).bilinear()


def assemble_jacobian(hd, problem, psi, threads=1) -> SparseSystem:
    """Jacobian at ``psi`` with the load-free Newton right-hand side B(H psi, grad psi, grad .)."""
    asm = Assembler(hd, problem, threads)
    return SparseSystem(asm.jacobian(psi), asm.trilinear_vector(psi))


def assemble_residual(hd, problem, psi, load, threads=1) -> np.ndarray:
    return Assembler(hd, problem, threads).residual(psi, load)


def assemble_load(hd, problem, exact=None, f=None, threads=1) -> np.ndarray:
    return Assembler(hd, problem, threads).load_vector(exact, f)
