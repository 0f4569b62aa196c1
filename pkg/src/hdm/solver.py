"""Linear solves and the Newton iteration for the Hessian scheme."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Assembler, BlockVector, SparseSystem

log = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, pivot: int, msg: str = ""):
        self.pivot = pivot
        super().__init__(f"matrix is singular (zero pivot at index {pivot}){': ' + msg if msg else ''}")


@dataclass(frozen=True)
class NewtonConfig:
    tol_increment: float = 1e-9
    max_iter: int = 20
    linear_solver: str = "direct"

    def __post_init__(self):
        if not self.tol_increment > 0:
            raise ValueError("tol_increment must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class NewtonReport:
    iterations: int = 0
    increment_history: list = field(default_factory=list)
    converged: bool = False
    residual_norm: float = float("nan")


def _zero_pivot(A: sp.spmatrix) -> int:
    """Locate the first vanishing pivot (used only to report a singular factorization)."""
    A = sp.csr_matrix(A)
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    if empty.size:
        return int(empty[0])
    if A.shape[0] <= 4000:
        _, _, U = sla.lu(A.toarray())
        d = np.abs(np.diag(U))
        small = np.flatnonzero(d <= 1e-14 * max(d.max(), 1.0))
        if small.size:
            return int(small[0])
    return -1


def _residual_ok(A, x, b) -> bool:
    r = np.abs(A @ x - b).max(initial=0.0)
    scale = spla.norm(A, np.inf) * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
    return r <= RESIDUAL_RTOL * scale


def solve_linear(matrix, rhs=None, method: str = "direct") -> np.ndarray:
    """Solve ``matrix x = rhs``; accepts a :class:`SparseSystem` as first argument.

    ``direct`` uses sparse LU with partial pivoting (SuperLU); ``iterative``
    uses restarted GMRES preconditioned by an incomplete LU factorization.
    """
    if isinstance(matrix, SparseSystem):
        matrix, rhs = matrix.matrix, matrix.rhs
    A = sp.csc_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible system: matrix {A.shape}, rhs {b.shape}")
    if A.shape[0] == 0:
        return np.zeros(0)
    if method == "direct":
        try:
            lu = spla.splu(A, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise SingularMatrixError(_zero_pivot(A), str(exc)) from None
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError(_zero_pivot(A), "non-finite solution")
        if not _residual_ok(A, x, b):
            # one step of iterative refinement
            x = x + lu.solve(b - A @ x)
        return x
    if method == "iterative":
        try:
            ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        except RuntimeError as exc:
            raise SingularMatrixError(_zero_pivot(A), str(exc)) from None
        M = spla.LinearOperator(A.shape, ilu.solve)
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        x = np.zeros_like(b)
        for _ in range(5):
            # GMRES on the correction equation; stops once the stated residual bound holds
            r = b - A @ x
            dx, _ = spla.gmres(A, r, M=M, rtol=1e-12, atol=0.0, restart=100, maxiter=10)
            x = x + dx
            if _residual_ok(A, x, b):
                break
        return x
    raise ValueError(f"unknown linear solver {method!r}")


def d_norm(G: sp.spmatrix, v: np.ndarray) -> float:
    """||v||_D from the H_D Gram matrix."""
    return float(np.sqrt(max(v @ (G @ v), 0.0)))


def newton_solve(hd, problem, exact=None, cfg: NewtonConfig | None = None, *,
                 load: np.ndarray | None = None, assembler: Assembler | None = None,
                 threads: int = 1):
    """Newton iteration started from the solution of the biharmonic part.

    Each step solves
    A(H Psi^j, H .) + B(H Psi^{j-1}, grad Psi^j, grad .) + B(H Psi^j, grad Psi^{j-1}, grad .)
        = L(.) + B(H Psi^{j-1}, grad Psi^{j-1}, grad .)
    and stops once ||Psi^j - Psi^{j-1}||_D <= tol. Non-convergence is reported,
    not raised.
    """
    cfg = cfg or NewtonConfig()
    asm = assembler or Assembler(hd, problem, threads)
    if load is None:
        load = asm.load_vector(exact)
    G = asm.hessian_gram()
    report = NewtonReport()
    psi = solve_linear(asm.bilinear(), load, cfg.linear_solver) if load.size else np.zeros(0)
    for _ in range(cfg.max_iter):
        J = asm.jacobian(psi)
        rhs = load + asm.trilinear_vector(psi)
        new = solve_linear(J, rhs, cfg.linear_solver) if rhs.size else psi
        inc = d_norm(G, new - psi)
        psi = new
        report.iterations += 1
        report.increment_history.append(inc)
        log.debug("newton step %d: increment %.3e", report.iterations, inc)
        if inc <= cfg.tol_increment:
            report.converged = True
            break
    res = asm.residual(psi, load)
    report.residual_norm = float(np.abs(res).max(initial=0.0))
    return BlockVector(psi, problem.k), report
