"""Error norms, observed orders and empirical HDM property measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy import optimize
import sympy

from .assembly import Assembler
from .discretisation import HessianDiscretisation, interpolate_dofs, reconstruct
from .problems import SymbolicField, ns_problem
from .solver import SingularMatrixError


@dataclass
class ComponentErrors:
    rel_l2: float
    rel_h1: float
    rel_w14: float
    rel_h2: float


@dataclass
class ErrorBundle:
    components: list = field(default_factory=list)

    def __getitem__(self, c) -> ComponentErrors:
        return self.components[c]

    def __len__(self):
        return len(self.components)


def _norms(w, P, G, H):
    l2 = np.sqrt(np.sum(w * P ** 2))
    h1 = np.sqrt(np.sum(w * np.sum(G ** 2, -1)))
    w14 = np.sum(w * np.sum(G ** 2, -1) ** 2) ** 0.25
    h2 = np.sqrt(np.sum(w * np.sum(H ** 2, (-2, -1))))
    return l2, h1, w14, h2


def compute_errors(hd: HessianDiscretisation, problem, exact, psi) -> ErrorBundle:
    """Relative errors of Pi, grad_D and H_D against the exact solution.

    The W^{1,4} error uses the Euclidean norm of the gradient error pointwise.
    """
    k = len(exact.components)
    psi = np.asarray(psi, dtype=float).reshape(k, hd.n_dofs)
    x, y = hd.qpoints[..., 0], hd.qpoints[..., 1]
    w = hd.qweights
    out = ErrorBundle()
    for c, u in enumerate(exact.components):
        P, G, H = reconstruct(hd, psi[c])
        ue, ge, he = u.value(x, y), u.gradient(x, y), u.hessian(x, y)
        num = _norms(w, P - ue, G - ge, H - he)
        den = _norms(w, ue, ge, he)
        if min(den) == 0:
            raise ZeroDivisionError("exact solution has a vanishing norm")
        out.components.append(ComponentErrors(*(float(a / b) for a, b in zip(num, den))))
    return out


def observed_order(errors, ratio: float = 2.0) -> list:
    """Orders log_ratio(e_{l-1} / e_l); ``None`` where an error vanishes."""
    orders = []
    for prev, cur in zip(errors[:-1], errors[1:]):
        if prev is None or cur is None or prev <= 0 or cur <= 0:
            orders.append(None)
        else:
            orders.append(math.log(prev / cur) / math.log(ratio))
    return orders


# -- smooth test functions and fields ----------------------------------------------

_X, _Y = sympy.symbols("x y", real=True)


def _bubble(domain: str):
    # vanishes with its gradient on the whole boundary of either domain
    if domain == "square":
        return _X ** 2 * _Y ** 2 * (1 - _X) ** 2 * (1 - _Y) ** 2
    return _X ** 2 * _Y ** 2 * (_X ** 2 - 1) ** 2 * (_Y ** 2 - 1) ** 2


def smooth_functions(domain: str = "square") -> dict:
    """Five fixed smooth functions in H^2_0 of ``domain`` (id -> SymbolicField)."""
    b = _bubble(domain)
    s = sympy.sin
    exprs = {
        "sin2": s(sympy.pi * _X) ** 2 * s(sympy.pi * _Y) ** 2,
        "bubble": b,
        "bubble_exp": b * sympy.exp(_X - _Y),
        "sin2_aniso": s(sympy.pi * _X) ** 2 * s(2 * sympy.pi * _Y) ** 2,
        "bubble_poly": b * (1 + _X ** 2 + 2 * _Y),
    }
    return {k: SymbolicField(e) for k, e in exprs.items()}


class TensorField:
    """Smooth 2x2 tensor field xi with div xi and H:xi = sum_ij d_i d_j xi_ij.

    ``(div xi)_i = sum_j d_j xi_ij``.
    """

    def __init__(self, entries):
        M = sympy.Matrix(entries)
        args = (_X, _Y)
        self.expr = M
        div = [sum(sympy.diff(M[i, j], (_X, _Y)[j]) for j in range(2)) for i in range(2)]
        hx = sum(sympy.diff(M[i, j], (_X, _Y)[i], (_X, _Y)[j]) for i in range(2) for j in range(2))
        grad = [[sympy.diff(M[i, j], v) for v in args] for i in range(2) for j in range(2)]
        self._f = sympy.lambdify(args, list(M), modules="numpy")
        self._div = sympy.lambdify(args, div, modules="numpy")
        self._hx = sympy.lambdify(args, hx, modules="numpy")
        self._grad = sympy.lambdify(args, sum(grad, []), modules="numpy")
        self.divergence_field = VectorField(div)

    @staticmethod
    def _stack(vals, x):
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in vals], axis=-1)

    def value(self, x, y):
        return self._stack(self._f(x, y), x).reshape(x.shape + (2, 2))

    def div(self, x, y):
        return self._stack(self._div(x, y), x)

    def hess_contract(self, x, y):
        return np.broadcast_to(np.asarray(self._hx(x, y), dtype=float), x.shape)

    def gradient(self, x, y):
        return self._stack(self._grad(x, y), x)


class VectorField:
    """Smooth vector field phi with div phi."""

    def __init__(self, entries):
        args = (_X, _Y)
        self.expr = list(entries)
        self._f = sympy.lambdify(args, self.expr, modules="numpy")
        self._div = sympy.lambdify(args, sympy.diff(self.expr[0], _X) + sympy.diff(self.expr[1], _Y),
                                   modules="numpy")

    def value(self, x, y):
        return TensorField._stack(self._f(x, y), x)

    def div(self, x, y):
        return np.broadcast_to(np.asarray(self._div(x, y), dtype=float), x.shape)


def smooth_tensor_fields() -> dict:
    """Five fixed smooth tensor fields (id -> TensorField)."""
    x, y, pi = _X, _Y, sympy.pi
    return {
        "quadratic": TensorField([[x ** 2, x * y], [x * y, y ** 2]]),
        "mixed": TensorField([[sympy.sin(pi * x) * sympy.cos(pi * y), x * y ** 2],
                              [sympy.exp(x), sympy.cos(pi * y)]]),
        "isotropic": TensorField([[x ** 3 + y, 0], [0, x ** 3 + y]]),
        "cubic": TensorField([[y ** 3, x ** 2 * y], [x * y ** 2, x ** 3]]),
        "trig": TensorField([[sympy.cos(x + y), sympy.sin(x - y)], [sympy.sin(x * y), sympy.cos(x)]]),
    }


def smooth_vector_fields() -> dict:
    x, y, pi = _X, _Y, sympy.pi
    return {
        "poly": VectorField([x ** 2 * y, x * sympy.sin(pi * y)]),
        "exp": VectorField([sympy.exp(x) * y, sympy.cos(pi * x)]),
    }


# -- property measures ------------------------------------------------------------

@dataclass
class PropertyMeasures:
    c_d: float
    c_d_l2: float
    c_d_l4: float
    s_d: dict
    w_d: dict
    w_hat_d: dict
    w_tilde_d: dict
    alpha_d: float
    gamma_d: float
    c_d_l4_is_lower_bound: bool = True
    s_d_is_upper_bound: bool = True


class _Context:
    """Scalar assembler plus the factorized H_D Gram matrix of one discretisation."""

    def __init__(self, hd: HessianDiscretisation):
        self.hd = hd
        self.asm = Assembler(hd, ns_problem())
        self.G = self.asm.hessian_gram().tocsc()
        self._lu = None
        self.x, self.y = hd.qpoints[..., 0], hd.qpoints[..., 1]
        self.w = hd.qweights

    def solve(self, r):
        if self._lu is None:
            if self.G.shape[0] == 0:
                self._lu = lambda v: np.zeros(0)
            else:
                try:
                    self._lu = spla.splu(self.G).solve
                except RuntimeError as exc:
                    raise SingularMatrixError(-1, "H_D Gram matrix: " + str(exc)) from None
        return self._lu(r)

    def dual_norm(self, r) -> float:
        """sup over ||w||_D = 1 of |r . w|, i.e. sqrt(r^T G^{-1} r)."""
        if r.size == 0:
            return 0.0
        return float(np.sqrt(max(r @ self.solve(r), 0.0)))


def _ctx(hd) -> _Context:
    c = hd._cache.get("analysis_ctx")
    if c is None:
        c = hd._cache["analysis_ctx"] = _Context(hd)
    return c


def compute_cd(hd: HessianDiscretisation, n_starts: int = 20, max_iter: int = 200,
               seed: int = 0) -> tuple:
    """Coercivity constant as ``(c_d, l2_branch, l4_branch)``.

    The L2 branch is the square root of the largest eigenvalue of the pencil
    (Pi-Gram, H-Gram). The W^{1,4} branch is a multistart projected gradient
    ascent and therefore only a lower bound of the true maximum.
    """
    ctx = _ctx(hd)
    n = hd.n_dofs
    if n == 0:
        return 0.0, 0.0, 0.0
    M = ctx.asm.value_gram()
    try:
        if n <= 1500:
            lam, vec = sla.eigh(M.toarray(), ctx.G.toarray())
        else:
            lam, vec = spla.eigsh(M.tocsc(), k=1, M=ctx.G, which="LA")
    except (np.linalg.LinAlgError, spla.ArpackError) as exc:
        raise SingularMatrixError(-1, "H_D Gram matrix is not positive definite: " + str(exc)) from None
    l2, v0 = float(np.sqrt(max(lam[-1], 0.0))), vec[:, -1]

    GB, w = ctx.asm.GB[..., :], ctx.w
    cell_dofs = ctx.asm.block_dofs

    def grads(v):
        vl = np.where(cell_dofs >= 0, v[np.maximum(cell_dofs, 0)], 0.0)
        return np.einsum("ci,ciqm->cqm", vl, GB)

    def ratio(v):
        g = grads(v)
        num = np.sum(w * np.sum(g ** 2, -1) ** 2) ** 0.25
        return num / np.sqrt(v @ (ctx.G @ v))

    def ascent(v):
        v = v / np.sqrt(v @ (ctx.G @ v))
        best, step = ratio(v), 1.0
        for _ in range(max_iter):
            g = grads(v)
            # derivative of int |grad v|^4, then its Riesz representative in the D-inner product
            d = ctx.asm.functional(fG=4 * np.sum(g ** 2, -1)[..., None] * g)
            d = ctx.solve(d)
            d -= (v @ (ctx.G @ d)) * v
            dn = np.sqrt(max(d @ (ctx.G @ d), 0.0))
            if dn < 1e-14:
                break
            while step > 1e-10:
                cand = v + step * d / dn
                cand /= np.sqrt(cand @ (ctx.G @ cand))
                val = ratio(cand)
                if val > best:
                    v, best = cand, val
                    step *= 2
                    break
                step /= 2
            else:
                break
        return best

    rng = np.random.default_rng(seed)
    starts = [v0] + [rng.standard_normal(n) for _ in range(n_starts - 1)]
    l4 = max(ascent(s) for s in starts)
    return max(l2, l4), l2, float(l4)


def _sd_terms(ctx, phi):
    x, y = ctx.x, ctx.y
    return phi.value(x, y), phi.gradient(x, y), phi.hessian(x, y)


def _sd_objective(hd, target, dofs, with_grad: bool = False):
    """Objective of S_D (and its gradient in the dofs when ``with_grad``)."""
    ctx = _ctx(hd)
    P, G, H = reconstruct(hd, dofs)
    w = ctx.w
    eP, eG, eH = P - target[0], G - target[1], H - target[2]
    n0 = np.sqrt(np.sum(w * eP ** 2))
    g2 = np.sum(eG ** 2, -1)
    n1 = np.sum(w * g2 ** 2) ** 0.25
    n2 = np.sqrt(np.sum(w * np.sum(eH ** 2, (-2, -1))))
    val = float(n0 + n1 + n2)
    if not with_grad:
        return val
    tiny = 1e-300
    grad = ctx.asm.functional(fP=eP / max(n0, tiny), fG=g2[..., None] * eG / max(n1 ** 3, tiny),
                              fH=eH / max(n2, tiny))
    return val, grad


SD_POLISH_MAX_DOFS = 300


def compute_sd(hd: HessianDiscretisation, phi, polish: bool | None = None) -> float:
    """Upper bound of S_D(phi).

    Candidates are the canonical interpolant and the H_D-Gram best approximation
    of the Hessian of ``phi``; the better one is then improved by L-BFGS on the
    (convex) objective when ``polish`` is set (default: only for spaces of at
    most ``SD_POLISH_MAX_DOFS`` unknowns). Every value reported is attained
    by some discrete function, so the result never undercuts the true minimum.
    """
    ctx = _ctx(hd)
    target = _sd_terms(ctx, phi)
    if hd.n_dofs == 0:
        return _sd_objective(hd, target, np.zeros(0))
    cands = [interpolate_dofs(hd, phi), ctx.solve(ctx.asm.functional(fH=target[2]))]
    vals = [_sd_objective(hd, target, c) for c in cands]
    best = int(np.argmin(vals))
    w0, v0 = cands[best], vals[best]
    if polish is None:
        polish = hd.n_dofs <= SD_POLISH_MAX_DOFS
    if polish:
        res = optimize.minimize(lambda v: _sd_objective(hd, target, v, True), w0, jac=True,
                                method="L-BFGS-B",
                                options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
        if res.fun < v0:
            v0 = float(_sd_objective(hd, target, res.x))
    return v0


def _wd_functional(ctx, xi):
    return ctx.asm.functional(fP=xi.hess_contract(ctx.x, ctx.y), fH=-xi.value(ctx.x, ctx.y))


def _wd_hat_functional(ctx, phi):
    return ctx.asm.functional(fP=phi.div(ctx.x, ctx.y), fG=phi.value(ctx.x, ctx.y))


def _wd_tilde_functional(ctx, xi):
    return ctx.asm.functional(fG=xi.div(ctx.x, ctx.y), fH=xi.value(ctx.x, ctx.y))


def compute_wd(hd: HessianDiscretisation, xi) -> float:
    """Limit-conformity defect of the double integration by parts."""
    ctx = _ctx(hd)
    return ctx.dual_norm(_wd_functional(ctx, xi))


def compute_wd_hat(hd: HessianDiscretisation, phi) -> float:
    """Limit-conformity defect of the single integration by parts (function/gradient)."""
    ctx = _ctx(hd)
    return ctx.dual_norm(_wd_hat_functional(ctx, phi))


def compute_wd_tilde(hd: HessianDiscretisation, xi) -> float:
    """Limit-conformity defect between the reconstructed gradient and Hessian."""
    ctx = _ctx(hd)
    return ctx.dual_norm(_wd_tilde_functional(ctx, xi))


def _h3_norm(ctx, phi) -> float:
    tot = 0.0
    for order in range(4):
        d = phi.derivatives(ctx.x, ctx.y, order)
        tot += sum(np.sum(ctx.w * v ** 2) * math.comb(order, i) for (i, _), v in d.items())
    return math.sqrt(tot)


def _h1_norm_tensor(ctx, xi) -> float:
    v = xi.value(ctx.x, ctx.y)
    g = xi.gradient(ctx.x, ctx.y)
    return math.sqrt(np.sum(ctx.w * np.sum(v ** 2, (-2, -1))) + np.sum(ctx.w * np.sum(g ** 2, -1)))


def alpha_d(hd: HessianDiscretisation, functions: dict | None = None) -> float:
    """max S_D(phi) / ||phi||_3 over a fixed finite family of test functions."""
    ctx = _ctx(hd)
    functions = functions or smooth_functions(hd.mesh.domain)
    return max(compute_sd(hd, f) / _h3_norm(ctx, f) for f in functions.values())


def gamma_d(hd: HessianDiscretisation, fields: dict | None = None) -> float:
    """max W~_D(xi) / ||xi||_1 over a fixed finite family of tensor fields."""
    ctx = _ctx(hd)
    fields = fields or smooth_tensor_fields()
    return max(compute_wd_tilde(hd, xi) / _h1_norm_tensor(ctx, xi) for xi in fields.values())


def compute_properties(hd: HessianDiscretisation, seed: int = 0) -> PropertyMeasures:
    funcs = smooth_functions(hd.mesh.domain)
    fields = smooth_tensor_fields()
    vfields = smooth_vector_fields()
    c, c2, c4 = compute_cd(hd, seed=seed)
    s_d = {k: compute_sd(hd, f) for k, f in funcs.items()}
    w_d = {k: compute_wd(hd, xi) for k, xi in fields.items()}
    w_tilde = {k: compute_wd_tilde(hd, xi) for k, xi in fields.items()}
    w_hat = {k: compute_wd_hat(hd, phi) for k, phi in vfields.items()}
    w_hat.update({f"div_{k}": compute_wd_hat(hd, xi.divergence_field) for k, xi in fields.items()})
    ctx = _ctx(hd)
    alpha = max(s_d[k] / _h3_norm(ctx, f) for k, f in funcs.items())
    gamma = max(w_tilde[k] / _h1_norm_tensor(ctx, xi) for k, xi in fields.items())
    return PropertyMeasures(c, c2, c4, s_d, w_d, w_hat, w_tilde, alpha, gamma)


def newton_contraction(increments, floor: float = 0.0) -> list:
    """Ratios delta_j / delta_{j-1}^2 for increments still above ``floor``.

    Increments at or below the floor are dominated by round-off and carry no
    information about the contraction rate, so they are skipped.
    """
    out = []
    for prev, cur in zip(increments[:-1], increments[1:]):
        if cur > floor and prev > 0:
            out.append(cur / prev ** 2)
    return out
