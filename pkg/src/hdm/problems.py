"""Navier-Stokes (stream function) and von Karman problems with manufactured solutions.

Kernels act pointwise on stacked component arrays:

* Hessian-like blocks ``L`` have shape (..., k, 2, 2),
* gradient-like blocks ``X``, ``T`` have shape (..., k, 2),

and broadcast over the leading axes. The semilinear form is

    A(H psi, H phi) + B(H psi, grad psi, grad phi) = L(phi).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Callable

import numpy as np
import sympy

LSHAPE_GAMMA = 0.5444837367
LSHAPE_OMEGA = 1.5 * np.pi


def cof(L: np.ndarray) -> np.ndarray:
    """Cofactor matrix of 2x2 blocks: [[a, b], [c, d]] -> [[d, -c], [-b, a]]."""
    out = np.empty_like(L)
    out[..., 0, 0] = L[..., 1, 1]
    out[..., 0, 1] = -L[..., 1, 0]
    out[..., 1, 0] = -L[..., 0, 1]
    out[..., 1, 1] = L[..., 0, 0]
    return out


def rot(T: np.ndarray) -> np.ndarray:
    """Rotation by pi/2: (t1, t2) -> (-t2, t1)."""
    return np.stack([-T[..., 1], T[..., 0]], axis=-1)


@dataclass(frozen=True)
class ProblemDefinition:
    """Forms of the semilinear problem.

    ``load_weights[c]`` is the factor with which the right-hand side of the
    c-th PDE enters the weak form (2 for the second von Karman equation,
    which is doubled in the vector formulation).
    """

    name: str
    k: int
    a_kernel: Callable
    b_kernel: Callable
    load_weights: tuple

    def load(self, f_values: np.ndarray) -> np.ndarray:
        """Weighted load density per component, input shape (..., k)."""
        return np.asarray(f_values) * np.asarray(self.load_weights)

    @cached_property
    def a_coef(self) -> np.ndarray:
        """Matrix of the bilinear kernel over flattened (k, 2, 2) blocks."""
        n = 4 * self.k
        E = np.eye(n).reshape(n, self.k, 2, 2)
        return np.asarray(self.a_kernel(E[:, None], E[None, :]), dtype=float)

    @cached_property
    def b_coef(self) -> np.ndarray:
        """Coefficient tensor of the trilinear kernel, shape (4k, 2k, 2k)."""
        n, g = 4 * self.k, 2 * self.k
        EL = np.eye(n).reshape(n, self.k, 2, 2)
        EG = np.eye(g).reshape(g, self.k, 2)
        return np.asarray(self.b_kernel(EL[:, None, None], EG[None, :, None], EG[None, None, :]),
                          dtype=float)


def _ns_a(L, G):
    return np.sum(L * G, axis=(-3, -2, -1))


def _ns_b(L, X, T):
    tr = L[..., 0, 0, 0] + L[..., 0, 1, 1]
    return tr * np.sum(X[..., 0, :] * rot(T[..., 0, :]), axis=-1)


def _vk_a(L, G):
    return np.sum(L[..., 0, :, :] * G[..., 0, :, :], axis=(-2, -1)) + \
        2.0 * np.sum(L[..., 1, :, :] * G[..., 1, :, :], axis=(-2, -1))


def _vk_b(L, X, T):
    c = cof(L[..., 0, :, :])
    ct1 = np.einsum("...ij,...j->...i", c, T[..., 0, :])
    cx1 = np.einsum("...ij,...j->...i", c, X[..., 0, :])
    return np.sum(ct1 * X[..., 1, :], axis=-1) - np.sum(cx1 * T[..., 1, :], axis=-1)


def ns_problem() -> ProblemDefinition:
    """Stream-function Navier-Stokes: A = xi:chi, B = tr(xi) phi . rot(theta)."""
    return ProblemDefinition("ns", 1, _ns_a, _ns_b, (1.0,))


def vk_problem() -> ProblemDefinition:
    """Von Karman plate in vector form, unknowns (u, v)."""
    return ProblemDefinition("vk", 2, _vk_a, _vk_b, (1.0, 2.0))


def get_problem(name: str) -> ProblemDefinition:
    if name == "ns":
        return ns_problem()
    if name == "vk":
        return vk_problem()
    raise ValueError(f"unknown problem {name!r}")


# -- exact solutions -----------------------------------------------------------

class ScalarField:
    """Smooth scalar function with derivative evaluators up to order four.

    Subclasses implement ``derivatives(x, y, order)`` returning a dict keyed
    by (i, j) = orders of differentiation in x and y.
    """

    def derivatives(self, x, y, order):  # pragma: no cover - interface
        raise NotImplementedError

    def value(self, x, y):
        return self.derivatives(x, y, 0)[(0, 0)]

    def gradient(self, x, y):
        d = self.derivatives(x, y, 1)
        return np.stack([d[(1, 0)], d[(0, 1)]], axis=-1)

    def hessian(self, x, y):
        d = self.derivatives(x, y, 2)
        return np.stack([np.stack([d[(2, 0)], d[(1, 1)]], -1),
                         np.stack([d[(1, 1)], d[(0, 2)]], -1)], -2)

    def third(self, x, y):
        """Third derivatives T[i, j, l] = d_i d_j d_l u."""
        d = self.derivatives(x, y, 3)
        x_ = np.asarray(x, dtype=float)
        T = np.empty(np.broadcast(x_, np.asarray(y)).shape + (2, 2, 2))
        for i in range(2):
            for j in range(2):
                for l in range(2):
                    nx = (i == 0) + (j == 0) + (l == 0)
                    T[..., i, j, l] = d[(nx, 3 - nx)]
        return T

    def bilaplacian(self, x, y):
        d = self.derivatives(x, y, 4)
        return d[(4, 0)] + 2 * d[(2, 2)] + d[(0, 4)]

    def laplacian_gradient(self, x, y):
        d = self.derivatives(x, y, 3)
        return np.stack([d[(3, 0)] + d[(1, 2)], d[(2, 1)] + d[(0, 3)]], axis=-1)


class SeparablePolynomial(ScalarField):
    """u(x, y) = s * p(x) p(y) with p(t) = t^2 (1 - t)^2."""

    def __init__(self, scale: float = 1.0):
        self.scale = scale

    @staticmethod
    def _p(t, n):
        if n == 0:
            return t ** 2 - 2 * t ** 3 + t ** 4
        if n == 1:
            return 2 * t - 6 * t ** 2 + 4 * t ** 3
        if n == 2:
            return 2 - 12 * t + 12 * t ** 2
        if n == 3:
            return -12 + 24 * t
        if n == 4:
            return 24.0 + 0 * t
        return 0.0 * t

    def derivatives(self, x, y, order):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        px = [self._p(x, n) for n in range(order + 1)]
        py = [self._p(y, n) for n in range(order + 1)]
        out = {}
        for i in range(order + 1):
            for j in range(order + 1 - i):
                out[(i, j)] = self.scale * px[i] * py[j]
        # callers index the exact order only; lower orders come along for free
        return out


class SymbolicField(ScalarField):
    """Scalar field given by a sympy expression in (x, y), derivatives by sympy.

    Expressions may also be given in polar form through ``polar=True``, in which
    case the expression uses symbols ``r`` and ``t`` (angle in [0, 2 pi)).
    """

    x, y = sympy.symbols("x y", real=True)
    r, t = sympy.symbols("r t", positive=True)

    def __init__(self, expr, polar: bool = False, max_order: int = 4):
        self.expr = expr
        self.polar = polar
        self.max_order = max_order
        self._funcs = {}

    def _derive(self, i, j):
        if self.polar:
            r, t = self.r, self.t
            dx = lambda f: sympy.cos(t) * sympy.diff(f, r) - sympy.sin(t) / r * sympy.diff(f, t)  # noqa: E731
            dy = lambda f: sympy.sin(t) * sympy.diff(f, r) + sympy.cos(t) / r * sympy.diff(f, t)  # noqa: E731
            key = (0, 0)
            cache = self._sym_cache()
            for _ in range(i):
                nk = (key[0] + 1, key[1])
                if nk not in cache:
                    cache[nk] = dx(cache[key])
                key = nk
            for _ in range(j):
                nk = (key[0], key[1] + 1)
                if nk not in cache:
                    cache[nk] = dy(cache[key])
                key = nk
            return cache[key], (r, t)
        e = sympy.diff(self.expr, self.x, i, self.y, j) if i + j else self.expr
        return e, (self.x, self.y)

    def _sym_cache(self):
        if not hasattr(self, "_scache"):
            self._scache = {(0, 0): self.expr}
        return self._scache

    def _func(self, i, j):
        if (i, j) not in self._funcs:
            e, args = self._derive(i, j)
            self._funcs[(i, j)] = sympy.lambdify(args, e, modules="numpy", cse=True)
        return self._funcs[(i, j)]

    def derivatives(self, x, y, order):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self.polar:
            a, b = np.hypot(x, y), np.mod(np.arctan2(y, x), 2 * np.pi)
        else:
            a, b = x, y
        out = {}
        for i in range(order + 1):
            j = order - i
            out[(i, j)] = np.broadcast_to(np.asarray(self._func(i, j)(a, b), dtype=float), x.shape)
        return out


@dataclass
class ExactSolution:
    """Manufactured solution: one field per component plus the PDE right-hand sides."""

    components: list
    load_fn: Callable
    domain: str

    def load(self, x, y) -> np.ndarray:
        """Right-hand sides of the PDEs, shape (..., k)."""
        return self.load_fn(x, y)


def _ns_load(u: ScalarField):
    def f(x, y):
        lg = u.laplacian_gradient(x, y)
        g = u.gradient(x, y)
        # d_x(-Lap u u_y) - d_y(-Lap u u_x) = -grad(Lap u) . (u_y, -u_x)
        return (u.bilaplacian(x, y) - lg[..., 0] * g[..., 1] + lg[..., 1] * g[..., 0])[..., None]
    return f


def _bracket(a: ScalarField, b: ScalarField, x, y):
    Ha, Hb = a.hessian(x, y), b.hessian(x, y)
    return np.sum(cof(Ha) * Hb, axis=(-2, -1))


def _vk_load(u: ScalarField, v: ScalarField):
    def f(x, y):
        fu = u.bilaplacian(x, y) - _bracket(u, v, x, y)
        gv = v.bilaplacian(x, y) + 0.5 * _bracket(u, u, x, y)
        return np.stack([fu, gv], axis=-1)
    return f


def square_exact(problem: str) -> ExactSolution:
    """u (= v for von Karman) = x^2 y^2 (1-x)^2 (1-y)^2 on the unit square."""
    u = SeparablePolynomial()
    if problem == "ns":
        return ExactSolution([u], _ns_load(u), "square")
    if problem == "vk":
        return ExactSolution([u, u], _vk_load(u, u), "square")
    raise ValueError(f"unknown problem {problem!r}")


class ProductField(ScalarField):
    """Product of two fields, derivatives by the Leibniz rule."""

    def __init__(self, first: ScalarField, second: ScalarField):
        self.first, self.second = first, second

    def derivatives(self, x, y, order):
        da = {}
        db = {}
        for n in range(order + 1):
            da.update({k: v for k, v in self.first.derivatives(x, y, n).items() if sum(k) == n})
            db.update({k: v for k, v in self.second.derivatives(x, y, n).items() if sum(k) == n})
        out = {}
        for i in range(order + 1):
            j = order - i
            acc = 0.0
            for a in range(i + 1):
                for b in range(j + 1):
                    acc = acc + comb(i, a) * comb(j, b) * da[(a, b)] * db[(i - a, j - b)]
            out[(i, j)] = acc
        return out


class CornerField(ProductField):
    """Corner-singular field on the L-shape; refuses evaluation at the corner."""

    def derivatives(self, x, y, order):
        x_, y_ = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if np.any(np.hypot(x_, y_) == 0.0):
            raise ValueError("the L-shape solution is singular at the re-entrant corner (0, 0)")
        return super().derivatives(x, y, order)


def corner_singularity(gamma: float = LSHAPE_GAMMA, omega: float = LSHAPE_OMEGA):
    """r^(1 + gamma) g(theta), in polar symbols of :class:`SymbolicField`."""
    r, t = SymbolicField.r, SymbolicField.t
    g_, w = sympy.Float(gamma), sympy.Float(omega)
    gfun = ((sympy.sin((g_ - 1) * w) / (g_ - 1) - sympy.sin((g_ + 1) * w) / (g_ + 1))
            * (sympy.cos((g_ - 1) * t) - sympy.cos((g_ + 1) * t))
            - (sympy.sin((g_ - 1) * t) / (g_ - 1) - sympy.sin((g_ + 1) * t) / (g_ + 1))
            * (sympy.cos((g_ - 1) * w) - sympy.cos((g_ + 1) * w)))
    return r ** (1 + g_) * gfun


def lshape_cutoff():
    x, y = SymbolicField.x, SymbolicField.y
    return (x ** 2 - 1) ** 2 * (y ** 2 - 1) ** 2


_LSHAPE_FIELD = None


def lshape_field() -> CornerField:
    global _LSHAPE_FIELD
    if _LSHAPE_FIELD is None:
        _LSHAPE_FIELD = CornerField(SymbolicField(lshape_cutoff()),
                                    SymbolicField(corner_singularity(), polar=True))
    return _LSHAPE_FIELD


def lshape_exact(problem: str = "vk") -> ExactSolution:
    """Corner-singular solution u = v on the L-shaped domain (von Karman only)."""
    if problem != "vk":
        raise ValueError("the L-shape solution is defined for the von Karman problem only")
    u = lshape_field()
    return ExactSolution([u, u], _vk_load(u, u), "lshape")


def get_exact(problem: str, domain: str) -> ExactSolution:
    if domain == "square":
        return square_exact(problem)
    if domain == "lshape":
        if problem == "ns":
            # documented extension: the NS load built from the same singular field
            u = lshape_field()
            return ExactSolution([u], _ns_load(u), "lshape")
        return lshape_exact(problem)
    raise ValueError(f"unknown domain {domain!r}")
