"""Gauss-type quadrature on the reference triangle and the unit square.

Triangle rules are collapsed (Duffy) products of Gauss-Legendre and
Gauss-Jacobi(1, 0) rules, so all weights are positive.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 12

# degrees used by assembly and error evaluation
TRIANGLE_DEGREE = 6
RECTANGLE_DEGREE = 10


@dataclass(frozen=True)
class QuadratureRule:
    """Points in reference coordinates, weights summing to the reference measure."""

    kind: str
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)

    def integrate(self, f) -> float:
        """Integrate ``f(x, y)`` over the reference element."""
        return float(np.dot(self.weights, f(self.points[:, 0], self.points[:, 1])))


def _gauss01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def rule_for(kind: str, degree: int) -> QuadratureRule:
    """Rule exact for all bivariate polynomials of total degree <= ``degree``."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (0..{MAX_DEGREE})")
    n = max(1, (degree + 2) // 2)
    if kind == "triangle":
        xi, wx = _gauss01(n)
        t, wt = roots_jacobi(n, 1.0, 0.0)
        eta, weta = 0.5 * (t + 1.0), 0.25 * wt
        X = np.outer(1.0 - eta, xi)
        Y = np.repeat(eta[:, None], n, axis=1)
        W = np.outer(weta, wx)
    elif kind == "rectangle":
        s, ws = _gauss01(n)
        X, Y = np.meshgrid(s, s, indexing="ij")
        W = np.outer(ws, ws)
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    pts.setflags(write=False)
    W = W.ravel()
    W.setflags(write=False)
    return QuadratureRule(kind, pts, W, 2 * n - 1)


def default_rule(kind: str) -> QuadratureRule:
    return rule_for(kind, TRIANGLE_DEGREE if kind == "triangle" else RECTANGLE_DEGREE)


def map_to_cell(rule: QuadratureRule, vertices) -> tuple[np.ndarray, np.ndarray]:
    """Physical points and weights for one cell given its (ordered) vertices."""
    pts, w = map_to_cells(rule, np.asarray(vertices, dtype=float)[None])
    return pts[0], w[0]


def map_to_cells(rule: QuadratureRule, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised mapping for cells ``xy`` of shape (nC, nv, 2).

    Triangles use the affine map from (0,0),(1,0),(0,1); rectangles are assumed
    axis-aligned and use the map from [0,1]^2 through vertices 0 and 2.
    """
    ref = rule.points
    v0 = xy[:, 0]
    if rule.kind == "triangle":
        J = np.stack([xy[:, 1] - v0, xy[:, 2] - v0], axis=2)  # columns are edge vectors
        det = np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
        pts = v0[:, None, :] + np.einsum("cij,qj->cqi", J, ref)
    else:
        d = xy[:, 2] - v0
        det = np.abs(d[:, 0] * d[:, 1])
        pts = v0[:, None, :] + d[:, None, :] * ref[None]
    return pts, det[:, None] * rule.weights[None, :]
