"""Independent reference implementations used as test oracles."""
import math

import numpy as np

# 1D central stencils of fourth-order accuracy, offsets -3..3
STENCILS = {
    0: np.array([0, 0, 0, 1, 0, 0, 0], dtype=float),
    1: np.array([0, 1, -8, 0, 8, -1, 0]) / 12.0,
    2: np.array([0, -1, 16, -30, 16, -1, 0]) / 12.0,
    3: np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0,
    4: np.array([-1, 12, -39, 56, -39, 12, -1]) / 6.0,
}
# sixth-order accurate stencils, offsets -4..4 (first/second) for the singular field
STENCILS6 = {
    0: np.array([0, 0, 0, 0, 1, 0, 0, 0, 0], dtype=float),
    1: np.array([0, -1, 9, -45, 0, 45, -9, 1, 0]) / 60.0,
    2: np.array([0, 2, -27, 270, -490, 270, -27, 2, 0]) / 180.0,
}


def fd_derivative(f, x, y, a, b, h, stencils=STENCILS):
    """d^a/dx^a d^b/dy^b f at (x, y) by a tensor-product stencil."""
    sa, sb = stencils[a], stencils[b]
    r = (len(sa) - 1) // 2
    off = np.arange(-r, r + 1)
    X = x + off[:, None] * h
    Y = y + off[None, :] * h
    return float(np.sum(sa[:, None] * sb[None, :] * f(X, Y))) / h ** (a + b)


def square_u(x, y):
    return x ** 2 * y ** 2 * (1 - x) ** 2 * (1 - y) ** 2


def ns_load_fd(x, y, h=1e-3):
    d = lambda a, b: fd_derivative(square_u, x, y, a, b, h)  # noqa: E731
    bilap = d(4, 0) + 2 * d(2, 2) + d(0, 4)
    lap_x = d(3, 0) + d(1, 2)
    lap_y = d(2, 1) + d(0, 3)
    return bilap - lap_x * d(0, 1) + lap_y * d(1, 0)


GAMMA = 0.5444837367
OMEGA = 1.5 * math.pi


def lshape_u_plain(x, y):
    """Direct transcription of the corner solution with the math module."""
    r = math.hypot(x, y)
    t = math.atan2(y, x) % (2 * math.pi)
    g, w = GAMMA, OMEGA
    gg = ((math.sin((g - 1) * w) / (g - 1) - math.sin((g + 1) * w) / (g + 1))
          * (math.cos((g - 1) * t) - math.cos((g + 1) * t))
          - (math.sin((g - 1) * t) / (g - 1) - math.sin((g + 1) * t) / (g + 1))
          * (math.cos((g - 1) * w) - math.cos((g + 1) * w)))
    return (r * r * math.cos(t) ** 2 - 1) ** 2 * (r * r * math.sin(t) ** 2 - 1) ** 2 * r ** (1 + g) * gg


lshape_u_vec = np.vectorize(lshape_u_plain)
