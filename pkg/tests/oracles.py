"""Independent reference computations used by the tests.

Each oracle avoids the code path under test: numeric Picard iteration works on
floats along a refined polyline, quadrature uses scipy, and derivatives are
central differences.
"""

import numpy as np


def refine(points: np.ndarray, sub: int) -> np.ndarray:
    """Insert ``sub - 1`` equally spaced points inside every segment of a polyline."""
    points = np.asarray(points, dtype=float)
    s = np.linspace(0.0, 1.0, sub + 1)[:-1]
    pieces = [a + s[:, None] * (b - a) for a, b in zip(points[:-1], points[1:])]
    return np.vstack(pieces + [points[-1:]])


def cumulative_trapezoid(integrand: np.ndarray, dX: np.ndarray) -> np.ndarray:
    """``int_0^t g dX`` on the grid: g is (K+1, m, n), dX is (K, n); exact for linear g."""
    mid = 0.5 * (integrand[:-1] + integrand[1:])
    steps = np.einsum("kji,ki->kj", mid, dX)
    return np.vstack([np.zeros((1, steps.shape[1])), np.cumsum(steps, axis=0)])


def numeric_picard(f, y0, X: np.ndarray, r: int) -> np.ndarray:
    """r Picard steps ``Y(k+1) = int f(y0 + Y(k)) dX`` on the grid ``X`` (K+1, n); returns Y(r)."""
    y0 = np.asarray(y0, dtype=float)
    dX = np.diff(X, axis=0)
    Y = np.zeros((X.shape[0], y0.size))
    for _ in range(r):
        Y = cumulative_trapezoid(f(y0 + Y), dX)
    return Y


def path_iterated_integral(Y: np.ndarray, word) -> float:
    """Iterated integral of a finely sampled path by repeated trapezoid integration."""
    acc = np.ones(Y.shape[0])
    dY = np.diff(Y, axis=0)
    for letter in word:
        mid = 0.5 * (acc[:-1] + acc[1:])
        acc = np.concatenate([[0.0], np.cumsum(mid * dY[:, letter - 1])])
    return float(acc[-1])


def central_difference(fun, x, h: float = 1e-6) -> np.ndarray:
    """Jacobian (len(fun(x)), len(x)) by central differences."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h))
    return np.stack(cols, axis=1)
