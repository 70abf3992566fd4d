"""Deterministic bounded scalar minimization: coarse grid, then golden section."""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .errors import OptimizerError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
GRID_POINTS = 201
X_TOL = 1e-10


class GridGoldenResult(NamedTuple):
    x: float
    fun: float
    multimodal: bool


def _checked(f, x):
    v = float(f(x))
    if not math.isfinite(v):
        raise OptimizerError(f"objective is not finite at x={x!r}: {v!r}", x=x)
    return v


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = X_TOL,
                   max_iter: int = 200):
    """Golden-section search for a minimum of ``f`` on [lo, hi].

    Only interior points are evaluated.  Returns ``(x, f(x))`` of the best
    point seen.
    """
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = _checked(f, c), _checked(f, d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = _checked(f, c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = _checked(f, d)
    return (c, fc) if fc <= fd else (d, fd)


def grid_golden(f: Callable[[float], float], interval=(0.0, 1.0), tol: float = X_TOL,
                n_grid: int = GRID_POINTS) -> GridGoldenResult:
    """Grid scan of ``n_grid`` points (endpoints included), then golden
    refinement inside the bracket around the best grid point.

    ``multimodal`` is set when the grid shows more than one strict local
    minimum; the returned point is still the refined global grid minimum.
    Ties keep the smallest x.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("interval must satisfy lo < hi")
    xs = np.linspace(lo, hi, n_grid)
    fs = np.array([_checked(f, x) for x in xs])
    k = int(np.argmin(fs))

    interior = fs[1:-1]
    is_min = (interior < fs[:-2]) & (interior <= fs[2:])
    n_local = int(is_min.sum()) + int(fs[0] < fs[1]) + int(fs[-1] < fs[-2])
    multimodal = n_local > 1

    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, n_grid - 1)]
    xr, fr = golden_section(f, a, b, tol=tol)
    if fr < fs[k]:
        return GridGoldenResult(xr, fr, multimodal)
    return GridGoldenResult(float(xs[k]), float(fs[k]), multimodal)


def minimize_scalar(f: Callable[[float], float], interval=(0.0, 1.0), tol: float = X_TOL):
    """Return ``(x_star, f_star)`` minimizing ``f`` over the closed interval."""
    res = grid_golden(f, interval, tol)
    return res.x, res.fun
