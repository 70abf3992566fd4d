"""Subdiffraction discrimination of two faint extended sources.

To order chi^2 every exponent below has the form

    scale * max_s [ s*A + (1-s)*B - sum_k w_k a_k^s b_k^(1-s) ]

with ``A``, ``B`` the summed variances of the two hypotheses and nonnegative
overlap weights ``w_k``.  The bracket is concave in ``s``, so the maximum is
found by bisection on its (decreasing) derivative.  Powers follow the support
convention: a term with ``a_k == 0`` or ``b_k == 0`` vanishes for every s.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.optimize import brentq

from .chernoff import ChernoffResult
from .errors import DomainError
from .optimize import INV_PHI

HALF_PI = 0.5 * math.pi
THETA0_GRID = 361
SNAP_TOL = 1e-28
BISECT_ITER = 64
GOLDEN_ITER = 60
ROUNDOFF_MARGIN = 8 * np.finfo(float).eps


@dataclass(frozen=True)
class ScenarioParams:
    """Principal variances and orientations of the two hypotheses.

    Variances are dimensionless (in units of the source scale); ``theta_i`` is
    the angle of the principal x axis of hypothesis i.
    """

    V1x: float
    V1y: float
    V2x: float
    V2y: float
    theta1: float = 0.0
    theta2: float = 0.0
    I0: float = 1.0
    chi: float = 0.1

    def __post_init__(self):
        for name in ("V1x", "V1y", "V2x", "V2y", "theta1", "theta2", "I0", "chi"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v}")
        for name in ("V1x", "V1y", "V2x", "V2y"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if not self.I0 > 0:
            raise DomainError("I0 must be positive")
        if not 0 < self.chi <= 0.2:
            raise DomainError(f"chi must lie in (0, 0.2], got {self.chi}")

    @property
    def dtheta(self) -> float:
        """theta1 - theta2 reduced to [0, pi)."""
        return math.fmod(self.theta1 - self.theta2, math.pi) % math.pi

    @property
    def scale(self) -> float:
        return self.I0 * self.chi**2

    def swapped(self) -> "ScenarioParams":
        return replace(self, V1x=self.V2x, V1y=self.V2y, V2x=self.V1x, V2y=self.V1y,
                       theta1=self.theta2, theta2=self.theta1)

    def rotated(self, phi: float) -> "ScenarioParams":
        return replace(self, theta1=self.theta1 + phi, theta2=self.theta2 + phi)


@dataclass(frozen=True)
class RotatedVariances:
    Vx_meas: float
    Vy_meas: float


def cos2_sin2(delta):
    """(cos^2, sin^2) of ``delta`` with roundoff-level values snapped to exactly 0 and 1."""
    delta = np.asarray(delta, dtype=float)
    c2 = np.cos(delta) ** 2
    s2 = np.sin(delta) ** 2
    c2 = np.where(c2 < SNAP_TOL, 0.0, np.where(s2 < SNAP_TOL, 1.0, c2))
    s2 = np.where(s2 < SNAP_TOL, 0.0, np.where(c2 == 0.0, 1.0, s2))
    return c2, s2


def rotated_variances(Vx, Vy, delta):
    """Variances seen by HG10/HG01 modes rotated by ``-delta`` relative to the principal frame."""
    if np.any(np.asarray(Vx) < 0) or np.any(np.asarray(Vy) < 0):
        raise DomainError("variances must be nonnegative")
    c2, s2 = cos2_sin2(delta)
    vx = c2 * Vx + s2 * Vy
    vy = s2 * Vx + c2 * Vy
    if np.ndim(vx) == 0:
        return float(vx), float(vy)
    return vx, vy


def _masked_terms(a, b, w):
    """Zero the weight of terms that vanish under the support convention."""
    live = (a > 0) & (b > 0) & (w > 0)
    a_safe = np.where(live, a, 1.0)
    b_safe = np.where(live, b, 1.0)
    return np.where(live, w, 0.0), np.log(a_safe), np.log(b_safe)


def maximize_concave(A, B, a, b, w):
    """Vectorized ``max_s [s A + (1-s) B - sum_k w_k a_k^s b_k^(1-s)]`` over s in [0, 1].

    ``A``, ``B`` have shape ``(n,)``; ``a``, ``b``, ``w`` have shape ``(n, K)``.
    Returns ``(value, s_star)`` arrays.  Ties at a flat optimum keep the
    smallest s.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    w, la, lb = _masked_terms(np.asarray(a, float), np.asarray(b, float), np.asarray(w, float))
    dl = la - lb

    def value(s):
        s = s[:, None]
        return s[:, 0] * A + (1.0 - s[:, 0]) * B - (w * np.exp(s * la + (1.0 - s) * lb)).sum(axis=1)

    def slope(s):
        s = s[:, None]
        return A - B - (w * dl * np.exp(s * la + (1.0 - s) * lb)).sum(axis=1)

    n = A.shape[0]
    d0 = slope(np.zeros(n))
    d1 = slope(np.ones(n))
    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(BISECT_ITER):
        mid = 0.5 * (lo + hi)
        up = slope(mid) > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    s_star = 0.5 * (lo + hi)
    s_star = np.where(d0 <= 0, 0.0, np.where(d1 >= 0, 1.0, s_star))
    return value(s_star), s_star


def _qcb_terms(V1x, V1y, V2x, V2y, dtheta):
    c2, s2 = cos2_sin2(dtheta)
    a = np.stack([V1x, V1y, V1x, V1y], axis=-1)
    b = np.stack([V2x, V2y, V2y, V2x], axis=-1)
    w = np.stack([c2, c2, s2, s2], axis=-1)
    return a, b, w


def _params_arrays(params):
    arr = np.array([[p.V1x, p.V1y, p.V2x, p.V2y, p.theta1, p.theta2, p.scale] for p in params], float)
    return arr.T


def qcb_subdiff_batch(params):
    """Quantum Chernoff exponents for a sequence of ScenarioParams; returns ``(exponent, s_star)``."""
    V1x, V1y, V2x, V2y, t1, t2, scale = _params_arrays(params)
    a, b, w = _qcb_terms(V1x, V1y, V2x, V2y, t1 - t2)
    val, s = maximize_concave(V1x + V1y, V2x + V2y, a, b, w)
    return scale * np.maximum(val, 0.0), s


def qcb_subdiff(p: ScenarioParams) -> ChernoffResult:
    """Quantum Chernoff exponent of two subdiffraction sources from their principal variances."""
    e, s = qcb_subdiff_batch([p])
    return ChernoffResult(float(e[0]), float(s[0]), "subdiff")


def _spade_values(V, t1, t2, theta0):
    """Unscaled TRISPADE bracket maximum; ``theta0`` broadcasts against the parameter axis."""
    V1x, V1y, V2x, V2y = V
    v1x, v1y = rotated_variances(V1x, V1y, t1 - theta0)
    v2x, v2y = rotated_variances(V2x, V2y, t2 - theta0)
    shape = np.broadcast(v1x, v2x).shape
    a = np.stack([np.broadcast_to(v1x, shape), np.broadcast_to(v1y, shape)], axis=-1).reshape(-1, 2)
    b = np.stack([np.broadcast_to(v2x, shape), np.broadcast_to(v2y, shape)], axis=-1).reshape(-1, 2)
    A = np.broadcast_to(V1x + V1y, shape).reshape(-1)
    B = np.broadcast_to(V2x + V2y, shape).reshape(-1)
    val, s = maximize_concave(A, B, a, b, np.ones_like(a))
    return np.maximum(val, 0.0).reshape(shape), s.reshape(shape)


def spade_exponent(p: ScenarioParams, theta0: float) -> ChernoffResult:
    """Chernoff exponent of photon counting in HG00 and the HG10/HG01 modes rotated by theta0."""
    V = tuple(np.array([x]) for x in (p.V1x, p.V1y, p.V2x, p.V2y))
    val, s = _spade_values(V, np.array([p.theta1]), np.array([p.theta2]), np.array([float(theta0)]))
    return ChernoffResult(float(p.scale * val[0]), float(s[0]), "spade", theta0_star=float(theta0))


def spade_optimal_batch(params, n_grid: int = THETA0_GRID):
    """Best rotated TRISPADE exponent for each ScenarioParams.

    The pi/2-periodic objective is scanned on ``n_grid`` points of [0, pi/2]
    plus the two image orientations (where 1D sources produce cusps), then
    refined by golden section around the best point.  Returns
    ``(exponent, s_star, theta0_star)`` arrays.
    """
    V1x, V1y, V2x, V2y, t1, t2, scale = _params_arrays(params)
    V = (V1x[:, None], V1y[:, None], V2x[:, None], V2y[:, None])
    n = V1x.size
    grid = np.linspace(0.0, HALF_PI, n_grid)
    cand = np.concatenate([np.broadcast_to(grid, (n, n_grid)),
                           np.mod(t1, HALF_PI)[:, None], np.mod(t2, HALF_PI)[:, None]], axis=1)
    cand = np.sort(cand, axis=1)
    vals, svals = _spade_values(V, t1[:, None], t2[:, None], cand)
    # argmax keeps the first (smallest theta0) among ties
    k = np.argmax(vals, axis=1)
    rows = np.arange(n)
    best_x = cand[rows, k]
    best_v = vals[rows, k]
    best_s = svals[rows, k]
    ncol = cand.shape[1]
    lo = np.where(k > 0, cand[rows, np.maximum(k - 1, 0)], cand[rows, ncol - 2] - HALF_PI)
    hi = np.where(k < ncol - 1, cand[rows, np.minimum(k + 1, ncol - 1)], cand[rows, 1] + HALF_PI)

    Vc = tuple(x[:, 0] for x in V)

    def f(x):
        return _spade_values(Vc, t1, t2, x)

    for _ in range(GOLDEN_ITER):
        c = hi - INV_PHI * (hi - lo)
        d = lo + INV_PHI * (hi - lo)
        left = f(c)[0] >= f(d)[0]
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
    gx = 0.5 * (lo + hi)
    gv, gs = f(gx)
    # a refined point must beat the candidate by more than roundoff, so exact
    # aligned candidates survive flat (quadratic) maxima; roundoff scales with
    # the variance sums entering the bracket
    better = gv > best_v + ROUNDOFF_MARGIN * (V1x + V1y + V2x + V2y)
    x = np.where(better, gx, best_x)
    v = np.where(better, gv, best_v)
    s = np.where(better, gs, best_s)
    return scale * v, s, np.mod(x, HALF_PI)


def spade_optimal(p: ScenarioParams, n_grid: int = THETA0_GRID) -> ChernoffResult:
    """Rotated TRISPADE exponent maximized over the demultiplexer angle theta0 in [0, pi/2)."""
    e, s, t = spade_optimal_batch([p], n_grid)
    return ChernoffResult(float(e[0]), float(s[0]), "spade_optimal", theta0_star=float(t[0]))


def gap(p: ScenarioParams, theta0) -> float:
    """Normalized gap (xi_Q - xi(theta0)) / xi_Q."""
    xq = qcb_subdiff(p).exponent
    if not xq > 0:
        raise DomainError("quantum Chernoff exponent is zero (identical hypotheses); gap undefined")
    return (xq - spade_exponent(p, theta0).exponent) / xq


def gap_curve(p: ScenarioParams, theta0s):
    """Vectorized gap over an array of theta0 values; returns ``(gap, xi_spade, s_star)``."""
    xq = qcb_subdiff(p).exponent
    if not xq > 0:
        raise DomainError("quantum Chernoff exponent is zero (identical hypotheses); gap undefined")
    theta0s = np.asarray(theta0s, dtype=float)
    V = tuple(np.array([x]) for x in (p.V1x, p.V1y, p.V2x, p.V2y))
    val, s = _spade_values(V, np.array([p.theta1]), np.array([p.theta2]), theta0s)
    xs = p.scale * val
    return (xq - xs) / xq, xs, s


def oneD_qcb(V1: float, V2: float, dtheta: float, scale: float = 1.0) -> ChernoffResult:
    """Quantum Chernoff exponent of two 1D sources of variances V1, V2 at relative angle dtheta.

    ``scale`` is I0 * chi^2.
    """
    if not (V1 > 0 and V2 > 0):
        raise DomainError("1D variances must be positive; use qcb_subdiff for degenerate sources")
    c2, _ = cos2_sin2(dtheta)
    val, s = maximize_concave(np.array([V1]), np.array([V2]), np.array([[V1]]), np.array([[V2]]),
                              np.array([[float(c2)]]))
    return ChernoffResult(float(scale * max(val[0], 0.0)), float(s[0]), "oneD")


def _region_margin(r, c2):
    return c2 * math.log(r) - (r - 1.0)


def oneD_optimality_region(V1: float, V2: float, dtheta: float) -> bool:
    """True when the 1D s-maximum sits at an endpoint: cos^2(dtheta) ln r >= r - 1 for r or 1/r."""
    if not (V1 > 0 and V2 > 0):
        raise DomainError("1D variances must be positive")
    c2 = float(cos2_sin2(dtheta)[0])
    r = V1 / V2
    tol = 1e-15 * max(1.0, abs(math.log(r)))
    return _region_margin(r, c2) >= -tol or _region_margin(1.0 / r, c2) >= -tol


def oneD_boundary_ratio(dtheta: float) -> float:
    """Smallest variance ratio r* in (0, 1] inside the 1D optimality region.

    Root of cos^2(dtheta) ln r = r - 1 below r = cos^2(dtheta); 0 for
    orthogonal sources and 1 for aligned ones.
    """
    c2 = float(cos2_sin2(dtheta)[0])
    if c2 == 0.0:
        return 0.0
    if c2 >= 1.0:
        return 1.0
    lo = math.exp(-1.0 / c2) * 1e-3
    return brentq(_region_margin, lo, c2, args=(c2,), xtol=1e-15, rtol=4 * np.finfo(float).eps)


def rotated_qcb(Vx: float, Vy: float, dtheta: float, scale: float = 1.0) -> ChernoffResult:
    """Closed-form exponent for one source rotated by dtheta: sin^2 dtheta (sqrt Vx - sqrt Vy)^2 at s = 1/2."""
    if Vx < 0 or Vy < 0:
        raise DomainError("variances must be nonnegative")
    _, s2 = cos2_sin2(dtheta)
    return ChernoffResult(float(scale * s2 * (math.sqrt(Vx) - math.sqrt(Vy)) ** 2), 0.5, "rotated")


def amgm_cs_lower_bound(delta1, delta2, s):
    """Both sides of (sin^2 d1)^s (sin^2 d2)^(1-s) + (cos^2 d1)^s (cos^2 d2)^(1-s) >= cos^2(d1 - d2).

    Powers use the support convention; works elementwise on arrays.
    """
    s = np.asarray(s, dtype=float)
    if np.any((s < 0) | (s > 1)):
        raise DomainError("s must lie in [0, 1]")
    c1, s1 = cos2_sin2(delta1)
    c2, s2 = cos2_sin2(delta2)

    def geo(x, y):
        live = (x > 0) & (y > 0)
        return np.where(live, np.exp(s * np.log(np.where(live, x, 1.0))
                                     + (1.0 - s) * np.log(np.where(live, y, 1.0))), 0.0)

    lhs = geo(s1, s2) + geo(c1, c2)
    rhs = cos2_sin2(np.asarray(delta1, float) - np.asarray(delta2, float))[0]
    if np.ndim(lhs) == 0:
        return float(lhs), float(rhs)
    return lhs, rhs
