"""Gap curves over the demultiplexer angle, including the figure presets.

Sources are placed symmetrically, theta1 = dtheta/2 and theta2 = -dtheta/2, and
the sweep variable is Delta1 + Delta2 = theta1 + theta2 - 2*theta0.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError
from .subdiff import ScenarioParams, gap_curve, qcb_subdiff

THETA0_STEP = math.pi / 720
SWEEP_COLUMNS = ("series", "sweep_variable", "xi_q", "xi_spade", "gap", "s_star", "theta0")

FIG2_DTHETAS = (math.pi / 8, math.pi / 4, 3 * math.pi / 8)
FIG2_RATIOS = (0.5, 0.1, 0.01, 1e-3, 1e-4)
FIG3_DTHETAS = (math.pi / 16, math.pi / 8, math.pi / 4, 3 * math.pi / 8)
FIG3_VARIANCES = ((6.0, 12.0), (2.0, 0.2))


@dataclass(frozen=True)
class SweepCase:
    label: str
    params: ScenarioParams


def theta0_grid(params: ScenarioParams, step: float = THETA0_STEP, lo: float = -0.5 * math.pi,
                hi: float = 0.5 * math.pi) -> np.ndarray:
    """Uniform theta0 grid on [lo, hi] with the image orientations inserted."""
    if not step > 0 or not hi > lo:
        raise DomainError("theta0 grid is empty")
    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    extra = [t for t in (params.theta1, params.theta2) if lo <= t <= hi]
    return np.unique(np.concatenate([grid, extra]))


def symmetric_params(V1, V2, dtheta, I0=1.0, chi=0.1) -> ScenarioParams:
    return ScenarioParams(V1[0], V1[1], V2[0], V2[1], 0.5 * dtheta, -0.5 * dtheta, I0, chi)


def fig2_cases(dthetas=FIG2_DTHETAS, ratios=FIG2_RATIOS):
    """1D sources of variances (r, 1) at relative angles dtheta."""
    return [SweepCase(f"1d_dtheta={dt:.6f}_r={r:g}", symmetric_params((r, 0.0), (1.0, 0.0), dt))
            for dt in dthetas for r in ratios]


def fig3_cases(dthetas=FIG3_DTHETAS, variances=FIG3_VARIANCES):
    """Identical 2D sources rotated by dtheta."""
    return [SweepCase(f"rot_V=({vx:g},{vy:g})_dtheta={dt:.6f}", symmetric_params((vx, vy), (vx, vy), dt))
            for vx, vy in variances for dt in dthetas]


PRESETS = {"fig2": fig2_cases, "fig3": fig3_cases}


def sweep_case(case: SweepCase, theta0s=None):
    """Rows (series, Delta1+Delta2, xi_q, xi_spade, gap, s_star, theta0) over a theta0 grid."""
    p = case.params
    theta0s = theta0_grid(p) if theta0s is None else np.asarray(theta0s, dtype=float)
    if theta0s.size == 0:
        raise DomainError("theta0 grid is empty")
    g, xs, s = gap_curve(p, theta0s)
    xq = qcb_subdiff(p).exponent
    sweep_var = p.theta1 + p.theta2 - 2.0 * theta0s
    return [(case.label, float(v), xq, float(x), float(gg), float(ss), float(t))
            for v, x, gg, ss, t in zip(sweep_var, xs, g, s, theta0s)]


def run_sweep(cases, theta0s=None, threads: int = 1):
    """Sweep several cases; row order follows the case list regardless of ``threads``."""
    if not cases:
        raise DomainError("sweep has no cases")
    if threads > 1 and len(cases) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda c: sweep_case(c, theta0s), cases))
    else:
        chunks = [sweep_case(c, theta0s) for c in cases]
    return [row for chunk in chunks for row in chunk]
