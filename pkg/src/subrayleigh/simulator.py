"""Monte Carlo photon counting in the rotated three-mode demultiplexer.

Frame outcomes are indexed by the HG00 photon number ``n00`` (the last
bucket collects every ``n00 >= n0_max``) and a side-mode category:

    0  no photon in the rotated HG10/HG01 modes
    1  exactly one photon, in HG10
    2  exactly one photon, in HG01
    3  anything else ("other"), aggregated over n00 into a single cell

Flattened tables have ``3 * (n0_max + 1) + 1`` cells, with cell
``3 * n00 + j`` for j < 3 and the last cell for "other".
"""
from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .diffraction import HG6, hg_covariance_chi2
from .errors import DomainError
from .source import SecondMoments
from .subdiff import ScenarioParams, rotated_variances, spade_exponent

CLOSED_FORM = "closed_form_probs"
P_FUNCTION = "p_function_exact"
SAMPLING_MODES = (CLOSED_FORM, P_FUNCTION)

CATEGORIES = ("none", "one_in_10", "one_in_01", "other")
TAIL_EPS = 1e-12
LOG_FLOOR = 1e-300
BLOCK_TRIALS = 4096
FRAME_BLOCK = 1 << 18
EXPANSION_GUARD = 0.1


@dataclass(frozen=True)
class MeasurementBasis:
    """HG00 plus HG10/HG01 rotated by theta0, as rows over the six lowest HG modes."""

    theta0: float

    @property
    def modes(self) -> np.ndarray:
        c, s = math.cos(self.theta0), math.sin(self.theta0)
        m = np.zeros((3, 6))
        m[0, HG6.index((0, 0))] = 1.0
        m[1, HG6.index((1, 0))], m[1, HG6.index((0, 1))] = c, s
        m[2, HG6.index((1, 0))], m[2, HG6.index((0, 1))] = -s, c
        return m


@dataclass(frozen=True)
class FrameOutcome:
    n00: int
    j: int

    @property
    def category(self) -> str:
        return CATEGORIES[self.j]


@dataclass(frozen=True)
class SimConfig:
    frames_per_trial: int
    trials: int
    seed: int = 0
    sampling_mode: str = CLOSED_FORM

    def __post_init__(self):
        if self.frames_per_trial < 1 or self.trials < 1:
            raise DomainError("frames_per_trial and trials must be positive")
        if self.sampling_mode not in SAMPLING_MODES:
            raise DomainError(f"sampling_mode must be one of {SAMPLING_MODES}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ExponentEstimate:
    slope: float
    ci_low: float
    ci_high: float
    xi_theory: float
    rows: tuple
    dropped: tuple = ()

    @property
    def ratio(self) -> float:
        return self.slope / self.xi_theory if self.xi_theory > 0 else float("nan")


def n0_max_for(I0: float, eps: float = TAIL_EPS) -> int:
    """Smallest M with geometric tail (I0/(1+I0))**(M+1) < eps."""
    if I0 <= 0:
        return 0
    q = I0 / (1.0 + I0)
    return max(1, int(math.floor(math.log(eps) / math.log(q))))


def n_cells(n0_max: int) -> int:
    return 3 * (n0_max + 1) + 1


def _hyp_variances(p: ScenarioParams, hypothesis: int):
    if hypothesis == 1:
        return p.V1x, p.V1y, p.theta1
    if hypothesis == 2:
        return p.V2x, p.V2y, p.theta2
    raise DomainError("hypothesis must be 1 or 2")


def _geometric_sums(I0, n0_max):
    """Per-bucket sums of q^N and N q^N / (1+I0)^2 factors, with the tail folded into the last bucket."""
    q = I0 / (1.0 + I0)
    n = np.arange(n0_max + 1, dtype=float)
    w0 = q**n / (1.0 + I0) ** 2
    w1 = n * w0
    m = float(n0_max)
    # sum_{N >= M} q^N = q^M (1+I0);  sum_{N >= M} N q^N = q^M (1+I0) (M + I0)
    w0[-1] = q**m * (1.0 + I0) / (1.0 + I0) ** 2
    w1[-1] = q**m * (1.0 + I0) * (m + I0) / (1.0 + I0) ** 2
    return w0, w1


def outcome_probabilities(p: ScenarioParams, hypothesis: int, theta0: float, n0_max: int | None = None):
    """Order-chi^2 outcome table for one hypothesis (flattened, see module docstring)."""
    Vx, Vy, th = _hyp_variances(p, hypothesis)
    I0, c2 = p.I0, p.chi**2
    if c2 * I0 * (Vx + Vy) >= EXPANSION_GUARD:
        raise DomainError(f"chi^2 I0 (Vx+Vy) = {c2 * I0 * (Vx + Vy):.3g} >= {EXPANSION_GUARD}; "
                          "the order-chi^2 table is unreliable, use a smaller chi")
    n0_max = n0_max_for(I0) if n0_max is None else n0_max
    vx, vy = rotated_variances(Vx, Vy, th - theta0)
    w0, w1 = _geometric_sums(I0, n0_max)
    table = np.zeros((n0_max + 1, 3))
    table[:, 0] = (1.0 + I0 - c2 * I0**2 * (Vx + Vy)) * w0 - c2 * (Vx + Vy) * w1
    table[:, 1] = c2 * I0 * (1.0 + I0) * vx * w0
    table[:, 2] = c2 * I0 * (1.0 + I0) * vy * w0
    if table.min() < 0:
        n_bad = int(np.argmax(table[:, 0] < 0))
        raise DomainError(f"negative outcome probability at n00={n_bad}; the chi^2 expansion has broken "
                          "down, use a smaller chi")
    flat = table.reshape(-1)
    other = max(1.0 - flat.sum(), 0.0)
    return np.concatenate([flat, [other]])


def hypothesis_covariance(p: ScenarioParams, hypothesis: int):
    Vx, Vy, th = _hyp_variances(p, hypothesis)
    return hg_covariance_chi2(SecondMoments.from_principal(Vx, Vy, th), p.I0, p.chi)


def _amplitude_factor(p: ScenarioParams, hypothesis: int):
    """Matrix L with L L^T equal to the 6x6 covariance, negative roundoff eigenvalues clamped."""
    cov = hypothesis_covariance(p, hypothesis)
    d, u = np.linalg.eigh(cov.entries)
    if d[0] < -cov.psd_slack * max(cov.trace, 1e-300):
        raise DomainError(f"sampled covariance is not positive semidefinite (min eigenvalue {d[0]:.3g})")
    return u * np.sqrt(np.clip(d, 0.0, None))


def exact_outcome_probabilities(p: ScenarioParams, hypothesis: int, theta0: float, n0_max: int | None = None):
    """Outcome table of the Gaussian state itself, measured in the rotated basis.

    HG00 is uncorrelated with the side modes for a centered source, so its
    count is geometric with mean gamma_00 and independent of the side modes,
    whose two-mode thermal state gives P(0,0) = 1/det(1+G) and
    P(1,0) = [G (1+G)^-1]_11 / det(1+G).
    """
    n0_max = n0_max_for(p.I0) if n0_max is None else n0_max
    l = _amplitude_factor(p, hypothesis)
    m = MeasurementBasis(theta0).modes @ l
    g = m @ m.T
    if np.max(np.abs(g[0, 1:])) > 1e-12 * max(g[0, 0], 1e-300):
        raise DomainError("HG00 is correlated with the side modes; the source is not centered")
    lam = g[0, 0]
    gb = g[1:, 1:]
    one = np.eye(2)
    det = np.linalg.det(one + gb)
    gp = gb @ np.linalg.inv(one + gb)
    side = np.array([1.0 / det, gp[0, 0] / det, gp[1, 1] / det])
    n = np.arange(n0_max + 1)
    geo = lam**n / (1.0 + lam) ** (n + 1)
    geo[-1] = (lam / (1.0 + lam)) ** n0_max
    table = geo[:, None] * side[None, :]
    return np.concatenate([table.reshape(-1), [max(1.0 - side.sum(), 0.0)]])


def _stream(seed: int, *key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def _encode(n00, j, n0_max):
    idx = 3 * np.minimum(n00, n0_max) + np.minimum(j, 2)
    return np.where(j == 3, n_cells(n0_max) - 1, idx)


def _exact_frames(l, modes, n_frames, rng):
    """Draw complex amplitudes alpha = L z, project onto the modes, count photons."""
    k = l.shape[1]
    z = (rng.standard_normal((n_frames, k)) + 1j * rng.standard_normal((n_frames, k))) / math.sqrt(2.0)
    beta = z @ (modes @ l).T
    counts = rng.poisson(np.abs(beta) ** 2)
    n00 = counts[:, 0]
    n1, n2 = counts[:, 1], counts[:, 2]
    j = np.full(n_frames, 3, dtype=np.int64)
    j[(n1 == 0) & (n2 == 0)] = 0
    j[(n1 == 1) & (n2 == 0)] = 1
    j[(n1 == 0) & (n2 == 1)] = 2
    return n00, j


def sample_frames(p: ScenarioParams, hypothesis: int, basis: MeasurementBasis, cfg: SimConfig,
                  n0_max: int | None = None):
    """Outcome stream of shape (trials, frames) as a pair of integer arrays ``(n00, j)``.

    ``j`` follows CATEGORIES.  In the closed-form path ``n00`` of an "other"
    event is reported as -1, since that table aggregates them over n00.
    """
    n0_max = n0_max_for(p.I0) if n0_max is None else n0_max
    shape = (cfg.trials, cfg.frames_per_trial)
    n00 = np.empty(shape, dtype=np.int64)
    j = np.empty(shape, dtype=np.int64)
    if cfg.sampling_mode == CLOSED_FORM:
        table = outcome_probabilities(p, hypothesis, basis.theta0, n0_max)
        cdf = np.cumsum(table)
        cdf /= cdf[-1]
    else:
        l = _amplitude_factor(p, hypothesis)
        modes = basis.modes
    for b0 in range(0, cfg.trials, BLOCK_TRIALS):
        b1 = min(b0 + BLOCK_TRIALS, cfg.trials)
        rng = _stream(cfg.seed, cfg.frames_per_trial, hypothesis, b0 // BLOCK_TRIALS)
        size = (b1 - b0) * cfg.frames_per_trial
        if cfg.sampling_mode == CLOSED_FORM:
            cell = np.searchsorted(cdf, rng.random(size), side="right")
            cell = np.minimum(cell, table.size - 1)
            other = cell == table.size - 1
            nn = np.where(other, -1, cell // 3)
            jj = np.where(other, 3, cell % 3)
        else:
            nn, jj = _exact_frames(l, modes, size, rng)
        n00[b0:b1] = nn.reshape(b1 - b0, -1)
        j[b0:b1] = jj.reshape(b1 - b0, -1)
    return n00, j


def sample_counts(p: ScenarioParams, hypothesis: int, basis: MeasurementBasis, cfg: SimConfig,
                  n0_max: int | None = None) -> np.ndarray:
    """Per-trial outcome histograms, shape (trials, cells).

    The histogram is a sufficient statistic for the likelihood-ratio test.  The
    closed-form path draws it directly as a multinomial; the exact path
    histograms individually sampled frames.
    """
    n0_max = n0_max_for(p.I0) if n0_max is None else n0_max
    ncell = n_cells(n0_max)
    out = np.zeros((cfg.trials, ncell), dtype=np.int64)
    if cfg.sampling_mode == CLOSED_FORM:
        table = outcome_probabilities(p, hypothesis, basis.theta0, n0_max)
        table = table / table.sum()
    else:
        l = _amplitude_factor(p, hypothesis)
        modes = basis.modes
    n = cfg.frames_per_trial
    for b0 in range(0, cfg.trials, BLOCK_TRIALS):
        b1 = min(b0 + BLOCK_TRIALS, cfg.trials)
        rng = _stream(cfg.seed, n, hypothesis, b0 // BLOCK_TRIALS)
        if cfg.sampling_mode == CLOSED_FORM:
            out[b0:b1] = rng.multinomial(n, table, size=b1 - b0)
            continue
        per = max(1, FRAME_BLOCK // n)
        for t0 in range(b0, b1, per):
            t1 = min(t0 + per, b1)
            nn, jj = _exact_frames(l, modes, (t1 - t0) * n, rng)
            cell = _encode(nn, jj, n0_max)
            trial = np.repeat(np.arange(t1 - t0), n)
            np.add.at(out[t0:t1], (trial, cell), 1)
    return out


def log_likelihood_ratio(counts, table1, table2) -> np.ndarray:
    """Summed ln(P1/P2) per trial for histogram rows ``counts``; tables floored at 1e-300."""
    w = np.log(np.maximum(table1, LOG_FLOOR)) - np.log(np.maximum(table2, LOG_FLOOR))
    return np.asarray(counts) @ w


def lr_test(outcomes, table1, table2):
    """Likelihood-ratio decision(s): 1 when ln(P1/P2) >= 0 else 2.

    ``outcomes`` is a histogram over cells (one trial) or a 2D array of them.
    """
    llr = log_likelihood_ratio(outcomes, table1, table2)
    dec = np.where(llr >= 0.0, 1, 2)
    return int(dec) if np.ndim(dec) == 0 else dec


def _weighted_slope(ns, y, var):
    w = 1.0 / np.asarray(var)
    ns = np.asarray(ns, dtype=float)
    xm = np.sum(w * ns) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (ns - xm) ** 2)
    slope = np.sum(w * (ns - xm) * (y - ym)) / sxx
    return slope, math.sqrt(1.0 / sxx)


def estimate_error_exponent(p: ScenarioParams, theta0: float, cfg: SimConfig, N_list,
                            prefactor_power: float = 0.0, z: float = 1.96) -> ExponentEstimate:
    """Fit the decay rate of the LR-test error probability against the frame count N.

    Both hypotheses are simulated ``cfg.trials`` times per N (equal priors).
    The fit is a weighted least-squares slope of ``-ln P_e - prefactor_power * ln N``
    against N, with binomial variances; ``prefactor_power = 0.5`` removes the
    usual 1/sqrt(N) prefactor of the error probability.  Rows are
    ``(N, trials, errors_h1, errors_h2, p_hat)``.
    """
    N_list = sorted(int(n) for n in N_list)
    if len(N_list) < 2 or N_list[-1] < 4 * N_list[0]:
        raise DomainError("N_list must span at least a factor of 4")
    n0_max = n0_max_for(p.I0)
    if cfg.sampling_mode == CLOSED_FORM:
        t1 = outcome_probabilities(p, 1, theta0, n0_max)
        t2 = outcome_probabilities(p, 2, theta0, n0_max)
    else:
        t1 = exact_outcome_probabilities(p, 1, theta0, n0_max)
        t2 = exact_outcome_probabilities(p, 2, theta0, n0_max)
    basis = MeasurementBasis(theta0)
    rows, dropped = [], []
    for n in N_list:
        c = SimConfig(n, cfg.trials, cfg.seed, cfg.sampling_mode)
        e1 = int(np.sum(lr_test(sample_counts(p, 1, basis, c, n0_max), t1, t2) != 1))
        e2 = int(np.sum(lr_test(sample_counts(p, 2, basis, c, n0_max), t1, t2) != 2))
        p_hat = (e1 + e2) / (2.0 * cfg.trials)
        rows.append((n, cfg.trials, e1, e2, p_hat))
        if e1 + e2 == 0:
            warnings.warn(f"no errors observed at N={n}; dropped from the fit", RuntimeWarning, stacklevel=2)
            dropped.append(n)
    used = [r for r in rows if r[2] + r[3] > 0]
    xi = spade_exponent(p, theta0).exponent
    if len(used) < 2:
        return ExponentEstimate(float("nan"), float("nan"), float("nan"), xi, tuple(rows), tuple(dropped))
    ns = np.array([r[0] for r in used], dtype=float)
    ph = np.array([r[4] for r in used])
    y = -np.log(ph) - prefactor_power * np.log(ns)
    var = (1.0 - ph) / (2.0 * cfg.trials * ph)
    slope, se = _weighted_slope(ns, y, var)
    return ExponentEstimate(float(slope), float(slope - z * se), float(slope + z * se), xi,
                            tuple(rows), tuple(dropped))
