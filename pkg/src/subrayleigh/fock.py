"""Brute-force Chernoff exponents in a truncated two-mode Fock space.

Each mode is truncated at ``cutoff`` photons; the two-mode space keeps every
state with total photon number up to ``2 * cutoff`` so that passive mode
rotations, which conserve the total photon number, act exactly on it.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError, TruncationError

TAIL_EPS = 1e-12
ORACLE_S_POINTS = 1001
ZERO_RTOL = 1e-14


@dataclass(frozen=True)
class FockThermal:
    mode_means: tuple
    cutoff: int
    rotation_angle: float = 0.0

    def density(self) -> np.ndarray:
        return thermal_two_mode(self.mode_means, self.cutoff, self.rotation_angle)


def required_cutoff(mean: float, eps: float = TAIL_EPS) -> int:
    """Smallest cutoff with (mean / (1 + mean))**(cutoff + 1) < eps."""
    if mean <= 0:
        return 1
    ratio = mean / (1.0 + mean)
    return max(1, int(math.floor(math.log(eps) / math.log(ratio))))


def thermal_fock(mean: float, cutoff: int, eps: float = TAIL_EPS) -> np.ndarray:
    """Diagonal of a single-mode thermal state, truncated and renormalized."""
    if mean < 0:
        raise DomainError("mean photon number must be nonnegative")
    if cutoff < 1:
        raise DomainError("cutoff must be at least 1")
    if mean == 0:
        out = np.zeros(cutoff + 1)
        out[0] = 1.0
        return out
    ratio = mean / (1.0 + mean)
    if ratio ** (cutoff + 1) >= eps:
        need = required_cutoff(mean, eps)
        raise TruncationError(f"cutoff {cutoff} leaves tail {ratio ** (cutoff + 1):.2e} >= {eps:.0e}; "
                              f"need cutoff >= {need}", required_cutoff=need)
    k = np.arange(cutoff + 1)
    p = ratio**k / (1.0 + mean)
    return p / p.sum()


def two_mode_basis(n_max: int):
    """States |n1, n2> with n1 + n2 <= n_max, grouped by total N then by n2."""
    return [(n - k, k) for n in range(n_max + 1) for k in range(n + 1)]


def _block_offsets(n_max):
    return [n * (n + 1) // 2 for n in range(n_max + 2)]


def rotation_block(theta: float, n: int) -> np.ndarray:
    """Action of the mode rotation on the N = n photon subspace.

    The rotation maps a1^dag -> cos a1^dag + sin a2^dag and
    a2^dag -> -sin a1^dag + cos a2^dag, so one-photon amplitudes transform
    with U(theta) = [[cos, -sin], [sin, cos]].  Column k is the image of
    |n-k, k>, expanded by multiplying out the rotated creation operators.
    """
    c, s = math.cos(theta), math.sin(theta)
    block = np.zeros((n + 1, n + 1))
    for k in range(n + 1):
        p = n - k
        # polynomial coefficients in powers of a2^dag
        poly1 = np.array([math.comb(p, j) * c ** (p - j) * s**j for j in range(p + 1)])
        poly2 = np.array([math.comb(k, j) * (-s) ** (k - j) * c**j for j in range(k + 1)])
        coeff = np.convolve(poly1, poly2)
        m = np.arange(n + 1)
        log_norm = 0.5 * (np.array([math.lgamma(n - mm + 1) + math.lgamma(mm + 1) for mm in m])
                          - (math.lgamma(p + 1) + math.lgamma(k + 1)))
        block[:, k] = coeff * np.exp(log_norm)
    return block


def mode_rotation_fock(theta: float, cutoff: int) -> np.ndarray:
    """Dense block-diagonal rotation unitary on the space with N <= 2 * cutoff."""
    if cutoff < 1:
        raise DomainError("cutoff must be at least 1")
    n_max = 2 * cutoff
    offs = _block_offsets(n_max)
    u = np.zeros((offs[-1], offs[-1]))
    for n in range(n_max + 1):
        u[offs[n]:offs[n + 1], offs[n]:offs[n + 1]] = rotation_block(theta, n)
    return u


def thermal_two_mode(means, cutoff: int, theta: float = 0.0, tail_eps: float = TAIL_EPS) -> np.ndarray:
    """Two-mode thermal density matrix with covariance U(theta) diag(means) U(theta)^T.

    ``tail_eps`` bounds the discarded single-mode tail; raising it allows
    deliberately coarse truncations for convergence studies.
    """
    p1 = thermal_fock(means[0], cutoff, tail_eps)
    p2 = thermal_fock(means[1], cutoff, tail_eps)
    n_max = 2 * cutoff
    offs = _block_offsets(n_max)
    rho = np.zeros((offs[-1], offs[-1]))
    for n in range(n_max + 1):
        diag = np.array([p1[n - k] * p2[k] if (n - k) <= cutoff and k <= cutoff else 0.0
                         for k in range(n + 1)])
        if theta == 0.0:
            blk = np.diag(diag)
        else:
            r = rotation_block(theta, n)
            blk = (r * diag) @ r.T
        rho[offs[n]:offs[n + 1], offs[n]:offs[n + 1]] = blk
    return rho


def state_from_covariance(gamma, cutoff: int) -> np.ndarray:
    """Two-mode Fock density matrix of the thermal state with 2x2 covariance ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2, 2):
        raise DomainError("the Fock oracle handles two modes only")
    d, r = np.linalg.eigh(0.5 * (gamma + gamma.T))
    if np.linalg.det(r) < 0:
        r[:, 1] *= -1.0
    d = np.clip(d, 0.0, None)
    theta = math.atan2(r[1, 0], r[0, 0])
    return thermal_two_mode((float(d[0]), float(d[1])), cutoff, theta)


def _fractional_powers(vals, s_grid):
    out = np.zeros((s_grid.size, vals.size))
    pos = vals > 0
    out[:, pos] = np.exp(np.outer(s_grid, np.log(vals[pos])))
    return out


def _block_ranges(rho):
    """Contiguous diagonal blocks of ``rho``; off-block entries must be exactly zero."""
    n = rho.shape[0]
    nz = np.abs(rho) > 0
    reach = np.arange(n)
    rows, cols = np.nonzero(nz)
    np.maximum.at(reach, rows, cols)
    np.maximum.at(reach, cols, rows)
    reach = np.maximum.accumulate(reach)
    ranges = []
    start = 0
    for i in range(n):
        if reach[i] == i:
            ranges.append((start, i + 1))
            start = i + 1
    return ranges


def _merge_ranges(a, b):
    cuts = sorted({stop for _, stop in a} & {stop for _, stop in b})
    out, start = [], 0
    for stop in cuts:
        out.append((start, stop))
        start = stop
    return out


def trace_powers(rho1, rho2, s_grid):
    """Tr(rho1^s rho2^(1-s)) on a grid of s, sharing one eigendecomposition per state.

    Both states are diagonalized block by block over their common block-diagonal
    structure (for example total photon number); this is an exact full
    eigendecomposition, only cheaper.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    for rho in (rho1, rho2):
        if np.abs(rho - rho.T).max() > 1e-12:
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > 1e-10:
            raise DomainError(f"density matrix trace {np.trace(rho)} differs from 1")
    ranges = _merge_ranges(_block_ranges(rho1), _block_ranges(rho2))
    parts = []
    for a, b in ranges:
        p, u = np.linalg.eigh(rho1[a:b, a:b])
        q, v = np.linalg.eigh(rho2[a:b, a:b])
        parts.append((p, q, (u.T @ v) ** 2))
    pmax = max(part[0].max() for part in parts)
    qmax = max(part[1].max() for part in parts)
    total = np.zeros(s_grid.size)
    for p, q, w in parts:
        p = np.where(p <= ZERO_RTOL * pmax, 0.0, p)
        q = np.where(q <= ZERO_RTOL * qmax, 0.0, q)
        if not (p.any() and q.any()):
            continue
        ps = _fractional_powers(p, s_grid)
        qs = _fractional_powers(q, 1.0 - s_grid)
        total += ((ps @ w) * qs).sum(axis=1)
    return total


def qcb_fock(rho1, rho2, s_grid=None):
    """Return ``(exponent, s_star)`` = ``-ln min_s Tr(rho1^s rho2^(1-s))`` over a uniform s grid."""
    if s_grid is None:
        s_grid = np.linspace(0.0, 1.0, ORACLE_S_POINTS)
    s_grid = np.asarray(s_grid, dtype=float)
    values = trace_powers(rho1, rho2, s_grid)
    k = int(np.argmin(values))
    return max(-math.log(values[k]), 0.0), float(s_grid[k])


def acceptance_family(seed: int = 20250611):
    """Preregistered 20 two-mode covariance pairs: 4 per rotation angle.

    Returns a list of dicts with keys ``means1``, ``means2``, ``theta``,
    ``gamma1``, ``gamma2``.  Occupancies are at most 0.5; some pairs include
    an empty mode to exercise the support convention.
    """
    rng = np.random.default_rng(seed)
    angles = (0.0, 0.3, 0.7, math.pi / 4, math.pi / 2)
    family = []
    for theta in angles:
        for rep in range(4):
            m = np.round(rng.uniform(0.0, 0.5, size=4), 3)
            if rep == 3:
                m[1] = 0.0
            means1 = (float(m[0]), float(m[1]))
            means2 = (float(m[2]), float(m[3]))
            u = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
            family.append({
                "means1": means1,
                "means2": means2,
                "theta": theta,
                "gamma1": np.diag(means1),
                "gamma2": u @ np.diag(means2) @ u.T,
            })
    return family


def oracle_exponent(entry, cutoff: int = 25, s_points: int = ORACLE_S_POINTS, tail_eps: float = TAIL_EPS):
    rho1 = thermal_two_mode(entry["means1"], cutoff, 0.0, tail_eps)
    rho2 = thermal_two_mode(entry["means2"], cutoff, entry["theta"], tail_eps)
    return qcb_fock(rho1, rho2, np.linspace(0.0, 1.0, s_points))
