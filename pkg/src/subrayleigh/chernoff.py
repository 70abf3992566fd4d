"""Quantum Chernoff exponents of zero-mean Gaussian (thermal) states.

States are described by their mode-occupancy covariance ``gamma`` (the
covariance of the Glauber P-function).  Matrix functions are applied through
the orthogonal eigendecomposition ``f(gamma) = U f(D) U^T``.

Fractional powers follow the support convention ``0**s == 0`` for every
``s`` in [0, 1], so rank-deficient states enter through their support
projector.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .diffraction import CovMatrix
from .errors import DomainError, PreconditionError
from .optimize import grid_golden

ZERO_EIG_RTOL = 1e-12
TRACE_RTOL = 1e-9
COMMUTE_TOL = 1e-8


@dataclass(frozen=True)
class GammaSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def kernel(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues == 0.0]


@dataclass(frozen=True)
class ChernoffResult:
    exponent: float
    s_star: float
    method: str
    theta0_star: float | None = None
    multimodal: bool = False

    def as_record(self) -> dict:
        return {
            "exponent": self.exponent,
            "s_star": self.s_star,
            "theta0_star": "" if self.theta0_star is None else self.theta0_star,
            "method": self.method,
        }


def as_cov(g) -> CovMatrix:
    return g if isinstance(g, CovMatrix) else CovMatrix(np.asarray(g, dtype=float))


def spectrum(g) -> GammaSpectrum:
    """Eigendecomposition with roundoff-level and in-slack negative eigenvalues set to 0."""
    cov = as_cov(g)
    d, u = np.linalg.eigh(cov.entries)
    scale = max(float(np.abs(d).max(initial=0.0)), abs(cov.trace), 1e-300)
    if d.size and d[0] < -cov.psd_slack * scale:
        raise DomainError(f"covariance is not positive semidefinite (min eigenvalue {d[0]:.3g})")
    d = np.where(d <= ZERO_EIG_RTOL * scale, 0.0, d)
    return GammaSpectrum(d, u)


def _check_pair(g1: CovMatrix, g2: CovMatrix):
    if g1.dim != g2.dim:
        raise DomainError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    if g1.basis != g2.basis:
        raise DomainError(f"basis mismatch: {g1.basis} vs {g2.basis}")


def _power(d, s):
    """Elementwise d**s with 0**s == 0 for all s (including s = 0)."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = np.exp(s * np.log(d[pos]))
    return out


def _log_g_and_lambda(d, s):
    """ln g_s(d) and lambda_s(d) for d >= 0, s in (0, 1], without cancellation.

    (d+1)^s - d^s = d^s * expm1(s * log1p(1/d)) for d > 0.
    """
    d = np.asarray(d, dtype=float)
    log_g = np.zeros_like(d)
    lam = np.ones_like(d)
    pos = d > 0
    if np.any(pos):
        dp = d[pos]
        em = np.expm1(s * np.log1p(1.0 / dp))
        log_g[pos] = -(s * np.log(dp) + np.log(em))
        lam[pos] = (2.0 + em) / em
    return log_g, lam


def g_func(x, s):
    """g_s(x) = 1 / ((x+1)^s - x^s)."""
    _check_s(s, x)
    log_g, _ = _log_g_and_lambda(np.atleast_1d(x), s)
    out = np.exp(log_g)
    return float(out[0]) if np.ndim(x) == 0 else out


def lambda_func(x, s):
    """lambda_s(x) = ((x+1)^s + x^s) / ((x+1)^s - x^s)."""
    _check_s(s, x)
    _, lam = _log_g_and_lambda(np.atleast_1d(x), s)
    return float(lam[0]) if np.ndim(x) == 0 else lam


def _check_s(s, x):
    if not (0.0 < s <= 1.0):
        raise DomainError(f"s must lie in (0, 1], got {s}; use endpoint limits at s = 0")
    if np.any(np.asarray(x) < 0):
        raise DomainError("x must be nonnegative")


class GaussianPair:
    """Two thermal states sharing a mode basis, with cached spectra."""

    def __init__(self, g1, g2):
        self.g1 = as_cov(g1)
        self.g2 = as_cov(g2)
        _check_pair(self.g1, self.g2)
        self.sp1 = spectrum(self.g1)
        self.sp2 = spectrum(self.g2)
        self.dim = self.g1.dim

    def _endpoint(self, kernel_of, other):
        # Tr(P rho_other): vacuum probability of `other` on the kernel modes
        k = kernel_of.kernel
        if k.shape[1] == 0:
            return 0.0
        sub = k.T @ other.entries @ k
        sign, logdet = np.linalg.slogdet(np.eye(k.shape[1]) + sub)
        return -logdet

    def log_q(self, s: float) -> float:
        """ln Q(s) = ln Tr(rho1^s rho2^(1-s)) from the Gaussian closed form."""
        if s <= 0.0:
            return self._endpoint(self.sp1, self.g2)
        if s >= 1.0:
            return self._endpoint(self.sp2, self.g1)
        lg1, lam1 = _log_g_and_lambda(self.sp1.eigenvalues, s)
        lg2, lam2 = _log_g_and_lambda(self.sp2.eigenvalues, 1.0 - s)
        u1, u2 = self.sp1.eigenvectors, self.sp2.eigenvectors
        # lambda blows up like 1/s near the endpoints; factor the larger side out
        # so the remaining determinant is det(1 + small PSD)
        if lam1.max() < lam2.max():
            lg1, lam1, u1, lg2, lam2, u2 = lg2, lam2, u2, lg1, lam1, u1
        w = u1.T @ u2
        inner = (w * lam2) @ w.T
        root = np.sqrt(lam1)
        inner = inner / root[:, None] / root[None, :]
        inner = 0.5 * (inner + inner.T) + np.eye(self.dim)
        sign, logdet = np.linalg.slogdet(inner)
        if sign <= 0:
            raise DomainError("lambda_s(g1) + lambda_1-s(g2) is not positive definite")
        return self.dim * math.log(2.0) + (lg1 - np.log(lam1)).sum() + lg2.sum() - logdet


def q_of_s(g1, g2, s: float) -> float:
    """Q(s) = 2^M det g_s(g1) det g_{1-s}(g2) / det(lambda_s(g1) + lambda_{1-s}(g2))."""
    if not (0.0 <= s <= 1.0):
        raise DomainError(f"s must lie in [0, 1], got {s}")
    return math.exp(GaussianPair(g1, g2).log_q(s))


def qcb_general(g1, g2) -> ChernoffResult:
    pair = GaussianPair(g1, g2)
    res = grid_golden(pair.log_q, (0.0, 1.0))
    return ChernoffResult(max(-res.fun, 0.0), res.x, "general", multimodal=res.multimodal)


def _overlap_weights(sp1: GammaSpectrum, sp2: GammaSpectrum):
    return (sp1.eigenvectors.T @ sp2.eigenvectors) ** 2


def trace_power_product(g1, g2, s: float) -> float:
    """tr(g1^s g2^(1-s)) with the support convention."""
    sp1, sp2 = spectrum(g1), spectrum(g2)
    return float(_power(sp1.eigenvalues, s) @ _overlap_weights(sp1, sp2) @ _power(sp2.eigenvalues, 1.0 - s))


def qcb_faint(g1, g2) -> ChernoffResult:
    """Faint-source limit: I0 - min_s tr(g1^s g2^(1-s)); needs equal traces."""
    c1, c2 = as_cov(g1), as_cov(g2)
    _check_pair(c1, c2)
    t1, t2 = c1.trace, c2.trace
    if abs(t1 - t2) > TRACE_RTOL * max(abs(t1), abs(t2), 1e-300):
        raise DomainError(f"faint-limit formula needs equal total intensities ({t1} vs {t2})")
    sp1, sp2 = spectrum(c1), spectrum(c2)
    w = _overlap_weights(sp1, sp2)
    p, q = sp1.eigenvalues, sp2.eigenvalues

    def tr_mix(s):
        return float(_power(p, s) @ w @ _power(q, 1.0 - s))

    res = grid_golden(tr_mix, (0.0, 1.0))
    return ChernoffResult(max(0.5 * (t1 + t2) - res.fun, 0.0), res.x, "faint", multimodal=res.multimodal)


def commute_check(g1, g2, tol: float = COMMUTE_TOL) -> bool:
    a, b = as_cov(g1).entries, as_cov(g2).entries
    if a.shape != b.shape:
        raise DomainError("dimension mismatch")
    comm = np.linalg.norm(a @ b - b @ a)
    return bool(comm <= tol * np.linalg.norm(a) * np.linalg.norm(b))


def common_eigenvalues(g1, g2, degeneracy_rtol: float = 1e-9):
    """Paired eigenvalues (x_i, y_i) of two commuting covariances in a shared eigenbasis."""
    a, b = as_cov(g1).entries, as_cov(g2).entries
    d, u = np.linalg.eigh(a)
    scale = max(np.abs(d).max(initial=0.0), 1e-300)
    basis = np.empty_like(u)
    start = 0
    n = d.size
    while start < n:
        stop = start + 1
        while stop < n and d[stop] - d[stop - 1] <= degeneracy_rtol * scale:
            stop += 1
        block = u[:, start:stop]
        _, v = np.linalg.eigh(block.T @ b @ block)
        basis[:, start:stop] = block @ v
        start = stop
    x = np.einsum("ij,jk,ki->i", basis.T, a, basis)
    y = np.einsum("ij,jk,ki->i", basis.T, b, basis)
    cov1 = as_cov(g1)
    cov2 = as_cov(g2)
    for vals, cov in ((x, cov1), (y, cov2)):
        sc = max(np.abs(vals).max(initial=0.0), 1e-300)
        if vals.min(initial=0.0) < -cov.psd_slack * sc:
            raise DomainError("covariance is not positive semidefinite")
    x = np.where(x <= ZERO_EIG_RTOL * max(np.abs(x).max(initial=0.0), 1e-300), 0.0, x)
    y = np.where(y <= ZERO_EIG_RTOL * max(np.abs(y).max(initial=0.0), 1e-300), 0.0, y)
    return x, y


def qcb_commuting(g1, g2) -> ChernoffResult:
    """ln max_s det((1+g1)^s (1+g2)^(1-s) - g1^s g2^(1-s)) in the common eigenbasis."""
    c1, c2 = as_cov(g1), as_cov(g2)
    _check_pair(c1, c2)
    if not commute_check(c1, c2, COMMUTE_TOL):
        raise PreconditionError("covariance matrices do not commute")
    x, y = common_eigenvalues(c1, c2)
    lx, ly = np.log1p(x), np.log1p(y)

    def neg_log_det(s):
        first = np.exp(s * lx + (1.0 - s) * ly)
        second = _power(x, s) * _power(y, 1.0 - s)
        return -float(np.log(first - second).sum())

    res = grid_golden(neg_log_det, (0.0, 1.0))
    return ChernoffResult(max(-res.fun, 0.0), res.x, "commuting", multimodal=res.multimodal)


def qcb(g1, g2) -> ChernoffResult:
    """Dispatch: commuting closed form when applicable, general formula otherwise."""
    if commute_check(g1, g2, COMMUTE_TOL):
        return qcb_commuting(g1, g2)
    return qcb_general(g1, g2)
