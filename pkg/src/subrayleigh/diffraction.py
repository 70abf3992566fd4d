"""Thermal-field covariance matrices behind a Gaussian point-spread function.

Three constructions are provided:

* the exact position-basis kernel on a pixel grid of the image plane,
* exact Hermite-Gauss (HG) matrix elements up to a chosen mode order,
* the order-chi^2 subdiffraction expansion on the six lowest HG modes,
  ordered (00, 10, 01, 20, 11, 02), with its alpha/beta block split.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import DomainError, PreconditionError
from .source import IntensityGrid, NormalizedImage, SecondMoments

POSITION = "position"
HERMITE_GAUSS = "hermite_gauss"

HG6 = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
ALPHA_IDX = (0, 3, 4, 5)
BETA_IDX = (1, 2)

CHI_WARN = 0.2
CHI_MAX = 0.5


@dataclass(frozen=True)
class GaussianPsf:
    """Separable amplitude PSF psi(x) psi(y), with psi^2 a normal density of std sigma."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("psf sigma must be positive")

    def psi(self, x):
        s2 = self.sigma**2
        return (2.0 * math.pi * s2) ** -0.25 * np.exp(-np.asarray(x, dtype=float) ** 2 / (4.0 * s2))


@dataclass(frozen=True)
class CovMatrix:
    """Real symmetric mode-occupancy covariance of a zero-mean thermal state.

    ``psd_slack`` is the tolerated negative eigenvalue relative to the trace;
    series expansions that are only PSD up to their truncation order carry a
    larger slack than exact constructions.
    """

    entries: np.ndarray
    basis: str = HERMITE_GAUSS
    labels: tuple = ()
    I0: float = float("nan")
    chi: float | None = None
    psd_slack: float = 1e-10

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"covariance must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("covariance has non-finite entries")
        norm = np.linalg.norm(a)
        if np.linalg.norm(a - a.T) > 1e-12 * max(norm, 1e-300):
            raise DomainError("covariance is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        labels = tuple(self.labels) if self.labels else tuple(range(a.shape[0]))
        if len(labels) != a.shape[0]:
            raise DomainError("label count does not match matrix dimension")
        object.__setattr__(self, "labels", labels)
        if math.isnan(self.I0):
            object.__setattr__(self, "I0", float(np.trace(a)))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def is_psd(self) -> bool:
        scale = max(self.trace, np.abs(self.entries).max(initial=0.0), 1e-300)
        return self.min_eigenvalue() >= -self.psd_slack * scale

    def sub(self, idx, labels=None) -> "CovMatrix":
        idx = list(idx)
        block = self.entries[np.ix_(idx, idx)]
        lab = labels if labels is not None else tuple(self.labels[i] for i in idx)
        return CovMatrix(block, self.basis, lab, float(np.trace(block)), self.chi, self.psd_slack)


@dataclass(frozen=True)
class SubdiffCov:
    gamma_alpha: CovMatrix
    gamma_beta: CovMatrix
    I0: float
    chi: float


def hg_labels(max_order: int):
    """HG index pairs (s, t) with s + t <= max_order, ordered 00, 10, 01, 20, 11, 02, 30, ..."""
    return tuple((s, n - s) for n in range(max_order + 1) for s in range(n, -1, -1))


def default_output_axis(src_coords, sigma, n_out):
    lo = float(np.min(src_coords)) - 5.0 * sigma
    hi = float(np.max(src_coords)) + 5.0 * sigma
    return np.linspace(lo, hi, n_out)


def position_covariance(src: IntensityGrid, psf: GaussianPsf, out_x=None, out_y=None,
                        n_out: int = 32) -> CovMatrix:
    """Image-plane covariance on an output pixel grid.

    ``gamma[(l,m),(l',m')] = sum_ij I_ij psi(x_i-x_l) psi(x_i-x_l') psi(y_j-y_m) psi(y_j-y_m')``
    times the output pixel area, so that the trace tends to I0 on fine grids.
    Output modes are flattened with the x index running slowest.
    """
    if out_x is None:
        out_x = default_output_axis(src.x_coords, psf.sigma, n_out)
    if out_y is None:
        out_y = default_output_axis(src.y_coords, psf.sigma, n_out)
    out_x = np.asarray(out_x, dtype=float)
    out_y = np.asarray(out_y, dtype=float)
    if out_x.size < 2 or out_y.size < 2:
        raise DomainError("output grid needs at least 2 points per axis")
    dxo = float(np.mean(np.diff(out_x)))
    dyo = float(np.mean(np.diff(out_y)))
    root_measure = math.sqrt(abs(dxo * dyo))

    px = psf.psi(src.x_coords[:, None] - out_x[None, :])  # (nx_src, nx_out)
    py = psf.psi(src.y_coords[:, None] - out_y[None, :])
    ii, jj = np.nonzero(src.pixel_values)
    weights = src.pixel_values[ii, jj]
    labels = tuple((float(a), float(b)) for a in out_x for b in out_y)
    dim = out_x.size * out_y.size
    if weights.size == 0:
        return CovMatrix(np.zeros((dim, dim)), POSITION, labels, 0.0)
    # rows: one image-plane amplitude vector per source pixel
    k = (px[ii][:, :, None] * py[jj][:, None, :]).reshape(ii.size, dim) * root_measure
    gamma = k.T @ (weights[:, None] * k)
    return CovMatrix(gamma, POSITION, labels, src.total_intensity)


def hg_covariance_exact(img: NormalizedImage, sigma: float, max_order: int = 2) -> CovMatrix:
    """Exact HG-basis covariance for a Gaussian PSF by pixel summation.

    Entry ((s,t),(s',t')) is
    ``I0 * sum rho * exp(-chi^2 (x^2+y^2)) (chi x)^(s+s') (chi y)^(t+t') / sqrt(s! s'! t! t'!)``
    with ``chi = scale_theta / (2 sigma)`` and dimensionless pixel coordinates.
    """
    if max_order < 2:
        raise DomainError("max_order must be at least 2")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    chi = img.scale_theta / (2.0 * sigma)
    u = chi * img.x
    v = chi * img.y
    w = img.density * np.exp(-(u[:, None] ** 2 + v[None, :] ** 2))
    pmax = 2 * max_order
    up = u[:, None] ** np.arange(pmax + 1)[None, :]  # (nx, P)
    vp = v[:, None] ** np.arange(pmax + 1)[None, :]
    power_sums = up.T @ w @ vp  # S[p, q] = sum w u^p v^q

    labels = hg_labels(max_order)
    fact = [math.factorial(k) for k in range(max_order + 1)]
    n = len(labels)
    gamma = np.empty((n, n))
    for a, (s, t) in enumerate(labels):
        for b, (s2, t2) in enumerate(labels):
            gamma[a, b] = power_sums[s + s2, t + t2] / math.sqrt(fact[s] * fact[s2] * fact[t] * fact[t2])
    gamma *= img.total_intensity_I0
    return CovMatrix(gamma, HERMITE_GAUSS, labels, img.total_intensity_I0, chi)


def _check_chi(chi):
    if not chi > 0:
        raise DomainError(f"chi must be positive, got {chi}")
    if chi > CHI_MAX:
        raise DomainError(f"chi={chi} is outside the subdiffraction expansion (max {CHI_MAX})")
    if chi > CHI_WARN:
        warnings.warn(f"chi={chi} > {CHI_WARN}: order-chi^2 expansion is inaccurate", RuntimeWarning,
                      stacklevel=3)


def hg_covariance_chi2(mom: SecondMoments, I0: float, chi: float) -> CovMatrix:
    """Six-mode HG covariance to order chi^2, ordered (00, 10, 01, 20, 11, 02)."""
    _check_chi(chi)
    c2 = chi * chi
    r2 = math.sqrt(2.0)
    g = np.zeros((6, 6))
    g[0, 0] = 1.0 - c2 * (mom.m20 + mom.m02)
    first_row = (chi * mom.m10, chi * mom.m01, c2 * mom.m20 / r2, c2 * mom.m11, c2 * mom.m02 / r2)
    g[0, 1:] = first_row
    g[1:, 0] = first_row
    g[1, 1] = c2 * mom.m20
    g[2, 2] = c2 * mom.m02
    g[1, 2] = g[2, 1] = c2 * mom.m11
    g *= I0
    # the truncated matrix has an O(chi^4) negative eigenvalue from the 00 row couplings
    coupling = mom.m10**2 + mom.m01**2 + 0.5 * mom.m20**2 + mom.m11**2 + 0.5 * mom.m02**2
    slack = 2.0 * c2 * c2 * (1.0 + coupling) / max(g[0, 0] / I0 if I0 > 0 else 1.0, 0.5)
    return CovMatrix(g, HERMITE_GAUSS, HG6, I0, chi, max(slack, 1e-10))


def split_blocks(cov6: CovMatrix) -> SubdiffCov:
    """Split a centered six-mode HG covariance into alpha (00,20,11,02) and beta (10,01) blocks."""
    if cov6.dim != 6:
        raise DomainError("split_blocks expects a 6x6 HG covariance")
    g = cov6.entries
    scale = max(abs(cov6.I0), 1e-300)
    bad = []
    for a in ALPHA_IDX:
        for b in BETA_IDX:
            if abs(g[a, b]) > 1e-10 * scale:
                bad.append(f"({HG6[a][0]}{HG6[a][1]},{HG6[b][0]}{HG6[b][1]})={g[a, b]:.3g}")
    if bad:
        raise PreconditionError("source is not centered; nonzero alpha-beta couplings: " + ", ".join(bad))
    alpha = cov6.sub(ALPHA_IDX)
    beta = cov6.sub(BETA_IDX)
    return SubdiffCov(alpha, beta, cov6.I0, cov6.chi if cov6.chi is not None else float("nan"))
