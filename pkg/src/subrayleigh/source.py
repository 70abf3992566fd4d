"""Intensity distributions, dimensionless normalization and second moments.

Pixel values are photons per frame already integrated over the pixel area,
so the total intensity is a plain sum.  Arrays are indexed ``[i, j]`` with
``i`` running along x and ``j`` along y.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import ndimage

from .errors import DomainError, InvalidSourceError, PreconditionError

CENTERING_TOL = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IntensityGrid:
    """Pixelated nonnegative intensity on a rectilinear grid."""

    pixel_values: np.ndarray
    x_coords: np.ndarray
    y_coords: np.ndarray
    pixel_dx: float
    pixel_dy: float

    def __post_init__(self):
        vals = _frozen(self.pixel_values)
        x = _frozen(self.x_coords)
        y = _frozen(self.y_coords)
        if vals.shape != (x.size, y.size):
            raise DomainError(
                f"pixel_values shape {vals.shape} does not match coords ({x.size}, {y.size})")
        if not np.all(np.isfinite(vals)):
            raise InvalidSourceError("pixel values must be finite")
        if np.any(vals < 0):
            raise InvalidSourceError("pixel values must be nonnegative")
        if not (self.pixel_dx > 0 and self.pixel_dy > 0):
            raise DomainError("pixel dimensions must be positive")
        object.__setattr__(self, "pixel_values", vals)
        object.__setattr__(self, "x_coords", x)
        object.__setattr__(self, "y_coords", y)

    @property
    def total_intensity(self) -> float:
        return float(self.pixel_values.sum())

    @property
    def shape(self):
        return self.pixel_values.shape

    def scaled(self, factor: float) -> "IntensityGrid":
        return IntensityGrid(self.pixel_values * factor, self.x_coords, self.y_coords,
                             self.pixel_dx, self.pixel_dy)


@dataclass(frozen=True)
class NormalizedImage:
    """Unit-mass density on dimensionless coordinates (physical / scale_theta)."""

    density: np.ndarray
    x: np.ndarray
    y: np.ndarray
    scale_theta: float
    total_intensity_I0: float

    def __post_init__(self):
        for name in ("density", "x", "y"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class SecondMoments:
    m10: float = 0.0
    m01: float = 0.0
    m20: float = 0.0
    m02: float = 0.0
    m11: float = 0.0

    def __post_init__(self):
        if self.m20 < -1e-12 or self.m02 < -1e-12:
            raise DomainError("second moments m20, m02 must be nonnegative")

    @property
    def matrix(self) -> np.ndarray:
        """Second-moment matrix [[m20, m11], [m11, m02]]."""
        return np.array([[self.m20, self.m11], [self.m11, self.m02]])

    @property
    def is_centered(self) -> bool:
        return abs(self.m10) < CENTERING_TOL and abs(self.m01) < CENTERING_TOL

    @classmethod
    def from_principal(cls, Vx, Vy, theta):
        m = rotation(theta) @ np.diag([Vx, Vy]) @ rotation(theta).T
        return cls(0.0, 0.0, float(m[0, 0]), float(m[1, 1]), float(0.5 * (m[0, 1] + m[1, 0])))


@dataclass(frozen=True)
class PrincipalFrame:
    Vx: float
    Vy: float
    theta: float

    def matrix(self) -> np.ndarray:
        u = rotation(self.theta)
        return u @ np.diag([self.Vx, self.Vy]) @ u.T


@dataclass(frozen=True)
class GridSpec:
    """Square pixel grid: ``n`` pixels per side spanning [-extent, extent]."""

    n: int = 65
    extent: float = 4.0

    def __post_init__(self):
        if self.n < 8:
            raise DomainError("grid resolution must be at least 8x8")
        if not self.extent > 0:
            raise DomainError("grid extent must be positive")

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.n)

    @property
    def step(self) -> float:
        return 2.0 * self.extent / (self.n - 1)


def rotation(theta: float) -> np.ndarray:
    """U(theta) = [[cos, -sin], [sin, cos]]."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def normalize(grid: IntensityGrid, scale_theta: float) -> NormalizedImage:
    if not scale_theta > 0:
        raise DomainError(f"scale_theta must be positive, got {scale_theta}")
    total = grid.total_intensity
    if not (np.isfinite(total) and total > 0):
        raise InvalidSourceError("source has zero total intensity")
    density = grid.pixel_values / total
    return NormalizedImage(density, grid.x_coords / scale_theta, grid.y_coords / scale_theta,
                           float(scale_theta), total)


def moments(img: NormalizedImage) -> SecondMoments:
    """Raw moments m^{s,t} = sum density * x^s * y^t up to second order."""
    rho = img.density
    x = img.x[:, None]
    y = img.y[None, :]
    px = rho.sum(axis=1)
    py = rho.sum(axis=0)
    m10 = float(px @ img.x)
    m01 = float(py @ img.y)
    m20 = float(px @ img.x**2)
    m02 = float(py @ img.y**2)
    m11 = float((rho * x * y).sum())
    return SecondMoments(m10, m01, m20, m02, m11)


def central_moments(img: NormalizedImage) -> SecondMoments:
    return moments(center(img))


def center(img: NormalizedImage) -> NormalizedImage:
    """Shift coordinates so the density centroid sits at the origin."""
    mom = moments(img)
    x = img.x - mom.m10
    y = img.y - mom.m01
    # one correction pass removes the O(eps) residue left by the first shift
    px = img.density.sum(axis=1)
    py = img.density.sum(axis=0)
    x = x - float(px @ x)
    y = y - float(py @ y)
    return NormalizedImage(img.density, x, y, img.scale_theta, img.total_intensity_I0)


def principal_frame(mom: SecondMoments) -> PrincipalFrame:
    """Eigen-decomposition of the centered second-moment matrix.

    ``theta`` lies in [0, pi/2) and is the direction of the eigenvector whose
    eigenvalue is reported as ``Vx``; ``Vy`` belongs to the orthogonal one.
    A degenerate (isotropic) matrix yields ``theta = 0``.
    """
    if not mom.is_centered:
        raise PreconditionError(
            f"moments are not centered (m10={mom.m10:.3g}, m01={mom.m01:.3g})")
    a, b, c = mom.m20, mom.m11, mom.m02
    half_tr = 0.5 * (a + c)
    half_diff = 0.5 * (a - c)
    radius = math.hypot(half_diff, b)
    scale = max(abs(a), abs(c), abs(b), 1e-300)
    if radius <= 1e-15 * scale:
        return PrincipalFrame(half_tr, half_tr, 0.0)
    vmajor = half_tr + radius
    vminor = half_tr - radius
    theta = 0.5 * math.atan2(b, half_diff)  # major axis, in (-pi/2, pi/2]
    if theta < 0.0:
        shifted = theta + 0.5 * math.pi
        if shifted >= 0.5 * math.pi:  # theta was a roundoff-level negative angle
            return PrincipalFrame(vmajor, vminor, 0.0)
        return PrincipalFrame(vminor, vmajor, shifted)
    if theta >= 0.5 * math.pi:
        return PrincipalFrame(vminor, vmajor, theta - 0.5 * math.pi)
    return PrincipalFrame(vmajor, vminor, theta)


def rotate_moments(mom: SecondMoments, phi: float) -> SecondMoments:
    """Exact rotation of the moments of an image rotated by ``phi``."""
    u = rotation(phi)
    first = u @ np.array([mom.m10, mom.m01])
    second = u @ mom.matrix @ u.T
    return SecondMoments(float(first[0]), float(first[1]), float(second[0, 0]),
                         float(second[1, 1]), float(0.5 * (second[0, 1] + second[1, 0])))


def rotate_grid(grid: IntensityGrid, phi: float) -> IntensityGrid:
    """Resample a grid rotated by ``phi`` about the origin (cubic spline).

    Total intensity is restored after resampling; negative spline overshoot
    is clipped.
    """
    x, y = grid.x_coords, grid.y_coords
    xx, yy = np.meshgrid(x, y, indexing="ij")
    c, s = math.cos(phi), math.sin(phi)
    # inverse rotation: where each output pixel came from
    xs = c * xx + s * yy
    ys = -s * xx + c * yy
    fi = (xs - x[0]) / grid.pixel_dx
    fj = (ys - y[0]) / grid.pixel_dy
    out = ndimage.map_coordinates(grid.pixel_values, [fi, fj], order=3, mode="constant", cval=0.0)
    out = np.clip(out, 0.0, None)
    total = out.sum()
    if total > 0:
        out *= grid.total_intensity / total
    return IntensityGrid(out, x, y, grid.pixel_dx, grid.pixel_dy)


def _nearest_index(coords, value):
    return int(np.argmin(np.abs(coords - value)))


def _deposit_segment(values, coords, length, angle, weight, step):
    n_samples = max(2, int(math.ceil(length / (step / 8.0))) + 1)
    t = np.linspace(-0.5 * length, 0.5 * length, n_samples)
    px = t * math.cos(angle)
    py = t * math.sin(angle)
    ii = np.rint((px - coords[0]) / step).astype(int)
    jj = np.rint((py - coords[0]) / step).astype(int)
    np.add.at(values, (ii, jj), weight / n_samples)


def make_source(kind: str, grid_spec: GridSpec | None = None, intensity: float = 1.0,
                **params) -> IntensityGrid:
    """Build a discretized source of total ``intensity`` photons per frame.

    kinds and their parameters (lengths in the grid's units, angles in rad):

    * ``point``
    * ``line``: ``length``, ``angle`` (0 = along x)
    * ``gaussian_blob``: ``sx``, ``sy``, ``angle``
    * ``cross``: ``arm_length``, ``arm_width``, ``angle``
    """
    spec = grid_spec or GridSpec()
    coords = spec.coords
    step = spec.step
    values = np.zeros((spec.n, spec.n))
    if not intensity > 0:
        raise DomainError("source intensity must be positive")

    if kind == "point":
        i0 = _nearest_index(coords, 0.0)
        values[i0, i0] = intensity
    elif kind == "line":
        length = float(params.get("length", 1.0))
        angle = float(params.get("angle", 0.0))
        if not length > 0:
            raise DomainError("line length must be positive")
        reach = 0.5 * length * max(abs(math.cos(angle)), abs(math.sin(angle)))
        if reach > spec.extent:
            raise DomainError(f"line of length {length} exceeds grid extent {spec.extent}")
        _deposit_segment(values, coords, length, angle, intensity, step)
    elif kind == "gaussian_blob":
        sx = float(params.get("sx", 1.0))
        sy = float(params.get("sy", sx))
        angle = float(params.get("angle", 0.0))
        if not (sx > 0 and sy > 0):
            raise DomainError("blob widths must be positive")
        if 4.0 * max(sx, sy) > spec.extent:
            raise DomainError("blob (4 sigma) exceeds grid extent")
        xx, yy = np.meshgrid(coords, coords, indexing="ij")
        c, s = math.cos(angle), math.sin(angle)
        u = c * xx + s * yy
        v = -s * xx + c * yy
        g = np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
        values = intensity * g / g.sum()
    elif kind == "cross":
        arm = float(params.get("arm_length", 2.0))
        width = float(params.get("arm_width", 0.2))
        angle = float(params.get("angle", 0.0))
        if not (arm > 0 and width > 0):
            raise DomainError("cross dimensions must be positive")
        if 0.5 * math.hypot(arm, width) > spec.extent:
            raise DomainError("cross exceeds grid extent")
        xx, yy = np.meshgrid(coords, coords, indexing="ij")
        c, s = math.cos(angle), math.sin(angle)
        u = c * xx + s * yy
        v = -s * xx + c * yy
        half_w = max(0.5 * width, 0.5 * step)
        bar_u = (np.abs(u) <= 0.5 * arm) & (np.abs(v) <= half_w)
        bar_v = (np.abs(v) <= 0.5 * arm) & (np.abs(u) <= half_w)
        mask = (bar_u | bar_v).astype(float)
        if mask.sum() == 0:
            raise DomainError("cross does not cover any pixel")
        values = intensity * mask / mask.sum()
    else:
        raise DomainError(f"unknown source kind {kind!r}")

    return IntensityGrid(values, coords, coords, step, step)
