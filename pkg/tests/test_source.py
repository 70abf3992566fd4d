import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from subrayleigh.errors import DomainError, InvalidSourceError, PreconditionError
from subrayleigh.source import (GridSpec, IntensityGrid, PrincipalFrame, SecondMoments, center,
                                central_moments, make_source, moments, normalize, principal_frame,
                                rotate_grid, rotate_moments, rotation)


def _grid(values, x=None, y=None):
    values = np.asarray(values, dtype=float)
    x = np.arange(values.shape[0], dtype=float) if x is None else np.asarray(x, float)
    y = np.arange(values.shape[1], dtype=float) if y is None else np.asarray(y, float)
    return IntensityGrid(values, x, y, 1.0, 1.0)


def test_single_pixel_normalization():
    img = normalize(_grid([[3.0]], [0.0], [0.0]), 1.0)
    assert img.density.tolist() == [[1.0]]
    assert img.total_intensity_I0 == 3.0


def test_two_equal_pixels_normalize_to_half():
    img = normalize(_grid([[2.0, 2.0]], [0.0], [-1.0, 1.0]), 1.0)
    assert np.allclose(img.density, [[0.5, 0.5]])
    assert img.total_intensity_I0 == 4.0


def test_blob_density_sums_to_one_and_keeps_intensity():
    spec = GridSpec(64, 5.0)
    grid = make_source("gaussian_blob", spec, 2.5, sx=1.0)
    img = normalize(grid, 1.0)
    assert abs(img.density.sum() - 1.0) < 1e-12
    assert abs(img.total_intensity_I0 - 2.5) < 1e-12


def test_coords_are_divided_by_scale():
    grid = _grid([[1.0, 1.0]], [2.0], [-4.0, 4.0])
    img = normalize(grid, 2.0)
    assert img.x.tolist() == [1.0]
    assert img.y.tolist() == [-2.0, 2.0]


def test_zero_intensity_and_bad_scale_rejected():
    with pytest.raises(InvalidSourceError):
        normalize(_grid(np.zeros((2, 2))), 1.0)
    with pytest.raises(DomainError):
        normalize(_grid(np.ones((2, 2))), 0.0)


def test_negative_pixels_rejected():
    with pytest.raises(InvalidSourceError):
        _grid([[1.0, -0.1]])


def test_point_source_moments_vanish():
    grid = make_source("point", GridSpec(33, 2.0))
    m = moments(normalize(grid, 1.0))
    for v in (m.m10, m.m01, m.m20, m.m02, m.m11):
        assert abs(v) < 1e-15


def test_uniform_segment_variance_tends_to_one_twelfth():
    # midpoint samples of a unit segment: variance (1 - 1/n^2) / 12, Richardson-extrapolated
    def seg_var(n):
        x = (np.arange(n) + 0.5) / n - 0.5
        img = normalize(_grid(np.ones((n, 1)), x, [0.0]), 1.0)
        m = moments(img)
        assert m.m02 == 0.0 and m.m11 == 0.0
        return m.m20
    v1, v2 = seg_var(200), seg_var(400)
    assert abs(v2 - 1 / 12) < 1e-6
    richardson = (4 * v2 - v1) / 3
    assert abs(richardson - 1 / 12) < 1e-12


def test_gaussian_blob_unit_variance():
    grid = make_source("gaussian_blob", GridSpec(161, 6.0), sx=1.0, sy=0.5)
    m = central_moments(normalize(grid, 1.0))
    assert abs(m.m20 - 1.0) < 1e-6
    assert abs(m.m02 - 0.25) < 1e-6
    assert abs(m.m11) < 1e-12


def test_center_fixed_point_and_shift():
    grid = make_source("gaussian_blob", GridSpec(65, 4.0), sx=0.7)
    img = center(normalize(grid, 1.0))
    again = center(img)
    assert np.allclose(again.x, img.x, atol=1e-15) and np.allclose(again.y, img.y, atol=1e-15)

    shifted = normalize(_grid([[1.0]], [0.7], [0.0]), 1.0)
    c = center(shifted)
    assert abs(c.x[0]) < 1e-15


def test_center_asymmetric_pair():
    img = normalize(_grid([[1.0, 3.0]], [0.2], [-0.5, 1.5]), 1.0)
    m = moments(center(img))
    assert abs(m.m10) < 1e-12 and abs(m.m01) < 1e-12


def test_principal_frame_examples():
    pf = principal_frame(SecondMoments(0, 0, 2.0, 1.0, 0.0))
    assert (pf.Vx, pf.Vy, pf.theta) == (2.0, 1.0, 0.0)
    pf = principal_frame(SecondMoments(0, 0, 1.5, 1.5, 0.4))
    assert math.isclose(pf.Vx, 1.9) and math.isclose(pf.Vy, 1.1)
    assert math.isclose(pf.theta, math.pi / 4)


def test_principal_frame_degenerate_and_uncentered():
    pf = principal_frame(SecondMoments(0, 0, 0.7, 0.7, 0.0))
    assert pf.theta == 0.0 and pf.Vx == pf.Vy == 0.7
    with pytest.raises(PreconditionError):
        principal_frame(SecondMoments(0.1, 0, 1.0, 1.0, 0.0))


psd2 = st.tuples(st.floats(0, 5), st.floats(0, 5), st.floats(-math.pi, math.pi))


@given(psd2)
def test_principal_frame_round_trip(args):
    vx, vy, th = args
    mom = SecondMoments.from_principal(vx, vy, th)
    pf = principal_frame(mom)
    assert 0.0 <= pf.theta < math.pi / 2
    assert np.allclose(pf.matrix(), mom.matrix, atol=1e-12)
    assert abs(pf.Vx + pf.Vy - (mom.m20 + mom.m02)) < 1e-12
    assert abs(pf.Vx * pf.Vy - (mom.m20 * mom.m02 - mom.m11**2)) < 1e-12 * max(1.0, vx * vy)


@given(psd2, st.floats(-math.pi, math.pi))
def test_moment_rotation_preserves_trace(args, phi):
    mom = SecondMoments.from_principal(*args)
    rot = rotate_moments(mom, phi)
    assert abs((rot.m20 + rot.m02) - (mom.m20 + mom.m02)) < 1e-12
    assert rot.m20 * rot.m02 - rot.m11**2 >= -1e-12


def test_rotation_matrix_convention():
    assert np.allclose(rotation(math.pi / 2) @ [1.0, 0.0], [0.0, 1.0])


def test_make_source_kinds():
    spec = GridSpec(65, 4.0)
    point = make_source("point", spec)
    assert np.count_nonzero(point.pixel_values) == 1

    line = make_source("line", GridSpec(401, 2.0), length=1.0, angle=0.0)
    assert np.count_nonzero(line.pixel_values.sum(axis=0)) == 1  # one pixel row
    m = central_moments(normalize(line, 1.0))
    assert m.m02 / m.m20 < 1e-4

    blob = make_source("gaussian_blob", spec, sx=0.8, sy=0.8)
    mb = central_moments(normalize(blob, 1.0))
    assert abs(mb.m20 - mb.m02) < 1e-12 and abs(mb.m11) < 1e-12

    cross = make_source("cross", spec, arm_length=2.0, arm_width=0.25)
    assert cross.total_intensity == pytest.approx(1.0)


def test_make_source_extent_errors():
    spec = GridSpec(33, 1.0)
    with pytest.raises(DomainError):
        make_source("line", spec, length=5.0)
    with pytest.raises(DomainError):
        make_source("gaussian_blob", spec, sx=1.0)
    with pytest.raises(DomainError):
        make_source("cross", spec, arm_length=4.0)
    with pytest.raises(DomainError):
        make_source("ring", spec)


def _major_axis(pf):
    """(major variance, minor variance, major-axis angle mod pi); independent of the [0, pi/2) labeling."""
    if pf.Vx >= pf.Vy:
        return pf.Vx, pf.Vy, pf.theta % math.pi
    return pf.Vy, pf.Vx, (pf.theta + math.pi / 2) % math.pi


@pytest.mark.parametrize("phi", [0.3, 1.0, -0.6])
def test_resampled_rotation_moves_principal_angle(phi):
    grid = make_source("gaussian_blob", GridSpec(129, 6.0), sx=1.2, sy=0.6, angle=0.2)
    a0 = _major_axis(principal_frame(central_moments(normalize(grid, 1.0))))
    a1 = _major_axis(principal_frame(central_moments(normalize(rotate_grid(grid, phi), 1.0))))
    assert abs(a1[0] - a0[0]) < 1e-3 and abs(a1[1] - a0[1]) < 1e-3
    d = (a1[2] - a0[2] - phi) % math.pi
    assert min(d, math.pi - d) < 1e-3


def test_principal_frame_matrix_helper():
    pf = PrincipalFrame(2.0, 1.0, 0.0)
    assert np.allclose(pf.matrix(), np.diag([2.0, 1.0]))
