import math

import pytest

from subrayleigh.errors import OptimizerError
from subrayleigh.optimize import golden_section, grid_golden


def test_quadratic_minimum():
    res = grid_golden(lambda x: (x - 0.3) ** 2)
    assert abs(res.x - 0.3) < 1e-9
    assert not res.multimodal


def test_monotone_returns_endpoint():
    assert grid_golden(lambda x: x).x == 0.0
    assert grid_golden(lambda x: -x).x == 1.0


def test_non_finite_objective_raises():
    with pytest.raises(OptimizerError) as info:
        grid_golden(lambda x: math.nan if x > 0.5 else x)
    assert info.value.x > 0.5


def test_multimodal_flag():
    res = grid_golden(lambda x: math.cos(6 * math.pi * x))
    assert res.multimodal
    assert res.fun == pytest.approx(-1.0)


def test_ties_keep_smallest():
    assert grid_golden(lambda x: 0.0).x == 0.0


def test_golden_section_on_interval():
    x, fx = golden_section(lambda t: (t - 2.5) ** 2, 2.0, 4.0)
    assert abs(x - 2.5) < 1e-9 and fx < 1e-17


def test_bad_interval():
    with pytest.raises(ValueError):
        grid_golden(lambda x: x, (1.0, 1.0))
