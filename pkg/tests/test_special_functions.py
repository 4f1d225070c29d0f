import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from sdbbm.special_functions import Q_UPPER_BOUND, dawson_core, q_function


def dawson_by_quadrature(z):
    val, _ = integrate.quad(lambda t: math.exp(t * t - z * z), 0.0, z, epsabs=0, epsrel=1e-13)
    return val


def q_by_quadrature(x):
    # original weakly singular form, y = u**2 removes the singularity
    val, _ = integrate.quad(lambda u: 2.0 * math.exp(u * u - x), 0.0, math.sqrt(x), epsabs=0, epsrel=1e-13)
    return math.sqrt(x) * val


@pytest.mark.parametrize("z", [1e-6, 0.1, 0.5, 0.9241388730, 1.0, 2.0, 3.5])
def test_dawson_matches_quadrature(z):
    assert dawson_core(z) == pytest.approx(dawson_by_quadrature(z), rel=1e-11)


@pytest.mark.parametrize("x", [1e-4, 0.3, 1.0, 2.26, 5.0, 10.0])
def test_q_matches_defining_integral(x):
    assert q_function(x) == pytest.approx(q_by_quadrature(x), rel=1e-10)


def test_dawson_large_argument_series():
    z = np.array([20.0, 50.0, 200.0])
    series = 1 / (2 * z) + 1 / (4 * z**3) + 3 / (8 * z**5)
    assert np.allclose(dawson_core(z), series, rtol=1e-9)


def test_dawson_ode():
    z = np.linspace(0.01, 6.0, 600)
    h = 1e-5
    deriv = (dawson_core(z + h) - dawson_core(z - h)) / (2 * h)
    assert np.allclose(deriv, 1 - 2 * z * dawson_core(z), atol=1e-8)


def test_known_values():
    assert q_function(0.0) == 0.0
    assert q_function(1.0) == pytest.approx(1.0761590138255368, abs=1e-12)
    assert abs(q_function(1e4) - 1.0) <= 1e-3


def test_scalar_and_array_shapes():
    assert isinstance(q_function(2.0), float)
    assert isinstance(dawson_core(2.0), float)
    out = q_function(np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert out.shape == (2, 2)


@pytest.mark.parametrize("bad", [-1.0, math.nan, math.inf, [0.0, -0.1]])
def test_domain_errors(bad):
    with pytest.raises(ValueError):
        q_function(bad)
    with pytest.raises(ValueError):
        dawson_core(bad)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=1e8, allow_nan=False))
def test_q_bounded(x):
    q = q_function(x)
    assert 0.0 <= q <= Q_UPPER_BOUND


def test_q_shape():
    x = np.linspace(0.0, 2.0, 400)
    assert np.all(np.diff(q_function(x)) > 0)
    tail = q_function(np.geomspace(10.0, 1e6, 200))
    assert np.all(tail > 1.0) and np.all(np.diff(tail) < 0)
