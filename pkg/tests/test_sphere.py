import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bondimass.sphere import FOUR_PI, integrate, make_grid, moment, moments, parse_shape


@pytest.fixture(scope="module")
def g16():
    return make_grid(16, 32)


def test_weights_sum_to_four_pi(g16):
    assert abs(g16.weights.sum() - FOUR_PI) < 1e-13


def test_cos_squared_integral(g16):
    assert abs(integrate(np.cos(g16.TH) ** 2, g16) - FOUR_PI / 3) < 1e-12


def test_minimal_grid_is_valid():
    g = make_grid(4, 4)
    assert g.shape == (4, 4)
    assert abs(g.weights.sum() - FOUR_PI) < 1e-13


@pytest.mark.parametrize("shape", [(3, 8), (8, 3), (8, 5), (0, 4)])
def test_invalid_sizes(shape):
    with pytest.raises(ValueError):
        make_grid(*shape)


def test_nodes_are_interior():
    for n in (4, 16, 24, 64):
        g = make_grid(n, 8)
        assert g.theta.min() > 0 and g.theta.max() < math.pi


def test_direction_moments_vanish(g16):
    for i in (1, 2, 3):
        assert abs(integrate(g16.direction(i), g16)) < 1e-12


def test_direction_is_unit(g16):
    s = sum(g16.direction(i) ** 2 for i in (1, 2, 3))
    assert np.max(np.abs(s - 1)) < 1e-15


def test_integrate_examples(g16):
    assert integrate(np.ones(g16.shape), g16) == pytest.approx(FOUR_PI, abs=1e-13)
    # int_0^pi sin^5 = 16/15
    assert integrate(np.sin(g16.TH) ** 4, g16) == pytest.approx(2 * math.pi * 16 / 15, abs=1e-12)
    assert abs(integrate(np.sin(g16.TH) * np.cos(g16.PS), g16)) < 1e-14


def test_integrate_rejects_non_finite(g16):
    v = np.ones(g16.shape)
    v[3, 4] = np.nan
    with pytest.raises(ValueError):
        integrate(v, g16)


def test_moment_examples(g16):
    m = 2.5
    assert moment(np.full(g16.shape, m), 0, g16) == pytest.approx(m, abs=1e-14)
    assert abs(moment(np.full(g16.shape, m), 3, g16)) < 1e-14
    assert moment(np.cos(g16.TH), 3, g16) == pytest.approx(1 / 3, abs=1e-14)


def test_parse_shape():
    assert parse_shape("24x48") == (24, 48)
    with pytest.raises(ValueError):
        parse_shape("24by48")


def test_doubling_changes_smooth_moments_little():
    f = lambda th, ps: np.exp(np.sin(th) * np.cos(ps)) * (1 + np.cos(th) ** 3)
    a, b = make_grid(24, 48), make_grid(48, 96)
    assert np.max(np.abs(moments(f(a.TH, a.PS), a) - moments(f(b.TH, b.PS), b))) < 1e-10


def test_psi_derivative_is_spectral():
    g = make_grid(12, 24)
    f = np.sin(g.TH) ** 3 * np.cos(3 * g.PS)
    np.testing.assert_allclose(g.d_psi(f), -3 * np.sin(g.TH) ** 3 * np.sin(3 * g.PS), atol=1e-13)
    np.testing.assert_allclose(g.d_psi(f, order=2), -9 * f, atol=1e-12)


@pytest.mark.parametrize("parity, f, df", [
    (1, lambda t, p: np.cos(t) ** 2 + np.sin(t) * np.cos(t) * np.cos(p),
     lambda t, p: -2 * np.cos(t) * np.sin(t) + np.cos(2 * t) * np.cos(p)),
    (-1, lambda t, p: np.sin(t) * np.cos(t) + np.cos(t) * np.sin(p),
     lambda t, p: np.cos(2 * t) - np.sin(t) * np.sin(p)),
])
def test_theta_derivative_respects_parity(parity, f, df):
    g = make_grid(24, 48)
    got = g.d_theta(f(g.TH, g.PS), parity=parity)
    np.testing.assert_allclose(got, df(g.TH, g.PS), atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 3))
def test_moment_is_linear(a, b, nu):
    g = make_grid(8, 16)
    f1 = np.cos(g.TH) ** 2 * np.sin(g.PS)
    f2 = np.sin(g.TH) * np.cos(2 * g.PS) + 1
    lhs = moment(a * f1 + b * f2, nu, g)
    rhs = a * moment(f1, nu, g) + b * moment(f2, nu, g)
    assert abs(lhs - rhs) < 1e-12 * (1 + abs(a) + abs(b))
