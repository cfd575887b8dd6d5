import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from porous_obstacle.grid import (Field, GridSpec, MollifierSpec, forward_differences,
                                  gradient_sq_integral, laplacian, lp_norm, mollify, rho,
                                  rho_primitives)
from scipy.integrate import quad

import oracles


def sine(n):
    g = GridSpec(1, n)
    return Field.from_function(g, lambda x: np.sin(2 * np.pi * x))


def test_gridspec_basics():
    for d, n in [(1, 64), (2, 17), (2, 3)]:
        g = GridSpec(d, n)
        assert g.size == n ** d
        assert abs(g.h * n - 1.0) <= np.spacing(1.0)
    with pytest.raises(ValueError):
        GridSpec(3, 8)
    with pytest.raises(ValueError):
        GridSpec(1, 0)


def test_field_rejects_bad_values():
    g = GridSpec(2, 4)
    assert Field(g, np.arange(16.0)).values.shape == (4, 4)
    with pytest.raises(ValueError):
        Field(g, np.arange(15.0))
    with pytest.raises(ValueError):
        Field(g, np.full(16, np.nan))


def test_laplacian_constant_is_zero():
    g = GridSpec(2, 8)
    assert np.all(laplacian(Field(g, np.full(g.shape, 3.7))).values == 0)


def test_laplacian_sine_eigenvalue():
    f = sine(64)
    h = f.grid.h
    lam = -4 * math.sin(math.pi * h) ** 2 / h ** 2
    assert lam == pytest.approx(-39.446, abs=1e-3)
    np.testing.assert_allclose(laplacian(f).values, lam * f.values, atol=1e-11)


def test_laplacian_spike():
    g = GridSpec(1, 4)
    f = Field(g, [1.0, 0, 0, 0])
    np.testing.assert_array_equal(laplacian(f).values, [-32, 16, 0, 16])


def test_laplacian_matches_loop_oracle_2d():
    g = GridSpec(2, 6)
    v = np.random.default_rng(0).normal(size=g.shape)
    np.testing.assert_allclose(laplacian(Field(g, v)).values, oracles.laplacian(v, g), rtol=1e-13, atol=1e-10)


def test_gradient_sq_integral_examples():
    assert gradient_sq_integral(Field(GridSpec(1, 16), np.ones(16))) == 0
    f = sine(64)
    h = f.grid.h
    assert gradient_sq_integral(f) == pytest.approx(4 / h ** 2 * math.sin(math.pi * h) ** 2 / 2, rel=1e-12)
    assert gradient_sq_integral(f) == pytest.approx(19.723, abs=1e-3)


@given(st.integers(1, 2), st.integers(3, 12), st.integers(0, 2 ** 31))
def test_summation_by_parts(d, n, seed):
    g = GridSpec(d, n)
    rng = np.random.default_rng(seed)
    f, q = rng.normal(size=g.shape), rng.normal(size=g.shape)
    lhs = (laplacian(Field(g, f)).values * q).sum() * g.cell_volume
    rhs = -sum((a * b).sum() for a, b in zip(forward_differences(f, g.h, d),
                                             forward_differences(q, g.h, d))) * g.cell_volume
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (abs(rhs) + n ** 2))
    # random field: gradient integral equals -<f, Lap f>
    assert gradient_sq_integral(Field(g, f)) == pytest.approx(
        -(f * laplacian(Field(g, f)).values).sum() * g.cell_volume, rel=1e-10)


@given(st.integers(1, 2), st.integers(3, 12), st.integers(0, 2 ** 31))
def test_laplacian_mean_zero(d, n, seed):
    g = GridSpec(d, n)
    f = np.random.default_rng(seed).normal(size=g.shape)
    lap = laplacian(Field(g, f)).values
    assert abs(lap.sum()) <= 1e-12 * np.abs(lap).sum()


def test_lp_norm_examples():
    g = GridSpec(2, 8)
    assert lp_norm(g.zeros(), 2) == 0
    assert lp_norm(Field(g, np.full(g.shape, 2.0)), 3) == pytest.approx(2.0, rel=1e-14)
    assert lp_norm(sine(64), 2) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    with pytest.raises(ValueError):
        lp_norm(sine(8), 0.5)


@given(arrays(float, 16, elements=st.floats(-5, 5)), st.floats(1, 6), st.floats(0, 4))
def test_lp_norm_monotone_in_p(vals, p, dp):
    f = Field(GridSpec(1, 16), vals)
    assert lp_norm(f, p) <= lp_norm(f, p + dp) + 1e-12


def test_rho_is_a_probability_bump():
    mass = quad(lambda r: float(rho(r)), 0, 1, epsabs=1e-13)[0]
    assert mass == pytest.approx(1.0, abs=1e-6)
    r = np.linspace(-0.5, 1.5, 20001)
    vals = rho(r)
    assert vals.min() >= 0 and vals.max() <= 2
    assert np.all(vals[(r <= 0) | (r >= 1)] == 0)
    s, p1, p2 = rho_primitives()
    assert p1[-1] == pytest.approx(1.0, abs=1e-12)
    # P2(1) = int_0^1 P1 = 1 - int_0^1 s rho(s) ds
    assert p2[-1] == pytest.approx(1 - quad(lambda x: float(rho(x)) * x, 0, 1)[0], abs=1e-8)


def test_mollify_constant_and_mass():
    g = GridSpec(2, 16)
    c = Field(g, np.full(g.shape, 1.3))
    np.testing.assert_allclose(mollify(c, MollifierSpec(0.2)).values, 1.3, rtol=1e-13)
    f = Field(g, np.random.default_rng(1).uniform(size=g.shape))
    assert mollify(f, MollifierSpec(0.3)).integral() == pytest.approx(f.integral(), rel=1e-10)


def test_mollify_degenerate_width_is_identity():
    f = sine(32)
    with pytest.warns(RuntimeWarning):
        out = mollify(f, MollifierSpec(1e-3))
    np.testing.assert_array_equal(out.values, f.values)


def test_mollify_spike_direct_convolution():
    g = GridSpec(1, 32)
    spike = np.zeros(32)
    spike[0] = 1 / g.h   # unit mass
    theta = 0.2
    out = mollify(Field(g, spike), MollifierSpec(theta)).values
    # direct oracle: samples rho_theta(j h) normalised to unit grid mass, placed at index j
    w = np.array([rho(j * g.h / theta) / theta for j in range(32)])
    w = w / (w.sum() * g.h)
    np.testing.assert_allclose(out, w, rtol=1e-12, atol=1e-12)
    assert out.sum() * g.h == pytest.approx(1.0, rel=1e-12)


@given(st.integers(0, 2 ** 31), st.floats(0.05, 0.4))
def test_mollify_order_preserving(seed, theta):
    g = GridSpec(1, 24)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=g.shape)
    q = f + rng.uniform(0, 1, size=g.shape)
    a = mollify(Field(g, f), MollifierSpec(theta)).values
    b = mollify(Field(g, q), MollifierSpec(theta)).values
    assert np.all(a <= b + 1e-14)
