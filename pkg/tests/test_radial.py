from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpe_norm.radial import (
    GridError, RadialField, dilate, grad_sq, make_grid, mass, norms, resample, sphere_area,
)


def test_sphere_area_values():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(4) == pytest.approx(2 * math.pi**2)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_gaussian_mass_converges(N):
    # int exp(-r^2) over R^N = pi^{N/2}
    exact = math.pi ** (N / 2)
    errs = []
    for M in (129, 257):
        g = make_grid(N, 8.0, M)
        errs.append(abs(g.integrate(np.exp(-g.r**2)) - exact))
    assert errs[-1] < 1e-7
    if errs[-1] > 1e-13:
        # at least fourth order in h
        assert errs[0] / errs[-1] > 14


@pytest.mark.parametrize("N", [1, 3])
def test_gradient_of_gaussian(N):
    # |grad e^{-r^2}|^2 integrates to N pi^{N/2} / 2^{N/2}
    g = make_grid(N, 8.0, 4001)
    f = RadialField(g, np.exp(-g.r**2))
    exact = N * math.pi ** (N / 2) / 2 ** (N / 2)
    assert grad_sq(f) == pytest.approx(exact, rel=1e-5)


def test_weights_nonnegative():
    for N in (1, 2, 3, 4):
        assert np.all(make_grid(N, 5.0, 64).w >= 0)


@pytest.mark.parametrize("bad", [(5, 1.0, 100), (3, -1.0, 100), (3, 1.0, 10), (3, 1.0, 100.5)])
def test_bad_grid(bad):
    with pytest.raises(GridError):
        make_grid(*bad)


def test_norms_rejects_unknown_mode():
    g = make_grid(1, 5.0, 100)
    f = RadialField(g, np.exp(-g.r**2))
    with pytest.raises(ValueError):
        norms(f, mode="sup")


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.6, 1.8), N=st.sampled_from([1, 2, 3, 4]))
def test_dilation_preserves_mass(t, N):
    g = make_grid(N, 20.0, 2001)
    f = RadialField(g, np.exp(-g.r**2), nonnegative=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ft = dilate(t, f)
    assert mass(ft) == pytest.approx(mass(f), rel=1e-7)
    assert grad_sq(ft) == pytest.approx(t**2 * grad_sq(f), rel=1e-4)


def test_resample_round_trip():
    g1 = make_grid(3, 10.0, 1001)
    g2 = make_grid(3, 10.0, 1501)
    f = RadialField(g1, np.exp(-g1.r**2))
    back = resample(resample(f, g2), g1)
    assert np.max(np.abs(back.values - f.values)) < 1e-7


def test_resample_dimension_mismatch():
    f = RadialField(make_grid(3, 5.0, 100), np.zeros(100))
    with pytest.raises(GridError):
        resample(f, make_grid(2, 5.0, 100))
