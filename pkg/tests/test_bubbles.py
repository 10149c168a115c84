from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from gpe_norm.bubbles import (
    bound_gap, bubble_asymptotics, bubble_constant, bubble_derivative, bubble_profile,
    build_bubbles, limit_curve, t_star, t_star_bisect, xi,
)
from gpe_norm.errors import RegimeError
from gpe_norm.functionals import ProblemParams, default_constants
from gpe_norm.radial import make_grid


def _crit(N, alpha, nu=1.0):
    ts = 2 * N / (N - 2)
    p = 2.2 if N == 3 else 2.1
    q = 4.0 if N == 3 else 3.5
    return ProblemParams(N, p, q, alpha, ts - alpha, 1.0, 1.0, nu, 0.1, 0.1)


def test_bubble_constants():
    assert bubble_constant(3) == pytest.approx(3 ** 0.25)
    assert bubble_constant(4) == pytest.approx(2 * math.sqrt(2))


@pytest.mark.parametrize("N", [3, 4])
def test_profile_continuous_with_compact_support(N):
    n = 7.0
    eps = 1e-12
    left, right = bubble_profile(N, n, [1 - eps, 1.0])
    assert left == pytest.approx(right, rel=1e-9)
    assert bubble_profile(N, n, [2.0, 3.0]).tolist() == [0.0, 0.0]
    r = np.array([0.3, 1.5])
    h = 1e-6
    fd = (bubble_profile(N, n, r + h) - bubble_profile(N, n, r - h)) / (2 * h)
    assert np.allclose(bubble_derivative(N, n, r), fd, rtol=1e-6)


@pytest.mark.parametrize("N", [3, 4])
def test_xi_closed_form(N):
    for n in (1.0, 10.0, 50.0):
        num = quad(lambda s: s ** (N - 1) * (1 + s * s) ** (-(N - 2)), 0, n, epsabs=0, epsrel=1e-12)[0]
        assert xi(N, n) == pytest.approx(num, rel=1e-10)


def test_xi_rejects_other_dimensions():
    with pytest.raises(RegimeError):
        xi(2, 3.0)


@settings(max_examples=30, deadline=None)
@given(N=st.sampled_from([3, 4]), frac=st.floats(0.2, 0.8), nu=st.floats(0.1, 10.0))
def test_t_star_matches_bisection(N, frac, nu):
    ts = 2 * N / (N - 2)
    P = _crit(N, 1.1 + frac * (ts - 2.2), nu)
    assert t_star(P) == pytest.approx(t_star_bisect(P), rel=1e-10)


def test_limit_curve_peaks_at_t_star():
    P = _crit(3, 3.0, 0.7)
    c = default_constants()
    t = t_star(P)
    top = float(limit_curve(P, c, t))
    assert top > float(limit_curve(P, c, 0.99 * t))
    assert top > float(limit_curve(P, c, 1.01 * t))


def test_bound_gap_four_dimensions():
    P = _crit(4, 2.0, 1.0)
    S = default_constants().sobolev(4)
    assert bound_gap(P, default_constants()) == pytest.approx(S**2 / 4, rel=1e-12)


def test_bubble_family_rates():
    fam = build_bubbles(3, [8, 16, 32, 64], make_grid(3, 4.0, 2001))
    assert all(row["quad_error"] < 1e-3 for row in fam.table.values())
    rep = bubble_asymptotics(fam)
    assert rep.grad_rate == pytest.approx(-1.0, rel=0.15)
    assert rep.crit_rate == pytest.approx(-3.0, rel=0.15)
    assert rep.xi_slope == pytest.approx(1.0, rel=0.15)
    mass = [fam.table[n]["mass"] for n in fam.n_values]
    assert np.all(np.diff(mass) < 0)


def test_build_rejects_bad_inputs():
    g = make_grid(3, 4.0, 200)
    with pytest.raises(RegimeError):
        build_bubbles(2, [4], make_grid(2, 4.0, 200))
    with pytest.raises(ValueError):
        build_bubbles(3, [4, 4], g)
    with pytest.raises(ValueError):
        build_bubbles(3, [4], make_grid(3, 1.5, 200))
