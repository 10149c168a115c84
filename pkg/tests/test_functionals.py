from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpe_norm.errors import RegimeError
from gpe_norm.functionals import (
    ConstantsTable, ProblemParams, classify, energy, fiber, gamma_exp, gn_constant, norm_tuple,
    pohozaev, sobolev_closed_form, sobolev_constant,
)
from gpe_norm.geometry import random_pair
from gpe_norm.radial import dilate_pair, make_grid


def test_gamma_exponent():
    assert gamma_exp(3, 6.0) == pytest.approx(6.0)
    assert gamma_exp(2, 4.0) == pytest.approx(2.0)
    assert gamma_exp(1, 2.0) == 0.0


def test_regime_flags(sub_params, crit_params):
    assert sub_params.regime == "subcritical"
    assert crit_params.critical
    assert crit_params.gamma_r == pytest.approx(6.0)


@pytest.mark.parametrize("kw", [
    {"p": 2.0}, {"p": 4.5}, {"q": 2.5}, {"q": 3.9}, {"alpha": 1.0}, {"nu": 0.0}, {"a": -1.0},
])
def test_validate_rejects(sub_params, kw):
    with pytest.raises(RegimeError):
        sub_params.replace(**kw).validate()


def test_validate_rejects_r_above_critical(crit_params):
    with pytest.raises(RegimeError):
        crit_params.replace(alpha=5.0).validate()


def test_validate_chain_message(sub_params):
    with pytest.raises(RegimeError, match="2<p<2\\+4/N<q<2\\*"):
        sub_params.replace(q=3.0).validate()


def test_fiber_matches_dilation(sub_params):
    g = make_grid(2, 30.0, 3001)
    pair = random_pair(g, np.random.default_rng(1), sub_params.a, sub_params.b, full_mass=True)
    for t in (0.7, 1.3):
        phi, _, _ = fiber(pair, sub_params, t)
        assert energy(dilate_pair(t, pair), sub_params) == pytest.approx(phi, rel=1e-4)


def test_fiber_derivative_is_pohozaev(sub_params):
    g = make_grid(2, 30.0, 1501)
    pair = random_pair(g, np.random.default_rng(2), sub_params.a, sub_params.b)
    _, d1, _ = fiber(pair, sub_params, 1.0)
    assert d1 == pytest.approx(pohozaev(pair, sub_params), rel=1e-12)


SUB = ProblemParams(2, 3.07, 6.43, 2.0, 2.0, 3.96, 0.245, 6.27, 0.599, 0.759)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rescaled_pair_lies_on_its_critical_points(seed):
    sub_params = SUB
    g = make_grid(2, 30.0, 801)
    pair = random_pair(g, np.random.default_rng(seed), sub_params.a, sub_params.b)
    fa = classify(pair, sub_params)
    nt = norm_tuple(pair, sub_params)
    for t in fa.critical_points:
        _, d1, _ = fiber(nt, sub_params, t)
        assert abs(d1) <= 1e-8 * nt.K * max(1.0, t)
    if fa.s_crit is not None and fa.t_crit is not None:
        assert fa.s_crit < fa.t_crit
        assert fa.phi_at_s < fa.phi_at_t


def test_sobolev_constant_matches_closed_form():
    for N in (3, 4):
        assert sobolev_constant(N) == pytest.approx(sobolev_closed_form(N), rel=1e-6)


def test_gn_constant_one_dimensional_cubic_quartic():
    # in N = 1, s = 4 the optimizer is sqrt(2) sech; C = 1/sqrt(3)
    assert gn_constant(1, 4.0) == pytest.approx(1 / math.sqrt(3), rel=1e-6)


def test_constants_table_cache(tmp_path):
    tab = ConstantsTable()
    s3 = tab.sobolev(3)
    path = tmp_path / "constants.json"
    tab.save(path)
    back = ConstantsTable.load(path)
    assert back.sobolev(3) == s3
    assert all(e["provenance"] == "cached" for e in back.entries.values())
