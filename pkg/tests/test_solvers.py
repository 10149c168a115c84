from __future__ import annotations

import numpy as np
import pytest

from gpe_norm.functionals import ProblemParams, energy
from gpe_norm.geometry import h_profile
from gpe_norm.radial import FieldPair, RadialField, make_grid
from gpe_norm.scalar import scalar_ground_state
from gpe_norm.solvers import (
    RECORD_TOL, extract_multipliers, local_minimize, mountain_pass, multiplier_single,
)

SUB = ProblemParams(2, 3.07, 6.43, 2.0, 2.0, 3.96, 0.245, 6.27, 0.599, 0.759)


@pytest.fixture(scope="module")
def local_rec():
    return local_minimize(SUB, grid=make_grid(2, 40.0, 1024))


def test_local_minimizer_is_saturated_and_converged(local_rec):
    rec = local_rec
    assert rec.kind == "local_min"
    assert rec.mass_u == pytest.approx(SUB.a, rel=1e-10)
    assert rec.mass_v == pytest.approx(SUB.b, rel=1e-10)
    assert rec.kkt_residual < 1e-8
    assert rec.lambda1 > 0 and rec.lambda2 > 0
    assert rec.classification == "P_plus"
    assert rec.energy < 0
    assert abs(rec.pohozaev_residual) <= RECORD_TOL * rec.grad_norm_sq


def test_local_minimizer_inside_first_zero(local_rec):
    geo = h_profile(SUB)
    assert local_rec.flags["within_R0"]
    assert local_rec.grad_norm_sq < geo.R0**2


def test_multipliers_recomputed_from_fields(local_rec):
    l1, l2, ru, rv = extract_multipliers(local_rec.pair, SUB)
    assert l1 == pytest.approx(local_rec.lambda1, rel=1e-8)
    assert l2 == pytest.approx(local_rec.lambda2, rel=1e-8)
    assert ru.values.shape == local_rec.pair.u.values.shape


def test_record_serializes_without_fields(local_rec):
    d = local_rec.to_dict()
    assert "pair" not in d and "wall_time" not in d and "history" not in d
    assert d["energy"] == local_rec.energy


def test_energy_is_minimal_among_perturbations(local_rec):
    rec = local_rec
    g = rec.pair.grid
    rng = np.random.default_rng(0)
    for _ in range(5):
        bump = np.exp(-((g.r - rng.uniform(0, 5)) ** 2))
        bump[-1] = 0.0
        u = rec.pair.u.values + 1e-3 * bump
        u *= np.sqrt(SUB.a / g.integrate(u * u))
        pert = FieldPair(RadialField(g, u), rec.pair.v)
        assert energy(pert, SUB) >= rec.energy - 1e-12


def test_single_component_multiplier_of_soliton():
    P = ProblemParams(1, 4.0, 7.0, 2.0, 2.0, 1.0, 1.0, 1.0, 4.0, 1.0)
    sg = scalar_ground_state(4.0, 1.0, 4.0, 1)
    g = sg.profile.grid
    pair = FieldPair(sg.profile, RadialField(g, np.zeros(g.M)))
    lam, res = multiplier_single(pair, P, "u")
    assert lam == pytest.approx(sg.lam, rel=1e-6)
    with pytest.raises(ValueError):
        extract_multipliers(pair, P)


def test_mountain_pass_above_level_on_minus_manifold():
    geo = h_profile(SUB)
    base = local_minimize(SUB, geometry=geo, grid=make_grid(2, 40.0, 8192))
    rec, path = mountain_pass(SUB, None, geo, base)
    assert rec.kind == "mountain_pass"
    assert rec.energy >= geo.k0 > 0
    assert rec.classification == "P_minus"
    assert rec.mass_u == pytest.approx(SUB.a, rel=1e-8)
    assert rec.mass_v == pytest.approx(SUB.b, rel=1e-8)
    assert abs(rec.pohozaev_residual) <= RECORD_TOL * rec.grad_norm_sq
