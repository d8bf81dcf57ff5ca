import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from surfstefan.enthalpy import (EnthalpyRegularization, e_eps, e_eps_antiderivative,
                                 e_eps_prime, e_graph_contains, enthalpy_from_temperature,
                                 graph_distance, lipschitz_constant, u_eps, u_graph)

eps_values = st.sampled_from([0.2, 0.05, 0.01, 1e-3])
reals = st.floats(-50, 50, allow_nan=False)


def test_branches_away_from_ramp():
    reg = EnthalpyRegularization(0.1)
    assert e_eps(reg, -2.0) == -2.0
    assert e_eps(reg, 0.0) == 0.0
    assert e_eps(reg, 0.1) == pytest.approx(1.1, abs=1e-15)
    assert e_eps(reg, 3.0) == pytest.approx(4.0)


def test_ramp_midpoint():
    reg = EnthalpyRegularization(0.2)
    # smoothstep at s = 1/2 is 1/2
    assert e_eps(reg, 0.1) == pytest.approx(0.6)


def test_lipschitz_constant_matches_peak_slope():
    reg = EnthalpyRegularization(0.04)
    r = np.linspace(0, 0.04, 20001)
    assert lipschitz_constant(reg) == pytest.approx(37.5)
    assert e_eps_prime(reg, r).max() - 1.0 == pytest.approx(lipschitz_constant(reg), rel=1e-6)


def test_rejects_nonpositive_width():
    with pytest.raises(ValueError):
        EnthalpyRegularization(0.0)


@settings(max_examples=200, deadline=None)
@given(eps_values, reals)
def test_inverse_roundtrip(eps, r):
    reg = EnthalpyRegularization(eps)
    assert u_eps(reg, e_eps(reg, r)) == pytest.approx(r, abs=1e-12 * max(1.0, abs(r)))


@settings(max_examples=200, deadline=None)
@given(eps_values, reals, reals)
def test_monotone_with_slope_bounds(eps, a, b):
    reg = EnthalpyRegularization(eps)
    lo, hi = min(a, b), max(a, b)
    assert e_eps(reg, hi) - e_eps(reg, lo) >= hi - lo - 1e-12
    assert 1.0 <= e_eps_prime(reg, a) <= 1.0 + lipschitz_constant(reg) + 1e-12


@settings(max_examples=100, deadline=None)
@given(eps_values, st.floats(-2, 2))
def test_antiderivative_differentiates_to_e_eps(eps, r):
    reg = EnthalpyRegularization(eps)
    h = 1e-6 * eps
    fd = (e_eps_antiderivative(reg, r + h) - e_eps_antiderivative(reg, r - h)) / (2 * h)
    assert fd == pytest.approx(e_eps(reg, r), abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(eps_values, st.floats(-3, 3))
def test_regularized_graph_stays_within_eps_of_graph(eps, r):
    reg = EnthalpyRegularization(eps)
    assert graph_distance(r, e_eps(reg, r)) <= eps + 1e-15


def test_inverse_graph_flat_on_latent_interval():
    assert np.all(u_graph(np.array([0.0, 0.3, 1.0])) == 0.0)
    assert u_graph(-0.5) == -0.5
    assert u_graph(2.5) == 1.5


def test_graph_membership():
    assert e_graph_contains(0.0, 0.5)
    assert e_graph_contains(-1.0, -1.0)
    assert e_graph_contains(2.0, 3.0)
    assert not e_graph_contains(0.1, 0.5)
    assert e_graph_contains(1e-9, 1.0, tol=1e-8)
    assert graph_distance(0.0, 0.7) == 0.0


def test_branch_convention_for_temperature_data():
    out = enthalpy_from_temperature(np.array([-1.0, 0.0, 2.0]))
    assert out.tolist() == [-1.0, 0.0, 3.0]


def test_vectorized_and_scalar_agree():
    reg = EnthalpyRegularization(0.05)
    r = np.array([-0.3, 0.01, 0.03, 0.2])
    assert np.array_equal(e_eps(reg, r), [e_eps(reg, x) for x in r])
    assert isinstance(e_eps(reg, 0.02), float)
