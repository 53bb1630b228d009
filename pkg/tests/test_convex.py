import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from transport_spde import convex
from transport_spde.convex import Piecewise, Power, Quadratic, Thermostat
from transport_spde.errors import DomainError


def brute_conjugate(j, s, t=0.0):
    """Independent oracle: dense grid scan followed by a bounded local polish."""
    grid = np.linspace(-60.0, 60.0, 240001)
    vals = s * grid - j.eval(t, grid)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 2, 0)], grid[min(i + 2, grid.size - 1)]
    res = minimize_scalar(lambda r: -(s * r - float(j.eval(t, r))), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return max(float(vals[i]), -float(res.fun))


POTENTIALS = [
    Quadratic(0.7),
    Power(4.0, 0.25),
    Power(1.5, 1.0),
    Piecewise([-1.0, 0.5], [-0.5, 0.0, 1.0], [1.0, 0.3, 2.0]),
    Thermostat(1.0, 0.5, 1.0),
    Power(4.0, 0.25).plus(Quadratic(0.1)),
    Quadratic(2.0).scaled(0.5),
]

potentials = st.sampled_from(POTENTIALS)
reals = st.floats(-5.0, 5.0, allow_nan=False)


@pytest.mark.parametrize("j", POTENTIALS, ids=lambda j: j.kind)
@pytest.mark.parametrize("s", [-3.0, -0.4, 0.0, 0.9, 2.5])
def test_conjugate_matches_brute_force(j, s):
    assert j.conjugate(0.0, s) == pytest.approx(brute_conjugate(j, s), abs=1e-7, rel=1e-8)


@given(potentials, reals, reals)
@settings(max_examples=300, deadline=None)
def test_fenchel_young_nonnegative(j, r, s):
    assert j.fenchel_gap(0.0, r, s) >= -1e-9


@given(potentials, reals)
@settings(max_examples=150, deadline=None)
def test_fenchel_young_equality_on_subgradient(j, r):
    s = float(j.section(0.0, r))
    assert abs(j.fenchel_gap(0.0, r, s)) <= 1e-8 * (1 + abs(r * s))


@given(potentials, st.floats(-3.0, 3.0), st.floats(0.01, 10.0))
@settings(max_examples=200, deadline=None)
def test_prox_inclusion(j, z, lam):
    x = float(j.prox(0.0, z, lam))
    lo, hi = j.subgradient(0.0, x)
    v = (z - x) / lam
    assert lo - 1e-9 * (1 + abs(v)) <= v <= hi + 1e-9 * (1 + abs(v))


@given(potentials, reals)
@settings(max_examples=60, deadline=None)
def test_biconjugate_recovers_potential(j, r):
    # sup_s (r s - j*(s)) over a grid polished by a bounded search
    f = lambda s: -(r * s - float(j.conjugate(0.0, s)))
    grid = np.linspace(-200.0, 200.0, 40001)
    vals = r * grid - j.conjugate(0.0, grid)
    i = int(np.argmax(vals))
    res = minimize_scalar(f, bounds=(grid[max(i - 2, 0)], grid[min(i + 2, grid.size - 1)]), method="bounded",
                          options={"xatol": 1e-13})
    assert max(float(vals[i]), -res.fun) == pytest.approx(float(j.eval(0.0, r)), abs=1e-7, rel=1e-9)


@given(potentials, st.lists(reals, min_size=2, max_size=2), st.floats(0.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_convexity_along_segments(j, pts, theta):
    a, b = pts
    mid = theta * a + (1 - theta) * b
    assert j.eval(0.0, mid) <= theta * j.eval(0.0, a) + (1 - theta) * j.eval(0.0, b) + 1e-10


@pytest.mark.parametrize("j", POTENTIALS, ids=lambda j: j.kind)
def test_growth_and_symmetry_bounds(j):
    r = np.linspace(-20, 20, 801)
    assert j.check_growth(0.0, r)
    assert j.check_symmetry(0.0, r)


def test_thermostat_subdifferential_at_zero():
    th = Thermostat(1.0, 0.5, 2.0)
    lo, hi = th.subgradient(0.0, 0.0)
    assert (lo, hi) == (-0.5, 1.0)
    # zero is a fixed point of the prox whenever 0 lies in the subdifferential
    assert th.prox(0.0, 0.0, 3.0) == 0.0


def test_thermostat_modulation_scales_relay():
    th = Thermostat(1.0, 2.0, 1.0, modulation=0.5, period=1.0)
    a1, a2 = th.alphas(0.25)
    assert (a1, a2) == pytest.approx((1.5, 3.0))


def test_power_conjugate_closed_form():
    j = Power(3.0, 2.0)
    s = np.array([-4.0, 1.0, 7.0])
    q = 1.5
    expected = (3.0 - 1.0) * 2.0 * (np.abs(s) / 6.0) ** q
    assert np.allclose(j.conjugate(0.0, s), expected, rtol=1e-14)


def test_time_weight_scales_everything():
    j = Quadratic(1.0, weight=lambda t: 2.0 + t)
    assert j.eval(1.0, 2.0) == pytest.approx(3.0 * 2.0)
    assert j.conjugate(1.0, 3.0) == pytest.approx(3.0 * 0.5 * 1.0)
    with pytest.raises(DomainError):
        Quadratic(1.0, weight=lambda t: -1.0).eval(0.0, 1.0)


def test_invalid_parameters_rejected():
    with pytest.raises(DomainError):
        Power(1.0)
    with pytest.raises(DomainError):
        Quadratic(0.0)
    with pytest.raises(DomainError):
        Piecewise([0.0], [1.0, 0.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        Thermostat(1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        Quadratic(1.0).prox(0.0, 1.0, 0.0)


@pytest.mark.parametrize("j", POTENTIALS[:5], ids=lambda j: j.kind)
def test_config_roundtrip(j):
    k = convex.from_config(j.config())
    r = np.linspace(-3, 3, 13)
    assert np.allclose(k.eval(0.0, r), j.eval(0.0, r))


def test_vectorized_and_scalar_agree():
    j = Power(4.0, 0.25)
    r = np.array([-1.5, 0.0, 2.0])
    assert all(math.isclose(float(j.eval(0.0, x)), v) for x, v in zip(r, j.eval(0.0, r)))
