import math

import numpy as np
import pytest
import scipy.linalg as sla
from scipy import integrate, special
from hypothesis import given, settings, strategies as st

from spinmap.bloch import spin_state_vector
from spinmap.errors import OverdampedError
from spinmap.propagator import HilbertSpaceSpec, build_hamiltonian, simulate_spin_state
from spinmap.spectral import GappedDensity, OhmicDensity, discretize
from spinmap.tcl2 import (ZERO_RATES, Tcl2Rates, analytic_affine, analytic_bloch,
                          analytic_singular_values, modulation_terms, rates_from_spectral_density,
                          renormalized_frequency, solve_tcl2_ode, sorted_singular_values)


def augmented_propagator(delta, r, t):
    """exp of the affine generator written out from the equations of motion."""
    g = np.zeros((4, 4))
    g[0, 0], g[0, 3] = -r.gamma_xx, -r.gamma_x
    g[1, 1], g[1, 2] = -r.gamma_yy, -(2 * delta - r.gamma_yz)
    g[2, 1] = 2 * delta
    e = sla.expm(g * t)
    return e[:3, :3], e[:3, 3]


rates_st = st.builds(
    lambda gx, g, gyy, gyz: Tcl2Rates(gx, g, gyy, gyz),
    st.floats(0.01, 1.0), st.floats(-1.0, 1.0), st.floats(0.0, 1.0), st.floats(-1.0, 1.0),
)


def test_renormalized_frequency_values():
    assert renormalized_frequency(1.0, ZERO_RATES) == 2.0
    assert renormalized_frequency(0.7, ZERO_RATES) == pytest.approx(1.4)
    r = Tcl2Rates(0.1, 0.1, 0.2, 0.1)
    assert renormalized_frequency(1.0, r) == pytest.approx(0.5 * math.sqrt(15.16), rel=1e-15)
    with pytest.raises(OverdampedError):
        renormalized_frequency(1.0, Tcl2Rates(0.1, 0.1, 0.0, 2.0))
    with pytest.raises(OverdampedError):
        renormalized_frequency(1.0, Tcl2Rates(0.1, 0.1, 5.0, 0.0))


def test_identity_at_t0():
    M, b = analytic_affine(1.0, Tcl2Rates(0.3, 0.2, 0.4, 0.1), 0.0)
    assert np.array_equal(M[0], np.eye(3)) and np.array_equal(b[0], np.zeros(3))
    S = analytic_singular_values(1.0, Tcl2Rates(0.3, 0.2, 0.4, 0.1), 0.0)
    assert all(s[0] == pytest.approx(1.0, abs=1e-15) for s in S)
    A, B = modulation_terms(1.0, Tcl2Rates(0.3, 0.2, 0.4, 0.1), 0.0)
    assert A[0] == 2.0 and B[0] == 1.0


def test_zero_rates_are_rabi_rotation():
    t = np.linspace(0, 10, 101)
    M, b = analytic_affine(1.0, ZERO_RATES, t)
    c, s = np.cos(2 * t), np.sin(2 * t)
    assert np.allclose(M[:, 1, 1], c, atol=1e-15) and np.allclose(M[:, 2, 2], c, atol=1e-15)
    assert np.allclose(M[:, 2, 1], s, atol=1e-15) and np.allclose(M[:, 1, 2], -s, atol=1e-15)
    assert np.all(b == 0)
    sol = solve_tcl2_ode(1.0, ZERO_RATES, [0, 0, 1], t)
    assert np.max(np.abs(sol.bloch()[:, 2] - np.cos(2 * t))) < 1e-8


def test_x_channel():
    r = Tcl2Rates(0.4, 0.3, 0.2, 0.1)
    t = np.linspace(0, 5, 11)
    M, b = analytic_affine(1.0, r, t)
    assert np.allclose(M[:, 0, 0], np.exp(-0.4 * t), rtol=1e-15)
    assert np.allclose(np.abs(b[:, 0]), 0.75 * (1 - np.exp(-0.4 * t)), rtol=1e-14)
    assert np.allclose(analytic_singular_values(1.0, r, t)[2], np.exp(-0.4 * t))


@settings(max_examples=200, deadline=None)
@given(rates_st, st.floats(0.2, 3.0), st.floats(0.0, 20.0))
def test_closed_form_is_exact_solution(r, delta, t):
    try:
        renormalized_frequency(delta, r)
    except OverdampedError:
        return
    M, b = analytic_affine(delta, r, t)
    M_ref, b_ref = augmented_propagator(delta, r, t)
    assert np.max(np.abs(M[0] - M_ref)) < 1e-10
    assert np.max(np.abs(b[0] - b_ref)) < 1e-10


@settings(max_examples=200, deadline=None)
@given(rates_st, st.floats(0.2, 3.0), st.floats(0.0, 20.0))
def test_singular_values_match_numerical_svd(r, delta, t):
    try:
        renormalized_frequency(delta, r)
    except OverdampedError:
        return
    M, _ = analytic_affine(delta, r, t)
    s_num = np.linalg.svd(M[0], compute_uv=False)
    assert np.max(np.abs(sorted_singular_values(delta, r, t)[0] - s_num)) < 1e-10
    sp, sm, _ = analytic_singular_values(delta, r, t)
    assert sp[0] * sm[0] == pytest.approx(math.exp(-r.gamma_yy * t), rel=1e-9, abs=1e-300)


@settings(max_examples=50, deadline=None)
@given(rates_st, st.floats(0.5, 2.0), st.integers(0, 2**32 - 1))
def test_ode_matches_closed_form(r, delta, seed):
    try:
        renormalized_frequency(delta, r)
    except OverdampedError:
        return
    a0 = np.random.default_rng(seed).normal(size=3)
    a0 /= max(1.0, np.linalg.norm(a0))
    t = np.linspace(0, 10, 51)
    sol = solve_tcl2_ode(delta, r, a0, t, rtol=1e-12, atol=1e-12)
    assert np.max(np.abs(sol.bloch() - analytic_bloch(delta, r, a0, t))) < 1e-8


def test_fixed_point():
    r = Tcl2Rates(0.5, 0.2, 0.6, 0.1)
    a = analytic_bloch(1.0, r, [0.3, 0.1, -0.4], 200.0)[0]
    assert np.allclose(a, [-0.4, 0, 0], atol=1e-12)
    sol = solve_tcl2_ode(1.0, r, [0.3, 0.1, -0.4], np.array([0.0, 100.0]))
    assert np.allclose(sol.bloch()[-1], [-0.4, 0, 0], atol=1e-9)


def test_ode_time_dependent_rates():
    r = Tcl2Rates(0.5, 0.2, 0.6, 0.1)
    t = np.linspace(0, 5, 21)
    const = solve_tcl2_ode(1.0, lambda _t: r, [0, 0, 1], t)
    assert np.max(np.abs(const.bloch() - analytic_bloch(1.0, r, [0, 0, 1], t))) < 1e-8
    single = solve_tcl2_ode(1.0, r, [0, 0, 1], np.array([0.0]))
    assert np.allclose(single.bloch(), [[0, 0, 1]])


def ohmic_rates_oracle(alpha, wc, delta):
    w0 = 2 * delta
    x = w0 / wc
    gamma = math.pi * alpha * w0 * math.exp(-x)
    pv = 0.5 * w0 * (-math.exp(-x) * special.expi(x) + math.exp(x) * special.exp1(x))
    return gamma, 2 * alpha * pv


@pytest.mark.parametrize("alpha, wc, delta", [(0.1, 20.0, 1.0), (0.05, 1.0, 1.0), (0.3, 5.0, 0.7)])
def test_ohmic_rates_against_exponential_integrals(alpha, wc, delta):
    r = rates_from_spectral_density(OhmicDensity(alpha, wc), delta)
    gamma, gyz = ohmic_rates_oracle(alpha, wc, delta)
    assert r.gamma_xx == r.gamma_x == r.gamma_yy
    assert r.gamma_xx == pytest.approx(gamma, rel=1e-12)
    assert r.gamma_yz == pytest.approx(gyz, rel=1e-8)


def test_frozen_ohmic_rates():
    r = rates_from_spectral_density(OhmicDensity(0.1, 20.0), 1.0)
    assert r.gamma_xx == pytest.approx(0.5685261170389855, rel=1e-12)
    assert r.gamma_yz == pytest.approx(0.6966048602512164, rel=1e-9)


def test_gapped_rates_against_subtracted_pv():
    d = GappedDensity.spin_resonant(0.1)
    lo, hi = d.support()
    w0 = 2.0
    g = lambda w: d(w) * w0 / (w + w0)
    smooth, _ = integrate.quad(lambda w: (g(w) - g(w0)) / (w - w0), lo, hi, points=[w0],
                               epsabs=1e-14, epsrel=1e-12, limit=400)
    pv = smooth + g(w0) * math.log((hi - w0) / (w0 - lo))
    r = rates_from_spectral_density(d, 1.0)
    assert r.gamma_yz == pytest.approx(4 / math.pi * pv, rel=1e-8, abs=1e-12)
    assert r.gamma_xx == pytest.approx(2 * d(2.0), rel=1e-14)


def test_rates_vanish_and_scale_linearly():
    r0 = rates_from_spectral_density(OhmicDensity(0.0, 5.0), 1.0)
    assert list(r0) == [0.0, 0.0, 0.0, 0.0]
    for dens in (OhmicDensity(0.1, 5.0), GappedDensity.spin_resonant(0.1)):
        r1 = rates_from_spectral_density(dens, 1.0)
        r2 = rates_from_spectral_density(dens.scaled(2.0), 1.0)
        assert np.allclose(list(r2), list(r1.scaled(2.0)), rtol=1e-10, atol=0)


def test_rates_pole_outside_support():
    d = GappedDensity(0.2, unit=10.0)        # support starts far above 2 Delta
    r = rates_from_spectral_density(d, 1.0)
    assert r.gamma_xx == 0.0
    assert r.gamma_yz > 0


def test_weak_coupling_against_exact_propagation():
    alpha, delta = 0.05, 1.0
    dens = OhmicDensity(alpha, 1.0)
    bath = discretize(dens, 6)
    spec = HilbertSpaceSpec.uniform(bath, 4)
    h = build_hamiltonian(bath, delta, spec)
    exact = simulate_spin_state(h, spec, spin_state_vector(0, 0), 0.05, 60, 2)
    r = rates_from_spectral_density(dens, delta)
    tcl = analytic_bloch(delta, r, [0, 0, 1], exact.times)
    assert np.max(np.abs(tcl[:, 2] - exact.bloch()[:, 2])) <= 0.05
