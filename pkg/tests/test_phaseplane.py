import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segwave import phaseplane as pp
from segwave.model import lotka_volterra, reduce_to_scalar, scalar_problem, skt
from segwave.phaseplane import (BracketInvalid, MinimalSpeedsNotOrdered, NoSemiWave, Outcome,
                                ShootOptions, flux_at_zero, free_boundary_residual, match_bistable,
                                match_speed, minimal_speed, profile_residual, shoot_semi_wave)

KPP = scalar_problem(alpha=1.0)  # d = 1, h = 0, g = z (1 - z) on the positive side
SYM = reduce_to_scalar(lotka_volterra())


@pytest.fixture(scope="module")
def lv2_wave():
    return match_bistable(reduce_to_scalar(lotka_volterra(alpha=2.0)))


@pytest.fixture(scope="module")
def sym_wave():
    return match_bistable(SYM)


def rk4_flux(c, alpha=1.0, eps=1e-4, h=1e-5):
    """Fixed-step RK4 in the (z, y) plane for d = 1, h = 0, g = z (1 - z/alpha)."""
    lam = 0.5 * (-c + math.sqrt(c * c + 4.0))  # d g'(alpha) = -1
    z, y = alpha - eps, -lam * eps

    def f(z, y):
        return -c - z * (1 - z / alpha) / y

    n = int(round((alpha - eps) / h))
    for _ in range(n):
        k1 = f(z, y)
        k2 = f(z - h / 2, y - h / 2 * k1)
        k3 = f(z - h / 2, y - h / 2 * k2)
        k4 = f(z - h, y - h * k3)
        y -= h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        z -= h
    return y


def test_shot_starts_at_equilibrium_with_zero_flux():
    for side, U in (("positive", 2.0), ("negative", -1.0)):
        shot = shoot_semi_wave(reduce_to_scalar(lotka_volterra(alpha=2.0)), side, 0.1)
        assert shot.z_samples[0] == U and shot.y_samples[0] == 0.0
        assert np.all(shot.y_samples <= 1e-12)
        assert shot.is_semi_wave


def test_symmetric_fluxes_agree_at_zero_speed():
    fp = flux_at_zero(SYM, "positive", 0.0)
    fn = flux_at_zero(SYM, "negative", 0.0)
    assert fp < 0
    assert abs(fp - fn) <= 1e-10 * abs(fp)


def test_energy_identity_at_zero_speed():
    # with c = h = 0, y^2 / 2 at z = 0 is the integral of d g over (0, U)
    assert math.isclose(flux_at_zero(KPP, "positive", 0.0), -math.sqrt(1.0 / 3.0), rel_tol=1e-8)
    p = reduce_to_scalar(lotka_volterra(d=2.0, r=0.5, alpha=1.0))
    # negative side: int_0^1 2 * 0.5 * w (1 - w) = 1/6
    assert math.isclose(flux_at_zero(p, "negative", 0.0), -math.sqrt(1.0 / 3.0), rel_tol=1e-8)


@pytest.mark.parametrize("c", [0.0, 0.5, -0.7])
def test_flux_matches_fixed_step_rk4(c):
    ref = rk4_flux(c)
    assert math.isclose(flux_at_zero(KPP, "positive", c), ref, rel_tol=1e-6)


def test_kpp_front_above_minimal_speed():
    shot = shoot_semi_wave(KPP, "positive", 3.0)
    assert shot.outcome is Outcome.FRONT
    with pytest.raises(NoSemiWave):
        flux_at_zero(KPP, "positive", 3.0)


def test_kpp_flux_vanishes_toward_minimal_speed():
    mags = [abs(flux_at_zero(KPP, "positive", c)) for c in (1.0, 1.9, 1.99, 1.999)]
    assert all(a > b for a, b in zip(mags, mags[1:]))
    assert mags[-1] < 0.05


def test_flux_monotone_in_speed():
    p = reduce_to_scalar(lotka_volterra(alpha=2.0))
    cs = (-0.5, 0.0, 0.5)
    pos = [flux_at_zero(p, "positive", c) for c in cs]
    neg = [flux_at_zero(p, "negative", c) for c in cs]
    # positive side: faster waves carry less flux; negative side the reverse
    assert pos[0] < pos[1] < pos[2] < 0
    assert neg[0] > neg[1] > neg[2]


def test_shoot_rejects_nonfinite_speed():
    with pytest.raises(ValueError):
        shoot_semi_wave(KPP, "positive", math.inf)
    with pytest.raises(ValueError):
        shoot_semi_wave(KPP, "sideways", 0.0)


def test_kpp_minimal_speed_and_certificate():
    res = minimal_speed(KPP, "positive")
    assert abs(res.c_star - 2.0) < 5e-3
    lo, hi = res.bracket
    assert lo <= res.c_star <= hi
    assert res.certificate[0].is_semi_wave and not res.certificate[1].is_semi_wave
    assert res.certificate[1].c - res.certificate[0].c < 2e-6


def test_minimal_speed_frame_shift():
    base = minimal_speed(KPP, "positive").c_star
    shifted = minimal_speed(scalar_problem(alpha=1.0, h_pos=0.7), "positive").c_star
    assert abs(shifted - 1.3) < 5e-3
    assert abs((base - 0.7) - shifted) < 1e-5


def test_negative_side_minimal_speed_lv():
    p = reduce_to_scalar(lotka_volterra(d=2.0, r=1.0))
    assert abs(minimal_speed(p, "negative").c_star - 2.0 * math.sqrt(2.0)) < 5e-3


def test_skt_linear_determinacy_positive_side():
    p = reduce_to_scalar(skt(alpha=1.0, d1=1.0, a11=0.5))
    assert abs(minimal_speed(p, "positive").c_star - 2.0) < 5e-3


def test_bracket_invalid_when_lower_bound_is_too_high(monkeypatch):
    monkeypatch.setattr(pp, "canonical_estimates", lambda br, n=1000: (2.5, 3.0))
    with pytest.raises(BracketInvalid) as err:
        minimal_speed(KPP, "positive")
    assert err.value.low_shot is not None and err.value.high_shot is not None


def test_bracket_invalid_past_hard_cap(monkeypatch):
    monkeypatch.setattr(pp, "canonical_estimates", lambda br, n=1000: (0.5, 1.0))
    with pytest.raises(BracketInvalid):
        minimal_speed(KPP, "positive", ShootOptions(hard_cap=1.0))


def test_upper_bracket_grows_when_estimate_is_loose(monkeypatch):
    monkeypatch.setattr(pp, "canonical_estimates", lambda br, n=1000: (0.5, 1.0))
    assert abs(minimal_speed(KPP, "positive").c_star - 2.0) < 5e-3


def test_assumption_violated_raises():
    # opposite advections push both minimal speeds across each other
    p = scalar_problem(alpha=1.0, h_pos=3.0, h_neg=-3.0)
    with pytest.raises(MinimalSpeedsNotOrdered):
        match_bistable(p)


def test_symmetric_wave(sym_wave):
    assert abs(sym_wave.c_inf) <= 1e-8
    xi, z = sym_wave.xi_grid, sym_wave.z_values
    np.testing.assert_allclose(z, -z[::-1], atol=1e-6)
    assert math.isclose(sym_wave.dz_left / sym_wave.alpha, sym_wave.dz_right, rel_tol=1e-8)


def test_wave_shape(lv2_wave):
    w = lv2_wave
    xi, z = w.xi_grid, w.z_values
    assert z[np.argmin(np.abs(xi))] == 0.0
    assert np.all(np.diff(z) <= 0)
    assert abs(z[0] - w.alpha) < 1e-4 and abs(z[-1] + 1.0) < 1e-4
    assert np.all(np.minimum(w.phi_values, w.psi_values) == 0.0)
    assert np.all(w.phi_values * w.psi_values == 0.0)
    assert -w.c_star_minus + 1e-6 < w.c_inf < w.c_star_plus - 1e-6
    assert w.c_inf > 0


def test_wave_positive_speed_against_tightened_run(lv2_wave):
    tight = match_bistable(reduce_to_scalar(lotka_volterra(alpha=2.0)), ShootOptions().tightened(10.0))
    assert abs(tight.c_inf - lv2_wave.c_inf) < 2e-6


def test_profile_solves_the_limit_equation(lv2_wave):
    p = reduce_to_scalar(lotka_volterra(alpha=2.0))
    assert profile_residual(p, lv2_wave).max() < 1e-4


def test_free_boundary_relation():
    system = lotka_volterra(d=3.0, alpha=2.0)
    w = match_bistable(reduce_to_scalar(system))
    assert free_boundary_residual(w, system) < 1e-8 * abs(w.flux_at_zero)
    ratio = (-w.dz_right) / (w.dz_left / w.alpha)
    assert math.isclose(ratio, -2.0 / 3.0, rel_tol=1e-7)


def test_negative_speed_when_second_species_dominates():
    w = match_bistable(reduce_to_scalar(lotka_volterra(d=2.0, alpha=1.0)))
    assert w.c_inf < 0


def test_root_independent_of_initial_bracket():
    p = reduce_to_scalar(lotka_volterra(alpha=2.0))
    opts = ShootOptions()
    speeds = (minimal_speed(p, "positive").c_star, minimal_speed(p, "negative").c_star)
    a = match_speed(p, opts, speeds)["c_inf"]
    b = match_speed(p, opts, speeds, bracket=(-0.5, 1.5))["c_inf"]
    assert abs(a - b) < 2 * opts.speed_tol


def test_value_at_zero_is_never_read():
    p = reduce_to_scalar(lotka_volterra(d=1.4, alpha=1.2))
    a = match_bistable(p).c_inf
    b = match_bistable(p.with_zero_values(9.0, -4.0)).c_inf
    assert abs(a - b) < 2e-6


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(0.0, 1.0),
       st.floats(0.0, 1.0), st.booleans())
def test_flux_monotone_on_random_presets(alpha, d, r, a11, a22, use_skt):
    system = (skt(alpha=alpha, d1=d, d2=1.0, a11=a11, a22=a22, r=r) if use_skt
              else lotka_volterra(d=d, r=r, alpha=alpha))
    p = reduce_to_scalar(system)
    cs = np.linspace(-0.8, 0.8, 5)
    pos = [flux_at_zero(p, "positive", c) for c in cs]
    neg = [flux_at_zero(p, "negative", c) for c in cs]
    assert np.all(np.diff(pos) > 0) and np.all(np.diff(neg) < 0)
