import math

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from segwave.model import lotka_volterra, potts_petrovskii, reduce_to_scalar, skt
from segwave.phaseplane import match_bistable
from segwave.limits import choose_anchor, shift_align
from segwave.system_wave import (DiscretizedWave, NewtonDiverged, SolverConfig, _pack, analytic_jacobian,
                                 continue_in_k, discrete_residual, fd_jacobian, initial_guess_from_limit,
                                 l2_estimate, solve_tw, trapezoid_mass)

LV2 = lotka_volterra(alpha=2.0)
SMALL = SolverConfig(L=20.0, N=800)


@pytest.fixture(scope="module")
def lv2_limit():
    return match_bistable(reduce_to_scalar(LV2))


@pytest.fixture(scope="module")
def sym_limit():
    return match_bistable(reduce_to_scalar(lotka_volterra()))


@pytest.fixture(scope="module")
def lv2_k100(lv2_limit):
    cfg = SolverConfig(phase_anchor=choose_anchor(lv2_limit))
    return solve_tw(LV2.with_k(100.0), 100.0, cfg, initial_guess_from_limit(lv2_limit, 100.0, cfg))


def solve_from_limit(system, limit, k, cfg):
    return solve_tw(system.with_k(k), k, cfg, initial_guess_from_limit(limit, k, cfg))


@pytest.mark.parametrize("state", [(1.0, 0.0), (0.0, 1.0)])
def test_equilibria_have_zero_interior_residual(state):
    grid = SMALL.grid
    n = len(grid) - 2
    for c in (-1.3, 0.0, 2.1):
        w = DiscretizedWave(grid, np.full(len(grid), state[0]), np.full(len(grid), state[1]), c, 50.0)
        R = discrete_residual(LV2.with_k(50.0), 50.0, w)
        assert len(R) == 2 * n + 5
        assert np.all(R[:2 * n] == 0.0)


def test_residual_linearization_near_equilibrium():
    grid = SMALL.grid
    M = len(grid)
    rng = np.random.default_rng(3)
    X = _pack(np.ones(M), np.zeros(M), 0.3)
    dX = 1e-6 * rng.standard_normal(len(X))
    system = LV2.with_k(10.0)
    w0 = DiscretizedWave(grid, X[:M], X[M:2 * M], X[-1], 10.0)
    w1 = DiscretizedWave(grid, (X + dX)[:M], (X + dX)[M:2 * M], (X + dX)[-1], 10.0)
    actual = np.linalg.norm(discrete_residual(system, 10.0, w1) - discrete_residual(system, 10.0, w0))
    predicted = np.linalg.norm(fd_jacobian(system, 10.0, grid, X, "phi_half") @ dX)
    assert predicted / 10 < actual < 10 * predicted


@pytest.mark.parametrize("system", [
    lotka_volterra(d=1.5, r=0.7, alpha=1.3),
    potts_petrovskii(d=1.2, gamma1=0.3, gamma2=-0.4),
    skt(alpha=1.4, d1=0.8, d2=1.1, a11=0.3, a12=0.6, a21=0.5, a22=0.2),
])
@pytest.mark.parametrize("anchor", ["phi_half", "psi_half"])
def test_analytic_jacobian_matches_finite_differences(system, anchor):
    grid = SMALL.grid
    M = len(grid)
    rng = np.random.default_rng(11)
    X = _pack(rng.uniform(0, 1, M), rng.uniform(0, 1, M), rng.uniform(-1, 1))
    Ja = analytic_jacobian(system.with_k(30.0), 30.0, grid, X, anchor).toarray()
    Jf = fd_jacobian(system.with_k(30.0), 30.0, grid, X, anchor).toarray()
    scale = np.maximum(np.abs(Ja).max(axis=0), 1.0)
    assert np.max(np.abs(Ja - Jf) / scale) < 1e-5


def test_symmetric_wave_has_zero_speed(sym_limit):
    w = solve_from_limit(lotka_volterra(), sym_limit, 10.0, SolverConfig())
    assert abs(w.c_k) < 1e-6
    a = shift_align(w, 1.0)
    # the reflected grid is off-node; a spline keeps the interpolation error below the tolerance
    inner = np.abs(a.grid) < a.grid[-1] - 1.0
    mirrored = CubicSpline(a.grid, a.psi)(-a.grid[inner])
    np.testing.assert_allclose(mirrored, a.phi[inner], atol=1e-6)


def test_lv_wave_at_k100(lv2_k100):
    w = lv2_k100
    assert w.residual_norm < 1e-9
    assert w.monotone_ok
    assert abs(w.phi[0] - 1) <= 1e-12 and abs(w.psi[0]) <= 1e-12
    assert abs(w.phi[-1]) <= 1e-12 and abs(w.psi[-1] - 1) <= 1e-12
    f = w.phi if w.anchor == "phi_half" else w.psi
    assert abs(np.interp(0.0, w.grid, f) - 0.5) < 1e-9


def test_normalization_integrals(lv2_k100):
    mphi, mpsi = trapezoid_mass(lv2_k100)
    assert abs(mphi + 1.0) < 1e-11 and abs(mpsi - 1.0) < 1e-11


def test_domain_doubling_leaves_speed(lv2_limit, lv2_k100):
    cfg = SolverConfig(L=80.0, N=8000, phase_anchor=lv2_k100.anchor)
    assert abs(solve_from_limit(LV2, lv2_limit, 100.0, cfg).c_k - lv2_k100.c_k) < 1e-4


def test_jacobian_modes_agree(lv2_limit):
    cfg = dict(L=20.0, N=800, phase_anchor=choose_anchor(lv2_limit))
    a = solve_from_limit(LV2, lv2_limit, 100.0, SolverConfig(jacobian="analytic", **cfg))
    b = solve_from_limit(LV2, lv2_limit, 100.0, SolverConfig(jacobian="fd", **cfg))
    assert abs(a.c_k - b.c_k) < 1e-8


def test_potts_petrovskii_l2_bound():
    system = potts_petrovskii(gamma1=0.3, gamma2=0.3)
    limit = match_bistable(reduce_to_scalar(system))
    w = solve_from_limit(system, limit, 100.0, SolverConfig())
    assert w.residual_norm < 1e-9
    lhs, bound = l2_estimate(system.with_k(100.0), w)
    assert 0 < lhs <= bound


def test_initial_guess_properties(lv2_limit):
    cfg = SolverConfig(phase_anchor="psi_half")
    g = initial_guess_from_limit(lv2_limit, 1e4, cfg)
    assert (g.phi[0], g.psi[0], g.phi[-1], g.psi[-1]) == (1.0, 0.0, 0.0, 1.0)
    assert g.c_k == lv2_limit.c_inf
    assert abs(np.interp(0.0, g.grid, g.psi) - 0.5) < 0.05
    assert g.segregation < 0.05
    sharp = initial_guess_from_limit(lv2_limit, 1e12, cfg)
    assert sharp.segregation < 1e-4


def test_newton_from_limit_guess_is_fast_at_large_k(lv2_limit):
    cfg = SolverConfig(phase_anchor=choose_anchor(lv2_limit))
    w = solve_from_limit(LV2, lv2_limit, 1e4, cfg)
    assert w.iterations <= 10


def test_single_step_continuation_equals_solve(lv2_limit):
    cfg = SolverConfig(L=20.0, N=800, phase_anchor=choose_anchor(lv2_limit))
    guess = initial_guess_from_limit(lv2_limit, 100.0, cfg)
    res = continue_in_k(LV2, cfg, guess, [100.0])
    direct = solve_tw(LV2.with_k(100.0), 100.0, cfg, guess)
    assert len(res) == 1 and res.failure is None
    np.testing.assert_array_equal(res[0].phi, direct.phi)
    assert res[0].c_k == direct.c_k


def test_continuation_schedule(lv2_limit):
    cfg = SolverConfig(phase_anchor=choose_anchor(lv2_limit))
    res = continue_in_k(LV2, cfg, initial_guess_from_limit(lv2_limit, 10.0, cfg))
    assert len(res) == 4 and res.failure is None
    seg = [d["segregation"] for d in res.diagnostics]
    assert all(a > b for a, b in zip(seg, seg[1:]))
    assert [w.k for w in res] == [10.0, 100.0, 1000.0, 10000.0]


def test_newton_failure_reports_trace(lv2_limit):
    cfg = SolverConfig(L=20.0, N=800, max_newton_iters=1, max_substeps=0)
    guess = initial_guess_from_limit(lv2_limit, 10.0, cfg)
    bad = DiscretizedWave(guess.grid, guess.phi, guess.psi, 5.0, 10.0)
    with pytest.raises(NewtonDiverged) as err:
        solve_tw(LV2.with_k(1e3), 1e3, cfg, bad)
    assert len(err.value.trace) >= 1 and err.value.k == 1e3
    res = continue_in_k(LV2, cfg, bad, [1e3, 1e4])
    assert len(res) == 0 and isinstance(res.failure, NewtonDiverged)


@pytest.mark.parametrize("kwargs", [
    {"L": 0.0}, {"N": 50}, {"phase_anchor": "middle"}, {"k_schedule": (100.0, 10.0)},
])
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_grid_is_uniform_and_symmetric():
    g = SolverConfig(L=5.0, N=100).grid
    assert len(g) == 102 and g[0] == -5.0 and g[-1] == 5.0
    assert math.isclose(np.ptp(np.diff(g)), 0.0, abs_tol=1e-13)
