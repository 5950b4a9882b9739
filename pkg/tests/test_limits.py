from dataclasses import replace

import numpy as np
import pytest

from segwave.limits import (NoSignChange, choose_anchor, compare_with_limit, convergence_study,
                            interface_position, shift_align)
from segwave.model import lotka_volterra, reduce_to_scalar
from segwave.phaseplane import match_bistable
from segwave.system_wave import (ContinuationResult, DiscretizedWave, SolverConfig, continue_in_k,
                                 initial_guess_from_limit)

LV2 = lotka_volterra(alpha=2.0)
CFG = SolverConfig(L=20.0, N=1000)


@pytest.fixture(scope="module")
def limit():
    return match_bistable(reduce_to_scalar(LV2))


@pytest.fixture(scope="module")
def continuation(limit):
    cfg = replace(CFG, phase_anchor=choose_anchor(limit))
    return continue_in_k(LV2, cfg, initial_guess_from_limit(limit, 10.0, cfg), [10.0, 100.0, 1000.0])


def ramp_wave(center=0.0):
    grid = np.linspace(-10, 10, 401)
    phi = np.clip(0.5 - (grid - center) / 4, 0, 1)
    return DiscretizedWave(grid, phi, 1 - phi, 0.0, 1.0)


def test_align_identity_on_aligned_wave():
    w = ramp_wave()
    assert abs(interface_position(w, 1.0)) < 1e-14
    np.testing.assert_allclose(shift_align(w, 1.0).grid, w.grid, atol=1e-14)


def test_align_inverts_translation(continuation):
    w = continuation[-1]
    aligned = shift_align(w, 2.0)
    again = shift_align(w.shifted(3.7), 2.0)
    np.testing.assert_allclose(again.grid, aligned.grid, atol=1e-8)


def test_align_symmetric_crossing():
    w = shift_align(ramp_wave(center=1.3), 1.0)
    i = np.argmin(np.abs(w.grid))
    assert abs(w.grid[i]) < 1e-12
    assert abs(w.phi[i] - w.psi[i]) < 1e-12


def test_no_sign_change():
    g = np.linspace(-1, 1, 11)
    with pytest.raises(NoSignChange):
        interface_position(DiscretizedWave(g, np.ones(11), np.zeros(11), 0.0, 1.0), 1.0)


def test_limit_against_itself_is_zero(limit):
    w = DiscretizedWave(limit.xi_grid, limit.phi_values, limit.psi_values, limit.c_inf, np.inf)
    m = compare_with_limit(w, limit)
    assert m["sup_dist"] < 1e-12 and m["deriv_l1"] < 1e-9 and m["dc"] == 0.0


def test_metrics_nonnegative(limit, continuation):
    for w in continuation:
        m = compare_with_limit(w, limit)
        assert all(v >= 0 for v in m.values())


def test_translation_invariance(limit, continuation):
    base = convergence_study(LV2, CFG, limit=limit, continuation=continuation)
    rng = np.random.default_rng(5)
    moved = ContinuationResult([w.shifted(s) for w, s in zip(continuation, rng.uniform(-5, 5, len(continuation)))],
                               continuation.diagnostics)
    other = convergence_study(LV2, CFG, limit=limit, continuation=moved)
    for a, b in zip(base.rows, other.rows):
        for name in ("dc", "sup_dist", "deriv_l1", "segregation"):
            assert abs(getattr(a, name) - getattr(b, name)) < 1e-6


def test_convergence_trend(limit, continuation):
    rep = convergence_study(LV2, CFG, limit=limit, continuation=continuation)
    assert list(rep.column("k")) == sorted(rep.column("k"))
    for name in ("segregation", "dc", "sup_dist", "deriv_l1"):
        col = rep.column(name)
        assert np.all(np.diff(col) < 0), name
    assert rep.failure is None
    assert np.all(rep.column("tail_sup") < 1e-6)


def test_symmetric_speeds_vanish():
    rep = convergence_study(lotka_volterra(), SolverConfig(L=20.0, N=1000), [10.0, 100.0])
    assert rep.c_inf == 0.0
    assert np.all(np.abs(rep.column("c_k")) < 1e-6)


def test_anchor_choice(limit):
    # c_inf of LV alpha = 2 lies above the midpoint (c+ - c-)/2 = 0
    assert choose_anchor(limit) == "psi_half"
    assert choose_anchor(replace(limit, c_inf=-0.1)) == "phi_half"


def test_partial_report_keeps_failure(limit):
    cfg = replace(CFG, max_newton_iters=1, max_substeps=0)
    rep = convergence_study(LV2, cfg, [10.0, 1e6], limit=limit)
    assert rep.failure is not None
    assert len(rep.rows) < 2
