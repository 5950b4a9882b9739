"""Comparison of finite-k waves with the segregated limit wave."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import CompetitionSystem, reduce_to_scalar
from .phaseplane import LimitWave, ProfileOptions, ShootOptions, match_bistable
from .system_wave import (ContinuationResult, DiscretizedWave, SolverConfig, continue_in_k,
                          initial_guess_from_limit)


class NoSignChange(ValueError):
    pass


def interface_position(wave: DiscretizedWave, alpha: float) -> float:
    """Zero of the linear interpolant of ``alpha phi - psi``."""
    z = alpha * wave.phi - wave.psi
    s = np.sign(z)
    idx = np.nonzero(s[:-1] * s[1:] <= 0)[0]
    idx = [i for i in idx if z[i] != z[i + 1]]
    if not idx:
        raise NoSignChange("alpha phi - psi does not change sign on the grid")
    i = idx[0]
    x = wave.grid
    return float(x[i] - z[i] * (x[i + 1] - x[i]) / (z[i + 1] - z[i]))


def shift_align(wave: DiscretizedWave, alpha: float) -> DiscretizedWave:
    """Translate the grid so that ``alpha phi - psi`` vanishes at ``xi = 0``."""
    return wave.shifted(-interface_position(wave, alpha))


def _slopes(xi, f):
    """Cell slopes of the piecewise-linear interpolant."""
    return np.diff(f) / np.diff(xi)


@dataclass
class ConvergenceRow:
    k: float
    c_k: float
    dc: float
    sup_dist: float
    deriv_l1: float
    segregation: float
    tail_sup: float
    tail_l1: float
    monotone_ok: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    c_inf: float
    flux: float
    c_star_plus: float
    c_star_minus: float
    limit: LimitWave | None = field(default=None, repr=False)
    waves: list[DiscretizedWave] = field(default_factory=list, repr=False)
    failure: str | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def compare_with_limit(wave: DiscretizedWave, limit: LimitWave, align: bool = True) -> dict:
    """Distances between one finite-k wave and the limit on the truncated domain.

    The common grid is the limit grid restricted to the solver domain, so the
    corner at ``xi = 0`` is a node and no cell straddles it.
    """
    w = shift_align(wave, limit.alpha) if align else wave
    lo, hi = w.grid[0], w.grid[-1]
    dx = limit.xi_grid[1] - limit.xi_grid[0]
    m_lo, m_hi = int(np.ceil(lo / dx)), int(np.floor(hi / dx))
    xi = dx * np.arange(m_lo, m_hi + 1)
    phi_k = np.interp(xi, w.grid, w.phi)
    psi_k = np.interp(xi, w.grid, w.psi)
    phi_l, psi_l = limit.phi(xi), limit.psi(xi)
    sup_dist = float(max(np.max(np.abs(phi_k - phi_l)), np.max(np.abs(psi_k - psi_l))))

    # derivatives of the interpolants, cell by cell; cells next to 0 give one-sided slopes of the limit
    h = np.diff(xi)
    l1 = float(np.sum((np.abs(_slopes(xi, phi_k) - _slopes(xi, phi_l))
                       + np.abs(_slopes(xi, psi_k) - _slopes(xi, psi_l))) * h))

    # what the truncated domain leaves out of the norms over the whole line; the limit is
    # monotone, so the L1 mass of its derivative beyond an end is the remaining drop in value
    lphi_lo, lpsi_lo = limit.phi(np.array([lo]))[0], limit.psi(np.array([lo]))[0]
    lphi_hi, lpsi_hi = limit.phi(np.array([hi]))[0], limit.psi(np.array([hi]))[0]
    tail_sup = float(max(1 - lphi_lo, lpsi_lo, lphi_hi, 1 - lpsi_hi))
    tail_l1 = float((1 - lphi_lo) + lpsi_lo + lphi_hi + (1 - lpsi_hi))
    return {"sup_dist": sup_dist, "deriv_l1": l1, "tail_sup": tail_sup, "tail_l1": tail_l1,
            "segregation": w.segregation, "dc": abs(w.c_k - limit.c_inf)}


def choose_anchor(limit: LimitWave) -> str:
    """``phi(0) = 1/2`` for slow waves, ``psi(0) = 1/2`` for fast ones."""
    return "phi_half" if limit.c_inf <= 0.5 * (limit.c_star_plus - limit.c_star_minus) else "psi_half"


def convergence_study(system: CompetitionSystem, config: SolverConfig, k_schedule=None,
                      opts: ShootOptions = ShootOptions(), popts: ProfileOptions = ProfileOptions(),
                      limit: LimitWave | None = None, auto_anchor: bool = True,
                      continuation: ContinuationResult | None = None) -> ConvergenceReport:
    """Limit wave once, finite-k waves along the schedule, and their distances per k."""
    schedule = list(config.k_schedule if k_schedule is None else k_schedule)
    if limit is None:
        limit = match_bistable(reduce_to_scalar(system), opts, popts)
    if auto_anchor:
        config = replace(config, phase_anchor=choose_anchor(limit))
    if continuation is None:
        guess = initial_guess_from_limit(limit, schedule[0], config)
        continuation = continue_in_k(system, config, guess, schedule)
    rows = []
    for wave in continuation.waves:
        m = compare_with_limit(wave, limit)
        rows.append(ConvergenceRow(wave.k, wave.c_k, m["dc"], m["sup_dist"], m["deriv_l1"], m["segregation"],
                                   m["tail_sup"], m["tail_l1"], wave.monotone_ok))
    rows.sort(key=lambda r: r.k)
    failure = None if continuation.failure is None else str(continuation.failure)
    return ConvergenceReport(rows, limit.c_inf, limit.flux_at_zero, limit.c_star_plus, limit.c_star_minus,
                             limit, list(continuation.waves), failure)
