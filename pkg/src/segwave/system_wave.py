"""Finite-k bistable traveling waves of the two-species system on a truncated line.

Unknowns are the nodal values of ``(phi, psi)`` on a uniform grid over
``[-L, L]`` (Dirichlet rows at both ends) and the speed ``c``; one extra row
pins the translation. The divergence term uses half-node fluxes, the first
order terms centered differences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import CompetitionSystem
from .phaseplane import LimitWave

log = logging.getLogger(__name__)


class NewtonDiverged(RuntimeError):
    def __init__(self, msg, trace=None, k=None):
        super().__init__(msg)
        self.trace = list(trace or [])
        self.k = k


@dataclass(frozen=True)
class SolverConfig:
    L: float = 40.0
    N: int = 4000
    newton_tol: float = 1e-9
    max_newton_iters: int = 30
    damping: float = 1.0 / 64.0  # smallest step fraction of the backtracking line search
    k_schedule: tuple[float, ...] = (10.0, 100.0, 1000.0, 10000.0)
    phase_anchor: str = "phi_half"
    bc_tol: float = 1e-12
    monotone_tol: float = 1e-8
    max_substeps: int = 6
    jacobian: str = "auto"  # auto / analytic / fd

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.N < 100:
            raise ValueError("N must be at least 100")
        if self.phase_anchor not in ("phi_half", "psi_half"):
            raise ValueError("phase_anchor must be 'phi_half' or 'psi_half'")
        if list(self.k_schedule) != sorted(self.k_schedule):
            raise ValueError("k_schedule must be increasing")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.N + 2)


@dataclass(frozen=True)
class DiscretizedWave:
    grid: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    c_k: float
    k: float
    residual_norm: float = float("nan")
    monotone_ok: bool = True
    iterations: int = 0
    anchor: str = "phi_half"
    trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def segregation(self) -> float:
        return float(np.max(self.phi * self.psi))

    def shifted(self, delta: float) -> "DiscretizedWave":
        """Same wave with the grid translated by ``delta``."""
        return replace(self, grid=self.grid + delta)


def _anchor_weights(grid: np.ndarray):
    """Index ``j`` and weight so that ``(1-t) f[j] + t f[j+1]`` interpolates ``f(0)``."""
    j = int(np.searchsorted(grid, 0.0, side="right") - 1)
    j = min(max(j, 0), len(grid) - 2)
    t = (0.0 - grid[j]) / (grid[j + 1] - grid[j])
    return j, float(t)


def _pack(wave_phi, wave_psi, c):
    return np.concatenate([wave_phi, wave_psi, [c]])


def _unpack(X, M):
    return X[:M], X[M:2 * M], float(X[2 * M])


def _residual(system: CompetitionSystem, k: float, grid: np.ndarray, X: np.ndarray, anchor: str) -> np.ndarray:
    M = len(grid)
    phi, psi, c = _unpack(X, M)
    dx = grid[1] - grid[0]
    D, H = system.D, system.H
    pu, pv = 0.5 * (phi[1:] + phi[:-1]), 0.5 * (psi[1:] + psi[:-1])
    dphi, dpsi = np.diff(phi) / dx, np.diff(psi) / dx
    f1 = D.f11(pu, pv) * dphi + D.f12(pu, pv) * dpsi
    f2 = D.f21(pu, pv) * dphi + D.f22(pu, pv) * dpsi
    u, v = phi[1:-1], psi[1:-1]
    gphi = (phi[2:] - phi[:-2]) / (2 * dx)
    gpsi = (psi[2:] - psi[:-2]) / (2 * dx)
    om = system.omega(u, v)
    r1 = (-np.diff(f1) / dx - (H.f11(u, v) + c) * gphi - H.f12(u, v) * gpsi
          - u * system.g1(u, v) + k * om)
    r2 = (-np.diff(f2) / dx - H.f21(u, v) * gphi - (H.f22(u, v) + c) * gpsi
          - v * system.g2(u, v) + system.alpha * k * om)
    j, t = _anchor_weights(grid)
    f = phi if anchor == "phi_half" else psi
    rest = [phi[0] - 1.0, psi[0], phi[-1], psi[-1] - 1.0, (1 - t) * f[j] + t * f[j + 1] - 0.5]
    return np.concatenate([r1, r2, rest])


def discrete_residual(system: CompetitionSystem, k: float, wave: DiscretizedWave) -> np.ndarray:
    """Interior rows of both components, four Dirichlet rows and the phase row."""
    return _residual(system, k, wave.grid, _pack(wave.phi, wave.psi, wave.c_k), wave.anchor)


def _pattern(M: int, j: int, anchor: str):
    """Row and column indices of the Jacobian's nonzeros."""
    N = M - 2
    nodes = np.arange(1, M - 1)
    rows, cols = [], []
    for comp in (0, 1):
        r = comp * N + (nodes - 1)
        for off in (-1, 0, 1):
            for var in (0, 1):
                rows.append(r)
                cols.append(var * M + nodes + off)
        rows.append(r)
        cols.append(np.full(N, 2 * M))
    b = 2 * N
    rows.append(np.array([b, b + 1, b + 2, b + 3]))
    cols.append(np.array([0, M, M - 1, 2 * M - 1]))
    base = 0 if anchor == "phi_half" else M
    rows.append(np.array([b + 4, b + 4]))
    cols.append(np.array([base + j, base + j + 1]))
    return np.concatenate(rows), np.concatenate(cols)


def fd_jacobian(system, k, grid, X, anchor, step=1e-7) -> sp.csc_matrix:
    """Column-colored forward-difference Jacobian: seven residual evaluations."""
    M = len(grid)
    j, _ = _anchor_weights(grid)
    rows, cols = _pattern(M, j, anchor)
    R0 = _residual(system, k, grid, X, anchor)
    vals = np.zeros(len(rows))
    node = np.where(cols < 2 * M, cols % M, -1)
    var = np.where(cols < 2 * M, cols // M, 2)
    for comp in (0, 1):
        for m in range(3):
            Xp = X.copy()
            idx = np.arange(m, M, 3)
            h = step * np.maximum(1.0, np.abs(X[comp * M + idx]))
            Xp[comp * M + idx] += h
            dR = _residual(system, k, grid, Xp, anchor) - R0
            hh = np.zeros(M)
            hh[idx] = h
            sel = (var == comp) & (node % 3 == m)
            vals[sel] = dR[rows[sel]] / hh[node[sel]]
    Xp = X.copy()
    hc = step * max(1.0, abs(X[-1]))
    Xp[-1] += hc
    dR = _residual(system, k, grid, Xp, anchor) - R0
    sel = var == 2
    vals[sel] = dR[rows[sel]] / hc
    n = 2 * M + 1
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def analytic_jacobian(system: CompetitionSystem, k, grid, X, anchor) -> sp.csc_matrix:
    """Jacobian assembled from the registered partial derivatives of the coefficients."""
    M = len(grid)
    N = M - 2
    phi, psi, c = _unpack(X, M)
    dx = grid[1] - grid[0]
    D, H = system.D, system.H
    pu, pv = 0.5 * (phi[1:] + phi[:-1]), 0.5 * (psi[1:] + psi[:-1])
    dphi, dpsi = np.diff(phi) / dx, np.diff(psi) / dx

    def ev(fld, u, v):
        n = np.broadcast(u, v).shape
        return (np.broadcast_to(fld(u, v), n), np.broadcast_to(fld.du(u, v), n),
                np.broadcast_to(fld.dv(u, v), n))

    # half-node flux derivatives: dF[comp][var] = (d/dleft, d/dright)
    dF = [[None, None], [None, None]]
    for comp, (da, db) in enumerate(((D.f11, D.f12), (D.f21, D.f22))):
        a, a_u, a_v = ev(da, pu, pv)
        b, b_u, b_v = ev(db, pu, pv)
        common_u = 0.5 * (a_u * dphi + b_u * dpsi)
        common_v = 0.5 * (a_v * dphi + b_v * dpsi)
        dF[comp][0] = (common_u - a / dx, common_u + a / dx)
        dF[comp][1] = (common_v - b / dx, common_v + b / dx)

    u, v = phi[1:-1], psi[1:-1]
    gphi = (phi[2:] - phi[:-2]) / (2 * dx)
    gpsi = (psi[2:] - psi[:-2]) / (2 * dx)
    h11, h11u, h11v = ev(H.f11, u, v)
    h12, h12u, h12v = ev(H.f12, u, v)
    h21, h21u, h21v = ev(H.f21, u, v)
    h22, h22u, h22v = ev(H.f22, u, v)
    g1, g1u, g1v = ev(system.g1, u, v)
    g2, g2u, g2v = ev(system.g2, u, v)
    om, omu, omv = ev(system.omega, u, v)
    alpha = system.alpha

    # entries[(comp, var, offset)] for interior node i
    ent = {}
    for comp in (0, 1):
        for var in (0, 1):
            left, right = dF[comp][var]
            # -div: -(F_{i+1/2} - F_{i-1/2}) / dx; F_{i+1/2} depends on (i, i+1), F_{i-1/2} on (i-1, i)
            ent[(comp, var, -1)] = left[:-1] / dx
            ent[(comp, var, 0)] = -(left[1:] - right[:-1]) / dx
            ent[(comp, var, 1)] = -right[1:] / dx
    inv2 = 1.0 / (2 * dx)
    ent[(0, 0, 0)] = ent[(0, 0, 0)] - (h11u * gphi + h12u * gpsi) - g1 - u * g1u + k * omu
    ent[(0, 1, 0)] = ent[(0, 1, 0)] - (h11v * gphi + h12v * gpsi) - u * g1v + k * omv
    ent[(1, 0, 0)] = ent[(1, 0, 0)] - (h21u * gphi + h22u * gpsi) - v * g2u + alpha * k * omu
    ent[(1, 1, 0)] = ent[(1, 1, 0)] - (h21v * gphi + h22v * gpsi) - g2 - v * g2v + alpha * k * omv
    for sgn, off in ((-1.0, -1), (1.0, 1)):
        ent[(0, 0, off)] = ent[(0, 0, off)] - sgn * (h11 + c) * inv2
        ent[(0, 1, off)] = ent[(0, 1, off)] - sgn * h12 * inv2
        ent[(1, 0, off)] = ent[(1, 0, off)] - sgn * h21 * inv2
        ent[(1, 1, off)] = ent[(1, 1, off)] - sgn * (h22 + c) * inv2

    nodes = np.arange(1, M - 1)
    rows, cols, vals = [], [], []
    for (comp, var, off), value in ent.items():
        rows.append(comp * N + nodes - 1)
        cols.append(var * M + nodes + off)
        vals.append(np.broadcast_to(value, (N,)))
    rows += [np.arange(N), N + np.arange(N)]
    cols += [np.full(N, 2 * M), np.full(N, 2 * M)]
    vals += [-gphi, -gpsi]
    b = 2 * N
    rows.append(np.array([b, b + 1, b + 2, b + 3]))
    cols.append(np.array([0, M, M - 1, 2 * M - 1]))
    vals.append(np.ones(4))
    j, t = _anchor_weights(grid)
    base = 0 if anchor == "phi_half" else M
    rows.append(np.array([b + 4, b + 4]))
    cols.append(np.array([base + j, base + j + 1]))
    vals.append(np.array([1 - t, t]))
    n = 2 * M + 1
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _jacobian(system, k, grid, X, anchor, mode):
    if mode == "analytic" or (mode == "auto" and system.has_derivatives):
        return analytic_jacobian(system, k, grid, X, anchor)
    return fd_jacobian(system, k, grid, X, anchor)


def _monotone(phi, psi, tol) -> bool:
    return bool(np.all(np.diff(phi) <= tol) and np.all(np.diff(psi) >= -tol))


def solve_tw(system: CompetitionSystem, k: float, config: SolverConfig,
             initial_guess: DiscretizedWave) -> DiscretizedWave:
    """Damped Newton solve of the truncated traveling-wave problem at competition ``k``.

    Monotonicity of the result is reported in ``monotone_ok``, never imposed.
    """
    grid = config.grid
    if len(initial_guess.grid) != len(grid) or not np.allclose(initial_guess.grid, grid):
        phi0 = np.interp(grid, initial_guess.grid, initial_guess.phi, left=1.0, right=0.0)
        psi0 = np.interp(grid, initial_guess.grid, initial_guess.psi, left=0.0, right=1.0)
    else:
        phi0, psi0 = initial_guess.phi, initial_guess.psi
    anchor = config.phase_anchor
    X = _pack(phi0, psi0, initial_guess.c_k)
    X[0], X[len(grid)], X[len(grid) - 1], X[2 * len(grid) - 1] = 1.0, 0.0, 0.0, 1.0
    R = _residual(system, k, grid, X, anchor)
    norm = float(np.max(np.abs(R)))
    trace = [norm]
    it = 0
    while norm >= config.newton_tol:
        if it >= config.max_newton_iters or not math.isfinite(norm):
            raise NewtonDiverged(f"no convergence at k={k} after {it} iterations (|R| = {norm:.3e})", trace, k)
        J = _jacobian(system, k, grid, X, anchor, config.jacobian)
        try:
            step = splu(J).solve(-R)
        except RuntimeError as err:
            raise NewtonDiverged(f"singular Jacobian at k={k}: {err}", trace, k) from err
        lam = 1.0
        while True:
            Xn = X + lam * step
            Rn = _residual(system, k, grid, Xn, anchor)
            nn = float(np.max(np.abs(Rn)))
            if nn < (1.0 - 1e-4 * lam) * norm or (lam <= config.damping and math.isfinite(nn)):
                break
            lam *= 0.5
            if lam < config.damping:
                lam = config.damping
        X, R, norm = Xn, Rn, nn
        trace.append(norm)
        it += 1
    phi, psi, c = _unpack(X, len(grid))
    log.debug("k=%g converged in %d iterations, c=%.10f", k, it, c)
    return DiscretizedWave(grid, phi.copy(), psi.copy(), c, float(k), norm,
                           _monotone(phi, psi, config.monotone_tol), it, anchor, tuple(trace))


def _anchor_shift(xi, f, level=0.5) -> float:
    """Location where the monotone sampled ``f`` crosses ``level``."""
    s = f - level
    idx = np.nonzero(np.sign(s[:-1]) != np.sign(s[1:]))[0]
    if len(idx) == 0:
        raise ValueError("profile never crosses the anchor level")
    i = idx[0]
    return float(xi[i] - s[i] * (xi[i + 1] - xi[i]) / (s[i + 1] - s[i]))


_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(40)
_GH_W = _GH_W / _GH_W.sum()


def initial_guess_from_limit(limit: LimitWave, k: float, config: SolverConfig) -> DiscretizedWave:
    """Segregated limit profiles, mollified over a ``k^-1/2`` window, as a Newton start.

    The guess is translated so that the configured anchor holds at ``xi = 0``.
    """
    grid = config.grid
    fine = np.linspace(limit.xi_grid[0], limit.xi_grid[-1], 20 * len(limit.xi_grid))
    f = limit.phi(fine) if config.phase_anchor == "phi_half" else limit.psi(fine)
    shift = _anchor_shift(fine, f)
    width = 1.0 / math.sqrt(k)
    pts = (grid + shift)[:, None] + width * _GH_X[None, :]
    z = limit.z(pts.ravel()).reshape(pts.shape)
    phi = (np.maximum(z, 0.0) / limit.alpha) @ _GH_W
    psi = np.maximum(-z, 0.0) @ _GH_W
    phi[0], psi[0], phi[-1], psi[-1] = 1.0, 0.0, 0.0, 1.0
    return DiscretizedWave(grid, phi, psi, float(limit.c_inf), float(k),
                           monotone_ok=_monotone(phi, psi, config.monotone_tol), anchor=config.phase_anchor)


def _solve_with_substeps(system, k_prev, k, config, guess, depth=0):
    try:
        return solve_tw(system.with_k(k), k, config, guess)
    except NewtonDiverged:
        if depth >= config.max_substeps or k_prev is None:
            raise
    k_mid = math.sqrt(k_prev * k)
    log.info("substep k=%g between %g and %g", k_mid, k_prev, k)
    mid = _solve_with_substeps(system, k_prev, k_mid, config, guess, depth + 1)
    return _solve_with_substeps(system, k_mid, k, config, mid, depth + 1)


@dataclass
class ContinuationResult:
    waves: list[DiscretizedWave]
    diagnostics: list[dict]
    failure: NewtonDiverged | None = None

    def __iter__(self):
        return iter(self.waves)

    def __len__(self):
        return len(self.waves)

    def __getitem__(self, i):
        return self.waves[i]


def continue_in_k(system: CompetitionSystem, config: SolverConfig, initial_guess: DiscretizedWave,
                  k_schedule=None) -> ContinuationResult:
    """Solve along an increasing schedule of ``k``, warm-starting each solve from the last.

    Stops at the first failure and returns what converged so far.
    """
    schedule = list(config.k_schedule if k_schedule is None else k_schedule)
    if schedule != sorted(schedule):
        raise ValueError("k_schedule must be increasing")
    waves, diags = [], []
    guess, k_prev = initial_guess, None
    for k in schedule:
        try:
            wave = _solve_with_substeps(system, k_prev, k, config, guess)
        except NewtonDiverged as err:
            log.warning("continuation stopped at k=%g: %s", k, err)
            return ContinuationResult(waves, diags, err)
        waves.append(wave)
        diags.append({
            "k": k, "c_k": wave.c_k, "residual_norm": wave.residual_norm, "iterations": wave.iterations,
            "monotone_ok": wave.monotone_ok, "segregation": wave.segregation,
        })
        guess, k_prev = wave, k
    return ContinuationResult(waves, diags)


def trapezoid_mass(wave: DiscretizedWave) -> tuple[float, float]:
    """Trapezoidal integrals of ``phi'`` and ``psi'`` (should be -1 and +1)."""
    dphi = np.gradient(wave.phi, wave.grid)
    dpsi = np.gradient(wave.psi, wave.grid)
    return float(np.trapezoid(dphi, wave.grid)), float(np.trapezoid(dpsi, wave.grid))


def l2_estimate(system: CompetitionSystem, wave: DiscretizedWave, R: float = 10.0, n: int = 101) -> tuple[float, float]:
    """``int_{-R}^{R} (phi')^2`` and the k-independent bound from the energy estimate.

    The bound uses a piecewise-linear cut-off equal to 1 on ``[-R, R]`` and
    vanishing outside ``[-R-1, R+1]``, unit total variation of ``phi`` and
    ``0 <= phi <= 1``; it applies when ``d12 <= 0``.
    """
    s = np.linspace(0.0, 1.0, n)
    U, V = np.meshgrid(s, s, indexing="ij")

    def sup(f):
        return float(np.max(np.abs(np.broadcast_to(f(U, V), U.shape))))

    d11_min = float(np.min(np.broadcast_to(system.D.f11(U, V), U.shape)))
    bound = (sup(system.D.f11) + sup(system.D.f12) + sup(system.H.f11) + sup(system.H.f12)
             + abs(wave.c_k) + sup(system.g1) * (2 * R + 1)) / d11_min
    mid = 0.5 * (wave.grid[1:] + wave.grid[:-1])
    dphi = np.diff(wave.phi) / np.diff(wave.grid)
    inside = np.abs(mid) <= R
    lhs = float(np.sum(dphi[inside] ** 2 * np.diff(wave.grid)[inside]))
    return lhs, bound
