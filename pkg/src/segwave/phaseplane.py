"""Semi-waves, minimal speeds and the bistable free-boundary wave in the flux plane.

Both halves of the limiting problem are handled by one canonical branch: a
monotone front ``w(eta)`` running from ``U`` at ``-inf`` down to ``0``, with
flux ``y = d(w) w'`` obeying

    y dy/dw = -(sigma + eta(w)) y - d(w) w G(w)

where ``G`` is the per-capita growth. The positive half of a wave uses
``w = z`` and ``sigma = c``; the negative half uses ``w = -z`` read in the
mirrored frame, so ``sigma = -c`` and the advection flips sign. The flux is
the same quantity in both pictures.

Near ``w = 0`` the trajectory is followed through the slope ``s = y / w`` in
the log variable ``tau = -ln w``; the fate there (slope settles on a real
eigen-direction, or blows up so that ``y(0) < 0``) is what separates fronts
from semi-waves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .model import CompetitionSystem, ScalarLimitProblem


class PhasePlaneError(RuntimeError):
    pass


class NoSemiWave(PhasePlaneError):
    """The trajectory from the equilibrium lands on the origin: a front, not a semi-wave."""


class BracketInvalid(PhasePlaneError):
    def __init__(self, msg, low_shot=None, high_shot=None):
        super().__init__(msg)
        self.low_shot = low_shot
        self.high_shot = high_shot


class MinimalSpeedsNotOrdered(PhasePlaneError):
    """``-c_minus < c_plus`` fails, so no bistable wave exists."""


class RootNotBracketed(PhasePlaneError):
    def __init__(self, msg, fluxes=None):
        super().__init__(msg)
        self.fluxes = fluxes


class Outcome(str, Enum):
    SEMI_WAVE = "ReachedZeroWithNegativeFlux"
    FRONT = "VanishedBeforeZero"
    FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class ShootOptions:
    rtol: float = 1e-10
    atol: float = 1e-14
    launch_eps: float = 1e-6
    switch_fraction: float = 0.5
    tau_span: float = 50.0
    escape_factor: float = 1e4
    speed_tol: float = 1e-6
    flux_rel_tol: float = 1e-8
    front_tol: float = 1e-6
    bracket_pad: float = 1e-3
    hard_cap: float = 1e3
    upper_grid: int = 1000

    def tightened(self, factor: float = 10.0) -> "ShootOptions":
        return replace(self, rtol=self.rtol / factor, atol=self.atol / factor,
                       speed_tol=self.speed_tol / factor, flux_rel_tol=self.flux_rel_tol / factor)


@dataclass(frozen=True)
class Branch:
    """One half of the limiting problem in canonical (front-to-zero) orientation."""

    side: str
    U: float
    diffusion: Callable
    advection: Callable
    growth: Callable
    d0: float
    eta0: float
    G0: float
    slope: float
    orientation: int  # sigma = orientation * c

    @property
    def dU(self) -> float:
        return float(self.diffusion(self.U))

    @property
    def etaU(self) -> float:
        return float(self.advection(self.U))

    def launch_rate(self, sigma: float) -> float:
        """Positive root of ``l^2 + (sigma + eta(U)) l + d(U) g'(U) = 0``."""
        b = sigma + self.etaU
        q = self.dU * self.slope
        if not q < 0:
            raise PhasePlaneError(f"{self.side} equilibrium is not a saddle (d g' = {q})")
        return 0.5 * (-b + math.sqrt(b * b - 4.0 * q))


def branch(problem: ScalarLimitProblem, side: str) -> Branch:
    if side == "positive":
        return Branch(
            side, problem.alpha, problem.d_pos, problem.h_pos, problem.growth_pos,
            problem.limit("d_pos"), problem.limit("h_pos"), problem.limit("growth_pos"),
            problem.slope_at_equilibrium("positive"), 1,
        )
    if side == "negative":
        return Branch(
            side, 1.0,
            lambda w: problem.d_neg(-np.asarray(w, dtype=float)),
            lambda w: -problem.h_neg(-np.asarray(w, dtype=float)),
            lambda w: problem.growth_neg(-np.asarray(w, dtype=float)),
            problem.limit("d_neg"), -problem.limit("h_neg"), problem.limit("growth_neg"),
            problem.slope_at_equilibrium("negative"), -1,
        )
    raise ValueError(f"side must be 'positive' or 'negative', got {side!r}")


@dataclass(frozen=True)
class SemiWaveShot:
    side: str
    c: float
    z_samples: np.ndarray
    y_samples: np.ndarray
    outcome: Outcome
    flux: float | None = None  # y(0) for semi-waves
    z_stop: float | None = None  # where the flux vanished, for fronts
    message: str = ""

    @property
    def is_semi_wave(self) -> bool:
        return self.outcome is Outcome.SEMI_WAVE


def _stiff(b: float, a: float) -> bool:
    return b * b > 100.0 * max(a, 1e-300)


def _shoot_canonical(br: Branch, sigma: float, opts: ShootOptions):
    """Integrate the unstable manifold of ``U`` down to ``w = 0``.

    Returns ``(outcome, flux or None, w_stop or None, w_samples, y_samples, msg)``.
    """
    U = br.U
    lam = br.launch_rate(sigma)
    eps = opts.launch_eps * U
    d, eta, G = br.diffusion, br.advection, br.growth
    a0 = br.d0 * br.G0
    b0 = sigma + br.eta0
    method = "Radau" if _stiff(abs(b0) + abs(sigma + br.etaU), a0) else "DOP853"

    ws, ys = [np.array([U]), ], [np.array([0.0])]

    # stage A: (w, y) plane from the launch point to w = switch_fraction * U
    def rhs_a(w, y):
        return [-(sigma + eta(w)) - d(w) * w * G(w) / y[0]]

    def hit_zero(w, y):
        return y[0]

    hit_zero.terminal = True
    w_a = opts.switch_fraction * U
    sol = solve_ivp(rhs_a, (U - eps, w_a), [-lam * eps], method=method,
                    rtol=opts.rtol, atol=opts.atol, events=hit_zero)
    ws.append(sol.t)
    ys.append(sol.y[0])
    if sol.status == -1:
        return Outcome.FAILURE, None, None, ws, ys, f"stage A: {sol.message}"
    if sol.status == 1:
        return Outcome.FRONT, None, float(sol.t_events[0][0]), ws, ys, "flux vanished away from zero"

    # stage B: slope s = y/w against tau = -ln w
    s_escape = -opts.escape_factor * max(1.0, abs(b0), math.sqrt(max(a0, 0.0)))

    def rhs_b(tau, s):
        w = math.exp(-tau)
        return [s[0] + (sigma + eta(w)) + d(w) * G(w) / s[0]]

    def escaped(tau, s):
        return s[0] - s_escape

    escaped.terminal = True
    tau0 = -math.log(w_a)
    tau1 = -math.log(U) + opts.tau_span
    s0 = sol.y[0, -1] / w_a
    solb = solve_ivp(rhs_b, (tau0, tau1), [s0], method=method, rtol=opts.rtol,
                     atol=opts.atol, events=escaped)
    wb = np.exp(-solb.t)
    ws.append(wb)
    ys.append(solb.y[0] * wb)
    if solb.status == -1:
        return Outcome.FAILURE, None, None, ws, ys, f"stage B: {solb.message}"

    if solb.status == 1:
        # stage C: y is bounded away from 0, finish in the (w, y) plane
        w_c = float(np.exp(-solb.t_events[0][0]))
        y_c = float(solb.y_events[0][0][0] * w_c)
        solc = solve_ivp(rhs_a, (w_c, 0.0), [y_c], method="DOP853", rtol=opts.rtol, atol=opts.atol)
        if solc.status != 0:
            return Outcome.FAILURE, None, None, ws, ys, f"stage C: {solc.message}"
        ws.append(solc.t)
        ys.append(solc.y[0])
        return Outcome.SEMI_WAVE, float(solc.y[0, -1]), None, ws, ys, ""

    # no escape by the end of the window: decide by the frozen-coefficient slope dynamics
    s_end = float(solb.y[0, -1])
    w_end = float(wb[-1])
    disc = b0 * b0 - 4.0 * a0
    if b0 > 0 and disc >= 0:
        r_steep = 0.5 * (-b0 - math.sqrt(disc))
        if s_end > r_steep:
            return Outcome.FRONT, None, w_end, ws, ys, "slope settled on an eigen-direction"
    # the slope diverges: a semi-wave whose flux is below the resolvable scale
    return Outcome.SEMI_WAVE, s_end * w_end, None, ws, ys, "flux below resolution"


def shoot_semi_wave(problem: ScalarLimitProblem, side: str, c: float,
                    opts: ShootOptions = ShootOptions()) -> SemiWaveShot:
    """Shoot from the nontrivial equilibrium of one side toward ``z = 0`` at speed ``c``."""
    if not math.isfinite(c):
        raise ValueError("speed must be finite")
    br = branch(problem, side)
    sigma = br.orientation * c
    try:
        outcome, flux, w_stop, ws, ys, msg = _shoot_canonical(br, sigma, opts)
    except (FloatingPointError, ZeroDivisionError, OverflowError) as err:
        outcome, flux, w_stop, ws, ys, msg = Outcome.FAILURE, None, None, [np.array([br.U])], [np.array([0.0])], str(err)
    w = np.concatenate(ws)
    y = np.concatenate(ys)
    if outcome is not Outcome.FAILURE and np.any(y > opts.front_tol):
        outcome, msg = Outcome.FAILURE, "flux turned positive"
    sign = 1.0 if side == "positive" else -1.0
    return SemiWaveShot(side, float(c), sign * w, y, outcome, flux,
                        None if w_stop is None else sign * w_stop, msg)


def flux_at_zero(problem: ScalarLimitProblem, side: str, c: float,
                 opts: ShootOptions = ShootOptions()) -> float:
    """Limit of ``d(z) z'`` at the free boundary for the semi-wave of speed ``c``."""
    shot = shoot_semi_wave(problem, side, c, opts)
    if shot.outcome is Outcome.FAILURE:
        raise PhasePlaneError(f"{side} shot at c={c} failed: {shot.message}")
    if not shot.is_semi_wave:
        raise NoSemiWave(f"{side} side at c={c} is front-type")
    return shot.flux


def _flux_or_zero(problem, side, c, opts) -> tuple[float, SemiWaveShot]:
    shot = shoot_semi_wave(problem, side, c, opts)
    if shot.outcome is Outcome.FAILURE:
        raise PhasePlaneError(f"{side} shot at c={c} failed: {shot.message}")
    return (shot.flux if shot.is_semi_wave else 0.0), shot


# ---------------------------------------------------------------------------
# minimal speeds


@dataclass(frozen=True)
class MinimalSpeedResult:
    side: str
    c_star: float
    bracket: tuple[float, float]
    iterations: int
    certificate: tuple[SemiWaveShot, SemiWaveShot]
    estimates: tuple[float, float]


def canonical_estimates(br: Branch, n: int = 1000) -> tuple[float, float]:
    """Lower and upper bounds on the canonical minimal speed of a branch.

    lower: ``2 sqrt(d(0) G(0)) - eta(0)``; upper: ``2 sqrt(sup_w avg_[0,w] (d G)) - inf_w avg_[0,w] eta``
    with running averages from trapezoidal sums on an ``n``-point grid (the
    ``w -> 0`` limits are included in the sup and inf).
    """
    lower = 2.0 * math.sqrt(br.d0 * br.G0) - br.eta0
    w = np.linspace(0.0, br.U, n + 1)
    inner = w[1:]
    dg = np.asarray(br.diffusion(inner), dtype=float) * np.asarray(br.growth(inner), dtype=float)
    et = np.asarray(br.advection(inner), dtype=float) + 0.0 * inner
    dg = np.concatenate([[br.d0 * br.G0], dg])
    et = np.concatenate([[br.eta0], et])
    dw = np.diff(w)
    avg_dg = np.cumsum(0.5 * (dg[1:] + dg[:-1]) * dw) / inner
    avg_et = np.cumsum(0.5 * (et[1:] + et[:-1]) * dw) / inner
    sup_dg = max(float(avg_dg.max()), br.d0 * br.G0)
    inf_et = min(float(avg_et.min()), br.eta0)
    upper = 2.0 * math.sqrt(max(sup_dg, 0.0)) - inf_et
    return lower, upper


def minimal_speed(problem: ScalarLimitProblem, side: str,
                  opts: ShootOptions = ShootOptions()) -> MinimalSpeedResult:
    """Smallest speed with a monotone front from the side's equilibrium to 0.

    Returned in the orientation used for bistable speeds: fronts exist on the
    positive side for ``c >= c_star`` and on the negative side for ``c <= -c_star``.
    """
    br = branch(problem, side)
    lower, upper = canonical_estimates(br, opts.upper_grid)

    def shoot(sigma):
        shot = shoot_semi_wave(problem, side, br.orientation * sigma, opts)
        if shot.outcome is Outcome.FAILURE:
            raise PhasePlaneError(f"{side} shot failed at c={shot.c}: {shot.message}")
        return shot

    pad = opts.bracket_pad * max(1.0, abs(lower))
    lo, hi = lower - pad, upper + pad
    shot_lo, shot_hi = shoot(lo), shoot(hi)
    if not shot_lo.is_semi_wave:
        raise BracketInvalid(f"{side}: front already at the lower estimate {lo}", shot_lo, shot_hi)
    while shot_hi.is_semi_wave:
        if hi - lo > opts.hard_cap:
            raise BracketInvalid(f"{side}: no front found below speed {hi}", shot_lo, shot_hi)
        hi = lo + 2.0 * (hi - lo)
        shot_hi = shoot(hi)
    bracket = (lo, hi)
    its = 0
    while hi - lo >= opts.speed_tol:
        mid = 0.5 * (lo + hi)
        shot = shoot(mid)
        if shot.is_semi_wave:
            lo, shot_lo = mid, shot
        else:
            hi, shot_hi = mid, shot
        its += 1
    return MinimalSpeedResult(side, 0.5 * (lo + hi), bracket, its, (shot_lo, shot_hi), (lower, upper))


# ---------------------------------------------------------------------------
# bistable matching


@dataclass(frozen=True)
class ProfileOptions:
    dx: float = 0.01
    half_width: float = 20.0
    rtol: float = 1e-12
    atol: float = 1e-15


@dataclass(frozen=True)
class LimitWave:
    c_inf: float
    flux_at_zero: float
    xi_grid: np.ndarray
    z_values: np.ndarray
    alpha: float
    c_star_plus: float
    c_star_minus: float
    dz_left: float  # z'(0-)
    dz_right: float  # z'(0+)
    iterations: int = 0
    matching_residual: float = 0.0
    profile_fn: Callable | None = field(default=None, repr=False, compare=False)

    @property
    def phi_values(self) -> np.ndarray:
        return np.maximum(self.z_values, 0.0) / self.alpha

    @property
    def psi_values(self) -> np.ndarray:
        return np.maximum(-self.z_values, 0.0)

    def z(self, xi):
        """Profile at arbitrary points (tails included)."""
        if self.profile_fn is None:
            return np.interp(xi, self.xi_grid, self.z_values)
        return self.profile_fn(np.asarray(xi, dtype=float))

    def phi(self, xi):
        return np.maximum(self.z(xi), 0.0) / self.alpha

    def psi(self, xi):
        return np.maximum(-self.z(xi), 0.0)


def matching_function(problem: ScalarLimitProblem, c: float, opts: ShootOptions = ShootOptions()) -> tuple[float, float, float]:
    """``(F, flux_pos, flux_neg)`` with ``F = flux_pos - flux_neg``; fronts count as zero flux."""
    fp, _ = _flux_or_zero(problem, "positive", c, opts)
    fn, _ = _flux_or_zero(problem, "negative", c, opts)
    return fp - fn, fp, fn


def match_speed(problem: ScalarLimitProblem, opts: ShootOptions = ShootOptions(),
                speeds: tuple[float, float] | None = None,
                bracket: tuple[float, float] | None = None) -> dict:
    """Solve ``flux_pos(c) = flux_neg(c)``; returns a dict of results.

    Bisection down to ``speed_tol``, then bracketed regula falsi until
    ``|F| < flux_rel_tol * |flux|`` at the returned speed.
    """
    if speeds is None:
        cp = minimal_speed(problem, "positive", opts).c_star
        cm = minimal_speed(problem, "negative", opts).c_star
    else:
        cp, cm = speeds
    if not -cm < cp:
        raise MinimalSpeedsNotOrdered(f"-c_minus = {-cm} is not below c_plus = {cp}")
    delta = 10.0 * opts.speed_tol
    lo, hi = bracket if bracket is not None else (-cm + delta, cp - delta)
    F_lo, fp_lo, fn_lo = matching_function(problem, lo, opts)
    F_hi, fp_hi, fn_hi = matching_function(problem, hi, opts)
    fluxes = {"lo": (lo, fp_lo, fn_lo), "hi": (hi, fp_hi, fn_hi)}
    if not (F_lo <= 0.0 <= F_hi):
        raise RootNotBracketed(f"matching function does not change sign on [{lo}, {hi}]", fluxes)

    def tol_at(fp, fn):
        # relative to the flux where F is evaluated, so it also bounds the free-boundary mismatch
        return opts.flux_rel_tol * min(abs(fp), abs(fn)) if fp and fn else 0.0

    its = 0
    c = None
    if abs(F_lo) < tol_at(fp_lo, fn_lo):
        c = lo
    elif abs(F_hi) < tol_at(fp_hi, fn_hi):
        c = hi
    while c is None and hi - lo >= opts.speed_tol:
        mid = 0.5 * (lo + hi)
        F, fp, fn = matching_function(problem, mid, opts)
        its += 1
        if abs(F) < tol_at(fp, fn):
            c = mid
        elif F < 0:
            lo, F_lo = mid, F
        else:
            hi, F_hi = mid, F
    # Illinois regula falsi inside the final bracket until the flux mismatch is resolved
    side = 0
    while c is None:
        mid = (lo * F_hi - hi * F_lo) / (F_hi - F_lo)
        if not lo < mid < hi:
            mid = 0.5 * (lo + hi)
        F, fp, fn = matching_function(problem, mid, opts)
        its += 1
        if abs(F) < tol_at(fp, fn) or hi - lo < 1e-15 * max(1.0, abs(mid)) or its > 200:
            c = mid
        elif F < 0:
            lo, F_lo = mid, F
            if side == -1:
                F_hi *= 0.5
            side = -1
        else:
            hi, F_hi = mid, F
            if side == 1:
                F_lo *= 0.5
            side = 1
    _, fp, fn = matching_function(problem, c, opts)
    return {"c_inf": float(c), "flux_pos": fp, "flux_neg": fn, "residual": fp - fn,
            "c_star_plus": cp, "c_star_minus": cm, "iterations": its, "flux_tol": tol_at(fp, fn)}


def _integrate_profile(br: Branch, sigma: float, popts: ProfileOptions, launch_eps: float):
    """Follow the branch front in the wave variable until ``w`` hits 0."""
    lam = br.launch_rate(sigma)
    eps = launch_eps * br.U
    d, eta, G = br.diffusion, br.advection, br.growth

    def rhs(t, s):
        w, y = s
        dw = d(w)
        return [y / dw, -(sigma + eta(w)) * y / dw - w * G(w)]

    def reach_zero(t, s):
        return s[0]

    reach_zero.terminal = True
    reach_zero.direction = -1
    t_max = 50.0 * (br.dU / lam) * math.log(1.0 / launch_eps) + 100.0
    sol = solve_ivp(rhs, (0.0, t_max), [br.U - eps, -lam * eps], method="DOP853",
                    rtol=popts.rtol, atol=popts.atol, events=reach_zero, dense_output=True)
    if sol.status != 1:
        raise PhasePlaneError(f"{br.side} profile never reached zero: {sol.message}")
    t_star = float(sol.t_events[0][0])
    y_star = float(sol.y_events[0][0][1])
    rate = lam / br.dU

    def w_of(t):
        # t measured from the launch point
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        inside = t >= 0
        if np.any(inside):
            out[inside] = sol.sol(np.minimum(t[inside], t_star))[0]
        out[~inside] = br.U - eps * np.exp(rate * t[~inside])
        return out

    return w_of, t_star, y_star


def reconstruct_profile(problem: ScalarLimitProblem, c_inf: float,
                        popts: ProfileOptions = ProfileOptions(),
                        opts: ShootOptions = ShootOptions()):
    """Profile ``z(xi)`` with ``z(0) = 0`` on a uniform grid containing ``xi = 0``.

    Returns ``(xi, z, z_fn, dz_left, dz_right)``; each half is integrated in the
    wave variable from its equilibrium, and the exponential tail of the
    linearization covers the last ``launch_eps`` next to the equilibria.
    """
    bp, bn = branch(problem, "positive"), branch(problem, "negative")
    wp, tp, yp = _integrate_profile(bp, c_inf, popts, opts.launch_eps)
    wn, tn, yn = _integrate_profile(bn, -c_inf, popts, opts.launch_eps)

    def z_fn(xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi)
        left = xi < 0
        right = xi > 0
        out[left] = wp(xi[left] + tp)
        out[right] = -wn(tn - xi[right])
        return out

    m = int(math.ceil(popts.half_width / popts.dx))
    xi = popts.dx * np.arange(-m, m + 1)
    z = z_fn(xi)
    z[m] = 0.0
    return xi, z, z_fn, yp / bp.d0, yn / bn.d0


def match_bistable(problem: ScalarLimitProblem, opts: ShootOptions = ShootOptions(),
                   popts: ProfileOptions = ProfileOptions(),
                   speeds: tuple[float, float] | None = None,
                   bracket: tuple[float, float] | None = None) -> LimitWave:
    """The bistable wave of the limiting free-boundary problem, normalized by ``z(0) = 0``."""
    m = match_speed(problem, opts, speeds, bracket)
    xi, z, z_fn, dzl, dzr = reconstruct_profile(problem, m["c_inf"], popts, opts)
    flux = 0.5 * (m["flux_pos"] + m["flux_neg"])
    return LimitWave(
        c_inf=m["c_inf"], flux_at_zero=flux, xi_grid=xi, z_values=z, alpha=problem.alpha,
        c_star_plus=m["c_star_plus"], c_star_minus=m["c_star_minus"], dz_left=dzl, dz_right=dzr,
        iterations=m["iterations"], matching_residual=m["residual"], profile_fn=z_fn,
    )


def profile_residual(problem: ScalarLimitProblem, wave: LimitWave, exclude: float = 0.05) -> np.ndarray:
    """Centered-difference residual of ``-(d z')' - (c + h) z' - g`` at interior nodes with ``|xi| > exclude``."""
    xi, z = wave.xi_grid, wave.z_values
    dx = xi[1] - xi[0]
    zc = z[1:-1]
    keep = np.abs(xi[1:-1]) > exclude
    zm = 0.5 * (z[1:] + z[:-1])
    # half-nodes never sit on z = 0 once |xi| > exclude
    dm = problem.d(np.where(zm == 0, np.sign(zc.mean()) * 1e-300, zm))
    flux = dm * np.diff(z) / dx
    div = np.diff(flux) / dx
    dz = (z[2:] - z[:-2]) / (2 * dx)
    res = -div - (wave.c_inf + problem.h(zc)) * dz - problem.g(zc)
    return np.abs(res[keep])


def free_boundary_residual(wave: LimitWave, system: CompetitionSystem) -> float:
    """``| -d11(0,0) alpha phi'(0-) - d22(0,0) psi'(0+) |`` from the one-sided profile slopes."""
    dphi_left = wave.dz_left / wave.alpha
    dpsi_right = -wave.dz_right
    d11 = float(system.D.f11(0.0, 0.0))
    d22 = float(system.D.f22(0.0, 0.0))
    return abs(-d11 * wave.alpha * dphi_left - d22 * dpsi_right)
