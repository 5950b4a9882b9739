"""Sign of the limiting speed, monostable speed bounds and linear determinacy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .model import CompetitionSystem, ScalarLimitProblem, reduce_to_scalar
from .phaseplane import LimitWave, ShootOptions, branch, canonical_estimates, match_bistable


class InapplicableHypothesis(ValueError):
    """Self-advections are not one common constant."""


@dataclass(frozen=True)
class SignReport:
    I1: float
    I2: float
    S: float
    h0: float | None
    predicted_sign: int
    quadrature_error: float
    alpha: float
    applicable: bool = True


def common_self_advection(system: CompetitionSystem, n: int = 41, tol: float = 1e-12) -> float | None:
    """The constant ``h0`` when ``h11 = h22 = h0`` on a sample of the unit square, else None."""
    s = np.linspace(0.0, 1.0, n)
    U, V = np.meshgrid(s, s, indexing="ij")
    h11 = np.broadcast_to(np.asarray(system.H.f11(U, V), dtype=float), U.shape)
    h22 = np.broadcast_to(np.asarray(system.H.f22(U, V), dtype=float), U.shape)
    h0 = float(h11.flat[0])
    if np.max(np.abs(h11 - h0)) > tol or np.max(np.abs(h22 - h0)) > tol:
        return None
    return h0


def sign_functional(system: CompetitionSystem, epsabs: float = 1e-13, strict: bool = True) -> SignReport:
    """``S = alpha^2 I1 - I2``, which has the sign of ``c_inf + h0``.

    ``I1 = int_0^1 z d11(z,0) g1(z,0) dz`` and ``I2 = int_0^1 z d22(0,z) g2(0,z) dz``.
    With ``strict`` an inapplicable system raises, otherwise the report is
    returned with ``applicable = False``.
    """
    h0 = common_self_advection(system)
    if h0 is None and strict:
        raise InapplicableHypothesis("h11 and h22 are not a common constant")
    D, g1, g2 = system.D, system.g1, system.g2
    I1, e1 = quad(lambda z: z * float(D.f11(z, 0.0)) * float(g1(z, 0.0)), 0.0, 1.0,
                  epsabs=epsabs, epsrel=1e-13, limit=200)
    I2, e2 = quad(lambda z: z * float(D.f22(0.0, z)) * float(g2(0.0, z)), 0.0, 1.0,
                  epsabs=epsabs, epsrel=1e-13, limit=200)
    a2 = system.alpha ** 2
    S = a2 * I1 - I2
    return SignReport(I1, I2, S, h0, int(np.sign(S)), e1 * a2 + e2, system.alpha, h0 is not None)


def speed_estimates(problem: ScalarLimitProblem, n: int = 1000) -> dict[str, float]:
    """Lower and upper bounds on both monostable minimal speeds."""
    lp, up = canonical_estimates(branch(problem, "positive"), n)
    ln, un = canonical_estimates(branch(problem, "negative"), n)
    return {"lower_pos": lp, "upper_pos": up, "lower_neg": ln, "upper_neg": un}


def _concave_on_branch(problem: ScalarLimitProblem, side: str, n: int = 1000) -> bool:
    br = branch(problem, side)
    w = np.linspace(0.0, br.U, n)
    d = np.asarray(br.diffusion(w), dtype=float) + 0.0 * w
    f = d * w * (np.asarray(br.growth(w), dtype=float) + 0.0 * w)
    second = f[2:] - 2.0 * f[1:-1] + f[:-2]
    scale = max(1.0, float(np.max(np.abs(f)))) * 1e-12
    return bool(np.all(second <= scale))


def kpp_linear_speed(problem: ScalarLimitProblem, side: str, n: int = 1000) -> float | None:
    """Linearly determined minimal speed ``2 sqrt(d(0) g'(0)) -/+ h(0)`` when ``d g`` is concave.

    SKT presets are decided by the exact condition on their parameters;
    everything else by second differences of ``z -> d(z) g(z)`` on the side.
    """
    params = problem.params or {}
    if problem.name == "SKT":
        # d(z) g(z) is a cubic in z/alpha with curvature -2 d + 4 a at 0
        d, a = (params["d1"], params["a11"]) if side == "positive" else (params["d2"], params["a22"])
        ok = d >= 2.0 * a
    else:
        ok = _concave_on_branch(problem, side, n)
    if not ok:
        return None
    br = branch(problem, side)
    return 2.0 * math.sqrt(br.d0 * br.G0) - br.eta0


@dataclass(frozen=True)
class SignVerdict:
    verdict: str  # agree / disagree / indeterminate / inapplicable
    report: SignReport
    c_inf: float | None = None

    def __str__(self) -> str:
        return self.verdict


def cross_check_sign(system: CompetitionSystem, wave: LimitWave | None = None,
                     opts: ShootOptions = ShootOptions(), s_tol: float = 1e-3) -> SignVerdict:
    """Compare the sign of ``c_inf + h0`` from a computed wave with the predicted sign."""
    report = sign_functional(system, strict=False)
    if not report.applicable:
        return SignVerdict("inapplicable", report)
    if wave is None:
        wave = match_bistable(reduce_to_scalar(system), opts)
    eff = wave.c_inf + report.h0
    if abs(report.S) < s_tol or abs(eff) < 10.0 * opts.speed_tol:
        return SignVerdict("indeterminate", report, wave.c_inf)
    verdict = "agree" if int(np.sign(eff)) == report.predicted_sign else "disagree"
    return SignVerdict(verdict, report, wave.c_inf)
