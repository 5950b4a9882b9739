"""Competition systems, named presets, assumption checks and the singular-limit reduction.

A :class:`CompetitionSystem` carries the coefficient fields of the two-species
reaction-diffusion-advection system

    u_t = (d11 u_x + d12 v_x)_x + h11 u_x + h12 v_x + u g1 - k w
    v_t = (d21 u_x + d22 v_x)_x + h21 u_x + h22 v_x + v g2 - alpha k w

with every coefficient a function of ``(u, v)`` on the unit square.
:func:`reduce_to_scalar` collapses it onto the scalar free-boundary problem
on ``[-1, alpha]`` that governs the strong-competition limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

EPS_LIMIT = 1e-8
FD_STEP = 1e-6

Func2 = Callable[[object, object], object]


def _const(value: float) -> Func2:
    def f(u, v):
        return value + 0.0 * (np.asarray(u, dtype=float) + np.asarray(v, dtype=float))

    return f


@dataclass(frozen=True)
class ScalarField:
    """A scalar function of ``(u, v)`` with optional analytic partial derivatives."""

    f: Func2
    du: Func2 | None = None
    dv: Func2 | None = None

    def __call__(self, u, v):
        return self.f(u, v)

    @property
    def has_derivatives(self) -> bool:
        return self.du is not None and self.dv is not None

    def grad(self, u, v, step: float = FD_STEP):
        """Partial derivatives; central differences when none are registered."""
        if self.has_derivatives:
            return self.du(u, v), self.dv(u, v)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        gu = (self.f(u + step, v) - self.f(u - step, v)) / (2 * step)
        gv = (self.f(u, v + step) - self.f(u, v - step)) / (2 * step)
        return gu, gv

    @classmethod
    def constant(cls, value: float) -> "ScalarField":
        zero = _const(0.0)
        return cls(_const(float(value)), zero, zero)


@dataclass(frozen=True)
class CoefficientField2x2:
    """Four scalar fields ``((f11, f12), (f21, f22))``."""

    f11: ScalarField
    f12: ScalarField
    f21: ScalarField
    f22: ScalarField

    def entry(self, i: int, j: int) -> ScalarField:
        return ((self.f11, self.f12), (self.f21, self.f22))[i - 1][j - 1]

    def __call__(self, u, v) -> np.ndarray:
        return np.array([[self.f11(u, v), self.f12(u, v)], [self.f21(u, v), self.f22(u, v)]])

    @property
    def fd_fallback(self) -> bool:
        """True when at least one entry lacks analytic derivatives."""
        return not all(e.has_derivatives for e in (self.f11, self.f12, self.f21, self.f22))

    @classmethod
    def constant(cls, m11=0.0, m12=0.0, m21=0.0, m22=0.0) -> "CoefficientField2x2":
        c = ScalarField.constant
        return cls(c(m11), c(m12), c(m21), c(m22))


@dataclass(frozen=True)
class CompetitionSystem:
    D: CoefficientField2x2
    H: CoefficientField2x2
    g1: ScalarField
    g2: ScalarField
    omega: ScalarField
    alpha: float
    k: float = 1.0
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (self.k > 0):
            raise ValueError(f"k must be positive, got {self.k}")

    def with_k(self, k: float) -> "CompetitionSystem":
        return replace(self, k=float(k))

    @property
    def has_derivatives(self) -> bool:
        scalars = (self.g1, self.g2, self.omega)
        return not self.D.fd_fallback and not self.H.fd_fallback and all(s.has_derivatives for s in scalars)


# ---------------------------------------------------------------------------
# presets

PRESET_PARAMS = {
    "LotkaVolterra": ("d", "r"),
    "PottsPetrovskii": ("d", "r", "gamma1", "gamma2"),
    "SKT": ("d1", "d2", "a11", "a12", "a21", "a22", "r"),
    "GeneralizedSKT": ("d1", "d2", "a11", "a12", "a21", "a22", "r",
                       "beta11", "beta12", "beta21", "beta22"),
}

_DEFAULTS = {
    "d": 1.0, "r": 1.0, "gamma1": 0.0, "gamma2": 0.0,
    "d1": 1.0, "d2": 1.0, "a11": 0.0, "a12": 0.0, "a21": 0.0, "a22": 0.0,
    "beta11": 1.0, "beta12": 1.0, "beta21": 1.0, "beta22": 1.0,
}

# parameters that must be strictly positive; cross-diffusion rates may vanish
_POSITIVE = {"d", "r", "d1", "d2", "beta11", "beta12", "beta21", "beta22"}
_NONNEGATIVE = {"a11", "a12", "a21", "a22"}


@dataclass(frozen=True)
class Preset:
    """A named system from the literature together with its parameters."""

    name: str
    params: Mapping[str, float] = field(default_factory=dict)
    alpha: float = 1.0
    k: float = 1.0

    def resolved(self) -> dict[str, float]:
        if self.name not in PRESET_PARAMS:
            raise ValueError(f"unknown preset {self.name!r}; expected one of {sorted(PRESET_PARAMS)}")
        allowed = PRESET_PARAMS[self.name]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for preset {self.name}")
        out = {key: float(self.params.get(key, _DEFAULTS[key])) for key in allowed}
        for key, value in out.items():
            if key in _POSITIVE and not value > 0:
                raise ValueError(f"{self.name}: parameter {key} must be positive, got {value}")
            if key in _NONNEGATIVE and value < 0:
                raise ValueError(f"{self.name}: parameter {key} must be nonnegative, got {value}")
        return out


def _logistic(rate: float, which: int) -> ScalarField:
    zero = _const(0.0)
    minus = _const(-rate)
    if which == 1:
        return ScalarField(lambda u, v: rate * (1.0 - u) + 0.0 * v, minus, zero)
    return ScalarField(lambda u, v: rate * (1.0 - v) + 0.0 * u, zero, minus)


_OMEGA = ScalarField(lambda u, v: u * v, lambda u, v: v + 0.0 * u, lambda u, v: u + 0.0 * v)


def _skt_diffusion(p: Mapping[str, float], generalized: bool) -> CoefficientField2x2:
    d1, d2, a11, a12, a21, a22 = (p[k] for k in ("d1", "d2", "a11", "a12", "a21", "a22"))
    if generalized:
        b11, b12, b21, b22 = (p[k] for k in ("beta11", "beta12", "beta21", "beta22"))
    else:
        b11 = b12 = b21 = b22 = 1.0

    def power(x, b):
        x = np.asarray(x, dtype=float)
        return np.power(x, b)

    def dpower(x, b, m=1.0):
        # derivative of m * x**b, well defined at 0 only when b >= 1
        x = np.asarray(x, dtype=float)
        if m == 0.0 or b == 1.0:
            return m + 0.0 * x
        with np.errstate(divide="ignore", invalid="ignore"):
            return m * b * np.power(x, b - 1.0)

    # Jacobian of (u (d1 + a11 u^b11 + a12 v^b12), v (d2 + a21 u^b21 + a22 v^b22))
    d11 = ScalarField(
        lambda u, v: d1 + a11 * (b11 + 1) * power(u, b11) + a12 * power(v, b12),
        lambda u, v: dpower(u, b11, a11 * (b11 + 1)) + 0.0 * np.asarray(v, dtype=float),
        lambda u, v: dpower(v, b12, a12) + 0.0 * np.asarray(u, dtype=float),
    )
    d12 = ScalarField(
        lambda u, v: np.asarray(u, dtype=float) * dpower(v, b12, a12),
        lambda u, v: dpower(v, b12, a12) + 0.0 * np.asarray(u, dtype=float),
        lambda u, v: np.asarray(u, dtype=float) * _second(v, b12, a12),
    )
    d21 = ScalarField(
        lambda u, v: np.asarray(v, dtype=float) * dpower(u, b21, a21),
        lambda u, v: np.asarray(v, dtype=float) * _second(u, b21, a21),
        lambda u, v: dpower(u, b21, a21) + 0.0 * np.asarray(v, dtype=float),
    )
    d22 = ScalarField(
        lambda u, v: d2 + a21 * power(u, b21) + a22 * (b22 + 1) * power(v, b22),
        lambda u, v: dpower(u, b21, a21) + 0.0 * np.asarray(v, dtype=float),
        lambda u, v: dpower(v, b22, a22 * (b22 + 1)) + 0.0 * np.asarray(u, dtype=float),
    )
    return CoefficientField2x2(d11, d12, d21, d22)


def _second(x, b, m=1.0):
    """Second derivative of ``m * x**b``."""
    x = np.asarray(x, dtype=float)
    if m == 0.0 or b == 1.0:
        return 0.0 * x
    with np.errstate(divide="ignore", invalid="ignore"):
        return m * b * (b - 1.0) * np.power(x, b - 2.0)


def make_preset(preset: Preset) -> CompetitionSystem:
    """Build the competition system of a named preset."""
    p = preset.resolved()
    name = preset.name
    zero_h = CoefficientField2x2.constant()
    if name == "LotkaVolterra":
        D = CoefficientField2x2.constant(1.0, 0.0, 0.0, p["d"])
        g2 = _logistic(p["r"], 2)
    elif name == "PottsPetrovskii":
        g1_, g2_ = p["gamma1"], p["gamma2"]
        zero = _const(0.0)
        D = CoefficientField2x2(
            ScalarField.constant(1.0),
            ScalarField(lambda u, v: -g1_ * u + 0.0 * v, _const(-g1_), zero),
            ScalarField(lambda u, v: -g2_ * v + 0.0 * u, zero, _const(-g2_)),
            ScalarField.constant(p["d"]),
        )
        g2 = _logistic(p["r"], 2)
    else:
        D = _skt_diffusion(p, generalized=(name == "GeneralizedSKT"))
        g2 = _logistic(p["r"], 2)
    return CompetitionSystem(
        D=D, H=zero_h, g1=_logistic(1.0, 1), g2=g2, omega=_OMEGA,
        alpha=float(preset.alpha), k=float(preset.k), name=name, params=p,
    )


def lotka_volterra(d=1.0, r=1.0, alpha=1.0, k=1.0) -> CompetitionSystem:
    return make_preset(Preset("LotkaVolterra", {"d": d, "r": r}, alpha, k))


def potts_petrovskii(d=1.0, r=1.0, gamma1=0.0, gamma2=0.0, alpha=1.0, k=1.0) -> CompetitionSystem:
    return make_preset(Preset("PottsPetrovskii", {"d": d, "r": r, "gamma1": gamma1, "gamma2": gamma2}, alpha, k))


def skt(alpha=1.0, k=1.0, **params) -> CompetitionSystem:
    return make_preset(Preset("SKT", params, alpha, k))


# ---------------------------------------------------------------------------
# assumption checks


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    worst_point: tuple[float, float] | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]


def _worst(values: np.ndarray, U: np.ndarray, V: np.ndarray, pick=np.argmax):
    idx = np.unravel_index(pick(values), values.shape)
    return float(values[idx]), (float(U[idx]), float(V[idx]))


def validate_assumptions(system: CompetitionSystem, grid_n: int = 200, tol: float = 1e-12) -> ValidationReport:
    """Sample the unit square and report the structural hypotheses one by one.

    Never raises on a violated hypothesis; each check carries the offending
    point with the worst value.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    s = np.linspace(0.0, 1.0, grid_n)
    U, V = np.meshgrid(s, s, indexing="ij")
    checks: list[Check] = []

    with np.errstate(all="ignore"):
        fields = {
            f"{m}{i}{j}": system.__getattribute__(m).entry(i, j)
            for m in ("D", "H") for i in (1, 2) for j in (1, 2)
        }
        fields.update(g1=system.g1, g2=system.g2, omega=system.omega)
        bad = []
        for key, f in fields.items():
            vals = np.broadcast_to(np.asarray(f(U, V), dtype=float), U.shape)
            if not np.all(np.isfinite(vals)):
                idx = np.unravel_index(np.argmax(~np.isfinite(vals)), U.shape)
                bad.append((key, (float(U[idx]), float(V[idx]))))
        checks.append(Check("finite", not bad, float(len(bad)), bad[0][1] if bad else None,
                            ", ".join(k for k, _ in bad)))

        for key in ("D11", "D22"):
            vals = np.broadcast_to(np.asarray(fields[key](U, V), dtype=float), U.shape)
            vmin, pt = _worst(np.nan_to_num(vals, nan=-np.inf), U, V, np.argmin)
            checks.append(Check(f"ellipticity_{key.lower()}", vmin > 0, vmin, pt))

        zeros = np.zeros_like(s)
        for key, at in (("D12", (zeros, s)), ("D21", (s, zeros)), ("H12", (zeros, s)), ("H21", (s, zeros))):
            vals = np.abs(np.broadcast_to(np.asarray(fields[key](*at), dtype=float), s.shape))
            vals = np.nan_to_num(vals, nan=np.inf)
            i = int(np.argmax(vals))
            checks.append(Check(f"no_coupling_{key.lower()}", vals[i] <= tol, float(vals[i]),
                                (float(at[0][i]), float(at[1][i]))))

        interior = s[1:-1]
        g1_axis = np.asarray(system.g1(interior, 0.0 * interior), dtype=float)
        g2_axis = np.asarray(system.g2(0.0 * interior, interior), dtype=float)
        for key, vals, pts in (("g1", g1_axis, [(x, 0.0) for x in interior]),
                               ("g2", g2_axis, [(0.0, x) for x in interior])):
            i = int(np.argmin(vals))
            checks.append(Check(f"monostable_{key}", bool(vals[i] > 0), float(vals[i]), pts[i]))
        end1 = float(system.g1(1.0, 0.0))
        end2 = float(system.g2(0.0, 1.0))
        checks.append(Check("monostable_g1_end", abs(end1) <= tol, end1, (1.0, 0.0)))
        checks.append(Check("monostable_g2_end", abs(end2) <= tol, end2, (0.0, 1.0)))

        om = np.broadcast_to(np.asarray(system.omega(U, V), dtype=float), U.shape)
        inner = om[1:, 1:]
        vmin, pt = _worst(inner, U[1:, 1:], V[1:, 1:], np.argmin)
        checks.append(Check("competition_positive", vmin > 0, vmin, pt))
        axes = np.concatenate([np.abs(om[0, :]), np.abs(om[:, 0])])
        pts = [(0.0, x) for x in s] + [(x, 0.0) for x in s]
        i = int(np.argmax(axes))
        checks.append(Check("competition_vanishes_on_axes", axes[i] <= tol, float(axes[i]), pts[i]))

    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------------------
# singular-limit reduction


@dataclass(frozen=True)
class ScalarLimitProblem:
    """Piecewise coefficients of the limiting scalar equation on ``[-1, alpha]``.

    The branch callables take the signed variable ``z``: ``d_pos`` is used for
    ``z in (0, alpha]`` and ``d_neg`` for ``z in [-1, 0)``. The per-capita growth
    rates define ``g(z) = z+ growth_pos(z) - z- growth_neg(z)``.

    ``d_zero`` and ``h_zero`` are what the piecewise evaluators return exactly
    at ``z = 0``; none of the solvers read them.
    """

    alpha: float
    d_pos: Callable[[float], float]
    d_neg: Callable[[float], float]
    h_pos: Callable[[float], float]
    h_neg: Callable[[float], float]
    growth_pos: Callable[[float], float]
    growth_neg: Callable[[float], float]
    # registered values; None means "use the numerical fallback"
    limits: Mapping[str, float] | None = None
    slope_plus: float | None = None
    slope_minus: float | None = None
    d_zero: float = 1.0
    h_zero: float = 0.0
    name: str = "custom"
    params: Mapping[str, float] | None = None

    U_minus = -1.0

    @property
    def U_plus(self) -> float:
        return self.alpha

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < -1.0 - 1e-12) or np.any(z > self.alpha + 1e-12):
            raise ValueError(f"z outside [-1, {self.alpha}]")
        return z

    def d(self, z):
        z = self._check(z)
        with np.errstate(all="ignore"):
            return np.where(z > 0, self.d_pos(np.maximum(z, 0)), np.where(z < 0, self.d_neg(np.minimum(z, 0)), self.d_zero)) + 0.0

    def h(self, z):
        z = self._check(z)
        with np.errstate(all="ignore"):
            return np.where(z > 0, self.h_pos(np.maximum(z, 0)), np.where(z < 0, self.h_neg(np.minimum(z, 0)), self.h_zero)) + 0.0

    def g(self, z):
        z = self._check(z)
        zp = np.maximum(z, 0.0)
        zm = np.maximum(-z, 0.0)
        return zp * self.growth_pos(zp) - zm * self.growth_neg(-zm)

    g_reduced = g

    def limit(self, name: str) -> float:
        """One-sided limit at 0 of ``d_pos``, ``d_neg``, ``h_pos``, ``h_neg``, ``growth_pos`` or ``growth_neg``."""
        if self.limits and name in self.limits:
            return float(self.limits[name])
        side = 1.0 if name.endswith("pos") else -1.0
        return float(getattr(self, name)(side * EPS_LIMIT))

    def slope_at_equilibrium(self, side: str) -> float:
        """One-sided derivative of ``g`` at ``alpha`` (side 'positive') or ``-1`` (side 'negative')."""
        if side == "positive":
            if self.slope_plus is not None:
                return float(self.slope_plus)
            a = self.alpha
            return float((self.g(a) - self.g(a * (1 - FD_STEP))) / (a * FD_STEP))
        if self.slope_minus is not None:
            return float(self.slope_minus)
        return float((self.g(-1.0 + FD_STEP) - self.g(-1.0)) / FD_STEP)

    def with_zero_values(self, d_zero: float, h_zero: float) -> "ScalarLimitProblem":
        return replace(self, d_zero=float(d_zero), h_zero=float(h_zero))


def reduce_to_scalar(system: CompetitionSystem) -> ScalarLimitProblem:
    """Restrict the self-diffusion, self-advection and growth onto the two axes."""
    a = float(system.alpha)
    D, H, g1, g2 = system.D, system.H, system.g1, system.g2

    def d_pos(z):
        return D.f11(np.asarray(z) / a, 0.0 * np.asarray(z))

    def d_neg(z):
        return D.f22(0.0 * np.asarray(z), -np.asarray(z))

    def h_pos(z):
        return H.f11(np.asarray(z) / a, 0.0 * np.asarray(z))

    def h_neg(z):
        return H.f22(0.0 * np.asarray(z), -np.asarray(z))

    def growth_pos(z):
        return g1(np.asarray(z) / a, 0.0 * np.asarray(z))

    def growth_neg(z):
        return g2(0.0 * np.asarray(z), -np.asarray(z))

    limits = {
        "d_pos": float(D.f11(0.0, 0.0)), "d_neg": float(D.f22(0.0, 0.0)),
        "h_pos": float(H.f11(0.0, 0.0)), "h_neg": float(H.f22(0.0, 0.0)),
        "growth_pos": float(g1(0.0, 0.0)), "growth_neg": float(g2(0.0, 0.0)),
    }
    slope_plus = slope_minus = None
    if g1.has_derivatives:
        # g = z g1(z/alpha, 0) and g1(1, 0) = 0
        slope_plus = float(g1(1.0, 0.0) + g1.du(1.0, 0.0))
    if g2.has_derivatives:
        slope_minus = float(g2(0.0, 1.0) + g2.dv(0.0, 1.0))
    return ScalarLimitProblem(
        alpha=a, d_pos=d_pos, d_neg=d_neg, h_pos=h_pos, h_neg=h_neg,
        growth_pos=growth_pos, growth_neg=growth_neg, limits=limits,
        slope_plus=slope_plus, slope_minus=slope_minus,
        d_zero=0.5 * (limits["d_pos"] + limits["d_neg"]),
        h_zero=0.5 * (limits["h_pos"] + limits["h_neg"]),
        name=system.name, params=dict(system.params),
    )


def scalar_problem(alpha=1.0, d_pos=1.0, d_neg=1.0, h_pos=0.0, h_neg=0.0,
                   growth_pos=None, growth_neg=None, r=1.0, name="custom") -> ScalarLimitProblem:
    """Convenience constructor taking constants or callables.

    Growth defaults to the logistic pair ``1 - z/alpha`` and ``r (1 + z)``.
    """

    def lift(x):
        if callable(x):
            return x
        x = float(x)
        return lambda z: x + 0.0 * np.asarray(z, dtype=float)

    if growth_pos is None:
        growth_pos = lambda z: 1.0 - np.asarray(z, dtype=float) / alpha  # noqa: E731
        slope_plus = -1.0
    else:
        slope_plus = None
    if growth_neg is None:
        growth_neg = lambda z: r * (1.0 + np.asarray(z, dtype=float))  # noqa: E731
        slope_minus = -r
    else:
        slope_minus = None
    return ScalarLimitProblem(
        alpha=float(alpha), d_pos=lift(d_pos), d_neg=lift(d_neg), h_pos=lift(h_pos), h_neg=lift(h_neg),
        growth_pos=growth_pos, growth_neg=growth_neg, slope_plus=slope_plus, slope_minus=slope_minus,
        name=name,
    )


def sample_invariants(problem: ScalarLimitProblem, n: int = 10_000) -> dict[str, bool]:
    """Check the structural properties of a reduced problem on a sample of ``[-1, alpha] \\ {0}``."""
    a = problem.alpha
    zp = np.linspace(0, a, n // 2 + 1)[1:]
    zn = np.linspace(-1, 0, n // 2 + 1)[:-1]
    inner_p, inner_n = zp[:-1], zn[1:]
    gp, gn = problem.g(inner_p), problem.g(inner_n)
    ends = [problem.g(-1.0), problem.g(0.0), problem.g(a)]
    return {
        "diffusion_positive": bool(np.all(problem.d(zp) > 0) and np.all(problem.d(zn) > 0)
                                   and problem.limit("d_pos") > 0 and problem.limit("d_neg") > 0),
        "bistable_sign": bool(np.all(gp > 0) and np.all(gn < 0)),
        "equilibria": bool(all(abs(float(e)) < 1e-12 for e in ends)),
        "finite": bool(all(np.all(np.isfinite(x)) for x in (problem.d(zp), problem.d(zn), problem.h(zp), problem.h(zn)))),
    }


def isclose_problem(p: ScalarLimitProblem, q: ScalarLimitProblem, n: int = 1000) -> bool:
    z = np.concatenate([np.linspace(-1, 0, n // 2, endpoint=False), np.linspace(p.alpha, 0, n // 2, endpoint=False)])
    return all(np.array_equal(getattr(p, m)(z), getattr(q, m)(z)) for m in ("d", "h", "g")) and math.isclose(p.alpha, q.alpha)
