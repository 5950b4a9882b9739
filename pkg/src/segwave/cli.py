"""Command-line entry point.

Each subcommand reads an optional TOML run file, applies flag overrides, runs
one computation and writes CSV/JSON reports into the output directory.
Exit codes: 0 success, 1 numerical failure, 2 violated hypothesis or bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .limits import choose_anchor, convergence_study
from .model import PRESET_PARAMS, Preset, make_preset, reduce_to_scalar, validate_assumptions
from .phaseplane import (BracketInvalid, MinimalSpeedsNotOrdered, PhasePlaneError, ProfileOptions,
                         ShootOptions, free_boundary_residual, match_bistable, minimal_speed)
from .speedsign import cross_check_sign, kpp_linear_speed, sign_functional, speed_estimates
from .system_wave import NewtonDiverged, SolverConfig, continue_in_k, initial_guess_from_limit

log = logging.getLogger("segwave")

OUT_ENV = "SEGWAVE_OUT"
EXIT_OK, EXIT_NUMERIC, EXIT_HYPOTHESIS = 0, 1, 2


class ConfigError(ValueError):
    pass


class HypothesisViolation(RuntimeError):
    pass


@dataclass
class PresetSection:
    name: str = "LotkaVolterra"
    alpha: float = 1.0
    k: float = 1.0
    params: dict = field(default_factory=dict)


@dataclass
class SolverSection:
    L: float = 40.0
    N: int = 4000
    newton_tol: float = 1e-9
    max_newton_iters: int = 30
    k_schedule: list = field(default_factory=lambda: [10.0, 100.0, 1000.0, 10000.0])
    phase_anchor: str = "auto"
    jacobian: str = "auto"
    rtol: float = 1e-10
    atol: float = 1e-14
    speed_tol: float = 1e-6
    flux_rel_tol: float = 1e-8
    dx: float = 0.01
    half_width: float = 20.0


@dataclass
class OutputSection:
    directory: str = ""  # empty: $SEGWAVE_OUT, then the working directory
    formats: list = field(default_factory=lambda: ["csv", "json"])


@dataclass
class RunConfig:
    preset: PresetSection = field(default_factory=PresetSection)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return asdict(self)

    # -- derived option objects

    def system(self):
        p = self.preset
        return make_preset(Preset(p.name, dict(p.params), p.alpha, p.k))

    def shoot_options(self) -> ShootOptions:
        s = self.solver
        return ShootOptions(rtol=s.rtol, atol=s.atol, speed_tol=s.speed_tol, flux_rel_tol=s.flux_rel_tol)

    def profile_options(self) -> ProfileOptions:
        return ProfileOptions(dx=self.solver.dx, half_width=self.solver.half_width)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        anchor = "phi_half" if s.phase_anchor == "auto" else s.phase_anchor
        return SolverConfig(L=s.L, N=s.N, newton_tol=s.newton_tol, max_newton_iters=s.max_newton_iters,
                            k_schedule=tuple(s.k_schedule), phase_anchor=anchor, jacobian=s.jacobian)


_SECTIONS = {"preset": PresetSection, "solver": SolverSection, "output": OutputSection}


def _coerce(section: str, key: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"[{section}] {key} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"[{section}] {key} must be a list")
        return list(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"[{section}] {key} must be a table")
        return dict(value)
    raise ConfigError(f"[{section}] {key}: unsupported value")


def config_from_mapping(data: dict) -> RunConfig:
    """Strict conversion: unknown sections or keys raise ConfigError."""
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}")
    cfg = RunConfig()
    for section, cls in _SECTIONS.items():
        raw = data.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{section}] must be a table")
        target = getattr(cfg, section)
        names = {f.name for f in fields(cls)}
        bad = set(raw) - names
        if bad:
            raise ConfigError(f"unknown key(s) {sorted(bad)} in [{section}]")
        for key, value in raw.items():
            setattr(target, key, _coerce(section, key, value, getattr(target, key)))
    return cfg


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}") from err
    return config_from_mapping(data)


def _parse_value(text: str):
    try:
        return float(text)
    except ValueError as err:
        raise ConfigError(f"parameter value {text!r} is not a number") from err


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.preset is not None:
        if args.preset != cfg.preset.name:
            cfg.preset.params = {}
        cfg.preset.name = args.preset
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        cfg.preset.params[key.strip()] = _parse_value(value)
    if args.alpha is not None:
        cfg.preset.alpha = args.alpha
    if args.k is not None:
        cfg.preset.k = args.k
    if args.schedule is not None:
        try:
            cfg.solver.k_schedule = [float(s) for s in args.schedule.split(",") if s.strip()]
        except ValueError as err:
            raise ConfigError(f"--schedule expects comma-separated numbers, got {args.schedule!r}") from err
    if args.N is not None:
        cfg.solver.N = args.N
    if args.L is not None:
        cfg.solver.L = args.L
    if args.out is not None:
        cfg.output.directory = args.out
    if not cfg.output.directory:
        cfg.output.directory = os.environ.get(OUT_ENV) or "."
    return cfg


def resolve(cfg: RunConfig) -> RunConfig:
    """Fill preset defaults and check every value once, before any computation."""
    p = cfg.preset
    if p.name not in PRESET_PARAMS:
        raise ConfigError(f"unknown preset {p.name!r}; expected one of {sorted(PRESET_PARAMS)}")
    ks = cfg.solver.k_schedule
    if not ks or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in ks):
        raise ConfigError("k_schedule must be a nonempty list of positive numbers")
    cfg.solver.k_schedule = [float(x) for x in ks]
    if cfg.solver.jacobian not in ("auto", "analytic", "fd"):
        raise ConfigError("jacobian must be auto, analytic or fd")
    try:
        p.params = Preset(p.name, dict(p.params), p.alpha, p.k).resolved()
        if not (p.alpha > 0 and p.k > 0):
            raise ValueError("alpha and k must be positive")
        cfg.solver_config()
    except ValueError as err:
        raise ConfigError(str(err)) from err
    if cfg.solver.phase_anchor not in ("auto", "phi_half", "psi_half"):
        raise ConfigError("phase_anchor must be auto, phi_half or psi_half")
    bad = set(cfg.output.formats) - {"csv", "json"}
    if bad:
        raise ConfigError(f"unknown output format(s) {sorted(bad)}")
    return cfg


# ---------------------------------------------------------------------------
# writers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.output.directory)
        self.written: list[Path] = []

    def _path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root / name

    def json(self, name: str, payload: dict):
        if "json" not in self.cfg.output.formats:
            return
        body = dict(payload)
        body["config"] = self.cfg.to_dict()
        path = self._path(name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_clean(body), fh, sort_keys=True, indent=2, allow_nan=False)
            fh.write("\n")
        self.written.append(path)

    def csv(self, name: str, header: list[str], columns: list):
        if "csv" not in self.cfg.output.formats:
            return
        path = self._path(name)
        cols = [list(c) for c in columns]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([_fmt(v) for v in row])
        self.written.append(path)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating, int, np.integer)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# commands


def _limit(cfg: RunConfig, system=None):
    system = system or cfg.system()
    problem = reduce_to_scalar(system)
    wave = match_bistable(problem, cfg.shoot_options(), cfg.profile_options())
    return system, problem, wave


def cmd_limit_wave(cfg: RunConfig, args=None) -> dict:
    system, _, wave = _limit(cfg)
    out = Writer(cfg)
    out.csv("limit_wave.csv", ["xi", "z", "phi", "psi"],
            [wave.xi_grid, wave.z_values, wave.phi_values, wave.psi_values])
    report = {
        "c_inf": wave.c_inf, "c_star_plus": wave.c_star_plus, "c_star_minus": wave.c_star_minus,
        "flux_at_zero": wave.flux_at_zero, "free_boundary_residual": free_boundary_residual(wave, system),
        "matching_residual": wave.matching_residual, "iterations": wave.iterations,
    }
    out.json("limit_wave.json", report)
    return report


def cmd_minimal_speed(cfg: RunConfig, args=None) -> dict:
    side = getattr(args, "side", None) or "positive"
    sides = ["positive", "negative"] if side == "both" else [side]
    problem = reduce_to_scalar(cfg.system())
    est = speed_estimates(problem, cfg.shoot_options().upper_grid)
    out = Writer(cfg)
    reports = {}
    for s in sides:
        res = minimal_speed(problem, s, cfg.shoot_options())
        key = "pos" if s == "positive" else "neg"
        report = {
            "side": s, "c_star": res.c_star, "bracket": list(res.bracket), "iterations": res.iterations,
            "estimates": {"lower": est[f"lower_{key}"], "upper": est[f"upper_{key}"]},
            "linear_value": kpp_linear_speed(problem, s),
        }
        out.json(f"cstar_{s}.json", report)
        reports[s] = report
    return reports


def cmd_system_wave(cfg: RunConfig, args=None) -> dict:
    system, _, limit = _limit(cfg)
    k = cfg.preset.k
    sc = cfg.solver_config()
    if cfg.solver.phase_anchor == "auto":
        sc = replace(sc, phase_anchor=choose_anchor(limit))
    schedule = sorted({x for x in cfg.solver.k_schedule if x < k} | {k})
    guess = initial_guess_from_limit(limit, schedule[0], sc)
    res = continue_in_k(system, sc, guess, schedule)
    if res.failure is not None:
        raise res.failure
    wave = res.waves[-1]
    out = Writer(cfg)
    out.csv("system_wave.csv", ["xi", "phi", "psi"], [wave.grid, wave.phi, wave.psi])
    report = {"k": wave.k, "c_k": wave.c_k, "residual_norm": wave.residual_norm,
              "newton_iterations": wave.iterations, "monotone_ok": wave.monotone_ok,
              "segregation": wave.segregation, "anchor": wave.anchor, "c_inf": limit.c_inf,
              "c_star_plus": limit.c_star_plus, "c_star_minus": limit.c_star_minus,
              "continuation": res.diagnostics}
    out.json("system_wave.json", report)
    return report


def _k_label(k: float) -> str:
    return f"{k:g}".replace("+", "")


def cmd_sweep_k(cfg: RunConfig, args=None) -> dict:
    system = cfg.system()
    schedule = list(cfg.solver.k_schedule)
    rep = convergence_study(system, cfg.solver_config(), schedule, cfg.shoot_options(),
                            cfg.profile_options(), auto_anchor=cfg.solver.phase_anchor == "auto")
    out = Writer(cfg)
    done = {r.k: r for r in rep.rows}
    cols = {n: [] for n in ("k", "c_k", "dc", "sup_dist", "deriv_l1", "segregation", "monotone_ok", "status")}
    for k in schedule:
        r = done.get(float(k))
        cols["k"].append(float(k))
        if r is None:
            log.warning("no converged wave at k=%g", k)
            for n in ("c_k", "dc", "sup_dist", "deriv_l1", "segregation"):
                cols[n].append(float("nan"))
            cols["monotone_ok"].append(False)
            cols["status"].append("failed")
        else:
            for n in ("c_k", "dc", "sup_dist", "deriv_l1", "segregation"):
                cols[n].append(getattr(r, n))
            cols["monotone_ok"].append(r.monotone_ok)
            cols["status"].append("ok")
    out.csv("sweep.csv", list(cols), list(cols.values()))
    for w in rep.waves:
        out.csv(f"profile_k{_k_label(w.k)}.csv", ["xi", "phi", "psi"], [w.grid, w.phi, w.psi])
    report = {"c_inf": rep.c_inf, "c_star_plus": rep.c_star_plus, "c_star_minus": rep.c_star_minus,
              "flux_at_zero": rep.flux, "rows": [r.as_dict() for r in rep.rows], "failure": rep.failure}
    out.json("sweep.json", report)
    return report


def cmd_speed_sign(cfg: RunConfig, args=None) -> dict:
    system = cfg.system()
    rep = sign_functional(system, strict=False)
    report = {"I1": rep.I1, "I2": rep.I2, "S": rep.S, "predicted_sign": rep.predicted_sign,
              "h0": rep.h0, "quadrature_error": rep.quadrature_error, "applicable": rep.applicable}
    if rep.applicable and getattr(args, "wave", False):
        verdict = cross_check_sign(system, opts=cfg.shoot_options())
        report["verdict"] = verdict.verdict
        report["c_inf"] = verdict.c_inf
    elif not rep.applicable:
        report["verdict"] = "inapplicable"
    Writer(cfg).json("sign.json", report)
    if not rep.applicable:
        raise HypothesisViolation("sign formula inapplicable: h11 and h22 are not a common constant")
    return report


def cmd_validate(cfg: RunConfig, args=None) -> dict:
    rep = validate_assumptions(cfg.system())
    report = {"passed": rep.passed,
              "checks": [{"name": c.name, "passed": c.passed, "value": c.value,
                          "worst_point": list(c.worst_point) if c.worst_point else None,
                          "detail": c.detail} for c in rep.checks]}
    Writer(cfg).json("validate.json", report)
    if not rep.passed:
        raise HypothesisViolation("failed checks: " + ", ".join(c.name for c in rep.failures()))
    return report


COMMANDS = {
    "limit-wave": cmd_limit_wave,
    "minimal-speed": cmd_minimal_speed,
    "system-wave": cmd_system_wave,
    "sweep-k": cmd_sweep_k,
    "speed-sign": cmd_speed_sign,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run file")
    common.add_argument("--preset", choices=sorted(PRESET_PARAMS))
    common.add_argument("--param", action="append", metavar="KEY=VALUE", help="preset parameter (repeatable)")
    common.add_argument("--alpha", type=float)
    common.add_argument("--k", type=float, help="competition rate")
    common.add_argument("--schedule", help="comma-separated k values")
    common.add_argument("--N", type=int, help="interior grid nodes")
    common.add_argument("--L", type=float, help="domain half-width")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="segwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "minimal-speed":
            p.add_argument("--side", choices=["positive", "negative", "both"], default="positive")
        if name == "speed-sign":
            p.add_argument("--wave", action="store_true", help="also compute c_inf and cross-check the sign")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(apply_overrides(load_config(args.config), args))
    except (ConfigError, OSError) as err:
        print(f"segwave: config error: {err}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    try:
        COMMANDS[args.command](cfg, args)
    except (MinimalSpeedsNotOrdered, HypothesisViolation) as err:
        print(f"segwave: hypothesis violated: {err}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (BracketInvalid, PhasePlaneError, NewtonDiverged, FloatingPointError, ValueError) as err:
        print(f"segwave: numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
