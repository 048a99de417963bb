"""Command-line entry point ``flatnf``.

Every subcommand reads a JSON config (``"schema": 1``), applies flag
overrides, and writes one JSON document (plus a CSV for ``simulate``) that
echoes the full config and seed.  Exit codes: 0 success, 2 configuration
error, 3 numeric guard (enumeration cap, norm blow-up, step failure).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

SUBCOMMANDS = ("admissibility", "resonances", "clusters", "normal-form", "simulate", "measure", "selftest")

EXIT_OK, EXIT_CONFIG, EXIT_GUARD = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class RunConfig:
    """All tunables of a run.  ``None`` means "use the subcommand default"."""

    schema: int = 1
    metric: object = "admissible"
    M: float = 4.0
    s: float = 1.0
    epsilon: float = 0.05
    r: int = 1
    degree_cap: int | None = None
    kappa: float = 0.5
    lie_order: int = 6
    delta: float = 0.25
    gamma: object = "auto"
    seed: int = 0
    fprime0: float = -1.0
    xi: object = "auto"
    xi_radius: float = 2.0
    sextic_coefficient: float = 1.0
    hamiltonian: str = "hlo"
    data: str = "random"
    corners: list | None = None
    T: float = 10.0
    dt: float = 0.01
    stride: int = 100
    method: str = "split"
    samples: int = 10000
    lambda_set: str = "all"
    enum_cap: int = 200_000_000
    threads: int = 1

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, name, what):
            if not cond:
                raise ConfigError(f"field '{name}': {what}")

        need(self.schema == 1, "schema", "only schema 1 is supported")
        for name in ("M", "s", "epsilon", "dt", "T", "xi_radius"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v), name, "must be a finite number")
        need(self.M >= 1, "M", "must be at least 1")
        need(self.s > 0, "s", "must be positive")
        need(0 < self.epsilon < 1, "epsilon", "must lie in (0, 1)")
        need(isinstance(self.r, int) and self.r >= 1, "r", "must be a positive integer")
        need(self.degree_cap is None or (isinstance(self.degree_cap, int) and self.degree_cap >= 4 and self.degree_cap % 2 == 0), "degree_cap", "must be an even integer >= 4")
        need(self.kappa > 0, "kappa", "must be positive")
        need(isinstance(self.lie_order, int) and self.lie_order >= 2, "lie_order", "must be an integer >= 2")
        need(0 < self.delta < 1, "delta", "must lie in (0, 1)")
        need(self.gamma == "auto" or (isinstance(self.gamma, (int, float)) and 0 < self.gamma < 1), "gamma", "must be 'auto' or lie in (0, 1)")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
        need(self.xi == "auto" or isinstance(self.xi, list), "xi", "must be 'auto' or a list of actions")
        need(self.hamiltonian in ("hlo", "nls"), "hamiltonian", "must be 'hlo' or 'nls'")
        need(self.data in ("random", "rectangle"), "data", "must be 'random' or 'rectangle'")
        need(self.method in ("split", "midpoint"), "method", "must be 'split' or 'midpoint'")
        need(self.dt > 0, "dt", "must be positive")
        need(self.T >= 0, "T", "must be non-negative")
        need(isinstance(self.stride, int) and self.stride >= 1, "stride", "must be a positive integer")
        need(isinstance(self.samples, int) and self.samples >= 1, "samples", "must be a positive integer")
        need(self.lambda_set in ("all", "lambda"), "lambda_set", "must be 'all' or 'lambda'")
        need(isinstance(self.threads, int) and self.threads >= 1, "threads", "must be a positive integer")

    @property
    def gamma_value(self) -> float:
        return self.epsilon ** (1 / 30) if self.gamma == "auto" else float(self.gamma)

    def build_metric(self):
        from .lattice import admissible_example, load_metric, square_torus

        if self.metric == "admissible":
            return admissible_example()
        if self.metric == "square":
            return square_torus(2)
        if isinstance(self.metric, dict):
            try:
                return load_metric(self.metric)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"field 'metric': {exc}") from exc
        raise ConfigError("field 'metric': must be 'admissible', 'square' or an object with 'G'")


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _write(out_dir: Path, name: str, cfg: RunConfig, payload: dict) -> Path:
    doc = {"schema": 1, "subcommand": name, "seed": cfg.seed, "config": asdict(cfg), "result": payload}
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


# subcommands ----------------------------------------------------------------


def run_admissibility(cfg: RunConfig, args) -> dict:
    from .lattice import admissibility_scan

    return admissibility_scan(cfg.build_metric(), cfg.M).to_dict()


def run_resonances(cfg: RunConfig, args) -> dict:
    from .lattice import LatticeBall
    from .resonance import quartet_scan, rectangle_quartets

    metric = cfg.build_metric()
    ball = LatticeBall(metric.dim, cfg.M)
    scan = quartet_scan(metric, ball, cfg.enum_cap)
    kappa_star = 0.5 * scan.min_nonzero
    nontrivial = ~scan.trivial
    out = {
        "quartets": int(len(scan.omega)),
        "nontrivial": int(nontrivial.sum()),
        "min_nonzero_abs_omega": scan.min_nonzero,
        "kappa_star": kappa_star,
        "nontrivial_below_kappa_star": int((nontrivial & (np.abs(scan.omega) <= kappa_star)).sum()),
        "nontrivial_below_kappa": int((nontrivial & (np.abs(scan.omega) <= cfg.kappa)).sum()),
        "nontrivial_exact_zero": int((nontrivial & (scan.omega == 0)).sum()),
    }
    if metric.dim == 2 and np.array_equal(metric.G, np.eye(2)):
        out["rectangle_count"] = len(rectangle_quartets(ball))
    return out


def run_clusters(cfg: RunConfig, args) -> dict:
    from .clusters import build_partition, verify_partition
    from .lattice import LatticeBall

    metric = cfg.build_metric()
    part = build_partition(metric, LatticeBall(metric.dim, cfg.M), cfg.delta)
    rep = verify_partition(part, metric)
    return {"partition": part.to_dict(), "report": asdict(rep)}


def _normal_form_setup(cfg: RunConfig):
    from .lattice import LatticeBall
    from .normalform import draw_nonresonant_xi
    from .polyalg import ParamSchedule
    from .resonance import HomogeneousPoly, kappa_filter

    metric = cfg.build_metric()
    ball = LatticeBall(metric.dim, cfg.M)
    cap = cfg.degree_cap or 8
    sched = ParamSchedule(cfg.epsilon, cfg.s, cfg.r, rbar_cap=cap)
    extras = []
    if cfg.sextic_coefficient:
        extras.append(kappa_filter(HomogeneousPoly.constant(3, ball, cfg.sextic_coefficient), metric, cfg.kappa))
    if cfg.xi == "auto":
        xi, tries = draw_nonresonant_xi(metric, ball, cfg.fprime0, sched, cfg.xi_radius, cfg.seed, extras)
    else:
        xi, tries = np.asarray(cfg.xi, dtype=float), 0
        if xi.shape != (len(ball),) or np.any(xi < 0):
            raise ConfigError(f"field 'xi': need {len(ball)} non-negative actions")
    return metric, ball, sched, extras, xi, tries


def run_normal_form(cfg: RunConfig, args) -> dict:
    from .normalform import initial_state, lie_step, scale_advance
    from .polyalg import norms

    metric, ball, sched, extras, xi, tries = _normal_form_setup(cfg)
    state = initial_state(metric, ball, cfg.fprime0, xi, sched, extras)
    steps = []
    for alpha in range(args.alpha_max):
        for j in range(min(args.steps, cfg.lie_order - 1)):
            state = lie_step(state, j, cfg.lie_order, sched.rbar_cap)
            rec = dict(state.history[-1])
            rec["frequency_drift"] = float(np.abs(2 * (state.omega.omega - state.omega_scale_start)).max())
            rec["lambda_norms"] = norms(state.lambda_part(), state.weights, state.alpha).to_dict()
            steps.append(rec)
        if alpha + 1 < args.alpha_max:
            state = scale_advance(state)
            steps.append(state.history[-1])
    return {
        "xi": xi,
        "xi_draws": tries,
        "steps": steps,
        "remainder": [e.to_dict() for e in state.remainder_log],
        "final_frequencies": state.omega.modulated(),
    }


def run_simulate(cfg: RunConfig, args, out_dir: Path) -> dict:
    from .lattice import LatticeBall
    from .measure import sample_ball
    from .simulator import TruncatedNLS, build_hlo, integrate, rectangle_seed

    metric = cfg.build_metric()
    ball = LatticeBall(metric.dim, cfg.M)
    H = build_hlo(metric, ball, cfg.fprime0) if cfg.hamiltonian == "hlo" else TruncatedNLS(metric, ball, cfg.fprime0)
    if cfg.data == "rectangle":
        if not cfg.corners:
            raise ConfigError("field 'corners': rectangle data needs a list of sites")
        try:
            u0 = rectangle_seed(ball, cfg.epsilon, cfg.s, cfg.corners)
        except KeyError as exc:
            raise ConfigError(f"field 'corners': site {exc} outside the ball") from exc
    else:
        u0 = sample_ball(ball, cfg.s, cfg.epsilon, 1, cfg.seed)[0]
    series = integrate(H, u0, cfg.T, cfg.dt, stride=cfg.stride, method=cfg.method, s=cfg.s)
    out_dir.mkdir(parents=True, exist_ok=True)
    series.to_csv(out_dir / "simulate.csv")
    return {
        "csv": "simulate.csv",
        "samples": len(series),
        "mass_drift": series.relative_drift("mass"),
        "energy_drift": series.relative_drift("energy"),
        "max_action_dev": max(series.action_dev),
    }


def run_measure(cfg: RunConfig, args) -> dict:
    from .lattice import LatticeBall
    from .measure import NonResonanceSpec, ball_volume, nonresonant_fraction

    metric = cfg.build_metric()
    ball = LatticeBall(metric.dim, cfg.M)
    spec = NonResonanceSpec(cfg.gamma_value, cfg.epsilon, cfg.s, cfg.degree_cap or 6, cfg.lambda_set)
    rep = nonresonant_fraction(metric, ball, cfg.s, cfg.epsilon, spec, cfg.samples, cfg.seed)
    out = rep.to_dict()
    out["ball_volume"] = ball_volume(ball, cfg.s, cfg.epsilon).to_dict()
    return out


def run_selftest(cfg: RunConfig, args) -> dict:
    from .selftest import run_all

    results = run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return {"checks": [{"name": n, "pass": ok, "detail": d} for n, ok, d in results], "all_pass": all(ok for _, ok, _ in results)}


# entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flatnf", description="Normal-form and stability tools for NLS on flat tori.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, help="worker count (falls back to FLATNF_THREADS)")
        p.add_argument("--seed", type=int, help="64-bit seed")
        if name == "normal-form":
            p.add_argument("--alpha-max", type=int, default=1)
            p.add_argument("--steps", type=int, default=3)
        if name == "measure":
            p.add_argument("--samples", type=int)
            p.add_argument("--gamma", help="'auto' or a number in (0, 1)")
        if name == "simulate":
            p.add_argument("--T", type=float)
            p.add_argument("--dt", type=float)
    return parser


def _resolve(args) -> RunConfig:
    data = load_config(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    threads = args.threads if args.threads is not None else os.environ.get("FLATNF_THREADS")
    if threads is not None:
        try:
            data["threads"] = int(threads)
        except ValueError as exc:
            raise ConfigError("field 'threads': must be an integer") from exc
    if getattr(args, "samples", None) is not None:
        data["samples"] = args.samples
    if getattr(args, "gamma", None) is not None:
        try:
            data["gamma"] = "auto" if args.gamma == "auto" else float(args.gamma)
        except ValueError as exc:
            raise ConfigError("field 'gamma': must be 'auto' or a number") from exc
    for key in ("T", "dt"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    try:
        return RunConfig.from_mapping(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    from .normalform import NormBlowupError
    from .resonance import EnumerationCapError
    from .simulator import StepFailure

    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        cfg.build_metric()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    handlers = {
        "admissibility": run_admissibility,
        "resonances": run_resonances,
        "clusters": run_clusters,
        "normal-form": run_normal_form,
        "measure": run_measure,
        "selftest": run_selftest,
    }
    try:
        if args.command == "simulate":
            payload = run_simulate(cfg, args, out_dir)
        else:
            payload = handlers[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnumerationCapError, NormBlowupError, StepFailure) as exc:
        _write(out_dir, args.command, cfg, {"aborted": type(exc).__name__, "diagnostic": str(exc)})
        print(f"numeric guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    path = _write(out_dir, args.command, cfg, payload)
    print(path)
    if args.command == "selftest" and not payload["all_pass"]:
        return 1
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
