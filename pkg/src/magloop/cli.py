"""Command-line interface: one experiment per process invocation.

Subcommands:

  run        full continuation experiment from a JSON config
  mpass      single minimax solve at fixed (eps, tau)
  flow       integrate the Lorentz flow and write a trajectory CSV
  gradcheck  analytic vs finite-difference gradients on random loops
  oracle     reference values (larmor / profile / shoot)

Exit codes: 0 ConvergedExtremal or DivergingLengths, 2 config error,
3 Inconclusive (also a failed mpass/gradcheck), 4 NoNegativeLoopFound.
No network access; all output lands under the experiment's output_dir.
Relative output paths resolve under $MAGLOOP_OUTPUT_ROOT when that is set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .action import ActionParams
from .continuation import (Classification, ConvergedExtremal,
                           DivergingLengths, Inconclusive, Schedule,
                           continuation_run)
from .dynamics import FlowState, integrate_flow, write_trajectory_csv
from .errors import ConfigError, NoNegativeLoopFound
from .geometry import ChartPoint, GeometryKind, GeometrySpec, metric_eval
from .loops import Loop, save_loop_csv
from .minimax import DescentSettings, family_minimax, init_sweep_family
from .oracle import (circle_action_profile, fd_gradient, larmor_orbit,
                     orbit_to_loop, shooting_periodic)

OUTPUT_ROOT_ENV = "MAGLOOP_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3
EXIT_NO_NEGATIVE_LOOP = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see README for the JSON schema)."""

    geometry: GeometrySpec
    E: float
    w_shape: str
    n_vertices: int
    family_size: int
    m_p: int
    schedule: Schedule
    delta: float
    beta_frac: float
    nested: bool
    solver: DescentSettings
    output_dir: str
    seed: int

    def to_json_dict(self, include_seed: bool = True) -> dict:
        obj = {
            "geometry": self.geometry.to_json_dict(),
            "E": self.E,
            "w_shape": self.w_shape,
            "discretization": {
                "n_vertices": self.n_vertices,
                "family_size": self.family_size,
                "m_p": self.m_p,
            },
            "action": {
                "eps0": self.schedule.eps0,
                "tau0": self.schedule.tau0,
                "rho": self.schedule.rho,
                "n_steps": self.schedule.n_steps,
                "delta": self.delta,
                "beta_frac": self.beta_frac,
                "nested": self.nested,
            },
            "solver": {
                "max_iters": self.solver.max_iters,
                "grad_tol": self.solver.grad_tol,
                "step0": self.solver.step0,
                "backtrack": self.solver.backtrack,
            },
            "output_dir": self.output_dir,
        }
        if include_seed:
            obj["seed"] = self.seed
        return obj


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return obj[key]


def _check_keys(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _number(obj, key, where, default=None, required=False, integer=False):
    if key not in obj:
        if required:
            raise ConfigError(f"{where}: missing required key '{key}'")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number")
    if integer:
        if int(val) != val:
            raise ConfigError(f"{where}.{key}: expected an integer")
        return int(val)
    return float(val)


def parse_config_dict(obj: dict) -> ExperimentConfig:
    _check_keys(obj, {"geometry", "E", "w_shape", "discretization", "action",
                      "solver", "output_dir", "seed"}, "config")
    geometry = GeometrySpec.from_json_dict(_require(obj, "geometry", "config"))

    E = _number(obj, "E", "config", required=True)
    if not (math.isfinite(E) and E > 0):
        raise ConfigError("config.E: must be positive")

    w_shape = _require(obj, "w_shape", "config")
    if w_shape not in ("path", "cylinder"):
        raise ConfigError("config.w_shape: must be 'path' or 'cylinder'")

    disc = obj.get("discretization", {})
    _check_keys(disc, {"n_vertices", "family_size", "m_p"},
                "config.discretization")
    n_vertices = _number(disc, "n_vertices", "config.discretization",
                         default=128, integer=True)
    family_size = _number(disc, "family_size", "config.discretization",
                          default=33, integer=True)
    m_p = _number(disc, "m_p", "config.discretization", default=8,
                  integer=True)
    if n_vertices < 3:
        raise ConfigError("config.discretization.n_vertices: must be >= 3")
    if family_size < 3:
        raise ConfigError("config.discretization.family_size: must be >= 3")
    if m_p < 1:
        raise ConfigError("config.discretization.m_p: must be >= 1")

    act = _require(obj, "action", "config")
    _check_keys(act, {"eps0", "tau0", "rho", "n_steps", "delta", "beta_frac",
                      "nested"}, "config.action")
    eps0 = _number(act, "eps0", "config.action", required=True)
    tau0 = _number(act, "tau0", "config.action", required=True)
    rho = _number(act, "rho", "config.action", required=True)
    n_steps = _number(act, "n_steps", "config.action", required=True,
                      integer=True)
    delta = _number(act, "delta", "config.action", default=1e-9)
    beta_frac = _number(act, "beta_frac", "config.action", default=0.1)
    nested = act.get("nested", False)
    if not isinstance(nested, bool):
        raise ConfigError("config.action.nested: expected a boolean")
    if not (eps0 > 0):
        raise ConfigError("config.action.eps0: must be positive")
    if not (0.0 <= tau0 < 1.0):
        raise ConfigError("config.action.tau0: tau must satisfy 0 <= tau < 1")
    if not (0.0 < rho < 1.0):
        raise ConfigError("config.action.rho: must lie in (0, 1)")
    if n_steps < 1:
        raise ConfigError("config.action.n_steps: must be >= 1")
    if delta < 0:
        raise ConfigError("config.action.delta: must be nonnegative")
    if not (beta_frac > 0):
        raise ConfigError("config.action.beta_frac: must be positive")

    sol = obj.get("solver", {})
    _check_keys(sol, {"max_iters", "grad_tol", "step0", "backtrack"},
                "config.solver")
    seed = _number(obj, "seed", "config", default=0, integer=True)
    if seed < 0:
        raise ConfigError("config.seed: must be nonnegative")
    try:
        solver = DescentSettings(
            max_iters=_number(sol, "max_iters", "config.solver", default=400,
                              integer=True),
            grad_tol=_number(sol, "grad_tol", "config.solver", default=1e-6),
            step0=_number(sol, "step0", "config.solver", default=0.1),
            backtrack=_number(sol, "backtrack", "config.solver", default=0.5),
            family_size=family_size,
            family_size_p=m_p,
            rng_seed=seed,
        )
        schedule = Schedule(eps0=eps0, tau0=tau0, rho=rho, n_steps=n_steps)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None

    output_dir = _require(obj, "output_dir", "config")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("config.output_dir: expected a nonempty string")

    return ExperimentConfig(
        geometry=geometry, E=E, w_shape=w_shape, n_vertices=n_vertices,
        family_size=family_size, m_p=m_p, schedule=schedule, delta=delta,
        beta_frac=beta_frac, nested=nested, solver=solver,
        output_dir=output_dir, seed=seed)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON: {exc.msg} at line {exc.lineno} "
            f"column {exc.colno}") from None
    return parse_config_dict(obj)


def serialize_config(config: ExperimentConfig) -> str:
    return json.dumps(config.to_json_dict(), sort_keys=True, indent=2)


def resolve_output_dir(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_absolute():
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root:
            path = Path(root) / path
    return path


def classification_exit_code(classification: Classification) -> int:
    """Exit codes: converged and diverging both succeed; inconclusive is 3."""
    if isinstance(classification, (ConvergedExtremal, DivergingLengths)):
        return EXIT_OK
    if isinstance(classification, Inconclusive):
        return EXIT_INCONCLUSIVE
    raise TypeError(f"not a classification: {classification!r}")


def _json_dump(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def run_experiment(config: ExperimentConfig, verbose: bool = False) -> int:
    """Execute one continuation experiment; writes result.json, summary.txt,
    and step_<n>.csv loops under output_dir.  Returns the process exit code.
    """
    out = resolve_output_dir(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        records, classification, c_ref = continuation_run(
            config.geometry, config.E, config.w_shape, config.schedule,
            config.solver, n_vertices=config.n_vertices, delta=config.delta,
            beta_frac=config.beta_frac, nested=config.nested)
    except NoNegativeLoopFound as exc:
        (out / "summary.txt").write_text(
            f"NoNegativeLoopFound: {exc}\nexit code {EXIT_NO_NEGATIVE_LOOP}\n")
        print(f"no negative-action loop: {exc}", file=sys.stderr)
        return EXIT_NO_NEGATIVE_LOOP
    elapsed = time.perf_counter() - t0

    rec_objs = []
    for rec in records:
        name = f"step_{rec.step}.csv"
        save_loop_csv(out / name, rec.loop, torus=config.geometry.is_torus)
        entry = rec.to_json_dict()
        entry["loop_csv"] = name
        rec_objs.append(entry)

    result = {
        "version": __version__,
        "config": config.to_json_dict(include_seed=False),
        "c_ref": c_ref,
        "beta": config.beta_frac * c_ref if c_ref > 0 else None,
        "records": rec_objs,
        "classification": classification.to_json_dict(),
        "timings": {"total_s": elapsed},
    }
    _json_dump(out / "result.json", result)

    lines = [
        f"magloop {__version__}",
        f"seed {config.seed}",
        f"classification: {classification.case}",
        f"bootstrap level c_ref = {c_ref!r}",
        f"elapsed {elapsed:.3f} s",
    ]
    for rec in records:
        lines.append(
            f"step {rec.step}: eps={rec.eps:.6g} tau={rec.tau:.6g} "
            f"level={rec.level!r} l={rec.l!r} nu={rec.nu:.6g} "
            f"residual={rec.residual.max_res:.3e}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if verbose:
        print("\n".join(lines))
    code = classification_exit_code(classification)
    print(f"{classification.case}: level trail "
          f"{[round(r.level, 6) for r in records]} -> exit {code}")
    return code


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.output_dir:
        config = ExperimentConfig(
            **{**config.__dict__, "output_dir": args.output_dir})
    return run_experiment(config, verbose=args.verbose)


def _cmd_mpass(args) -> int:
    config = load_config(args.config)
    eps = config.schedule.eps0 if args.eps is None else args.eps
    tau = config.schedule.tau0 if args.tau is None else args.tau
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    if not (0.0 <= tau < 1.0):
        raise ConfigError("tau must satisfy 0 <= tau < 1")
    params = ActionParams(E=config.E, eps=eps, tau=tau, delta=config.delta)
    family = init_sweep_family(config.geometry, config.E, config.w_shape,
                               config.family_size, config.n_vertices,
                               config.seed, m_p=config.m_p)
    result = family_minimax(config.geometry, family, params, config.solver)
    out = resolve_output_dir(args.output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _json_dump(out / "mpass_result.json", result.to_json_dict())
    save_loop_csv(out / "mpass_loop.csv", result.argmax,
                  torus=config.geometry.is_torus)
    print(json.dumps({"level": result.level, "converged": result.converged,
                      "grad_norm": result.grad_norm}))
    return EXIT_OK if result.converged else EXIT_INCONCLUSIVE


def _geometry_from_args(args) -> GeometrySpec:
    try:
        kind = GeometryKind(args.kind)
    except ValueError:
        raise ConfigError(f"unknown geometry kind {args.kind!r}") from None
    return GeometrySpec(kind=kind, B=args.B, a=args.a, k=args.k,
                        u_amp=args.u_amp)


def _cmd_flow(args) -> int:
    spec = _geometry_from_args(args)
    if args.speed <= 0:
        raise ConfigError("speed must be positive")
    if args.T <= 0 or args.steps < 1:
        raise ConfigError("T must be positive and steps >= 1")
    p = ChartPoint(args.x0, args.y0)
    direction = np.array([math.cos(args.angle), math.sin(args.angle)])
    g = metric_eval(spec, p)
    direction = direction / math.sqrt(float(direction @ g @ direction))
    state = FlowState(p, args.speed * direction)
    states = integrate_flow(spec, state, args.T, args.steps)
    out = resolve_output_dir(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", spec, states, args.T)
    first, last = states[0].as_array(), states[-1].as_array()
    gap = last - first
    if spec.is_torus:
        gap[:2] = gap[:2] - np.round(gap[:2])
    closure = float(np.linalg.norm(gap))
    energies = [0.5 * float(s.v @ metric_eval(spec, s.p) @ s.v)
                for s in states]
    drift = max(abs(e - energies[0]) for e in energies)
    print(json.dumps({"closure_residual": closure, "energy_drift": drift}))
    return EXIT_OK


def _random_loop(rng, spec, n):
    """Smooth random loop: a displaced ellipse plus low-order Fourier noise."""
    theta = 2.0 * np.pi * np.arange(n) / n
    center = rng.uniform(0.2, 0.8, size=2) if spec.is_torus else \
        rng.uniform(-1.0, 1.0, size=2)
    rx, ry = rng.uniform(0.05, 0.15, size=2)
    verts = np.stack([center[0] + rx * np.cos(theta),
                      center[1] + ry * np.sin(theta)], axis=1)
    for mode in (2, 3):
        amp = 0.02 * rng.standard_normal(2)
        verts[:, 0] += amp[0] * np.cos(mode * theta)
        verts[:, 1] += amp[1] * np.sin(mode * theta)
    w = np.zeros((n, 2), dtype=int)
    if spec.is_torus and rng.uniform() < 0.3:
        w[rng.integers(0, n)] = rng.integers(-1, 2, size=2)
    return Loop(verts, w)


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    specs = [
        GeometrySpec(GeometryKind.PLANE_CONSTANT_B, B=1.0),
        GeometrySpec(GeometryKind.FLAT_TORUS_SINE, a=1.5, k=2),
        GeometrySpec(GeometryKind.CONFORMAL_TORUS, a=1.0, k=1, u_amp=0.3),
    ]
    from .action import CutoffSpec, grad_action
    worst = 0.0
    for i in range(args.loops):
        spec = specs[i % len(specs)]
        loop = _random_loop(rng, spec, args.n)
        params = ActionParams(E=float(rng.uniform(0.5, 2.0)),
                              eps=float(rng.choice([0.0, 1e-2, 0.1])),
                              tau=float(rng.choice([0.0, 0.3])))
        cut = CutoffSpec(c_ref=1.0, beta=0.1) if i % 4 == 0 else None
        analytic = grad_action(spec, loop, params, cut)
        numeric = fd_gradient(spec, loop, params, cut, h=args.h)
        scale = max(float(np.linalg.norm(numeric.ravel())), 1e-12)
        rel = float(np.linalg.norm((analytic - numeric).ravel())) / scale
        worst = max(worst, rel)
    print(json.dumps({"loops": args.loops, "max_rel_error": worst,
                      "tol": args.tol}))
    return EXIT_OK if worst < args.tol else EXIT_INCONCLUSIVE


def _cmd_oracle(args) -> int:
    if args.oracle_cmd == "larmor":
        radius, level = larmor_orbit(args.E, args.B)
        print(json.dumps({"radius": radius, "level": level}))
        return EXIT_OK
    if args.oracle_cmd == "profile":
        spec = GeometrySpec(GeometryKind.PLANE_CONSTANT_B, B=args.B)
        r_grid = np.linspace(0.0, args.r_max, args.points)
        values = circle_action_profile(spec, args.E, r_grid, args.n)
        out = resolve_output_dir(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "profile.csv", "w") as fh:
            fh.write("r,S\n")
            for r, s in zip(r_grid, values):
                fh.write(f"{float(r)!r},{float(s)!r}\n")
        i_max = int(np.argmax(values))
        print(json.dumps({"r_max": float(r_grid[i_max]),
                          "level": float(values[i_max])}))
        return EXIT_OK
    if args.oracle_cmd == "shoot":
        spec = _geometry_from_args(args)
        rng = np.random.default_rng(args.seed)
        seeds = []
        for _ in range(args.seeds):
            p = ChartPoint(float(rng.uniform(-0.2, 0.2)) + args.x0,
                           float(rng.uniform(-0.2, 0.2)) + args.y0)
            ang = float(rng.uniform(0.0, 2.0 * math.pi))
            seeds.append(FlowState(p, np.array([math.cos(ang),
                                                math.sin(ang)])))
        cands = shooting_periodic(spec, args.E_mech, seeds, args.period_cap,
                                  args.tol, dt=args.dt)
        out = resolve_output_dir(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = []
        for i, cand in enumerate(cands):
            loop = orbit_to_loop(spec, cand, args.n)
            name = f"orbit_{i}.csv"
            save_loop_csv(out / name, loop, torus=spec.is_torus)
            entry = cand.to_json_dict()
            entry["loop_csv"] = name
            payload.append(entry)
        _json_dump(out / "orbits.json", payload)
        print(json.dumps({"n_candidates": len(cands)}))
        return EXIT_OK
    raise ConfigError("unknown oracle subcommand")


def _add_geometry_args(sub):
    sub.add_argument("--kind", default="plane_constant_B",
                     choices=[m.value for m in GeometryKind])
    sub.add_argument("--B", type=float, default=0.0)
    sub.add_argument("--a", type=float, default=0.0)
    sub.add_argument("--k", type=int, default=1)
    sub.add_argument("--u-amp", dest="u_amp", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magloop",
        description="Variational solver for periodic magnetic geodesics")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (results are thread-count independent)")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full continuation experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output-dir", default=None)

    p_mp = sub.add_parser("mpass", help="single minimax solve")
    p_mp.add_argument("--config", required=True)
    p_mp.add_argument("--eps", type=float, default=None)
    p_mp.add_argument("--tau", type=float, default=None)
    p_mp.add_argument("--output-dir", default=None)

    p_flow = sub.add_parser("flow", help="integrate the Lorentz flow")
    _add_geometry_args(p_flow)
    p_flow.add_argument("--x0", type=float, default=0.0)
    p_flow.add_argument("--y0", type=float, default=0.0)
    p_flow.add_argument("--angle", type=float, default=0.0)
    p_flow.add_argument("--speed", type=float, required=True)
    p_flow.add_argument("--T", type=float, required=True)
    p_flow.add_argument("--steps", type=int, default=10000)
    p_flow.add_argument("--output-dir", default="flow_out")

    p_gc = sub.add_parser("gradcheck", help="analytic vs FD gradients")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--loops", type=int, default=50)
    p_gc.add_argument("--n", type=int, default=32)
    p_gc.add_argument("--h", type=float, default=1e-6)
    p_gc.add_argument("--tol", type=float, default=1e-5)

    p_or = sub.add_parser("oracle", help="reference values")
    or_sub = p_or.add_subparsers(dest="oracle_cmd", required=True)
    o_lar = or_sub.add_parser("larmor")
    o_lar.add_argument("--E", type=float, required=True)
    o_lar.add_argument("--B", type=float, required=True)
    o_pro = or_sub.add_parser("profile")
    o_pro.add_argument("--E", type=float, required=True)
    o_pro.add_argument("--B", type=float, required=True)
    o_pro.add_argument("--r-max", dest="r_max", type=float, required=True)
    o_pro.add_argument("--points", type=int, default=201)
    o_pro.add_argument("--n", type=int, default=256)
    o_pro.add_argument("--output-dir", default="oracle_out")
    o_sh = or_sub.add_parser("shoot")
    _add_geometry_args(o_sh)
    o_sh.add_argument("--E-mech", dest="E_mech", type=float, required=True)
    o_sh.add_argument("--x0", type=float, default=0.0)
    o_sh.add_argument("--y0", type=float, default=0.5)
    o_sh.add_argument("--seeds", type=int, default=5)
    o_sh.add_argument("--seed", type=int, default=0)
    o_sh.add_argument("--period-cap", dest="period_cap", type=float,
                      default=2.0)
    o_sh.add_argument("--tol", type=float, default=1e-6)
    o_sh.add_argument("--dt", type=float, default=1e-3)
    o_sh.add_argument("--n", type=int, default=256)
    o_sh.add_argument("--output-dir", default="oracle_out")
    return parser


_COMMANDS = {
    "run": _cmd_run,
    "mpass": _cmd_mpass,
    "flow": _cmd_flow,
    "gradcheck": _cmd_gradcheck,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoNegativeLoopFound as exc:
        print(f"no negative-action loop: {exc}", file=sys.stderr)
        return EXIT_NO_NEGATIVE_LOOP


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
