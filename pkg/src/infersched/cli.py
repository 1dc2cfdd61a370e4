"""Command-line harness: surface generation, policy solving, simulation, and
the sweep experiments, all emitting versioned CSV/JSON artifacts.

Configs are TOML (``--config`` or a shipped ``--preset``); the ``--seed``,
``--horizon`` and ``--reps`` flags override the config.  Artifact bodies are
byte-deterministic given (config, seed); timestamps live only in the
metadata JSON files.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from . import delay_model, error_model, fixed_solver, simulator, variable_solver

SCHEMA_VERSION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_NUMERIC_ERRORS = (
    error_model.UnstableProcessError,
    error_model.SingularCovarianceError,
    fixed_solver.ThresholdNeverCrossedError,
    fixed_solver.DegenerateSurfaceError,
    variable_solver.SolverConvergenceError,
)
_CONFIG_ERRORS = (
    error_model.SurfaceFormatError,
    delay_model.NotErgodicError,
    delay_model.InvalidTransitionError,
    FileNotFoundError,
    KeyError,
    ValueError,
    tomli.TOMLDecodeError,
)


class ConfigError(ValueError):
    pass


def _load_config(args) -> dict:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        with open(args.config, "rb") as fh:
            return tomli.load(fh)
    if args.preset:
        name = args.preset.replace("-", "_")
        ref = resources.files("infersched").joinpath("presets", f"{name}.toml")
        if not ref.is_file():
            raise ConfigError(f"unknown preset {args.preset!r}")
        return tomli.loads(ref.read_text())
    raise ConfigError("one of --config or --preset is required")


def _sim_settings(cfg: dict, args) -> dict:
    sim = dict(cfg.get("sim", {}))
    if getattr(args, "seed", None) is not None:
        sim["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        sim["horizon"] = args.horizon
    if getattr(args, "reps", None) is not None:
        sim["reps"] = args.reps
    sim.setdefault("seed", 0)
    sim.setdefault("horizon", 10**6)
    sim.setdefault("reps", 1)
    sim.setdefault("initial_age", 1)
    sim.setdefault("initial_state", 1)
    return sim


def _resolve_surface(cfg: dict):
    try:
        section = cfg["surface"]
    except KeyError:
        raise ConfigError("config needs a [surface] section") from None
    if "csv" in section:
        surface = error_model.load_error_surface(section["csv"])
        meta = {"source": "csv", "path": str(section["csv"])}
        return surface, meta
    if "ar_spec" in section:
        spec = error_model.load_ar_spec(section["ar_spec"])
    else:
        spec = error_model.ar_spec_from_dict(section)
    delta_max = int(section.get("delta_max", 500))
    l_max = int(section.get("l_max", 10))
    surface = error_model.build_error_surface(spec, delta_max, l_max)
    meta = {
        "source": "ar",
        "order": spec.order,
        "coefficients": list(spec.coefficients),
        "noise_var": spec.noise_var,
        "obs_noise_var": spec.obs_noise_var,
        "delta_max": delta_max,
        "l_max": l_max,
    }
    return surface, meta


def _resolve_network(cfg: dict, sigma: float | None = None, alpha: float | None = None):
    try:
        section = cfg["network"]
    except KeyError:
        raise ConfigError("config needs a [network] section") from None
    if "file" in section:
        if sigma is not None or alpha is not None:
            raise ConfigError("sigma/alpha sweeps need the two_state network preset")
        return delay_model.load_network(section["file"])
    data = dict(section)
    if sigma is not None:
        data["sigma"] = sigma
    if alpha is not None:
        data["alpha"] = alpha
    return delay_model.network_from_dict(data)


_POLICY_RE = re.compile(r"^(theorem1|zero-wait|iid-baseline)-l(\d+)$")


def _parse_policy_name(name: str):
    if name == "optimal-fixed-all":
        return "fixed-all", None
    if name == "variable":
        return "variable", None
    match = _POLICY_RE.match(name)
    if match:
        return match.group(1), int(match.group(2))
    raise ConfigError(
        f"unknown policy {name!r}; expected optimal-fixed-all, variable, "
        "theorem1-lK, zero-wait-lK or iid-baseline-lK"
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_errgen(cfg: dict, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    surface, meta = _resolve_surface(cfg)
    csv_path = out_dir / "surface.csv"
    error_model.save_error_surface(surface, csv_path)
    meta_payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "surface",
        "rows": (surface.delta_max + 1) * surface.l_max,
        "delta_max": surface.delta_max,
        "l_max": surface.l_max,
        "spec": meta,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json(out_dir / "surface_meta.json", meta_payload)
    print(f"wrote {csv_path} ({meta_payload['rows']} rows)")
    return 0


def cmd_solve(cfg: dict, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    surface, _ = _resolve_surface(cfg)
    net = _resolve_network(cfg)
    solver = cfg.get("solver", {})
    buffer_size = int(solver.get("buffer_size", surface.l_max))
    tau_bound = solver.get("tau_bound")
    tau_bound = int(tau_bound) if tau_bound is not None else None
    tol = float(solver.get("tol", fixed_solver.DEFAULT_TOL))
    if args.mode == "fixed":
        length = int(solver.get("length", 1))
        policy = fixed_solver.solve_fixed(surface, net, length, buffer_size, tau_bound, tol)
        path = out_dir / "policy_fixed.json"
        fixed_solver.save_fixed_policy(policy, path)
        print(f"l={policy.length} gain={policy.gain!r}")
    elif args.mode == "fixed-all":
        best_l, policy, gains = fixed_solver.solve_fixed_all(
            surface, net, buffer_size, tau_bound, tol
        )
        path = out_dir / "policy_fixed.json"
        fixed_solver.save_fixed_policy(policy, path)
        for length in sorted(gains):
            print(f"l={length} gain={gains[length]!r}")
        print(f"best l={best_l} gain={policy.gain!r}")
        _write_json(
            out_dir / "gains.json",
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "length-search",
                "best_length": best_l,
                "gains": {str(k): v for k, v in sorted(gains.items())},
            },
        )
    else:
        delta_max = int(solver.get("delta_max", surface.delta_max))
        variant = solver.get("variant", "simplified")
        policy = variable_solver.policy_iteration(
            surface, net, delta_max, buffer_size,
            tau_bound=tau_bound, variant=variant, tol=tol,
        )
        path = out_dir / "policy_variable.json"
        variable_solver.save_variable_policy(policy, path)
        print(f"gain={policy.gain!r} iterations={policy.timings['iterations']}")
    print(f"wrote {path}")
    return 0


def _make_rule(policy_path: str | None, baseline: str | None):
    if (policy_path is None) == (baseline is None):
        raise ConfigError("give exactly one of --policy or --baseline")
    if baseline is not None:
        kind, length = _parse_policy_name(baseline)
        if kind != "zero-wait":
            raise ConfigError(f"only zero-wait-lK baselines can be simulated directly, not {baseline!r}")
        return simulator.ZeroWaitRule(length)
    with open(policy_path) as fh:
        kind = json.load(fh).get("kind")
    if kind == "fixed":
        return simulator.FixedPolicyRule(fixed_solver.load_fixed_policy(policy_path))
    if kind == "variable":
        return simulator.VariablePolicyRule(variable_solver.load_variable_policy(policy_path))
    raise ConfigError(f"unrecognized policy artifact kind {kind!r} in {policy_path}")


def cmd_simulate(cfg: dict, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    surface, _ = _resolve_surface(cfg)
    net = _resolve_network(cfg)
    sim = _sim_settings(cfg, args)
    rule = _make_rule(args.policy, args.baseline)
    buffer_size = cfg.get("solver", {}).get("buffer_size")
    if args.trace_out and int(sim["reps"]) != 1:
        raise ConfigError("--trace-out needs reps=1")
    if int(sim["reps"]) == 1 and args.trace_out:
        result = simulator.simulate(
            rule, surface, net, int(sim["horizon"]),
            np.random.SeedSequence((int(sim["seed"]), 0)),
            initial_age=int(sim["initial_age"]),
            initial_state=int(sim["initial_state"]),
            buffer_size=buffer_size,
            trace=True,
        )
        with open(args.trace_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "S", "D", "A", "c", "b", "l", "tau"])
            for rec in result.trace:
                writer.writerow(
                    [rec.index, rec.start, rec.delivery, rec.ack,
                     rec.state, rec.offset, rec.length, rec.wait]
                )
        agg = result
    else:
        agg = simulator.replicate(
            rule, surface, net, int(sim["horizon"]), int(sim["seed"]), int(sim["reps"]),
            initial_age=int(sim["initial_age"]),
            initial_state=int(sim["initial_state"]),
            buffer_size=buffer_size,
        )
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulation",
        "horizon": agg.horizon,
        "reps": agg.reps,
        "mean": agg.time_avg_error,
        "std": agg.std,
        "ci95": agg.ci95,
        "epoch_count": agg.epoch_count,
    }
    _write_json(out_dir / "result.json", payload)
    print(f"mean={agg.time_avg_error!r} ci95={agg.ci95!r}")
    return 0


def _sweep_point(name, surface, net, buffer_size, tau_bound, tol, sim, point_seed,
                 variable_delta_max):
    """Value of one policy at one grid point: (value, ci95, method)."""
    kind, length = _parse_policy_name(name)
    if kind == "fixed-all":
        _, policy, _ = fixed_solver.solve_fixed_all(surface, net, buffer_size, tau_bound, tol)
        value, _ = fixed_solver.evaluate_fixed_policy(surface, net, policy)
        return value, None, "exact"
    if kind == "theorem1":
        policy = fixed_solver.solve_fixed(surface, net, length, buffer_size, tau_bound, tol)
        value, _ = fixed_solver.evaluate_fixed_policy(surface, net, policy)
        return value, None, "exact"
    if kind == "zero-wait":
        policy = fixed_solver.zero_wait_policy(surface, net, length)
        return policy.gain, None, "exact"
    if kind == "iid-baseline":
        approx = fixed_solver.iid_approx_network(net)
        policy = fixed_solver.solve_fixed(surface, approx, length, buffer_size, tau_bound, tol)
        value, _ = fixed_solver.evaluate_fixed_policy(surface, net, policy)
        return value, None, "exact"
    policy = variable_solver.policy_iteration(
        surface, net, variable_delta_max, buffer_size,
        tau_bound=tau_bound, variant="simplified", tol=tol,
    )
    result = simulator.replicate(
        simulator.VariablePolicyRule(policy), surface, net,
        int(sim["horizon"]), tuple(point_seed), int(sim["reps"]),
        initial_age=int(sim["initial_age"]),
        initial_state=int(sim["initial_state"]),
        buffer_size=buffer_size,
    )
    return result.time_avg_error, result.ci95, "sim"


def run_sweep(cfg: dict, family: str, sim: dict):
    """Evaluate every configured policy at every grid point; per-point
    failures land in the row's error column instead of aborting."""
    sweep = cfg.get("sweep", {})
    if sweep.get("family", family) != family:
        raise ConfigError(
            f"config sweep family {sweep.get('family')!r} does not match requested {family!r}"
        )
    grid = sweep.get("grid")
    if not grid:
        raise ConfigError("sweep needs a non-empty grid")
    grid = [int(x) if family == "buffer" else float(x) for x in grid]
    if sorted(grid) != grid:
        raise ConfigError("sweep grid must be sorted ascending")
    policies = sweep.get("policies")
    if not policies:
        raise ConfigError("sweep needs a policy list")
    for name in policies:
        _parse_policy_name(name)
    surface, _ = _resolve_surface(cfg)
    solver = cfg.get("solver", {})
    tau_bound = solver.get("tau_bound")
    tau_bound = int(tau_bound) if tau_bound is not None else None
    tol = float(solver.get("tol", fixed_solver.DEFAULT_TOL))
    variable_delta_max = int(solver.get("delta_max", surface.delta_max))
    base_seed = int(sim["seed"])

    def one_point(i_x):
        i, x = i_x
        if family == "sigma":
            net = _resolve_network(cfg, sigma=x)
            buffer_size = int(solver.get("buffer_size", surface.l_max))
        elif family == "alpha":
            net = _resolve_network(cfg, alpha=x)
            buffer_size = int(solver.get("buffer_size", surface.l_max))
        else:
            net = _resolve_network(cfg)
            buffer_size = int(x)
        rows = []
        for j, name in enumerate(policies):
            try:
                value, ci95, method = _sweep_point(
                    name, surface, net, buffer_size, tau_bound, tol, sim,
                    (base_seed, i, j), variable_delta_max,
                )
                rows.append((x, name, value, ci95, method, ""))
            except _NUMERIC_ERRORS as exc:
                rows.append((x, name, None, None, "", str(exc)))
        return rows

    with ThreadPoolExecutor() as pool:
        per_point = list(pool.map(one_point, enumerate(grid)))
    return [row for rows in per_point for row in rows]


def cmd_sweep(cfg: dict, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = _sim_settings(cfg, args)
    rows = run_sweep(cfg, args.family, sim)
    csv_path = out_dir / f"sweep_{args.family}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "policy", "value", "ci95", "method", "error"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    meta = {
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep",
        "family": args.family,
        "rows": len(rows),
        "seed": int(sim["seed"]),
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json(out_dir / f"sweep_{args.family}_meta.json", meta)
    failures = [r for r in rows if r[5]]
    print(f"wrote {csv_path} ({len(rows)} rows, {len(failures)} errors)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infersched",
        description="Goal-oriented status-update scheduling experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--preset", help="shipped preset name (fig3, fig4, fig5, buffer-sweep)")
        p.add_argument("--out-dir", default=".", help="artifact output directory")
        p.add_argument("--seed", type=int, help="override [sim] seed")
        p.add_argument("--reps", type=int, help="override [sim] reps")
        p.add_argument("--horizon", type=int, help="override [sim] horizon")

    p = sub.add_parser("errgen", help="generate an error-surface CSV")
    common(p)
    p = sub.add_parser("solve", help="solve a scheduling policy")
    common(p)
    p.add_argument("--mode", choices=["fixed", "fixed-all", "variable"], required=True)
    p = sub.add_parser("simulate", help="simulate a policy or baseline")
    common(p)
    p.add_argument("--policy", help="policy artifact JSON")
    p.add_argument("--baseline", help="baseline name, e.g. zero-wait-l1")
    p.add_argument("--trace-out", help="write the epoch trace CSV here (reps=1)")
    p = sub.add_parser("sweep", help="run a sweep family")
    common(p)
    p.add_argument("--family", choices=["sigma", "alpha", "buffer"], required=True)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "errgen": cmd_errgen,
        "solve": cmd_solve,
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
    }
    try:
        cfg = _load_config(args)
        return handlers[args.command](cfg, args)
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, *_CONFIG_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
