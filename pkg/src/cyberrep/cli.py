"""Command-line front end: ``cyberrep <subcommand> [flags]``.

Money is in millions and rates are per year.  The step size ``--dt`` is
given in days; the horizon is given in years, as its flag name says.
Every output starts with a provenance line naming the tool version, the
subcommand, the resolved flags and the seed.  Exit codes: 0 success,
1 computation or verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, calib, sim
from .equilibrium import GLOBAL_AVERAGE, ModelParams, solve

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DAYS_PER_YEAR = 365.0
SUBCOMMANDS = ("equilibrium", "sweep", "simulate", "estimate", "calibrate", "verify")


class UsageError(Exception):
    """Bad flag values; reported with exit code 2."""


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model parameters (default: global-average calibration)")
    g.add_argument("--M", type=float, help=f"maximal attack intensity [{GLOBAL_AVERAGE.M:g}]")
    g.add_argument("--l", type=float, help=f"false-alarm cost, millions [{GLOBAL_AVERAGE.l:g}]")
    g.add_argument("--r", type=float, help=f"termination rate per year [{GLOBAL_AVERAGE.r:g}]")
    g.add_argument("--sigma", type=float, help=f"signal noise intensity [{GLOBAL_AVERAGE.sigma:g}]")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file of flag defaults (flags take precedence)")
    p.add_argument("--output", "-o", type=Path, help="output file [stdout]")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="output format [csv]")
    p.add_argument("--seed", type=int, help="root seed [0]")


def _add_sim_flags(p: argparse.ArgumentParser, *, q0: float, n: int, x_true: float) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--q0", type=float, help=f"defender's prior suspicion [{q0:g}]")
    g.add_argument("--n", type=int, help=f"number of suspects [{n}]")
    g.add_argument("--x-true", dest="x_true", type=float, help=f"true attacker fraction [{x_true:g}]")
    g.add_argument("--dt", type=float, help="Euler step in days [0.1]")
    g.add_argument("--horizon-years", dest="horizon_years", type=float, help="path cap in years [10/r]")
    g.add_argument("--workers", type=int, help="worker threads [1]")
    g.add_argument("--no-bridge", dest="no_bridge", action="store_true", default=None,
                   help="plain discrete barrier monitoring (no between-step crossing test)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyberrep", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"cyberrep {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = subs.add_parser("equilibrium", help="constants, p, q*, q_hat and sampled curves")
    _add_model_flags(p)
    _add_output_flags(p)
    p.add_argument("--grid-points", dest="grid_points", type=int, help="q-grid size on [0.001, 0.999] [400]")

    p = subs.add_parser("sweep", help="comparative statics over one parameter")
    _add_model_flags(p)
    _add_output_flags(p)
    p.add_argument("--vary", required=True, help="one of M, l, r, sigma")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--curves", action="store_true", default=None,
                   help="CSV: one row per (value, q) with alpha, instead of one row per value")

    p = subs.add_parser("simulate", help="per-path summaries of a simulated population")
    _add_model_flags(p)
    _add_output_flags(p)
    _add_sim_flags(p, q0=0.1, n=10_000, x_true=0.14)

    p = subs.add_parser("estimate", help="blocked ratio and attacker-fraction estimate over time")
    _add_model_flags(p)
    _add_output_flags(p)
    _add_sim_flags(p, q0=0.1, n=10_000, x_true=0.14)

    p = subs.add_parser("calibrate", help="fit (r, sigma) to industry cost and detection time")
    _add_output_flags(p)
    p.add_argument("--input", type=Path, help="CSV industry,avg_cost_musd,avg_days [bundled table]")
    p.add_argument("--l", type=float, help=f"false-alarm cost [{calib.DEFAULT_L:g}]")
    p.add_argument("--M", type=float, help=f"maximal attack intensity [{calib.DEFAULT_M:g}]")

    p = subs.add_parser("verify", help="closed-form residual checks and a Monte-Carlo cross-check")
    _add_model_flags(p)
    _add_output_flags(p)
    p.add_argument("--n", type=int, help="paths for the blocking-probability cross-check [20000]")
    p.add_argument("--q0", type=float, help="start of the cross-check [p/2]")
    p.add_argument("--perturb", type=float, help="test hook: scale V by this factor before checking")
    return parser


DEFAULTS = {
    "M": GLOBAL_AVERAGE.M, "l": GLOBAL_AVERAGE.l, "r": GLOBAL_AVERAGE.r, "sigma": GLOBAL_AVERAGE.sigma,
    "format": "csv", "seed": 0, "grid_points": 400, "curves": False, "q0": None, "n": None,
    "x_true": 0.14, "dt": 0.1, "horizon_years": None, "workers": 1, "no_bridge": False,
    "perturb": None,
}
SUBCOMMAND_DEFAULTS = {"simulate": {"q0": 0.1, "n": 10_000}, "estimate": {"q0": 0.1, "n": 10_000},
                       "verify": {"n": 20_000}}


def resolve(ns: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the config file, then from built-in defaults."""
    config = {}
    if getattr(ns, "config", None) is not None:
        try:
            config = tomllib.loads(ns.config.read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        config = {k.replace("-", "_"): v for k, v in config.items()}
        unknown = set(config) - set(vars(ns))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    defaults = {**DEFAULTS, **SUBCOMMAND_DEFAULTS.get(ns.command, {})}
    if ns.command == "calibrate":
        defaults.update(l=calib.DEFAULT_L, M=calib.DEFAULT_M)
    for key, value in vars(ns).items():
        if value is None:
            setattr(ns, key, config.get(key, defaults.get(key)))
    return ns


def provenance(ns: argparse.Namespace) -> str:
    skip = {"command", "output", "config", "seed"}
    flags = " ".join(f"--{k.replace('_', '-')}={_fmt(v)}" for k, v in sorted(vars(ns).items())
                     if k not in skip and v is not None)
    return f"cyberrep {__version__} {ns.command} {flags} seed={ns.seed}"


def _params(ns) -> ModelParams:
    try:
        return ModelParams(M=ns.M, l=ns.l, r=ns.r, sigma=ns.sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_csv(out, prov: str, header, rows, comments=()) -> None:
    out.write(f"# {prov}\n")
    for line in comments:
        out.write(f"# {line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def _write_json(out, prov: str, payload: dict) -> None:
    json.dump({"provenance": prov, **payload}, out, indent=1, default=_json_default)
    out.write("\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def cmd_equilibrium(ns, out) -> int:
    params = _params(ns)
    if ns.grid_points < 2:
        raise UsageError("--grid-points must be >= 2")
    eq = solve(params)
    q_hat = analysis.optimal_attack_prob(eq)
    grid = np.linspace(0.001, 0.999, ns.grid_points)
    below = grid <= eq.p
    u = np.ones_like(grid)
    u[below] = eq.u(grid[below])
    k = eq.consts
    summary = {"regime": eq.regime.value, "a": k.a, "b": k.b, "c": k.c, "q_star": k.q_star, "p": k.p,
               "log_gap": k.log_gap, "q_hat": q_hat.q_hat, "objective": q_hat.objective,
               "alpha_at_q_hat": float(eq.alpha(q_hat.q_hat)), "V_at_q_hat": float(eq.V(q_hat.q_hat)),
               "detection_days": DAYS_PER_YEAR * sim.expected_detection_time(eq, q_hat.q_hat)}
    curves = {"q": grid, "alpha": eq.alpha(grid), "V": eq.V(grid), "U": eq.U(grid), "u": u}
    if ns.format == "json":
        _write_json(out, provenance(ns), {"summary": summary, "curves": curves})
    else:
        _write_csv(out, provenance(ns), list(curves), zip(*curves.values()),
                   [f"{k}={_fmt(v)}" for k, v in summary.items()])
    return 0


def _parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError("--values is empty")
    return values


def cmd_sweep(ns, out) -> int:
    base = _params(ns)
    if ns.vary not in analysis.PARAM_NAMES:
        raise UsageError(f"--vary must be one of {', '.join(analysis.PARAM_NAMES)}, got {ns.vary!r}")
    values = _parse_values(ns.values)
    if any(not (v > 0 and math.isfinite(v)) for v in values):
        raise UsageError("--values must all be positive")
    rows = analysis.comparative_statics(base, ns.vary, values)
    grid = analysis.SWEEP_GRID
    if ns.format == "json":
        _write_json(out, provenance(ns), {
            "vary": ns.vary, "q": grid,
            "rows": [{"value": r.value, "regime": r.regime, "p": r.p, "q_star": r.q_star,
                      "q_hat": r.q_hat, "alpha": r.alpha} for r in rows]})
    elif ns.curves:
        _write_csv(out, provenance(ns), ["vary", "value", "q", "alpha"],
                   ((r.name, r.value, q, a) for r in rows for q, a in zip(grid, r.alpha)))
    else:
        _write_csv(out, provenance(ns), ["vary", "value", "regime", "p", "q_star", "q_hat"],
                   ((r.name, r.value, r.regime, r.p, r.q_star, r.q_hat) for r in rows))
    return 0


def _sim_config(ns, eq) -> sim.SimConfig:
    if ns.n is None or ns.n < 1:
        raise UsageError("--n must be a positive integer")
    if not 0.0 < ns.q0 < eq.p:
        raise UsageError(f"--q0 must lie in (0, p) = (0, {eq.p:.6g})")
    if not (ns.dt > 0 and math.isfinite(ns.dt)):
        raise UsageError("--dt must be positive")
    if ns.horizon_years is not None and not ns.horizon_years > 0:
        raise UsageError("--horizon-years must be positive")
    if ns.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        return sim.SimConfig(n_paths=ns.n, q0=ns.q0, x_true=ns.x_true, dt=ns.dt / DAYS_PER_YEAR,
                             horizon=ns.horizon_years, seed=ns.seed, bridge=not ns.no_bridge)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(ns, out) -> int:
    eq = solve(_params(ns))
    cfg = _sim_config(ns, eq)
    batch = sim.simulate_batch(eq, cfg, workers=ns.workers)
    cols = {"path": np.arange(cfg.n_paths), "theta": batch.theta.astype(int), "blocked": batch.blocked,
            "terminated": batch.terminated, "stop_time": batch.stop_time, "terminal_q": batch.terminal_q}
    if ns.format == "json":
        _write_json(out, provenance(ns), {"paths": {k: v for k, v in cols.items()}})
    else:
        _write_csv(out, provenance(ns), list(cols), zip(*cols.values()))
    return 0


def cmd_estimate(ns, out) -> int:
    eq = solve(_params(ns))
    cfg = _sim_config(ns, eq)
    res = sim.run_population(eq, cfg, workers=ns.workers)
    summary = {"mu_theta": res.mu_theta, "mu_se": res.mu_se, "n_blocked": res.n_blocked,
               "n_paths": res.n_paths, "running_fraction": res.running_fraction, "p": res.p,
               "u_q0": res.u_q0}
    series = dict(zip(sim.SERIES_COLUMNS, res.series().T))
    if ns.format == "json":
        _write_json(out, provenance(ns), {"summary": summary, "series": series})
    else:
        _write_csv(out, provenance(ns), sim.SERIES_COLUMNS, res.series(),
                   [f"{k}={_fmt(v)}" for k, v in summary.items()])
    return 0


def cmd_calibrate(ns, out) -> int:
    try:
        targets = (calib.ingest_table(ns.input, l=ns.l, M=ns.M) if ns.input is not None
                   else calib.parse_table(calib.bundled_table_path().read_text(encoding="utf-8"),
                                          l=ns.l, M=ns.M))
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    results = calib.calibrate_all(targets)
    if ns.format == "json":
        _write_json(out, provenance(ns), {"results": [dict(zip(calib.OUTPUT_COLUMNS, r.row()))
                                                      for r in results]})
    else:
        buf = io.StringIO()
        calib.write_results(results, buf)
        out.write(f"# {provenance(ns)}\n")
        out.write(buf.getvalue())
    for r in results:
        if not r.converged:
            print(f"cyberrep: {r.industry}: {r.message or 'not converged'}", file=sys.stderr)
    return 0 if all(r.converged for r in results) else 1


def cmd_verify(ns, out) -> int:
    eq = solve(_params(ns))
    if ns.n is None or ns.n < 2:
        raise UsageError("--n must be >= 2")
    q0 = eq.p / 2 if ns.q0 is None else ns.q0
    if not 0.0 < q0 < eq.p:
        raise UsageError(f"--q0 must lie in (0, p) = (0, {eq.p:.6g})")
    V = None
    if ns.perturb is not None:
        V = lambda q, f=ns.perturb: f * eq.V(q)  # noqa: E731
    report = analysis.verify_closed_forms(eq, V=V)
    rows = [(k, v, v <= report.rel_tol) for k, v in report.residuals.items()]
    rows += [(k, math.nan, ok) for k, ok in report.checks.items()]
    # Monte-Carlo cross-check of the blocking probability for attackers
    cfg = sim.SimConfig(n_paths=ns.n, q0=q0, seed=ns.seed)
    batch = sim.simulate_batch(eq, cfg, theta=1)
    hit = float(np.mean(batch.blocked))
    se = math.sqrt(max(hit * (1 - hit), 1e-12) / ns.n)
    z = (hit - float(eq.u(q0))) / se
    rows.append(("blocking_prob_mc_z", z, abs(z) <= 3.0))
    passed = all(ok for *_, ok in rows)
    if ns.format == "json":
        _write_json(out, provenance(ns), {"passed": passed, "checks": [
            {"check": k, "value": None if math.isnan(v) else v, "pass": ok} for k, v, ok in rows]})
    else:
        _write_csv(out, provenance(ns), ["check", "value", "pass"], rows, [f"passed={_fmt(passed)}"])
    return 0 if passed else 1


COMMANDS = {"equilibrium": cmd_equilibrium, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "estimate": cmd_estimate, "calibrate": cmd_calibrate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        ns = resolve(ns)
        buf = io.StringIO()
        code = COMMANDS[ns.command](ns, buf)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cyberrep {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # computation failure
        print(f"cyberrep {ns.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = buf.getvalue()
    if ns.output is None:
        sys.stdout.write(text)
    else:
        try:
            with open(ns.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"cyberrep: cannot write {ns.output}: {exc}", file=sys.stderr)
            return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
