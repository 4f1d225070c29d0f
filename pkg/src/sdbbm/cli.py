"""Batch command-line runner.

Every subcommand reads one JSON config (``--config path`` or ``--json '{...}'``)
and writes a CSV table to ``--out`` (stdout when omitted).  Subcommands that
produce a structured report also write JSON to ``--report`` (default: the
``--out`` path with a ``.json`` suffix).  Files are written to a temporary
name and renamed into place.

Floats are written with ``repr``, the shortest decimal that round-trips, so
reruns with the same config and seed are byte-identical whatever ``--threads``
is.  Seed precedence: ``--seed`` flag, then ``"seed"`` in the config, then the
``SDBBM_SEED`` environment variable, then :data:`DEFAULT_SEED`.

Exit status: 0 success, 1 invalid input or failed run, 2 a failed verdict in
``verify-ergodic``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .experiments import ergodic_experiment
from .limit_laws import complete_monotonicity_probe, degenerate_limit_curve, log_laplace
from .particle_sim import PopulationCapError, SimConfig, run_replicates
from .special_functions import q_function
from .volterra import LaplaceSpec, SolverError, SolverGrid, solve_lambda, solve_lambda_extended

DEFAULT_SEED = 20240917
SEED_ENV = "SDBBM_SEED"

EXIT_OK, EXIT_INVALID, EXIT_GATE = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config helpers


def load_config(path: str | None, inline: str | None) -> dict:
    if (path is None) == (inline is None):
        raise ConfigError("give exactly one of --config or --json")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        text, where = p.read_text(), path
    else:
        text, where = inline, "--json"
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{where}: malformed JSON at line {err.lineno}, column {err.colno}: {err.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: top level must be a JSON object")
    return cfg


def _field(cfg: dict, name: str, kind=float, default=...):
    if name not in cfg:
        if default is ...:
            raise ConfigError(f"missing field '{name}'")
        return default
    try:
        return kind(cfg[name])
    except (TypeError, ValueError) as err:
        raise ConfigError(f"field '{name}': {err}") from None


def _spec(cfg: dict) -> LaplaceSpec:
    if "spec" in cfg:
        try:
            return LaplaceSpec.from_pairs(cfg["spec"])
        except (TypeError, ValueError) as err:
            raise ConfigError(f"field 'spec': {err}") from None
    theta = _field(cfg, "theta")
    t = _field(cfg, "t", default=1.0)
    try:
        return LaplaceSpec.single(theta, t)
    except ValueError as err:
        raise ConfigError(f"field 'theta'/'t': {err}") from None


def _grid(cfg: dict, S: float, default_step: float) -> SolverGrid:
    if "m" in cfg:
        return SolverGrid(S, _field(cfg, "m", int))
    return SolverGrid.from_step(S, _field(cfg, "step", default=default_step))


def _seed(flag, cfg: dict) -> int:
    if flag is not None:
        seed = flag
    elif "seed" in cfg:
        seed = cfg["seed"]
    elif os.environ.get(SEED_ENV):
        seed = os.environ[SEED_ENV]
    else:
        seed = DEFAULT_SEED
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {seed!r}") from None
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return seed


def _sim_config(d: dict, seed: int) -> SimConfig:
    if not isinstance(d, dict):
        raise ConfigError("simulation config must be a JSON object")
    d = dict(d, seed=seed)
    try:
        return SimConfig.from_dict(d)
    except KeyError as err:
        raise ConfigError(f"missing field {err}") from None
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid simulation config: {err}") from None


# ---------------------------------------------------------------------------
# output


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def _finite_json(o):
    # NaN and infinities are not JSON; write them as null
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _finite_json(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite_json(v) for v in o]
    return o


def render_json(obj) -> str:
    obj = json.loads(json.dumps(obj, default=_json_default))
    return json.dumps(_finite_json(obj), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands; each returns (header, rows, report or None, summary, exit code)


def cmd_solve_lambda(cfg, args):
    spec = _spec(cfg)
    K = _field(cfg, "K")
    lam = solve_lambda(spec, K, _grid(cfg, 1.0, 1e-3))
    rows = zip(lam.nodes, lam.values)
    return ["s", "lambda"], rows, None, f"solved {lam.grid.m + 1} nodes, Lambda(1) = {float(lam.values[-1])!r}", EXIT_OK


def cmd_lambda_extended(cfg, args):
    theta = _field(cfg, "theta", default=1.0)
    K = _field(cfg, "K")
    S = _field(cfg, "S", default=200.0)
    lam = solve_lambda_extended(theta, K, _grid(cfg, S, 1e-2))
    rows = zip(lam.nodes, lam.values)
    return ["s", "lambda"], rows, None, f"Lambda({S:g}, {theta:g}) = {float(lam.values[-1])!r}", EXIT_OK


def cmd_log_laplace(cfg, args):
    spec = _spec(cfg)
    K = _field(cfg, "K")
    lower = _field(cfg, "lower", str, "last")
    value = log_laplace(spec, K, _grid(cfg, 1.0, 1e-3), lower=lower)
    rows = [[K, value, math.exp(value)]]
    return ["K", "log_laplace", "laplace"], rows, None, f"log Laplace = {value!r}", EXIT_OK


def cmd_levy_probe(cfg, args):
    K = _field(cfg, "K")
    lo = _field(cfg, "theta_min", default=0.1)
    hi = _field(cfg, "theta_max", default=50.0)
    h = _field(cfg, "theta_step", default=0.1)
    step = _field(cfg, "step", default=1e-3)
    n = int(round((hi - lo) / h))
    if n < 1 or abs(lo + n * h - hi) > 1e-9 * max(1.0, hi):
        raise ConfigError("theta_max - theta_min must be a positive multiple of theta_step")
    thetas = lo + h * np.arange(n + 1)
    rep = complete_monotonicity_probe(K, thetas, _field(cfg, "max_order", int, 4), step=step)
    report = {
        "K": rep.K,
        "first_moment": rep.first_moment,
        "second_moment": rep.second_moment,
        "second_moment_theory": 2.0 * K / math.pi,
        "orders_checked": rep.monotonicity_orders_checked,
        "alternation_ok": rep.alternation_ok,
        "worst_margin": rep.worst_margin,
    }
    summary = (f"alternation {'ok' if rep.alternation_ok else 'VIOLATED'}, "
               f"moments {rep.first_moment:.6f} / {rep.second_moment:.6f}")
    return ["theta", "g"], zip(rep.thetas, rep.g), report, summary, EXIT_OK


def cmd_degenerate_curve(cfg, args):
    theta = _field(cfg, "theta", default=1.0)
    Ks = cfg.get("Ks", [1.0, 10.0, 100.0])
    curve = degenerate_limit_curve(theta, Ks, step=_field(cfg, "step", default=1e-2))
    rows = [[K, v, math.exp(v - theta)] for K, v in curve]
    return ["K", "value", "laplace"], rows, None, f"value at K = {curve[-1][0]:g}: {curve[-1][1]!r}", EXIT_OK


def cmd_q_function(cfg, args):
    if "x" not in cfg:
        raise ConfigError("missing field 'x'")
    x = np.atleast_1d(np.asarray(cfg["x"], dtype=float))
    q = np.atleast_1d(q_function(x))
    return ["x", "Q"], zip(x, q), None, f"evaluated Q at {x.size} points", EXIT_OK


def cmd_simulate(cfg, args):
    R = _field(cfg, "R", int, 1)
    sim = _sim_config({k: v for k, v in cfg.items() if k != "R"}, _seed(args.seed, cfg))
    results = run_replicates(sim, R, threads=args.threads)
    n = len(sim.checkpoints)
    header = (["replicate"] + [f"t_{k + 1}" for k in range(n)]
              + [f"value_{k + 1}" for k in range(n)] + ["peak_population"])
    rows = [[i, *sim.checkpoints, *r.values, r.peak_population] for i, r in enumerate(results)]
    peak = max(r.peak_population for r in results)
    return header, rows, None, f"{R} replicates at T = {sim.T:g}, max peak population {peak}", EXIT_OK


def cmd_verify_ergodic(cfg, args):
    base = cfg.get("base")
    if base is None:
        raise ConfigError("missing field 'base'")
    if "T" not in base:
        base = dict(base, T=1.0)
    sim = _sim_config(base, _seed(args.seed, cfg))
    ladder = cfg.get("T_ladder", [25.0, 100.0, 400.0])
    R = _field(cfg, "R", int, 500)
    spec = _spec(cfg) if ("spec" in cfg or "theta" in cfg) else LaplaceSpec.single(1.0, 1.0)
    rep = ergodic_experiment(sim, ladder, R, spec, threads=args.threads,
                             bias_allowance=_field(cfg, "bias_allowance", default=0.02))
    header, rows = rep.csv_rows()
    failed = [k for k, v in rep.verdicts.items() if not v.passed]
    summary = "all verdicts passed" if not failed else "failed: " + ", ".join(failed)
    return header, rows, rep.to_dict(), summary, EXIT_OK if not failed else EXIT_GATE


def convergence_study(cfg: dict) -> dict:
    """Sup-norm self-differences of the solver under repeated halving of the step.

    ``diffs[j] = max |y_j - y_{j+1}|`` on the coarse nodes; the observed order
    is ``log2(diffs[j-1] / diffs[j])`` and the global estimate is the
    least-squares slope of ``log2 diffs`` against ``-j``.
    """
    spec = _spec(cfg)
    K = _field(cfg, "K")
    m0 = _field(cfg, "m0", int, 100)
    r = _field(cfg, "refinements", int, 3)
    if r < 1:
        raise ConfigError("field 'refinements' must be >= 1")
    grids = [SolverGrid(1.0, m0 * 2**j) for j in range(r + 1)]
    sols = [solve_lambda(spec, K, g).values for g in grids]
    diffs = [float(np.max(np.abs(a - b[::2]))) for a, b in zip(sols, sols[1:])]
    orders = [math.nan] + [
        math.log2(a / b) if a > 0 and b > 0 else math.nan for a, b in zip(diffs, diffs[1:])
    ]
    usable = [(j, d) for j, d in enumerate(diffs) if d > 1e-13]
    if len(usable) >= 2:
        j, d = np.array(usable).T
        order = float(-np.polyfit(j, np.log2(d), 1)[0])
    else:
        order = math.nan
    return {
        "K": K,
        "spec": [list(p) for p in spec.pairs],
        "m": [g.m for g in grids[:-1]],
        "step": [g.step for g in grids[:-1]],
        "sup_difference": diffs,
        "observed_order": orders,
        "order_estimate": order,
    }


def cmd_convergence_study(cfg, args):
    rep = convergence_study(cfg)
    rows = zip(rep["m"], rep["step"], rep["sup_difference"], rep["observed_order"])
    return ["m", "step", "sup_difference", "observed_order"], rows, rep, \
        f"order estimate {rep['order_estimate']:.3f}", EXIT_OK


COMMANDS = {
    "solve-lambda": (cmd_solve_lambda, "solve the Volterra equation on [0, 1] for a spec"),
    "lambda-extended": (cmd_lambda_extended, "single-theta solution on [0, S]"),
    "log-laplace": (cmd_log_laplace, "log Laplace functional of the limit process"),
    "levy-probe": (cmd_levy_probe, "complete-monotonicity and moment probe"),
    "degenerate-curve": (cmd_degenerate_curve, "truncated-model Laplace exponent against K"),
    "q-function": (cmd_q_function, "evaluate Q(x) = 2 sqrt(x) D(sqrt(x))"),
    "simulate": (cmd_simulate, "Monte Carlo occupation times"),
    "verify-ergodic": (cmd_verify_ergodic, "simulation against limit theory along a T ladder"),
    "convergence-study": (cmd_convergence_study, "solver grid-refinement study"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdbbm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="path to a JSON config")
        src.add_argument("--json", help="inline JSON config")
        p.add_argument("--out", help="CSV output path (stdout if omitted)")
        p.add_argument("--report", help="JSON report path (default: --out with .json suffix)")
        p.add_argument("--seed", type=int, help=f"u64 seed (default ${SEED_ENV} or {DEFAULT_SEED})")
        p.add_argument("--threads", default="auto", help="worker threads: integer or 'auto'")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        if args.threads != "auto":
            try:
                args.threads = int(args.threads)
            except ValueError:
                raise ConfigError(f"--threads must be an integer or 'auto', got {args.threads!r}") from None
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.json)
        header, rows, report, summary, code = func(cfg, args)
        text = render_csv(header, rows)
    except (ConfigError, ValueError, TypeError, SolverError, PopulationCapError) as err:
        print(f"sdbbm {args.command}: error: {err}", file=sys.stderr)
        return EXIT_INVALID

    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    report_path = args.report or (str(Path(args.out).with_suffix(".json")) if args.out else None)
    if report is not None and report_path:
        write_atomic(report_path, render_json(report))
    print(f"sdbbm {args.command}: {summary}", file=sys.stderr if not args.out else sys.stdout)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
