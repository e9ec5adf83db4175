"""Command-line entry point.

    agnostic-lqr sopt --a 0 --T 1
    agnostic-lqr simulate --policy sigma-star --a 10 --n-paths 1 --out path.csv
    agnostic-lqr regret-sweep --a-grid=-64,-16,-4,-1,0,1,4,16,64 --policy sigma-star
    agnostic-lqr epochs --a 10 --n-paths 100000
    agnostic-lqr verify --suite all --seed 42

Exit codes: 0 success, 1 experiment or I/O failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .classical_lqr import s_opt_closed, s_opt_ode
from .montecarlo import (
    CostEstimate, ExperimentAborted, epoch_statistics, regret_sweep, run_paths, sweep_to_csv, sweep_to_json,
)
from .ou_engine import SimGrid, SystemParams, simulate_path
from .strategy import bind_policy, parse_policy
from .verify import reports_to_csv, run_suite

log = logging.getLogger("agnostic_lqr")

COMMANDS = ("sopt", "simulate", "regret-sweep", "epochs", "verify")


@dataclass
class RunConfig:
    command: str
    a: float | None = None
    a_grid: list[float] = field(default_factory=list)
    T: float = 1.0
    dt: float = 1e-3
    n_paths: int = 20000
    seed: int = 42
    policy: str = "sigma-star"
    out_path: str | None = None
    format: str = "csv"
    threads: int = 1
    suite: str = "all"
    scheme: str = "exact"
    zero_noise: bool = False


def _float_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    return values


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--T", type=float, default=1.0, help="horizon (default 1)")
    common.add_argument("--dt", type=float, default=1e-3, help="grid step (default 1e-3)")
    common.add_argument("--n-paths", dest="n_paths", type=int, default=20000, help="Monte Carlo paths (default 20000)")
    common.add_argument("--seed", type=_u64, default=42, help="master seed (default 42)")
    common.add_argument("--out", dest="out_path", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads; never changes results")
    common.add_argument("--config", default=None, help="file of 'key = value' lines; flags override it")

    parser = argparse.ArgumentParser(prog="agnostic-lqr", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sopt", parents=[common], help="closed-form and ODE optimal cost")
    p.add_argument("--a", type=float, required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate paths under one policy")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--policy", default="sigma-star", help="sigma-star | sigma-opt | zero | const:<g>")
    p.add_argument("--scheme", choices=("exact", "euler"), default="exact")
    p.add_argument("--zero-noise", dest="zero_noise", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("regret-sweep", parents=[common], help="multiplicative regret over a grid of a")
    p.add_argument("--a-grid", dest="a_grid", type=_float_list, required=True)
    p.add_argument("--policy", default="sigma-star")
    p.add_argument("--scheme", choices=("exact", "euler"), default="exact")

    p = sub.add_parser("epochs", parents=[common], help="epoch occupancy of sigma-star")
    p.add_argument("--a", type=float, required=True)

    p = sub.add_parser("verify", parents=[common], help="statistical verification suite")
    p.add_argument("--suite", choices=("lemmas", "regret", "all"), default="all")
    return parser


def _read_config(path: str) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or known.command not in COMMANDS:
        return
    try:
        values = _read_config(known.config)
    except (OSError, ValueError) as exc:
        parser.error(f"--config: {exc}")
    subparser = parser._subparsers._group_actions[0].choices[known.command]
    dests = {a.dest: a for a in subparser._actions}
    aliases = {"out": "out_path"}
    defaults = {}
    for key, value in values.items():
        dest = aliases.get(key, key)
        if dest not in dests or dest in ("help", "config"):
            parser.error(f"--config: unknown key {key!r} for {known.command}")
        action = dests[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[dest] = value
        action.required = False
    subparser.set_defaults(**defaults)


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Parse and validate; exits with status 2 and names the flag on bad input."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config(parser, argv)
    ns = parser.parse_args(argv)

    def bad(flag: str, why: str):
        parser.error(f"{flag}: {why}")

    if getattr(ns, "a", None) is not None and not math.isfinite(ns.a):
        bad("--a", "must be finite")
    if not (math.isfinite(ns.T) and ns.T > 0):
        bad("--T", "must be positive and finite")
    if not (math.isfinite(ns.dt) and ns.dt > 0):
        bad("--dt", "must be positive and finite")
    if ns.dt > ns.T:
        bad("--dt", "must not exceed --T")
    if ns.n_paths < 1:
        bad("--n-paths", "must be >= 1")
    if ns.threads < 1:
        bad("--threads", "must be >= 1")
    if ns.command == "regret-sweep":
        if not ns.a_grid:
            bad("--a-grid", "must not be empty")
        if not all(math.isfinite(a) for a in ns.a_grid):
            bad("--a-grid", "values must be finite")
        if ns.n_paths < 2:
            bad("--n-paths", "sweeps need at least 2 paths")
    if ns.command == "epochs" and ns.n_paths < 2:
        bad("--n-paths", "must be >= 2")
    if hasattr(ns, "policy"):
        try:
            parse_policy(ns.policy, 0.0, ns.T)
        except ValueError as exc:
            bad("--policy", str(exc))

    return RunConfig(
        command=ns.command,
        a=getattr(ns, "a", None),
        a_grid=getattr(ns, "a_grid", []) or [],
        T=ns.T,
        dt=ns.dt,
        n_paths=ns.n_paths,
        seed=ns.seed,
        policy=getattr(ns, "policy", "sigma-star"),
        out_path=ns.out_path,
        format=ns.format,
        threads=ns.threads,
        suite=getattr(ns, "suite", "all"),
        scheme=getattr(ns, "scheme", "exact"),
        zero_noise=getattr(ns, "zero_noise", False),
    )


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(config: RunConfig, text: str) -> None:
    if config.out_path:
        write_atomic(config.out_path, text)
    else:
        sys.stdout.write(text)


def _table(config: RunConfig, rows: list[dict]) -> str:
    if config.format == "json":
        return json.dumps(rows, indent=2) + "\n"
    keys = list(rows[0])
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row.values()))
    return "\n".join(lines) + "\n"


def _cmd_sopt(config: RunConfig) -> int:
    closed = s_opt_closed(config.a, config.T)
    oracle = s_opt_ode(config.a, config.T)
    row = {"a": config.a, "T": config.T, "s_opt_closed": closed, "s_opt_ode": oracle, "abs_diff": abs(closed - oracle)}
    _emit(config, _table(config, [row]))
    return 0


def _cmd_simulate(config: RunConfig) -> int:
    policy = bind_policy(parse_policy(config.policy, config.a, config.T), config.a, config.T)
    params = SystemParams(config.a, config.T)
    if config.n_paths == 1:
        grid = SimGrid.for_horizon(config.T, config.dt, config.seed, 0)
        noise = [0.0] * grid.n_steps if config.zero_noise else None
        traj = simulate_path(policy, params, grid, noise=noise, scheme=config.scheme)
        if config.out_path:
            write_atomic(config.out_path, traj.to_csv())
        summary = {"policy": policy.name, "a": config.a, "T": config.T, "dt": config.dt, "n_paths": 1,
                   "mean": traj.cost, "std_error": math.nan, "n_flagged": int(traj.flagged),
                   "max_epoch_seen": int(traj.epoch[-1])}
        sys.stdout.write(_table(config, [summary]))
        return 1 if traj.flagged else 0

    batch = run_paths(policy, config.a, config.T, config.dt, config.n_paths, config.seed,
                      threads=config.threads, scheme=config.scheme, zero_noise=config.zero_noise)
    est = CostEstimate.from_costs(batch.costs, batch.flagged)
    if config.out_path:
        lines = ["path_index,cost,max_epoch,flagged"]
        for i, (c, e, f) in enumerate(zip(batch.costs, batch.max_epoch, batch.flagged)):
            lines.append(f"{i},{c:.17g},{int(e)},{int(f)}")
        write_atomic(config.out_path, "\n".join(lines) + "\n")
    summary = {"policy": policy.name, "a": config.a, "T": config.T, "dt": config.dt, "n_paths": est.n_paths,
               "mean": est.mean, "std_error": est.std_error, "n_flagged": est.n_flagged,
               "max_epoch_seen": int(batch.max_epoch.max())}
    sys.stdout.write(_table(config, [summary]))
    if est.n_flagged:
        print(f"error: {est.n_flagged} paths diverged", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(config: RunConfig) -> int:
    policy = parse_policy(config.policy, 0.0, config.T)
    records = regret_sweep(config.a_grid, policy, config.T, config.dt, config.n_paths, config.seed,
                           threads=config.threads, scheme=config.scheme)
    _emit(config, sweep_to_json(records) if config.format == "json" else sweep_to_csv(records))
    return 0


def _cmd_epochs(config: RunConfig) -> int:
    occ = epoch_statistics(config.a, config.T, config.dt, config.n_paths, config.seed, threads=config.threads)
    _emit(config, occ.to_json() if config.format == "json" else occ.to_csv())
    return 0


def _cmd_verify(config: RunConfig) -> int:
    reports = run_suite(config.suite, config.seed, config.n_paths, config.threads, config.T, config.dt)
    if config.format == "json":
        text = json.dumps([{"name": r.name, "statistic": r.statistic, "target_lo": r.target_lo,
                            "target_hi": r.target_hi, "pass": r.passed, "n": r.n_samples, "seed": r.seed}
                           for r in reports], indent=2) + "\n"
    else:
        text = reports_to_csv(reports)
    _emit(config, text)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"verify: {len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


HANDLERS = {
    "sopt": _cmd_sopt,
    "simulate": _cmd_simulate,
    "regret-sweep": _cmd_sweep,
    "epochs": _cmd_epochs,
    "verify": _cmd_verify,
}


def run(config: RunConfig) -> int:
    try:
        return HANDLERS[config.command](config)
    except ExperimentAborted as exc:
        print(f"error: experiment aborted: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
