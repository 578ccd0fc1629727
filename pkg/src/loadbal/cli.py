"""Command-line entry point: ``loadbal {gen,run,sweep,verify}``."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys

import numpy as np

from .exceptions import ConfigError, InfeasibleInstanceError, LoadBalError, SizeLimitError
from .generators import PlantedSpec, gen_fat_tree, gen_planted, gen_recursive_tree, run_adversary
from .graphbal import GreedyScheduler
from .potential import SoftmaxScheduler
from .sim import ALGORITHMS, ANALYZERS, ORDERS, ExperimentConfig, RngSpec, STREAM_INSTANCE, run_trials

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIZE = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5

SEED_ENV = "LOADBAL_SEED"

# grid axes that parametrize the instance rather than the run
INSTANCE_KEYS = {"k", "D", "m", "n", "opt", "n_feasible", "min_size", "arity", "height", "path"}
GRID_ALIASES = {"T": "trials", "algo": "algorithm"}


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _report(line: str, out: str | None) -> None:
    # keep stdout clean when it carries the data
    print(line, file=sys.stderr if out in (None, "-") else sys.stdout)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _config_json(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True)


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "fat-tree":
        _require(args, "k")
        obj = gen_fat_tree(args.k, allow_large=args.allow_large)
        summary = f"fat-tree k={args.k}: {obj.n} nodes, {obj.n_edges} edges"
    elif kind == "recursive":
        _require(args, "D")
        obj = gen_recursive_tree(args.D, allow_large=args.allow_large)
        summary = f"recursive D={args.D}: {obj.n} nodes, {obj.n_edges} edges"
    elif kind == "planted":
        _require(args, "m", "n")
        spec = PlantedSpec(args.m, args.n, args.opt, args.n_feasible)
        obj = gen_planted(spec, RngSpec(_seed(args), 0, STREAM_INSTANCE).generator())
        summary = f"planted m={args.m}: {obj.n_jobs} jobs, opt {args.opt!r}"
    else:
        _require(args, "m")
        # the adversary is adaptive, so the file records the sequence it played against --algo
        sched = SoftmaxScheduler() if args.algo == "softmax" else GreedyScheduler(tie_break="first")
        obj, _ = run_adversary(sched, args.m)
        summary = f"classic-pairs m={args.m}: {obj.n_jobs} jobs against {type(sched).__name__}"
    _write(json.dumps(obj.to_dict(), sort_keys=True) + "\n", args.out)
    _report(summary, args.out)
    return EXIT_OK


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"gen {args.kind} needs " + ", ".join("--" + n for n in missing))


# ---------------------------------------------------------------- run

def _seed(args, fallback=0) -> int:
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return fallback if args.seed is None else args.seed


def load_config(args) -> ExperimentConfig:
    """Merge ``--config`` with the command-line flags; flags win."""
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data = dict(data)
    if args.instance:
        data["instance"] = {"kind": "file", "path": args.instance}
        if args.k is not None:
            data["instance"]["k"] = args.k
    for flag, key in (("algo", "algorithm"), ("trials", "trials"), ("order", "order"), ("a", "a"),
                      ("tie_break", "tie_break")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.analyzer:
        data["analyzers"] = list(args.analyzer)
    if args.doubling:
        data["doubling"] = True
    if args.shuffle_labels:
        data["shuffle_labels"] = True
    if args.allow_large:
        data["allow_large"] = True
    data["seed"] = _seed(args, data.get("seed", 0))
    return ExperimentConfig.from_dict(data)


def render_csv(results) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {_config_json(results.config)}\n")
    flag_keys = sorted({k for r in results.reports for k in r.flags})
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial", "seed", "makespan", "opt", "ratio", *flag_keys])
    for r in results.reports:
        writer.writerow([r.trial, r.seed, _fmt(r.makespan), _fmt(r.opt), _fmt(r.ratio),
                         *(_fmt(r.flags[k]) if k in r.flags else "" for k in flag_keys)])
    agg = results.aggregate
    opt_mean = float(np.mean([r.opt for r in results.reports])) if results.reports else ""
    writer.writerow(["#agg", results.config.seed, _fmt(agg.get("makespan_mean", "")), _fmt(opt_mean),
                     _fmt(agg.get("ratio_mean", "")), *(_fmt(agg.get(f"{k}_mean", "")) for k in flag_keys)])
    return buf.getvalue()


def render_json(results) -> str:
    payload = {
        "config": results.config.to_dict(),
        "seed": results.config.seed,
        "trials": [
            {"trial": r.trial, "seed": r.seed, "makespan": r.makespan, "opt": r.opt, "ratio": r.ratio,
             "flags": r.flags}
            for r in results.reports
        ],
        "aggregate": results.aggregate,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def aggregate_line(agg: dict) -> str:
    parts = [f"trials={agg['trials']}"]
    parts += [f"{k}={agg[k]:.6g}" for k in sorted(agg) if k.endswith("_mean")]
    return " ".join(parts)


def cmd_run(args) -> int:
    config = load_config(args)
    results = run_trials(config, threads=args.threads)
    render = render_json if args.format == "json" else render_csv
    _write(render(results), args.out)
    _report(aggregate_line(results.aggregate), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- sweep

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_grid(items) -> dict:
    grid = {}
    for item in items or ():
        key, sep, values = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"grid axis must look like key=v1,v2 (got {item!r})")
        key = GRID_ALIASES.get(key, key)
        grid[key] = [_parse_value(v) for v in values.split(",") if v != ""]
    return grid


def _point_config(base: dict, point: dict) -> dict:
    data = json.loads(json.dumps(base))
    data.setdefault("instance", {})
    for key, value in point.items():
        if key in INSTANCE_KEYS:
            data["instance"][key] = value
        elif key == "kind":
            data["instance"]["kind"] = value
        else:
            data[key] = value
    return data


def cmd_sweep(args) -> int:
    base = load_config(args).to_dict() if (args.config or args.instance) else _bare_template(args)
    grid = parse_grid(args.grid)
    axes = list(grid)
    points = [] if not axes or any(not v for v in grid.values()) else [
        dict(zip(axes, combo)) for combo in itertools.product(*grid.values())
    ]
    rows = []
    for point in points:
        row = {"point": point, "status": "ok", "error": "", "aggregate": {}}
        try:
            results = run_trials(ExperimentConfig.from_dict(_point_config(base, point)), threads=args.threads)
            row["aggregate"] = results.aggregate
        except (LoadBalError, ValueError, OSError) as exc:
            row["status"] = "error"
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
        logger.info("sweep point %s: %s", point, row["status"])

    if args.format == "json":
        text = json.dumps({"config": base, "seed": base.get("seed", 0), "grid": grid, "points": rows},
                          sort_keys=True, indent=2) + "\n"
    else:
        text = render_sweep_csv(base, axes, rows)
    _write(text, args.out)
    _report(f"sweep: {len(rows)} points, {sum(r['status'] == 'error' for r in rows)} errors", args.out)
    return EXIT_OK


def _bare_template(args) -> dict:
    # sweeps may name the instance entirely through the grid (kind=..., k=...)
    data = {"instance": {"kind": "fat-tree"}, "seed": _seed(args)}
    for flag, key in (("algo", "algorithm"), ("trials", "trials"), ("order", "order"), ("a", "a"),
                      ("tie_break", "tie_break")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.analyzer:
        data["analyzers"] = list(args.analyzer)
    if args.allow_large:
        data["allow_large"] = True
    return data


def render_sweep_csv(base: dict, axes: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {json.dumps(base, sort_keys=True)}\n")
    if not rows:
        return buf.getvalue()
    stats = sorted({k for r in rows for k in r["aggregate"]} - {"trials"})
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*axes, "status", "error", "trials", *stats])
    for r in rows:
        agg = r["aggregate"]
        writer.writerow([*(r["point"][a] for a in axes), r["status"], r["error"], agg.get("trials", ""),
                         *(_fmt(agg[k]) if k in agg else "" for k in stats)])
    return buf.getvalue()


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    from .acceptance import run_all

    only = None
    if args.only:
        only = {int(x) for x in args.only.split(",") if x}
    results = run_all(only=only)
    for r in results:
        print(r.line(timings=args.timings))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_OK if not failed else 1


# ---------------------------------------------------------------- parser

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its keys")
    p.add_argument("--instance", help="tree or instance JSON file")
    p.add_argument("--k", type=int, help="fat-tree parameter for a tree read from --instance")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help=f"master seed (default 0; {SEED_ENV} overrides)")
    p.add_argument("--order", choices=ORDERS)
    p.add_argument("--analyzer", action="append", choices=ANALYZERS, help="repeatable")
    p.add_argument("--a", type=float, help="softmax sharpness (default from m)")
    p.add_argument("--doubling", action="store_true")
    p.add_argument("--tie-break", dest="tie_break", choices=("random", "first"))
    p.add_argument("--shuffle-labels", dest="shuffle_labels", action="store_true")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--allow-large", dest="allow_large", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loadbal", description="Online load balancing experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a tree or instance file")
    gen.add_argument("kind", choices=("fat-tree", "recursive", "planted", "classic-pairs"))
    gen.add_argument("--k", type=int)
    gen.add_argument("--D", type=int)
    gen.add_argument("--m", type=int)
    gen.add_argument("--n", type=int)
    gen.add_argument("--opt", type=float, default=1.0)
    gen.add_argument("--n-feasible", dest="n_feasible", type=int, default=2)
    gen.add_argument("--algo", choices=("softmax", "greedy"), default="greedy",
                     help="algorithm the adaptive adversary plays against")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out")
    gen.add_argument("--allow-large", dest="allow_large", action="store_true")
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="run seeded trials and write per-trial results")
    _add_run_flags(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a config over a parameter grid")
    _add_run_flags(sweep)
    sweep.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="repeatable grid axis")
    sweep.set_defaults(func=cmd_sweep)

    verify = sub.add_parser("verify", help="run the acceptance suite")
    verify.add_argument("--only", help="comma-separated criterion numbers")
    verify.add_argument("--timings", action="store_true", help="append wall-clock seconds")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SizeLimitError as exc:
        print(f"size limit: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except InfeasibleInstanceError as exc:
        print(f"infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
