"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import engine, scenarios
from .errors import CrossfireError, GenerationError, SimulationError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

SUMMARY_KEYS = (
    "attack_effective_fraction",
    "bot_recall",
    "bot_precision",
    "benign_false_positives",
    "reroute_total",
)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_sweep(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ValidationError(f"sweep must look like FIELD=v1,v2,... (got {text!r})", field="sweep")
    name, _, values = text.partition("=")
    engine.resolve_field(name)
    vals = [_parse_value(v) for v in values.split(",") if v != ""]
    if not vals:
        raise ValidationError("sweep needs at least one value", field="sweep")
    return name, vals


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def print_summary(summary: dict, label: str = "", out=None):
    out = out or sys.stdout
    if label:
        print(f"== {label}", file=out)
    for key in SUMMARY_KEYS:
        print(f"  {key:<28}{_fmt(summary.get(key))}", file=out)


def _run_one(job):
    cfg, out_dir = job
    trace = engine.run(cfg)
    trace.write(out_dir)
    return trace.summary


def cmd_run(args) -> int:
    cfg = engine.read_scenario(args.scenario)
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    out = Path(args.out)

    if not args.sweep:
        trace = engine.run(cfg)
        trace.write(out)
        print_summary(trace.summary, label=str(args.scenario))
        return EXIT_OK

    name, values = parse_sweep(args.sweep)
    jobs = []
    for i, value in enumerate(values):
        run_cfg = engine.with_overrides(cfg, **{name: value})
        run_cfg = replace(run_cfg, rng_seed=cfg.rng_seed + i)
        jobs.append((run_cfg, out / f"{name}={value}"))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_run_one, jobs))
    else:
        summaries = [_run_one(j) for j in jobs]

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name, "rng_seed", *SUMMARY_KEYS])
        for value, (run_cfg, _), s in zip(values, jobs, summaries):
            w.writerow([value, run_cfg.rng_seed, *(_fmt(s.get(k)) for k in SUMMARY_KEYS)])
    for value, s in zip(values, summaries):
        print_summary(s, label=f"{name}={value}")
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.kind == "figure1":
        spec = scenarios.figure1()
    elif args.kind == "random":
        if args.seed is None:
            raise ValidationError("generate random needs --seed", field="seed")
        spec = scenarios.random_scenario(nodes=args.nodes, bots=args.bots, seed=args.seed)
    elif args.kind == "detection":
        spec = scenarios.detection()
    else:
        spec = scenarios.batching()
    engine.load_scenario(spec)  # never emit something we cannot load
    text = scenarios.dumps(spec)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = engine.read_scenario(args.scenario)
    topo = cfg.topology
    print(
        f"ok: {len(topo.nodes)} nodes, {len(topo.links)} directed links, "
        f"{len(topo.hosts)} hosts, {cfg.total_ticks} ticks"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossfire", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write trace.csv + summary.json")
    p.add_argument("scenario")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int)
    p.add_argument("--sweep", metavar="FIELD=v1,v2,...")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for sweeps")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("generate", help="write a scenario file")
    p.add_argument("kind", choices=["figure1", "random", "detection", "batching"])
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--bots", type=int, default=12)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except CrossfireError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
