from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import pipeline
from .pipeline import RunConfig


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data = json.load(fh)
    for key, attr in (("features", "features"), ("values_per_feature", "values"), ("k_max", "k_max")):
        value = getattr(args, attr, None)
        if value is not None:
            data[key] = value.split(",") if key == "features" else value
    if getattr(args, "workers", None):
        data["parallelism"] = args.workers
    return RunConfig.from_dict(data)


def cmd_enumerate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    config = _config_from_args(args)
    configs = pipeline.enumerate_configurations(config)
    print(f"count {len(configs)}")
    if args.ids:
        for c in configs:
            print(c.id)
    logging.getLogger(__name__).debug("enumerated in %.3fs", time.perf_counter() - t0)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    state = pipeline.run(config, args.out, stop_after=args.limit)
    return _finish(state)


def cmd_resume(args: argparse.Namespace) -> int:
    state = pipeline.resume(args.out, stop_after=args.limit, parallelism=args.workers or 0)
    return _finish(state)


def _finish(state: pipeline.RunState) -> int:
    if not state.done:
        print(f"stopped after {state.completed}/{len(state.configurations)} configurations; run `resume`")
        return 0
    summary = json.loads((state.out / "summary.json").read_text())
    print(pipeline.feasibility_table(summary))
    print(f"complete games: {summary['games_complete']}/{summary['games_total']}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    state = pipeline.load_state(args.out)
    summary = pipeline.report(state)
    print(pipeline.feasibility_table(summary))
    return 0


def cmd_shapley(args: argparse.Namespace) -> int:
    summary = pipeline.recompute_shapley(args.out)
    print(f"complete games: {summary['games_complete']}/{summary['games_total']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logshap", description="Shapley attribution of event-log features to discovery metrics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="JSON file with RunConfig fields")
        sp.add_argument("--features", help="comma-separated feature ids")
        sp.add_argument("--values", type=int, help="values per feature")
        sp.add_argument("--k-max", dest="k_max", type=int)

    sp = sub.add_parser("enumerate", help="print the configuration count (and ids)")
    config_flags(sp)
    sp.add_argument("--ids", action="store_true", help="also print every configuration id")
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("run", help="run a study")
    config_flags(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--limit", type=int, help="stop after this many configurations")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("resume", help="continue an interrupted run")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--limit", type=int)
    sp.set_defaults(func=cmd_resume)

    for name, func, text in (
        ("report", cmd_report, "rewrite every report file"),
        ("shapley", cmd_shapley, "recompute Shapley values and reports"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (pipeline.ConfigError, pipeline.IntegrityError, pipeline.MissingStageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
