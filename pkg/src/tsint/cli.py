"""Command-line entry point: gen, corrupt, train, eval, sweep.

Exit codes: 0 success, 2 configuration error, 3 runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from .config import RunConfig, from_mapping, load_config, parse_value
from .dataset import (SyntheticSpec, export_csv, gen_synthetic, inject_uniform_noise,
                      load_dataset, save_dataset, split_per_class)
from .errors import ConfigError, ContractError, FormatError, NumericError
from .report import emit_report
from .sweep import AXES, run_sweep
from .train import run_eval, run_train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("tsint")


def _add_config_flags(parser):
    group = parser.add_argument_group("config overrides")
    for f in fields(RunConfig):
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}",
                           metavar="VALUE", default=None)


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for f in fields(RunConfig):
        raw = getattr(args, f"cfg_{f.name}")
        if raw is not None:
            overrides[f.name] = parse_value(f.name, raw)
    return from_mapping(overrides, cfg).validate()


def cmd_gen(args):
    spec = SyntheticSpec(args.classes, args.per_class, args.dim, args.separation,
                         args.std, args.seed)
    data = gen_synthetic(spec)
    if args.test_out:
        train, test = split_per_class(data, args.train_fraction, args.seed)
        save_dataset(train, args.out)
        save_dataset(test, args.test_out)
    else:
        save_dataset(data, args.out)
    if args.csv:
        export_csv(load_dataset(args.out), args.csv)
    return EXIT_OK


def cmd_corrupt(args):
    data = inject_uniform_noise(load_dataset(args.input), args.rate, args.seed)
    save_dataset(data, args.out)
    print(json.dumps({"n": len(data), "corrupted_fraction": data.corrupted_fraction}))
    return EXIT_OK


def cmd_train(args):
    cfg = _build_config(args)
    report = run_train(cfg, checkpoint_dir=args.out)
    emit_report(report, args.out)
    final = report.final
    print(json.dumps({"p_at_1": final.precision_at_1, "map_at_r": final.map_at_r,
                      "mean_ap": final.mean_ap, "out": str(args.out)}))
    log.info("wall clock %.2fs", report.wall_clock)
    return EXIT_OK


def cmd_eval(args):
    m = run_eval(args.checkpoint, args.data)
    print(json.dumps({"p_at_1": m.precision_at_1, "map_at_r": m.map_at_r,
                      "mean_ap": m.mean_ap, "n_queries": m.n_queries,
                      "n_excluded": m.n_excluded}))
    return EXIT_OK


def cmd_sweep(args):
    cfg = _build_config(args)
    methods = args.methods.split(",") if args.methods else None
    rows = run_sweep(cfg, args.axis, args.grid, methods, args.out)
    failed = sum(r["status"] != "ok" for r in rows)
    print(json.dumps({"rows": len(rows), "failed": failed, "out": str(args.out)}))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="tsint", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset file")
    p.add_argument("--classes", type=int, default=50)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--separation", type=float, default=1.4)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", help="also split per class and write the test part here")
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--csv", help="debug CSV export of the written file")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("corrupt", help="inject uniform label noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train one run and write its report")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a grid of trainings")
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--grid", help="comma-separated values; tau accepts auto, auto+0.1, ...")
    p.add_argument("--methods", help="comma-separated methods (default: config method)")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FormatError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
