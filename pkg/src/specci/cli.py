"""Command-line entry point: gen, train, test, bench, selftest.

Exit codes: 0 success, 1 selftest failure, 2 usage or config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import selftest
from .bench import ConfigError, load_config, run_bench
from .citest import decide, statistic
from .datagen import Dataset
from .trainer import RepresentationBundle, TrainConfig, train


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specci", description="Spectral conditional independence testing.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset CSV from a scenario")
    g.add_argument("--config", required=True)
    g.add_argument("--scenario", help="scenario name (default: the first one)")
    g.add_argument("--out", required=True)
    g.add_argument("--test-out", help="also split per the config ratio and write the test share here")
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a representation bundle")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="file with a [train] section")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)

    s = sub.add_parser("test", help="run the test with a trained bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out", help="also write the outcome JSON here")

    b = sub.add_parser("bench", help="run a Monte-Carlo benchmark")
    b.add_argument("--config", required=True)
    b.add_argument("--out", help="report prefix; writes PREFIX.csv and PREFIX.json")
    b.add_argument("--seed", type=int)
    b.add_argument("--reps", type=int)
    b.add_argument("--alpha", type=float)
    b.add_argument("--threads", type=int, default=1)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return ap


def _bench_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.reps is not None:
        cfg.repetitions = args.reps
    if args.alpha is not None:
        cfg.alpha = args.alpha
    cfg.__post_init__()
    return cfg


def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    scen = cfg.scenarios[0]
    if args.scenario is not None:
        match = [s for s in cfg.scenarios if s.name == args.scenario]
        if not match:
            raise UsageError(f"no scenario named {args.scenario!r}")
        scen = match[0]
    ds = scen.generate(args.seed)
    if args.test_out:
        train_set, test_set = ds.split(cfg.split)
        train_set.to_csv(args.out)
        test_set.to_csv(args.test_out)
    else:
        ds.to_csv(args.out)
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config).train if args.config else TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
    bundle = train(Dataset.from_csv(args.data), config)
    bundle.save(args.out)
    return 0


def cmd_test(args) -> int:
    bundle = RepresentationBundle.load(args.bundle)
    T, n = statistic(bundle, Dataset.from_csv(args.data))
    text = decide(T, bundle.d, args.alpha, n).to_json()
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def cmd_bench(args) -> int:
    cfg = _bench_config(args)
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    report = run_bench(cfg, workers=args.threads)
    prefix = args.out or cfg.output or "bench-report"
    report.write(prefix)
    for s in report.summaries:
        print(f"{s.scenario}\t{s.hypothesis}\treject_rate={s.reject_rate:.3f}\tmean_T={s.mean_T:.3f}")
    if report.failed:
        bad = ", ".join(s.scenario for s in report.summaries if s.failed)
        print(f"error: too many failed repetitions in: {bad}", file=sys.stderr)
        return 3
    return 0


def cmd_selftest(args) -> int:
    results = selftest.run_all()
    for name, err in results.items():
        print(f"{'PASS' if err is None else 'FAIL'} {name}" + ("" if err is None else f": {err}"))
    return 0 if all(err is None for err in results.values()) else 1


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "test": cmd_test, "bench": cmd_bench, "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
