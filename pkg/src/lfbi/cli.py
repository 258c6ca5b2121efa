"""Command-line entry point.

Subcommands: train (run an experiment config), reference (build an ABC
reference posterior), variance-check (kernel bandwidth scaling study),
compare (budget-matched ABC comparison), metrics (re-evaluate from
checkpoints).  Failures print a single machine-readable ``error:`` line to
stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import harness, smcabc
from .simulators import get_model, model_names


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfbi",
                                description="likelihood-free Bayesian inference toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run a training experiment from a config file")
    t.add_argument("--config", required=True, help="YAML experiment config")
    t.add_argument("--seed", required=True, type=int, nargs="+",
                   help="seed(s), overriding the config")
    t.add_argument("--out", required=True, help="output directory root")
    t.add_argument("--parallel-seeds", action="store_true",
                   help="run seeds in separate processes")

    r = sub.add_parser("reference", help="build an SMC-ABC reference posterior")
    r.add_argument("--model", required=True, choices=model_names())
    r.add_argument("--budget", type=int, default=smcabc.REFERENCE_BUDGET)
    r.add_argument("--count", type=int, default=10_000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output path (.npz)")

    v = sub.add_parser("variance-check", help="kernel bandwidth mean/variance scaling study")
    v.add_argument("--dim", type=int, choices=(1, 2), default=1)
    v.add_argument("--taus", type=float, nargs="+",
                   default=[0.02, 0.05, 0.1, 0.2, 0.4])
    v.add_argument("--draws", type=int, default=10**6)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", required=True, help="output CSV path")

    c = sub.add_parser("compare", help="budget-matched comparison against SMC-ABC")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--budget", type=int, default=None)

    m = sub.add_parser("metrics", help="re-evaluate metrics from stored checkpoints")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True)
    return p


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    updates = {"out": args.out}
    if getattr(args, "seed", None) is not None:
        updates["seeds"] = tuple(args.seed)
    return dataclasses.replace(cfg, **updates)


def _cmd_train(args) -> int:
    cfg = _load(args)
    if args.parallel_seeds and len(cfg.seeds) > 1:
        import concurrent.futures
        singles = [dataclasses.replace(cfg, seeds=(s,)) for s in cfg.seeds]
        with concurrent.futures.ProcessPoolExecutor() as ex:
            for _ in ex.map(harness.run_experiment, singles):
                pass
        # independent per-seed runs; merge their rows under the full config
        from . import metrics as m
        rows = []
        for single in singles:
            rows.extend(m.read_metric_csv(
                harness.run_dir(single).rstrip("/") + "/metrics.csv"))
        import os
        base = harness.run_dir(cfg)
        os.makedirs(base, exist_ok=True)
        m.write_metric_csv(os.path.join(base, "metrics.csv"), rows)
        print(base)
        return 0
    base = harness.run_experiment(cfg)
    print(base)
    return 0


def _cmd_reference(args) -> int:
    model = get_model(args.model)
    rng = np.random.default_rng(args.seed)
    thetas, meta = smcabc.reference_posterior(model, args.count, args.budget,
                                              rng, seed_label=args.seed)
    smcabc.save_reference(args.out, thetas, meta)
    print(args.out if args.out.endswith(".npz") else args.out + ".npz")
    return 0


def _cmd_variance_check(args) -> int:
    result = harness.variance_check(args.dim, args.taus, args.draws, args.seed)
    harness.write_variance_csv(args.out, result)
    print(f"slope {result.slope:.4f}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _load(args)
    path = harness.run_compare(cfg, budget=args.budget)
    print(path)
    return 0


def _cmd_metrics(args) -> int:
    cfg = _load(args)
    base = harness.reevaluate(cfg)
    print(base)
    return 0


_DISPATCH = {
    "train": _cmd_train,
    "reference": _cmd_reference,
    "variance-check": _cmd_variance_check,
    "compare": _cmd_compare,
    "metrics": _cmd_metrics,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print("error: " + json.dumps({"type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
