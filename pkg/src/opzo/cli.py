"""Command-line entry point.

Subcommands: train, verify, compare, analyze-variance, profile-efficiency,
cost-model. Run `opzo <subcommand> -h` for flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import runner, verify
from .metrics import CostModelInput, cost_model


def _cmd_train(args) -> int:
    config = runner.RunConfig.from_json(args.config)
    if args.out_dir is not None:
        config = dataclasses.replace(config, out_dir=args.out_dir)

    def progress(epoch):
        print(
            f"epoch {epoch['epoch']}: loss {epoch['train_loss']:.4f} "
            f"train acc {epoch['train_acc']:.4f} test acc {epoch['test_acc']:.4f}"
        )

    record = runner.run(config, progress=progress)
    print(f"final test accuracy: {record.final_test_acc:.4f}")
    if config.out_dir:
        print(f"artifacts written to {config.out_dir}")
    return 0


def _cmd_verify(args) -> int:
    suites = list(verify.SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    for suite in suites:
        for r in verify.run_suite(suite):
            status = "PASS" if r.passed else "FAIL"
            print(f"[{suite}] {r.name}: {status} ({r.detail})")
            failed += 0 if r.passed else 1
    return 1 if failed else 0


def _cmd_compare(args) -> int:
    rows = runner.compare(args.runs)
    cols = ["dataset", "model", "engine", "runs", "mean_acc", "std_acc"]
    print(runner.format_table(rows, cols))
    if args.out:
        with open(args.out, "w") as f:
            f.write(",".join(cols) + "\n")
            for r in rows:
                f.write(",".join(str(r[c]) for c in cols) + "\n")
    return 0


def _cmd_analyze_variance(args) -> int:
    config = runner.RunConfig.from_json(args.config)
    engines = args.engines.split(",") if args.engines else [config.engine]
    rows = []
    for engine in engines:
        result = runner.analyze_variance(dataclasses.replace(config, engine=engine))
        for i, v in enumerate(result["layer_variances"]):
            rows.append({"engine": engine, "layer": i, "variance": v})
        rows.append({"engine": engine, "layer": "total", "variance": result["total_variance"]})
    for r in rows:
        print(f"{r['engine']:>6} layer {r['layer']}: {r['variance']:.6e}")
    if args.out:
        with open(args.out, "w") as f:
            f.write("engine,layer,variance\n")
            for r in rows:
                f.write(f"{r['engine']},{r['layer']},{r['variance']!r}\n")
    return 0


def _cmd_profile_efficiency(args) -> int:
    config = runner.RunConfig.from_json(args.config)
    record, prof = runner.profile_run_efficiency(config)
    print(f"final test accuracy: {record.final_test_acc:.4f}")
    for i, r in enumerate(prof.layer_rates):
        print(f"layer {i} firing rate: {r:.4f}")
    print(f"total firing rate: {prof.total_rate:.4f}")
    print(f"synaptic operations: {prof.synops:.0f}")
    if args.out:
        with open(args.out, "w") as f:
            f.write("metric,value\n")
            for i, r in enumerate(prof.layer_rates):
                f.write(f"firing_rate_layer_{i},{r!r}\n")
            f.write(f"total_firing_rate,{prof.total_rate!r}\n")
            f.write(f"synops,{prof.synops!r}\n")
    return 0


def _cmd_cost_model(args) -> int:
    table = cost_model(CostModelInput(args.layers, args.n, args.m))
    rows = [
        {"method": name, "memory": e.memory, "operations": e.operations,
         "parallelizable": e.parallelizable}
        for name, e in table.items()
    ]
    print(runner.format_table(rows, ["method", "memory", "operations", "parallelizable"]))
    if args.out:
        with open(args.out, "w") as f:
            json.dump({name: dataclasses.asdict(e) for name, e in table.items()}, f, indent=2)
            f.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opzo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a JSON run config")
    t.add_argument("--config", required=True, help="path to the run config JSON")
    t.add_argument("--out-dir", help="override the config's output directory")
    t.set_defaults(func=_cmd_train)

    v = sub.add_parser("verify", help="run an estimator verification suite")
    v.add_argument("--suite", required=True, choices=list(verify.SUITES) + ["all"])
    v.set_defaults(func=_cmd_verify)

    c = sub.add_parser("compare", help="summarize finished runs")
    c.add_argument("--runs", nargs="+", required=True, help="run output directories")
    c.add_argument("--out", help="also write the summary as CSV")
    c.set_defaults(func=_cmd_compare)

    a = sub.add_parser("analyze-variance", help="per-layer gradient variance over one epoch")
    a.add_argument("--config", required=True)
    a.add_argument("--engines", help="comma-separated engine list (default: config's engine)")
    a.add_argument("--out", help="also write the report as CSV")
    a.set_defaults(func=_cmd_analyze_variance)

    e = sub.add_parser("profile-efficiency", help="firing rates and SynOps of a trained model")
    e.add_argument("--config", required=True)
    e.add_argument("--out", help="also write the report as CSV")
    e.set_defaults(func=_cmd_profile_efficiency)

    m = sub.add_parser("cost-model", help="neuromorphic feedback-cost table")
    m.add_argument("--n", type=int, required=True, help="hidden layer width")
    m.add_argument("--m", type=int, required=True, help="output width")
    m.add_argument("--layers", type=int, required=True, help="number of hidden layers")
    m.add_argument("--out", help="also write the table as JSON")
    m.set_defaults(func=_cmd_cost_model)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
