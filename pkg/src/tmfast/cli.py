"""Command-line front end: ``tmfast <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal
invariant violation (for example engines disagreeing).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import booleanize as bz
from .bench import format_inspection, format_report, inspect_model, run_bench
from .core import DataError, InvariantError
from .engines import ALL_ENGINES, EngineKind, predict_batch
from .formats import read_dataset, read_model, write_dataset, write_model
from .reorder import reorder
from .trainer import TrainerConfig, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("tmfast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _engines(text: str) -> list:
    if text == "all":
        return list(ALL_ENGINES)
    try:
        return [EngineKind.parse(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise UsageError(str(e)) from None


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def cmd_booleanize(args) -> int:
    if args.format == "idx":
        if not args.labels:
            raise UsageError("--format idx needs --labels")
        raw = bz.ingest_idx(args.input, args.labels)
    else:
        raw = bz.ingest_csv(args.input, args.label_col)
    if args.limit:
        raw = raw.subset(slice(0, args.limit))

    train_raw, test_raw = raw, None
    if args.test_fraction:
        if not args.test_output:
            raise UsageError("--test-fraction needs --test-output")
        train_raw, test_raw = bz.train_test_split(raw, args.test_fraction, args.seed)

    perm = None
    if args.permutation_from:
        src = read_model(args.permutation_from)
        if src.permutation is None:
            raise DataError(f"{args.permutation_from} carries no permutation")
        perm = src.permutation

    if args.thermometer:
        th = bz.Thermometer.from_json(Path(args.thermometer).read_text())
    elif args.thermometer_from:
        th = read_model(args.thermometer_from).thermometer
        if th is None:
            raise DataError(f"{args.thermometer_from} carries no thermometer")
    else:
        scheme = args.scheme or ("fixed" if args.format == "idx" else "quantile")
        if scheme == "fixed":
            th = bz.fixed_thermometer(train_raw.n_raw_features, args.threshold or [75.0])
        else:
            bins = args.bins or (1 if args.format == "idx" else 12)
            th = bz.fit_thermometer(train_raw, bins, scheme)
    if args.thermometer_out:
        Path(args.thermometer_out).write_text(th.to_json())

    outputs = [(train_raw, args.output)]
    if test_raw is not None:
        outputs.append((test_raw, args.test_output))
    for part, path in outputs:
        data = bz.emit_dataset(bz.booleanize(part.values, th), part.labels, perm)
        write_dataset(data, path)
        print(f"{path}: {data.n_samples} samples × {data.n_literals} literals")
    return EXIT_OK


def cmd_train(args) -> int:
    data = read_dataset(args.data)
    th = None
    if args.thermometer:
        th = bz.Thermometer.from_json(Path(args.thermometer).read_text())
    cfg = TrainerConfig(
        clauses_per_class=args.clauses,
        T=args.T,
        s=args.s,
        epochs=args.epochs,
        n_states=args.states,
        rng_seed=args.seed,
        boost_true_positive=args.boost,
    )
    model = train(data, cfg, n_classes=args.n_classes, thermometer=th)
    write_model(model, args.output)
    print(f"{args.output}: {model.shape.describe()}")
    print(f"training accuracy: {evaluate(model, data):.4f}")
    if args.eval:
        print(f"test accuracy: {evaluate(model, read_dataset(args.eval)):.4f}")
    return EXIT_OK


def cmd_reorder(args) -> int:
    model = read_model(args.model)
    calib = read_dataset(args.calibration, model.shape.n_classes)
    result = reorder(model, calib)
    write_model(result.model, args.output)
    if args.stats:
        Path(args.stats).write_text(result.permutation.to_json())
    print(f"{args.output}: reordered in {result.overhead_ns / 1e6:.3f} ms")
    return EXIT_OK


def cmd_infer(args) -> int:
    model = read_model(args.model)
    data = read_dataset(args.data, model.shape.n_classes)
    engine = _engines(args.engine)[0]
    res = predict_batch(model, data, engine, parallel=args.parallel)
    doc = {
        "engine": engine.value,
        "n_samples": data.n_samples,
        "accuracy": res.accuracy,
        "total_wall_ns": res.total_wall_ns,
        "mean_words_examined_per_clause": res.mean_words_examined_per_clause,
        "mean_literals_examined_per_clause": res.mean_literals_examined_per_clause,
        "early_exit_rate": res.early_exit_rate,
    }
    if args.verbose:
        doc["predictions"] = res.predictions.tolist()
        doc["class_sums"] = res.class_sums.tolist()
    if args.report:
        _write_json(args.report, doc)
    acc = "n/a" if res.accuracy is None else f"{res.accuracy:.4f}"
    print(f"{engine.value}: accuracy {acc}, {res.total_wall_ns / 1e6:.3f} ms")
    return EXIT_OK


def cmd_bench(args) -> int:
    model = read_model(args.model)
    data = read_dataset(args.data, model.shape.n_classes)
    calib = read_dataset(args.calibration) if args.calibration else None
    if args.calibration and not args.with_reorder:
        raise UsageError("--calibration only applies with --with-reorder")
    report = run_bench(
        model,
        data,
        _engines(args.engines),
        repeats=args.repeats,
        warmup=args.warmup,
        with_reorder=args.with_reorder,
        calibration=calib,
        parallel=args.parallel,
        per_sample=not args.no_per_sample,
    )
    print(format_report(report))
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    if args.figures:
        from .plotting import render_report_figures

        for p in render_report_figures(report, args.figures):
            print(f"figure: {p}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    info = inspect_model(read_model(args.model))
    print(json.dumps(info, indent=2) if args.json else format_inspection(info))
    return EXIT_OK


def cmd_fetch_mnist(args) -> int:
    from .datasets import fetch_mnist

    print(fetch_mnist(args.dest))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tmfast", description="Tsetlin Machine inference engines and benchmarks")
    p.add_argument("-v", "--log-level", default="WARNING", help="logging level")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    b = sub.add_parser("booleanize", help="raw CSV/IDX data -> .tmx literal file")
    b.add_argument("--input", required=True)
    b.add_argument("--format", choices=["csv", "idx"], default="csv")
    b.add_argument("--labels", help="IDX label file (with --format idx)")
    b.add_argument("--label-col", default="-1", help="label column index or header name")
    b.add_argument("--bins", type=int, help="thermometer bins (default 12 for csv, 1 for idx)")
    b.add_argument("--scheme", choices=["quantile", "nonzero-pooled", "fixed"])
    b.add_argument("--threshold", type=float, action="append", help="fixed threshold (repeatable)")
    b.add_argument("--thermometer", help="apply thresholds from this JSON file")
    b.add_argument("--thermometer-from", help="apply thresholds stored in this model")
    b.add_argument("--thermometer-out", help="save fitted thresholds as JSON")
    b.add_argument("--permutation-from", help="emit literals in this model's reordered layout")
    b.add_argument("--test-fraction", type=float, default=0.0)
    b.add_argument("--test-output")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--limit", type=int, help="keep only the first N samples")
    b.add_argument("--output", required=True)
    b.set_defaults(func=cmd_booleanize)

    t = sub.add_parser("train", help="train a vanilla TM and write a .tmbm model")
    t.add_argument("--data", required=True)
    t.add_argument("--clauses", type=int, required=True, help="clauses per class")
    t.add_argument("--T", type=int, required=True)
    t.add_argument("--s", type=float, required=True)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--states", type=int, default=100)
    t.add_argument("--boost", action=argparse.BooleanOptionalAction, default=False,
                   help="boost true positive feedback")
    t.add_argument("--n-classes", type=int)
    t.add_argument("--thermometer", help="thresholds JSON to embed in the model")
    t.add_argument("--eval", help="report accuracy on this .tmx after training")
    t.add_argument("--output", required=True)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reorder", help="permute literals by P(zero) * P(include)")
    r.add_argument("--model", required=True)
    r.add_argument("--calibration", required=True)
    r.add_argument("--output", required=True)
    r.add_argument("--stats")
    r.set_defaults(func=cmd_reorder)

    i = sub.add_parser("infer", help="classify a dataset with one engine")
    i.add_argument("--model", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--engine", default="bitwise-ee", choices=[e.value for e in ALL_ENGINES])
    i.add_argument("--report")
    i.add_argument("--verbose", action="store_true", help="include predictions and class sums")
    i.add_argument("--parallel", action="store_true")
    i.set_defaults(func=cmd_infer)

    k = sub.add_parser("bench", help="time the engines against each other")
    k.add_argument("--model", required=True)
    k.add_argument("--data", required=True)
    k.add_argument("--engines", default="all")
    k.add_argument("--repeats", type=int, default=9)
    k.add_argument("--warmup", type=int, default=3)
    k.add_argument("--with-reorder", action="store_true")
    k.add_argument("--calibration")
    k.add_argument("--parallel", action="store_true", help="sample-parallel kernels")
    k.add_argument("--no-per-sample", action="store_true", help="skip per-sample timing pass")
    k.add_argument("--report", help="JSON report path")
    k.add_argument("--csv", help="CSV table path")
    k.add_argument("--figures", help="directory for PNG figures")
    k.set_defaults(func=cmd_bench)

    n = sub.add_parser("inspect", help="summarize a model file")
    n.add_argument("--model", required=True)
    n.add_argument("--json", action="store_true")
    n.set_defaults(func=cmd_inspect)

    f = sub.add_parser("fetch-mnist", help="download and verify the MNIST IDX files")
    f.add_argument("--dest")
    f.set_defaults(func=cmd_fetch_mnist)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "repeats", 1) < 1:
            raise UsageError("--repeats must be >= 1")
        return args.func(args)
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as e:
        print(f"error: invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
