"""Command line entry point: ``fairkd {synth,partition,evaluate,benchmark}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .calibration import DEFAULT_ECE_BINS, DEFAULT_THRESHOLD, ScoreSet, calibration_report
from .classifiers import ClassifierSpec, encode_features, train_and_score
from .experiment import ALGORITHMS, ExperimentConfig, build_partitioning, run_benchmark
from .spatial import GridSpec, Region
from .synth import BiasBlob, SynthConfig, generate

log = logging.getLogger("fairkd")


def _blob(text: str) -> BiasBlob:
    try:
        r0, r1, c0, c1, shift = text.split(",")
        return BiasBlob(Region(int(r0), int(r1), int(c0), int(c1)), float(shift))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"blob must be ROW_MIN,ROW_MAX,COL_MIN,COL_MAX,SHIFT: {exc}") from None


def _threshold(text: str) -> tuple[str, float]:
    try:
        task, value = text.split("=")
        return task, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected TASK=VALUE, got {text!r}") from None


def _add_data_args(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--grid", type=GridSpec.parse, default=GridSpec(32, 32), help="ROWSxCOLS (default 32x32)")
    p.add_argument(
        "--label-threshold",
        type=_threshold,
        action="append",
        default=[],
        metavar="TASK=VALUE",
        help="binarize a raw outcome column as value >= VALUE",
    )
    p.add_argument("--seed", type=int, default=0)


def _add_classifier_args(p: argparse.ArgumentParser):
    d = ClassifierSpec()
    p.add_argument("--classifier", default=d.kind)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--l2", type=float, default=d.l2)


def _add_algorithm_args(p: argparse.ArgumentParser):
    p.add_argument("--task", type=int, default=0, help="task index used for fairness and evaluation")
    p.add_argument("--tasks", type=int, nargs="+", help="multi-objective task indices (default: all)")
    p.add_argument("--alpha", type=float, nargs="+", help="multi-objective task weights (default: equal)")
    p.add_argument(
        "--normalized-multi-objective",
        action="store_true",
        help="drop the record-count factor from the multi-objective split criterion",
    )
    p.add_argument("--fixed-partition", help="rectangles CSV/JSON for the 'fixed' baseline")


def _spec(args) -> ClassifierSpec:
    return ClassifierSpec(args.classifier, args.learning_rate, args.epochs, args.l2, args.seed)


def _config(args, algorithm: str, heights) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=args.data,
        algorithm=algorithm,
        heights=tuple(heights),
        task=args.task,
        tasks=tuple(args.tasks) if args.tasks else None,
        alpha=tuple(args.alpha) if args.alpha else None,
        normalized_multi_objective=args.normalized_multi_objective,
        classifier=_spec(args),
        grid=args.grid,
        label_thresholds=dict(args.label_threshold),
        seed=args.seed,
        fixed_partition=args.fixed_partition,
        output_dir=str(getattr(args, "out", "results")),
    )


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        grid=args.grid,
        n_records=args.records,
        n_features=args.features,
        m_tasks=args.tasks,
        bias_blobs=tuple(args.blob) if args.blob else None,
        noise_sd=args.noise_sd,
        seed=args.seed,
    )
    io.write_dataset(generate(cfg), args.out)
    log.info("wrote %d records to %s", cfg.n_records, args.out)
    return 0


def cmd_partition(args) -> int:
    cfg = _config(args, args.algorithm, [args.height])
    d = io.ingest(args.data, args.grid, cfg.label_thresholds)
    partitioning, tree, _ = build_partitioning(cfg, d, args.height)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_partitioning(partitioning, d.grid, out / "partitioning.json")
    io.write_partitioning(partitioning, d.grid, out / "partitioning.csv")
    if tree is not None:
        io.write_json(tree.to_dict(), out / "tree.json")
    log.info("%d regions written to %s", len(partitioning), out)
    return 0


def cmd_evaluate(args) -> int:
    d = io.ingest(args.data, args.grid, dict(args.label_threshold))
    p = io.fixed_partition(args.partitioning, d.grid)
    if args.scores:
        scores = ScoreSet(io.read_scores(args.scores, d), args.task)
    else:
        scores = train_and_score(encode_features(d, p), d.label(args.task), None, _spec(args), args.task)
    meta = {"algorithm": "evaluate", "height": None, "seed": args.seed, "split": {"part": "all", "records": len(d)}}
    report = calibration_report(d, scores, p, args.task, args.ece_bins, args.threshold, meta)
    if args.out:
        io.write_json(report.to_dict(), args.out)
    else:
        json.dump(report.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def cmd_benchmark(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        algorithms = raw.pop("algorithms", None) or [raw.get("algorithm", "fair")]
        base = ExperimentConfig.from_dict({**raw, "algorithm": algorithms[0]})
    else:
        if not args.data:
            raise SystemExit("benchmark needs --config or --data")
        algorithms = args.algorithms
        base = _config(args, algorithms[0], args.heights)
    overrides = {k: getattr(args, k) for k in ("ece_bins", "threshold") if getattr(args, k) is not None}
    base = replace(base, timing=args.timing or base.timing, **overrides)
    seeds = args.seeds if args.seeds else [base.seed]
    d = io.ingest(base.dataset, base.grid, base.label_thresholds)
    for seed in seeds:
        out = Path(base.output_dir) if len(seeds) == 1 else Path(base.output_dir) / f"seed_{seed}"
        cfg = replace(base, seed=seed, output_dir=str(out), classifier=replace(base.classifier, seed=seed))
        run_benchmark(cfg, algorithms, d)
        log.info("results in %s", out / "results.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairkd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=GridSpec.parse, default=GridSpec(32, 32))
    p.add_argument("--records", type=int, default=2000)
    p.add_argument("--features", type=int, default=6)
    p.add_argument("--tasks", type=int, default=1)
    p.add_argument(
        "--blob",
        type=_blob,
        action="append",
        metavar="R0,R1,C0,C1,SHIFT",
        help="bias blob (repeatable); default: two blobs with shifts +0.35 and -0.35, scaled to the grid",
    )
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="build a partitioning and its tree")
    _add_data_args(p)
    _add_classifier_args(p)
    _add_algorithm_args(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="fair")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("evaluate", help="calibration report for a dataset and partitioning")
    _add_data_args(p)
    _add_classifier_args(p)
    p.add_argument("--partitioning", required=True, help="rectangles CSV or JSON")
    p.add_argument("--scores", help="id,score CSV; default: train a classifier in-sample")
    p.add_argument("--task", type=int, default=0)
    p.add_argument("--ece-bins", type=int, default=DEFAULT_ECE_BINS)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="height sweep over algorithms, writes results.csv")
    p.add_argument("--config", help="experiment JSON; flags below are ignored except --seeds/--timing/--ece-bins/--threshold")
    p.add_argument("--data")
    p.add_argument("--grid", type=GridSpec.parse, default=GridSpec(32, 32))
    p.add_argument("--label-threshold", type=_threshold, action="append", default=[], metavar="TASK=VALUE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, nargs="+", help="seed sweep; one sub-directory per seed")
    _add_classifier_args(p)
    _add_algorithm_args(p)
    p.add_argument("--algorithms", nargs="+", choices=ALGORITHMS, default=["fair", "iterative", "median", "reweight-grid"])
    p.add_argument("--heights", type=int, nargs="+", default=[0, 2, 4, 6, 8, 10])
    p.add_argument("--ece-bins", type=int, help=f"default {DEFAULT_ECE_BINS}")
    p.add_argument("--threshold", type=float, help=f"classification threshold, default {DEFAULT_THRESHOLD}")
    p.add_argument("--timing", action="store_true", help="fill runtime_ms (makes results.csv non-reproducible)")
    p.add_argument("--out", default="results", help="output directory")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
