"""Height-sweep experiments comparing partitioning algorithms.

For every height: split records 80/20 with a seeded shuffle, build the
partitioning on the training part, retrain the classifier with the final
neighborhoods, and report calibration on both parts.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .calibration import DEFAULT_ECE_BINS, DEFAULT_THRESHOLD, ScoreSet, calibration_report
from .classifiers import ClassifierSpec, encode_features, fit_classifier, reweight
from .index import (
    FairTree,
    fair_kdtree,
    iterative_fair_kdtree,
    median_kdtree,
    multi_objective_fair_kdtree,
)
from .spatial import Dataset, GridSpec, Partitioning, Region, region_index

log = logging.getLogger(__name__)

ALGORITHMS = ("fair", "iterative", "multi", "median", "reweight-grid", "fixed")
RESULT_COLUMNS = ("algorithm", "height", "ENCE_train", "ENCE_test", "ECE", "accuracy", "runtime_ms", "retrain_count")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    algorithm: str = "fair"
    heights: tuple[int, ...] = (0, 2, 4, 6, 8, 10)
    task: int = 0
    tasks: tuple[int, ...] | None = None  # multi-objective only; None = all
    alpha: tuple[float, ...] | None = None  # None = equal weights
    normalized_multi_objective: bool = False
    classifier: ClassifierSpec = ClassifierSpec()
    ece_bins: int = DEFAULT_ECE_BINS
    threshold: float = DEFAULT_THRESHOLD
    label_thresholds: dict = field(default_factory=dict)
    grid: GridSpec = GridSpec(32, 32)
    train_fraction: float = 0.8
    seed: int = 0
    fixed_partition: str | None = None
    output_dir: str = "results"
    timing: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if any(h < 0 for h in self.heights):
            raise ValueError("heights must be non-negative")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.algorithm == "fixed" and not self.fixed_partition:
            raise ValueError("algorithm 'fixed' needs fixed_partition")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "classifier" in d:
            d["classifier"] = ClassifierSpec(**d["classifier"])
        if "grid" in d and not isinstance(d["grid"], GridSpec):
            g = d["grid"]
            d["grid"] = GridSpec.parse(g) if isinstance(g, str) else GridSpec(int(g["rows"]), int(g["cols"]))
        for key in ("heights", "tasks", "alpha"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid"] = {"rows": self.grid.rows, "cols": self.grid.cols}
        return out


@dataclass(frozen=True)
class ResultRow:
    algorithm: str
    height: int
    ence_train: float
    ence_test: float
    ece: float
    accuracy: float
    runtime_ms: float | None
    retrain_count: int
    seed: int = 0

    def cells(self) -> list[str]:
        runtime = "" if self.runtime_ms is None else f"{self.runtime_ms:.3f}"
        return [
            self.algorithm,
            str(self.height),
            repr(self.ence_train),
            repr(self.ence_test),
            repr(self.ece),
            repr(self.accuracy),
            runtime,
            str(self.retrain_count),
        ]


def train_test_split(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle; both index arrays come back in dataset order."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def block_count(height: int) -> int:
    return 4 ** (height // 2) * 2 ** (height % 2)


def uniform_blocks(grid: GridSpec, height: int) -> Partitioning:
    """Equal-size tiling with ``block_count(height)`` blocks (fewer if the grid is too small).

    Row bands get the extra factor of two for odd heights.
    """
    row_parts = min(2 ** ((height + 1) // 2), grid.rows)
    col_parts = min(2 ** (height // 2), grid.cols)
    row_bands = np.array_split(np.arange(grid.rows), row_parts)
    col_bands = np.array_split(np.arange(grid.cols), col_parts)
    return Partitioning(
        Region(int(r[0]), int(r[-1]), int(c[0]), int(c[-1])) for r in row_bands for c in col_bands
    )


def reweight_grid_baseline(d: Dataset, spec: ClassifierSpec, blocks: Partitioning, task: int = 0):
    """Train with instance weights that decouple block membership from the label.

    Returns ``(scores, blocks)``; metrics are reported over ``blocks``.
    """
    model, _ = _fit_reweighted(d, spec, blocks, task)
    m = encode_features(d, blocks)
    return ScoreSet(model.predict_proba(m.values), task), blocks


def _fit_reweighted(d, spec, blocks, task):
    groups = region_index(blocks, d.grid, d.rows, d.cols)
    w = reweight(d, groups, task)
    m = encode_features(d, blocks)
    return fit_classifier(m, d.label(task), w, spec), m


def build_partitioning(cfg: ExperimentConfig, train: Dataset, height: int) -> tuple[Partitioning, FairTree | None, int]:
    """Returns the partitioning, the tree (if any) and the number of trainings used to build it."""
    spec = cfg.classifier
    if cfg.algorithm == "fair":
        tree = fair_kdtree(train, spec, height, cfg.task)
    elif cfg.algorithm == "iterative":
        tree = iterative_fair_kdtree(train, spec, height, cfg.task)
    elif cfg.algorithm == "multi":
        tasks = cfg.tasks if cfg.tasks is not None else tuple(range(train.n_tasks))
        alpha = cfg.alpha if cfg.alpha is not None else (1.0 / len(tasks),) * len(tasks)
        tree = multi_objective_fair_kdtree(train, spec, height, alpha, tasks, cfg.normalized_multi_objective)
    elif cfg.algorithm == "median":
        tree = median_kdtree(train, height)
    elif cfg.algorithm == "reweight-grid":
        return uniform_blocks(train.grid, height), None, 0
    else:
        return io.fixed_partition(cfg.fixed_partition, train.grid), None, 0
    return tree.partitioning(), tree, tree.stats.trainings


def _meta(cfg: ExperimentConfig, height: int, part: str, n: int) -> dict:
    return {
        "algorithm": cfg.algorithm,
        "height": height,
        "seed": cfg.seed,
        "split": {"part": part, "train_fraction": cfg.train_fraction, "seed": cfg.seed, "records": n},
        "grid": str(cfg.grid),
        "task": cfg.task,
        "classifier": cfg.classifier.to_dict(),
    }


def run_height(cfg: ExperimentConfig, d: Dataset, height: int, out_dir: Path | None = None) -> ResultRow:
    train_idx, test_idx = train_test_split(len(d), cfg.train_fraction, cfg.seed)
    train, test = d.subset(train_idx), d.subset(test_idx)

    start = time.perf_counter()
    partitioning, tree, trainings = build_partitioning(cfg, train, height)
    if cfg.algorithm == "reweight-grid":
        model, m_train = _fit_reweighted(train, cfg.classifier, partitioning, cfg.task)
    else:
        m_train = encode_features(train, partitioning)
        model = fit_classifier(m_train, train.label(cfg.task), None, cfg.classifier)
    elapsed_ms = (time.perf_counter() - start) * 1000.0

    s_train = ScoreSet(model.predict_proba(m_train.values), cfg.task)
    m_test = encode_features(test, partitioning, reference=m_train)
    s_test = ScoreSet(model.predict_proba(m_test.values), cfg.task)
    rep_train = calibration_report(
        train, s_train, partitioning, cfg.task, cfg.ece_bins, cfg.threshold, _meta(cfg, height, "train", len(train))
    )
    rep_test = calibration_report(
        test, s_test, partitioning, cfg.task, cfg.ece_bins, cfg.threshold, _meta(cfg, height, "test", len(test))
    )

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        io.write_partitioning(partitioning, d.grid, out_dir / "partitioning.json")
        io.write_partitioning(partitioning, d.grid, out_dir / "partitioning.csv")
        if tree is not None:
            io.write_json(tree.to_dict(), out_dir / "tree.json")
        io.write_json(rep_train.to_dict(), out_dir / "report_train.json")
        io.write_json(rep_test.to_dict(), out_dir / "report_test.json")

    log.info("%s h=%d seed=%d ENCE train %.4f test %.4f", cfg.algorithm, height, cfg.seed, rep_train.ence, rep_test.ence)
    return ResultRow(
        cfg.algorithm,
        height,
        rep_train.ence,
        rep_test.ence,
        rep_test.ece,
        rep_test.accuracy,
        elapsed_ms if cfg.timing else None,
        trainings,
        cfg.seed,
    )


def write_results(rows: Sequence[ResultRow], path) -> None:
    rows = sorted(rows, key=lambda r: (r.algorithm, r.height, r.seed))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow(r.cells())


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None, write: bool = True) -> list[ResultRow]:
    """Run every configured height; with ``write`` the per-height reports,
    partitionings and trees go under ``output_dir/<algorithm>/h<height>/``."""
    d = dataset if dataset is not None else io.ingest(cfg.dataset, cfg.grid, cfg.label_thresholds)
    base = Path(cfg.output_dir) / cfg.algorithm
    rows = [run_height(cfg, d, h, base / f"h{h}" if write else None) for h in cfg.heights]
    if write:
        write_results(rows, base / "results.csv")
    return rows


def run_benchmark(cfg: ExperimentConfig, algorithms: Sequence[str], dataset: Dataset | None = None) -> list[ResultRow]:
    """Run several algorithms on one configuration and merge their rows into
    ``output_dir/results.csv``."""
    d = dataset if dataset is not None else io.ingest(cfg.dataset, cfg.grid, cfg.label_thresholds)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in algorithms:
        rows += run_experiment(replace(cfg, algorithm=name), d)
    write_results(rows, out / "results.csv")
    io.write_json(cfg.to_dict() | {"algorithms": list(algorithms)}, out / "config.json")
    return rows
