"""Calibration statistics over neighborhoods and score bins.

``o`` is the observed positive rate of a group of records and ``e`` the mean
confidence score. Miscalibration is ``|o - e|``; ENCE weights it by region
size, ECE by score-bin size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spatial import Dataset, Partitioning, region_index

DEFAULT_ECE_BINS = 15
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class ScoreSet:
    scores: np.ndarray
    task_index: int = 0

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        if s.size and (np.isnan(s).any() or s.min() < 0.0 or s.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return self.scores.shape[0]


@dataclass(frozen=True)
class RegionCalibration:
    region_id: int
    count: int
    observed: float
    expected: float
    abs_miscal: float
    ratio_miscal: float | None  # e/o; None when o == 0

    def to_dict(self) -> dict:
        return {
            "id": self.region_id,
            "count": self.count,
            "e": self.expected,
            "o": self.observed,
            "abs_miscal": self.abs_miscal,
        }


@dataclass(frozen=True)
class CalibrationReport:
    regions: tuple[RegionCalibration, ...]
    observed: float
    expected: float
    ence: float
    ece: float
    ece_bins: int
    accuracy: float
    threshold: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "overall": {
                "e": self.expected,
                "o": self.observed,
                "ence": self.ence,
                "ece": self.ece,
                "accuracy": self.accuracy,
            },
            "regions": [r.to_dict() for r in self.regions],
            "meta": {"ece_bins": self.ece_bins, "threshold": self.threshold, **self.meta},
        }


def _inputs(d: Dataset, s: ScoreSet, task: int | None):
    task = s.task_index if task is None else task
    y = d.label(task).astype(np.float64)
    if len(s) != len(d):
        raise ValueError(f"{len(s)} scores for {len(d)} records")
    return s.scores, y


def _nonempty(d: Dataset):
    if len(d) == 0:
        raise ValueError("metric undefined on an empty dataset")


# -- array-level primitives -------------------------------------------------


def group_sums(scores: np.ndarray, labels: np.ndarray, groups: np.ndarray, n_groups: int):
    """Per-group record counts, score sums and label sums."""
    counts = np.bincount(groups, minlength=n_groups)
    s_sum = np.bincount(groups, weights=scores, minlength=n_groups)
    y_sum = np.bincount(groups, weights=labels, minlength=n_groups)
    return counts, s_sum, y_sum


def weighted_miscalibration(scores, labels, groups, n_groups) -> float:
    """``sum_g (|g|/n) |o(g) - e(g)|``; empty groups contribute nothing."""
    n = len(scores)
    if n == 0:
        raise ValueError("metric undefined on an empty dataset")
    counts, s_sum, y_sum = group_sums(scores, labels, groups, n_groups)
    nz = counts > 0
    gap = np.abs(y_sum[nz] / counts[nz] - s_sum[nz] / counts[nz])
    return float(np.sum(counts[nz] / n * gap))


def score_bins(scores: np.ndarray, bins: int) -> np.ndarray:
    """Equal-width bin index; bin ``m`` covers ``[m/M, (m+1)/M)`` and 1.0 goes to the last bin."""
    if bins < 1:
        raise ValueError("need at least one bin")
    edges = np.arange(bins + 1) / bins
    idx = np.searchsorted(edges, scores, side="right") - 1
    return np.clip(idx, 0, bins - 1)


def expected_calibration_error(scores: np.ndarray, labels: np.ndarray, bins: int = DEFAULT_ECE_BINS) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    return weighted_miscalibration(scores, labels, score_bins(scores, bins), bins)


# -- dataset-level API ------------------------------------------------------


def region_stats(d: Dataset, s: ScoreSet, p: Partitioning, task: int | None = None) -> list[RegionCalibration]:
    scores, y = _inputs(d, s, task)
    owner = region_index(p, d.grid, d.rows, d.cols)
    counts, s_sum, y_sum = group_sums(scores, y, owner, len(p))
    out = []
    for i in range(len(p)):
        n = int(counts[i])
        if n == 0:
            out.append(RegionCalibration(i, 0, 0.0, 0.0, 0.0, None))
            continue
        o = float(y_sum[i] / n)
        e = float(s_sum[i] / n)
        out.append(RegionCalibration(i, n, o, e, abs(o - e), e / o if o > 0 else None))
    return out


def ence(d: Dataset, s: ScoreSet, p: Partitioning, task: int | None = None) -> float:
    """Expected Neighborhood Calibration Error of ``s`` over the regions of ``p``."""
    _nonempty(d)
    scores, y = _inputs(d, s, task)
    owner = region_index(p, d.grid, d.rows, d.cols)
    return weighted_miscalibration(scores, y, owner, len(p))


def ece(d: Dataset, s: ScoreSet, task: int | None = None, bins: int = DEFAULT_ECE_BINS) -> float:
    _nonempty(d)
    scores, y = _inputs(d, s, task)
    return expected_calibration_error(scores, y, bins)


def accuracy(d: Dataset, s: ScoreSet, task: int | None = None, threshold: float = DEFAULT_THRESHOLD) -> float:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    _nonempty(d)
    scores, y = _inputs(d, s, task)
    return float(np.mean((scores >= threshold) == (y == 1)))


def overall(d: Dataset, s: ScoreSet, task: int | None = None) -> tuple[float, float]:
    """``(o(h), e(h))`` over the whole dataset."""
    _nonempty(d)
    scores, y = _inputs(d, s, task)
    return float(y.mean()), float(scores.mean())


def calibration_report(
    d: Dataset,
    s: ScoreSet,
    p: Partitioning,
    task: int | None = None,
    bins: int = DEFAULT_ECE_BINS,
    threshold: float = DEFAULT_THRESHOLD,
    meta: dict | None = None,
) -> CalibrationReport:
    o, e = overall(d, s, task)
    return CalibrationReport(
        regions=tuple(region_stats(d, s, p, task)),
        observed=o,
        expected=e,
        ence=ence(d, s, p, task),
        ece=ece(d, s, task, bins),
        ece_bins=bins,
        accuracy=accuracy(d, s, task, threshold),
        threshold=threshold,
        meta=dict(meta or {}),
    )
