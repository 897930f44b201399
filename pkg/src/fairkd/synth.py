"""Seeded synthetic datasets with spatially planted miscalibration.

Labels follow a logistic model of the features, except inside "bias blobs"
where the positive probability is shifted without any feature signal. A
classifier that ignores location cannot explain the shift, so it shows up
as per-neighborhood calibration error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spatial import Dataset, GridSpec, Region


@dataclass(frozen=True)
class BiasBlob:
    region: Region
    label_shift: float
    tasks: tuple[int, ...] | None = None  # None: every task

    def __post_init__(self):
        if not -1.0 <= self.label_shift <= 1.0:
            raise ValueError("label_shift must lie in [-1, 1]")


DEFAULT_BLOBS = (
    BiasBlob(Region(2, 11, 3, 12), 0.35),
    BiasBlob(Region(18, 29, 16, 27), -0.35),
)


def default_blobs(grid: GridSpec) -> tuple[BiasBlob, ...]:
    """``DEFAULT_BLOBS`` rescaled from 32x32 to ``grid`` (unchanged on 32x32)."""

    def span(lo, hi, n):
        a = lo * n // 32
        return a, max(a, -(-(hi + 1) * n // 32) - 1)

    out = []
    for b in DEFAULT_BLOBS:
        r = b.region
        rows, cols = span(r.row_min, r.row_max, grid.rows), span(r.col_min, r.col_max, grid.cols)
        out.append(BiasBlob(Region(*rows, *cols), b.label_shift, b.tasks))
    return tuple(out)


@dataclass(frozen=True)
class SynthConfig:
    grid: GridSpec = GridSpec(32, 32)
    n_records: int = 2000
    n_features: int = 6
    m_tasks: int = 1
    bias_blobs: tuple[BiasBlob, ...] | None = None  # None: default_blobs(grid)
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.bias_blobs is None:
            object.__setattr__(self, "bias_blobs", default_blobs(self.grid))
        object.__setattr__(self, "bias_blobs", tuple(self.bias_blobs))
        if self.n_records < 1:
            raise ValueError("n_records must be at least 1")
        if self.n_features < 0 or self.m_tasks < 1:
            raise ValueError("need n_features >= 0 and m_tasks >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        for blob in self.bias_blobs:
            if not blob.region.within(self.grid):
                raise ValueError(f"blob {blob.region} lies outside the {self.grid} grid")
            if blob.tasks is not None and any(not 0 <= t < self.m_tasks for t in blob.tasks):
                raise ValueError(f"blob task index out of range: {blob.tasks}")


def generate(c: SynthConfig) -> Dataset:
    rng = np.random.default_rng(c.seed)
    n, l, m = c.n_records, c.n_features, c.m_tasks
    cell = rng.integers(0, c.grid.n_cells, size=n)
    rows, cols = np.divmod(cell, c.grid.cols)
    x = rng.standard_normal((n, l))
    # unit-norm coefficients: the linear score has unit variance, base rate ~0.5
    coef = rng.standard_normal((l, m))
    norms = np.linalg.norm(coef, axis=0)
    coef = np.divide(coef, norms, out=np.zeros_like(coef), where=norms > 0)
    score = x @ coef + c.noise_sd * rng.standard_normal((n, m))
    prob = 1.0 / (1.0 + np.exp(-score))
    for blob in c.bias_blobs:
        r = blob.region
        inside = (rows >= r.row_min) & (rows <= r.row_max) & (cols >= r.col_min) & (cols <= r.col_max)
        tasks = range(m) if blob.tasks is None else blob.tasks
        for t in tasks:
            prob[inside, t] += blob.label_shift
    prob = np.clip(prob, 0.0, 1.0)
    labels = (rng.random((n, m)) < prob).astype(np.int8)
    return Dataset(
        c.grid,
        np.arange(n),
        rows,
        cols,
        x,
        labels,
        tuple(f"f_{i + 1}" for i in range(l)),
        tuple(str(t + 1) for t in range(m)),
    )


def in_region(d: Dataset, r: Region) -> np.ndarray:
    return (d.rows >= r.row_min) & (d.rows <= r.row_max) & (d.cols >= r.col_min) & (d.cols <= r.col_max)
