"""Grid geometry: cells, records, rectangular regions and partitionings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

ROW = 0
COL = 1


class PartitionError(ValueError):
    """Raised when a set of regions is not a complete, disjoint cover."""


class DatasetError(ValueError):
    """Raised for malformed datasets."""


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int

    def __post_init__(self):
        if int(self.rows) < 1 or int(self.cols) < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    def whole(self) -> "Region":
        return Region(0, self.rows - 1, 0, self.cols - 1)

    def __str__(self):
        return f"{self.rows}x{self.cols}"

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"32x32"`` style strings."""
        try:
            rows, cols = text.lower().split("x")
            return cls(int(rows), int(cols))
        except ValueError as exc:
            raise ValueError(f"bad grid spec {text!r}, expected ROWSxCOLS") from exc


@dataclass(frozen=True, order=True)
class CellIndex:
    row: int
    col: int


@dataclass(frozen=True, order=True)
class Region:
    """Axis-aligned rectangle of grid cells; bounds are inclusive and 0-based."""

    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def __post_init__(self):
        if self.row_min < 0 or self.col_min < 0:
            raise ValueError(f"negative bound in {self}")
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"empty region {self}")

    @property
    def n_rows(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def n_cols(self) -> int:
        return self.col_max - self.col_min + 1

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def extent(self, axis: int) -> int:
        return self.n_rows if axis == ROW else self.n_cols

    def lower(self, axis: int) -> int:
        return self.row_min if axis == ROW else self.col_min

    def contains(self, row: int, col: int) -> bool:
        return self.row_min <= row <= self.row_max and self.col_min <= col <= self.col_max

    def within(self, grid: GridSpec) -> bool:
        return self.row_max < grid.rows and self.col_max < grid.cols

    def cells(self) -> Iterator[CellIndex]:
        for r in range(self.row_min, self.row_max + 1):
            for c in range(self.col_min, self.col_max + 1):
                yield CellIndex(r, c)

    def to_dict(self) -> dict:
        return {
            "row_min": self.row_min,
            "row_max": self.row_max,
            "col_min": self.col_min,
            "col_max": self.col_max,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Region":
        return cls(int(d["row_min"]), int(d["row_max"]), int(d["col_min"]), int(d["col_max"]))


def split_region(region: Region, axis: int, k: int) -> tuple[Region, Region]:
    """Split ``region`` after its first ``k`` rows (``axis=ROW``) or columns.

    Both halves must be non-empty, so ``1 <= k <= extent - 1``.
    """
    if axis not in (ROW, COL):
        raise ValueError(f"axis must be ROW (0) or COL (1), got {axis!r}")
    extent = region.extent(axis)
    if not 1 <= k <= extent - 1:
        raise IndexError(f"split index {k} out of range 1..{extent - 1} for {region}")
    r = region
    if axis == ROW:
        cut = r.row_min + k
        return Region(r.row_min, cut - 1, r.col_min, r.col_max), Region(cut, r.row_max, r.col_min, r.col_max)
    cut = r.col_min + k
    return Region(r.row_min, r.row_max, r.col_min, cut - 1), Region(r.row_min, r.row_max, cut, r.col_max)


@dataclass(frozen=True, init=False)
class Partitioning:
    """Ordered regions; a region's id is its position."""

    regions: tuple[Region, ...]

    def __init__(self, regions: Iterable[Region]):
        object.__setattr__(self, "regions", tuple(regions))

    def __len__(self):
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)

    def __getitem__(self, i: int) -> Region:
        return self.regions[i]

    def label_grid(self, grid: GridSpec) -> np.ndarray:
        """Return a ``rows x cols`` array of region ids (requires a valid partitioning)."""
        check_partitioning(self, grid)
        labels = np.empty((grid.rows, grid.cols), dtype=np.int64)
        for i, r in enumerate(self.regions):
            labels[r.row_min : r.row_max + 1, r.col_min : r.col_max + 1] = i
        return labels

    def to_dict(self) -> dict:
        return {"regions": [{"id": i, **r.to_dict()} for i, r in enumerate(self.regions)]}

    @classmethod
    def whole(cls, grid: GridSpec) -> "Partitioning":
        return cls([grid.whole()])


def validate_partitioning(p: Partitioning, grid: GridSpec) -> str | None:
    """Return ``None`` if ``p`` is a disjoint cover of ``grid``, else a description
    of the first violation (regions out of bounds, then cells in row-major order)."""
    if len(p) == 0:
        return "partitioning has no regions"
    coverage = np.zeros((grid.rows, grid.cols), dtype=np.int64)
    for i, r in enumerate(p.regions):
        if not r.within(grid):
            return f"region {i} {r.to_dict()} extends outside the {grid} grid"
        coverage[r.row_min : r.row_max + 1, r.col_min : r.col_max + 1] += 1
    bad = np.flatnonzero(coverage.ravel() != 1)
    if bad.size == 0:
        return None
    row, col = divmod(int(bad[0]), grid.cols)
    n = int(coverage[row, col])
    if n == 0:
        return f"cell ({row}, {col}) is not covered by any region"
    owners = [i for i, r in enumerate(p.regions) if r.contains(row, col)]
    return f"cell ({row}, {col}) is covered by {n} regions {owners}"


def check_partitioning(p: Partitioning, grid: GridSpec) -> None:
    problem = validate_partitioning(p, grid)
    if problem is not None:
        raise PartitionError(problem)


@dataclass(frozen=True)
class Record:
    id: int
    cell: CellIndex
    features: tuple[float, ...]
    labels: tuple[int, ...]


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Records stored column-wise.

    ``features`` is ``(n, l)`` and ``labels`` is ``(n, m)``; row ``i`` of every
    array belongs to the ``i``-th record.
    """

    grid: GridSpec
    ids: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    task_names: tuple[str, ...]

    def __post_init__(self):
        ids = _frozen(self.ids, np.int64).reshape(-1)
        n = ids.shape[0]
        rows = _frozen(self.rows, np.int64).reshape(-1)
        cols = _frozen(self.cols, np.int64).reshape(-1)
        raw_labels = np.asarray(self.labels)
        if raw_labels.size and not np.isin(raw_labels, (0, 1)).all():
            raise DatasetError("labels must be 0 or 1")
        try:
            features = _frozen(self.features, np.float64).reshape(n, len(self.feature_names))
            labels = _frozen(raw_labels, np.int8).reshape(n, len(self.task_names))
        except ValueError as exc:
            raise DatasetError(f"feature/label arrays do not match {n} records: {exc}") from exc
        for name, val in [("ids", ids), ("rows", rows), ("cols", cols), ("features", features), ("labels", labels)]:
            object.__setattr__(self, name, val)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "task_names", tuple(self.task_names))

        if len(self.task_names) < 1:
            raise DatasetError("a dataset needs at least one task")
        if rows.shape[0] != n or cols.shape[0] != n:
            raise DatasetError("rows/cols must have one entry per record")
        if np.unique(ids).size != n:
            raise DatasetError("record ids must be unique")
        if n and (rows.min() < 0 or cols.min() < 0 or rows.max() >= self.grid.rows or cols.max() >= self.grid.cols):
            raise DatasetError(f"record cell outside the {self.grid} grid")

    def __len__(self):
        return self.ids.shape[0]

    @property
    def n_tasks(self) -> int:
        return len(self.task_names)

    def label(self, task: int) -> np.ndarray:
        if not 0 <= task < self.n_tasks:
            raise IndexError(f"task index {task} out of range for {self.n_tasks} task(s)")
        return self.labels[:, task]

    @property
    def records(self) -> list[Record]:
        return [self.record(i) for i in range(len(self))]

    def record(self, i: int) -> Record:
        return Record(
            int(self.ids[i]),
            CellIndex(int(self.rows[i]), int(self.cols[i])),
            tuple(float(x) for x in self.features[i]),
            tuple(int(y) for y in self.labels[i]),
        )

    def subset(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            self.grid,
            self.ids[index],
            self.rows[index],
            self.cols[index],
            self.features[index],
            self.labels[index],
            self.feature_names,
            self.task_names,
        )

    @classmethod
    def from_records(
        cls,
        grid: GridSpec,
        records: Sequence[Record],
        feature_names: Sequence[str],
        task_names: Sequence[str],
    ) -> "Dataset":
        n = len(records)
        return cls(
            grid,
            [r.id for r in records],
            [r.cell.row for r in records],
            [r.cell.col for r in records],
            np.array([r.features for r in records], dtype=np.float64).reshape(n, len(feature_names)),
            np.array([r.labels for r in records], dtype=np.int8).reshape(n, len(task_names)),
            feature_names,
            task_names,
        )


def region_index(p: Partitioning, grid: GridSpec, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Region id for each (row, col) pair, vectorised."""
    return p.label_grid(grid)[np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)]


def assign_records(d: Dataset, p: Partitioning) -> dict[int, int]:
    """Map every record id to the id of the region containing its cell."""
    owner = region_index(p, d.grid, d.rows, d.cols)
    return {int(i): int(r) for i, r in zip(d.ids, owner)}
