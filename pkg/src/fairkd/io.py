"""File formats: dataset CSV, partitioning JSON/CSV, tree and report JSON.

Dataset CSV: header row, then ``id,row,col,label_<task>...,<feature>...``.
Any column that is not ``id``, a location column or ``label_*`` is a numeric
feature. ``lat``/``lon`` may replace ``row``/``col``; they are binned onto
the grid with equal-width bins over the data's bounding box (row from
latitude, col from longitude, both ascending).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping

import numpy as np

from .spatial import (
    Dataset,
    DatasetError,
    GridSpec,
    PartitionError,
    Partitioning,
    Region,
    check_partitioning,
)

LABEL_PREFIX = "label_"
PARTITION_COLUMNS = ("region_id", "row_min", "row_max", "col_min", "col_max")


class ParseError(DatasetError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}, line {line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.line = line


def _number(text: str, path, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"column {column!r}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ParseError(path, line, f"column {column!r}: non-finite value {text!r}")
    return value


def _quantize(values: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.int64)
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def ingest(
    path,
    grid: GridSpec = GridSpec(32, 32),
    label_thresholds: Mapping[str, float] | None = None,
) -> Dataset:
    """Read a dataset CSV.

    ``label_thresholds`` maps a task name (the part after ``label_``) to a
    cut-off; that column may then hold raw continuous outcomes, binarized as
    ``value >= threshold``.
    """
    path = Path(path)
    label_thresholds = dict(label_thresholds or {})
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(path, None, "file is empty") from None
        if "id" not in header:
            raise ParseError(path, 1, "missing column 'id'")
        if {"row", "col"} <= set(header):
            loc = ("row", "col")
        elif {"lat", "lon"} <= set(header):
            loc = ("lat", "lon")
        else:
            raise ParseError(path, 1, "need either row,col or lat,lon columns")
        label_cols = [h for h in header if h.startswith(LABEL_PREFIX)]
        if not label_cols:
            raise ParseError(path, 1, f"no {LABEL_PREFIX}* columns")
        tasks = [h[len(LABEL_PREFIX) :] for h in label_cols]
        for t in label_thresholds:
            if t not in tasks:
                raise ParseError(path, 1, f"threshold given for unknown task {t!r}")
        feature_cols = [h for h in header if h not in ("id", *loc) and not h.startswith(LABEL_PREFIX)]
        pos = {h: i for i, h in enumerate(header)}

        ids, locs, labels, feats = [], [], [], []
        seen = {}
        for fields in reader:
            line = reader.line_num
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(header):
                raise ParseError(path, line, f"expected {len(header)} fields, got {len(fields)}")
            try:
                rid = int(fields[pos["id"]])
            except ValueError:
                raise ParseError(path, line, f"id {fields[pos['id']]!r} is not an integer") from None
            if rid in seen:
                raise ParseError(path, line, f"duplicate id {rid} (first on line {seen[rid]})")
            seen[rid] = line
            if loc == ("row", "col"):
                cell = []
                for c in loc:
                    v = _number(fields[pos[c]], path, line, c)
                    if v != int(v):
                        raise ParseError(path, line, f"{c} must be an integer, got {fields[pos[c]]!r}")
                    cell.append(int(v))
                if not grid.contains(*cell):
                    raise ParseError(path, line, f"cell {tuple(cell)} outside the {grid} grid")
            else:
                cell = [_number(fields[pos[c]], path, line, c) for c in loc]
            row_labels = []
            for c, t in zip(label_cols, tasks):
                v = _number(fields[pos[c]], path, line, c)
                if t in label_thresholds:
                    v = 1.0 if v >= label_thresholds[t] else 0.0
                elif v not in (0.0, 1.0):
                    raise ParseError(path, line, f"label {c} must be 0 or 1, got {fields[pos[c]]!r}")
                row_labels.append(int(v))
            ids.append(rid)
            locs.append(cell)
            labels.append(row_labels)
            feats.append([_number(fields[pos[c]], path, line, c) for c in feature_cols])

    if not ids:
        raise ParseError(path, None, "no records (header only)")
    locs = np.array(locs)
    if loc == ("lat", "lon"):
        rows, cols = _quantize(locs[:, 0], grid.rows), _quantize(locs[:, 1], grid.cols)
    else:
        rows, cols = locs[:, 0].astype(np.int64), locs[:, 1].astype(np.int64)
    return Dataset(grid, ids, rows, cols, np.array(feats).reshape(len(ids), len(feature_cols)), labels, feature_cols, tasks)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(d: Dataset, path) -> None:
    header = ["id", "row", "col", *(LABEL_PREFIX + t for t in d.task_names), *d.feature_names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(d)):
            w.writerow(
                [int(d.ids[i]), int(d.rows[i]), int(d.cols[i])]
                + [int(v) for v in d.labels[i]]
                + [_fmt(v) for v in d.features[i]]
            )


def write_json(obj, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_partitioning(p: Partitioning, grid: GridSpec, path) -> None:
    """Write JSON (``.json``) or CSV (anything else)."""
    path = Path(path)
    if path.suffix == ".json":
        write_json({"grid": {"rows": grid.rows, "cols": grid.cols}, **p.to_dict()}, path)
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARTITION_COLUMNS)
        for i, r in enumerate(p):
            w.writerow([i, r.row_min, r.row_max, r.col_min, r.col_max])


def read_partitioning(path) -> Partitioning:
    """Read rectangles from JSON or CSV, ordered by region id (ids must be unique)."""
    path = Path(path)
    if path.suffix == ".json":
        with path.open(encoding="utf-8") as fh:
            entries = [(int(r["id"]), Region.from_dict(r)) for r in json.load(fh)["regions"]]
    else:
        entries = []
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(PARTITION_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ParseError(path, 1, f"missing columns {sorted(missing)}")
            for row in reader:
                try:
                    entries.append((int(row["region_id"]), Region.from_dict(row)))
                except ValueError as exc:
                    raise ParseError(path, reader.line_num, str(exc)) from None
    ids = [i for i, _ in entries]
    if len(set(ids)) != len(ids):
        raise PartitionError(f"{path}: duplicate region ids")
    return Partitioning(r for _, r in sorted(entries, key=lambda e: e[0]))


def fixed_partition(path, grid: GridSpec) -> Partitioning:
    """Load a static partitioning and check it covers ``grid`` exactly once."""
    p = read_partitioning(path)
    try:
        check_partitioning(p, grid)
    except PartitionError as exc:
        raise PartitionError(f"{path}: {exc}") from None
    return p


def read_scores(path, d: Dataset) -> np.ndarray:
    """Read an ``id,score`` CSV and align it with ``d``'s record order."""
    by_id = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            by_id[int(row["id"])] = float(row["score"])
    try:
        return np.array([by_id[int(i)] for i in d.ids])
    except KeyError as exc:
        raise DatasetError(f"{path}: no score for record id {exc.args[0]}") from None
