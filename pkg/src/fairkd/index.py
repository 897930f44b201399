"""Fairness-aware KD-tree partitioning of a grid.

A node's region is cut after its first ``k`` rows (or columns). The fair
variants pick ``k`` so the two halves carry equal calibration error,
measured with per-record residuals ``s - y``; the median baseline picks
the coordinate median of the node's records.

The axis at a node is ``remaining_height % 2`` (0 cuts rows, 1 cuts
columns). When the preferred axis is one cell wide the other axis is used;
a single-cell region is always a leaf.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classifiers import ClassifierSpec, encode_features, train_and_score
from .spatial import ROW, Dataset, GridSpec, Partitioning, Region, split_region

CALIBRATION = "calibration"  # ||sum_L r| - |sum_R r||
WEIGHTED = "weighted"  # ||L|*|sum_L r| - |R|*|sum_R r||


class NotSplittable(ValueError):
    """The region is a single cell wide along the requested axis."""


@dataclass
class BuildStats:
    trainings: int = 0
    objective_evals: int = 0
    nodes: int = 0
    records_scanned: dict[int, int] = field(default_factory=lambda: defaultdict(int))

    def to_dict(self) -> dict:
        return {
            "trainings": self.trainings,
            "objective_evals": self.objective_evals,
            "nodes": self.nodes,
            "records_scanned": {str(k): v for k, v in sorted(self.records_scanned.items())},
        }


@dataclass(frozen=True)
class SplitDecision:
    k: int
    axis: int
    z: tuple[float, ...]  # z[i] is the objective at k = i + 1
    rule: str = "objective"

    def to_dict(self) -> dict:
        return {"k": self.k, "axis": self.axis, "rule": self.rule, "z": list(self.z)}


@dataclass
class Node:
    region: Region
    depth: int = 0
    decision: SplitDecision | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self, leaf_ids: dict[int, int]) -> dict:
        out = {"region": self.region.to_dict()}
        if self.is_leaf:
            out["leaf_id"] = leaf_ids[id(self)]
            return out
        out.update(
            axis="row" if self.decision.axis == ROW else "col",
            k=self.decision.k,
            rule=self.decision.rule,
            children=[self.left.to_dict(leaf_ids), self.right.to_dict(leaf_ids)],
        )
        return out


@dataclass
class FairTree:
    root: Node
    height: int
    grid: GridSpec
    algorithm: str
    stats: BuildStats = field(default_factory=BuildStats)

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend((node.right, node.left))

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes() if n.is_leaf]

    def internal_nodes(self) -> list[Node]:
        return [n for n in self.nodes() if not n.is_leaf]

    def partitioning(self) -> Partitioning:
        return Partitioning(n.region for n in self.leaves())

    def depth(self) -> int:
        return max(n.depth for n in self.nodes())

    def structure(self):
        """Nested ``(region, axis, k, left, right)`` tuples for structural comparison."""

        def walk(n):
            if n.is_leaf:
                return (n.region,)
            return (n.region, n.decision.axis, n.decision.k, walk(n.left), walk(n.right))

        return walk(self.root)

    def to_dict(self) -> dict:
        leaf_ids = {id(n): i for i, n in enumerate(self.leaves())}
        return {
            "algorithm": self.algorithm,
            "height": self.height,
            "grid": {"rows": self.grid.rows, "cols": self.grid.cols},
            "stats": self.stats.to_dict(),
            "root": self.root.to_dict(leaf_ids),
        }


# -- split objective --------------------------------------------------------


def fairness_objective(residuals, left, right, objective: str = CALIBRATION) -> float:
    """Objective for one candidate split.

    ``left`` and ``right`` select records (index arrays or boolean masks).
    With ``CALIBRATION``, ``|L| * |o(L) - e(L)|`` is evaluated as
    ``|sum_L (s - y)|``; an empty side contributes 0.
    """
    r = np.asarray(residuals, dtype=np.float64)
    left_r, right_r = r[left], r[right]
    a, b = left_r.sum(), right_r.sum()
    if objective == WEIGHTED:
        return abs(left_r.size * abs(a) - right_r.size * abs(b))
    return float(_abs_gap(np.array([a]), np.array([b]), a + b)[0])


def _abs_gap(left, right, total):
    """``||L| - |R||`` evaluated so that exact ties stay ties in floating point.

    When the two sums have opposite signs the gap is ``|L + R|``, the same for
    every such cut, so it is taken from the shared total rather than
    recomputed from per-cut rounding.
    """
    opposite = left * right <= 0
    return np.where(opposite, abs(total), np.abs(left - right))


def _line_profile(region: Region, axis: int, rows, cols, residuals):
    coord = (rows if axis == ROW else cols) - region.lower(axis)
    extent = region.extent(axis)
    sums = np.bincount(coord, weights=residuals, minlength=extent)
    counts = np.bincount(coord, minlength=extent)
    return sums, counts


def split_objectives(region: Region, axis: int, rows, cols, residuals, objective: str = CALIBRATION) -> np.ndarray:
    """Objective for every legal ``k`` (``1 .. extent-1``) along ``axis``.

    ``rows``/``cols``/``residuals`` describe the records inside ``region``.
    """
    sums, counts = _line_profile(region, axis, rows, cols, residuals)
    total = sums.sum()
    left = np.cumsum(sums)[:-1]
    right = total - left
    if objective == WEIGHTED:
        n_left = np.cumsum(counts)[:-1]
        n_right = counts.sum() - n_left
        return np.abs(n_left * np.abs(left) - n_right * np.abs(right))
    if objective != CALIBRATION:
        raise ValueError(f"unknown objective {objective!r}")
    return _abs_gap(left, right, total)


def _in_region(region: Region, rows, cols):
    return (rows >= region.row_min) & (rows <= region.row_max) & (cols >= region.col_min) & (cols <= region.col_max)


def split_neighborhood(
    region: Region,
    rows,
    cols,
    residuals,
    axis: int,
    objective: str = CALIBRATION,
    stats: BuildStats | None = None,
) -> tuple[Region, Region, SplitDecision]:
    """Cut ``region`` at the ``k`` minimising the split objective.

    Records outside ``region`` are ignored. Ties go to the smallest ``k``.
    A region holding no records is cut at its midpoint ``ceil(extent/2)``.
    """
    if region.extent(axis) < 2:
        raise NotSplittable(f"{region} has extent 1 along axis {axis}")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    residuals = np.asarray(residuals, dtype=np.float64)
    inside = _in_region(region, rows, cols)
    if not inside.all():
        rows, cols, residuals = rows[inside], cols[inside], residuals[inside]
    z = split_objectives(region, axis, rows, cols, residuals, objective)
    if stats is not None:
        stats.objective_evals += z.size
    if rows.size == 0:
        k, rule = math.ceil(region.extent(axis) / 2), "midpoint"
    else:
        k, rule = int(np.argmin(z)) + 1, "objective"
    left, right = split_region(region, axis, k)
    return left, right, SplitDecision(k, axis, tuple(float(v) for v in z), rule)


def median_split(region: Region, rows, cols, axis: int) -> tuple[Region, Region, SplitDecision]:
    """Smallest ``k`` putting at least half of the region's records on the left.

    Falls back to ``extent-1`` when the records all sit in the last line, and
    to the midpoint when the region is empty.
    """
    if region.extent(axis) < 2:
        raise NotSplittable(f"{region} has extent 1 along axis {axis}")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    inside = _in_region(region, rows, cols)
    rows, cols = rows[inside], cols[inside]
    extent = region.extent(axis)
    if rows.size == 0:
        k, rule = math.ceil(extent / 2), "midpoint"
    else:
        coord = (rows if axis == ROW else cols) - region.lower(axis)
        cum = np.cumsum(np.bincount(coord, minlength=extent))
        k = int(np.argmax(2 * cum >= rows.size)) + 1
        k, rule = min(k, extent - 1), "median"
    left, right = split_region(region, axis, k)
    return left, right, SplitDecision(k, axis, (), rule)


def choose_axis(region: Region, remaining_height: int) -> int | None:
    preferred = remaining_height % 2
    if region.extent(preferred) >= 2:
        return preferred
    other = 1 - preferred
    if region.extent(other) >= 2:
        return other
    return None


# -- tree construction ------------------------------------------------------

Splitter = Callable[[Region, np.ndarray, int], tuple[Region, Region, SplitDecision]]


def _grow(
    region: Region,
    members: np.ndarray,
    height: int,
    depth: int,
    rows: np.ndarray,
    cols: np.ndarray,
    splitter: Splitter,
    stats: BuildStats,
) -> Node:
    """Depth-first recursion. ``members`` are the indices of records inside ``region``."""
    node = Node(region, depth)
    stats.nodes += 1
    if height <= 0:
        return node
    axis = choose_axis(region, height)
    if axis is None:
        return node
    stats.records_scanned[depth] += members.size
    left, right, decision = splitter(region, members, axis)
    node.decision = decision
    coord = rows[members] if decision.axis == ROW else cols[members]
    to_left = coord < region.lower(decision.axis) + decision.k
    node.left = _grow(left, members[to_left], height - 1, depth + 1, rows, cols, splitter, stats)
    node.right = _grow(right, members[~to_left], height - 1, depth + 1, rows, cols, splitter, stats)
    return node


def _check_height(height: int):
    if height < 0:
        raise ValueError(f"tree height must be non-negative, got {height}")


def _residual_splitter(rows, cols, residuals, objective, stats) -> Splitter:
    def splitter(region, members, axis):
        return split_neighborhood(region, rows[members], cols[members], residuals[members], axis, objective, stats)

    return splitter


def build_tree(
    grid: GridSpec,
    rows,
    cols,
    residuals,
    height: int,
    objective: str = CALIBRATION,
    algorithm: str = "fair",
    stats: BuildStats | None = None,
) -> FairTree:
    """Greedy depth-first fair KD-tree over fixed residuals."""
    _check_height(height)
    stats = stats or BuildStats()
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    residuals = np.asarray(residuals, dtype=np.float64)
    splitter = _residual_splitter(rows, cols, residuals, objective, stats)
    root = _grow(grid.whole(), np.arange(rows.size), height, 0, rows, cols, splitter, stats)
    return FairTree(root, height, grid, algorithm, stats)


def _scores(d: Dataset, p: Partitioning, spec: ClassifierSpec, task: int, stats: BuildStats) -> np.ndarray:
    stats.trainings += 1
    return train_and_score(encode_features(d, p), d.label(task), None, spec, task).scores


def fair_kdtree(d: Dataset, spec: ClassifierSpec, height: int, task: int = 0) -> FairTree:
    """Train once on the undivided grid, then split on the fixed residuals."""
    _check_height(height)
    stats = BuildStats()
    residuals = _scores(d, Partitioning.whole(d.grid), spec, task, stats) - d.label(task)
    return build_tree(d.grid, d.rows, d.cols, residuals, height, CALIBRATION, "fair", stats)


def iterative_fair_kdtree(d: Dataset, spec: ClassifierSpec, height: int, task: int = 0) -> FairTree:
    """Breadth-first variant that retrains the classifier before every level,
    with the current level's regions as the neighborhood feature."""
    _check_height(height)
    stats = BuildStats()
    root = Node(d.grid.whole(), 0)
    stats.nodes = 1
    frontier = [(root, np.arange(len(d)))]
    y = d.label(task)
    remaining = height
    while remaining > 0:
        if all(choose_axis(n.region, remaining) is None for n, _ in frontier):
            break
        current = Partitioning(n.region for n, _ in frontier)
        residuals = _scores(d, current, spec, task, stats) - y
        splitter = _residual_splitter(d.rows, d.cols, residuals, CALIBRATION, stats)
        nxt = []
        for node, members in frontier:
            axis = choose_axis(node.region, remaining)
            if axis is None:
                nxt.append((node, members))
                continue
            stats.records_scanned[node.depth] += members.size
            left, right, decision = splitter(node.region, members, axis)
            node.decision = decision
            coord = d.rows[members] if decision.axis == ROW else d.cols[members]
            to_left = coord < node.region.lower(decision.axis) + decision.k
            node.left = Node(left, node.depth + 1)
            node.right = Node(right, node.depth + 1)
            stats.nodes += 2
            nxt += [(node.left, members[to_left]), (node.right, members[~to_left])]
        frontier = nxt
        remaining -= 1
    return FairTree(root, height, d.grid, "iterative", stats)


def check_task_weights(alpha: Sequence[float], m: int) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if a.size != m:
        raise ValueError(f"{a.size} task weights for {m} task(s)")
    if (a < 0).any() or (a > 1).any() or abs(a.sum() - 1.0) > 1e-9:
        raise ValueError(f"task weights must lie in [0, 1] and sum to 1, got {a.tolist()}")
    return a


def combined_residuals(d: Dataset, scores: Sequence[np.ndarray], tasks: Sequence[int], alpha) -> np.ndarray:
    """``sum_i alpha_i (s^i - y^i)`` per record."""
    total = np.zeros(len(d))
    for a, s, t in zip(alpha, scores, tasks):
        total = total + a * (np.asarray(s) - d.label(t))
    return total


def multi_objective_fair_kdtree(
    d: Dataset,
    spec: ClassifierSpec,
    height: int,
    alpha: Sequence[float],
    tasks: Sequence[int] | None = None,
    normalized: bool = False,
) -> FairTree:
    """One classifier per task, trained once; splits use the weighted sum of
    the task residuals.

    By default the objective scales each side's residual sum by its record
    count (``WEIGHTED``). ``normalized=True`` uses the unscaled form, which
    for a single task coincides with :func:`fair_kdtree`.
    """
    _check_height(height)
    tasks = list(range(d.n_tasks)) if tasks is None else list(tasks)
    alpha = check_task_weights(alpha, len(tasks))
    stats = BuildStats()
    whole = Partitioning.whole(d.grid)
    scores = [_scores(d, whole, spec, t, stats) for t in tasks]
    residuals = combined_residuals(d, scores, tasks, alpha)
    objective = CALIBRATION if normalized else WEIGHTED
    return build_tree(d.grid, d.rows, d.cols, residuals, height, objective, "multi", stats)


def median_kdtree(d: Dataset, height: int) -> FairTree:
    """Standard KD-tree: cut at the median record coordinate."""
    _check_height(height)
    stats = BuildStats()
    rows, cols = d.rows, d.cols

    def splitter(region, members, axis):
        return median_split(region, rows[members], cols[members], axis)

    root = _grow(d.grid.whole(), np.arange(len(d)), height, 0, rows, cols, splitter, stats)
    return FairTree(root, height, d.grid, "median", stats)
