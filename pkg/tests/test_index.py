import math
from fractions import Fraction

import numpy as np
import pytest

from fairkd.classifiers import ClassifierSpec
from fairkd.index import (
    CALIBRATION,
    WEIGHTED,
    NotSplittable,
    build_tree,
    check_task_weights,
    choose_axis,
    fair_kdtree,
    fairness_objective,
    iterative_fair_kdtree,
    median_kdtree,
    median_split,
    multi_objective_fair_kdtree,
    split_neighborhood,
)
from fairkd.spatial import COL, ROW, Dataset, GridSpec, Region, validate_partitioning
from fairkd.synth import SynthConfig, generate

# 4x1 column, top to bottom: (s, y) = (0.9, 1), (0.2, 0), (0.8, 0), (0.4, 1)
COLUMN_S = np.array([0.9, 0.2, 0.8, 0.4])
COLUMN_Y = np.array([1, 0, 0, 1])
COLUMN_Z = [0.3, 0.1, 0.3]

FAST = ClassifierSpec(epochs=100)


def enumerate_split(region, axis, rows, cols, residuals, weighted=False):
    """Exhaustive oracle in exact rational arithmetic; strict < keeps the smallest k."""
    exact = [Fraction(float(v)) for v in residuals]
    lo, extent = region.lower(axis), region.extent(axis)
    members = [
        i
        for i in range(len(residuals))
        if region.row_min <= rows[i] <= region.row_max and region.col_min <= cols[i] <= region.col_max
    ]
    zs = []
    for k in range(1, extent):
        coord = rows if axis == ROW else cols
        left = [exact[i] for i in members if coord[i] < lo + k]
        right = [exact[i] for i in members if coord[i] >= lo + k]
        a, b = abs(sum(left)), abs(sum(right))
        zs.append(abs(len(left) * a - len(right) * b) if weighted else abs(a - b))
    best = 0
    for i in range(1, len(zs)):
        if zs[i] < zs[best]:
            best = i
    return best + 1, [float(z) for z in zs]


def sorted_median_k(region, axis, rows, cols):
    coord = sorted(
        (rows[i] if axis == ROW else cols[i]) - region.lower(axis)
        for i in range(len(rows))
        if region.contains(rows[i], cols[i])
    )
    if not coord:
        return math.ceil(region.extent(axis) / 2)
    kth = coord[math.ceil(len(coord) / 2) - 1]
    return min(kth + 1, region.extent(axis) - 1)


def column_dataset():
    grid = GridSpec(4, 1)
    return Dataset(grid, np.arange(4), np.arange(4), np.zeros(4), np.zeros((4, 0)), COLUMN_Y[:, None], [], ["t"])


def random_residual_instance(rng, grid, dyadic):
    n = int(rng.integers(0, 300))
    rows = rng.integers(0, grid.rows, n)
    cols = rng.integers(0, grid.cols, n)
    s = rng.integers(0, 9, n) / 8 if dyadic else rng.random(n)
    y = rng.integers(0, 2, n)
    return rows, cols, s - y


class TestObjective:
    def test_zero_residuals(self):
        r = np.zeros(4)
        for k in range(1, 4):
            assert fairness_objective(r, np.arange(k), np.arange(k, 4)) == 0.0

    def test_column_example(self):
        r = COLUMN_S - COLUMN_Y
        got = [fairness_objective(r, np.arange(k), np.arange(k, 4)) for k in range(1, 4)]
        np.testing.assert_allclose(got, COLUMN_Z, atol=1e-12)

    def test_matches_mean_based_form(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 40))
            s, y = rng.random(n), rng.integers(0, 2, n)
            mask = rng.random(n) < 0.5
            left, right = np.flatnonzero(mask), np.flatnonzero(~mask)

            def weighted_gap(idx):
                if idx.size == 0:
                    return 0.0
                return idx.size * abs(y[idx].mean() - s[idx].mean())

            expected = abs(weighted_gap(left) - weighted_gap(right))
            assert fairness_objective(s - y, mask, ~mask) == pytest.approx(expected, abs=1e-12)

    def test_weighted_form(self):
        r = np.array([0.5, -0.25, 0.25])
        assert fairness_objective(r, [0], [1, 2], WEIGHTED) == pytest.approx(abs(1 * 0.5 - 2 * 0.0))
        assert fairness_objective(r, [0, 1], [2], WEIGHTED) == pytest.approx(abs(2 * 0.25 - 1 * 0.25))

    def test_empty_side(self):
        assert fairness_objective(np.array([0.2, -0.5]), [], [0, 1]) == pytest.approx(0.3)


class TestSplitNeighborhood:
    def test_column_example(self):
        left, right, dec = split_neighborhood(Region(0, 3, 0, 0), np.arange(4), np.zeros(4), COLUMN_S - COLUMN_Y, ROW)
        assert dec.k == 2
        assert (left, right) == (Region(0, 1, 0, 0), Region(2, 3, 0, 0))
        np.testing.assert_allclose(dec.z, COLUMN_Z, atol=1e-12)

    def test_all_tie_takes_smallest_k(self):
        _, _, dec = split_neighborhood(Region(0, 3, 0, 0), np.arange(4), np.zeros(4), np.zeros(4), ROW)
        assert dec.k == 1

    def test_column_axis_is_transpose(self):
        r = COLUMN_S - COLUMN_Y
        left, right, dec = split_neighborhood(Region(0, 0, 0, 3), np.zeros(4), np.arange(4), r, COL)
        assert dec.k == 2 and left == Region(0, 0, 0, 1)

    def test_not_splittable(self):
        with pytest.raises(NotSplittable):
            split_neighborhood(Region(0, 0, 0, 3), [0], [0], [0.1], ROW)

    def test_empty_region_midpoint(self):
        _, _, dec = split_neighborhood(Region(0, 4, 0, 0), [], [], [], ROW)
        assert (dec.k, dec.rule) == (3, "midpoint")

    def test_ignores_records_outside(self):
        rows = np.array([0, 1, 2, 3, 9, 9])
        r = np.append(COLUMN_S - COLUMN_Y, [5.0, -3.0])
        _, _, dec = split_neighborhood(Region(0, 3, 0, 0), rows, np.zeros(6), r, ROW)
        assert dec.k == 2

    @pytest.mark.parametrize("dyadic", [False, True])
    @pytest.mark.parametrize("objective", [CALIBRATION, WEIGHTED])
    def test_matches_exhaustive_oracle(self, rng, dyadic, objective):
        grid = GridSpec(16, 16)
        for _ in range(15):
            rows, cols, res = random_residual_instance(rng, grid, dyadic)
            region = Region(*sorted(rng.integers(0, 16, 2)), *sorted(rng.integers(0, 16, 2)))
            for axis in (ROW, COL):
                if region.extent(axis) < 2:
                    continue
                _, _, dec = split_neighborhood(region, rows, cols, res, axis, objective)
                k, zs = enumerate_split(region, axis, rows, cols, res, objective == WEIGHTED)
                np.testing.assert_allclose(dec.z, zs, atol=1e-9)
                if dec.rule == "objective":
                    assert dec.k == k


class TestAxisChoice:
    def test_parity(self):
        assert choose_axis(Region(0, 3, 0, 3), 2) == ROW
        assert choose_axis(Region(0, 3, 0, 3), 1) == COL

    def test_fallback(self):
        assert choose_axis(Region(0, 3, 0, 0), 1) == ROW
        assert choose_axis(Region(0, 0, 0, 3), 2) == COL
        assert choose_axis(Region(2, 2, 5, 5), 1) is None


def assert_valid_tree(tree, height):
    p = tree.partitioning()
    assert validate_partitioning(p, tree.grid) is None
    assert len(p) <= 2**height
    assert tree.depth() <= height
    for node in tree.internal_nodes():
        assert {c for c in node.left.region.cells()} | {c for c in node.right.region.cells()} == set(node.region.cells())


class TestBuildTree:
    def test_height_zero(self):
        tree = build_tree(GridSpec(4, 4), [0], [0], [0.3], 0)
        assert tree.partitioning().regions == (Region(0, 3, 0, 3),)

    def test_column_example_height_one(self):
        tree = build_tree(GridSpec(4, 1), np.arange(4), np.zeros(4), COLUMN_S - COLUMN_Y, 1)
        assert tree.partitioning().regions == (Region(0, 1, 0, 0), Region(2, 3, 0, 0))

    def test_single_cell_grid(self):
        tree = build_tree(GridSpec(1, 1), [0], [0], [0.5], 5)
        assert len(tree.leaves()) == 1

    def test_negative_height(self):
        with pytest.raises(ValueError):
            build_tree(GridSpec(2, 2), [], [], [], -1)

    def test_greedy_optimality_and_structure(self, rng):
        grid = GridSpec(12, 10)
        for _ in range(5):
            rows, cols, res = random_residual_instance(rng, grid, dyadic=False)
            h = int(rng.integers(0, 8))
            tree = build_tree(grid, rows, cols, res, h)
            assert_valid_tree(tree, h)
            for node in tree.internal_nodes():
                dec = node.decision
                k, zs = enumerate_split(node.region, dec.axis, rows, cols, res)
                np.testing.assert_allclose(dec.z, zs, atol=1e-9)
                assert dec.rule == "midpoint" or dec.z[dec.k - 1] == min(dec.z)
                if dec.rule == "objective":
                    assert dec.k == k

    def test_work_counters(self, rng):
        grid = GridSpec(16, 16)
        rows, cols, res = random_residual_instance(rng, grid, dyadic=False)
        tree = build_tree(grid, rows, cols, res, 7)
        stats = tree.stats
        assert stats.nodes == len(list(tree.nodes()))
        assert stats.objective_evals <= (grid.rows + grid.cols) * stats.nodes
        assert all(v <= len(rows) for v in stats.records_scanned.values())


@pytest.fixture(scope="module")
def synth():
    return generate(SynthConfig(n_records=600, seed=3))


class TestFairKdtree:
    def test_height_zero(self, synth):
        tree = fair_kdtree(synth, FAST, 0)
        assert tree.partitioning().regions == (synth.grid.whole(),)
        assert tree.stats.trainings == 1

    @pytest.mark.parametrize("h", [1, 3, 6])
    def test_structure(self, synth, h):
        tree = fair_kdtree(synth, FAST, h)
        assert_valid_tree(tree, h)
        assert tree.stats.trainings == 1

    def test_deterministic(self, synth):
        assert fair_kdtree(synth, FAST, 5).structure() == fair_kdtree(synth, FAST, 5).structure()

    def test_negative_height(self, synth):
        with pytest.raises(ValueError):
            fair_kdtree(synth, FAST, -1)


class TestIterativeKdtree:
    def test_height_one_matches_fair(self, synth):
        assert iterative_fair_kdtree(synth, FAST, 1).structure() == fair_kdtree(synth, FAST, 1).structure()

    def test_height_zero(self, synth):
        tree = iterative_fair_kdtree(synth, FAST, 0)
        assert len(tree.leaves()) == 1 and tree.stats.trainings == 0

    @pytest.mark.parametrize("h", [2, 4, 7])
    def test_retrains_once_per_level(self, synth, h):
        tree = iterative_fair_kdtree(synth, FAST, h)
        assert_valid_tree(tree, h)
        assert tree.stats.trainings == tree.depth() <= h

    def test_stops_when_nothing_splits(self):
        d = Dataset(GridSpec(1, 2), [0, 1], [0, 0], [0, 1], np.zeros((2, 0)), [[1], [0]], [], ["t"])
        tree = iterative_fair_kdtree(d, FAST, 5)
        assert len(tree.leaves()) == 2 and tree.stats.trainings == 1

    def test_full_tree_meets_log_bound(self):
        d = generate(SynthConfig(n_records=400, seed=1))
        tree = iterative_fair_kdtree(d, FAST, 3)
        assert len(tree.leaves()) == 8
        assert tree.stats.trainings == math.ceil(math.log2(len(tree.leaves())))


@pytest.fixture(scope="module")
def two_task():
    return generate(SynthConfig(n_records=500, m_tasks=2, seed=5))


class TestMultiObjective:
    def test_single_task_reduces_to_fair(self, synth):
        tree = multi_objective_fair_kdtree(synth, FAST, 5, [1.0], normalized=True)
        assert tree.structure() == fair_kdtree(synth, FAST, 5).structure()
        assert tree.stats.trainings == 1

    def test_degenerate_weights(self, two_task):
        tree = multi_objective_fair_kdtree(two_task, FAST, 5, [1.0, 0.0], normalized=True)
        assert tree.structure() == fair_kdtree(two_task, FAST, 5, task=0).structure()

    @pytest.mark.parametrize("normalized", [False, True])
    def test_trains_once_per_task(self, two_task, normalized):
        tree = multi_objective_fair_kdtree(two_task, FAST, 4, [0.5, 0.5], normalized=normalized)
        assert tree.stats.trainings == 2
        assert_valid_tree(tree, 4)

    @pytest.mark.parametrize("alpha", [[0.5], [0.7, 0.7], [1.5, -0.5], [0.2, 0.3]])
    def test_invalid_weights(self, two_task, alpha):
        with pytest.raises(ValueError):
            multi_objective_fair_kdtree(two_task, FAST, 2, alpha)

    def test_task_weight_tolerance(self):
        check_task_weights([0.1, 0.2, 0.7 + 1e-12], 3)


class TestMedianKdtree:
    def test_uniform_grid(self):
        grid = GridSpec(4, 4)
        rows, cols = np.divmod(np.arange(16), 4)
        _, _, dec = median_split(grid.whole(), rows, cols, ROW)
        assert dec.k == 2

    def test_mass_in_first_row(self):
        grid = GridSpec(4, 4)
        _, _, dec = median_split(grid.whole(), np.zeros(4, int), np.arange(4), ROW)
        assert dec.k == 1

    def test_mass_in_last_row(self):
        _, _, dec = median_split(Region(0, 3, 0, 0), np.full(3, 3), np.zeros(3, int), ROW)
        assert dec.k == 3

    def test_matches_sort_oracle(self, rng):
        for _ in range(100):
            grid = GridSpec(int(rng.integers(2, 20)), int(rng.integers(2, 20)))
            n = int(rng.integers(0, 60))
            rows, cols = rng.integers(0, grid.rows, n), rng.integers(0, grid.cols, n)
            region = Region(*sorted(rng.integers(0, grid.rows, 2)), *sorted(rng.integers(0, grid.cols, 2)))
            for axis in (ROW, COL):
                if region.extent(axis) >= 2:
                    _, _, dec = median_split(region, rows, cols, axis)
                    assert dec.k == sorted_median_k(region, axis, rows, cols)

    def test_tree(self, synth):
        tree = median_kdtree(synth, 6)
        assert_valid_tree(tree, 6)
        assert len(tree.leaves()) == 64
        assert tree.stats.trainings == 0

    def test_height_one_on_uniform_grid(self):
        grid = GridSpec(4, 4)
        rows, cols = np.divmod(np.arange(16), 4)
        d = Dataset(grid, np.arange(16), rows, cols, np.zeros((16, 0)), np.zeros((16, 1)), [], ["t"])
        tree = median_kdtree(d, 1)
        assert tree.root.decision.axis == COL and tree.root.decision.k == 2


def test_tree_json_lists_leaves_in_partition_order(synth):
    tree = fair_kdtree(synth, FAST, 3)
    doc = tree.to_dict()
    leaves = []

    def walk(node):
        if "leaf_id" in node:
            leaves.append((node["leaf_id"], Region.from_dict(node["region"])))
        else:
            for child in node["children"]:
                walk(child)

    walk(doc["root"])
    assert [r for _, r in sorted(leaves)] == list(tree.partitioning().regions)
    assert doc["stats"]["trainings"] == 1
