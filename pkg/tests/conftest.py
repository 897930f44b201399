import numpy as np
import pytest

from fairkd.spatial import Dataset, Partitioning, Region

ACCEPTANCE_LINES = []


def random_dataset(rng, grid, n, m=1, l=2):
    return Dataset(
        grid,
        np.arange(n),
        rng.integers(0, grid.rows, n),
        rng.integers(0, grid.cols, n),
        rng.standard_normal((n, l)),
        rng.integers(0, 2, (n, m)),
        [f"f_{i}" for i in range(l)],
        [str(t) for t in range(m)],
    )


def _cut(rng, r):
    """Random guillotine cut of a rectangle, or None for a single cell."""
    options = []
    if r.row_max > r.row_min:
        options.append(0)
    if r.col_max > r.col_min:
        options.append(1)
    if not options:
        return None
    if rng.choice(options) == 0:
        cut = int(rng.integers(r.row_min + 1, r.row_max + 1))
        return Region(r.row_min, cut - 1, r.col_min, r.col_max), Region(cut, r.row_max, r.col_min, r.col_max)
    cut = int(rng.integers(r.col_min + 1, r.col_max + 1))
    return Region(r.row_min, r.row_max, r.col_min, cut - 1), Region(r.row_min, r.row_max, cut, r.col_max)


def refine(rng, regions, n_cuts):
    regions = list(regions)
    for _ in range(n_cuts):
        i = int(rng.integers(len(regions)))
        halves = _cut(rng, regions[i])
        if halves is not None:
            regions[i : i + 1] = halves
    return regions


def random_partitioning(rng, grid, n_cuts):
    return Partitioning(refine(rng, [Region(0, grid.rows - 1, 0, grid.cols - 1)], n_cuts))


def cell_owner(p, grid):
    """Brute-force owner lookup: scan all regions for each cell."""
    owner = {}
    for i, r in enumerate(p.regions):
        for row in range(r.row_min, r.row_max + 1):
            for col in range(r.col_min, r.col_max + 1):
                owner[(row, col)] = i
    return owner


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report_criterion():
    def record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
