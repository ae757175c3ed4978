import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czlemma.badset import RegionMask
from czlemma.errors import GoodSetEmptyError
from czlemma.grid import GridSpec
from czlemma.whitney import (
    DyadicCube,
    cube_sum_measure,
    neighbor_sets,
    overlap_constant,
    whitney_decompose,
    whitney_distance_ratio,
)

from conftest import interval_mask


def brute_whitney(mask):
    """Enumerate every dyadic cube; keep the admissible ones whose parent is not admissible.

    Admissible: inside the mask and at Euclidean distance >= sqrt(n) * side
    from every cell outside it (distances between closed boxes), or a single
    cell of the mask.
    """
    n, cells = mask.ndim, mask.shape[0]
    bad_cells = np.argwhere(~mask)
    levels = int(math.log2(cells))

    def admissible(level, index):
        s = cells >> level
        lo = np.array(index) * s
        if not mask[tuple(slice(a, a + s) for a in lo)].all():
            return False
        if level == levels:
            return True
        gap = np.maximum(np.maximum(lo - bad_cells - 1, bad_cells - (lo + s)), 0)
        return bool(np.min(np.sum(gap.astype(float) ** 2, axis=1)) >= n * s * s)

    out = []
    for level in range(levels + 1):
        for index in itertools.product(range(2 ** level), repeat=n):
            if not admissible(level, index):
                continue
            if level == 0 or not admissible(level - 1, tuple(j // 2 for j in index)):
                out.append(DyadicCube(level, tuple(index)))
    return sorted(out)


def closed_dilate(cube, grid):
    low, high = cube.bounds(grid)
    ell = high - low
    return low - ell / 2, high + ell / 2


def brute_neighbors(w):
    boxes = [closed_dilate(c, w.grid) for c in w.cubes]
    out = []
    for a, b in boxes:
        out.append(tuple(i for i, (c, d) in enumerate(boxes) if np.all(c <= b) and np.all(a <= d)))
    return out


def brute_overlap(w):
    centers = w.grid.centers().reshape(w.grid.n, -1)
    count = np.zeros(centers.shape[1], dtype=int)
    for cube in w.cubes:
        a, b = closed_dilate(cube, w.grid)
        inside = np.all((centers > a[:, None]) & (centers < b[:, None]), axis=0)
        count += inside
    return int(count.max()) if w.cubes else 0


@pytest.fixture(scope="module")
def interval_case():
    g = GridSpec(1, 256)
    return whitney_decompose(RegionMask(g, interval_mask(256, 0.25, 0.75)))


def test_interval_matches_enumeration(interval_case):
    w = interval_case
    assert w.cubes == brute_whitney(w.omega.mask)
    # under dist >= side the largest cubes have side 1/8 and touch the center
    assert w.sides.max() == 0.125
    assert sorted(c.index for c in w.cubes if c.level == 3) == [(3,), (4,)]
    # sides shrink toward both ends of the interval
    x = np.array([c.center(w.grid)[0] for c in w.cubes])
    order = np.argsort(x)
    sides = w.sides[order]
    half = len(sides) // 2
    assert np.all(np.diff(sides[:half]) >= 0) and np.all(np.diff(sides[half:]) <= 0)


def test_interval_neighbors_overlap_and_sum(interval_case):
    w = interval_case
    assert w.neighbors == brute_neighbors(w)
    assert w.overlap == brute_overlap(w)
    assert cube_sum_measure(w) == sum((2 * c.side(w.grid)) for c in w.cubes)


def test_dyadic_square_matches_enumeration():
    g = GridSpec(2, 32)
    mask = np.zeros(g.shape, bool)
    mask[8:16, 16:24] = True
    w = whitney_decompose(RegionMask(g, mask))
    assert w.cubes == brute_whitney(mask)
    assert w.neighbors == brute_neighbors(w)
    assert w.overlap == brute_overlap(w)


def test_far_square_is_a_single_cube():
    # good set = the corner cell: [3/4, 1]^2 passes the rule, its parent [1/2, 1]^2 does not
    g = GridSpec(2, 64)
    mask = np.ones(g.shape, bool)
    mask[0, 0] = False
    w = whitney_decompose(RegionMask(g, mask))
    assert w.cubes == brute_whitney(mask)
    assert DyadicCube(2, (3, 3)) in w.cubes
    assert min(c.level for c in w.cubes) == 2


def test_empty_and_full():
    g = GridSpec(2, 16)
    w = whitney_decompose(RegionMask(g, np.zeros(g.shape, bool)))
    assert len(w) == 0 and w.neighbors == [] and overlap_constant(w) == 0
    assert cube_sum_measure(w) == 0.0
    with pytest.raises(GoodSetEmptyError, match="good set empty"):
        whitney_decompose(RegionMask(g, np.ones(g.shape, bool)))


def test_single_cube_neighbors():
    g = GridSpec(2, 16)
    mask = np.ones(g.shape, bool)
    mask[:, :4] = False
    mask[:, 12:] = False
    mask[:4] = False
    mask[12:] = False
    w = whitney_decompose(RegionMask(g, mask))
    for m, I in enumerate(w.neighbors):
        assert m in I
    lone = RegionMask(g, np.zeros(g.shape, bool))
    lone.mask[5, 5] = True
    w1 = whitney_decompose(lone)
    assert w1.neighbors == [(0,)] and w1.overlap == 1
    assert cube_sum_measure(w1) == pytest.approx((2 * g.h) ** 2)


def test_disjoint_dilates_are_singletons():
    g = GridSpec(1, 64)
    mask = np.zeros(64, bool)
    mask[[5, 40]] = True
    w = whitney_decompose(RegionMask(g, mask))
    assert w.neighbors == [(0,), (1,)]


def test_distance_ratio_within_whitney_range():
    g = GridSpec(2, 64)
    x = g.centers()
    mask = (x[0] - 0.5) ** 2 + (x[1] - 0.45) ** 2 < 0.3 ** 2
    w = whitney_decompose(RegionMask(g, mask))
    ratio = whitney_distance_ratio(w)
    coarse = w.sides_cells > 1
    assert np.all(ratio[coarse] >= math.sqrt(2))
    # the parent failed the rule: dist(W) <= dist(parent) + diam(parent) < 4 sqrt(n) l
    assert np.all(ratio[coarse] < 4 * math.sqrt(2))


# -- properties -------------------------------------------------------------

@st.composite
def random_masks(draw):
    n = draw(st.sampled_from([1, 2]))
    cells = draw(st.sampled_from([8, 16, 32]))
    rng = np.random.default_rng(draw(st.integers(0, 10_000)))
    mask = np.zeros((cells,) * n, bool)
    for _ in range(draw(st.integers(1, 4))):
        lo = rng.integers(0, cells, n)
        hi = np.minimum(lo + rng.integers(1, cells // 2 + 1, n), cells)
        mask[tuple(slice(a, b) for a, b in zip(lo, hi))] = True
    if mask.all():
        mask.flat[0] = False
    return RegionMask(GridSpec(n, cells), mask)


@settings(max_examples=60, deadline=None)
@given(random_masks())
def test_whitney_invariants(omega):
    w = whitney_decompose(omega)
    grid = omega.grid
    cover = np.zeros(grid.shape, int)
    for c in w.cubes:
        cover[c.cell_slices(grid)] += 1
        assert omega.mask[c.dilate_slices(grid)].all()
    assert np.array_equal(cover, omega.mask.astype(int))
    # neighbors: symmetric, reflexive, comparable sizes
    for m, I in enumerate(w.neighbors):
        assert m in I
        for i in I:
            assert m in w.neighbors[i]
            assert w.sides[i] / w.sides[m] in (0.25, 0.5, 1.0, 2.0, 4.0)
    assert w.neighbors == brute_neighbors(w)
    assert w.overlap == brute_overlap(w)
    # counting argument at cell resolution
    assert int(w.dilate_cell_counts().sum()) <= w.overlap * int(omega.mask.sum())


@settings(max_examples=25, deadline=None)
@given(random_masks())
def test_whitney_matches_enumeration(omega):
    assert whitney_decompose(omega).cubes == brute_whitney(omega.mask)


def test_neighbor_sets_function_matches_property(interval_case):
    assert neighbor_sets(interval_case) == interval_case.neighbors
