"""Dyadic Whitney decomposition of a cell-resolved open set.

Cubes are addressed by ``(level, index)``; at level ``k`` a cube has side
``L / 2**k`` which is ``s = cells >> k`` cells.  All geometric tests are done
in integer cell units, so membership and distance comparisons are exact.

Selection rule: a dyadic cube ``W`` is accepted when ``W`` lies in the bad
set and its Euclidean distance to the good set is at least its diameter
``sqrt(n) * l``.  The dilate ``Q = 2W`` reaches ``l/2`` past ``W`` and so
stays inside the bad set.  The accepted family is closed under
taking children, so the Whitney cubes are the accepted cubes whose parent is
rejected.  Single cells in the bad set are always accepted: at cell
resolution a cell touching the good set can satisfy no distance rule, and
without them the cubes would not cover the bad set.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .badset import RegionMask
from .errors import GoodSetEmptyError
from .grid import GridSpec

WHITNEY_RULE = (
    "maximal dyadic W inside Omega with dist(W, F) >= sqrt(n) * side(W) (Euclidean, "
    "box to F cells); single Omega cells always admitted; Q = 2W concentric"
)


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: tuple[int, ...]

    def cells_side(self, grid: GridSpec) -> int:
        return grid.cells >> self.level

    def side(self, grid: GridSpec) -> float:
        return grid.L / 2 ** self.level

    def lo(self, grid: GridSpec) -> np.ndarray:
        return np.asarray(self.index) * self.cells_side(grid)

    def bounds(self, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        ell = self.side(grid)
        low = np.asarray(grid.origin) + np.asarray(self.index) * ell
        return low, low + ell

    def center(self, grid: GridSpec) -> np.ndarray:
        low, high = self.bounds(grid)
        return (low + high) / 2

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, tuple(j // 2 for j in self.index))

    def children(self) -> list["DyadicCube"]:
        return [DyadicCube(self.level + 1, tuple(2 * j + b for j, b in zip(self.index, bits)))
                for bits in itertools.product((0, 1), repeat=len(self.index))]

    def cell_slices(self, grid: GridSpec) -> tuple[slice, ...]:
        s = self.cells_side(grid)
        return tuple(slice(j * s, (j + 1) * s) for j in self.index)

    def dilate_slices(self, grid: GridSpec) -> tuple[slice, ...]:
        """Cells whose centers lie in the open dilate 2W, clipped to the box."""
        s = self.cells_side(grid)
        half = s // 2
        return tuple(slice(max(j * s - half, 0), min((j + 1) * s + half, grid.cells))
                     for j in self.index)

    def to_json(self, grid: GridSpec) -> dict:
        return {"level": self.level, "index": list(self.index),
                "side": self.side(grid), "whitney": True}


def _block_counts(mask: np.ndarray, n: int) -> list[np.ndarray]:
    """Number of mask cells in every dyadic cube, indexed by level (root first)."""
    counts = [mask.astype(np.int64)]
    while counts[-1].shape[0] > 1:
        m = counts[-1].shape[0] // 2
        c = counts[-1].reshape(sum(((m, 2) for _ in range(n)), ()))
        counts.append(c.sum(axis=tuple(range(1, 2 * n, 2))))
    return counts[::-1]


def _sq_distance_to_good(good: np.ndarray, lo: np.ndarray, hi: np.ndarray, reach: int) -> int | None:
    """Squared box distance (cell units) from cells ``[lo, hi)`` to the nearest good cell.

    Only good cells with every per-axis gap below ``reach`` are inspected;
    ``None`` means no such cell exists.
    """
    cells = good.shape[0]
    a = np.maximum(lo - reach, 0)
    b = np.minimum(hi + reach, cells)
    window = good[tuple(slice(x, y) for x, y in zip(a, b))]
    if not window.any():
        return None
    n = len(lo)
    sq = np.zeros(window.shape, dtype=np.int64)
    for k in range(n):
        c = np.arange(a[k], b[k])
        gap = np.maximum(np.maximum(lo[k] - c - 1, c - hi[k]), 0)
        shape = [1] * n
        shape[k] = -1
        sq = sq + (gap ** 2).reshape(shape)
    return int(sq[window].min())


def passes_rule(good: np.ndarray, lo: np.ndarray, s: int) -> bool:
    """Whether the cube ``[lo, lo + s)`` lies at distance >= sqrt(n) * s from the good set."""
    n = len(lo)
    need = n * s * s
    reach = math.isqrt(need)
    if reach * reach < need:
        reach += 1
    d2 = _sq_distance_to_good(good, lo, lo + s, reach)
    return d2 is None or d2 >= need


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    omega: RegionMask
    cubes: list[DyadicCube] = field(default_factory=list)

    @property
    def grid(self) -> GridSpec:
        return self.omega.grid

    def __len__(self) -> int:
        return len(self.cubes)

    @cached_property
    def sides_cells(self) -> np.ndarray:
        return np.array([c.cells_side(self.grid) for c in self.cubes], dtype=np.int64)

    @cached_property
    def los(self) -> np.ndarray:
        """Lower corner of each cube in cell units, shape ``(N, n)``."""
        return np.array([c.lo(self.grid) for c in self.cubes], dtype=np.int64).reshape(-1, self.grid.n)

    @cached_property
    def sides(self) -> np.ndarray:
        """Side length of each Whitney cube W (the dilate Q has twice this side)."""
        return np.array([c.side(self.grid) for c in self.cubes])

    @cached_property
    def dilates(self) -> list[tuple[slice, ...]]:
        return [c.dilate_slices(self.grid) for c in self.cubes]

    @cached_property
    def neighbors(self) -> list[tuple[int, ...]]:
        return neighbor_sets(self)

    @cached_property
    def overlap(self) -> int:
        return overlap_constant(self)

    def dilate_cell_counts(self) -> np.ndarray:
        return np.array([math.prod(sl.stop - sl.start for sl in q) for q in self.dilates],
                        dtype=np.int64)


def whitney_decompose(omega: RegionMask) -> WhitneyDecomposition:
    grid = omega.grid
    if omega.is_full():
        raise GoodSetEmptyError("good set empty; decrease of alpha is impossible at this alpha "
                                "(the bad set covers the whole box)")
    if omega.is_empty():
        return WhitneyDecomposition(omega, [])
    n, finest = grid.n, grid.levels
    good = omega.complement
    counts = _block_counts(omega.mask, n)
    selected: list[DyadicCube] = []

    stack = [DyadicCube(0, (0,) * n)]
    while stack:
        cube = stack.pop()
        count = counts[cube.level][cube.index]
        if count == 0:
            continue
        s = cube.cells_side(grid)
        if count == s ** n and (cube.level == finest or passes_rule(good, cube.lo(grid), s)):
            selected.append(cube)
        else:
            stack.extend(cube.children())
    selected.sort()
    return WhitneyDecomposition(omega, selected)


def neighbor_sets(w: WhitneyDecomposition) -> list[tuple[int, ...]]:
    """``I_m = {i : closed Q_i meets closed Q_m}``, each list ascending.

    In half-cell units ``Q_i`` has center ``2 lo_i + s_i`` and half-width
    ``2 s_i``, so two dilates meet iff their centers differ by at most
    ``2 s_i + 2 s_m`` along every axis.  Integer coordinates make the
    Chebyshev range queries exact.
    """
    if not w.cubes:
        return []
    s = w.sides_cells
    center2 = (2 * w.los + s[:, None]).astype(float)
    levels = np.array([c.level for c in w.cubes])
    groups = {lev: np.flatnonzero(levels == lev) for lev in np.unique(levels)}
    trees = {lev: cKDTree(center2[idx]) for lev, idx in groups.items()}
    pairs = []
    for la, ia in groups.items():
        for lb, ib in groups.items():
            if lb < la:
                continue
            reach = 2 * int(s[ia[0]]) + 2 * int(s[ib[0]])
            hit = trees[la].sparse_distance_matrix(trees[lb], reach, p=np.inf, output_type="ndarray")
            a, b = ia[hit["i"]], ib[hit["j"]]
            pairs.append(np.stack([a, b], axis=1))
            if lb != la:
                pairs.append(np.stack([b, a], axis=1))
    allp = np.concatenate(pairs)
    allp = allp[np.lexsort((allp[:, 1], allp[:, 0]))]
    bounds = np.searchsorted(allp[:, 0], np.arange(len(w) + 1))
    return [tuple(int(i) for i in allp[bounds[m]:bounds[m + 1], 1]) for m in range(len(w))]


def overlap_constant(w: WhitneyDecomposition) -> int:
    """Largest number of dilates whose cell masks contain a common cell."""
    if not w.cubes:
        return 0
    count = np.zeros(w.grid.shape, dtype=np.int64)
    for q in w.dilates:
        count[q] += 1
    return int(count.max())


def cube_sum_measure(w: WhitneyDecomposition) -> float:
    """Sum of ``|Q_i| = (2 l_i)^n`` in cube order."""
    n = w.grid.n
    total = 0.0
    for ell in w.sides:
        total += (2.0 * ell) ** n
    return total


def whitney_distance_ratio(w: WhitneyDecomposition) -> np.ndarray:
    """``dist(W_i, F) / side(W_i)`` for every cube (box-to-cell Euclidean distance)."""
    grid = w.grid
    good = w.omega.complement
    n = grid.n
    out = np.empty(len(w.cubes))
    for i, cube in enumerate(w.cubes):
        lo = cube.lo(grid)
        s = cube.cells_side(grid)
        # the rejected parent lies within sqrt(n) * 2s of F, so W lies within 4 sqrt(n) s
        d2 = _sq_distance_to_good(good, lo, lo + s, math.ceil(4 * math.sqrt(n) * s) + 2)
        if d2 is None:
            d2 = _sq_distance_to_good(good, lo, lo + s, grid.cells)
        out[i] = math.sqrt(d2) / s if d2 is not None else math.inf
    return out
