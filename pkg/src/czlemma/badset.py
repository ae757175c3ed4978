"""Bad set construction through the dyadic maximal function of |grad f|^p."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CZError, ParameterError
from .grid import GridSpec, ScalarField, gradient, lp_norm

MAXIMAL_FUNCTION_RULE = "uncentered dyadic maximal function over all dyadic cubes of the root box"


def _upsample(coarse: np.ndarray, factor: int, n: int) -> np.ndarray:
    out = coarse
    for axis in range(n):
        out = np.repeat(out, factor, axis=axis)
    return out


def dyadic_averages(u: np.ndarray, n: int) -> list[np.ndarray]:
    """Averages of ``u`` over every dyadic cube, finest level first.

    Entry ``j`` holds the averages over cubes of side ``2**j`` cells; block
    sums are formed bottom-up by adding the ``2**n`` children of each cube.
    """
    sums = u.astype(float)
    out = [sums.copy()]
    count = 1
    while sums.shape[0] > 1:
        m = sums.shape[0] // 2
        sums = sums.reshape(sum(((m, 2) for _ in range(n)), ())).sum(axis=tuple(range(1, 2 * n, 2)))
        count *= 2 ** n
        out.append(sums / count)
    return out


def maximal_function(u: ScalarField) -> ScalarField:
    """Dyadic maximal function: largest average of ``u`` over dyadic cubes containing each cell."""
    if np.any(u.values < 0):
        raise ParameterError("maximal function input must be nonnegative")
    n = u.grid.n
    mu = u.values.copy()
    for j, avg in enumerate(dyadic_averages(u.values, n)[1:], start=1):
        np.maximum(mu, _upsample(avg, 2 ** j, n), out=mu)
    return ScalarField(u.grid, mu)


@dataclass(frozen=True, eq=False)
class RegionMask:
    grid: GridSpec
    mask: np.ndarray  # True = cell belongs to the bad set

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)
        object.__setattr__(self, "mask", mask)

    @property
    def measure(self) -> float:
        return int(self.mask.sum()) * self.grid.cell_volume

    @property
    def complement(self) -> np.ndarray:
        return ~self.mask

    def is_empty(self) -> bool:
        return not self.mask.any()

    def is_full(self) -> bool:
        return bool(self.mask.all())

    def rle(self) -> list[list[int]]:
        """Run-length encoding of the row-major mask as ``[value, run]`` pairs."""
        flat = self.mask.ravel().astype(np.int8)
        if flat.size == 0:
            return []
        edges = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate([[0], edges])
        ends = np.concatenate([edges, [flat.size]])
        return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]

    @classmethod
    def from_rle(cls, grid: GridSpec, runs) -> "RegionMask":
        flat = np.concatenate([np.full(r, bool(v)) for v, r in runs]) if runs else np.zeros(0, bool)
        return cls(grid, flat)


def gradient_power(f: ScalarField, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``|grad f|`` and ``|grad f|^p`` at cell centers."""
    g = gradient(f).values
    sq = np.sum(g * g, axis=0)
    mag = np.sqrt(sq)
    if p == 2:
        return mag, sq
    if p == 1:
        return mag, mag
    return mag, mag ** p


def _check_params(alpha: float, p: float):
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ParameterError(f"alpha must be positive and finite, got {alpha}")
    if not (p >= 1 and math.isfinite(p)):
        raise ParameterError(f"p must lie in [1, inf), got {p}")


def bad_set(f: ScalarField, alpha: float, p: float) -> RegionMask:
    """``{M(|grad f|^p)^(1/p) > alpha}`` as a cell mask (strict threshold)."""
    _check_params(alpha, p)
    mag, up = gradient_power(f, p)
    mf = maximal_function(ScalarField(f.grid, up)).values
    if p == 1:
        level = mf
    elif p == 2:
        level = np.sqrt(mf)
    else:
        level = mf ** (1.0 / p)
    # M u >= u holds exactly; the second clause only absorbs rounding in the p-th root.
    mask = (level > alpha) | (mag > alpha)
    return RegionMask(f.grid, mask)


def weak_type_ratio(f: ScalarField, alpha: float, p: float, omega: RegionMask | None = None) -> float:
    """``|Omega| alpha^p / ||grad f||_p^p``."""
    _check_params(alpha, p)
    if omega is None:
        omega = bad_set(f, alpha, p)
    if omega.is_empty():
        return 0.0
    norm_p = lp_norm(gradient(f), p) ** p
    if norm_p == 0:
        raise CZError("internal error: nonempty bad set for a function with zero gradient")
    return omega.measure * alpha ** p / norm_p
