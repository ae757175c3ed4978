"""Smooth partition of unity subordinate to the Whitney cubes.

Each cube ``W_i`` (side ``l``) carries a tensor-product bump ``xi_i`` equal to
one on ``W_i`` and vanishing outside the dilate ``Q_i = 2W_i``.  Per axis the
bump is ``1 - s(t)`` with the quintic smoothstep ``s(t) = 6t^5 - 15t^4 + 10t^3``
and ``t = |x - c| / (l/2) - 1`` clipped to ``[0, 1]``.  Normalizing,
``chi_i = xi_i / sum_j xi_j`` gives a partition of unity on the bad set; the
gradient follows from the quotient rule, so the cancellation
``sum_i grad chi_i = 0`` holds up to rounding.

On the grid every quantity is stored sparsely over the cell box of ``Q_i``
and evaluated from integer cell coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import GridSpec
from .whitney import WhitneyDecomposition

BUMP_RULE = "tensor-product quintic smoothstep, plateau on W_i, support in Q_i = 2W_i, normalized by the sum"


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_prime(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return 30.0 * t * t * (1.0 - t) ** 2


@dataclass(frozen=True)
class BumpDescriptor:
    """Bump of one cube: plateau half-width ``inner = l/2``, support half-width ``outer = l``."""

    center: tuple[float, ...]
    inner: float
    outer: float

    def __call__(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Value and gradient at points ``x`` of shape ``(n, P)``."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center)[:, None]
        width = self.outer - self.inner
        d = x - c
        t = (np.abs(d) - self.inner) / width
        ramp = 1.0 - smoothstep(t)
        dramp = -smoothstep_prime(t) * np.sign(d) / width
        val = np.prod(ramp, axis=0)
        grad = np.empty_like(x)
        for k in range(x.shape[0]):
            others = np.prod(np.delete(ramp, k, axis=0), axis=0) if x.shape[0] > 1 else 1.0
            grad[k] = dramp[k] * others
        return val, grad


def _axis_ramp(start: int, stop: int, lo: int, s: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis ramp and its derivative at cell centers ``start..stop-1`` for a cube ``[lo, lo+s)``."""
    c = np.arange(start, stop)
    offset = 2 * c + 1 - (2 * lo + s)  # signed distance to the center, half-cell units
    t = np.abs(offset) / s - 1.0
    ramp = 1.0 - smoothstep(t)
    dramp = -smoothstep_prime(t) * np.sign(offset) * (2.0 / (s * h))
    return ramp, dramp


def bump_on_cells(grid: GridSpec, lo, s: int, slices: tuple[slice, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form bump value and gradient on a box of cells, from integer coordinates."""
    n = grid.n
    ramps, dramps = [], []
    for k in range(n):
        r, d = _axis_ramp(slices[k].start, slices[k].stop, int(lo[k]), s, grid.h)
        shape = [1] * n
        shape[k] = -1
        ramps.append(r.reshape(shape))
        dramps.append(d.reshape(shape))
    shape = tuple(sl.stop - sl.start for sl in slices)
    val = np.ones(shape)
    for r in ramps:
        val = val * r
    grad = np.empty((n,) + shape)
    for k in range(n):
        gk = np.ones(shape) * dramps[k]
        for j in range(n):
            if j != k:
                gk = gk * ramps[j]
        grad[k] = gk
    return val, grad


def intersect(a: tuple[slice, ...], b: tuple[slice, ...]):
    """Common cell box of two slice boxes, as ``(global, local_in_a, local_in_b)`` or ``None``."""
    glob, la, lb = [], [], []
    for sa, sb in zip(a, b):
        lo, hi = max(sa.start, sb.start), min(sa.stop, sb.stop)
        if lo >= hi:
            return None
        glob.append(slice(lo, hi))
        la.append(slice(lo - sa.start, hi - sa.start))
        lb.append(slice(lo - sb.start, hi - sb.start))
    return tuple(glob), tuple(la), tuple(lb)


@dataclass(frozen=True)
class ActiveStack:
    """Bumps positive at each cell: slot ``k`` holds cube ``idx[k]`` (``-1`` when empty).

    At a cell of ``Q_m`` only the bumps listed here have nonzero ``chi_i``
    or ``grad chi_i``, and all of them belong to ``I_m``.
    """

    idx: np.ndarray  # (d, *shape)
    chi: np.ndarray  # (d, *shape)
    grad: np.ndarray  # (d, n, *shape)

    def gather(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """``values[idx]`` per slot, ``fill`` in empty slots."""
        values = np.asarray(values)
        out = values[np.maximum(self.idx, 0)] if len(values) else np.zeros(self.idx.shape)
        return np.where(self.idx >= 0, out, fill)

    def grad_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.grad ** 2, axis=1))


class PartitionOfUnity:
    """Normalized bumps and their gradients, stored over each dilate's cells."""

    def __init__(self, w: WhitneyDecomposition):
        self.w = w
        grid = w.grid
        self.grid = grid
        self.slices = w.dilates
        self.bumps: list[BumpDescriptor] = []
        xi, dxi = [], []
        denom = np.zeros(grid.shape)
        ddenom = np.zeros((grid.n,) + grid.shape)
        for cube, q in zip(w.cubes, self.slices):
            ell = cube.side(grid)
            self.bumps.append(BumpDescriptor(tuple(cube.center(grid)), ell / 2, ell))
            v, g = bump_on_cells(grid, cube.lo(grid), cube.cells_side(grid), q)
            xi.append(v)
            dxi.append(g)
            denom[q] += v
            ddenom[(slice(None),) + q] += g
        self.denominator = denom
        self.chi: list[np.ndarray] = []
        self.grad: list[np.ndarray] = []
        for q, v, g in zip(self.slices, xi, dxi):
            sq = denom[q]
            self.chi.append(v / sq)
            self.grad.append(g / sq - v * ddenom[(slice(None),) + q] / sq ** 2)

    def __len__(self) -> int:
        return len(self.chi)

    def dense(self, i: int, local: np.ndarray) -> np.ndarray:
        q = self.slices[i]
        if local.ndim == self.grid.n:
            out = np.zeros(self.grid.shape)
            out[q] = local
        else:
            out = np.zeros((local.shape[0],) + self.grid.shape)
            out[(slice(None),) + q] = local
        return out

    def chi_sum(self, weights=None, reverse: bool = False) -> np.ndarray:
        """``sum_i w_i chi_i`` on the grid (``w_i = 1`` by default), in cube order."""
        out = np.zeros(self.grid.shape)
        order = range(len(self.chi) - 1, -1, -1) if reverse else range(len(self.chi))
        for i in order:
            out[self.slices[i]] += self.chi[i] if weights is None else weights[i] * self.chi[i]
        return out

    def grad_sum(self, weights=None) -> np.ndarray:
        out = np.zeros((self.grid.n,) + self.grid.shape)
        for i, (q, g) in enumerate(zip(self.slices, self.grad)):
            out[(slice(None),) + q] += g if weights is None else weights[i] * g
        return out

    @cached_property
    def stack(self) -> "ActiveStack":
        """Per-cell list of the bumps that are positive there, in cube order."""
        grid = self.grid
        depth = np.zeros(grid.shape, dtype=np.int64)
        for q, chi in zip(self.slices, self.chi):
            depth[q] += chi > 0
        d = int(depth.max()) if len(self) else 0
        idx = np.full((d,) + grid.shape, -1, dtype=np.int64)
        chi_s = np.zeros((d,) + grid.shape)
        grad_s = np.zeros((d, grid.n) + grid.shape)
        fill = np.zeros(grid.shape, dtype=np.int64)
        for i, (q, chi, g) in enumerate(zip(self.slices, self.chi, self.grad)):
            pos = np.nonzero(chi > 0)
            cells = tuple(p + sl.start for p, sl in zip(pos, q))
            slot = fill[cells]
            idx[(slot,) + cells] = i
            chi_s[(slot,) + cells] = chi[pos]
            grad_s[(slot, slice(None)) + cells] = g[(slice(None),) + pos].T
            fill[cells] += 1
        return ActiveStack(idx, chi_s, grad_s)

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """All ``chi_i`` and ``grad chi_i`` at arbitrary points ``x`` (shape ``(n, P)``).

        Returns arrays of shape ``(N, P)`` and ``(N, n, P)``.  Where every bump
        vanishes the partition is zero.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.zeros((len(self.bumps), x.shape[1]))
        grads = np.zeros((len(self.bumps),) + x.shape)
        for i, b in enumerate(self.bumps):
            vals[i], grads[i] = b(x)
        s = np.zeros(x.shape[1])
        ds = np.zeros(x.shape)
        for i in range(len(self.bumps)):
            s += vals[i]
            ds += grads[i]
        pos = s > 0
        safe = np.where(pos, s, 1.0)
        chi = np.where(pos, vals / safe, 0.0)
        dchi = np.where(pos, grads / safe - vals[:, None, :] * ds / safe ** 2, 0.0)
        return chi, dchi


def local_evaluate(pu: PartitionOfUnity, idx, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``chi_i`` and ``grad chi_i`` for ``i`` in ``idx`` at points ``x`` (shape ``(n, P)``).

    Exact when ``idx`` holds every bump that is nonzero at the points, e.g.
    ``idx = I_m`` for points inside ``Q_m``.  Shapes ``(k, P)`` and ``(k, n, P)``.
    """
    idx = list(idx)
    x = np.asarray(x, dtype=float)
    centers = np.array([pu.bumps[i].center for i in idx])[:, :, None]
    inner = np.array([pu.bumps[i].inner for i in idx])[:, None, None]
    width = np.array([pu.bumps[i].outer for i in idx])[:, None, None] - inner
    d = x[None] - centers
    t = (np.abs(d) - inner) / width
    ramp = 1.0 - smoothstep(t)
    dramp = -smoothstep_prime(t) * np.sign(d) / width
    n = x.shape[0]
    val = np.prod(ramp, axis=1)
    grad = np.empty_like(d)
    for k in range(n):
        g = dramp[:, k]
        for j in range(n):
            if j != k:
                g = g * ramp[:, j]
        grad[:, k] = g
    s = val.sum(axis=0)
    ds = grad.sum(axis=0)
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    chi = np.where(pos, val / safe, 0.0)
    dchi = np.where(pos, grad / safe - val[:, None, :] * ds / safe ** 2, 0.0)
    return chi, dchi


def build_partition(w: WhitneyDecomposition) -> PartitionOfUnity:
    return PartitionOfUnity(w)


def chi_gradient(pu: PartitionOfUnity, i: int, x) -> np.ndarray:
    """Gradient of ``chi_i`` at a single point ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    _, dchi = pu.evaluate(x)
    return dchi[i, :, 0]


def neighbor_gradient_field(pu: PartitionOfUnity, m: int) -> np.ndarray:
    """``sum_{i in I_m} |grad chi_i|`` on the cells of ``Q_m``, zero off ``supp chi_m``."""
    qm = pu.slices[m]
    acc = np.zeros(pu.chi[m].shape)
    for i in pu.w.neighbors[m]:
        hit = intersect(pu.slices[i], qm)
        if hit is None:
            continue
        _, li, lm = hit
        acc[lm] += np.sqrt(np.sum(pu.grad[i][(slice(None),) + li] ** 2, axis=0))
    return np.where(pu.chi[m] > 0, acc, 0.0)


def neighbor_gradient_bound(pu: PartitionOfUnity, m: int) -> float:
    """``l_m * max_{supp chi_m} sum_{i in I_m} |grad chi_i|`` with ``l_m`` the side of ``Q_m``."""
    ell = 2.0 * pu.w.sides[m]
    return float(ell * neighbor_gradient_field(pu, m).max())


def support_scale(pu: PartitionOfUnity) -> np.ndarray:
    """Largest ``l_m`` (side of ``Q_m``) over the bumps positive at each cell, zero elsewhere."""
    return pu.stack.gather(2.0 * pu.w.sides).max(axis=0, initial=0.0)


def neighbor_gradient_max(pu: PartitionOfUnity) -> float:
    """``max_m neighbor_gradient_bound(pu, m)``, evaluated cell by cell."""
    if not len(pu):
        return 0.0
    total = pu.stack.grad_norm().sum(axis=0)
    return float((support_scale(pu) * total).max())


def scaled_gradient_max(pu: PartitionOfUnity) -> float:
    """``max_i l_i * sup |grad chi_i|`` over the grid (``l_i`` the side of ``Q_i``)."""
    best = 0.0
    for i, g in enumerate(pu.grad):
        best = max(best, 2.0 * pu.w.sides[i] * float(np.sqrt(np.sum(g ** 2, axis=0)).max()))
    return best
