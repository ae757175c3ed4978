"""The Calderon-Zygmund decomposition ``f = g + sum_i b_i`` of a gridded Sobolev function."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .badset import RegionMask, bad_set
from .errors import CZError, ParameterError
from .grid import ScalarField, TestFunction, VectorField, gradient
from .partition import PartitionOfUnity, build_partition, local_evaluate, support_scale
from .whitney import WhitneyDecomposition, whitney_decompose


def cube_means(f: ScalarField, w: WhitneyDecomposition) -> np.ndarray:
    """Mean of ``f`` over the cells of each dilate ``Q_i``."""
    return np.array([float(np.mean(f.values[q])) for q in w.dilates])


def bad_parts(f: ScalarField, w: WhitneyDecomposition, pu: PartitionOfUnity,
              c: np.ndarray) -> list[np.ndarray]:
    """``b_i = (f - c_i) chi_i`` stored over the cells of ``Q_i``."""
    return [(f.values[q] - ci) * chi for q, ci, chi in zip(w.dilates, c, pu.chi)]


def good_part(f: ScalarField, w: WhitneyDecomposition, b: Sequence[np.ndarray]) -> ScalarField:
    """``g = f - sum_i b_i``, subtracting in cube order."""
    g = f.values.copy()
    for q, bi in zip(w.dilates, b):
        g[q] -= bi
    return ScalarField(f.grid, g)


def h_direct(f: ScalarField, pu: PartitionOfUnity, c: np.ndarray) -> VectorField:
    """``h = -sum_i (f - c_i) grad chi_i``."""
    out = np.zeros((f.grid.n,) + f.grid.shape)
    for q, ci, gi in zip(pu.slices, c, pu.grad):
        out[(slice(None),) + q] -= (f.values[q] - ci) * gi
    return VectorField(f.grid, out)


def h_renorm(w: WhitneyDecomposition, pu: PartitionOfUnity, c: np.ndarray) -> VectorField:
    """``h = -sum_m (sum_{i in I_m} (c_m - c_i) grad chi_i) chi_m``.

    ``grad chi_i chi_m`` vanishes unless ``Q_i`` meets ``Q_m``, so the
    restriction to ``I_m`` drops only zero terms and the double sum splits as
    ``-(sum_m c_m chi_m)(sum_i grad chi_i) + (sum_m chi_m)(sum_i c_i grad chi_i)``.
    No cancellation identity is used.  Only differences of means enter, so
    they are taken relative to ``c_0``; equal means then give ``h = 0`` exactly.
    """
    if not len(c):
        return VectorField(w.grid, np.zeros((w.grid.n,) + w.grid.shape))
    c = np.asarray(c) - c[0]
    u = pu.chi_sum(c)
    s = pu.chi_sum()
    d = pu.grad_sum()
    e = pu.grad_sum(c)
    return VectorField(w.grid, -(u * d - s * e))


def key_estimate_field(pu: PartitionOfUnity, c: np.ndarray) -> np.ndarray:
    """``sum_m sum_{i in I_m} |c_m - c_i| |grad chi_i| chi_m`` at each cell."""
    st = pu.stack
    if st.idx.shape[0] == 0:
        return np.zeros(pu.grid.shape)
    cs = st.gather(c)
    dn = st.grad_norm()
    out = np.zeros(pu.grid.shape)
    for a in range(cs.shape[0]):
        out += st.chi[a] * np.sum(np.abs(cs[a] - cs) * dn, axis=0)
    return out


def lattice_points(w: WhitneyDecomposition, m: int, k: int) -> np.ndarray:
    """Closed lattice ``low + (j / k) l`` for ``j = 0..k`` over ``W_m``, shape ``(n, (k+1)**n)``.

    The closed ``W_i`` tile the bad set, so these lattices cover it.  The
    lattice is fixed relative to the cube, so one cube configuration is
    sampled the same way on every grid, and the lattice for ``k`` contains the
    one for every divisor of ``k``.
    """
    grid = w.grid
    cube = w.cubes[m]
    low, _ = cube.bounds(grid)
    offs = np.arange(k + 1) / k * cube.side(grid)
    axes = np.meshgrid(*[low[a] + offs for a in range(grid.n)], indexing="ij")
    return np.stack([ax.ravel() for ax in axes])


def _configuration_key(w: WhitneyDecomposition, m: int):
    """Scale- and translation-free description of the neighbors of cube ``m``.

    Returns the key and the neighbor indices in canonical order.
    """
    idx = np.asarray(w.neighbors[m])
    sides = w.sides_cells[idx]
    offs = 2 * w.los[idx] + sides[:, None] - (2 * w.los[m] + w.sides_cells[m])
    # keep the bumps whose Q_i meets the closed W_m (half-cell units)
    meets = np.all(np.abs(offs) <= 2 * sides[:, None] + w.sides_cells[m], axis=1)
    idx, sides, offs = idx[meets], sides[meets], offs[meets]
    table = np.column_stack([offs, sides])
    g = math.gcd(int(w.sides_cells[m]), *(int(v) for v in np.unique(np.abs(table))))
    table = table // g
    order = np.lexsort(table.T[::-1])
    key = (w.grid.n, int(w.sides_cells[m]) // g, table[order].tobytes())
    return key, [int(i) for i in idx[order]]


class LatticeSup(NamedTuple):
    h: float  # sup |h_renorm|
    key: float  # sup of sum_m sum_i |c_m - c_i| |grad chi_i| chi_m
    chi: float  # max_i l(Q_i) |grad chi_i|


def renorm_lattice_sup(czd: "CZDecomposition", k: int | None = None) -> LatticeSup:
    """Sups of ``|h_renorm|``, of the key estimate and of ``l_i |grad chi_i|`` over per-cube lattices.

    Both only involve the means ``c_i`` and the closed-form partition, so they
    can be evaluated between cell centers.  ``k`` points per axis per cube
    (default 16 for n <= 2, 8 for n = 3).  Cubes whose neighbors sit in the
    same relative configuration share one evaluation of the partition.
    """
    w, pu, c = czd.w, czd.pu, czd.means
    if k is None:
        k = 16 if czd.grid.n <= 2 else 8
    groups: dict = {}
    for m in range(len(w)):
        if len(w.neighbors[m]) == 1:
            continue
        key, order = _configuration_key(w, m)
        groups.setdefault(key, []).append((m, order))
    h_sup = key_sup = chi_sup = 0.0
    for members in groups.values():
        m0, order0 = members[0]
        chi, dchi = local_evaluate(pu, order0, lattice_points(w, m0, k))
        dchi = dchi * w.sides[m0]  # scale-free gradients
        total = chi.sum(axis=0)  # (P,)
        dsum = dchi.sum(axis=0)  # (n, P)
        dnorm = np.sqrt(np.sum(dchi ** 2, axis=1))  # (k, P)
        rel = 2.0 * w.sides_cells[order0] / w.sides_cells[m0]
        chi_sup = max(chi_sup, float((rel[:, None] * dnorm).max()))
        cs = np.array([c[order] for _, order in members])  # (G, k)
        cs = cs - cs[:, :1]  # only differences of means enter
        ell = np.array([w.sides[m] for m, _ in members])
        # -sum_a chi_a sum_i (c_a - c_i) grad chi_i, regrouped by a and by i
        u = cs @ chi  # (G, P)
        e = np.einsum("gi,inp->gnp", cs, dchi)
        h = -(u[:, None, :] * dsum[None] - total[None, None, :] * e) / ell[:, None, None]
        h_sup = max(h_sup, float(np.sqrt(np.sum(h ** 2, axis=1)).max()))
        # only the bumps positive at a point enter the key estimate there
        active = chi > 0
        depth = int(active.sum(axis=0).max())
        top = np.argsort(~active, axis=0, kind="stable")[:depth]  # (d, P)
        chi_t = np.take_along_axis(chi, top, axis=0)
        dn_t = np.take_along_axis(dnorm, top, axis=0)
        for start in range(0, len(members), 64):
            ct = cs[start:start + 64][:, top]  # (G, d, P)
            diff = np.abs(ct[:, :, None, :] - ct[:, None, :, :])  # |c_a - c_i|
            key = np.einsum("ap,gaip,ip->gp", chi_t, diff, dn_t, optimize=True)
            key_sup = max(key_sup, float((key / ell[start:start + 64, None]).max()))
    return LatticeSup(h_sup, key_sup, chi_sup)


@dataclass(eq=False)
class CZDecomposition:
    f: ScalarField
    alpha: float
    p: float
    omega: RegionMask
    w: WhitneyDecomposition
    pu: PartitionOfUnity
    means: np.ndarray
    bad: list[np.ndarray]
    g: ScalarField
    h_direct: VectorField
    h_renorm: VectorField

    @property
    def grid(self):
        return self.f.grid

    def bad_dense(self, i: int) -> np.ndarray:
        return self.pu.dense(i, self.bad[i])

    def bad_sum(self) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        for q, bi in zip(self.w.dilates, self.bad):
            out[q] += bi
        return out


def decompose(f: ScalarField, alpha: float, p: float, omega: RegionMask | None = None) -> CZDecomposition:
    """Build the full decomposition of ``f`` at height ``alpha``."""
    if omega is None:
        omega = bad_set(f, alpha, p)
    w = whitney_decompose(omega)
    pu = build_partition(w)
    c = cube_means(f, w)
    b = bad_parts(f, w, pu, c)
    g = good_part(f, w, b)
    return CZDecomposition(f, alpha, p, omega, w, pu, c, b, g,
                           h_direct(f, pu, c), h_renorm(w, pu, c))


# -- gradient identity ------------------------------------------------------

def boundary_distance(omega: RegionMask) -> np.ndarray:
    """Chebyshev distance, in cells, from each cell to the nearest cell of the other set.

    Cells on either side of the interface between the bad and good sets get 1.
    """
    from scipy.ndimage import distance_transform_cdt

    mask = omega.mask
    if mask.all() or not mask.any():
        return np.full(mask.shape, np.iinfo(np.int32).max)
    inside = distance_transform_cdt(mask, metric="chessboard")
    outside = distance_transform_cdt(~mask, metric="chessboard")
    return np.where(mask, inside, outside)


def identity_residual_field(czd: CZDecomposition) -> np.ndarray:
    """``|grad g - (grad f) 1_F - h|`` per cell with finite-difference gradients."""
    dg = gradient(czd.g).values
    df = gradient(czd.f).values
    good = czd.omega.complement
    r = dg - df * good - czd.h_renorm.values
    return np.sqrt(np.sum(r ** 2, axis=0))


def gradient_identity_residual(czd: CZDecomposition, margin: int = 1) -> dict[str, float]:
    """Sup of the gradient identity residual, split by region.

    ``near_boundary`` covers cells within ``margin`` cells (Chebyshev) of the
    interface, ``omega`` and ``good`` the remaining cells on each side.
    """
    res = identity_residual_field(czd)
    dist = boundary_distance(czd.omega)
    near = dist <= margin
    omega = czd.omega.mask

    def sup(sel):
        return float(res[sel].max()) if sel.any() else 0.0

    return {
        "all": sup(np.ones_like(near)),
        "away_from_boundary": sup(~near),
        "near_boundary": sup(near),
        "omega": sup(omega & ~near),
        "good": sup(~omega & ~near),
    }


# -- truncation study -------------------------------------------------------

@dataclass
class TruncationStudy:
    ordering: list[int]
    vectors: np.ndarray  # T(J_k) for the prefixes J_0 = {}, ..., J_N = I, shape (N+1, n)
    residual_bound: float  # max_J max_m l_m sup_{supp chi_m} |R_{m,J}|
    phi: TestFunction = field(default=None)

    @property
    def values(self) -> np.ndarray:
        return np.sqrt(np.sum(self.vectors ** 2, axis=1))

    @property
    def final(self) -> float:
        return float(self.values[-1])


def truncation_ordering(w: WhitneyDecomposition, ordering: str | Sequence[int] = "size",
                        seed: int = 0) -> list[int]:
    """Cube enumeration for the truncation study.

    ``"size"``: largest cubes first, ties in cube order; ``"random"``: a
    seeded permutation; or an explicit permutation of ``range(len(w))``.
    """
    N = len(w)
    if isinstance(ordering, str):
        if ordering == "size":
            return sorted(range(N), key=lambda i: (w.cubes[i].level, i))
        if ordering == "random":
            return [int(i) for i in np.random.default_rng(seed).permutation(N)]
        raise ParameterError(f"unknown ordering {ordering!r}")
    order = [int(i) for i in ordering]
    if sorted(order) != list(range(N)):
        raise ParameterError("ordering must be a permutation of the cube indices")
    return order


def truncation_contributions(czd: CZDecomposition, phi: TestFunction) -> np.ndarray:
    """Per-cube increments ``sum_{m in I_i} int b_m grad chi_i phi``, shape ``(N, n)``.

    On ``Q_i`` only the ``b_m`` with ``m in I_i`` are nonzero, so the inner sum
    is the total bad part restricted to ``Q_i``.
    """
    grid = czd.grid
    phi_vals = phi.sample(grid).values
    bsum = czd.bad_sum()
    axes = tuple(range(1, grid.n + 1))
    out = np.zeros((len(czd.w), grid.n))
    for i, (q, gi) in enumerate(zip(czd.pu.slices, czd.pu.grad)):
        out[i] = np.sum(gi * (bsum[q] * phi_vals[q]), axis=axes) * grid.cell_volume
    return out


def truncation_residual_bound(czd: CZDecomposition, order: Sequence[int]) -> float:
    """``max_J max_m l_m sup_{supp chi_m} |R_{m,J}|`` over the prefixes of ``order`` (``l_m`` = side of ``Q_m``).

    At a cell of ``supp chi_m`` the only nonzero ``grad chi_i`` belong to
    bumps positive there, all in ``I_m``, so ``R_{m,J}`` is the sum over the
    positive bumps that lie in ``J``.  The maximum over ``J`` runs over their
    partial sums in ``order``.
    """
    pu, w = czd.pu, czd.w
    st = pu.stack
    if st.idx.shape[0] == 0:
        return 0.0
    rank = np.empty(len(w), dtype=np.int64)
    rank[list(order)] = np.arange(len(w))
    keys = st.gather(rank, fill=len(w))
    perm = np.argsort(keys, axis=0, kind="stable")
    grads = np.take_along_axis(st.grad, perm[:, None], axis=0)
    partial = np.cumsum(grads, axis=0)
    mag = np.sqrt(np.sum(partial ** 2, axis=1)).max(axis=0)
    return float((support_scale(pu) * mag).max())


def truncation_study(czd: CZDecomposition, phi: TestFunction,
                     ordering: str | Sequence[int] = "size", seed: int = 0) -> TruncationStudy:
    """``T(J) = sum_m int b_m R_{m,J} phi`` for every prefix ``J`` of an ordering.

    ``T`` is additive in ``J``: adding cube ``i`` contributes
    ``sum_{m in I_i} int b_m grad chi_i phi``, so the prefix values are
    cumulative sums of per-cube contributions.
    """
    order = truncation_ordering(czd.w, ordering, seed)
    contrib = truncation_contributions(czd, phi)
    vectors = np.zeros((len(order) + 1, czd.grid.n))
    for k, i in enumerate(order):
        vectors[k + 1] = vectors[k] + contrib[i]
    return TruncationStudy(order, vectors, truncation_residual_bound(czd, order), phi)


def default_test_functions(grid) -> list[TestFunction]:
    """Three bumps inside the box: a wide centered one, an off-center one, a narrow one."""
    L, o = grid.L, np.asarray(grid.origin)
    c = o + L / 2
    return [
        TestFunction(tuple(c), 0.45 * L, 3),
        TestFunction(tuple(o + 0.4 * L), 0.3 * L, 2),
        TestFunction(tuple(c + 0.05 * L), 0.15 * L, 4),
    ]


# -- counterexample ---------------------------------------------------------

@dataclass
class CounterexampleRow:
    cells: int
    h_grid: float
    sum_chi_grad_sup: float  # ||grad_h (sum_i chi_i)||_inf, i.e. c_i = 1
    h_renorm_sup: float  # over cell centers and the per-cube lattices

    @property
    def scaled(self) -> float:
        return self.sum_chi_grad_sup * self.h_grid


def counterexample_demo(decompositions: Sequence[CZDecomposition]) -> dict:
    """Contrast ``grad sum_i chi_i`` (all ``c_i = 1``) with the renormalized ``h``.

    With unit coefficients ``sum_i chi_i`` is the indicator of the bad set,
    whose discrete gradient grows like ``1 / h_grid`` under refinement, while
    the renormalized correction stays bounded.
    """
    rows = []
    for czd in decompositions:
        if czd.omega.is_empty():
            raise CZError("demo requires nonempty bad set")
        s = czd.pu.chi_sum(np.ones(len(czd.w)))
        grad = gradient(ScalarField(czd.grid, s)).sup()
        h_sup = max(czd.h_renorm.sup(), renorm_lattice_sup(czd).h)
        rows.append(CounterexampleRow(czd.grid.cells, czd.grid.h, grad, h_sup))
    growth = [b.sum_chi_grad_sup / a.sum_chi_grad_sup for a, b in zip(rows, rows[1:])]
    h_ratio = [b.h_renorm_sup / a.h_renorm_sup if a.h_renorm_sup else float("nan")
               for a, b in zip(rows, rows[1:])]
    return {"rows": rows, "indicator_growth": growth, "h_renorm_ratio": h_ratio}
