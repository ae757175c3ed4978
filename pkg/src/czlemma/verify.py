"""Measured constants and identity residuals of a decomposition, as a JSON report."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Sequence

import numpy as np

from .badset import MAXIMAL_FUNCTION_RULE, bad_set
from .czd import (
    CZDecomposition,
    decompose,
    default_test_functions,
    gradient_identity_residual,
    key_estimate_field,
    renorm_lattice_sup,
    truncation_contributions,
    truncation_ordering,
    truncation_residual_bound,
)
from .errors import ParameterError
from .grid import ScalarField, TestFunction, gradient, lp_norm
from .partition import BUMP_RULE, bump_on_cells, neighbor_gradient_max, scaled_gradient_max
from .whitney import WHITNEY_RULE, cube_sum_measure, whitney_distance_ratio

SCHEMA = "czd-report v1"
BOX_NOTE = ("computations are restricted to the box; f is not extended, cubes are "
            "selected against the good cells inside the box only")


@dataclass
class Ceilings:
    """Upper limits for the measured constants and identity residuals.

    Constants are dimensionless; residual tolerances are relative to the
    scale given in each field name.  ``for_dimension`` gives the frozen
    per-dimension values; the field defaults are the two-dimensional ones.
    """

    C2: float = 16.0
    C3: float = 3.0
    C4: float = 5.0
    C5: float = 16.0
    C5_key: float = 24.0
    N: int = 7
    K: int = 40
    C_chi: float = 16.0
    truncation_residual: float = 32.0
    reassembly: float = 1e-11  # x (1 + ||f||_inf)
    partition_sum: float = 1e-12
    partition_gradient_sum: float = 1e-10  # x max_i 1 / l_i
    h_equivalence: float = 1e-9  # x alpha
    truncation_final: float = 1e-10  # x ||f||_inf |Omega|
    sweep_C2_ratio: float = 10.0  # max / min of C2 across one sweep

    @classmethod
    def for_dimension(cls, n: int) -> "Ceilings":
        return cls(**DIMENSION_CEILINGS[n])

    @classmethod
    def from_json(cls, data: dict, n: int = 2) -> "Ceilings":
        """Per-dimension defaults with the given fields replaced."""
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown ceilings: {sorted(unknown)}")
        return replace(cls.for_dimension(n), **data)


# Frozen from the built-in corpus (scripts/measure_constants.py, 1D at 128-512
# cells, 2D at 128^2-256^2, 3D at 32^3-64^3).  N and K are the observed
# maxima; the real-valued constants carry roughly 1.5x margin.
DIMENSION_CEILINGS = {
    1: dict(C2=10.0, C3=3.0, C4=3.0, C5=10.0, C5_key=12.0, N=3, K=6, C_chi=12.0,
            truncation_residual=24.0),
    2: dict(C2=16.0, C3=3.0, C4=5.0, C5=16.0, C5_key=24.0, N=7, K=40, C_chi=16.0,
            truncation_residual=32.0),
    3: dict(C2=24.0, C3=4.0, C4=8.0, C5=24.0, C5_key=36.0, N=12, K=192, C_chi=12.0,
            truncation_residual=16.0),
}


@dataclass
class VerificationReport:
    meta: dict
    constants: dict
    residuals: dict
    flags: dict
    cubes: list

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_json(self) -> dict:
        return {"meta": self.meta, "constants": self.constants, "residuals": self.residuals,
                "flags": self.flags, "cubes": self.cubes}


# -- JSON with 17 significant digits ----------------------------------------

def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 1) -> str:
    """Deterministic JSON text; floats carry 17 significant digits, non-finite become null."""
    return _encode(obj, indent, 0) + "\n"


def write_report(path, obj):
    if isinstance(obj, VerificationReport):
        obj = obj.to_json()
    elif isinstance(obj, list):
        obj = [r.to_json() if isinstance(r, VerificationReport) else r for r in obj]
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def read_report(path):
    with open(path) as fh:
        return json.load(fh)


# -- measurements -----------------------------------------------------------

def product_rule_gradient_g(czd: CZDecomposition) -> np.ndarray:
    """``grad g = grad f - sum_i [(grad f) chi_i + (f - c_i) grad chi_i]`` with FD ``grad f``."""
    df = gradient(czd.f).values
    out = df.copy()
    for q, ci, chi, gchi in zip(czd.pu.slices, czd.means, czd.pu.chi, czd.pu.grad):
        sq = (slice(None),) + q
        out[sq] -= df[sq] * chi + (czd.f.values[q] - ci) * gchi
    return out


def dilate_measures(czd: CZDecomposition) -> np.ndarray:
    """``|Q_i intersected with the box|``."""
    grid = czd.grid
    out = np.empty(len(czd.w))
    for i, cube in enumerate(czd.w.cubes):
        low, high = cube.bounds(grid)
        ell = high - low
        a = np.maximum(low - ell / 2, grid.origin)
        b = np.minimum(high + ell / 2, np.asarray(grid.origin) + grid.L)
        out[i] = float(np.prod(b - a))
    return out


def bad_gradient_energy(czd: CZDecomposition) -> np.ndarray:
    """``int_{Q_i} |grad b_i|^p`` with ``grad b_i = (grad f) chi_i + (f - c_i) grad chi_i``."""
    df = gradient(czd.f).values
    p = czd.p
    out = np.empty(len(czd.w))
    for i, (q, ci, chi, gchi) in enumerate(zip(czd.pu.slices, czd.means, czd.pu.chi, czd.pu.grad)):
        gb = df[(slice(None),) + q] * chi + (czd.f.values[q] - ci) * gchi
        out[i] = float(np.sum(np.sqrt(np.sum(gb ** 2, axis=0)) ** p)) * czd.grid.cell_volume
    return out


def boundary_shell_max(czd: CZDecomposition) -> float:
    """Largest ``|b_i|`` on the layer of cells just outside each ``Q_i``, from the closed form."""
    grid = czd.grid
    worst = 0.0
    for i, cube in enumerate(czd.w.cubes):
        q = czd.pu.slices[i]
        big = tuple(slice(max(sl.start - 1, 0), min(sl.stop + 1, grid.cells)) for sl in q)
        xi, _ = bump_on_cells(grid, cube.lo(grid), cube.cells_side(grid), big)
        inner = tuple(slice(sl.start - b.start, sl.stop - b.start) for sl, b in zip(q, big))
        shell = np.ones(xi.shape, bool)
        shell[inner] = False
        if shell.any():
            vals = np.abs((czd.f.values[big] - czd.means[i]) * xi)[shell]
            worst = max(worst, float(vals.max()))
    return worst


def neighbor_size_ratio(czd: CZDecomposition) -> tuple[float, float]:
    """Smallest and largest ``l_i / l_m`` over ``i in I_m`` (exact: sides are powers of two)."""
    s = czd.w.sides_cells
    lo = hi = 1.0
    for m, nbrs in enumerate(czd.w.neighbors):
        r = s[list(nbrs)] / s[m]
        lo, hi = min(lo, float(r.min())), max(hi, float(r.max()))
    return lo, hi


def verify(czd: CZDecomposition, ceilings: Ceilings | None = None,
           test_functions: Sequence[TestFunction] | None = None, seed: int = 0,
           source: dict | None = None) -> VerificationReport:
    grid, alpha, p = czd.grid, czd.alpha, czd.p
    ceilings = ceilings or Ceilings.for_dimension(grid.n)
    f = czd.f.values
    omega = czd.omega.mask
    good = ~omega
    w, pu = czd.w, czd.pu
    N_cubes = len(w)
    fsup = float(np.max(np.abs(f)))

    grad_f = gradient(czd.f)
    mag_f = grad_f.magnitude()
    norm_p = lp_norm(grad_f, p) ** p

    grad_g = product_rule_gradient_g(czd)
    C2_grid = float(np.sqrt(np.sum(grad_g ** 2, axis=0)).max()) / alpha
    C2_fd = gradient(czd.g).sup() / alpha
    # on the bad set grad g = h, whose closed form is also sampled between cell centers
    h_lat, key_lat, chi_lat = renorm_lattice_sup(czd) if N_cubes else (0.0, 0.0, 0.0)
    C2 = max(C2_grid, h_lat / alpha)

    if N_cubes:
        energy = bad_gradient_energy(czd)
        C3 = float(np.max(energy / (alpha ** p * dilate_measures(czd))))
        key = key_estimate_field(pu, czd.means)
        C5_key_grid = float(key.max()) / alpha
        C5_key = max(C5_key_grid, key_lat / alpha)
        K = max(len(I) for I in w.neighbors)
        C_chi_grid = scaled_gradient_max(pu)
        C_chi = max(C_chi_grid, chi_lat)
        nb_bound = neighbor_gradient_max(pu)
        ratio_lo, ratio_hi = neighbor_size_ratio(czd)
        dist_ratio = whitney_distance_ratio(w)
        coarse = w.sides_cells > 1
        dist_lo = float(dist_ratio[coarse].min()) if coarse.any() else None
        dist_hi = float(dist_ratio.max())
        local_int = float(sum(np.abs(b).max() / (2 * ell) for b, ell in zip(czd.bad, w.sides)))
    else:
        C3 = C5_key = C5_key_grid = C_chi = C_chi_grid = nb_bound = 0.0
        K = 0
        ratio_lo = ratio_hi = 1.0
        dist_lo = dist_hi = None
        local_int = 0.0
    sum_Q = cube_sum_measure(w)
    C4 = alpha ** p * sum_Q / norm_p if N_cubes else 0.0
    C5_grid = czd.h_renorm.sup() / alpha
    C5 = max(C5_grid, h_lat / alpha)
    N = w.overlap if N_cubes else 0

    # identities
    reassembly = float(np.max(np.abs(f - czd.g.values - czd.bad_sum()))) / (1.0 + fsup)
    sum_chi = pu.chi_sum()
    partition_sum = float(np.max(np.abs(sum_chi[omega] - 1.0))) if omega.any() else 0.0
    partition_off = float(np.max(np.abs(sum_chi[good]))) if good.any() else 0.0
    grad_sum = np.sqrt(np.sum(pu.grad_sum() ** 2, axis=0))
    inv_ell = 1.0 / float(w.sides.min()) if N_cubes else 1.0
    partition_grad = float(grad_sum[omega].max()) / inv_ell if omega.any() else 0.0
    h_eq = float(np.abs(czd.h_direct.values - czd.h_renorm.values).max()) / alpha
    identity = {k: v / alpha for k, v in gradient_identity_residual(czd).items()}
    good_excess = float(np.max(mag_f[good] - alpha)) if good.any() else -alpha
    good_excess = max(good_excess, 0.0) / alpha

    phis = list(test_functions) if test_functions is not None else default_test_functions(grid)
    trunc_final = 0.0
    trunc_bound = 0.0
    if N_cubes:
        orders = [truncation_ordering(w, "size"), truncation_ordering(w, "random", seed)]
        scale = fsup * czd.omega.measure
        for phi in phis:
            contrib = truncation_contributions(czd, phi)
            for order in orders:
                total = np.zeros(grid.n)
                for i in order:
                    total = total + contrib[i]
                trunc_final = max(trunc_final, float(np.sqrt(np.sum(total ** 2))) / scale)
        trunc_bound = max(truncation_residual_bound(czd, o) for o in orders)
    shell = boundary_shell_max(czd) if N_cubes else 0.0
    dilate_ok = all(omega[q].all() for q in w.dilates)

    constants = {
        "C2": C2, "C2_grid": C2_grid, "C2_fd": C2_fd, "C3": C3, "C4": C4, "N": N, "K": K,
        "C5": C5, "C5_grid": C5_grid, "C5_key": C5_key, "C5_key_grid": C5_key_grid,
        "C_chi": C_chi, "C_chi_grid": C_chi_grid, "neighbor_gradient_bound": nb_bound,
        "truncation_residual_bound": trunc_bound,
        "weak_type_ratio": czd.omega.measure * alpha ** p / norm_p if N_cubes else 0.0,
        "sum_Q": sum_Q, "omega_measure": czd.omega.measure,
        "grad_f_p_norm_p": norm_p, "local_integrability_sum": local_int,
        "neighbor_size_ratio_min": ratio_lo, "neighbor_size_ratio_max": ratio_hi,
        "whitney_distance_ratio_min": dist_lo, "whitney_distance_ratio_max": dist_hi,
    }
    residuals = {
        "reassembly": reassembly,
        "partition_sum": partition_sum,
        "partition_off_omega": partition_off,
        "partition_gradient_sum": partition_grad,
        "h_equivalence": h_eq,
        "gradient_identity": identity,
        "truncation_final": trunc_final,
        "good_set_excess": good_excess,
        "bad_part_boundary": shell,
    }
    c = ceilings
    flags = {
        "reassembly": reassembly <= c.reassembly,
        "good_set_control": good_excess == 0.0,
        "good_gradient_bound": math.isfinite(C2) and C2 <= c.C2,
        "bad_energy_bound": math.isfinite(C3) and C3 <= c.C3,
        "bad_support": shell == 0.0 and dilate_ok,
        "cube_measure_bound": math.isfinite(C4) and C4 <= c.C4,
        "bounded_overlap": N <= c.N,
        "neighbor_cardinality": K <= c.K,
        "neighbor_comparability": 0.25 <= ratio_lo and ratio_hi <= 4.0,
        "partition_sum": partition_sum <= c.partition_sum and partition_off == 0.0,
        "partition_gradient_sum": partition_grad <= c.partition_gradient_sum,
        "partition_gradient_bound": C_chi <= c.C_chi,
        "h_equivalence": h_eq <= c.h_equivalence,
        "h_bound": C5 <= c.C5 and C5_key <= c.C5_key,
        "truncation_final": trunc_final <= c.truncation_final,
        "truncation_residual": trunc_bound <= c.truncation_residual,
    }
    meta = {
        "schema": SCHEMA,
        "grid": {"n": grid.n, "cells": grid.cells, "L": grid.L, "origin": list(grid.origin)},
        "source": source or {},
        "alpha": alpha,
        "p": p,
        "maximal_function": MAXIMAL_FUNCTION_RULE,
        "whitney_rule": WHITNEY_RULE,
        "bump": BUMP_RULE,
        "coefficients": "c_i = mean of f over the cells of Q_i",
        "length_convention": "l_i = side of Q_i in all scaled constants",
        "domain": BOX_NOTE,
        "test_functions": [{"center": list(t.center), "radius": t.radius, "order": t.order} for t in phis],
        "seed": seed,
        "cube_count": N_cubes,
        "omega_rle": czd.omega.rle(),
        "ceilings": asdict(ceilings),
    }
    cubes = [cube.to_json(grid) for cube in w.cubes]
    return VerificationReport(meta, constants, residuals, flags, cubes)


def sweep(f: ScalarField, alphas: Sequence[float], p: float, ceilings: Ceilings | None = None,
          seed: int = 0, source: dict | None = None) -> tuple[list[VerificationReport], dict]:
    """One report per height, plus the spread of each constant across the sweep."""
    if not alphas:
        raise ParameterError("alpha list is empty")
    alphas = [float(a) for a in alphas]
    if any(a <= 0 for a in alphas):
        raise ParameterError("alphas must be positive")
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ParameterError("alphas must be ascending")
    reports = [verify(decompose(f, a, p, bad_set(f, a, p)), ceilings, seed=seed, source=source)
               for a in alphas]
    summary: dict[str, Any] = {"alphas": alphas}
    for key in ("C2", "C3", "C4", "N", "C5"):
        vals = [r.constants[key] for r in reports]
        pos = [v for v in vals if v > 0]
        summary[key] = {"min": min(vals), "max": max(vals),
                        "max_over_min": max(pos) / min(pos) if pos else None}
    sums = [r.constants["sum_Q"] for r in reports]
    summary["sum_Q_nonincreasing"] = all(b <= a for a, b in zip(sums, sums[1:]))
    ratio = summary["C2"]["max_over_min"]
    limit = (ceilings or Ceilings.for_dimension(f.grid.n)).sweep_C2_ratio
    summary["C2_ratio_within_ceiling"] = ratio is None or ratio <= limit
    return reports, summary
