"""Built-in test functions, so that runs need no external data."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError
from .grid import GridSpec, ScalarField


def _constant(x):
    return np.full(x.shape[1:], 1.5)


def _affine(x):
    slopes = np.array([3.0, -1.5, 0.75])[: x.shape[0]]
    return 0.25 + np.tensordot(slopes, x, axes=1)


def _hat1d(x):
    return np.maximum(0.0, 1.0 - 8.0 * np.abs(x[0] - 0.5))


def _gauss(x, center, sigma):
    c = np.asarray(center).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.exp(-np.sum((x - c) ** 2, axis=0) / (2 * sigma ** 2))


def _gauss_bump(x):
    return _gauss(x, [0.5] * x.shape[0], 0.12)


def _two_spikes(x):
    return _gauss(x, [0.3, 0.35], 0.12) + 0.7 * _gauss(x, [0.68, 0.62], 0.1)


def _checker_smooth(x):
    return 0.2 * np.sin(2 * np.pi * x[0]) * np.sin(2 * np.pi * x[1]) * _gauss(x, [0.5, 0.5], 0.25)


@dataclass(frozen=True)
class Generator:
    """A closed-form test function on the unit box.

    ``fractions[(n, p)]`` places the three corpus heights as multiples of
    ``grad_scale`` (about ``sup |grad f|``).  They sit between the smallest and
    largest value of ``M(|grad f|^p)^(1/p)``, so the bad set is neither empty
    nor the whole box, and away from heights where a dyadic average of
    ``|grad f|^p`` equals ``alpha^p`` exactly.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    dims: tuple[int, ...]
    default_dim: int
    grad_scale: float
    fractions: dict = field(default_factory=dict)
    smooth: bool = True

    def sample(self, grid: GridSpec) -> ScalarField:
        if grid.n not in self.dims:
            raise ParameterError(f"generator {self.name!r} supports dimensions {self.dims}")
        return ScalarField.from_function(grid, self.func)

    def alphas(self, p: float, n: int | None = None) -> list[float]:
        """Three corpus heights for exponent ``p`` in dimension ``n``."""
        n = n or self.default_dim
        if self.grad_scale == 0:
            return [0.5, 1.0, 2.0]
        fr = self.fractions.get((n, float(p)))
        if fr is None:
            # generic fallback for heights outside the calibrated corpus
            fr = (1.5, 2.0, 4.0) if self.name == "affine" else (0.6, 0.7, 0.8)
        return [q * self.grad_scale for q in fr]


_GAUSS_SCALE = float(np.exp(-0.5) / 0.12)

GENERATORS: dict[str, Generator] = {
    g.name: g
    for g in [
        Generator("constant", _constant, (1, 2, 3), 1, 0.0),
        Generator("affine", _affine, (1, 2, 3), 1, 3.0),
        Generator("hat1d", _hat1d, (1,), 1, 8.0, {
            (1, 1.0): (0.3, 0.4, 0.6), (1, 2.0): (0.55, 0.62, 0.8)}, smooth=False),
        Generator("gauss-bump", _gauss_bump, (1, 2, 3), 1, _GAUSS_SCALE, {
            (1, 1.0): (0.45, 0.55, 0.65), (1, 2.0): (0.6, 0.68, 0.76),
            (2, 1.0): (0.3, 0.45, 0.6), (2, 2.0): (0.45, 0.6, 0.7),
            (3, 1.0): (0.2, 0.35, 0.5), (3, 2.0): (0.4, 0.5, 0.6)}),
        Generator("two-spikes-2d", _two_spikes, (2,), 2, _GAUSS_SCALE, {
            (2, 1.0): (0.35, 0.45, 0.55), (2, 2.0): (0.48, 0.55, 0.62)}),
        Generator("checker-smooth-2d", _checker_smooth, (2,), 2, 0.877, {
            (2, 1.0): (0.45, 0.5, 0.55), (2, 2.0): (0.5, 0.53, 0.56)}),
    ]
}


def generate(name: str, cells: int, dim: int | None = None, L: float = 1.0) -> ScalarField:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ParameterError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    grid = GridSpec(dim or gen.default_dim, cells, L)
    if grid.n not in gen.dims:
        raise ParameterError(f"generator {name!r} supports dimensions {gen.dims}")
    if L != 1.0:
        # generators are defined on the unit box
        return ScalarField(grid, gen.func(grid.centers() / L))
    return gen.sample(grid)


@dataclass(frozen=True)
class Case:
    name: str
    n: int
    p: float
    alpha: float


def corpus_cases(dims=(1, 2), ps=(1.0, 2.0)) -> list[Case]:
    """Every generator at every supported dimension in ``dims``, three heights each, per ``p``."""
    out = []
    for gen in GENERATORS.values():
        for n in gen.dims:
            if n not in dims:
                continue
            for p in ps:
                out.extend(Case(gen.name, n, p, a) for a in gen.alphas(p, n))
    return out
