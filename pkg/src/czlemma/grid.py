"""Cell-centered fields on a dyadic box, finite-difference gradients and norms.

All fields sample values at cell centers of a uniform grid over the cube
``[origin, origin + L]^n`` with ``cells`` cells per axis.  ``cells`` is a
power of two so that every dyadic sub-cube of the box is a union of cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DataError, ParameterError

CSV_MAGIC = "czd-field v1"


@dataclass(frozen=True)
class GridSpec:
    n: int
    cells: int
    L: float = 1.0
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ParameterError(f"dimension must be 1, 2 or 3, got {self.n}")
        if self.cells < 4 or self.cells & (self.cells - 1):
            raise ParameterError(f"cells must be a power of two >= 4, got {self.cells}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ParameterError(f"side length must be positive, got {self.L}")
        origin = (0.0,) * self.n if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != self.n:
            raise ParameterError("origin must have one coordinate per axis")
        object.__setattr__(self, "origin", origin)

    @property
    def h(self) -> float:
        return self.L / self.cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.n

    @property
    def size(self) -> int:
        return self.cells ** self.n

    @property
    def levels(self) -> int:
        """Number of the finest dyadic level (cells are cubes of this level)."""
        return self.cells.bit_length() - 1

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.cells) + 0.5) * self.h

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``(n, *shape)``."""
        axes = [self.axis_centers(k) for k in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n, self.cells * factor, self.L, self.origin)

    def scaled(self, factor: float) -> "GridSpec":
        return GridSpec(self.n, self.cells, self.L * factor,
                        tuple(o * factor for o in self.origin))


def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise DataError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise DataError(f"expected {self.grid.size} values, got {values.size}")
        values = values.reshape(self.grid.shape)
        _check_finite(values, "scalar field")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "ScalarField":
        """Sample ``func(x)`` where ``x`` has shape ``(n, *shape)``."""
        return cls(grid, func(grid.centers()))

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - other.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridSpec
    values: np.ndarray  # shape (n, *grid.shape)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n,) + self.grid.shape
        if values.shape != expected:
            raise DataError(f"vector field shape {values.shape}, expected {expected}")
        _check_finite(values, "vector field")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((grid.n,) + grid.shape))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values ** 2, axis=0))

    def __mul__(self, c: float) -> "VectorField":
        return VectorField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.values - other.values)

    def sup(self) -> float:
        return float(np.max(self.magnitude()))


Field = Union[ScalarField, VectorField]


def gradient(f: ScalarField) -> VectorField:
    """Second-order finite-difference gradient.

    Centered differences in the interior, second-order one-sided stencils
    on the faces of the box.
    """
    _check_finite(f.values, "gradient input")
    grid = f.grid
    comps = [np.gradient(f.values, grid.h, axis=k, edge_order=2) for k in range(grid.n)]
    return VectorField(grid, np.stack(comps))


def pointwise_abs(v: Field) -> np.ndarray:
    if isinstance(v, VectorField):
        return v.magnitude()
    return np.abs(v.values)


def lp_norm(v: Field, p: float | str) -> float:
    """Riemann-sum L^p norm; ``p`` may be ``inf`` or ``"infinity"`` for the sup norm."""
    if isinstance(p, str):
        if p.lower() not in ("inf", "infinity"):
            raise ParameterError(f"unknown exponent {p!r}")
        p = math.inf
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    a = pointwise_abs(v).ravel()
    top = float(np.max(a))
    if math.isinf(p) or top == 0.0:
        return top
    # factor out the max so tiny or huge values do not under/overflow in a**p
    return top * float(np.sum((a / top) ** p) * v.grid.cell_volume) ** (1.0 / p)


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported bump ``(1 - |x - c|^2 / r^2)^order`` on the ball ``B(c, r)``."""

    __test__ = False  # not a pytest class

    center: tuple[float, ...]
    radius: float
    order: int = 3

    def __post_init__(self):
        if self.radius <= 0:
            raise ParameterError("test function radius must be positive")
        if self.order < 1:
            raise ParameterError("test function order must be >= 1")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def check_inside(self, grid: GridSpec):
        if len(self.center) != grid.n:
            raise ParameterError("test function center has wrong dimension")
        for c, o in zip(self.center, grid.origin):
            if not (o < c - self.radius and c + self.radius < o + grid.L):
                raise ParameterError("test function support must lie strictly inside the box")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points ``x`` of shape ``(n, ...)``."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center).reshape((-1,) + (1,) * (x.ndim - 1))
        r2 = np.sum((x - c) ** 2, axis=0) / self.radius ** 2
        return np.where(r2 < 1.0, np.clip(1.0 - r2, 0.0, 1.0) ** self.order, 0.0)

    def sample(self, grid: GridSpec) -> ScalarField:
        self.check_inside(grid)
        return ScalarField(grid, self(grid.centers()))


# -- CSV field format -------------------------------------------------------

def _header(grid: GridSpec, components: int | None) -> str:
    origin = ";".join(repr(float(o)) for o in grid.origin)
    head = f"# {CSV_MAGIC}, n={grid.n}, cells={grid.cells}, L={grid.L!r}, origin={origin}"
    if components is not None:
        head += f", components={components}"
    return head


def write_field_csv(path, field: Field):
    """Write a field as one row per cell in row-major order: multi-index then value(s)."""
    grid = field.grid
    vector = isinstance(field, VectorField)
    lines = [_header(grid, grid.n if vector else None)]
    idx = np.indices(grid.shape).reshape(grid.n, -1).T
    vals = field.values.reshape(grid.n, -1).T if vector else field.values.reshape(-1, 1)
    for ij, row in zip(idx, vals):
        lines.append(",".join([str(int(i)) for i in ij] + [format(float(v), ".17g") for v in row]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line: str) -> tuple[GridSpec, int | None]:
    if not line.startswith("#"):
        raise DataError("missing CSV header")
    parts = [p.strip() for p in line[1:].split(",")]
    if not parts or parts[0] != CSV_MAGIC:
        raise DataError(f"bad CSV magic: {parts[0] if parts else ''!r}")
    kv = {}
    for part in parts[1:]:
        if "=" not in part:
            raise DataError(f"malformed header entry {part!r}")
        k, v = part.split("=", 1)
        kv[k.strip()] = v.strip()
    try:
        n = int(kv["n"])
        grid = GridSpec(n, int(kv["cells"]), float(kv["L"]),
                        tuple(float(o) for o in kv["origin"].split(";")))
        components = int(kv["components"]) if "components" in kv else None
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed CSV header: {exc}") from exc
    return grid, components


def read_field_csv(path) -> Field:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError("empty CSV file")
    grid, components = _parse_header(lines[0])
    rows = lines[1:]
    if len(rows) != grid.size:
        raise DataError(f"header announces {grid.size} cells, file has {len(rows)} rows")
    width = components or 1
    values = np.empty((grid.size, width))
    expected_idx = np.indices(grid.shape).reshape(grid.n, -1).T
    for r, (line, ij) in enumerate(zip(rows, expected_idx)):
        cols = line.split(",")
        if len(cols) != grid.n + width:
            raise DataError(f"row {r + 1}: expected {grid.n + width} columns, got {len(cols)}")
        try:
            if [int(c) for c in cols[:grid.n]] != list(ij):
                raise DataError(f"row {r + 1}: cell index out of row-major order")
            values[r] = [float(c) for c in cols[grid.n:]]
        except ValueError as exc:
            raise DataError(f"row {r + 1}: {exc}") from exc
    if components is None:
        return ScalarField(grid, values[:, 0])
    return VectorField(grid, values.T.reshape((grid.n,) + grid.shape))

