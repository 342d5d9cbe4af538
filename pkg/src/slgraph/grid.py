"""Uniform periodic grids and point-value fields.

Grid points are cell-left aligned: point ``i`` sits at ``x_min + i*h`` and
``x_max`` is identified with ``x_min`` on periodic axes. 2D arrays are stored
with shape ``(ny, nx)`` so that the flat row-major index ``j*nx + i`` has x
fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    n: int
    x_min: float = 0.0
    x_max: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"grid needs at least 4 points, got n={self.n}")
        if not self.x_max > self.x_min:
            raise ValueError(f"empty domain [{self.x_min}, {self.x_max}]")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def shape(self) -> tuple[int]:
        return (self.n,)

    @property
    def size(self) -> int:
        return self.n

    def coordinate(self, i: int) -> float:
        if not 0 <= i < self.n:
            raise IndexError(f"index {i} outside [0, {self.n})")
        return self.x_min + i * self.h

    def coordinates(self) -> np.ndarray:
        return self.x_min + np.arange(self.n) * self.h

    def wrap(self, i):
        return np.mod(i, self.n) if isinstance(i, np.ndarray) else int(i) % self.n

    def coarsen(self, factor: int) -> Grid1D:
        _check_factor(self.n, factor)
        return Grid1D(self.n // factor, self.x_min, self.x_max, self.periodic)

    def to_dict(self) -> dict:
        return {"n": self.n, "x_min": self.x_min, "x_max": self.x_max,
                "periodic": self.periodic}

    @classmethod
    def from_dict(cls, d: dict) -> Grid1D:
        return cls(int(d["n"]), float(d["x_min"]), float(d["x_max"]),
                   bool(d.get("periodic", True)))


@dataclass(frozen=True)
class Grid2D:
    """Tensor product of an x axis and a y (or v) axis."""

    x: Grid1D
    y: Grid1D

    @classmethod
    def uniform(cls, nx, ny, x_bounds=(0.0, 1.0), y_bounds=(0.0, 1.0),
                periodic_y=True) -> Grid2D:
        return cls(Grid1D(nx, *x_bounds, periodic=True),
                   Grid1D(ny, *y_bounds, periodic=periodic_y))

    @property
    def nx(self) -> int:
        return self.x.n

    @property
    def ny(self) -> int:
        return self.y.n

    @property
    def hx(self) -> float:
        return self.x.h

    @property
    def hy(self) -> float:
        return self.y.h

    @property
    def shape(self) -> tuple[int, int]:
        return (self.y.n, self.x.n)

    @property
    def size(self) -> int:
        return self.x.n * self.y.n

    @property
    def periodic(self) -> tuple[bool, bool]:
        """Periodicity flags in array-axis order (y, x)."""
        return (self.y.periodic, self.x.periodic)

    def coordinate(self, i: int, j: int) -> tuple[float, float]:
        return self.x.coordinate(i), self.y.coordinate(j)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays of shape ``(ny, nx)``."""
        X, Y = np.meshgrid(self.x.coordinates(), self.y.coordinates())
        return X, Y

    def wrap(self, i, j):
        return self.x.wrap(i), self.y.wrap(j)

    def coarsen(self, factor: int) -> Grid2D:
        return Grid2D(self.x.coarsen(factor), self.y.coarsen(factor))

    def to_dict(self) -> dict:
        return {"x": self.x.to_dict(), "y": self.y.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> Grid2D:
        return cls(Grid1D.from_dict(d["x"]), Grid1D.from_dict(d["y"]))


Grid = Grid1D | Grid2D


def grid_from_dict(d: dict) -> Grid:
    return Grid2D.from_dict(d) if "x" in d else Grid1D.from_dict(d)


@dataclass(frozen=True)
class Field:
    """Float64 point values bound to a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.size != self.grid.size:
            raise ValueError(
                f"field has {values.size} values, grid has {self.grid.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def total(self) -> float:
        return float(np.sum(self.values))


def coordinate(grid: Grid, *index) -> float | tuple[float, float]:
    return grid.coordinate(*index)


def wrap(grid: Grid1D, i):
    return grid.wrap(i)


def _check_factor(n: int, factor: int) -> None:
    if factor < 1 or n % factor:
        raise ValueError(f"coarsening factor {factor} does not divide {n}")


def coarsen_array(values: np.ndarray, factor: int) -> np.ndarray:
    """Subsample point values by ``factor`` along every axis."""
    for n in values.shape:
        _check_factor(n, factor)
    return np.ascontiguousarray(values[(slice(None, None, factor),) * values.ndim])


def coarsen(f: Field, factor: int) -> Field:
    return Field(f.grid.coarsen(factor), coarsen_array(f.values, factor))


def periodic_distance(a, b, length: float):
    d = np.abs(np.asarray(a) - np.asarray(b)) % length
    return np.minimum(d, length - d)


TWO_PI = 2.0 * math.pi
