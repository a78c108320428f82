"""Grid and field containers shared by the solver and the transforms.

All containers are immutable after construction; the wrapped numpy arrays
are marked read-only so they can be shared freely across worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError


def _readonly(a) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Uniform cell-centered grid on the open interval (a, b) with n cells."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (self.b > self.a):
            raise ConfigurationError(f"need a < b, got a={self.a}, b={self.b}")
        if self.n < 4:
            raise ConfigurationError(f"need at least 4 cells, got n={self.n}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @property
    def length(self) -> float:
        return self.b - self.a

    def centers(self) -> np.ndarray:
        h = self.h
        return self.a + h * (np.arange(self.n) + 0.5)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid1D)
            and self.a == other.a
            and self.b == other.b
            and self.n == other.n
        )

    def __hash__(self):
        return hash((self.a, self.b, self.n))


@dataclass(frozen=True, eq=False)
class DensityField:
    """Non-negative density samples at the cell centers of a grid at one time."""

    grid: Grid1D
    time: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.shape != (self.grid.n,):
            raise ShapeError(
                f"values shape {self.values.shape} does not match grid n={self.grid.n}"
            )
        if np.any(self.values < 0):
            raise ConfigurationError("density values must be non-negative")

    def mass(self) -> float:
        """Midpoint-rule integral of the density over the interval."""
        return float(self.grid.h * self.values.sum())

    def max_value(self) -> float:
        return float(self.values.max())

    def min_value(self) -> float:
        return float(self.values.min())

    def replace_values(self, values) -> "DensityField":
        return DensityField(self.grid, self.time, values)


@dataclass(frozen=True, eq=False)
class ExtendedField:
    """Field on an ambient uniform grid, constant ``fill_value`` outside its core.

    ``core_lo``/``core_hi`` record the interval the data originated from so
    translations can be checked against the allocated margin.
    """

    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    fill_value: float
    core_lo: float
    core_hi: float
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(self.x))
        object.__setattr__(self, "values", _readonly(self.values))
        if self.x.shape != self.values.shape or self.x.ndim != 1:
            raise ShapeError("x and values must be 1D arrays of equal length")
        dx = np.diff(self.x)
        if self.x.size >= 2 and not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
            raise ShapeError("ambient grid must be uniform")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def margin(self) -> float:
        """Smallest clearance between the core interval and the ambient edge."""
        half = 0.5 * self.h
        return float(
            min(self.core_lo - (self.x[0] - half), (self.x[-1] + half) - self.core_hi)
        )

    def mass(self) -> float:
        return float(self.h * self.values.sum())


@dataclass(frozen=True, eq=False)
class PressureField:
    """Pressure samples on an ambient grid, tagged with the diffusion exponent."""

    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    m: float
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(self.x))
        object.__setattr__(self, "values", _readonly(self.values))
        if self.x.shape != self.values.shape or self.x.ndim != 1:
            raise ShapeError("x and values must be 1D arrays of equal length")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])


def embed_in_ambient(
    values: np.ndarray,
    centers: np.ndarray,
    margin: float,
    fill: float,
    time: float = 0.0,
) -> ExtendedField:
    """Embed cell-centered data into an ambient grid padded by ``margin``.

    The ambient grid extends the original one by whole cells on both sides,
    which keeps grid-aligned shifts exact.
    """
    h = float(centers[1] - centers[0])
    pad = int(np.ceil(margin / h - 1e-12)) if margin > 0 else 0
    left = centers[0] - h * np.arange(pad, 0, -1)
    right = centers[-1] + h * np.arange(1, pad + 1)
    x = np.concatenate([left, centers, right])
    v = np.concatenate([np.full(pad, fill), values, np.full(pad, fill)])
    return ExtendedField(
        x=x,
        values=v,
        fill_value=fill,
        core_lo=float(centers[0] - 0.5 * h),
        core_hi=float(centers[-1] + 0.5 * h),
        time=time,
    )
