"""Space-time discretization: uniform time grids, periodic spatial lattices,
rectangle-rule quadrature and FFT helpers for periodic convolution.

Kernels live on the *axis* of a :class:`TimeGrid`.  With the default
``"midpoint"`` rule the axis holds every node and every cell midpoint, and
the time measure used by kernel composition charges only the midpoints
(weight ``dt`` each).  Jumps therefore happen strictly between nodes, which
keeps composition associative and lets splits at nodes factor exactly.  The
``"node"`` rule puts weight ``dt`` on every node instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgument

QUADRATURE_RULES = ("midpoint", "node")


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n_steps: int
    rule: str = "midpoint"

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)):
            raise InvalidArgument("time bounds must be finite")
        if not self.t0 < self.t1:
            raise InvalidArgument(f"need t0 < t1, got {self.t0}, {self.t1}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgument(f"n_steps must be a positive integer, got {self.n_steps}")
        if self.rule not in QUADRATURE_RULES:
            raise InvalidArgument(f"unknown quadrature rule {self.rule!r}")

    @property
    def dt_step(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt_step * np.arange(self.n_steps + 1)

    def node(self, i: int) -> float:
        return self.t0 + i * self.dt_step

    @property
    def period(self) -> int:
        """Period of the time-measure weights along the axis."""
        return 2 if self.rule == "midpoint" else 1

    @property
    def axis_step(self) -> float:
        return self.dt_step / self.period

    @property
    def n_axis(self) -> int:
        return self.period * self.n_steps + 1

    @property
    def axis(self) -> np.ndarray:
        return self.t0 + self.axis_step * np.arange(self.n_axis)

    def node_index(self, i: int) -> int:
        """Axis index of node ``i``."""
        return self.period * i

    @property
    def node_indices(self) -> np.ndarray:
        return self.period * np.arange(self.n_steps + 1)

    @property
    def phase_weights(self) -> np.ndarray:
        """Time-measure weight of an axis point, by its index modulo ``period``."""
        if self.rule == "midpoint":
            return np.array([0.0, self.dt_step])
        return np.array([self.dt_step])

    @property
    def weights(self) -> np.ndarray:
        return self.phase_weights[np.arange(self.n_axis) % self.period]

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.t1, self.n_steps * factor, self.rule)

    def descriptor(self) -> dict:
        return {"t0": self.t0, "t1": self.t1, "n_steps": self.n_steps, "rule": self.rule}


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform lattice {-L + i*h}^d on the torus [-L, L)^d, h = 2L/n."""

    dim: int
    half_width: float
    n_per_dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidArgument(f"dim must be a positive integer, got {self.dim}")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise InvalidArgument(f"half_width must be positive, got {self.half_width}")
        n = self.n_per_dim
        if int(n) != n or n < 2 or n % 2:
            # even n keeps 0 on the lattice and the FFT symmetric
            raise InvalidArgument(f"n_per_dim must be even and >= 2, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_per_dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_dim,) * self.dim

    @property
    def size(self) -> int:
        return self.n_per_dim ** self.dim

    @property
    def coords_1d(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n_per_dim)

    @property
    def center_index(self) -> tuple[int, ...]:
        return (self.n_per_dim // 2,) * self.dim

    def mesh(self) -> list[np.ndarray]:
        c = self.coords_1d
        return np.meshgrid(*([c] * self.dim), indexing="ij")

    def radius(self) -> np.ndarray:
        """|x| at every lattice point (lattice order)."""
        return np.sqrt(sum(m * m for m in self.mesh()))

    @cached_property
    def displacement_radius(self) -> np.ndarray:
        """Minimal-image |d| for displacements in FFT order."""
        k = np.fft.fftfreq(self.n_per_dim, d=1.0 / self.n_per_dim) * self.spacing
        axes = np.meshgrid(*([k] * self.dim), indexing="ij")
        return np.sqrt(sum(a * a for a in axes))

    @cached_property
    def frequency_norm(self) -> np.ndarray:
        """|u| on the dual lattice (full FFT layout)."""
        u = 2.0 * np.pi * np.fft.fftfreq(self.n_per_dim, d=self.spacing)
        axes = np.meshgrid(*([u] * self.dim), indexing="ij")
        return np.sqrt(sum(a * a for a in axes))

    @cached_property
    def rfrequency_norm(self) -> np.ndarray:
        """|u| on the half-spectrum used by ``rfftn``."""
        u = 2.0 * np.pi * np.fft.fftfreq(self.n_per_dim, d=self.spacing)
        ur = 2.0 * np.pi * np.fft.rfftfreq(self.n_per_dim, d=self.spacing)
        axes = np.meshgrid(*([u] * (self.dim - 1) + [ur]), indexing="ij")
        return np.sqrt(sum(a * a for a in axes))

    def rescaled(self, factor: float) -> "SpaceGrid":
        return SpaceGrid(self.dim, self.half_width * factor, self.n_per_dim)

    def refined(self, factor: int = 2) -> "SpaceGrid":
        return SpaceGrid(self.dim, self.half_width, self.n_per_dim * factor)

    def descriptor(self) -> dict:
        return {"dim": self.dim, "half_width": self.half_width, "n_per_dim": self.n_per_dim}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values on the lattice of ``grid``, lattice order (index 0 is -L)."""

    grid: SpaceGrid
    values: np.ndarray
    is_density: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise InvalidArgument(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("field values must be finite")
        if self.is_density and np.any(v < 0):
            raise InvalidArgument("density field has negative values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __mul__(self, a: float) -> "ScalarField":
        return ScalarField(self.grid, a * self.values)

    __rmul__ = __mul__

    def at(self, x) -> float:
        """Value at the lattice point nearest to ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.round((x + self.grid.half_width) / self.grid.spacing).astype(int) % self.grid.n_per_dim
        return float(self.values[tuple(idx)])


def make_time_grid(t0: float, t1: float, n: int, rule: str = "midpoint") -> TimeGrid:
    return TimeGrid(float(t0), float(t1), n, rule)


def make_space_grid(d: int, L: float, n: int) -> SpaceGrid:
    return SpaceGrid(d, float(L), n)


def integrate(f: ScalarField) -> float:
    return float(np.sum(f.values) * f.grid.cell_volume)


def inner_window(grid: SpaceGrid) -> np.ndarray:
    """Boolean mask of lattice points inside [-L/2, L/2]^d."""
    half = grid.half_width / 2
    inside = np.ones(grid.shape, dtype=bool)
    for m in grid.mesh():
        inside &= np.abs(m) <= half
    return inside


def wraparound_mass(f: ScalarField) -> float:
    """Mass of ``f`` outside [-L/2, L/2]^d."""
    return float(np.sum(f.values[~inner_window(f.grid)]) * f.grid.cell_volume)


def to_displacement(values: np.ndarray) -> np.ndarray:
    """Lattice order (0 at index n/2) -> FFT order (0 at index 0)."""
    return np.fft.ifftshift(values)


def to_lattice(values: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(values)


def periodic_convolve(field_values: np.ndarray, disp_kernel: np.ndarray) -> np.ndarray:
    """(f * g)(x) = sum_w g(w) f(x - w) on the torus; ``g`` in FFT order.

    No cell-volume factor: ``g`` is treated as point masses.
    """
    axes = tuple(range(field_values.ndim))
    out = np.fft.irfftn(np.fft.rfftn(field_values) * np.fft.rfftn(disp_kernel),
                        s=field_values.shape, axes=axes)
    return out


def _check_same_grid(a: SpaceGrid, b: SpaceGrid) -> None:
    if a != b:
        raise InvalidArgument(f"grid mismatch: {a} vs {b}")
