"""Isotropic alpha-stable transition densities computed from the characteristic
function exp(-t|u|^alpha) by FFT.

Two evaluation modes share one code path:

* ``periodic=True``: inverse DFT on the lattice itself.  This is the exact
  transition density of the lattice/torus model, so the semigroup identity
  holds to rounding; it is what the kernel constructors use.
* ``periodic=False`` (default): the same inverse DFT on a torus ``pad`` times
  wider with the same spacing, sampled back on the lattice.  Wrap-around is
  suppressed, so values approximate the density on R^d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, InvalidArgument
from .grid import ScalarField, SpaceGrid, TimeGrid, integrate, inner_window, to_displacement

TOL_NEG = 1e-12  # relative to the slice maximum
_PAD_BUDGET = 2 ** 20  # total padded lattice points


@dataclass(frozen=True)
class StableParams:
    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not (isinstance(self.alpha, (int, float)) and 0.0 < self.alpha < 2.0):
            raise InvalidArgument(f"alpha must lie in (0, 2), got {self.alpha}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidArgument(f"dim must be a positive integer, got {self.dim}")


@dataclass(frozen=True, eq=False)
class StableDensitySlice:
    params: StableParams
    t: float
    field: ScalarField
    periodic: bool
    pad: int

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def truncation_mass(self) -> float:
        """Mass missing from the lattice window (0 for the periodic model)."""
        return max(0.0, 1.0 - integrate(self.field))


def default_pad(grid: SpaceGrid) -> int:
    per_dim = (_PAD_BUDGET / grid.size) ** (1.0 / grid.dim)
    if per_dim < 2:
        return 1
    return 2 ** int(math.floor(math.log2(per_dim)))


def _check_t(t: float) -> None:
    if not (math.isfinite(t) and t > 0):
        raise InvalidArgument(f"t must be positive, got {t}")


def _guard_negative(v: np.ndarray, what: str) -> np.ndarray:
    top = float(np.max(v))
    lo = float(np.min(v))
    if lo < -TOL_NEG * top:
        raise AliasingError(f"{what}: negative value {lo:.3e} (max {top:.3e}); grid too coarse or too small")
    return np.maximum(v, 0.0)


def periodic_density_disp(params: StableParams, grid: SpaceGrid, t: float) -> np.ndarray:
    """Lattice transition density at time t, FFT (displacement) order."""
    _check_t(t)
    spec = np.exp(-t * grid.rfrequency_norm ** params.alpha)
    axes = tuple(range(grid.dim))
    v = np.fft.irfftn(spec, s=grid.shape, axes=axes) / grid.cell_volume
    # the symbol is even, so p(-x) = p(x); average with the reflection to make it exact
    v = 0.5 * (v + np.roll(np.flip(v, axes), 1, axes))
    return _guard_negative(v, f"stable density alpha={params.alpha} t={t}")


def stable_density_grid(params: StableParams, grid: SpaceGrid, t: float, *,
                        periodic: bool = False, pad: int | None = None) -> StableDensitySlice:
    _check_t(t)
    if params.dim != grid.dim:
        raise InvalidArgument("params.dim does not match grid.dim")
    if periodic:
        pad = 1
    elif pad is None:
        pad = default_pad(grid)
    if int(pad) != pad or pad < 1:
        raise InvalidArgument(f"pad must be a positive integer, got {pad}")
    big = SpaceGrid(grid.dim, grid.half_width * pad, grid.n_per_dim * pad)
    disp = periodic_density_disp(params, big, t)
    lattice = np.fft.fftshift(disp)
    lo = (big.n_per_dim - grid.n_per_dim) // 2
    block = lattice[tuple(slice(lo, lo + grid.n_per_dim) for _ in range(grid.dim))]
    return StableDensitySlice(params, float(t), ScalarField(grid, block, is_density=True),
                              periodic=bool(periodic), pad=int(pad))


def scaling_defect(params: StableParams, grid: SpaceGrid, t: float, *,
                   periodic: bool = False, pad: int | None = None) -> float:
    """max |p_t(x) - t^{-d/a} p_1(t^{-1/a} x)|, right side on the rescaled lattice."""
    _check_t(t)
    if pad is None and not periodic:
        pad = default_pad(grid)
    pt = stable_density_grid(params, grid, t, periodic=periodic, pad=pad).values
    scale = t ** (-1.0 / params.alpha)
    p1 = stable_density_grid(params, grid.rescaled(scale), 1.0, periodic=periodic, pad=pad).values
    return float(np.max(np.abs(pt - t ** (-params.dim / params.alpha) * p1)))


def sharp_envelope(params: StableParams, r: np.ndarray, t: float) -> np.ndarray:
    """t^{-d/a} ∧ t/|x|^{d+a}; the left branch at x = 0."""
    d, a = params.dim, params.alpha
    with np.errstate(divide="ignore"):
        right = np.where(r > 0, t / np.where(r > 0, r, 1.0) ** (d + a), np.inf)
    return np.minimum(t ** (-d / a), right)


def sharp_bound_ratio(params: StableParams, grid: SpaceGrid, t: float, *,
                      r_max: float | None = None, periodic: bool = False,
                      pad: int | None = None) -> tuple[float, float]:
    """(min, max) of p_t / (t^{-d/a} ∧ t/|x|^{d+a}) over lattice points with |x| <= r_max."""
    sl = stable_density_grid(params, grid, t, periodic=periodic, pad=pad)
    r = grid.radius()
    mask = np.ones(grid.shape, dtype=bool) if r_max is None else r <= r_max
    ratio = sl.values[mask] / sharp_envelope(params, r[mask], t)
    return float(ratio.min()), float(ratio.max())


def _rays(grid: SpaceGrid) -> list[list[tuple[int, ...]]]:
    n, d = grid.n_per_dim, grid.dim
    c = n // 2
    dirs = []
    for ax in range(d):
        for sgn in (1, -1):
            e = [0] * d
            e[ax] = sgn
            dirs.append(e)
    if d > 1:
        for signs in np.ndindex(*([2] * d)):
            dirs.append([1 if s else -1 for s in signs])
    rays = []
    for e in dirs:
        pts = []
        k = 0
        while True:
            idx = tuple(c + k * ei for ei in e)
            if any(i < 0 or i >= n for i in idx):
                break
            pts.append(idx)
            k += 1
        rays.append(pts)
    return rays


def radial_monotonicity_defect(slice_: StableDensitySlice | ScalarField) -> float:
    """Largest increase of the density along any lattice ray leaving the origin."""
    f = slice_.field if isinstance(slice_, StableDensitySlice) else slice_
    worst = 0.0
    for ray in _rays(f.grid):
        v = np.array([f.values[i] for i in ray])
        running_min = np.minimum.accumulate(v)
        worst = max(worst, float(np.max(v[1:] - running_min[:-1], initial=0.0)))
    return worst


def semigroup_defect(params: StableParams, grid: SpaceGrid, s: float, t: float, *,
                     periodic: bool = True, window: bool = True) -> float:
    """max |(p_s * p_t)(x) - p_{s+t}(x)| / max p_{s+t}, torus convolution."""
    ps = stable_density_grid(params, grid, s, periodic=periodic).values
    pt = stable_density_grid(params, grid, t, periodic=periodic).values
    pst = stable_density_grid(params, grid, s + t, periodic=periodic).values
    conv = np.fft.irfftn(np.fft.rfftn(ps) * np.fft.rfftn(to_displacement(pt)), s=grid.shape,
                        axes=tuple(range(grid.dim)))
    conv *= grid.cell_volume
    diff = np.abs(conv - pst)
    if window:
        diff = diff[inner_window(grid)]
    return float(diff.max() / pst.max())


def stable_kernel(params: StableParams, tgrid: TimeGrid, sgrid: SpaceGrid):
    """Stationary forward kernel rho_{t-s}(y-x) of the lattice stable process."""
    from .kernelalg import ForwardKernel

    if params.dim != sgrid.dim:
        raise InvalidArgument("params.dim does not match grid.dim")
    lags = np.zeros((tgrid.n_axis,) + sgrid.shape)
    for k in range(1, tgrid.n_axis):
        lags[k] = periodic_density_disp(params, sgrid, k * tgrid.axis_step)
    data = np.broadcast_to(lags, (tgrid.period,) + lags.shape).copy()
    return ForwardKernel(tgrid, sgrid, data, stationary=True)
