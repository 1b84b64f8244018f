"""Adding and removing jumps (Meyer's procedure) for a Levy transition density.

The added jumps form a finite measure mu stored as masses on the lattice
(lattice order, the point 0 at index n/2).  With rho_t the density of X_t,
the perturbed density is rho_t * sum_n t^n mu^{*n} / n!, whose mass is
exp(t |mu|); removing jumps uses the alternating series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import InvalidArgument, PreconditionViolation
from .grid import ScalarField, SpaceGrid, to_displacement, to_lattice
from .stable import StableParams, stable_density_grid

MC_BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    sgrid: SpaceGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        if w.shape != self.sgrid.shape:
            raise InvalidArgument(f"weights shape {w.shape} does not match grid {self.sgrid.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidArgument("measure weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def scaled(self, factor: float) -> "FiniteMeasure":
        return FiniteMeasure(self.sgrid, factor * self.weights)

    def displacement_weights(self) -> np.ndarray:
        return to_displacement(self.weights)


def zero_measure(sgrid: SpaceGrid) -> FiniteMeasure:
    return FiniteMeasure(sgrid, np.zeros(sgrid.shape))


def point_mass(sgrid: SpaceGrid, mass: float, at=None) -> FiniteMeasure:
    w = np.zeros(sgrid.shape)
    idx = sgrid.center_index if at is None else tuple(at)
    w[idx] = mass
    return FiniteMeasure(sgrid, w)


def gaussian_measure(sgrid: SpaceGrid, mass: float, sigma: float, center=None) -> FiniteMeasure:
    """Bin a Gaussian-shaped measure of total ``mass`` onto the lattice."""
    if sigma <= 0 or mass < 0:
        raise InvalidArgument("need sigma > 0 and mass >= 0")
    c = np.zeros(sgrid.dim) if center is None else np.broadcast_to(np.asarray(center, float), (sgrid.dim,))
    r2 = sum((m - ci) ** 2 for m, ci in zip(sgrid.mesh(), c))
    w = np.exp(-0.5 * r2 / sigma ** 2)
    return FiniteMeasure(sgrid, mass * w / w.sum())


def uniform_ball_measure(sgrid: SpaceGrid, mass: float, radius: float, center=None) -> FiniteMeasure:
    if radius <= 0 or mass < 0:
        raise InvalidArgument("need radius > 0 and mass >= 0")
    c = np.zeros(sgrid.dim) if center is None else np.broadcast_to(np.asarray(center, float), (sgrid.dim,))
    r2 = sum((m - ci) ** 2 for m, ci in zip(sgrid.mesh(), c))
    w = (r2 <= radius ** 2).astype(float)
    if w.sum() == 0:
        raise InvalidArgument("ball contains no lattice point")
    return FiniteMeasure(sgrid, mass * w / w.sum())


def stable_levy_constant(alpha: float, d: int) -> float:
    """c with nu(dz) = c |z|^{-d-alpha} dz for the symbol |u|^alpha."""
    return (alpha * 2 ** (alpha - 1) * math.gamma((d + alpha) / 2)
            / (math.pi ** (d / 2) * math.gamma(1 - alpha / 2)))


def stable_levy_masses(params: StableParams, sgrid: SpaceGrid) -> np.ndarray:
    """Lattice masses c |z|^{-d-alpha} h^d (lattice order); +inf at z = 0."""
    r = sgrid.radius()
    with np.errstate(divide="ignore"):
        out = stable_levy_constant(params.alpha, params.dim) * r ** (-params.dim - params.alpha)
    return out * sgrid.cell_volume


@dataclass(frozen=True, eq=False)
class LevyKernelSpec:
    """rho: tau -> density of X_tau (lattice order); nu: Levy masses; mu: added jumps."""

    sgrid: SpaceGrid
    mu: FiniteMeasure
    rho: Callable[[float], ScalarField]
    nu: np.ndarray | None = None
    params: StableParams | None = None


def levy_tail_measure(params: StableParams, sgrid: SpaceGrid, radius: float) -> FiniteMeasure:
    """nu restricted to |z| > radius: removing it leaves nu - mu compactly supported."""
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    nu = stable_levy_masses(params, sgrid)
    return FiniteMeasure(sgrid, np.where(sgrid.radius() > radius, nu, 0.0))


def ratio_profile(f: ScalarField, rho: ScalarField, radii) -> list[float]:
    """f / rho at the lattice points nearest (r, 0, ..., 0); inf where rho vanishes."""
    g = f.grid
    centre = (g.n_per_dim // 2,) * g.dim
    out = []
    for r in radii:
        i = min(g.n_per_dim - 1, g.n_per_dim // 2 + int(round(r / g.spacing)))
        idx = (i,) + centre[1:]
        out.append(float(f.values[idx] / rho.values[idx]) if rho.values[idx] > 0 else math.inf)
    return out


def stable_levy_spec(params: StableParams, sgrid: SpaceGrid, mu: FiniteMeasure) -> LevyKernelSpec:
    """Lattice-torus stable process (exact semigroup) with its Levy masses."""

    def rho(tau: float) -> ScalarField:
        return stable_density_grid(params, sgrid, tau, periodic=True).field

    return LevyKernelSpec(sgrid, mu, rho, nu=stable_levy_masses(params, sgrid), params=params)


def convolution_power(mu: FiniteMeasure, n: int) -> FiniteMeasure:
    """mu^{*n} on the torus; mass renormalized to |mu|^n."""
    if int(n) != n or n < 0:
        raise InvalidArgument(f"n must be a nonnegative integer, got {n}")
    sg = mu.sgrid
    if n == 0:
        return point_mass(sg, 1.0)
    m = mu.total_mass
    if m == 0:
        return zero_measure(sg)
    # power of the probability mu/|mu| (no under/overflow), then rescale to |mu|^n
    spec = np.fft.rfftn(mu.displacement_weights() / m) ** n
    w = np.maximum(np.fft.irfftn(spec, s=sg.shape, axes=tuple(range(sg.dim))), 0.0)
    w *= m ** n / w.sum()
    return FiniteMeasure(sg, to_lattice(w))


def poisson_tail(x: float, N: int) -> float:
    """sum_{n>N} x^n / n! = e^x P(Poisson(x) > N)."""
    if x == 0:
        return 0.0
    return float(math.exp(x) * special.gammainc(N + 1, x))


def poisson_cutoff(x: float, rel_tol: float, n_max: int = 400) -> int:
    for N in range(n_max + 1):
        if poisson_tail(x, N) <= rel_tol:
            return N
    raise InvalidArgument(f"Poisson tail above {rel_tol} at N={n_max}")


def _meyer_series(spec: LevyKernelSpec, tau: float, rel_tol: float, sign: float) -> ScalarField:
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    rho = spec.rho(tau)
    m = spec.mu.total_mass
    if m == 0:
        return rho
    N = poisson_cutoff(tau * m, rel_tol)
    rho_hat = np.fft.rfftn(rho.values)
    acc = np.zeros(spec.sgrid.shape)
    coef = 1.0
    for n in range(N + 1):
        if n:
            coef *= sign * tau / n
        p = convolution_power(spec.mu, n).displacement_weights()
        acc += coef * np.fft.irfftn(rho_hat * np.fft.rfftn(p), s=spec.sgrid.shape,
                                      axes=tuple(range(spec.sgrid.dim)))
    return ScalarField(spec.sgrid, acc, meta={"n_terms": N})


def meyer_add(spec: LevyKernelSpec, tau: float, rel_tol: float = 1e-12) -> ScalarField:
    """rho_tau * sum_{n<=N} tau^n mu^{*n} / n!, N from the Poisson tail."""
    f = _meyer_series(spec, tau, rel_tol, 1.0)
    return ScalarField(f.grid, np.maximum(f.values, 0.0), is_density=True, meta=f.meta)


def meyer_normalize(field: ScalarField, tau: float, mu_mass: float) -> ScalarField:
    return ScalarField(field.grid, math.exp(-tau * mu_mass) * field.values,
                       is_density=field.is_density, meta=dict(field.meta))


def removal_precondition_defect(spec: LevyKernelSpec) -> float:
    """max (mu - nu)^+ over the lattice (0 means nu - mu >= 0)."""
    if spec.nu is None:
        raise PreconditionViolation("removal needs the Levy masses nu")
    d = spec.mu.weights - spec.nu
    return float(np.max(np.maximum(d, 0.0)))


def meyer_remove(spec: LevyKernelSpec, tau: float, rel_tol: float = 1e-12) -> ScalarField:
    """rho_tau * sum_n (-tau)^n mu^{*n} / n!; requires nu - mu >= 0."""
    if removal_precondition_defect(spec) > 0:
        raise PreconditionViolation("nu - mu is negative somewhere; removing these jumps is not admissible")
    return _meyer_series(spec, tau, rel_tol, -1.0)


# -- Monte Carlo -------------------------------------------------------------
def cms_symmetric(rng: np.random.Generator, alpha: float, size: int) -> np.ndarray:
    """Chambers-Mallows-Stuck draws with characteristic function exp(-|u|^alpha)."""
    V = rng.uniform(-np.pi / 2, np.pi / 2, size)
    W = rng.exponential(1.0, size)
    if alpha == 1.0:
        return np.tan(V)
    return (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))


def kanter_positive(rng: np.random.Generator, beta: float, size: int) -> np.ndarray:
    """Positive beta-stable draws (0<beta<1) with Laplace transform exp(-lambda^beta)."""
    U = rng.uniform(0.0, 1.0, size)
    E = rng.exponential(1.0, size)
    a = (np.sin((1 - beta) * np.pi * U) * np.sin(beta * np.pi * U) ** (beta / (1 - beta))
         / np.sin(np.pi * U) ** (1 / (1 - beta)))
    return (a / E) ** ((1 - beta) / beta)


def stable_increments(rng: np.random.Generator, params: StableParams, tau: float, size: int) -> np.ndarray:
    """Draws of X_tau - X_0, shape (size, d)."""
    a, d = params.alpha, params.dim
    scale = tau ** (1.0 / a)
    if d == 1:
        return scale * cms_symmetric(rng, a, size)[:, None]
    A = kanter_positive(rng, a / 2, size)
    G = rng.standard_normal((size, d))
    return scale * np.sqrt(2.0 * A)[:, None] * G


def _block_counts(spec, tau, x0, seed, block, size, cdf, jump_points):
    sg = spec.sgrid
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))
    x = np.broadcast_to(np.asarray(x0, float), (sg.dim,)) + stable_increments(rng, spec.params, tau, size)
    m = spec.mu.total_mass
    if m > 0:
        k = rng.poisson(tau * m, size)
        total = int(k.sum())
        if total:
            idx = np.searchsorted(cdf, rng.uniform(0.0, cdf[-1], total), side="right")
            idx = np.minimum(idx, cdf.size - 1)
            owner = np.repeat(np.arange(size), k)
            jumps = np.zeros((size, sg.dim))
            np.add.at(jumps, owner, jump_points[idx])
            x = x + jumps
    L, h, n = sg.half_width, sg.spacing, sg.n_per_dim
    x = np.mod(x + L, 2 * L) - L
    bins = np.mod(np.rint((x + L) / h).astype(np.int64), n)
    flat = np.ravel_multi_index(tuple(bins.T), sg.shape)
    return np.bincount(flat, minlength=sg.size)


def monte_carlo_oracle(spec: LevyKernelSpec, tau: float, x0=0.0, n_paths: int = 10 ** 6,
                       seed: int = 0) -> ScalarField:
    """Histogram density of x0 + X_tau + compound Poisson(tau, mu) on the lattice.

    Blocks of ``MC_BLOCK`` paths draw from Philox streams keyed by
    (seed, block index); counts are merged by integer addition.
    """
    if spec.params is None:
        raise InvalidArgument("Monte Carlo needs the stable parameters of the base process")
    if int(n_paths) != n_paths or n_paths < 1:
        raise InvalidArgument("n_paths must be a positive integer")
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    sg = spec.sgrid
    w = spec.mu.weights.reshape(-1)
    cdf = np.cumsum(w)
    jump_points = np.stack([m.reshape(-1) for m in sg.mesh()], axis=1)
    counts = np.zeros(sg.size, dtype=np.int64)
    n_blocks = -(-n_paths // MC_BLOCK)
    for b in range(n_blocks):
        size = min(MC_BLOCK, n_paths - b * MC_BLOCK)
        counts += _block_counts(spec, tau, x0, int(seed), b, size, cdf, jump_points)
    dens = counts.reshape(sg.shape) / (n_paths * sg.cell_volume)
    return ScalarField(sg, dens, is_density=True, meta={"n_paths": n_paths, "seed": int(seed)})


# -- export ------------------------------------------------------------------
def write_csv(path, field: ScalarField, value_name: str = "value") -> None:
    """Header row, coordinates then value, 17 significant digits, LF endings."""
    sg = field.grid
    coords = [m.reshape(-1) for m in sg.mesh()]
    names = ["x"] if sg.dim == 1 else [f"x{k + 1}" for k in range(sg.dim)]
    cols = np.column_stack(coords + [field.values.reshape(-1)])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names + [value_name]) + "\n")
        np.savetxt(fh, cols, fmt="%.17g", delimiter=",", newline="\n")


def mu_as_jump_profile(mu: FiniteMeasure) -> np.ndarray:
    """j(x, y) dy = mu(dy - x)  <=>  profile g = mu / cell volume, FFT order."""
    return mu.displacement_weights() / mu.sgrid.cell_volume


# -- second code path ----------------------------------------------------------
def series_path_density(spec: LevyKernelSpec, tau: float, n_steps: int, rel_tol: float = 1e-12) -> ScalarField:
    """k~(0, 0, tau, .) from the perturbation series of the stationary kernel
    with j(x, y) dy = mu(dy - x) on a time grid with ``n_steps`` cells."""
    from .grid import TimeGrid
    from .kernelalg import jump_from_profile
    from .perturb import QFunction, perturbation_series
    from .stable import stable_kernel

    if spec.params is None:
        raise InvalidArgument("the series path needs the stable parameters")
    tg = TimeGrid(0.0, float(tau), int(n_steps))
    K = stable_kernel(spec.params, tg, spec.sgrid)
    J = jump_from_profile(spec.sgrid, mu_as_jump_profile(spec.mu))
    P = perturbation_series(K, J, QFunction(spec.mu.total_mass), 0.0, rel_tol)
    disp = P.series_sum.data[0, tg.n_axis - 1]
    return ScalarField(spec.sgrid, to_lattice(disp), meta={"n_terms": P.certificate.n_terms})


def two_path_agreement(spec: LevyKernelSpec, tau: float, steps=(4, 8, 16, 32, 64),
                       rel_tol: float = 1e-12) -> dict:
    """Sup distance between meyer_add and the grid series, raw (finest grid) and
    after Richardson extrapolation of the series in dt -> 0."""
    from .perturb import richardson

    ref = meyer_add(spec, tau, rel_tol).values
    vals = [series_path_density(spec, tau, n, rel_tol).values for n in steps]
    extrap = richardson(vals, [tau / n for n in steps])
    return {"raw": float(np.max(np.abs(vals[-1] - ref))),
            "extrapolated": float(np.max(np.abs(extrap - ref))),
            "max_density": float(ref.max()), "steps": list(steps)}
