"""Checks specific to the stable application: the smallness condition for
jump kernels bounded by eps |w - z|^{-d-alpha}, the two-sided comparability
of the perturbed densities, and the weak fundamental-solution identity for
Delta^{alpha/2} + J."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AliasingError, InvalidArgument
from .grid import ScalarField, SpaceGrid, TimeGrid
from .kernelalg import ForwardKernel, SpatialJumpKernel, j_norm, jump_from_profile
from .perturb import (SUPPORT_FLOOR, PerturbedKernel, QFunction, bound_factor, estj1_defect,
                      ratio_field)
from .stable import StableParams

IMAG_TOL = 1e-12


@dataclass(frozen=True)
class EpsilonJumpSpec:
    """j(z, w) = eps max(|w - z|, delta)^{-d-alpha} for |w - z| <= L/2 (minimal image), else 0.

    ``delta=None`` means one lattice cell.
    """

    epsilon: float
    alpha: float
    dim: int = 1
    delta: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidArgument(f"epsilon must be >= 0, got {self.epsilon}")
        StableParams(self.alpha, self.dim)
        if self.delta is not None and not self.delta > 0:
            raise InvalidArgument("delta must be positive")

    def profile(self, sgrid: SpaceGrid) -> np.ndarray:
        if sgrid.dim != self.dim:
            raise InvalidArgument("grid dimension does not match the jump spec")
        delta = sgrid.spacing if self.delta is None else self.delta
        r = sgrid.displacement_radius
        g = self.epsilon * np.maximum(r, delta) ** (-self.dim - self.alpha)
        return np.where(r <= sgrid.half_width / 2, g, 0.0)

    def build(self, sgrid: SpaceGrid) -> SpatialJumpKernel:
        return jump_from_profile(sgrid, self.profile(sgrid))


def condition_defect(K: ForwardKernel, J: SpatialJumpKernel, eta: float, c: float) -> float:
    """max (K_1 - (eta + c (t - s)) K)^+ / K over the support of K."""
    return estj1_defect(K, J, eta, QFunction(c))


def lemma_eta(eps: float, params: StableParams) -> float:
    """The intercept 3^{d+alpha} eps."""
    return 3.0 ** (params.dim + params.alpha) * eps


def fit_c(K: ForwardKernel, J: SpatialJumpKernel, eta: float) -> float:
    """Least c with K_1 <= (eta + c (t - s)) K everywhere on the support."""
    R, sup, _, _ = ratio_field(K, J)
    gap = np.broadcast_to(K.gap_field(), K.data.shape)
    ok = sup & (gap > 0)
    if not np.any(ok):
        return 0.0
    return float(np.max(np.maximum(R[ok] - eta, 0.0) / gap[ok]))


@dataclass(frozen=True)
class SmallnessConstants:
    eps: float
    eta: float
    c: float
    j_norm: float
    c1: float
    defect: float


def smallness_constants(K: ForwardKernel, spec: EpsilonJumpSpec) -> SmallnessConstants:
    """(eta, c) = (3^{d+a} eps, fitted c) and the implied c1 = c/||j|| - 2^{d/a}."""
    params = StableParams(spec.alpha, spec.dim)
    J = spec.build(K.sgrid)
    eta = lemma_eta(spec.epsilon, params)
    c = fit_c(K, J, eta)
    nj = j_norm(J)
    c1 = c / nj - 2.0 ** (spec.dim / spec.alpha) if nj > 0 else 0.0
    return SmallnessConstants(spec.epsilon, eta, c, nj, c1, condition_defect(K, J, eta, c))


def epsilon_scan(K: ForwardKernel, epsilons, alpha: float, dim: int = 1, delta=None) -> dict:
    """Fitted (eta, c) across an epsilon scan and the largest certified epsilon."""
    from .perturb import verify_smallness

    rows = []
    for eps in epsilons:
        fit = verify_smallness(K, EpsilonJumpSpec(eps, alpha, dim, delta).build(K.sgrid))
        rows.append({"epsilon": float(eps), "eta": fit.eta, "c": fit.c, "certified": fit.certified})
    ok = [r["epsilon"] for r in rows if r["certified"]]
    return {"rows": rows, "frontier": max(ok) if ok else None}


def minimal_eta(K: ForwardKernel, J: SpatialJumpKernel) -> float:
    """Least-squares intercept of the smallness fit: the least eta on the
    (eta, c) frontier at the fitted slope."""
    from .perturb import verify_smallness

    return verify_smallness(K, J).eta


@dataclass(frozen=True)
class ComparabilityResult:
    """Kernel ratios, their bounds and oriented defects (0 means the inequality holds)."""

    ratio_tilde_max: float  # max p~/p
    ratio_minus_max: float  # max p~-/p
    ratio_minus_min: float  # min p~-/p
    upper_defect: float  # (p~ / (p (1/(1-eta))^{1+c(t-s)/eta}) - 1)^+
    minus_upper_defect: float  # (p~-/p - 1)^+
    minus_lower_defect: float  # (1 - p~- / (p ((1-eta)/2)^{1+2c(t-s)/(1-eta)}))^+

    @property
    def defects(self) -> tuple[float, float, float]:
        return (self.upper_defect, self.minus_upper_defect, self.minus_lower_defect)


def corollary52_check(p: ForwardKernel, p_tilde: PerturbedKernel | ForwardKernel,
                      p_tilde_minus: PerturbedKernel | ForwardKernel, eta: float, c: float) -> ComparabilityResult:
    pt = p_tilde.series_sum if isinstance(p_tilde, PerturbedKernel) else p_tilde
    pm = p_tilde_minus.series_sum if isinstance(p_tilde_minus, PerturbedKernel) else p_tilde_minus
    if not 0 <= eta < 1:
        raise InvalidArgument("eta must lie in [0, 1)")
    sup = p.valid_mask() & (p.data > SUPPORT_FLOOR)
    if not np.any(sup):
        return ComparabilityResult(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
    gap = np.broadcast_to(p.gap_field(), p.data.shape)[sup]
    P, T, M = p.data[sup], pt.data[sup], pm.data[sup]
    up = bound_factor(eta, c * gap)
    low = ((1 - eta) / 2) ** (1 + 2 * c * gap / (1 - eta))
    return ComparabilityResult(
        ratio_tilde_max=float(np.max(T / P)),
        ratio_minus_max=float(np.max(M / P)),
        ratio_minus_min=float(np.min(M / P)),
        upper_defect=float(max(0.0, np.max(T / (P * up)) - 1.0)),
        minus_upper_defect=float(max(0.0, np.max(M / P) - 1.0)),
        minus_lower_defect=float(max(0.0, 1.0 - np.min(M / (P * low)))),
    )


# -- fractional Laplacian -------------------------------------------------------
def fractional_laplacian_values(values: np.ndarray, sgrid: SpaceGrid, alpha: float) -> np.ndarray:
    """Delta^{alpha/2} as the multiplier -|u|^alpha; acts on the trailing d axes."""
    axes = tuple(range(values.ndim - sgrid.dim, values.ndim))
    sym = -sgrid.frequency_norm ** alpha
    out = np.fft.ifftn(sym * np.fft.fftn(values, axes=axes), axes=axes)
    top = float(np.max(np.abs(out.real), initial=0.0))
    if float(np.max(np.abs(out.imag), initial=0.0)) > IMAG_TOL * max(top, 1.0):
        raise AliasingError("fractional Laplacian has a non-negligible imaginary part")
    return out.real


def fractional_laplacian(phi: ScalarField, alpha: float) -> ScalarField:
    if not 0 < alpha < 2:
        raise InvalidArgument("alpha must lie in (0, 2)")
    return ScalarField(phi.grid, fractional_laplacian_values(phi.values, phi.grid, alpha))


# -- test functions -------------------------------------------------------------
def smooth_bump(r: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - r^2)) on |r| < 1, else 0 (C-infinity, peak 1)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True)
class FractionalTestFunction:
    """phi(t, x) = f(t, x) with compact support in (t0, t1) x [-L/2, L/2]^d.

    ``fn(t, mesh)`` evaluates phi at time ``t`` on the lattice mesh.
    """

    name: str
    fn: Callable[[float, list], np.ndarray]
    space_radius: float  # |x| <= space_radius on the support

    def values(self, sgrid: SpaceGrid, times: np.ndarray) -> np.ndarray:
        mesh = sgrid.mesh()
        return np.stack([self.fn(float(t), mesh) for t in times])

    def check_support(self, tgrid: TimeGrid, sgrid: SpaceGrid) -> None:
        if self.space_radius >= sgrid.half_width / 2:
            raise InvalidArgument(f"test function {self.name!r} reaches outside [-L/2, L/2]^d")
        if tgrid.n_steps < 2:
            raise InvalidArgument("need at least two time steps")
        ends = self.values(sgrid, np.array([tgrid.t0, tgrid.t1]))
        if np.any(ends != 0):
            raise InvalidArgument(f"test function {self.name!r} must vanish at the outermost time nodes")


def _time_window(t, t0, t1, lo, hi):
    a = t0 + lo * (t1 - t0)
    b = t0 + hi * (t1 - t0)
    return float(smooth_bump(np.array([(2 * t - a - b) / (b - a)]))[0])


def standard_test_functions(tgrid: TimeGrid, dim: int = 1) -> list[FractionalTestFunction]:
    """Three smooth compactly supported test functions on the strip of ``tgrid``."""
    t0, t1 = tgrid.t0, tgrid.t1

    def centred(t, mesh):
        r = np.sqrt(sum(m * m for m in mesh))
        return _time_window(t, t0, t1, 0.0, 1.0) * smooth_bump(r / 3.0)

    def shifted(t, mesh):
        r = np.sqrt((mesh[0] - 1.0) ** 2 + sum(m * m for m in mesh[1:]))
        return _time_window(t, t0, t1, 0.0, 0.9) * smooth_bump(r / 4.0)

    def moving(t, mesh):
        s = (t - t0) / (t1 - t0)
        r = np.sqrt((mesh[0] + 1.0 - 2.0 * s) ** 2 + sum(m * m for m in mesh[1:]))
        return _time_window(t, t0, t1, 0.0, 1.0) * smooth_bump(r / 2.5)

    return [FractionalTestFunction("centred", centred, 3.0),
            FractionalTestFunction("shifted", shifted, 5.0),
            FractionalTestFunction("moving", moving, 4.5)]


def fundamental_solution_residual(K: ForwardKernel | PerturbedKernel, J: SpatialJumpKernel | None,
                                  phi: FractionalTestFunction, s_node: int, x, alpha: float) -> float:
    """|sum_t sum_y k(s,x,t,y) [d_t phi + Delta^{a/2} phi + J phi](t,y) h^d Delta + phi(s,x)|.

    The time sum is a right-endpoint rectangle rule over the kernel axis
    (spacing Delta) for t > s; d_t phi uses centred differences with step
    Delta; J phi(t, y) = int j(y, w) phi(t, w) dw.
    """
    k = K.series_sum if isinstance(K, PerturbedKernel) else K
    tg, sg = k.tgrid, k.sgrid
    phi.check_support(tg, sg)
    if not (0 < s_node <= max(1, tg.n_steps // 4)):
        raise InvalidArgument("s must be an interior node in the first quarter of the time grid")
    i = tg.node_index(s_node)
    xs = np.broadcast_to(np.asarray(x, dtype=float), (sg.dim,))
    xi = tuple(np.round((xs + sg.half_width) / sg.spacing).astype(int) % sg.n_per_dim)
    x_flat = int(np.ravel_multi_index(xi, sg.shape))
    D = tg.axis_step
    times = tg.axis[i + 1:]
    vals = phi.values(sg, times)
    dt_phi = (phi.values(sg, times + D) - phi.values(sg, times - D)) / (2 * D)
    gen = dt_phi + fractional_laplacian_values(vals, sg, alpha)
    if J is not None and not J.is_zero():
        flat = vals.reshape(len(times), -1)
        gen = gen + (flat @ J.dense.T * sg.cell_volume).reshape(vals.shape)
    total = 0.0
    for n, j in enumerate(range(i + 1, tg.n_axis)):
        row = k.block(i, j)[x_flat] if not k.stationary else None
        if k.stationary:
            disp = k.data[i % tg.period, j - i]
            # value at y of rho(y - x): roll the displacement array to lattice order around x
            row = np.roll(np.fft.fftshift(disp), tuple(c - sg.n_per_dim // 2 for c in xi),
                          axis=tuple(range(sg.dim))).reshape(-1)
        total += D * float(row @ gen[n].reshape(-1)) * sg.cell_volume
    phi_sx = float(phi.values(sg, np.array([tg.node(s_node)]))[0][xi])
    return abs(total + phi_sx)


def default_fundsol_point(tgrid: TimeGrid) -> int:
    return max(1, tgrid.n_steps // 8)
