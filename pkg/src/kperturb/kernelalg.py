"""Forward space-time kernels on a grid and their composition algebra.

Two representations:

* dense: ``data[i, x, j, y]`` over axis indices ``i, j`` of the time grid and
  flattened lattice points ``x, y``; zero for ``j <= i``.
* stationary: ``data[p, L, *disp]`` holds the displacement density
  ``rho(y - x)`` (FFT order, minimal image on the torus) for a start index
  with ``i % period == p`` and lag ``L = j - i``.  Lag 0 is zero.

Composition integrates the intermediate time against the grid's time
measure (``TimeGrid.weights``) and space against the cell volume.  Jumps
``J(s, x, dt dy) = j(x, y) delta_s(dt) dy`` act without a time integral.
"""
from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _backend
from .errors import InvalidArgument
from .grid import SpaceGrid, TimeGrid

NEG_TOL = 1e-9  # relative rounding noise tolerated (then clamped) in unsigned kernels
_uids = itertools.count(1)


def displacement_index(sgrid: SpaceGrid) -> np.ndarray:
    """``D[x, y]`` = flat FFT-order index of the displacement ``y - x``."""
    n, d = sgrid.n_per_dim, sgrid.dim
    idx = np.indices(sgrid.shape).reshape(d, -1)  # (d, N)
    diff = (idx[:, None, :] - idx[:, :, None]) % n  # (d, N_x, N_y): y - x
    return np.ravel_multi_index(tuple(diff), sgrid.shape)


@dataclass(frozen=True, eq=False)
class ForwardKernel:
    tgrid: TimeGrid
    sgrid: SpaceGrid
    data: np.ndarray
    stationary: bool = False
    signed: bool = False
    uid: int = field(default_factory=lambda: next(_uids), init=False)

    def __post_init__(self):
        tg, sg = self.tgrid, self.sgrid
        a = np.ascontiguousarray(self.data, dtype=float)
        if self.stationary:
            want = (tg.period, tg.n_axis) + sg.shape
        else:
            want = (tg.n_axis, sg.size, tg.n_axis, sg.size)
        if a.shape != want:
            raise InvalidArgument(f"kernel data shape {a.shape}, expected {want}")
        if not np.all(np.isfinite(a)):
            raise InvalidArgument("kernel data must be finite")
        if self.stationary:
            if np.any(a[:, 0] != 0):
                raise InvalidArgument("stationary kernel must vanish at lag 0")
        else:
            back = np.tril(np.ones((tg.n_axis, tg.n_axis), dtype=bool))
            if np.any(a.transpose(0, 2, 1, 3)[back] != 0):
                raise InvalidArgument("kernel is not forward: data[i,:,j,:] != 0 for some j <= i")
        if not self.signed:
            top = float(np.max(np.abs(a), initial=0.0))
            if float(np.min(a, initial=0.0)) < -NEG_TOL * top:
                raise InvalidArgument("unsigned kernel has negative entries")
            a = np.maximum(a, 0.0)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    # -- representation -------------------------------------------------
    @property
    def n_axis(self) -> int:
        return self.tgrid.n_axis

    @cached_property
    def spectra(self) -> np.ndarray:
        """rfftn of the stationary slices, flattened to (period, n_lags, n_freq)."""
        if not self.stationary:
            raise InvalidArgument("spectra are defined for stationary kernels only")
        axes = tuple(range(2, 2 + self.sgrid.dim))
        s = np.fft.rfftn(self.data, axes=axes)
        return np.ascontiguousarray(s.reshape(s.shape[0], s.shape[1], -1))

    @cached_property
    def dense_data(self) -> np.ndarray:
        if not self.stationary:
            return self.data
        T, N, P = self.n_axis, self.sgrid.size, self.tgrid.period
        D = displacement_index(self.sgrid)
        flat = self.data.reshape(P, T, N)
        out = np.zeros((T, N, T, N))
        for i in range(T):
            for j in range(i + 1, T):
                out[i, :, j, :] = flat[i % P, j - i][D]
        out.setflags(write=False)
        return out

    def to_dense(self) -> "ForwardKernel":
        if not self.stationary:
            return self
        return ForwardKernel(self.tgrid, self.sgrid, self.dense_data, signed=self.signed)

    def block(self, i: int, j: int) -> np.ndarray:
        """(N_x, N_y) matrix of densities from axis index ``i`` to ``j``."""
        if self.stationary:
            if j <= i:
                return np.zeros((self.sgrid.size, self.sgrid.size))
            D = displacement_index(self.sgrid)
            return self.data[i % self.tgrid.period, j - i].reshape(-1)[D]
        return self.data[i, :, j, :]

    def pair_values(self):
        """Iterate ``(i, j, values)`` over forward axis pairs; ``values`` is the
        displacement slice for stationary kernels and the block otherwise."""
        T, P = self.n_axis, self.tgrid.period
        for i in range(T):
            for j in range(i + 1, T):
                yield i, j, (self.data[i % P, j - i] if self.stationary else self.data[i, :, j, :])

    # -- arithmetic -----------------------------------------------------
    def _like(self, data, signed=None) -> "ForwardKernel":
        return ForwardKernel(self.tgrid, self.sgrid, data, stationary=self.stationary,
                             signed=self.signed if signed is None else signed)

    def _aligned(self, other: "ForwardKernel"):
        _check_grids(self, other)
        if self.stationary == other.stationary:
            return self.data, other.data, self.stationary
        return self.dense_data, other.dense_data, False

    def __add__(self, other: "ForwardKernel") -> "ForwardKernel":
        a, b, st = self._aligned(other)
        return ForwardKernel(self.tgrid, self.sgrid, a + b, stationary=st,
                             signed=self.signed or other.signed)

    def __sub__(self, other: "ForwardKernel") -> "ForwardKernel":
        a, b, st = self._aligned(other)
        return ForwardKernel(self.tgrid, self.sgrid, a - b, stationary=st, signed=True)

    def scaled(self, factor: float) -> "ForwardKernel":
        return self._like(factor * self.data, signed=self.signed or factor < 0)

    def __neg__(self) -> "ForwardKernel":
        return self.scaled(-1.0)

    def zeros_like(self) -> "ForwardKernel":
        return self._like(np.zeros_like(self.data), signed=False)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data), initial=0.0))

    def time_gap(self) -> np.ndarray:
        """t_j - t_i per stored entry layout: (period, n_lags) or (T, T)."""
        tg = self.tgrid
        if self.stationary:
            return np.broadcast_to(np.arange(tg.n_axis) * tg.axis_step, (tg.period, tg.n_axis))
        t = tg.axis
        return t[None, :] - t[:, None]

    def gap_field(self) -> np.ndarray:
        """t_j - t_i broadcast to the shape of ``data``."""
        g = self.time_gap()
        if self.stationary:
            return g.reshape(g.shape + (1,) * self.sgrid.dim)
        return g[:, None, :, None]

    def valid_mask(self) -> np.ndarray:
        """Entries of ``data`` that correspond to a forward pair on the axis."""
        tg = self.tgrid
        if self.stationary:
            p = np.arange(tg.period)[:, None]
            lag = np.arange(tg.n_axis)[None, :]
            m = (lag >= 1) & (p + lag <= tg.n_axis - 1)
            return np.broadcast_to(m.reshape(m.shape + (1,) * self.sgrid.dim), self.data.shape)
        m = np.triu(np.ones((tg.n_axis, tg.n_axis), dtype=bool), k=1)
        return np.broadcast_to(m[:, None, :, None], self.data.shape)

    def descriptor(self) -> dict:
        return {"tgrid": self.tgrid.descriptor(), "sgrid": self.sgrid.descriptor(),
                "stationary": self.stationary, "signed": self.signed}


@dataclass(frozen=True, eq=False)
class SpatialJumpKernel:
    """Instantaneous jump kernel ``j(z, w)``; translation-invariant ones keep
    only the profile ``g`` (FFT order) with ``j(z, w) = g(w - z)``."""

    sgrid: SpaceGrid
    profile: np.ndarray | None = None
    matrix: np.ndarray | None = None
    signed: bool = False
    uid: int = field(default_factory=lambda: next(_uids), init=False)

    def __post_init__(self):
        if (self.profile is None) == (self.matrix is None):
            raise InvalidArgument("give exactly one of profile or matrix")
        if self.profile is not None:
            v = np.ascontiguousarray(self.profile, dtype=float)
            if v.shape != self.sgrid.shape:
                raise InvalidArgument(f"profile shape {v.shape} does not match grid {self.sgrid.shape}")
            name = "profile"
        else:
            v = np.ascontiguousarray(self.matrix, dtype=float)
            if v.shape != (self.sgrid.size, self.sgrid.size):
                raise InvalidArgument(f"jump matrix shape {v.shape} invalid")
            name = "matrix"
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("jump kernel values must be finite")
        if not self.signed and np.any(v < 0):
            raise InvalidArgument("jump kernel must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, name, v)

    @property
    def translation_invariant(self) -> bool:
        return self.profile is not None

    @cached_property
    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return self.profile.reshape(-1)[displacement_index(self.sgrid)]

    @cached_property
    def profile_spectrum(self) -> np.ndarray:
        return np.fft.rfftn(self.profile).reshape(-1)

    def is_zero(self) -> bool:
        v = self.profile if self.profile is not None else self.matrix
        return not np.any(v)

    def scaled(self, factor: float) -> "SpatialJumpKernel":
        if self.profile is not None:
            return SpatialJumpKernel(self.sgrid, profile=factor * self.profile, signed=self.signed or factor < 0)
        return SpatialJumpKernel(self.sgrid, matrix=factor * self.matrix, signed=self.signed or factor < 0)


def jump_from_profile(sgrid: SpaceGrid, profile) -> SpatialJumpKernel:
    return SpatialJumpKernel(sgrid, profile=np.asarray(profile, dtype=float))


def jump_from_matrix(sgrid: SpaceGrid, matrix) -> SpatialJumpKernel:
    return SpatialJumpKernel(sgrid, matrix=np.asarray(matrix, dtype=float))


def zero_jump(sgrid: SpaceGrid) -> SpatialJumpKernel:
    return SpatialJumpKernel(sgrid, profile=np.zeros(sgrid.shape))


def identity_jump(sgrid: SpaceGrid) -> SpatialJumpKernel:
    """Lattice delta: 1/cell_volume at zero displacement."""
    g = np.zeros(sgrid.shape)
    g[(0,) * sgrid.dim] = 1.0 / sgrid.cell_volume
    return SpatialJumpKernel(sgrid, profile=g)


def delayed_jump(tgrid: TimeGrid, sgrid: SpaceGrid, matrix, delay_density) -> ForwardKernel:
    """Time-delayed jump J(s, x, dt dy) = j(x, y) phi(t - s) dt dy as a dense
    forward kernel; compose it with K for the products KJ, KJK."""
    j = np.asarray(matrix, dtype=float)
    if j.shape != (sgrid.size, sgrid.size):
        raise InvalidArgument(f"jump matrix must be {(sgrid.size, sgrid.size)}, got {j.shape}")
    t = tgrid.axis
    gap = t[None, :] - t[:, None]
    phi = np.where(gap > 0, np.vectorize(delay_density, otypes=[float])(np.maximum(gap, 0.0)), 0.0)
    return ForwardKernel(tgrid, sgrid, phi[:, None, :, None] * j[None, :, None, :])


def zero_kernel(tgrid: TimeGrid, sgrid: SpaceGrid, stationary: bool = True) -> ForwardKernel:
    if stationary:
        return ForwardKernel(tgrid, sgrid, np.zeros((tgrid.period, tgrid.n_axis) + sgrid.shape), stationary=True)
    T, N = tgrid.n_axis, sgrid.size
    return ForwardKernel(tgrid, sgrid, np.zeros((T, N, T, N)))


def _check_grids(K: ForwardKernel, other) -> None:
    if isinstance(other, ForwardKernel) and K.tgrid != other.tgrid:
        raise InvalidArgument(f"time grid mismatch: {K.tgrid} vs {other.tgrid}")
    if K.sgrid != other.sgrid:
        raise InvalidArgument(f"space grid mismatch: {K.sgrid} vs {other.sgrid}")


def _from_spectra(K: ForwardKernel, spec: np.ndarray, signed: bool) -> ForwardKernel:
    sg = K.sgrid
    rshape = sg.shape[:-1] + (sg.n_per_dim // 2 + 1,)
    spec = spec.reshape(spec.shape[:2] + rshape)
    axes = tuple(range(2, 2 + sg.dim))
    data = np.fft.irfftn(spec, s=sg.shape, axes=axes)
    data[:, 0] = 0.0
    if not signed:
        # rounding noise of the FFT round trip; genuine negatives are caught by validation
        top = float(np.max(np.abs(data), initial=0.0))
        small = (data < 0) & (data >= -NEG_TOL * top)
        data[small] = 0.0
    return ForwardKernel(K.tgrid, sg, data, stationary=True, signed=signed)


def compose(K: ForwardKernel, Kp: ForwardKernel) -> ForwardKernel:
    """(K Kp)(i,x,j,y) = sum_{i<m<j} w_m sum_z K(i,x,m,z) Kp(m,z,j,y) cell."""
    _check_grids(K, Kp)
    tg, sg = K.tgrid, K.sgrid
    signed = K.signed or Kp.signed
    if K.stationary and Kp.stationary:
        spec = _backend.lag_convolve(K.spectra, Kp.spectra, np.ascontiguousarray(tg.phase_weights),
                                     sg.cell_volume)
        return _from_spectra(K, spec, signed)
    data = _backend.dense_compose(np.ascontiguousarray(K.dense_data), np.ascontiguousarray(Kp.dense_data),
                                  np.ascontiguousarray(tg.weights), sg.cell_volume)
    return ForwardKernel(tg, sg, data, signed=signed)


def apply_jump(K: ForwardKernel, J: SpatialJumpKernel) -> ForwardKernel:
    """(KJ)(i,x,j,y) = sum_z K(i,x,j,z) j(z,y) cell (no time integral)."""
    _check_grids(K, J)
    sg = K.sgrid
    signed = K.signed or J.signed
    if K.stationary and J.translation_invariant:
        spec = K.spectra * J.profile_spectrum[None, None, :] * sg.cell_volume
        return _from_spectra(K, spec, signed)
    data = np.einsum("axbz,zy->axby", K.dense_data, J.dense, optimize=True) * sg.cell_volume
    return ForwardKernel(K.tgrid, sg, data, signed=signed)


def kjk(K: ForwardKernel, J: SpatialJumpKernel) -> ForwardKernel:
    return compose(apply_jump(K, J), K)


def j_norm(J: SpatialJumpKernel) -> float:
    """max(sup_z int j(z,w) dw, sup_w int j(z,w) dz)."""
    cell = J.sgrid.cell_volume
    if J.translation_invariant:
        return float(np.sum(np.abs(J.profile)) * cell)
    m = np.abs(J.matrix)
    return float(max(m.sum(axis=1).max(), m.sum(axis=0).max()) * cell)


def lemma1_defect(K: ForwardKernel, J: SpatialJumpKernel, n: int) -> float:
    """max_m |K_n - K_{n-1-m} J K_m| / max |K_n| (normwise relative)."""
    from .perturb import series_term

    if n < 1:
        raise InvalidArgument("n must be >= 1")
    Kn = series_term(K, J, n)
    scale = Kn.max_abs()
    worst = 0.0
    for m in range(n):
        other = compose(apply_jump(series_term(K, J, n - 1 - m), J), series_term(K, J, m))
        a, b, _ = Kn._aligned(other)
        worst = max(worst, float(np.max(np.abs(a - b), initial=0.0)))
    return worst / scale if scale > 0 else worst


# -- binary layout ----------------------------------------------------------
MAGIC = b"KPK1"


def save_kernel(path, K: ForwardKernel) -> None:
    """Header: magic, uint32 LE length, JSON grid descriptors; payload: row-major float64 LE."""
    header = dict(K.descriptor(), shape=list(K.data.shape), dtype="<f8")
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(np.ascontiguousarray(K.data, dtype="<f8").tobytes())


def load_kernel(path) -> ForwardKernel:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise InvalidArgument(f"{path}: not a kernel file")
    (hl,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hl])
    data = np.frombuffer(raw[8 + hl:], dtype="<f8").reshape(header["shape"]).astype(float)
    tg = TimeGrid(**header["tgrid"])
    sg = SpaceGrid(**header["sgrid"])
    return ForwardKernel(tg, sg, data, stationary=header["stationary"], signed=header["signed"])
