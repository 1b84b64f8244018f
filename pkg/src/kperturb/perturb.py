"""Perturbation series K~ = sum_n (KJ)^n K with certified truncation, the
bound verifiers, signed (-J) perturbations and Chapman-Kolmogorov checks."""
from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument, NoConvergence, UnsupportedPerturbation
from .kernelalg import NEG_TOL, ForwardKernel, SpatialJumpKernel, apply_jump, compose, j_norm

N_MAX = 200
SUPPORT_FLOOR = 1e-300
VERIFY_TOL = 1e-9  # relative slack when flagging a supplied (eta, c) as verified


@dataclass(frozen=True)
class QFunction:
    """Q(u, v) = c (v - u)."""

    c: float
    kind: str = "linear"

    def __post_init__(self):
        if self.kind != "linear":
            raise InvalidArgument(f"unsupported Q kind {self.kind!r}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise InvalidArgument(f"c must be finite and >= 0, got {self.c}")

    def __call__(self, u, v):
        return self.c * (np.asarray(v, dtype=float) - np.asarray(u, dtype=float))

    def of_gap(self, gap):
        return self.c * np.asarray(gap, dtype=float)

    def superadditivity_defect(self, u, r, v) -> float:
        """max (Q(u,r) + Q(r,v) - Q(u,v))^+ over the given triples."""
        d = self(u, r) + self(r, v) - self(u, v)
        return float(np.max(np.maximum(d, 0.0), initial=0.0))


@dataclass(frozen=True, eq=False)
class BoundCertificate:
    eta: float
    q: QFunction
    n_terms: int
    tail_bound_field: np.ndarray
    rel_tol: float
    verified: bool
    worst_ratios: dict = field(default_factory=dict)

    @property
    def tail_max(self) -> float:
        return float(np.max(self.tail_bound_field, initial=0.0))

    def to_dict(self) -> dict:
        return {"eta": self.eta, "c": self.q.c, "n_terms": self.n_terms, "rel_tol": self.rel_tol,
                "verified": self.verified, "tail_max": self.tail_max,
                "worst_ratios": dict(self.worst_ratios)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True, eq=False)
class PerturbedKernel:
    base: ForwardKernel
    series_sum: ForwardKernel
    certificate: BoundCertificate
    signed: bool = False
    report: dict = field(default_factory=dict)


# -- series terms -----------------------------------------------------------
_MEMO: "OrderedDict[tuple[int, int], list[ForwardKernel]]" = OrderedDict()
_MEMO_PAIRS = 8
_memo_lock = threading.Lock()


def clear_cache() -> None:
    with _memo_lock:
        _MEMO.clear()


def series_term(K: ForwardKernel, J: SpatialJumpKernel, n: int) -> ForwardKernel:
    """K_0 = K, K_n = K_{n-1} J K; memoized per (K, J)."""
    if int(n) != n or n < 0:
        raise InvalidArgument(f"n must be a nonnegative integer, got {n}")
    if K.sgrid != J.sgrid:
        raise InvalidArgument("space grid mismatch between K and J")
    key = (K.uid, J.uid)
    with _memo_lock:
        terms = _MEMO.get(key)
        if terms is None:
            terms = [K]
            _MEMO[key] = terms
            while len(_MEMO) > _MEMO_PAIRS:
                _MEMO.popitem(last=False)
        else:
            _MEMO.move_to_end(key)
    while len(terms) <= n:
        nxt = compose(apply_jump(terms[-1], J), K)
        with _memo_lock:
            if len(terms) <= n:
                terms.append(nxt)
    return terms[n]


# -- analytic bounds --------------------------------------------------------
def bound_factor(eta, Q):
    """(1/(1-eta))^{1+Q/eta} for eta > 0, e^Q for eta = 0."""
    eta = np.asarray(eta, dtype=float)
    Q = np.asarray(Q, dtype=float)
    safe = np.where(eta > 0, eta, 1.0)
    out = np.where(eta > 0, np.exp(-(1.0 + Q / safe) * np.log1p(-np.minimum(eta, 1 - 1e-16))), np.exp(Q))
    return out if out.ndim else float(out)


def product_bound(eta: float, Q, n: int):
    """prod_{l<=n} (eta + Q/l)."""
    Q = np.asarray(Q, dtype=float)
    out = np.ones_like(Q)
    for l in range(1, n + 1):
        out = out * (eta + Q / l)
    return out


def tail_after(eta: float, Q, N: int, horizon: int = 2000):
    """Upper bound of sum_{n>N} prod_{l<=n}(eta + Q/l), elementwise in Q.

    Terms are summed exactly up to ``horizon``; the rest is bounded by a
    geometric series (ratios decrease in l).  ``inf`` if that bound is unusable.
    """
    Q = np.asarray(Q, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):  # divergent tails overflow to inf by design
        a = product_bound(eta, Q, N)
        total = np.zeros_like(Q)
        for l in range(N + 1, horizon + 1):
            a = a * (eta + Q / l)
            total = total + a
            r = eta + Q / (l + 1)
            if np.all((r < 1) & (a * r / np.maximum(1 - r, 1e-300) <= 1e-3 * np.maximum(total, 1e-300))):
                break
        r = eta + Q / (l + 1)
        rem = np.where(r < 1, a * r / np.where(r < 1, 1 - r, 1.0), np.inf)
        return total + rem


def _choose_n(eta: float, Q: np.ndarray, rel_tol: float) -> tuple[int, np.ndarray]:
    for N in range(N_MAX + 1):
        tail = tail_after(eta, Q, N)
        if float(np.max(tail, initial=0.0)) <= rel_tol:
            return N, tail
    raise NoConvergence(f"series tail above {rel_tol} after N_max={N_MAX} terms (eta={eta}, max Q={Q.max():.3g})")


def _gap_q(K: ForwardKernel, q: QFunction) -> np.ndarray:
    gap = np.maximum(np.asarray(K.time_gap(), dtype=float), 0.0)
    return q.of_gap(gap)


def _q_field(K: ForwardKernel, q: QFunction) -> np.ndarray:
    return q.of_gap(np.maximum(K.gap_field(), 0.0))


def _support(K: ForwardKernel) -> np.ndarray:
    return K.valid_mask() & (K.data > SUPPORT_FLOOR)


def _pos_ratio(num: np.ndarray, den: np.ndarray, mask: np.ndarray) -> float:
    """max (num/den)^+ over mask."""
    if not np.any(mask):
        return 0.0
    return float(max(0.0, np.max(num[mask] / den[mask])))


def estj1_defect(K: ForwardKernel, J: SpatialJumpKernel, eta: float, q: QFunction) -> float:
    K1 = series_term(K, J, 1)
    sup = _support(K)
    return _pos_ratio(K1.data - (eta + _q_field(K, q)) * K.data, K.data, sup)


def _check_eta(eta: float) -> None:
    if not (0.0 <= eta < 1.0):
        raise InvalidArgument(f"eta must lie in [0, 1), got {eta}")


def _series(K, J, q, eta, rel_tol, sign):
    _check_eta(eta)
    if not rel_tol > 0:
        raise InvalidArgument("rel_tol must be positive")
    if J.is_zero():
        N, tail = 0, np.zeros_like(_gap_q(K, q))
    else:
        N, tail = _choose_n(eta, _gap_q(K, q), rel_tol)
    verified = J.is_zero() or estj1_defect(K, J, eta, q) <= VERIFY_TOL
    total = np.array(K.data, dtype=float)
    for n in range(1, N + 1):
        total = total + (sign ** n) * series_term(K, J, n).data
    series_sum = ForwardKernel(K.tgrid, K.sgrid, total, stationary=K.stationary, signed=sign < 0)
    cert = BoundCertificate(float(eta), q, N, tail, float(rel_tol), bool(verified))
    return series_sum, cert


def perturbation_series(K: ForwardKernel, J: SpatialJumpKernel, q: QFunction, eta: float,
                        rel_tol: float = 1e-8) -> PerturbedKernel:
    series_sum, cert = _series(K, J, q, eta, rel_tol, +1)
    return PerturbedKernel(K, series_sum, cert, signed=False)


def signed_series(K: ForwardKernel, J: SpatialJumpKernel, q: QFunction, eta: float,
                  rel_tol: float = 1e-8) -> PerturbedKernel:
    """Alternating series sum_n (-1)^n K_n, i.e. the perturbation of K by -J."""
    series_sum, cert = _series(K, J, q, eta, rel_tol, -1)
    Qf = np.broadcast_to(_q_field(K, q), K.data.shape)
    sup = _support(K)
    ratio = np.where(sup, series_sum.data / np.where(sup, K.data, 1.0), np.nan)
    lower_zone = sup & (Qf <= (1 - eta) / 2)
    upper_zone = sup & (Qf <= 2 * (1 - eta))
    report = {
        "min_ratio": float(np.nanmin(ratio)) if np.any(sup) else 1.0,
        "max_ratio": float(np.nanmax(ratio)) if np.any(sup) else 1.0,
        "lower_zone_entries": int(lower_zone.sum()),
        "lower_zone_min_ratio": float(ratio[lower_zone].min()) if np.any(lower_zone) else None,
        "upper_zone_entries": int(upper_zone.sum()),
        "upper_zone_max_ratio": float(ratio[upper_zone].max()) if np.any(upper_zone) else None,
        "min_value": float(series_sum.data.min(initial=0.0)),
    }
    report["lower_ok"] = report["lower_zone_min_ratio"] is None or \
        report["lower_zone_min_ratio"] >= (1 - eta) / 2 - 1e-6
    report["upper_ok"] = report["upper_zone_max_ratio"] is None or report["upper_zone_max_ratio"] <= 1 + 1e-6
    return PerturbedKernel(K, series_sum, cert, signed=True, report=report)


# -- smallness fit ----------------------------------------------------------
@dataclass(frozen=True)
class SmallnessFit:
    """Fitted constants of K J K <= (eta + c (t - s)) K.

    ``eta`` is the clipped least-squares intercept of the per-lag maximum of
    R = K_1/K against t - s; ``c`` is then the least slope making the bound
    hold at every entry.  ``scan`` holds the geometric c-scan.
    """

    eta: float
    c: float
    off_support: int
    j_norm: float
    scan_c: np.ndarray
    scan_eta: np.ndarray
    lags: np.ndarray
    r_max: np.ndarray

    def __iter__(self):
        return iter((self.eta, self.c))

    @property
    def certified(self) -> bool:
        return self.eta < 1.0

    def extreme_fits(self) -> list[tuple[float, float]]:
        """(eta, c) at the two ends of the scan, plus the least-squares fit."""
        if len(self.scan_c) == 0:
            return [(self.eta, self.c)]
        return [(float(self.scan_eta[0]), float(self.scan_c[0])),
                (float(self.scan_eta[-1]), float(self.scan_c[-1])),
                (self.eta, self.c)]


def ratio_field(K: ForwardKernel, J: SpatialJumpKernel):
    """R = K_1/K on the support, the support mask, and the off-support count."""
    K1 = series_term(K, J, 1)
    valid = K.valid_mask()
    sup = valid & (K.data > SUPPORT_FLOOR)
    top = K1.max_abs()
    off = valid & ~sup & (K1.data > NEG_TOL * top)
    R = np.where(sup, K1.data / np.where(sup, K.data, 1.0), 0.0)
    return R, sup, int(off.sum()), K1


def verify_smallness(K: ForwardKernel, J: SpatialJumpKernel, q_family: str = "linear",
                     n_scan: int = 64) -> SmallnessFit:
    if q_family != "linear":
        raise InvalidArgument(f"unsupported Q family {q_family!r}")
    nj = j_norm(J)
    if J.is_zero():
        z = np.zeros(0)
        return SmallnessFit(0.0, 0.0, 0, 0.0, z, z, z, z)
    R, sup, off, K1 = ratio_field(K, J)
    if off:
        raise UnsupportedPerturbation(f"K J K is positive at {off} entries where K vanishes")
    gap = np.broadcast_to(K.gap_field(), K.data.shape)
    # per time gap: maximum of R over space and start families
    gaps = np.asarray(K.time_gap(), dtype=float)
    Rm = np.where(sup, R, -np.inf)
    if K.stationary:
        per = Rm.reshape(Rm.shape[0], Rm.shape[1], -1).max(axis=(0, 2))
        lag_gap = gaps[0]
    else:
        per_pair = Rm.max(axis=(1, 3))
        lag_gap = np.unique(np.round(gaps[np.triu_indices_from(gaps, 1)], 14))
        per = np.array([per_pair[np.isclose(gaps, g) & np.triu(np.ones_like(gaps, bool), 1)].max()
                        for g in lag_gap])
    nz = np.isfinite(per) & (per > 0)
    lags, r_max = lag_gap[nz], per[nz]
    if lags.size >= 2:
        slope, intercept = np.polyfit(lags, r_max, 1)
    elif lags.size == 1:
        intercept = 0.0
    else:
        intercept = 0.0
    eta = float(max(intercept, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(sup & (gap > 0), np.maximum(R - eta, 0.0) / np.where(gap > 0, gap, 1.0), 0.0)
    c = float(need.max(initial=0.0))
    if nj > 0:
        scan_c = np.geomspace(nj / 100, 100 * nj, n_scan)
    else:
        scan_c = np.zeros(1)
    scan_eta = np.array([float(np.max(np.where(sup, R - cc * gap, 0.0), initial=0.0)) for cc in scan_c])
    scan_eta = np.maximum(scan_eta, 0.0)
    return SmallnessFit(eta, c, off, nj, scan_c, scan_eta, lags, r_max)


# -- verifiers --------------------------------------------------------------
def verify_term_recursion(K, J, eta: float, q: QFunction, n_max: int = 5) -> float:
    """max_n max (K_n - K_{n-1}(eta + Q/n))^+ / K_{n-1}."""
    Qf = _q_field(K, q)
    worst = 0.0
    for n in range(1, n_max + 1):
        prev, cur = series_term(K, J, n - 1), series_term(K, J, n)
        sup = _support(prev)
        worst = max(worst, _pos_ratio(cur.data - prev.data * (eta + Qf / n), prev.data, sup))
    return worst


def verify_product_bound(K, J, eta: float, q: QFunction, n_max: int = 5) -> float:
    """max_n max (K_n - K prod_{l<=n}(eta + Q/l))^+ / K."""
    Qf = _q_field(K, q)
    sup = _support(K)
    worst = 0.0
    for n in range(1, n_max + 1):
        cur = series_term(K, J, n)
        worst = max(worst, _pos_ratio(cur.data - K.data * product_bound(eta, Qf, n), K.data, sup))
    return worst


def verify_bound(P: PerturbedKernel) -> float:
    """max K~ / (K bound_factor(eta, Q)) over the support."""
    K, cert = P.base, P.certificate
    sup = _support(K)
    if not np.any(sup):
        return 0.0
    env = K.data * bound_factor(cert.eta, _q_field(K, cert.q))
    return float(np.max(P.series_sum.data[sup] / env[sup]))


def perturbation_formula_defect(P: PerturbedKernel, K: ForwardKernel, J: SpatialJumpKernel) -> float:
    """max |K~ - K - s K~ J K| / K, s = +1 (or -1 for the signed series)."""
    tail = compose(apply_jump(P.series_sum, J), K)
    s = -1.0 if P.signed else 1.0
    D = P.series_sum.data - K.data - s * tail.data
    sup = _support(K)
    if not np.any(sup):
        return 0.0
    return float(np.max(np.abs(D[sup]) / K.data[sup]))


def certificate_report(P: PerturbedKernel, J: SpatialJumpKernel, n_max: int = 5) -> BoundCertificate:
    """The certificate of ``P`` with its worst ratios filled in."""
    K, c = P.base, P.certificate
    ratios = {
        "estJ1": estj1_defect(K, J, c.eta, c.q),
        "estJn": verify_term_recursion(K, J, c.eta, c.q, n_max),
        "product": verify_product_bound(K, J, c.eta, c.q, n_max),
        "envelope": verify_bound(P),
        "pf_defect": perturbation_formula_defect(P, K, J),
    }
    return replace(c, worst_ratios=ratios)


# -- Chapman-Kolmogorov -----------------------------------------------------
def _node_triples(K: ForwardKernel, triples=None):
    tg = K.tgrid
    if triples is None:
        n = tg.n_steps
        triples = [(a, m, b) for a in range(n + 1) for m in range(a + 1, n + 1) for b in range(m + 1, n + 1)]
    return [(tg.node_index(a), tg.node_index(m), tg.node_index(b)) for a, m, b in triples]


def _ck_sum_defect(left_terms, right_terms, target, triples, window) -> float:
    """max over triples of |sum_k left_k(i,m) o right_k(m,j) - target(i,j)| / target(i,j)."""
    K = target
    sg = K.sgrid
    cell = sg.cell_volume
    worst = 0.0
    if all(T.stationary for T in (*left_terms, *right_terms, target)):
        P = K.tgrid.period
        wmask = None if window is None else (sg.displacement_radius <= window)
        axes = tuple(range(sg.dim))
        done = set()
        for i, m, j in triples:
            key = (i % P, m - i, m % P, j - m)
            if key in done:
                continue
            done.add(key)
            acc = 0.0
            for Lt, Rt in zip(left_terms, right_terms):
                acc = acc + np.fft.rfftn(Lt.data[i % P, m - i], axes=axes) * np.fft.rfftn(Rt.data[m % P, j - m], axes=axes)
            comp = np.fft.irfftn(acc, s=sg.shape, axes=axes) * cell
            tgt = target.data[i % P, j - i]
            sup = tgt > SUPPORT_FLOOR
            if wmask is not None:
                sup &= wmask
            if np.any(sup):
                worst = max(worst, float(np.max(np.abs(comp[sup] - tgt[sup]) / tgt[sup])))
        return worst
    for i, m, j in triples:
        comp = sum(Lt.block(i, m) @ Rt.block(m, j) for Lt, Rt in zip(left_terms, right_terms)) * cell
        tgt = target.block(i, j)
        sup = tgt > SUPPORT_FLOOR
        if np.any(sup):
            worst = max(worst, float(np.max(np.abs(comp[sup] - tgt[sup]) / tgt[sup])))
    return worst


def chapman_defect(K: ForwardKernel, triples=None, window: float | None = None) -> float:
    """Worst relative CK defect over node triples (a < m < b).

    ``triples`` restricts to given node-index triples; ``window`` restricts
    stationary checks to displacements with |y - x| <= window.
    """
    return _ck_sum_defect([K], [K], K, _node_triples(K, triples), window)


def lemma_prop1_defect(K: ForwardKernel, J: SpatialJumpKernel, n: int, triples=None,
                       window: float | None = None) -> float:
    """Worst relative defect of sum_{m<=n} k_m(s,u) o k_{n-m}(u,t) = k_n(s,t)."""
    if n < 0:
        raise InvalidArgument("n must be >= 0")
    terms = [series_term(K, J, m) for m in range(n + 1)]
    return _ck_sum_defect(terms, terms[::-1], terms[n], _node_triples(K, triples), window)


def kernel_chapman_defect(P: PerturbedKernel, triples=None, window=None) -> float:
    return chapman_defect(P.series_sum, triples, window)


@dataclass(frozen=True)
class PropagationResult:
    bound: float
    composed_ratio: float
    direct_ratio: float

    @property
    def defect(self) -> float:
        return max(0.0, self.bound - min(self.composed_ratio, self.direct_ratio))


def propagate_lower_bound(k_tilde_minus: ForwardKernel, k: ForwardKernel, subdivision, eta: float,
                          q: QFunction) -> PropagationResult:
    """Check k~-(s,t) >= ((1-eta)/2)^n k(s,t) through the subdivision s=u_0<...<u_n=t.

    ``subdivision`` holds node indices.  ``composed_ratio`` is the worst ratio of
    the spatial composition of the k~- pieces against k(s,t); ``direct_ratio``
    compares k~-(s,t) itself.
    """
    tg = k.tgrid
    u = [int(v) for v in subdivision]
    if len(u) < 2 or any(b <= a for a, b in zip(u, u[1:])) or u[0] < 0 or u[-1] > tg.n_steps:
        raise InvalidArgument(f"invalid subdivision {subdivision}")
    for a, b in zip(u, u[1:]):
        if float(q(tg.node(a), tg.node(b))) > (1 - eta) / 2 + 1e-15:
            raise InvalidArgument(f"Q({tg.node(a)}, {tg.node(b)}) exceeds (1-eta)/2")
    n = len(u) - 1
    bound = ((1 - eta) / 2) ** n
    idx = [tg.node_index(v) for v in u]
    cell = k.sgrid.cell_volume
    comp = k_tilde_minus.block(idx[0], idx[1])
    for a, b in zip(idx[1:], idx[2:]):
        comp = comp @ k_tilde_minus.block(a, b) * cell
    tgt = k.block(idx[0], idx[-1])
    sup = tgt > SUPPORT_FLOOR
    composed = float(np.min(comp[sup] / tgt[sup]))
    direct = float(np.min(k_tilde_minus.block(idx[0], idx[-1])[sup] / tgt[sup]))
    return PropagationResult(bound, composed, direct)


# -- extrapolation ----------------------------------------------------------
def richardson(values, steps) -> np.ndarray:
    """Neville extrapolation of values(h) to h = 0 (polynomial in h)."""
    h = np.asarray(steps, dtype=float)
    T = [np.asarray(v, dtype=float) for v in values]
    n = len(T)
    for k in range(1, n):
        T = [(h[i] * T[i + 1] - h[i + k] * T[i]) / (h[i] - h[i + k]) for i in range(n - k)]
    return T[0]
