"""End-to-end acceptance checks (criteria 1-14); ``kperturb selftest`` runs them.

Every criterion returns a :class:`CriterionResult` with the measured
numbers and the pinned tolerances they were compared against.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import analysis, levy, perturb
from .grid import SpaceGrid, TimeGrid, integrate
from .kernelalg import ForwardKernel, identity_jump, jump_from_matrix
from .oracles import brute_series_term, cauchy_density, random_forward_kernel, random_jump_matrix
from .stable import StableParams, sharp_bound_ratio, scaling_defect, stable_density_grid, stable_kernel

DEFAULT_1D = (1, 50.0, 2048)
KERNEL_STEPS = 16
CK_FLOOR = 1e-10  # below this, CK defects are rounding noise and are compared against the floor


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        keys = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number:2d} {self.name} ({self.seconds:.2f}s): {keys}"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "seconds": self.seconds, "details": _jsonable(self.details)}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3e}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def space_grid(dim=1, L=50.0, n=2048) -> SpaceGrid:
    return SpaceGrid(dim, float(L), n)


@lru_cache(maxsize=8)
def _stable_kernel(alpha: float, t1: float, n_steps: int, dim=1, L=50.0, n=2048) -> ForwardKernel:
    return stable_kernel(StableParams(alpha, dim), TimeGrid(0.0, t1, n_steps), space_grid(dim, L, n))


# -- 1 --------------------------------------------------------------------------
def criterion_1() -> CriterionResult:
    t0 = time.perf_counter()
    g = space_grid()
    x = g.coords_1d
    inside = np.abs(x) <= 10
    errs = []
    for t in (0.5, 1.0, 2.0):
        v = stable_density_grid(StableParams(1.0), g, t).values
        exact = cauchy_density(x[inside], t)
        errs.append(float(np.max(np.abs(v[inside] - exact) / exact)))
    secs = time.perf_counter() - t0
    ok = max(errs) <= 1e-6 and secs < 1.0
    return CriterionResult(1, "Cauchy oracle", ok, {"rel_err": errs, "tol": 1e-6, "runtime_limit_s": 1.0}, secs)


# -- 2 --------------------------------------------------------------------------
def criterion_2() -> CriterionResult:
    g = space_grid()
    defects = {}
    for a in (0.5, 1.0, 1.5):
        for t in (0.25, 4.0):
            defects[f"a={a},t={t}"] = scaling_defect(StableParams(a), g, t)
    worst = max(defects.values())
    return CriterionResult(2, "scaling identity", worst <= 1e-6, {"worst": worst, "tol": 1e-6})


# -- 3 --------------------------------------------------------------------------
def criterion_3() -> CriterionResult:
    g = space_grid()
    out = {}
    ok = True
    for a in (0.5, 1.0, 1.5):
        spans = []
        for grid in (g, g.refined(2)):
            lo, hi = sharp_bound_ratio(StableParams(a), grid, 1.0, r_max=grid.half_width / 2)
            ok &= bool(np.isfinite(lo) and np.isfinite(hi) and lo > 0)
            spans.append(hi / lo)
        change = abs(spans[1] / spans[0] - 1.0)
        ok &= change <= 0.05
        out[f"a={a}"] = [spans[0], change]
    return CriterionResult(3, "sharp-bound comparability", ok, {"span,change": out, "change_tol": 0.05})


# -- 4 --------------------------------------------------------------------------
def criterion_4(seed: int = 2024) -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for rule, nx in itertools.product(("node", "midpoint"), (2, 4)):
        tg = TimeGrid(0.0, 1.0, 3, rule)  # 4 time nodes
        sg = SpaceGrid(1, 1.0, nx)
        K = random_forward_kernel(tg, sg, rng)
        J = jump_from_matrix(sg, random_jump_matrix(sg, rng))
        for n in range(4):
            fast = perturb.series_term(K, J, n).dense_data
            slow = brute_series_term(K.dense_data, J.dense, tg.weights, sg.cell_volume, n)
            scale = max(float(np.max(np.abs(slow))), 1e-300)
            worst = max(worst, float(np.max(np.abs(fast - slow))) / scale)
    secs = time.perf_counter() - t0
    return CriterionResult(4, "brute-force series oracle", worst <= 1e-12 and secs < 10,
                           {"rel_err": worst, "tol": 1e-12, "runtime_limit_s": 10.0}, secs)


# -- instances for 5, 6 -----------------------------------------------------------
def bound_instances():
    """(name, K, J) triples: stable kernels with eps-jumps, plus scaled identity jumps."""
    out = []
    for a, eps in ((1.0, 0.001), (1.0, 0.01), (1.0, 0.05), (1.5, 0.01)):
        K = _stable_kernel(a, 1.0, KERNEL_STEPS)
        out.append((f"stable a={a} eps={eps}", K, analysis.EpsilonJumpSpec(eps, a).build(K.sgrid)))
    K = _stable_kernel(1.0, 1.0, KERNEL_STEPS)
    out.append(("identity jump x0.5", K, identity_jump(K.sgrid).scaled(0.5)))
    # 2-d lattice kernels ring negative unless the shortest lag is about a cell width
    K2 = _stable_kernel(1.0, 2.0, 4, dim=2, L=5.0, n=64)
    out.append(("stable d=2 eps=0.01", K2, analysis.EpsilonJumpSpec(0.01, 1.0, dim=2).build(K2.sgrid)))
    return out


def criterion_5() -> CriterionResult:
    details = {}
    ok = abs(perturb.bound_factor(0.0, 1.0) - np.e) <= 1e-12 and abs(perturb.bound_factor(0.5, 0.5) - 4.0) <= 1e-12
    details["bound_factor(0,1)"] = perturb.bound_factor(0.0, 1.0)
    details["bound_factor(.5,.5)"] = perturb.bound_factor(0.5, 0.5)
    n_cert = 0
    worst = 0.0
    for name, K, J in bound_instances():
        fit = perturb.verify_smallness(K, J)
        if fit.eta > 0.5:
            continue
        n_cert += 1
        q = perturb.QFunction(fit.c)
        P = perturb.perturbation_series(K, J, q, fit.eta, 1e-8)
        d = [perturb.verify_term_recursion(K, J, fit.eta, q, 5),
             perturb.verify_product_bound(K, J, fit.eta, q, 5),
             max(0.0, perturb.verify_bound(P) - 1.0)]
        worst = max(worst, *d)
    ok = ok and n_cert > 0 and worst <= 1e-6
    details.update({"certified_instances": n_cert, "worst_defect": worst, "tol": 1e-6})
    return CriterionResult(5, "series bound suite", ok, details)


def criterion_6() -> CriterionResult:
    worst_excess = -np.inf
    per = {}
    for name, K, J in bound_instances():
        fit = perturb.verify_smallness(K, J)
        if fit.eta >= 1:
            continue
        P = perturb.perturbation_series(K, J, perturb.QFunction(fit.c), fit.eta, 1e-8)
        d = perturb.perturbation_formula_defect(P, K, J)
        per[name] = d
        worst_excess = max(worst_excess, d - (P.certificate.tail_max + 1e-7))
    return CriterionResult(6, "perturbation formula", bool(per) and worst_excess <= 0,
                           {"defects": per, "worst_excess_over_tail+1e-7": float(worst_excess)})


# -- 7 --------------------------------------------------------------------------
def criterion_7() -> CriterionResult:
    K = _stable_kernel(1.0, 1.0, KERNEL_STEPS)
    J = analysis.EpsilonJumpSpec(0.01, 1.0).build(K.sgrid)
    fit = perturb.verify_smallness(K, J)
    P = perturb.perturbation_series(K, J, perturb.QFunction(fit.c), fit.eta, 1e-12)
    base = perturb.chapman_defect(K)
    tilde = perturb.chapman_defect(P.series_sum)
    prop = [perturb.lemma_prop1_defect(K, J, n) for n in (1, 2)]
    K2 = _stable_kernel(1.0, 1.0, 2 * KERNEL_STEPS)
    J2 = analysis.EpsilonJumpSpec(0.01, 1.0).build(K2.sgrid)
    # same physical triples on the doubled grid
    tri = [(a, m, b) for a in range(KERNEL_STEPS + 1) for m in range(a + 1, KERNEL_STEPS + 1)
           for b in range(m + 1, KERNEL_STEPS + 1)]
    tri2 = [(2 * a, 2 * m, 2 * b) for a, m, b in tri]
    prop2 = [perturb.lemma_prop1_defect(K2, J2, n, triples=tri2) for n in (1, 2)]
    ok = base <= 2e-3
    ok &= tilde <= max(3 * base, CK_FLOOR)
    ok &= all(p <= max(2e-3, 3 * base, CK_FLOOR) for p in prop)
    ok &= all(p2 <= max(p1, CK_FLOOR) for p1, p2 in zip(prop, prop2))
    return CriterionResult(7, "Chapman-Kolmogorov closure", bool(ok),
                           {"base": base, "tilde": tilde, "closure(n=1,2)": prop, "closure_doubled": prop2,
                            "base_tol": 2e-3, "floor": CK_FLOOR})


# -- 8 --------------------------------------------------------------------------
def criterion_8() -> CriterionResult:
    K = _stable_kernel(1.0, 0.5, KERNEL_STEPS)
    J = analysis.EpsilonJumpSpec(0.01, 1.0).build(K.sgrid)
    fit = perturb.verify_smallness(K, J)
    q = perturb.QFunction(fit.c)
    M = perturb.signed_series(K, J, q, fit.eta, 1e-10)
    rep = M.report
    lo_bound = (1 - fit.eta) / 2
    ok = rep["lower_zone_entries"] > 0
    ok &= rep["lower_zone_min_ratio"] >= lo_bound - 1e-6
    # upper end of the sandwich on the same (Q <= (1-eta)/2) zone
    Qf = np.broadcast_to(q.of_gap(np.maximum(K.gap_field(), 0)), K.data.shape)
    zone = K.valid_mask() & (K.data > perturb.SUPPORT_FLOOR) & (Qf <= lo_bound)
    zone_max = float(np.max(M.series_sum.data[zone] / K.data[zone]))
    ok &= zone_max <= 1 + 1e-6
    n = K.tgrid.n_steps
    prop = perturb.propagate_lower_bound(M.series_sum, K, [0, n // 2, n], fit.eta, q)
    ok &= min(prop.composed_ratio, prop.direct_ratio) >= prop.bound - 1e-6
    return CriterionResult(8, "signed sandwich", bool(ok),
                           {"eta": fit.eta, "c": fit.c, "zone_min": rep["lower_zone_min_ratio"],
                            "zone_max": zone_max, "lower": lo_bound, "prop_bound": prop.bound,
                            "prop_composed": prop.composed_ratio, "prop_direct": prop.direct_ratio, "tol": 1e-6})


# -- 9-11 -------------------------------------------------------------------------
def _levy_spec(mass: float, center: float = 0.0, sigma: float = 1.0):
    g = space_grid()
    return levy.stable_levy_spec(StableParams(1.0), g, levy.gaussian_measure(g, mass, sigma, center))


def criterion_9() -> CriterionResult:
    worst = {"add": 0.0, "normalized": 0.0, "remove": 0.0}
    for m in (0.25, 0.5):
        spec = _levy_spec(m)
        for tau in (0.5, 1.0, 2.0):
            add = levy.meyer_add(spec, tau)
            ratio = integrate(add) / integrate(spec.rho(tau))
            worst["add"] = max(worst["add"], abs(ratio / np.exp(tau * m) - 1))
            worst["normalized"] = max(worst["normalized"], abs(integrate(levy.meyer_normalize(add, tau, m)) - 1))
            rem = levy.meyer_remove(spec, tau)
            worst["remove"] = max(worst["remove"], abs(integrate(rem) - np.exp(-tau * m)))
    return CriterionResult(9, "Meyer mass law", max(worst.values()) <= 1e-8, dict(worst, tol=1e-8))


def criterion_10() -> CriterionResult:
    res = levy.two_path_agreement(_levy_spec(0.5, center=1.0), 1.0)
    return CriterionResult(10, "two-path agreement", res["extrapolated"] <= 1e-6,
                           {"extrapolated": res["extrapolated"], "raw_finest": res["raw"], "tol": 1e-6,
                            "steps": res["steps"]})


def criterion_11(seed: int = 20240607) -> CriterionResult:
    t0 = time.perf_counter()
    spec = _levy_spec(0.5, center=1.0)
    tau = 1.0
    mc = levy.monte_carlo_oracle(spec, tau, 0.0, 10 ** 6, seed)
    an = levy.meyer_normalize(levy.meyer_add(spec, tau), tau, spec.mu.total_mass).values
    dist = float(np.max(np.abs(mc.values - an)))
    secs = time.perf_counter() - t0
    ok = dist <= 0.05 * an.max() and secs < 60
    return CriterionResult(11, "Monte-Carlo cross-check", ok,
                           {"sup_dist/max": dist / an.max(), "tol": 0.05, "seed": seed, "runtime_limit_s": 60.0}, secs)


# -- 12-14 ------------------------------------------------------------------------
def criterion_12() -> CriterionResult:
    K = _stable_kernel(1.0, 1.0, KERNEL_STEPS)
    ok = True
    consts = {}
    for eps in (0.001, 0.01):
        lc = analysis.smallness_constants(K, analysis.EpsilonJumpSpec(eps, 1.0))
        consts[f"eps={eps}"] = [lc.eta, lc.c, lc.c1, lc.defect]
        ok &= lc.defect <= 1e-6
    etas = {eps: analysis.minimal_eta(K, analysis.EpsilonJumpSpec(eps, 1.0).build(K.sgrid))
            for eps in (0.001, 0.01, 0.1)}
    slopes = [e / eps for eps, e in etas.items()]
    spread = max(slopes) / min(slopes) if min(slopes) > 0 else np.inf
    ok &= spread <= 2.0
    return CriterionResult(12, "smallness constants", bool(ok),
                           {"(eta,c,c1,defect)": consts, "eta/eps": slopes, "spread": spread,
                            "defect_tol": 1e-6, "spread_tol": 2.0})


def corollary_instance(eps: float, alpha: float = 1.0, t1: float = 1.0):
    K = _stable_kernel(alpha, t1, KERNEL_STEPS)
    J = analysis.EpsilonJumpSpec(eps, alpha).build(K.sgrid)
    fit = perturb.verify_smallness(K, J)
    q = perturb.QFunction(fit.c)
    P = perturb.perturbation_series(K, J, q, fit.eta, 1e-10)
    M = perturb.signed_series(K, J, q, fit.eta, 1e-10)
    return K, J, fit, P, M


def criterion_13() -> CriterionResult:
    K, J, fit, P, M = corollary_instance(0.01)
    r = analysis.corollary52_check(K, P, M, fit.eta, fit.c)
    K0, J0, fit0, P0, M0 = corollary_instance(0.0)
    r0 = analysis.corollary52_check(K0, P0, M0, fit0.eta, fit0.c)
    exact = (r0.ratio_tilde_max, r0.ratio_minus_max, r0.ratio_minus_min)
    ok = max(r.defects) <= 1e-6 and all(v == 1.0 for v in exact) and max(r0.defects) == 0.0
    return CriterionResult(13, "two-sided comparability", bool(ok),
                           {"eta": fit.eta, "c": fit.c, "defects": list(r.defects),
                            "ratios(eps=0)": list(exact), "tol": 1e-6})


FUNDSOL_STEPS = 32


def fundsol_sweep(eps: float = 0.01, alpha: float = 1.0, steps=(FUNDSOL_STEPS, 2 * FUNDSOL_STEPS),
                  grid=DEFAULT_1D):
    """Residuals of the weak identity for p and p~ per test function and grid."""
    dim, L, n = grid
    out = {}
    for ns in steps:
        K = _stable_kernel(alpha, 1.0, ns, dim, L, n)
        J = analysis.EpsilonJumpSpec(eps, alpha, dim).build(K.sgrid)
        fit = perturb.verify_smallness(K, J)
        P = perturb.perturbation_series(K, J, perturb.QFunction(fit.c), min(fit.eta, 0.99), 1e-10)
        s = analysis.default_fundsol_point(K.tgrid)
        for phi in analysis.standard_test_functions(K.tgrid, dim):
            out[(phi.name, "p", ns)] = analysis.fundamental_solution_residual(K, None, phi, s, 0.0, alpha)
            out[(phi.name, "p~", ns)] = analysis.fundamental_solution_residual(P, J, phi, s, 0.0, alpha)
    return out


def criterion_14() -> CriterionResult:
    n1, n2 = FUNDSOL_STEPS, 2 * FUNDSOL_STEPS
    res = fundsol_sweep()
    ok = True
    table = {}
    for name in ("centred", "shifted", "moving"):
        for kind in ("p", "p~"):
            r1, r2 = res[(name, kind, n1)], res[(name, kind, n2)]
            ratio = r1 / r2 if r2 > 0 else np.inf
            ok &= r1 <= 5e-2 and ratio >= 1.8
            table[f"{name}/{kind}"] = [r1, ratio]
    return CriterionResult(14, "fundamental solution", bool(ok),
                           {"residual,ratio": table, "residual_tol": 5e-2, "ratio_min": 1.8})


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
            11: criterion_11, 12: criterion_12, 13: criterion_13, 14: criterion_14}


def run_criterion(k: int) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        res = CRITERIA[k]()
    except Exception as exc:  # a crash is a failed criterion, reported not raised
        res = CriterionResult(k, CRITERIA[k].__name__, False, {"error": f"{type(exc).__name__}: {exc}"})
    if not res.seconds:
        res.seconds = time.perf_counter() - t0
    return res


def run_all(numbers=None, echo=None) -> list[CriterionResult]:
    out = []
    for k in numbers or sorted(CRITERIA):
        r = run_criterion(k)
        if echo:
            echo(r.line())
        out.append(r)
    perturb.clear_cache()
    _stable_kernel.cache_clear()
    return out
