import numpy as np
import pytest

from kperturb import analysis
from kperturb.errors import AliasingError, InvalidArgument
from kperturb.grid import ScalarField, SpaceGrid, TimeGrid
from kperturb.kernelalg import j_norm, zero_jump
from kperturb.perturb import QFunction, perturbation_series, signed_series, verify_smallness
from kperturb.stable import StableParams, stable_density_grid, stable_kernel


def test_epsilon_jump_profile(small_sgrid):
    spec = analysis.EpsilonJumpSpec(0.01, 1.0)
    g = spec.profile(small_sgrid)
    r = small_sgrid.displacement_radius
    assert g[0] == pytest.approx(0.01 * small_sgrid.spacing ** -2)
    assert np.all(g[r > small_sgrid.half_width / 2] == 0)
    assert np.array_equal(g, g[(-np.arange(g.size)) % g.size])  # j(z, w) = j(w, z)
    with pytest.raises(InvalidArgument):
        analysis.EpsilonJumpSpec(-1.0, 1.0)
    with pytest.raises(InvalidArgument):
        analysis.EpsilonJumpSpec(0.1, 1.0, delta=0.0)


def test_condition_defect_trivial_and_monotone(cauchy_kernel):
    K = cauchy_kernel
    assert analysis.condition_defect(K, zero_jump(K.sgrid), 0.0, 0.0) == 0.0
    J = analysis.EpsilonJumpSpec(0.05, 1.0).build(K.sgrid)
    d = [analysis.condition_defect(K, J, eta, c) for eta, c in ((0.0, 0.0), (0.0, 1.0), (0.05, 1.0), (0.1, 5.0))]
    assert all(b <= a for a, b in zip(d, d[1:]))


def test_lemma_constants(cauchy_kernel):
    K = cauchy_kernel
    for eps in (0.001, 0.01):
        lc = analysis.smallness_constants(K, analysis.EpsilonJumpSpec(eps, 1.0))
        assert lc.eta == pytest.approx(9 * eps)
        assert lc.defect <= 1e-6
        assert lc.j_norm > 0 and lc.c >= 0
        assert lc.c == pytest.approx((lc.c1 + 2.0) * lc.j_norm)


def test_minimal_eta_linear_in_eps(cauchy_kernel):
    K = cauchy_kernel
    etas = [analysis.minimal_eta(K, analysis.EpsilonJumpSpec(e, 1.0).build(K.sgrid)) for e in (0.001, 0.01, 0.1)]
    ratios = [eta / e for eta, e in zip(etas, (0.001, 0.01, 0.1))]
    assert max(ratios) / min(ratios) <= 2.0


def _cor_instance(K, eps):
    J = analysis.EpsilonJumpSpec(eps, 1.0).build(K.sgrid)
    eta, c = verify_smallness(K, J)
    q = QFunction(c)
    return perturbation_series(K, J, q, eta, 1e-10), signed_series(K, J, q, eta, 1e-10), eta, c


def test_two_sided_comparability(cauchy_kernel):
    K = cauchy_kernel
    P, M, eta, c = _cor_instance(K, 0.0)
    r0 = analysis.corollary52_check(K, P, M, eta, c)
    assert (r0.ratio_tilde_max, r0.ratio_minus_max, r0.ratio_minus_min) == (1.0, 1.0, 1.0)
    P, M, eta, c = _cor_instance(K, 0.01)
    r = analysis.corollary52_check(K, P, M, eta, c)
    assert max(r.defects) <= 1e-6
    # symmetric jumps: two-sided comparability, p~ stays within a bounded factor of p
    assert 1.0 <= r.ratio_tilde_max < 2.0 and 0.5 < r.ratio_minus_min <= 1.0


def test_fractional_laplacian_examples():
    g = SpaceGrid(1, np.pi, 16)
    zero = ScalarField(g, np.zeros(16))
    assert not np.any(analysis.fractional_laplacian(zero, 1.0).values)
    x = g.coords_1d
    for k in (1, 3):
        wave = np.cos(k * x)  # lattice plane wave (real part); frequency k on the torus [-pi, pi)
        out = analysis.fractional_laplacian(ScalarField(g, wave), 1.5).values
        assert np.allclose(out, -(k ** 1.5) * wave, atol=1e-12)
    with pytest.raises(InvalidArgument):
        analysis.fractional_laplacian(zero, 2.0)


def test_fractional_laplacian_imaginary_guard():
    g = SpaceGrid(1, 1.0, 8)
    with pytest.raises(AliasingError):
        analysis.fractional_laplacian_values(np.exp(1j * np.arange(8) * 0.7), g, 1.0)


def test_time_derivative_matches_generator():
    g = SpaceGrid(1, 50.0, 2048)
    p = StableParams(1.0)
    dt = 1e-4
    dp = (stable_density_grid(p, g, 1 + dt, periodic=True).values
          - stable_density_grid(p, g, 1 - dt, periodic=True).values) / (2 * dt)
    gen = analysis.fractional_laplacian(stable_density_grid(p, g, 1.0, periodic=True).field, 1.0).values
    assert np.max(np.abs(dp - gen)) <= 1e-6


def test_test_functions_support():
    tg, sg = TimeGrid(0.0, 1.0, 16), SpaceGrid(1, 50.0, 2048)
    fns = analysis.standard_test_functions(tg)
    assert [f.name for f in fns] == ["centred", "shifted", "moving"]
    for f in fns:
        f.check_support(tg, sg)
        v = f.values(sg, tg.axis)
        assert np.max(v) == pytest.approx(1.0, abs=0.05)
    with pytest.raises(InvalidArgument):
        fns[0].check_support(tg, SpaceGrid(1, 4.0, 64))


def test_fundamental_solution_residual():
    sg = SpaceGrid(1, 50.0, 2048)
    res = []
    for n in (32, 64):
        tg = TimeGrid(0.0, 1.0, n)
        K = stable_kernel(StableParams(1.0), tg, sg)
        phi = analysis.standard_test_functions(tg)[0]
        res.append(analysis.fundamental_solution_residual(K, None, phi, analysis.default_fundsol_point(tg),
                                                          0.0, 1.0))
    assert res[0] <= 5e-2
    assert res[0] / res[1] >= 1.8


def test_fundamental_solution_zero_phi_and_guards():
    tg, sg = TimeGrid(0.0, 1.0, 16), SpaceGrid(1, 50.0, 2048)
    K = stable_kernel(StableParams(1.0), tg, sg)
    zero = analysis.FractionalTestFunction("zero", lambda t, mesh: np.zeros_like(mesh[0]), 1.0)
    assert analysis.fundamental_solution_residual(K, None, zero, 1, 0.0, 1.0) == 0.0
    phi = analysis.standard_test_functions(tg)[0]
    with pytest.raises(InvalidArgument):
        analysis.fundamental_solution_residual(K, None, phi, 12, 0.0, 1.0)


def test_perturbed_residual_same_order():
    sg = SpaceGrid(1, 50.0, 2048)
    tg = TimeGrid(0.0, 1.0, 32)
    K = stable_kernel(StableParams(1.0), tg, sg)
    J = analysis.EpsilonJumpSpec(0.01, 1.0).build(sg)
    eta, c = verify_smallness(K, J)
    P = perturbation_series(K, J, QFunction(c), eta, 1e-10)
    phi = analysis.standard_test_functions(tg)[1]
    s = analysis.default_fundsol_point(tg)
    base = analysis.fundamental_solution_residual(K, None, phi, s, 0.0, 1.0)
    pert = analysis.fundamental_solution_residual(P, J, phi, s, 0.0, 1.0)
    assert pert <= 5e-2 and 0.2 <= pert / base <= 5
    assert j_norm(J) > 0


def test_epsilon_scan_frontier(cauchy_kernel):
    out = analysis.epsilon_scan(cauchy_kernel, [0.0, 0.01, 100.0], 1.0)
    assert [r["certified"] for r in out["rows"]] == [True, True, False]
    assert out["frontier"] == 0.01
    assert out["rows"][0]["eta"] == 0.0
