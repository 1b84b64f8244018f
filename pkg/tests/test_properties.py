import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kperturb import levy
from kperturb.analysis import fractional_laplacian_values
from kperturb.grid import ScalarField, SpaceGrid, TimeGrid, integrate
from kperturb.kernelalg import ForwardKernel, apply_jump, compose, jump_from_matrix, jump_from_profile
from kperturb.perturb import QFunction, perturbation_series, series_term, signed_series
from kperturb.stable import StableParams, stable_density_grid

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
nonneg = st.floats(0.0, 10.0, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2 ** 32 - 1)


@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite), finite, finite)
def test_integrate_linear(f, g, a, b):
    grid = SpaceGrid(1, 3.0, 8)
    lhs = integrate(ScalarField(grid, a * f + b * g))
    rhs = a * integrate(ScalarField(grid, f)) + b * integrate(ScalarField(grid, g))
    scale = (abs(a) * np.abs(f).sum() + abs(b) * np.abs(g).sum()) * grid.cell_volume
    assert abs(lhs - rhs) <= 1e-12 * max(scale, 1.0)


@given(st.floats(0.3, 1.95), st.floats(0.1, 4.0))
def test_stable_density_symmetric(alpha, t):
    v = stable_density_grid(StableParams(alpha), SpaceGrid(1, 10.0, 128), t, periodic=True).values
    assert np.array_equal(v[1:], v[1:][::-1])


def _dense(seed, T=3, N=3, rule="node"):
    rng = np.random.default_rng(seed)
    tg, sg = TimeGrid(0.0, 1.0, T, rule), SpaceGrid(1, 1.0, 2 * ((N + 1) // 2))
    n = tg.n_axis
    mk = lambda: ForwardKernel(tg, sg, rng.random((n, sg.size, n, sg.size))
                               * np.triu(np.ones((n, n)), 1)[:, None, :, None])
    return tg, sg, rng, mk


@given(seeds, st.sampled_from(["node", "midpoint"]))
def test_compose_associative(seed, rule):
    tg, sg, rng, mk = _dense(seed, rule=rule)
    A, B, C = mk(), mk(), mk()
    left = compose(compose(A, B), C).data
    right = compose(A, compose(B, C)).data
    assert np.max(np.abs(left - right)) <= 1e-10 * max(np.max(np.abs(right)), 1e-300)


@given(seeds)
def test_nonnegativity_closed(seed):
    tg, sg, rng, mk = _dense(seed)
    A, B = mk(), mk()
    J = jump_from_matrix(sg, rng.random((sg.size, sg.size)))
    for out in (compose(A, B), apply_jump(A, J)):
        assert not out.signed and np.all(out.data >= 0)
        back = np.tril(np.ones((tg.n_axis, tg.n_axis), bool))
        assert not np.any(out.data.transpose(0, 2, 1, 3)[back])


@given(seeds, st.sampled_from(["node", "midpoint"]))
def test_stationary_matches_dense(seed, rule):
    rng = np.random.default_rng(seed)
    tg, sg = TimeGrid(0.0, 1.0, 3, rule), SpaceGrid(1, 2.0, 8)
    data = rng.random((tg.period, tg.n_axis, 8))
    data[:, 0] = 0
    A = ForwardKernel(tg, sg, data, stationary=True)
    B = ForwardKernel(tg, sg, np.roll(data, 1, axis=2), stationary=True)
    J = jump_from_profile(sg, rng.random(8))
    fast = compose(apply_jump(A, J), B)
    slow = compose(apply_jump(A.to_dense(), J), B.to_dense())
    assert np.max(np.abs(fast.dense_data - slow.data)) <= 1e-12 * np.max(np.abs(slow.data))


@given(st.floats(0.0, 100.0), seeds)
def test_q_superadditive(c, seed):
    rng = np.random.default_rng(seed)
    pts = np.sort(rng.uniform(-10, 10, (1000, 3)), axis=1)
    q = QFunction(c)
    assert q.superadditivity_defect(pts[:, 0], pts[:, 1], pts[:, 2]) <= 1e-12 * max(c, 1.0) * 20


@given(seeds, st.floats(0.0, 0.3))
def test_signed_parity_decomposition(seed, scale):
    rng = np.random.default_rng(seed)
    tg, sg = TimeGrid(0.0, 1.0, 3, "node"), SpaceGrid(1, 1.0, 4)
    n = tg.n_axis
    K = ForwardKernel(tg, sg, rng.random((n, 4, n, 4)) * np.triu(np.ones((n, n)), 1)[:, None, :, None])
    J = jump_from_matrix(sg, scale * rng.random((4, 4)))
    q = QFunction(5.0)
    P = perturbation_series(K, J, q, 0.5, 1e-12)
    M = signed_series(K, J, q, 0.5, 1e-12)
    N = min(P.certificate.n_terms, M.certificate.n_terms)
    odd = sum((series_term(K, J, k).data for k in range(1, N + 1, 2)), np.zeros_like(K.data))
    assert np.max(np.abs(M.series_sum.data + 2 * odd - P.series_sum.data)) <= 1e-12 * np.max(P.series_sum.data)


@given(arrays(float, 16, elements=st.floats(-1, 1)), st.floats(0.2, 1.9))
def test_fractional_laplacian_negative_semidefinite(phi, alpha):
    g = SpaceGrid(1, 2.0, 16)
    out = fractional_laplacian_values(phi, g, alpha)
    assert float(phi @ out) <= 1e-12 * max(1.0, float(phi @ phi))


@given(arrays(float, 16, elements=nonneg), st.integers(0, 6))
def test_convolution_power_mass(w, n):
    g = SpaceGrid(1, 2.0, 16)
    mu = levy.FiniteMeasure(g, w)
    p = levy.convolution_power(mu, n)
    assert abs(p.total_mass - mu.total_mass ** n) <= 1e-10 * max(1.0, mu.total_mass ** n)
    assert np.all(p.weights >= 0)
