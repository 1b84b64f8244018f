import numpy as np
import pytest
from scipy.special import erf

from kperturb.errors import InvalidArgument
from kperturb.grid import (ScalarField, SpaceGrid, TimeGrid, integrate, make_space_grid, make_time_grid,
                           periodic_convolve, to_displacement, to_lattice, wraparound_mass)


def test_time_grid_nodes():
    assert np.allclose(make_time_grid(0, 1, 4).nodes, [0, 0.25, 0.5, 0.75, 1])
    assert np.allclose(make_time_grid(0, 1, 1).nodes, [0, 1])


@pytest.mark.parametrize("args", [(1, 0, 4), (0, 0, 1), (0, 1, 0), (0, 1, 2.5), (0, float("inf"), 2)])
def test_time_grid_rejects(args):
    with pytest.raises(InvalidArgument):
        make_time_grid(*args)


def test_time_grid_rejects_unknown_rule():
    with pytest.raises(InvalidArgument):
        TimeGrid(0.0, 1.0, 2, "simpson")


def test_midpoint_axis_and_weights():
    tg = TimeGrid(0.0, 1.0, 4)
    assert tg.n_axis == 9
    assert np.allclose(tg.axis, np.linspace(0, 1, 9))
    assert list(tg.node_indices) == [0, 2, 4, 6, 8]
    # weight dt sits on the midpoints only, so weights sum to t1 - t0 over the interior
    assert np.allclose(tg.weights[1::2], 0.25)
    assert np.all(tg.weights[0::2] == 0)
    assert tg.weights.sum() == pytest.approx(1.0)


def test_node_rule_axis():
    tg = TimeGrid(0.0, 2.0, 4, "node")
    assert tg.n_axis == 5 and tg.period == 1
    assert np.allclose(tg.weights, 0.5)


def test_space_grid_examples():
    g = make_space_grid(1, 10, 4)
    assert np.allclose(g.coords_1d, [-10, -5, 0, 5])
    assert g.cell_volume == 5
    g2 = make_space_grid(2, 1, 2)
    assert g2.size == 4 and g2.cell_volume == 1
    with pytest.raises(InvalidArgument):
        make_space_grid(1, 10, 3)


@pytest.mark.parametrize("args", [(0, 1.0, 4), (1, -1.0, 4), (1, 1.0, 0), (1, float("nan"), 4)])
def test_space_grid_rejects(args):
    with pytest.raises(InvalidArgument):
        SpaceGrid(*args)


def test_integrate_examples():
    g = make_space_grid(1, 10, 4)
    assert integrate(ScalarField(g, np.ones(4))) == 20
    assert integrate(ScalarField(g, np.zeros(4))) == 0
    ind = np.zeros(4)
    ind[2] = 1
    assert integrate(ScalarField(g, ind)) == 5


def test_integrate_refinement_is_second_order_or_better():
    # Gaussian on [-6, 6): the exact window integral is sqrt(pi) erf(6); the
    # boundary values are negligible, so the rectangle rule converges fast
    exact = np.sqrt(np.pi) * erf(6.0)
    errs = []
    for n in (8, 16, 32, 64):
        g = make_space_grid(1, 6.0, n)
        x = g.coords_1d
        errs.append(abs(integrate(ScalarField(g, np.exp(-x ** 2) * (1 + x))) - exact))
    for a, b in zip(errs, errs[1:]):
        assert b <= max(a / 4, 1e-12)


def test_field_validation():
    g = make_space_grid(1, 1, 4)
    with pytest.raises(InvalidArgument):
        ScalarField(g, np.ones(3))
    with pytest.raises(InvalidArgument):
        ScalarField(g, np.array([1, np.nan, 0, 0]))
    with pytest.raises(InvalidArgument):
        ScalarField(g, -np.ones(4), is_density=True)


def test_field_at_and_arithmetic():
    g = make_space_grid(1, 10, 4)
    f = ScalarField(g, np.array([1.0, 2.0, 3.0, 4.0]))
    assert f.at(0.0) == 3.0 and f.at(-10.0) == 1.0
    assert np.allclose((f + 2 * f).values, 3 * f.values)


def test_displacement_round_trip_and_wrap_mass():
    g = make_space_grid(2, 1, 6)
    v = np.arange(36.0).reshape(6, 6)
    assert np.array_equal(to_lattice(to_displacement(v)), v)
    assert to_displacement(v)[0, 0] == v[3, 3]
    f = ScalarField(g, np.ones((6, 6)))
    assert wraparound_mass(f) > 0


def test_periodic_convolve_with_delta_is_identity():
    v = np.arange(8.0)
    delta = np.zeros(8)
    delta[0] = 1.0
    assert np.allclose(periodic_convolve(v, delta), v)
    shift = np.zeros(8)
    shift[1] = 1.0
    assert np.allclose(periodic_convolve(v, shift), np.roll(v, 1))
