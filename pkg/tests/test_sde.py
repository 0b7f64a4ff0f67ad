import numpy as np
import pytest

from bsde_eigen import problems, sde
from bsde_eigen.problems import ProblemSpec


def flat_problem(d=1, v=0.0):
    return ProblemSpec("flat", d, np.sqrt(2.0) * np.eye(d), potential=lambda x: np.full(len(np.atleast_2d(x)), v))


def test_time_grid():
    g = sde.TimeGrid(0.2, 80)
    assert g.dt.sum() == pytest.approx(0.2)
    assert len(g.times) == 81
    with pytest.raises(ValueError):
        sde.TimeGrid(0.0, 10)
    with pytest.raises(ValueError):
        sde.TimeGrid(1.0, 0)


def test_clip_bounds_validation():
    with pytest.raises(ValueError):
        sde.ClipBounds(1.0, 1.0)


def test_rng_keyed_by_seed_step_stream():
    a = sde.make_rng(3, 7, 0).standard_normal(5)
    assert np.array_equal(a, sde.make_rng(3, 7, 0).standard_normal(5))
    assert not np.array_equal(a, sde.make_rng(3, 8, 0).standard_normal(5))
    assert not np.array_equal(a, sde.make_rng(3, 7, 1).standard_normal(5))


def test_initial_points_in_box():
    x = sde.sample_initial(1000, 3, sde.make_rng(0))
    assert x.shape == (1000, 3)
    assert x.min() >= 0 and x.max() < 2 * np.pi
    with pytest.raises(ValueError):
        sde.sample_initial(0, 3, sde.make_rng(0))


def test_forward_paths_use_sigma_increments():
    rng = sde.make_rng(1)
    sigma = np.array([[1.0, 0.0], [0.5, 2.0]])
    x0 = sde.sample_initial(6, 2, rng)
    b = sde.simulate_forward(x0, sde.TimeGrid(1.0, 5), sigma, rng)
    assert b.X.shape == (6, 6, 2) and b.dW.shape == (6, 5, 2)
    np.testing.assert_allclose(np.diff(b.X, axis=1), b.dW @ sigma.T, atol=1e-14)
    np.testing.assert_array_equal(b.X[:, 0], x0)
    tm = b.time_major()
    np.testing.assert_array_equal(tm[6:12], b.X[:, 1])


def test_increment_variance():
    rng = sde.make_rng(2)
    b = sde.simulate_forward(np.zeros((20000, 1)), sde.TimeGrid(0.5, 4), np.eye(1), rng)
    assert np.var(b.dW) == pytest.approx(0.125, rel=0.03)


def test_singular_sigma_rejected():
    with pytest.raises(ValueError):
        sde.simulate_forward(np.zeros((2, 2)), sde.TimeGrid(1.0, 2), np.zeros((2, 2)), sde.make_rng(0))


def test_zero_dynamics_keep_value_constant():
    p = flat_problem()
    rng = sde.make_rng(3)
    b = sde.simulate_forward(sde.sample_initial(10, 1, rng), sde.TimeGrid(1.0, 8), p.sigma, rng)
    u0 = np.linspace(-1, 1, 10)
    uT = sde.propagate(b, u0, np.zeros((90, 1)), 0.0, p)
    np.testing.assert_array_equal(uT.value, u0)
    assert len(b.U) == 9


def test_constant_potential_geometric_growth():
    v, lam, N = 0.7, 0.2, 10
    p = flat_problem(v=v)
    rng = sde.make_rng(4)
    b = sde.simulate_forward(sde.sample_initial(5, 1, rng), sde.TimeGrid(1.0, N), p.sigma, rng)
    uT = sde.propagate(b, np.ones(5), np.zeros((55, 1)), lam, p)
    np.testing.assert_allclose(uT.value, (1 + (v - lam) / N) ** N, rtol=1e-14)


def test_semilinear_with_zero_epsilon_matches_linear():
    with pytest.warns(UserWarning):
        nls0 = problems.nonlinear_schrodinger(2, epsilon=0.0)
    lin = ProblemSpec("lin", 2, nls0.sigma, nls0.potential)
    rng = sde.make_rng(5)
    grid = sde.TimeGrid(0.2, 20)
    b = sde.simulate_forward(sde.sample_initial(50, 2, rng), grid, nls0.sigma, rng)
    G = np.random.default_rng(0).normal(size=(21 * 50, 2))
    u0 = np.random.default_rng(1).normal(size=50)
    a = sde.propagate(b, u0, G, -3.0, nls0)
    c = sde.propagate(b, u0, G, -3.0, lin)
    np.testing.assert_allclose(a.value, c.value, rtol=1e-13)


def test_clipping_bounds_values():
    p = flat_problem(v=50.0)
    p = ProblemSpec("grow", 1, p.sigma, p.potential, nonlinear=lambda u: u * 0.0)
    rng = sde.make_rng(6)
    b = sde.simulate_forward(sde.sample_initial(4, 1, rng), sde.TimeGrid(1.0, 10), p.sigma, rng)
    uT = sde.propagate(b, np.array([1.0, -1.0, 0.0, 0.01]), np.zeros((44, 1)), 0.0, p, sde.ClipBounds())
    assert np.all(uT.value <= 5.0) and np.all(uT.value >= -5.0)
    assert uT.value[0] == 5.0 and uT.value[1] == -5.0
    assert b.clip_hits > 0


def test_blow_up_raises_with_step():
    p = flat_problem(v=1e300)
    rng = sde.make_rng(7)
    b = sde.simulate_forward(sde.sample_initial(3, 1, rng), sde.TimeGrid(1.0, 10), p.sigma, rng)
    with pytest.raises(sde.PropagationError) as info:
        sde.propagate(b, np.ones(3), np.zeros((33, 1)), 0.0, p)
    assert info.value.step >= 0


@pytest.mark.parametrize("make", [lambda: problems.nonlinear_schrodinger(2), lambda: problems.fokker_planck(2)])
def test_terminal_residual_shrinks_with_dt(make):
    p = make()
    res = []
    for N in (20, 80):
        res.append(sde.terminal_residual(p, p.eigenpairs[0], sde.TimeGrid(0.2, N), 4000, sde.make_rng(0, N)))
    assert res[1] < res[0]


def test_exact_heads_on_free_laplacian_are_exact():
    p = problems.linear_schrodinger(2, c=0.0)
    pair = p.eigenpairs[0]
    assert sde.terminal_residual(p, pair, sde.TimeGrid(0.5, 4), 100, sde.make_rng(0)) == pytest.approx(0.0, abs=1e-12)
