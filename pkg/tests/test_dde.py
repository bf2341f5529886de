from __future__ import annotations

import numpy as np
import pytest

from delaycrn.dde import (
    ConfigError,
    History,
    SimConfig,
    SimulationError,
    Trajectory,
    class_distance,
    conserved_series,
    conserved_value,
    delay_integrals,
    simulate,
)
from delaycrn.equilibria import class_equilibrium
from delaycrn.network import stoich_bases
from helpers import random_history

X_DELAYED = (-1 + 41**0.5) / 4


def plain_rk4(f, x0, dt, n):
    xs = [np.asarray(x0, dtype=float)]
    for _ in range(n):
        x = xs[-1]
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        xs.append(x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    return np.array(xs)


def test_equilibrium_history_stays_put(models):
    for model, net in models.values():
        theta = History.constant(model.reference, -max(net.max_delay, 1.0))
        traj = simulate(net, theta, SimConfig(50.0, 0.01))
        assert np.abs(traj.states - model.reference).max() <= 1e-9


def test_class_equilibrium_history_stays_put(models):
    model, net = models["example3"]
    x = class_equilibrium(net, model.reference, [0.4, 1.2, 0.8])
    traj = simulate(net, History.constant(x, -1.0), SimConfig(50.0, 0.01))
    assert np.abs(traj.states - x).max() <= 1e-9


def test_zero_delay_matches_plain_rk4(models):
    net = models["example1_massaction"][1].without_delays()

    def f(x):
        # 2X1 -> X2 at rate 1, X2 -> 2X1 at rate 2
        return 1.0 * x[0] ** 2 * np.array([-2.0, 1.0]) + 2.0 * x[1] * np.array([2.0, -1.0])

    traj = simulate(net, History.constant([1.0, 1.0]), SimConfig(10.0, 0.01))
    oracle = plain_rk4(f, [1.0, 1.0], 0.01, 1000)
    assert np.abs(traj.states - oracle).max() <= 1e-12


def test_example1_converges_to_class_equilibrium(models):
    net = models["example1_massaction"][1]
    traj = simulate(net, History.constant([1.0, 1.0]), SimConfig(50.0, 1e-3))
    target = np.array([X_DELAYED, X_DELAYED**2 / 2])
    assert np.abs(traj.states[-1] - target).max() <= 1e-4
    assert traj.states.min() > 0


def test_observed_order(models):
    net = models["example1_massaction"][1]
    theta = History.constant([1.0, 1.0])
    finals = [simulate(net, theta, SimConfig(5.0, dt)).states[-1] for dt in (0.05, 0.025, 0.0125)]
    e1 = np.abs(finals[0] - finals[1]).max()
    e2 = np.abs(finals[1] - finals[2]).max()
    assert np.log2(e1 / e2) >= 3.5


def test_dense_output_reproduces_mesh(models):
    model, net = models["example3"]
    traj = simulate(net, History.constant([0.4, 1.2, 0.8], -1.0), SimConfig(3.0, 0.01))
    np.testing.assert_array_equal(traj(traj.mesh), traj.states)
    mid = traj(traj.mesh[:-1] + 0.005)
    assert np.abs(mid - 0.5 * (traj.states[:-1] + traj.states[1:])).max() < 1e-3


def test_trajectory_before_zero_uses_history(models):
    net = models["example1_massaction"][1]
    theta = History.from_knots([-1.0, -0.5, 0.0], [[1.0, 2.0], [1.5, 1.0], [1.0, 1.0]])
    traj = simulate(net, theta, SimConfig(1.0, 0.01))
    np.testing.assert_allclose(traj(-0.5), [1.5, 1.0])
    np.testing.assert_allclose(traj(-0.25), theta(-0.25))


def test_from_states_rebuilds_derivatives(models):
    model, net = models["example2"]
    theta = random_history(net, np.random.default_rng(1), model.reference)
    traj = simulate(net, theta, SimConfig(5.0, 0.01))
    rebuilt = Trajectory.from_states(net, theta, traj.mesh, traj.states)
    np.testing.assert_allclose(rebuilt.derivs, traj.derivs, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("name", ["example1_massaction", "example2", "example3"])
def test_conserved_values_along_trajectory(models, name):
    model, net = models[name]
    theta = random_history(net, np.random.default_rng(7), model.reference)
    traj = simulate(net, theta, SimConfig(20.0, 1e-3))
    basis = stoich_bases(net)
    for v in basis.s_perp_basis:
        c0 = conserved_value(net, v, theta, basis)
        drift = max(abs(conserved_value(net, v, traj.window(t), basis) - c0) for t in np.linspace(0, 20, 41))
        assert drift <= 1e-6
    assert class_distance(net, theta, traj.window(20.0), basis) <= 1e-6


def test_conserved_value_examples(models):
    net = models["example1_massaction"][1]
    theta = History.constant([1.0, 1.0])
    assert conserved_value(net, [1.0, 2.0], theta) == pytest.approx(5.0, abs=1e-14)
    flat = net.without_delays()
    assert conserved_value(flat, [1.0, 2.0], theta) == pytest.approx(3.0, abs=1e-14)
    assert class_distance(net, theta, theta) == 0.0
    # [2,2]: 2 + 2 (2 + 2) = 10 differs from 5
    assert class_distance(net, theta, History.constant([2.0, 2.0])) == pytest.approx(5 / 5**0.5, rel=1e-14)
    with pytest.raises(ValueError):
        conserved_value(net, [1.0, 0.0], theta)


def test_delay_integrals_quadrature_exact_for_polynomials(models):
    net = models["example1_massaction"][1]
    # x2(s) = 1 - s on [-0.5, 0]; reaction 2 has monomial x2, integral = 0.5 + 0.125
    theta = History([-1.0, 0.0], [[1.0, 2.0], [1.0, 1.0]], [[0.0, -1.0], [0.0, -1.0]])
    np.testing.assert_allclose(delay_integrals(net, theta), [0.0, 0.625], rtol=1e-14)


def test_config_errors(models):
    net = models["example1_massaction"][1]
    theta = History.constant([1.0, 1.0])
    with pytest.raises(ConfigError, match="exceeds the smallest positive delay"):
        simulate(net, theta, SimConfig(1.0, 0.6))
    with pytest.raises(ConfigError):
        simulate(net, theta, SimConfig(-1.0, 0.1))
    with pytest.raises(ConfigError, match="positive"):
        simulate(net, History.constant([1.0, -1.0]), SimConfig(1.0, 0.1))
    with pytest.raises(ConfigError, match="end at t = 0"):
        simulate(net, History.constant([1.0, 1.0], -2.0, -1.0), SimConfig(1.0, 0.1))


def test_positivity_loss_aborts(models):
    net = models["example1_massaction"][1]
    with pytest.raises(SimulationError, match="positivity lost"):
        simulate(net, History.constant([20.0, 1.0]), SimConfig(2.0, 0.5))


def test_conserved_series_matches_windows(models):
    model, net = models["example3"]
    theta = random_history(net, np.random.default_rng(3), model.reference)
    traj = simulate(net, theta, SimConfig(4.0, 0.01))
    times = np.array([0.0, 0.003, 0.37, 0.5, 1.0, 2.71, 4.0])
    v = stoich_bases(net).s_perp_basis[0]
    expected = [conserved_value(net, v, traj.window(t)) for t in times]
    np.testing.assert_allclose(conserved_series(net, v, traj, times), expected, rtol=1e-13)
    np.testing.assert_allclose(traj.window_integrals(net, times), [delay_integrals(net, traj.window(t)) for t in times],
                               rtol=1e-13, atol=1e-16)
