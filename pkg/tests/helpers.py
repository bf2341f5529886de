from __future__ import annotations

import numpy as np
from scipy.optimize import root

from delaycrn.dde import History, delayed_state_offset
from delaycrn.network import stoich_bases


def shifted(hist: History, shift) -> History:
    return History(hist.times, hist.values + shift, hist.derivs, extend_below=True)


def rebalance(net, theta: History, shape: History) -> History:
    """Shift ``shape`` by a constant S-perp vector so that it lands in theta's class."""
    B = stoich_bases(net).s_perp_basis
    target = B @ delayed_state_offset(net, theta)

    def resid(z):
        return B @ delayed_state_offset(net, shifted(shape, z @ B)) - target

    sol = root(resid, np.zeros(B.shape[0]), tol=1e-14)
    assert np.abs(resid(sol.x)).max() <= 1e-11 * max(1.0, np.abs(target).max()), sol.message
    return shifted(shape, sol.x @ B)


def random_history(net, rng, center, spread=0.3, knots=7) -> History:
    """Smooth positive history around ``center`` with independent wiggles per species."""
    tau = max(net.max_delay, 1.0)
    t = np.linspace(-tau, 0.0, knots)
    vals = center * (1 + spread * np.sin(np.outer(t, rng.uniform(0.5, 3.0, net.n_species)) + rng.uniform(0, 6, net.n_species)))
    return History.from_knots(t, vals)
