"""Lyapunov function and Lyapunov-Krasovskii functional evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dde import History, Trajectory, delay_integrals
from .equilibria import balance_tolerance, check_complex_balance
from .network import Network, _check_positive

DECREASE_TOL = 1e-8


def v_point(net: Network, x, reference) -> float:
    """sum_i int_{ref_i}^{x_i} (log gamma_i(s) - log gamma_i(ref_i)) ds.

    Vectorized over leading axes of ``x``.
    """
    x = _check_positive(x)
    reference = _check_positive(reference)
    out = np.sum(net.transforms.log_excess(x, reference), axis=-1)
    return out if np.ndim(out) else float(out)


def v_point_gradient(net: Network, x, reference):
    return net.rho(x) - net.rho(reference)


def q_values(net: Network, x, reference) -> np.ndarray:
    """q_eta = (rho(x) - rho(reference)) . eta for every complex eta."""
    return (net.rho(x) - net.rho(reference)) @ net.complex_matrix


def _krasovskii_integrand(net: Network, reference):
    ref_mono = net.source_monomials(reference)
    ref_log = net.source_stoich @ net.rho(reference)

    def integrand(ks, mono):
        # a (log a - log b - 1) + b with a = mono, b = ref monomial, written
        # as b (q e^q - expm1(q)) with q = log(a / b)
        b = ref_mono[ks]
        with np.errstate(divide="ignore"):
            q = np.log(mono) - ref_log[ks]
        return b * (q * np.exp(q) - np.expm1(q))

    return integrand


def v_krasovskii(net: Network, psi, reference) -> float:
    """Lyapunov-Krasovskii functional of the history segment ``psi`` on [-tau_max, 0]."""
    reference = _check_positive(reference)
    x0 = np.asarray(psi(0.0), dtype=float)
    if isinstance(psi, History) and psi.min_value() <= 0:
        raise ValueError("history must be strictly positive")
    integrals = delay_integrals(net, psi, _krasovskii_integrand(net, reference))
    return v_point(net, x0, reference) + float(net.rates @ integrals)


@dataclass
class DecreaseReport:
    times: np.ndarray
    values: np.ndarray
    max_increase: float
    passed: bool
    valid: bool = True
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "valid": self.valid,
            "max_increase": self.max_increase,
            "initial": float(self.values[0]),
            "final": float(self.values[-1]),
            "points": int(self.values.size),
            "message": self.message,
        }


def default_indices(traj: Trajectory, stride: int | None = None) -> np.ndarray:
    """Every mesh point up to t = 10, then every tenth; or a fixed stride."""
    n = traj.mesh.size
    if stride is not None:
        idx = np.arange(0, n, max(1, int(stride)))
    else:
        early = np.flatnonzero(traj.mesh <= 10.0)
        late = np.arange(early[-1] + 10 if early.size else 0, n, 10)
        idx = np.concatenate([early, late])
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def krasovskii_series(net: Network, traj: Trajectory, times, reference) -> np.ndarray:
    """v_krasovskii of the windows x_t for each t in ``times``.

    The delay integrals run in a compiled loop over the trajectory's dense
    output, with the same Gauss-Legendre panels as ``v_krasovskii``.
    """
    reference = _check_positive(reference)
    times = np.ascontiguousarray(times, dtype=float)
    out = np.asarray(v_point(net, traj(times), reference), dtype=float).reshape(times.shape)
    if net.max_delay == 0:
        return out
    ref_log = net.source_stoich @ net.rho(reference)
    integrals = traj.window_integrals(net, times, net.source_monomials(reference), ref_log)
    return out + integrals @ net.rates


def decrease_report(net: Network, traj: Trajectory, reference, stride: int | None = None) -> DecreaseReport:
    """Evaluate the Krasovskii functional along ``traj`` and check it never increases.

    A pair of consecutive samples passes when
    V(t_{j+1}) <= V(t_j) + 1e-8 (1 + V(t_j)).
    """
    reference = _check_positive(reference)
    idx = default_indices(traj, stride)
    times = traj.mesh[idx]
    values = krasovskii_series(net, traj, times, reference)
    inc = np.diff(values)
    max_increase = float(inc.max()) if inc.size else 0.0
    ok = bool(np.all(inc <= DECREASE_TOL * (1.0 + values[:-1])))
    balance = check_complex_balance(net, reference, balance_tolerance(net, reference))
    if not balance.passed:
        return DecreaseReport(
            times, values, max_increase, False, valid=False,
            message=f"reference is not complex balanced (residual {balance.residual_norm:.3g})",
        )
    return DecreaseReport(times, values, max_increase, ok)
