"""Method-of-steps RK4 integration of delayed reaction networks.

The state on any window [t - tau_max, t] is represented by piecewise cubic
Hermite polynomials: the initial history on [-tau_max, 0] followed by the
RK4 mesh with stored right-hand-side values.  The step is never larger
than the smallest positive delay, so every delayed lookup made by an RK
stage falls inside the already-computed part of the solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ._kernels import fill_derivs, rk4_integrate, window_integrals
from .network import Network, NetworkError, StoichBasis, stoich_bases

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(5)
PANELS_PER_TAU_MAX = 64
MIN_PANELS = 4


class SimulationError(RuntimeError):
    """Raised when an integration cannot proceed (positivity loss)."""


class ConfigError(ValueError):
    pass


def _hermite(t, t0, h, y0, y1, m0, m1):
    s = ((t - t0) / h)[..., None]
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * (h[..., None] * m0) + h01 * y1 + h11 * (h[..., None] * m1)


class History:
    """Piecewise cubic Hermite function of time with values in R^N.

    Evaluation is allowed on ``[t_lo, t_hi]``; below ``t_lo`` the first value
    is repeated when ``extend_below`` is set.
    """

    breaks: tuple[float, ...] = ()

    def __init__(self, times, values, derivs, *, extend_below: bool = False):
        self.times = np.asarray(times, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        self.derivs = np.atleast_2d(np.asarray(derivs, dtype=float))
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("history needs at least two knots")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("history knots must be strictly increasing")
        if self.values.shape != (self.times.size, self.values.shape[1]) or self.derivs.shape != self.values.shape:
            raise ValueError("history values/derivatives do not match knot count")
        self.extend_below = extend_below

    @classmethod
    def constant(cls, x, t_lo: float = -1.0, t_hi: float = 0.0) -> "History":
        x = np.asarray(x, dtype=float)
        if t_lo >= t_hi:
            t_lo = t_hi - 1.0
        return cls([t_lo, t_hi], [x, x], np.zeros((2, x.size)), extend_below=True)

    @classmethod
    def from_knots(cls, times, values) -> "History":
        """Natural cubic spline through the given knots (zero curvature at ends)."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.size == 1:
            return cls.constant(values[0], times[0] - 1.0, times[0])
        spline = CubicSpline(times, values, axis=0, bc_type="natural")
        return cls(times, values, spline(times, 1), extend_below=True)

    @property
    def t_lo(self) -> float:
        return float(self.times[0])

    @property
    def t_hi(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]) and np.all(self.derivs == 0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any(t > self.t_hi + 1e-12 * max(1.0, abs(self.t_hi))):
            raise ValueError(f"history evaluated beyond its end {self.t_hi}")
        if not self.extend_below and np.any(t < self.t_lo - 1e-12 * max(1.0, abs(self.t_lo))):
            raise ValueError(f"history evaluated before its start {self.t_lo}")
        tc = np.clip(t, self.t_lo, self.t_hi)
        j = np.clip(np.searchsorted(self.times, tc, side="right") - 1, 0, self.times.size - 2)
        t0 = self.times[j]
        h = self.times[j + 1] - t0
        out = _hermite(tc, t0, h, self.values[j], self.values[j + 1], self.derivs[j], self.derivs[j + 1])
        return out[0] if scalar else out

    def min_value(self, samples: int = 257) -> float:
        grid = np.linspace(self.t_lo, self.t_hi, samples)
        return float(min(self.values.min(), self(grid).min()))


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    dt: float
    positivity_floor: float = 1e-12

    def validate(self, net: Network) -> None:
        if not (self.t_end > 0) or not math.isfinite(self.t_end):
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if not (self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        positive = net.delays[net.delays > 0]
        if positive.size and self.dt > positive.min() * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} exceeds the smallest positive delay {positive.min()}")


class Trajectory:
    """RK4 solution on a uniform mesh plus the initial history it started from.

    Calling the trajectory evaluates x(t) for t in [-tau_max, t_final]; the
    initial history is used for t < 0 and the Hermite dense output after.
    """

    def __init__(self, mesh, states, derivs, initial_history: History):
        self.mesh = np.asarray(mesh, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        self.initial_history = initial_history
        self._dense = History(self.mesh, self.states, self.derivs) if self.mesh.size > 1 else None

    @property
    def t_final(self) -> float:
        return float(self.mesh[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty(t.shape + (self.states.shape[1],))
        past = t < 0
        if np.any(past):
            out[past] = self.initial_history(t[past])
        if np.any(~past):
            out[~past] = self._dense(t[~past]) if self._dense is not None else self.states[0]
        return out[0] if scalar else out

    def window_integrals(self, net: Network, times, ref_mono=None, ref_log=None) -> np.ndarray:
        """Delay integrals of every window x_t, shape (len(times), M).

        Plain monomial integrals by default; given the reference monomials
        and their logs, the Krasovskii integrand instead.  Same panels as
        ``delay_integrals`` on ``self.window(t)``.
        """
        times = np.ascontiguousarray(times, dtype=float)
        out = np.zeros((times.size, net.n_reactions))
        if net.max_delay == 0:
            return out
        krasovskii = ref_mono is not None
        if not krasovskii:
            ref_mono = ref_log = np.ones(net.n_reactions)
        args = _kernel_args(net, self.initial_history)
        window_integrals(
            times, net.max_delay / PANELS_PER_TAU_MAX, MIN_PANELS, GL_NODES, GL_WEIGHTS,
            self.mesh, np.ascontiguousarray(self.states), np.ascontiguousarray(self.derivs),
            args[1], args[3], *args[4:], np.asarray(ref_mono, dtype=float), np.asarray(ref_log, dtype=float),
            krasovskii, out,
        )
        return out

    def window(self, t: float) -> "Window":
        """The history segment x_t: s -> x(t + s) for s <= 0."""
        return Window(self, float(t))

    @classmethod
    def from_states(cls, net: Network, theta: History, mesh, states) -> "Trajectory":
        """Rebuild dense output from stored mesh states by re-evaluating the RHS."""
        mesh = np.asarray(mesh, dtype=float)
        states = np.asarray(states, dtype=float)
        if mesh.size < 2 or mesh[0] != 0.0:
            raise ValueError("trajectory mesh must start at t = 0 and have at least two points")
        positive = net.delays[net.delays > 0]
        if positive.size and np.max(np.diff(mesh)) > positive.min() * (1 + 1e-9):
            raise ConfigError("trajectory mesh is coarser than the smallest positive delay")
        derivs = np.zeros_like(states)
        fill_derivs(mesh, states, derivs, *_kernel_args(net, theta))
        return cls(mesh, states, derivs, theta)


class Window:
    """View of a trajectory as a history function on [-tau, 0]."""

    def __init__(self, traj: Trajectory, t: float):
        self.traj = traj
        self.t = t
        self.breaks = (-t,) if t > 0 else ()

    def __call__(self, s):
        return self.traj(self.t + np.asarray(s, dtype=float))


def _kernel_args(net: Network, theta: History):
    tr = net.transforms
    return (
        net.rates,
        net.source_stoich.astype(float),
        net.product_stoich.astype(float),
        net.delays,
        tr.alpha,
        tr.p,
        tr.c,
        tr.q,
        theta.times,
        np.ascontiguousarray(theta.values),
        np.ascontiguousarray(theta.derivs),
    )


def simulate(net: Network, theta: History, cfg: SimConfig) -> Trajectory:
    """Classical RK4 by the method of steps from the initial function ``theta``.

    ``theta`` must cover [-tau_max, 0] (constant histories extend below).
    The final mesh time is the first multiple of ``dt`` at or beyond ``t_end``.
    """
    cfg.validate(net)
    if not isinstance(theta, History):
        raise ConfigError("initial function must be a History")
    if theta.dim != net.n_species:
        raise ConfigError(f"history has {theta.dim} components, network has {net.n_species} species")
    if theta.t_hi != 0.0:
        raise ConfigError("initial history must end at t = 0")
    if net.max_delay > 0 and not theta.extend_below and theta.t_lo > -net.max_delay * (1 + 1e-12):
        raise ConfigError(f"history starts at {theta.t_lo}, after -tau_max = {-net.max_delay}")
    if theta.min_value() <= 0:
        raise ConfigError("initial history must be strictly positive")

    n = int(math.ceil(cfg.t_end / cfg.dt - 1e-9))
    mesh = cfg.dt * np.arange(n + 1)
    states = np.zeros((n + 1, net.n_species))
    derivs = np.zeros_like(states)
    states[0] = theta(0.0)
    failed = rk4_integrate(cfg.dt, mesh, states, derivs, *_kernel_args(net, theta), -cfg.positivity_floor)
    if failed >= 0:
        raise SimulationError(f"positivity lost at t={mesh[failed]:.6g}, reduce dt")
    return Trajectory(mesh, states, derivs, theta)


# Delay integrals -----------------------------------------------------------


def _quadrature_nodes(a: float, b: float, h_q: float, breaks=()):
    """Composite 5-point Gauss-Legendre nodes/weights on [a, b], split at breaks."""
    cuts = [a] + sorted(c for c in breaks if a < c < b) + [b]
    nodes, weights = [], []
    single = len(cuts) == 2
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        panels = max(MIN_PANELS if single else 1, int(math.ceil((hi - lo) / h_q - 1e-9)))
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes.append((mid[:, None] + half[:, None] * GL_NODES).ravel())
        weights.append((half[:, None] * GL_WEIGHTS).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def delay_integrals(net: Network, psi, integrand=None) -> np.ndarray:
    """Per-reaction integrals of gamma^{y_k}(psi(s)) over s in [-tau_k, 0].

    ``integrand(k_indices, monomials)`` may transform the monomial values
    before integration (used by the Krasovskii functional).  Reactions
    without delay get 0.  Constant histories are integrated exactly.
    """
    out = np.zeros(net.n_reactions)
    tau_max = net.max_delay
    if tau_max == 0:
        return out
    h_q = tau_max / PANELS_PER_TAU_MAX
    breaks = getattr(psi, "breaks", ())
    constant = isinstance(psi, History) and psi.is_constant
    for tau in np.unique(net.delays[net.delays > 0]):
        ks = np.flatnonzero(net.delays == tau)
        if constant:
            vals = net.source_monomials(psi.values[0])[ks]
            if integrand is not None:
                vals = integrand(ks, vals[None, :])[0]
            out[ks] = tau * vals
            continue
        nodes, weights = _quadrature_nodes(-float(tau), 0.0, h_q, breaks)
        vals = net.source_monomials(psi(nodes))[:, ks]
        if integrand is not None:
            vals = integrand(ks, vals)
        out[ks] = weights @ vals
    return out


def delayed_state_offset(net: Network, psi) -> np.ndarray:
    """psi(0) + sum_k kappa_k (int_{-tau_k}^0 gamma^{y_k}(psi)) y_k."""
    integrals = delay_integrals(net, psi)
    return np.asarray(psi(0.0), dtype=float) + (net.rates * integrals) @ net.source_stoich


def _check_perp(net: Network, v, basis: StoichBasis | None):
    v = np.asarray(v, dtype=float)
    basis = basis or stoich_bases(net)
    if np.max(np.abs(basis.project_s(v)), initial=0.0) > 1e-10 * max(1.0, np.abs(v).max()):
        raise NetworkError("v is not in the orthogonal complement of the stoichiometric subspace")
    return v


def conserved_value(net: Network, v, psi, basis: StoichBasis | None = None) -> float:
    """The functional c_v(psi); ``v`` must be orthogonal to every reaction vector."""
    v = _check_perp(net, v, basis)
    return float(v @ delayed_state_offset(net, psi))


def conserved_series(net: Network, v, traj: Trajectory, times, basis: StoichBasis | None = None) -> np.ndarray:
    """c_v(x_t) for each t in ``times``; ``v`` may stack several vectors as rows.

    Returns shape (len(times),) for a single vector, else (len(times), K).
    """
    v = np.asarray(v, dtype=float)
    for row in np.atleast_2d(v):
        _check_perp(net, row, basis)
    times = np.asarray(times, dtype=float)
    offsets = traj(times) + (traj.window_integrals(net, times) * net.rates) @ net.source_stoich
    return offsets @ v.T


def class_distance(net: Network, theta, psi, basis: StoichBasis | None = None) -> float:
    """Norm of the S-perp component of the class-membership residual.

    Zero (up to quadrature error) exactly when psi is in theta's delayed
    compatibility class.
    """
    for h in (theta, psi):
        if isinstance(h, History) and h.min_value() <= 0:
            raise NetworkError("histories must be strictly positive")
    basis = basis or stoich_bases(net)
    diff = delayed_state_offset(net, psi) - delayed_state_offset(net, theta)
    return float(np.linalg.norm(basis.s_perp_basis @ diff))
