"""Equilibria, complex balancing, and the per-class equilibrium solver.

The class equilibrium of a (delayed) compatibility class is found by
minimizing a strictly convex function over the orthogonal complement of
the stoichiometric subspace.  Writing mu for the log-ratio
rho(x) - rho(ref), the objective is

    g(mu) = sum_i [ int_0^{mu_i} gamma_i^{-1}(gamma_i(ref_i) e^s) ds + ref_i - b_i mu_i ]
            + sum_k kappa_k tau_k gamma^{y_k}(ref) exp(mu . y_k)

whose stationary point on S-perp yields x = gamma^{-1}(gamma(ref) e^mu),
the unique positive equilibrium sharing the conserved quantities encoded
in b.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dde import History, class_distance, delayed_state_offset
from .network import Network, NetworkError, StoichBasis, _check_positive, stoich_bases

NEWTON_MAX_ITER = 200
GRAD_TOL = 1e-10
ARMIJO = 1e-4
BALANCE_RTOL = 1e-9


class EquilibriumError(RuntimeError):
    """Raised when the class equilibrium cannot be computed."""


class NotComplexBalancedError(ValueError):
    pass


@dataclass
class BalanceReport:
    residual_norm: float
    per_complex: list[tuple[float, float]]
    passed: bool
    tol: float

    def to_dict(self, labels=None) -> dict:
        rows = []
        for i, (inflow, outflow) in enumerate(self.per_complex):
            row = {"inflow": inflow, "outflow": outflow, "residual": inflow - outflow}
            if labels is not None:
                row = {"complex": labels[i], **row}
            rows.append(row)
        return {"passed": self.passed, "residual_norm": self.residual_norm, "tol": self.tol, "complexes": rows}


def is_equilibrium(net: Network, x, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(net.formation_rate(x))) <= tol)


def complex_fluxes(net: Network, x):
    """(inflow, outflow) per complex at state x."""
    flux = net.rates * net.source_monomials(_check_positive(x))
    inflow = np.bincount(net.product_index, weights=flux, minlength=net.n_complexes)
    outflow = np.bincount(net.source_index, weights=flux, minlength=net.n_complexes)
    return inflow, outflow


def check_complex_balance(net: Network, x, tol: float = 1e-10) -> BalanceReport:
    inflow, outflow = complex_fluxes(net, x)
    residual = float(np.max(np.abs(inflow - outflow)))
    passed = residual <= tol
    if passed:
        # complex balance implies the formation rate vanishes
        f = net.formation_rate(x)
        scale = np.abs(net.complex_matrix).max() * max(1.0, float(np.abs(outflow).sum()))
        assert np.max(np.abs(f)) <= tol * scale + 1e-12 * scale
    return BalanceReport(residual, [(float(a), float(b)) for a, b in zip(inflow, outflow)], passed, tol)


def balance_tolerance(net: Network, x) -> float:
    """Relative tolerance used to accept a supplied reference as complex balanced."""
    _, outflow = complex_fluxes(net, x)
    return BALANCE_RTOL * max(1.0, float(outflow.max()))


def require_complex_balanced(net: Network, reference) -> np.ndarray:
    reference = _check_positive(reference)
    report = check_complex_balance(net, reference, balance_tolerance(net, reference))
    if not report.passed:
        raise NotComplexBalancedError(
            f"reference is not complex balanced (residual {report.residual_norm:.3g})"
        )
    return reference


def equilibrium_set_contains(net: Network, reference, x, tol: float = 1e-8, basis: StoichBasis | None = None) -> bool:
    """True when rho(x) - rho(reference) lies in S-perp, up to ``tol`` (max norm)."""
    basis = basis or stoich_bases(net)
    d = net.rho(x) - net.rho(reference)
    return bool(np.max(np.abs(basis.project_s(d)), initial=0.0) <= tol)


def equilibrium_set_residual(net: Network, reference, x, basis: StoichBasis | None = None) -> float:
    basis = basis or stoich_bases(net)
    d = net.rho(x) - net.rho(reference)
    return float(np.max(np.abs(basis.project_s(d)), initial=0.0))


def point_on_equilibrium_set(net: Network, reference, mu, basis: StoichBasis | None = None) -> np.ndarray:
    """gamma^{-1}(gamma(reference) e^mu) for mu in S-perp."""
    basis = basis or stoich_bases(net)
    mu = basis.project_perp(mu)
    return net.transforms.inverse(net.gamma(reference) * np.exp(mu))


@dataclass
class QuasiThermoReport:
    samples: int
    max_value: float
    violations: int
    equality_probes: int
    equality_mismatches: int
    passed: bool
    tol: float = 1e-12
    box: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dissipation(net: Network, reference, x):
    """(rho(x) - rho(reference)) . f(x), vectorized over leading axes of x."""
    x = _check_positive(x)
    return np.sum((net.rho(x) - net.rho(reference)) * net.formation_rate(x), axis=-1)


def quasi_thermo_certificate(
    net: Network,
    reference,
    samples: int = 10_000,
    seed: int = 0,
    box=None,
    tol: float = 1e-12,
    n_probes: int = 8,
) -> QuasiThermoReport:
    """Sample the dissipation inequality on a log-uniform box.

    The box defaults to [ref/10, 10 ref].  Points on the equilibrium set
    (the reference plus ``n_probes`` points gamma^{-1}(gamma(ref) e^mu) with
    random mu in S-perp) must give zero dissipation and pass the
    membership test; disagreements are counted as mismatches.
    """
    reference = _check_positive(reference)
    report = check_complex_balance(net, reference, balance_tolerance(net, reference))
    if not report.passed:
        warnings.warn("reference is not complex balanced; the certificate may fail", stacklevel=2)
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    if box is None:
        lo, hi = reference / 10.0, reference * 10.0
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
    pts = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(samples, net.n_species)))
    values = dissipation(net, reference, pts)
    violations = int(np.sum(values > tol))

    basis = stoich_bases(net)
    probes = [reference]
    if basis.s_perp_basis.shape[0]:
        for _ in range(n_probes):
            z = rng.normal(scale=0.5, size=basis.s_perp_basis.shape[0])
            try:
                probes.append(point_on_equilibrium_set(net, reference, z @ basis.s_perp_basis, basis))
            except ValueError:
                continue
    mismatches = 0
    for x in probes:
        value = float(dissipation(net, reference, x))
        f_scale = max(1.0, float(np.abs(net.rates * net.source_monomials(x)).sum()))
        is_zero = abs(value) <= 1e-10 * f_scale
        if is_zero != equilibrium_set_contains(net, reference, x, 1e-8, basis):
            mismatches += 1
    return QuasiThermoReport(
        samples=samples,
        max_value=float(values.max()),
        violations=violations,
        equality_probes=len(probes),
        equality_mismatches=mismatches,
        passed=violations == 0 and mismatches == 0,
        tol=tol,
        box=[lo.tolist(), hi.tolist()],
    )


# Class equilibrium ---------------------------------------------------------


class ClassEquilibriumProblem:
    """The strictly convex objective whose minimizer on S-perp gives the class equilibrium.

    Coordinates ``z`` parametrize S-perp through its orthonormal basis,
    ``mu = z @ basis.s_perp_basis``.
    """

    def __init__(self, net: Network, reference, b, basis: StoichBasis | None = None):
        self.net = net
        self.reference = _check_positive(reference)
        self.b = np.asarray(b, dtype=float)
        if np.any(self.b <= 0):
            raise EquilibriumError("offset vector b must be strictly positive")
        self.basis = basis or stoich_bases(net)
        self.B = self.basis.s_perp_basis
        tr = net.transforms
        self.gamma_ref = tr.gamma(self.reference)
        self.log_sigma = np.log(tr.sigma)
        ref_rho = tr.rho(self.reference)
        self._h_ref = self.reference * ref_rho - tr.log_antiderivative(self.reference)
        self.src = net.source_stoich.astype(float)
        delayed = net.delays > 0
        self.src_delayed = self.src[delayed]
        self.weights = (net.rates * net.delays * net.source_monomials(self.reference))[delayed]

    @classmethod
    def from_history(cls, net: Network, reference, theta, basis: StoichBasis | None = None):
        return cls(net, reference, delayed_state_offset(net, theta), basis)

    @property
    def dim(self) -> int:
        return self.B.shape[0]

    def mu(self, z):
        return np.asarray(z, dtype=float) @ self.B

    def state(self, z):
        """x = gamma^{-1}(gamma(ref) e^mu); raises ValueError past saturation."""
        return self.net.transforms.inverse(self.gamma_ref * np.exp(self.mu(z)))

    def _feasible(self, mu) -> bool:
        return bool(np.all(np.log(self.gamma_ref) + mu < self.log_sigma))

    def value(self, z) -> float:
        mu = self.mu(z)
        if not self._feasible(mu):
            return math.inf
        tr = self.net.transforms
        x = self.state(z)
        # int_0^mu gamma^{-1}(gamma(ref) e^s) ds = h(x) - h(ref),  h(w) = w rho(w) - F(w)
        h = x * tr.rho(x) - tr.log_antiderivative(x)
        total = np.sum(h - self._h_ref + self.reference - self.b * mu)
        total += np.sum(self.weights * np.exp(self.src_delayed @ mu))
        return float(total)

    def full_gradient(self, mu, x):
        return x - self.b + (self.weights * np.exp(self.src_delayed @ mu)) @ self.src_delayed

    def full_hessian(self, mu, x):
        w = self.weights * np.exp(self.src_delayed @ mu)
        return np.diag(self.net.transforms.gamma_over_derivative(x)) + (self.src_delayed.T * w) @ self.src_delayed

    def gradient(self, z):
        mu = self.mu(z)
        return self.B @ self.full_gradient(mu, self.state(z))

    def hessian(self, z):
        mu = self.mu(z)
        return self.B @ self.full_hessian(mu, self.state(z)) @ self.B.T


@dataclass
class ClassEquilibriumResult:
    x: np.ndarray
    mu: np.ndarray
    z: np.ndarray
    iterations: int
    gradient_norm: float
    values: list[float]
    cholesky_ok: bool
    class_residual: float = 0.0

    def to_dict(self, names=None) -> dict:
        out = {
            "x": self.x.tolist(),
            "mu": self.mu.tolist(),
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "class_residual": self.class_residual,
        }
        if names is not None:
            out["species"] = list(names)
        return out


def minimize_class_objective(problem: ClassEquilibriumProblem, max_iter: int = NEWTON_MAX_ITER) -> ClassEquilibriumResult:
    """Damped Newton with Armijo backtracking, starting from z = 0."""
    d = problem.dim
    z = np.zeros(d)
    g = problem.value(z)
    values = [g]
    cholesky_ok = True
    grad = problem.gradient(z) if d else np.zeros(0)
    it = 0
    while d and np.max(np.abs(grad)) > GRAD_TOL:
        if it >= max_iter:
            raise EquilibriumError(f"Newton did not converge in {max_iter} iterations (|grad| = {np.max(np.abs(grad)):.3g})")
        H = problem.hessian(z)
        try:
            chol = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            cholesky_ok = False
            raise EquilibriumError("reduced Hessian is not positive definite") from None
        step = -np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        slope = float(grad @ step)
        t = 1.0
        slack = 8 * np.finfo(float).eps * max(1.0, abs(g))
        while True:
            trial = z + t * step
            g_new = problem.value(trial)
            if g_new <= g + ARMIJO * t * slope + slack:
                break
            t *= 0.5
            if t < 1e-16:
                raise EquilibriumError("line search failed to make progress")
        z, g = trial, g_new
        values.append(g)
        grad = problem.gradient(z)
        it += 1
    x = problem.state(z) if d else problem.reference.copy()
    return ClassEquilibriumResult(
        x=x,
        mu=problem.mu(z) if d else np.zeros(problem.net.n_species),
        z=z,
        iterations=it,
        gradient_norm=float(np.max(np.abs(grad), initial=0.0)),
        values=values,
        cholesky_ok=cholesky_ok,
    )


def solve_class_equilibrium(net: Network, reference, theta, basis: StoichBasis | None = None) -> ClassEquilibriumResult:
    """Unique positive equilibrium in the delayed compatibility class of ``theta``.

    ``reference`` must be a positive complex balanced equilibrium; ``theta``
    is a History (or any callable on [-tau_max, 0]) or a constant vector.
    """
    basis = basis or stoich_bases(net)
    reference = require_complex_balanced(net, reference)
    theta = as_history(net, theta)
    if isinstance(theta, History) and theta.min_value() <= 0:
        raise NetworkError("theta must be strictly positive")
    problem = ClassEquilibriumProblem.from_history(net, reference, theta, basis)
    result = minimize_class_objective(problem)
    result.class_residual = class_distance(net, theta, History.constant(result.x, -max(net.max_delay, 1.0)), basis)
    return result


def class_equilibrium(net: Network, reference, theta) -> np.ndarray:
    return solve_class_equilibrium(net, reference, theta).x


def as_history(net: Network, theta):
    if isinstance(theta, History) or callable(theta):
        return theta
    x = np.asarray(theta, dtype=float)
    if x.shape != (net.n_species,):
        raise NetworkError(f"constant history must have {net.n_species} entries")
    return History.constant(x, -max(net.max_delay, 1.0))
