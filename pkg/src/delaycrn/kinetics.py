"""Kinetics transforms gamma(s) = alpha * s**p / (c + s)**q.

Every transform in the family is strictly increasing on (0, inf) with
gamma(0) = 0, so it has a well-defined inverse on [0, sigma) where sigma is
the saturation level.  The logarithm and its antiderivative have closed
forms, which is what the Lyapunov functionals need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TransformError(ValueError):
    """Raised for invalid transform parameters or out-of-domain arguments."""


class SaturationError(TransformError):
    """Raised when inverting a value at or above the saturation level."""


_MAX_DOUBLINGS = 2**10
_LOG_TOL = 1e-15
_MAX_NEWTON = 100


def _excess(a, b):
    """a*log(a/b) - a + b, evaluated without cancellation for a close to b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = (a - b) / b
    return a * np.log1p(d) - b * d


@dataclass(frozen=True)
class RateTransform:
    """One species' kinetics transform ``alpha * s**p / (c + s)**q``.

    The identity (mass action) is the default.  Monotonicity requires
    ``p >= q``; a nonzero denominator exponent requires a positive shift.
    """

    alpha: float = 1.0
    p: float = 1.0
    c: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "p", "c", "q"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise TransformError(f"invalid transform parameters: {name}={value!r} is not a finite number")
        if self.alpha <= 0:
            raise TransformError(f"invalid transform parameters: alpha must be positive, got {self.alpha}")
        if self.p <= 0:
            raise TransformError(f"invalid transform parameters: p must be positive, got {self.p}")
        if self.c < 0 or self.q < 0:
            raise TransformError("invalid transform parameters: c and q must be nonnegative")
        if self.p < self.q:
            raise TransformError(f"invalid transform parameters: p={self.p} < q={self.q} breaks monotonicity")
        if self.q > 0 and self.c == 0:
            raise TransformError("invalid transform parameters: q > 0 requires c > 0")

    @property
    def sigma(self) -> float:
        """Saturation level, the limit of gamma(s) as s grows without bound."""
        if self.p > self.q:
            return math.inf
        return float(self.alpha)

    @property
    def is_identity(self) -> bool:
        return self.alpha == 1 and self.p == 1 and self.q == 0

    def eval(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise TransformError("gamma is only defined for nonnegative arguments")
        out = self.alpha * np.power(s, self.p)
        if self.q:
            out = out / np.power(self.c + s, self.q)
        return out if out.ndim else float(out)

    __call__ = eval

    def log(self, s):
        """rho(s) = log gamma(s) for s > 0."""
        s = _positive(s)
        out = math.log(self.alpha) + self.p * np.log(s)
        if self.q:
            out = out - self.q * np.log(self.c + s)
        return out if np.ndim(out) else float(out)

    def derivative(self, s):
        s = _positive(s)
        out = self.eval(s) * (self.p * (self.c + s) - self.q * s) / (s * (self.c + s))
        return out if np.ndim(out) else float(out)

    def log_antiderivative(self, s):
        """Closed-form F with F' = log gamma and F(0+) = 0."""
        s = _positive(s)
        out = s * math.log(self.alpha) + self.p * (s * np.log(s) - s)
        if self.q:
            cs = self.c + s
            out = out - self.q * (cs * np.log(cs) - s - self.c * math.log(self.c))
        return out if np.ndim(out) else float(out)

    def log_excess(self, s, ref):
        """Integral of log gamma(u) - log gamma(ref) for u from ref to s.

        Algebraically F(s) - F(ref) - log gamma(ref) * (s - ref), regrouped so
        that it stays accurate (and nonnegative) for s near ref.
        """
        s = _positive(s)
        ref = _positive(ref)
        out = self.p * _excess(s, ref)
        if self.q:
            out = out - self.q * _excess(self.c + s, self.c + ref)
        return out if np.ndim(out) else float(out)

    def inverse(self, u: float) -> float:
        """Solve gamma(s) = u for s >= 0.

        Closed forms are used for q == 0 and for the p == q == 1 hyperbola;
        otherwise a doubling bracket followed by Newton on log s, falling
        back to bisection whenever Newton leaves the bracket.
        """
        u = float(u)
        if not math.isfinite(u) or u < 0:
            raise TransformError(f"cannot invert gamma at negative value {u}")
        if u >= self.sigma:
            raise SaturationError(f"saturation exceeded: {u} >= sigma = {self.sigma}")
        if u == 0:
            return 0.0
        if self.q == 0:
            return (u / self.alpha) ** (1.0 / self.p)
        if self.p == 1 and self.q == 1:
            return self.c * u / (self.alpha - u)

        target = math.log(u)
        hi = max(1.0, (u / self.alpha) ** (1.0 / self.p))
        for _ in range(_MAX_DOUBLINGS):
            if self.eval(hi) > u:
                break
            hi *= 2.0
        else:
            raise SaturationError(f"saturation exceeded: no bracket found for {u}")
        lo = 0.0
        s = hi
        for _ in range(_MAX_NEWTON):
            resid = self.log(s) - target
            if resid > 0:
                hi = s
            else:
                lo = s
            # d log gamma / d log s = p - q s / (c + s)
            slope = self.p - self.q * s / (self.c + s)
            step = resid / slope
            if abs(step) <= _LOG_TOL:
                return s * math.exp(-step)
            trial = s * math.exp(-step) if abs(step) < 700 else 0.0
            if not (lo < trial < hi):
                trial = 0.5 * (lo + hi)
            if trial == s:
                return s
            s = trial
        return s


def _positive(s):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise TransformError("argument must be strictly positive")
    return s


IDENTITY = RateTransform()


def gamma_eval(tr: RateTransform, s):
    return tr.eval(s)


def gamma_inverse(tr: RateTransform, u: float) -> float:
    return tr.inverse(u)


def gamma_derivative(tr: RateTransform, s):
    return tr.derivative(s)


def log_gamma_antideriv(tr: RateTransform, s):
    return tr.log_antiderivative(s)


class TransformArray:
    """Species-wise transforms packed into arrays for vectorized evaluation."""

    def __init__(self, transforms):
        self.transforms = tuple(transforms)
        self.alpha = np.array([t.alpha for t in self.transforms], dtype=float)
        self.p = np.array([t.p for t in self.transforms], dtype=float)
        self.c = np.array([t.c for t in self.transforms], dtype=float)
        self.q = np.array([t.q for t in self.transforms], dtype=float)
        self.log_alpha = np.log(self.alpha)
        self.sigma = np.array([t.sigma for t in self.transforms], dtype=float)

    def __len__(self):
        return len(self.transforms)

    def gamma(self, x):
        """Elementwise gamma over the last axis; negative entries map to 0."""
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.alpha * np.power(x, self.p) / np.power(self.c + x, self.q)

    def rho(self, x):
        x = np.asarray(x, dtype=float)
        return self.log_alpha + self.p * np.log(x) - self.q * np.log(self.c + x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.gamma(x) * (self.p * (self.c + x) - self.q * x) / (x * (self.c + x))

    def gamma_over_derivative(self, x):
        """gamma(x) / gamma'(x), which is finite and positive for x > 0."""
        x = np.asarray(x, dtype=float)
        return x * (self.c + x) / (self.p * (self.c + x) - self.q * x)

    def log_antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        cs = self.c + x
        clogc = np.where(self.c > 0, self.c * np.log(np.where(self.c > 0, self.c, 1.0)), 0.0)
        return x * self.log_alpha + self.p * (x * np.log(x) - x) - self.q * (cs * np.log(cs) - x - clogc)

    def log_excess(self, x, ref):
        x = np.asarray(x, dtype=float)
        ref = np.asarray(ref, dtype=float)
        return self.p * _excess(x, ref) - self.q * _excess(self.c + x, self.c + ref)

    def inverse(self, u):
        return np.array([t.inverse(v) for t, v in zip(self.transforms, np.asarray(u, dtype=float))])
