"""Convex potentials, projections, proximal maps and Moreau-Yosida gradients.

Points are numpy arrays whose last axis is the state dimension; leading axes
are treated as a batch, so the solver can call these on (n_paths, d) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ProxConvergenceError",
    "ConvexPotential",
    "IndicatorBox",
    "IndicatorInterval",
    "SmoothConvex",
    "quadratic",
    "zero_potential",
    "project",
    "prox",
    "yosida_gradient",
    "yosida_envelope",
    "variational_inequality_check",
    "monotonicity_check",
    "VACUOUS",
]

PROX_TOL = 1e-10
PROX_MAX_ITER = 200
VI_TOL = 1e-9
MONO_TOL = 1e-9


class ProxConvergenceError(RuntimeError):
    """Raised when the proximal iteration misses its residual tolerance."""


class ConvexPotential:
    """Base class; concrete kinds are IndicatorBox/IndicatorInterval and SmoothConvex."""

    dimension: int = 1
    is_indicator: bool = False

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def in_domain(self, x) -> np.ndarray:
        raise NotImplementedError

    def prox(self, x, eps: float) -> np.ndarray:
        raise NotImplementedError

    def probes(self) -> np.ndarray:
        """A fixed set of points in the domain for variational-inequality checks."""
        raise NotImplementedError


@dataclass(frozen=True)
class IndicatorBox(ConvexPotential):
    """Indicator of a product of closed intervals (bounds may be infinite)."""

    lows: tuple
    highs: tuple
    is_indicator = True

    def __post_init__(self):
        lows = tuple(float(v) for v in np.atleast_1d(self.lows))
        highs = tuple(float(v) for v in np.atleast_1d(self.highs))
        if len(lows) != len(highs) or not lows:
            raise ValueError("lows and highs must have the same nonzero length")
        for lo, hi in zip(lows, highs):
            if np.isnan(lo) or np.isnan(hi):
                raise ValueError("bounds must not be NaN")
            if not (lo <= 0.0 <= hi and lo < hi):
                raise ValueError(f"domain must contain 0 and have nonempty interior, got [{lo}, {hi}]")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)

    @property
    def dimension(self) -> int:
        return len(self.lows)

    @property
    def zero_interior(self) -> bool:
        """True when 0 is strictly interior (boundary-anchored domains like [0, inf) are allowed but flagged)."""
        return all(lo < 0.0 < hi for lo, hi in zip(self.lows, self.highs))

    def _bounds(self):
        return np.asarray(self.lows), np.asarray(self.highs)

    def in_domain(self, x) -> np.ndarray:
        lo, hi = self._bounds()
        x = np.asarray(x, dtype=float)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def value(self, x) -> np.ndarray:
        return np.where(self.in_domain(x), 0.0, np.inf)

    def project(self, x) -> np.ndarray:
        lo, hi = self._bounds()
        return np.clip(np.asarray(x, dtype=float), lo, hi)

    def prox(self, x, eps: float) -> np.ndarray:
        return self.project(x)

    def probes(self) -> np.ndarray:
        lo, hi = self._bounds()
        cands = []
        for a, b in zip(lo, hi):
            a_ = a if np.isfinite(a) else -1.0
            b_ = b if np.isfinite(b) else 1.0
            cands.append([a_, 0.0, b_, 0.5 * (a_ + b_)])
        return np.array(cands).T


class IndicatorInterval(IndicatorBox):
    """Indicator of [low, high] applied to every coordinate."""

    def __init__(self, low: float, high: float, dimension: int = 1):
        super().__init__((low,) * dimension, (high,) * dimension)

    @property
    def low(self) -> float:
        return self.lows[0]

    @property
    def high(self) -> float:
        return self.highs[0]


@dataclass(frozen=True)
class SmoothConvex(ConvexPotential):
    """Finite convex C^1 potential on all of R^d with minimum 0 at the origin.

    ``separable`` means the gradient acts coordinatewise (grad_i depends on
    x_i only); the prox then reduces to scalar monotone root finding.
    ``hessian`` (returning (..., d, d)) enables damped Newton instead.
    """

    value_fn: Callable
    gradient_fn: Callable
    dimension: int = 1
    separable: bool = False
    hessian_fn: Optional[Callable] = None
    name: str = "smooth"

    def __post_init__(self):
        z = np.zeros(self.dimension)
        if abs(float(self.value_fn(z))) > 1e-12:
            raise ValueError("smooth potential must vanish at the origin")

    def value(self, x) -> np.ndarray:
        return np.asarray(self.value_fn(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.gradient_fn(np.asarray(x, dtype=float)), dtype=float)

    def in_domain(self, x) -> np.ndarray:
        return np.ones(np.shape(x)[:-1], dtype=bool)

    def probes(self) -> np.ndarray:
        d = self.dimension
        return np.stack([np.zeros(d), np.ones(d), -np.ones(d), 0.5 * np.ones(d)])

    def _residual(self, v, x, eps):
        return v - x + eps * self.gradient(v)

    def prox(self, x, eps: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.hessian_fn is not None:
            return self._prox_newton(x, eps)
        if self.separable:
            return self._prox_bisect(x, eps)
        return self._prox_fixed_point(x, eps)

    def _prox_newton(self, x, eps):
        v = x.copy()
        eye = np.eye(self.dimension)
        for _ in range(PROX_MAX_ITER):
            r = self._residual(v, x, eps)
            rn = np.linalg.norm(r, axis=-1)
            if np.all(rn <= PROX_TOL):
                return v
            jac = eye + eps * np.asarray(self.hessian_fn(v))
            step = np.linalg.solve(jac, r[..., None])[..., 0]
            # halve the step until the residual norm drops
            t = np.ones(rn.shape)
            for _ in range(30):
                trial = v - t[..., None] * step
                tn = np.linalg.norm(self._residual(trial, x, eps), axis=-1)
                bad = tn > rn
                if not np.any(bad):
                    break
                t = np.where(bad, 0.5 * t, t)
            v = trial
        raise ProxConvergenceError(f"Newton prox did not converge in {PROX_MAX_ITER} steps")

    def _prox_bisect(self, x, eps):
        # separable with minimiser at 0: the root of v - x + eps*grad(v)
        # lies between 0 and x coordinatewise
        lo = np.minimum(x, 0.0)
        hi = np.maximum(x, 0.0)
        v = 0.5 * (lo + hi)
        for _ in range(PROX_MAX_ITER):
            r = self._residual(v, x, eps)
            if np.all(np.abs(r) <= PROX_TOL):
                return v
            pos = r > 0
            hi = np.where(pos, v, hi)
            lo = np.where(pos, lo, v)
            mid = 0.5 * (lo + hi)
            if np.array_equal(mid, v):
                # interval exhausted at float resolution
                return v
            v = mid
        raise ProxConvergenceError(f"bisection prox did not converge in {PROX_MAX_ITER} steps")

    def _prox_fixed_point(self, x, eps):
        v = x.copy()
        for _ in range(PROX_MAX_ITER):
            v_new = x - eps * self.gradient(v)
            if np.all(np.abs(self._residual(v_new, x, eps)) <= PROX_TOL):
                return v_new
            if not np.all(np.isfinite(v_new)):
                break
            v = v_new
        raise ProxConvergenceError(
            f"fixed-point prox did not converge in {PROX_MAX_ITER} steps; "
            "supply hessian_fn or mark the potential separable"
        )


def quadratic(c: float = 1.0, dimension: int = 1) -> SmoothConvex:
    """phi(x) = c |x|^2 / 2."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    return SmoothConvex(
        value_fn=lambda x: 0.5 * c * np.sum(np.square(x), axis=-1),
        gradient_fn=lambda x: c * np.asarray(x),
        dimension=dimension,
        separable=True,
        hessian_fn=lambda x: c * np.broadcast_to(np.eye(dimension), np.shape(x) + (dimension,)),
        name=f"quadratic(c={c})",
    )


def zero_potential(dimension: int = 1) -> SmoothConvex:
    return quadratic(0.0, dimension)


def project(x, pot: ConvexPotential) -> np.ndarray:
    """Euclidean projection onto the closed domain (identity for smooth kinds)."""
    if pot.is_indicator:
        return pot.project(x)
    return np.asarray(x, dtype=float)


def prox(x, eps: float, pot: ConvexPotential) -> np.ndarray:
    """argmin_v |v - x|^2 / (2 eps) + phi(v)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return pot.prox(np.asarray(x, dtype=float), eps)


def yosida_gradient(x, eps: float, pot: ConvexPotential) -> np.ndarray:
    """(x - prox(x)) / eps; 1/eps-Lipschitz and monotone."""
    x = np.asarray(x, dtype=float)
    return (x - prox(x, eps, pot)) / eps


def yosida_envelope(x, eps: float, pot: ConvexPotential) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = prox(x, eps, pot)
    return np.sum((v - x) ** 2, axis=-1) / (2 * eps) + pot.value(v)


VACUOUS = "vacuous"


def variational_inequality_check(x, k_increment, u, pot: ConvexPotential, dt: float):
    """Discrete one-step form: <u - x, dK> - phi(x) dt <= phi(u) dt.

    Returns True/False, or ``VACUOUS`` when phi(u) is infinite (u outside
    the domain of an indicator), in which case nothing is being tested.
    Batched inputs return a boolean array and treat vacuous entries as True.
    """
    x = np.asarray(x, dtype=float)
    dk = np.asarray(k_increment, dtype=float)
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("probe u must be finite")
    phi_u = pot.value(u)
    phi_x = pot.value(x)
    lhs = np.sum((u - x) * dk, axis=-1) - phi_x * dt
    tol = VI_TOL * (1.0 + np.linalg.norm(dk, axis=-1))
    with np.errstate(invalid="ignore"):
        ok = lhs <= phi_u * dt + tol
    vacuous = ~np.isfinite(phi_u)
    if np.ndim(ok) == 0:
        return VACUOUS if bool(vacuous) else bool(ok)
    return ok | vacuous


def monotonicity_check(x1, k1_incr, x2, k2_incr):
    """<x1 - x2, dK1 - dK2> >= -1e-9 (batched over leading axes)."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    k1, k2 = np.asarray(k1_incr, dtype=float), np.asarray(k2_incr, dtype=float)
    ip = np.sum((x1 - x2) * (k1 - k2), axis=-1)
    out = ip >= -MONO_TOL
    return bool(out) if np.ndim(out) == 0 else out
