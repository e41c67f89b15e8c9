"""Explicit Euler integration of the multi-valued inclusion

    dX + d_phi(X) ∋ f(t, X) dt + g(t, X) d<B> + sigma(t, X) dB

and of its time-rescaled form, where every drift is multiplied by eps,
the diffusion by sqrt(eps) and the reflection term by eps.

All routines work on a PathBatch (many paths under one control) and
vectorise over paths.  Coefficients are evaluated at the left endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .coeffs import AveragedTriple, CoefficientTriple
from .convex import (
    ConvexPotential,
    monotonicity_check,
    project,
    prox,
    variational_inequality_check,
    yosida_gradient,
)
from .gbm import GPath, PathBatch, TimeGrid
from .gexp import ExpectationEstimate, VolatilityBand, sublinear_expectation

__all__ = [
    "Projection",
    "Penalization",
    "MSDEProblem",
    "SolutionPath",
    "SolutionBatch",
    "SolverBlowUp",
    "ORIGINAL",
    "AVERAGED",
    "solve_path",
    "solve_rescaled",
    "solve_batch",
    "sup_moment_samples",
    "estimate_sup_moment",
    "coupled_monotonicity",
]

BLOWUP = 1e12
ORIGINAL = "original"
AVERAGED = "averaged"


class SolverBlowUp(FloatingPointError):
    def __init__(self, step: int, path: int, control_index: int = 0):
        self.step, self.path, self.control_index = step, path, control_index
        super().__init__(
            f"state left |x| <= {BLOWUP:g} at step {step} (scenario {control_index}, path {path})"
        )


@dataclass(frozen=True)
class Projection:
    """Exact constraint: project the Euler predictor onto the closed domain."""

    name = "projection"


@dataclass(frozen=True)
class Penalization:
    """Explicit Moreau-Yosida penalty with parameter ``eps_yosida``."""

    eps_yosida: float
    name = "penalization"

    def __post_init__(self):
        if not self.eps_yosida > 0:
            raise ValueError("eps_yosida must be positive")


Scheme = Union[Projection, Penalization]
Triple = Union[CoefficientTriple, AveragedTriple]


@dataclass(frozen=True)
class MSDEProblem:
    triple: Triple
    potential: ConvexPotential
    x0: np.ndarray
    band: VolatilityBand
    scheme: Scheme
    grid: TimeGrid
    averaged: Optional[AveragedTriple] = None

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.triple.d,):
            raise ValueError(f"x0 must have shape ({self.triple.d},)")
        if self.potential.dimension != self.triple.d:
            raise ValueError("potential and coefficient dimensions differ")
        if not bool(self.potential.in_domain(x0)):
            raise ValueError("x0 must lie in the closed domain of the potential")
        if isinstance(self.scheme, Projection) and not self.potential.is_indicator:
            raise ValueError("projection scheme needs an indicator potential")
        if isinstance(self.scheme, Penalization) and self.grid.step > self.scheme.eps_yosida / 2:
            raise ValueError(
                f"explicit penalization needs step <= eps_yosida/2; "
                f"got step={self.grid.step:g}, eps_yosida={self.scheme.eps_yosida:g}"
            )
        if self.averaged is not None and not self.averaged.consistent_with(self.triple):
            raise ValueError("averaged triple shape differs from the original")
        object.__setattr__(self, "x0", x0)

    def with_grid(self, grid: TimeGrid) -> "MSDEProblem":
        return MSDEProblem(self.triple, self.potential, self.x0, self.band, self.scheme, grid, self.averaged)

    def with_scheme(self, scheme: Scheme) -> "MSDEProblem":
        return MSDEProblem(self.triple, self.potential, self.x0, self.band, scheme, self.grid, self.averaged)


@dataclass(frozen=True)
class SolutionPath:
    """One trajectory (X, K).  ``k_variation`` is the running total of |dK|."""

    x: np.ndarray
    k: np.ndarray
    k_variation: np.ndarray
    max_step_k: float
    grid: TimeGrid


@dataclass
class SolutionBatch:
    """Trajectories of all paths in a PathBatch.

    ``x`` and ``k`` have shape (n_paths, n_steps+1, d).  When solved with
    ``keep_increments=True``, ``dk`` holds the per-step K increments and
    ``contact`` the points at which they act as subgradients (the projected
    state, or the prox of the state under penalization).
    """

    x: np.ndarray
    k: np.ndarray
    k_variation: np.ndarray
    max_step_k: np.ndarray
    grid: TimeGrid
    control_index: int = 0
    vi_checks: int = 0
    vi_failures: int = 0
    dk: Optional[np.ndarray] = None
    contact: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    def path(self, i: int) -> SolutionPath:
        return SolutionPath(
            self.x[i], self.k[i], self.k_variation[i], float(self.max_step_k[i]), self.grid
        )


def _noise(sig: np.ndarray, db: np.ndarray) -> np.ndarray:
    # sig (P, d, m); db (P, dim) with dim == m, or dim == 1 driving every column
    if db.shape[1] == sig.shape[2]:
        return np.einsum("pdm,pm->pd", sig, db)
    if db.shape[1] == 1:
        return sig.sum(axis=2) * db
    raise ValueError(f"noise dimension {db.shape[1]} does not match sigma columns {sig.shape[2]}")


def solve_batch(
    problem: MSDEProblem,
    batch: PathBatch,
    eps_avg: float = 1.0,
    kind: str = ORIGINAL,
    check: bool = True,
    keep_increments: bool = False,
) -> SolutionBatch:
    """Integrate every path of ``batch``.

    Step n, with predictor
        xp = x_n + eps f h + eps g dqv_n + sqrt(eps) sigma dB_n,
    Projection:    x_{n+1} = proj(xp),                 eps dK_n = xp - x_{n+1}
    Penalization:  x_{n+1} = xp - eps grad_phi_Y(x_n) h,  dK_n = grad_phi_Y(x_n) h

    With ``check`` the discrete variational inequality is tested at every
    step against the potential's probe points (counted in ``vi_failures``).
    """
    if not 0 < eps_avg <= 1:
        raise ValueError("eps_avg must lie in (0, 1]")
    grid = problem.grid
    if batch.grid != grid:
        raise ValueError("path grid differs from the problem grid")
    if kind == ORIGINAL:
        coeffs = problem.triple
    elif kind == AVERAGED:
        if problem.averaged is None:
            raise ValueError("problem has no averaged triple")
        coeffs = problem.averaged
    else:
        raise ValueError(f"kind must be {ORIGINAL!r} or {AVERAGED!r}")

    pot = problem.potential
    scheme = problem.scheme
    penal = isinstance(scheme, Penalization)
    P, N, d = batch.n_paths, grid.n_steps, problem.triple.d
    h = grid.step
    times = grid.times
    sq_eps = math.sqrt(eps_avg)
    probes = pot.probes() if check else None

    xs = np.empty((P, N + 1, d))
    ks = np.empty((P, N + 1, d))
    var = np.empty((P, N + 1))
    xs[:, 0] = problem.x0
    ks[:, 0] = 0.0
    var[:, 0] = 0.0
    max_dk = np.zeros(P)
    dks = np.empty((P, N, d)) if keep_increments else None
    contacts = np.empty((P, N, d)) if keep_increments else None
    vi_checks = vi_fail = 0

    x = xs[:, 0].copy()
    for n in range(N):
        f, g, sig = coeffs.evaluate(times[n], x)
        xp = x + (eps_avg * h) * f + (eps_avg * batch.dqv[n]) * g + sq_eps * _noise(sig, batch.db[:, n])
        if penal:
            grad = yosida_gradient(x, scheme.eps_yosida, pot)
            dk = grad * h
            contact = x - scheme.eps_yosida * grad
            x_new = xp - eps_avg * dk
        else:
            x_new = project(xp, pot)
            dk = (xp - x_new) / eps_avg
            contact = x_new

        if not np.all(np.abs(x_new) <= BLOWUP):
            bad = int(np.flatnonzero(~np.all(np.abs(x_new) <= BLOWUP, axis=-1))[0])
            raise SolverBlowUp(n, bad, batch.control_index)

        if check:
            for u in probes:
                ok = variational_inequality_check(contact, dk, u, pot, h)
                vi_checks += ok.size
                vi_fail += int(ok.size - np.count_nonzero(ok))

        step_norm = np.linalg.norm(dk, axis=-1)
        np.maximum(max_dk, step_norm, out=max_dk)
        var[:, n + 1] = var[:, n] + step_norm
        ks[:, n + 1] = ks[:, n] + dk
        xs[:, n + 1] = x_new
        if keep_increments:
            dks[:, n] = dk
            contacts[:, n] = contact
        x = x_new

    return SolutionBatch(
        xs, ks, var, max_dk, grid, batch.control_index, vi_checks, vi_fail, dks, contacts
    )


def solve_path(problem: MSDEProblem, gpath: GPath) -> SolutionPath:
    """Single-path solve of the unscaled inclusion."""
    return solve_batch(problem, gpath.as_batch()).path(0)


def solve_rescaled(problem: MSDEProblem, gpath: GPath, eps_avg: float, kind: str = ORIGINAL) -> SolutionPath:
    """Single-path solve of the eps-rescaled inclusion (original or averaged coefficients)."""
    return solve_batch(problem, gpath.as_batch(), eps_avg=eps_avg, kind=kind).path(0)


def _as_state_array(item) -> np.ndarray:
    if isinstance(item, SolutionBatch):
        return item.x
    if isinstance(item, SolutionPath):
        return item.x[None]
    return np.stack([p.x for p in item])


def sup_moment_samples(paths, p: float) -> np.ndarray:
    """sup over grid points of |x|^{2p}, one value per path."""
    x = _as_state_array(paths)
    return np.max(np.sum(x * x, axis=-1), axis=1) ** p


def estimate_sup_moment(paths: Sequence, p: float, detail: bool = False):
    """Sublinear estimate of E^[sup_t |X(t)|^{2p}] from per-scenario path collections."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    if len(paths) == 0:
        raise ValueError("no scenarios supplied")
    est = sublinear_expectation([sup_moment_samples(c, p) for c in paths])
    return est if detail else est.value


def coupled_monotonicity(a: SolutionBatch, b: SolutionBatch) -> tuple[int, int]:
    """Discrete monotonicity of the reflection terms of two solutions sharing
    noise and grid.  Returns (checks, failures)."""
    if a.dk is None or b.dk is None:
        raise ValueError("solve with keep_increments=True to check monotonicity")
    ok = monotonicity_check(a.contact, a.dk, b.contact, b.dk)
    return int(ok.size), int(ok.size - np.count_nonzero(ok))
