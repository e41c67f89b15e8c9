"""Property suites run by ``gmsde check`` (and reused by the test-suite).

Each suite returns a list of CheckResult rows.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional

import numpy as np

from .coeffs import CoefficientTriple, make_preset, zero_triple
from .convex import (
    IndicatorInterval,
    ConvexPotential,
    project,
    quadratic,
    yosida_envelope,
    yosida_gradient,
)
from .gbm import TimeGrid, coarsen, qv_band_check, sample_batch
from .gexp import (
    ScenarioSet,
    VolatilityBand,
    VolatilityControl,
    capacity,
    chebyshev_check,
    make_scenario_set,
    sublinear_expectation,
)
from .harness import AveragingExperiment, bdg_empirical_check, run_coupled
from .solver import MSDEProblem, Penalization, Projection, estimate_sup_moment, solve_batch

__all__ = [
    "CheckResult",
    "expectation_axioms",
    "qv_bands",
    "prox_yosida_invariants",
    "discrete_inclusion_checks",
    "chebyshev_suite",
    "bdg_suite",
    "moment_stability",
    "yosida_consistency",
    "reflected_bm_problem",
    "run_all",
]


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str = ""


def unit_sigma_triple() -> CoefficientTriple:
    """f = g = 0, sigma = 1 (scalar state, scalar noise)."""

    def joint(t, x):
        n = x.shape[0]
        return np.zeros((n, 1)), np.zeros((n, 1)), np.ones((n, 1, 1))

    return CoefficientTriple(
        lambda t, x: joint(t, x)[0], lambda t, x: joint(t, x)[1], lambda t, x: joint(t, x)[2],
        joint=joint, name="unit_sigma",
    )


def reflected_bm_problem(n_steps: int, scheme=Projection(), horizon: float = 1.0, x0: float = 0.0) -> MSDEProblem:
    """Brownian motion reflected at 0: indicator of [0, inf), f = g = 0, sigma = 1."""
    return MSDEProblem(
        unit_sigma_triple(), IndicatorInterval(0.0, math.inf), [x0], VolatilityBand(1.0, 1.0),
        scheme, TimeGrid(horizon, n_steps),
    )


# ---------------------------------------------------------------------------


def expectation_axioms(n_matrices: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    fails = {"monotonicity": 0, "constant": 0, "subadditivity": 0, "homogeneity": 0}
    for _ in range(n_matrices):
        s, n = rng.integers(1, 9), rng.integers(1, 50)
        X = rng.normal(size=(s, n))
        Y = X - rng.exponential(size=(s, n))
        Z = rng.normal(size=(s, n))
        c = rng.normal()
        lam = rng.exponential()
        E = lambda A: sublinear_expectation(A).value
        if not E(X) >= E(Y):
            fails["monotonicity"] += 1
        if E(np.full((s, n), c)) != c:
            fails["constant"] += 1
        if not E(X + Z) <= E(X) + E(Z) + 1e-12 * (1 + abs(E(X)) + abs(E(Z))):
            fails["subadditivity"] += 1
        if not math.isclose(E(lam * X), lam * E(X), rel_tol=1e-12, abs_tol=1e-12):
            fails["homogeneity"] += 1
    return [CheckResult(f"axiom:{k}", v == 0, f"{v} failures / {n_matrices}") for k, v in fails.items()]


def qv_bands(band: VolatilityBand, n_paths: int = 50, n_steps: int = 256, seed: int = 0) -> list[CheckResult]:
    scen = make_scenario_set(band, 5, 3, 4, seed)
    grid = TimeGrid(1.0, n_steps)
    bad = 0
    total = 0
    for i, c in enumerate(scen):
        batch = sample_batch(c, grid, [(seed, i, j) for j in range(n_paths)], control_index=i)
        for j in range(n_paths):
            total += 1
            bad += not qv_band_check(batch.path(j), band)
    return [CheckResult("qv_band", bad == 0, f"{bad} of {total} paths outside the envelope")]


def prox_yosida_invariants(pot: ConvexPotential, n_pairs: int = 500, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    d = pot.dimension
    X = rng.normal(scale=4.0, size=(n_pairs, d))
    Y = rng.normal(scale=4.0, size=(n_pairs, d))
    out = []
    lip = mono = 0
    for eps in (1.0, 0.1, 0.01):
        gx, gy = yosida_gradient(X, eps, pot), yosida_gradient(Y, eps, pot)
        dist = np.linalg.norm(X - Y, axis=-1)
        lip += int(np.sum(np.linalg.norm(gx - gy, axis=-1) > dist / eps + 1e-9))
        mono += int(np.sum(np.sum((gx - gy) * (X - Y), axis=-1) < -1e-9))
    out.append(CheckResult("yosida:lipschitz", lip == 0, f"{lip} violations"))
    out.append(CheckResult("yosida:monotone", mono == 0, f"{mono} violations"))
    env = np.stack([yosida_envelope(X, e, pot) for e in (1.0, 0.1, 0.01)])
    bad_env = int(np.sum(np.diff(env, axis=0) < -1e-12 * (1 + np.abs(env[:-1]))))
    out.append(CheckResult("yosida:envelope_increasing", bad_env == 0, f"{bad_env} violations"))
    if pot.is_indicator:
        px, py = project(X, pot), project(Y, pot)
        idem = bool(np.array_equal(project(px, pot), px))
        nonexp = int(np.sum(np.linalg.norm(px - py, axis=-1) > np.linalg.norm(X - Y, axis=-1) + 1e-12))
        out.append(CheckResult("projection:idempotent", idem, ""))
        out.append(CheckResult("projection:nonexpansive", nonexp == 0, f"{nonexp} violations"))
    return out


def discrete_inclusion_checks(exp: AveragingExperiment, eps: Optional[float] = None) -> list[CheckResult]:
    """Variational inequality at every step and monotonicity of coupled pairs."""
    r = run_coupled(exp, eps if eps is not None else exp.eps_list[0])
    return [
        CheckResult("inclusion:variational_inequality", r.vi_failures == 0,
                    f"{r.vi_failures} of {r.vi_checks} step checks failed"),
        CheckResult("inclusion:monotonicity", r.mono_failures == 0,
                    f"{r.mono_failures} of {r.mono_checks} step checks failed"),
    ]


def chebyshev_functionals(batch) -> dict:
    """A family of path functionals for the capacity bound."""
    b = batch.b[:, :, 0]
    qv1 = batch.qv[-1]
    return {
        "B_T": b[:, -1],
        "sup|B|": np.max(np.abs(b), axis=1),
        "B_T^2": b[:, -1] ** 2,
        "QV_T": np.full(batch.n_paths, qv1),
        "B_T^2-QV_T": b[:, -1] ** 2 - qv1,
    }


def chebyshev_suite(bands=None, n_paths: int = 2000, seed: int = 0) -> list[CheckResult]:
    """Capacity Chebyshev bound on 20 (functional, alpha, p) combinations."""
    if bands is None:
        bands = [VolatilityBand(1.0, 1.0), VolatilityBand(0.5, 1.0), VolatilityBand(0.25, 2.0), VolatilityBand(0.0, 4.0)]
    grid = TimeGrid(1.0, 128)
    cases = [(0.5, 1.0), (1.0, 2.0), (2.0, 1.0), (1.5, 3.0), (3.0, 2.0)]
    out = []
    k = 0
    for bi, band in enumerate(bands):
        scen = make_scenario_set(band, 3, 2, 4, seed)
        batches = [sample_batch(c, grid, [(seed, bi, i, j) for j in range(n_paths)], control_index=i)
                   for i, c in enumerate(scen)]
        funcs = [chebyshev_functionals(b) for b in batches]
        names = list(funcs[0])
        for ci, (alpha, p) in enumerate(cases):
            name = names[(bi + ci) % len(names)]
            res = chebyshev_check([f[name] for f in funcs], alpha, p)
            k += 1
            out.append(CheckResult(
                f"chebyshev:{k:02d}:{name}|band=({band.sigma_low_sq},{band.sigma_high_sq}),a={alpha},p={p}",
                res.holds, f"lhs={res.lhs:.4g} rhs={res.rhs:.4g}",
            ))
    return out


def bdg_suite(band: VolatilityBand, n_paths: int = 2000, seed: int = 0) -> list[CheckResult]:
    scen = make_scenario_set(band, 3, 2, 4, seed)
    grid = TimeGrid(1.0, 256)
    res = bdg_empirical_check(1.0, 2.0, scen, grid, n_paths, seed)
    qv1 = bdg_empirical_check(1.0, 1.0, scen, grid, n_paths, seed)
    # Doob: E sup |M|^2 <= 4 E <M>_T, with <M>_T <= sigma_high_sq T
    doob = 4.0 * band.sigma_high_sq
    return [
        CheckResult("bdg:ito_p2", math.isfinite(res.ratio) and res.ratio <= doob,
                    f"ratio={res.ratio:.4g} (Doob bound {doob:g})"),
        CheckResult("bdg:qv_p1", qv1.qv_lhs <= band.sigma_high_sq * qv1.qv_rhs * (1 + 1e-12),
                    f"lhs={qv1.qv_lhs:.4g} rhs={qv1.qv_rhs:.4g}"),
    ]


def moment_stability(exp: AveragingExperiment, n_steps: int = 256, horizon: float = 1.0,
                     tol: float = 0.10) -> tuple[CheckResult, float, float]:
    """Relative change of E^[sup |X|^2] when the step is halved.

    Fine and coarse solutions are driven by the same Brownian increments
    (the coarse path sums pairs of fine increments).
    """
    fine_grid = TimeGrid(horizon, 2 * n_steps)
    scen = make_scenario_set(exp.band, exp.n_constant, exp.n_switching, exp.switch_points,
                             exp.base_seed, horizon=horizon)
    problem = MSDEProblem(exp.triple, exp.potential, np.asarray(exp.x0, float), exp.band,
                          exp.scheme, fine_grid, averaged=exp.averaged)
    coarse_sols, fine_sols = [], []
    for i, c in enumerate(scen):
        seeds = [(exp.base_seed, 7, i, j) for j in range(exp.paths_per_scenario)]
        fine = sample_batch(c, fine_grid, seeds, control_index=i)
        coarse = coarsen(fine, 2)
        fine_sols.append(solve_batch(problem, fine, check=False))
        coarse_sols.append(solve_batch(problem.with_grid(coarse.grid), coarse, check=False))
    e_c = estimate_sup_moment(coarse_sols, 1.0)
    e_f = estimate_sup_moment(fine_sols, 1.0)
    rel = abs(e_c - e_f) / e_f
    return CheckResult("moment_stability", rel < tol, f"coarse={e_c:.6g} fine={e_f:.6g} rel={rel:.3%}"), e_c, e_f


def yosida_consistency(eps_list=(1e-1, 1e-2, 1e-3), n_paths: int = 2000, n_steps: int = 2048,
                       seed: int = 0) -> tuple[CheckResult, list[float]]:
    """Terminal RMS gap between penalization and projection on reflected BM."""
    proj = reflected_bm_problem(n_steps)
    batch = sample_batch(VolatilityControl.constant(1.0), proj.grid, [(seed, j) for j in range(n_paths)])
    x_proj = solve_batch(proj, batch, check=False).x[:, -1, 0]
    gaps = []
    for e in eps_list:
        pen = solve_batch(proj.with_scheme(Penalization(e)), batch, check=False).x[:, -1, 0]
        gaps.append(float(np.sqrt(np.mean((pen - x_proj) ** 2))))
    ok = all(b < a for a, b in zip(gaps, gaps[1:]))
    return CheckResult("yosida_consistency", ok, "gaps=" + ", ".join(f"{g:.4g}" for g in gaps)), gaps


def run_all(exp: AveragingExperiment, quick: bool = False) -> list[CheckResult]:
    n = 500 if quick else 2000
    rows: list[CheckResult] = []
    rows += expectation_axioms()
    rows += qv_bands(exp.band)
    rows += prox_yosida_invariants(exp.potential)
    rows += prox_yosida_invariants(quadratic(1.0))
    rows += discrete_inclusion_checks(exp)
    rows += chebyshev_suite(n_paths=n)
    rows += bdg_suite(exp.band, n_paths=n)
    rows.append(moment_stability(exp)[0])
    rows.append(yosida_consistency(n_paths=n)[0])
    return rows
