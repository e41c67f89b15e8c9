"""Averaging experiments: coupled original/averaged solves, rate fits,
capacity convergence, plus the Bihari and B-D-G analysis utilities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from .coeffs import AveragedTriple, CoefficientTriple
from .convex import ConvexPotential
from .gbm import PathBatch, TimeGrid, sample_batch
from .gexp import (
    N_STDERR,
    ScenarioSet,
    VolatilityBand,
    capacity_with_stderr,
    make_scenario_set,
    sublinear_expectation,
)
from .solver import (
    AVERAGED,
    ORIGINAL,
    MSDEProblem,
    Penalization,
    Projection,
    coupled_monotonicity,
    solve_batch,
)

__all__ = [
    "AveragingExperiment",
    "CoupledResult",
    "ReportRow",
    "ConvergenceReport",
    "horizon",
    "n_steps_for",
    "run_coupled",
    "run_experiment",
    "fit_rate",
    "monotone_within_stderr",
    "rho_eta",
    "bihari_bound",
    "BDGResult",
    "bdg_empirical_check",
]

MIN_STEPS = 64


@dataclass(frozen=True)
class AveragingExperiment:
    """Everything needed to reproduce one averaging run."""

    triple: CoefficientTriple
    averaged: AveragedTriple
    potential: ConvexPotential
    x0: Sequence[float]
    band: VolatilityBand
    eps_list: Sequence[float] = (0.1, 0.03, 0.01, 0.003)
    p: float = 1.0
    L: float = 1.0
    alpha: float = 0.25
    paths_per_scenario: int = 200
    n_constant: int = 5
    n_switching: int = 3
    switch_points: int = 4
    base_seed: int = 42
    steps_per_unit_time: int = 512
    T_max: float = 100.0
    scheme: Union[Projection, Penalization] = Projection()
    probes_delta2: Sequence[float] = (0.05, 0.1, 0.2)
    allow_growing_horizon: bool = False
    workers: int = 1
    preset: str = ""

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps:
            raise ValueError("eps_list must be non-empty")
        if any(not 0 < e <= 1 for e in eps):
            raise ValueError("eps_list entries must lie in (0, 1]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        if not self.p >= 1:
            raise ValueError("p must be >= 1")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.alpha > 0.5 and not self.allow_growing_horizon:
            raise ValueError("alpha > 1/2 gives a growing horizon; set allow_growing_horizon")
        if self.paths_per_scenario < 2:
            raise ValueError("paths_per_scenario must be >= 2")
        if any(not d > 0 for d in self.probes_delta2):
            raise ValueError("probes_delta2 entries must be positive")
        object.__setattr__(self, "eps_list", eps)
        object.__setattr__(self, "probes_delta2", tuple(float(d) for d in self.probes_delta2))

    def scenarios(self, eps: float) -> ScenarioSet:
        return make_scenario_set(
            self.band, self.n_constant, self.n_switching, self.switch_points,
            self.base_seed, horizon=horizon(eps, self.L, self.alpha, self.T_max),
            label=f"eps={eps:g}",
        )


def horizon(eps: float, L: float, alpha: float, T_max: float = math.inf) -> float:
    """L * eps^(1/2 - alpha), clipped to T_max."""
    return min(L * eps ** (0.5 - alpha), T_max)


def n_steps_for(T: float, steps_per_unit_time: int, minimum: int = MIN_STEPS) -> int:
    return max(minimum, math.ceil(steps_per_unit_time * T - 1e-9))


class CoupledResult(NamedTuple):
    err2p: float
    stderr: float
    capacities: dict
    capacity_stderr: dict
    horizon: float
    n_steps: int
    per_scenario_means: list
    vi_checks: int
    vi_failures: int
    mono_checks: int
    mono_failures: int


def _scenario_run(exp: AveragingExperiment, eps_index: int, scen_index: int, control, grid):
    seeds = [(exp.base_seed, eps_index, scen_index, j) for j in range(exp.paths_per_scenario)]
    batch = sample_batch(control, grid, seeds, dim=1, control_index=scen_index)
    problem = MSDEProblem(
        exp.triple, exp.potential, np.asarray(exp.x0, dtype=float), exp.band, exp.scheme, grid,
        averaged=exp.averaged,
    )
    eps = exp.eps_list[eps_index]
    orig = solve_batch(problem, batch, eps_avg=eps, kind=ORIGINAL, keep_increments=True)
    avg = solve_batch(problem, batch, eps_avg=eps, kind=AVERAGED, keep_increments=True)
    diff = orig.x - avg.x
    sup_abs = np.sqrt(np.max(np.sum(diff * diff, axis=-1), axis=1))
    mc, mf = coupled_monotonicity(orig, avg)
    return {
        "sup_abs": sup_abs,
        "vi": (orig.vi_checks + avg.vi_checks, orig.vi_failures + avg.vi_failures),
        "mono": (mc, mf),
        "batch": batch,
        "orig": orig,
        "avg": avg,
    }


def run_coupled(exp: AveragingExperiment, eps: float, keep: bool = False):
    """One coupled estimate at averaging parameter ``eps``.

    Each (scenario, path) draws one noise path on [0, horizon(eps)] that
    drives both the original and the averaged rescaled equation.  The
    per-path statistic is sup_k |X - Z|^{2p}.
    """
    try:
        eps_index = exp.eps_list.index(float(eps))
    except ValueError:
        raise ValueError(f"eps={eps} is not in the experiment's eps_list") from None
    T = horizon(eps, exp.L, exp.alpha, exp.T_max)
    grid = TimeGrid(T, n_steps_for(T, exp.steps_per_unit_time))
    scen = exp.scenarios(eps)

    jobs = list(enumerate(scen.controls))
    run = lambda job: _scenario_run(exp, eps_index, job[0], job[1], grid)
    if exp.workers > 1:
        with ThreadPoolExecutor(max_workers=exp.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    # results are in scenario order regardless of completion order

    sups = [r["sup_abs"] for r in results]
    est = sublinear_expectation([s ** (2 * exp.p) for s in sups])
    caps, cap_se = {}, {}
    for d2 in exp.probes_delta2:
        c, se, _ = capacity_with_stderr([(s > d2).astype(float) for s in sups])
        caps[d2], cap_se[d2] = c, se
    vi = np.sum([r["vi"] for r in results], axis=0)
    mono = np.sum([r["mono"] for r in results], axis=0)
    out = CoupledResult(
        est.value, est.stderr, caps, cap_se, T, grid.n_steps, est.per_scenario_means,
        int(vi[0]), int(vi[1]), int(mono[0]), int(mono[1]),
    )
    return (out, results) if keep else out


def fit_rate(rows) -> tuple[float, float]:
    """OLS fit of log(err2p) against log(eps): (slope, log_intercept).

    ``rows`` is a sequence of (eps, err2p) pairs or objects with those
    attributes.
    """
    pts = []
    for r in rows:
        e, v = (r.eps, r.err2p) if hasattr(r, "eps") else (r[0], r[1])
        if v > 0:
            pts.append((math.log(e), math.log(v)))
    if len(pts) < 3:
        raise ValueError("rate fit needs at least 3 rows with err2p > 0")
    lx, ly = np.array(pts).T
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def monotone_within_stderr(values: Sequence[float], stderrs: Sequence[float], n_se: float = 2.0) -> bool:
    """Strictly decreasing, except at most one rise no larger than n_se
    combined standard errors."""
    rises = []
    for i in range(len(values) - 1):
        if values[i + 1] >= values[i]:
            rises.append(i)
    if not rises:
        return True
    if len(rises) > 1:
        return False
    i = rises[0]
    se = math.hypot(stderrs[i], stderrs[i + 1])
    return values[i + 1] - values[i] <= n_se * se


@dataclass(frozen=True)
class ReportRow:
    eps: float
    horizon: float
    n_steps: int
    err2p: float
    stderr: float
    capacity: dict
    capacity_stderr: dict


@dataclass
class ConvergenceReport:
    rows: list
    p: float
    L: float
    alpha: float
    probes_delta2: tuple
    slope: Optional[float] = None
    log_intercept: Optional[float] = None
    flags: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def Q(self) -> Optional[float]:
        return None if self.log_intercept is None else math.exp(self.log_intercept)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


SLOPE_FLOOR = 0.5
CAPACITY_PROBE = 0.1


def run_experiment(exp: AveragingExperiment, on_row: Optional[Callable] = None) -> ConvergenceReport:
    """Run every eps in the list and evaluate the pass flags."""
    rows = []
    vi = [0, 0]
    mono = [0, 0]
    for eps in exp.eps_list:
        r = run_coupled(exp, eps)
        row = ReportRow(eps, r.horizon, r.n_steps, r.err2p, r.stderr, r.capacities, r.capacity_stderr)
        rows.append(row)
        vi[0] += r.vi_checks
        vi[1] += r.vi_failures
        mono[0] += r.mono_checks
        mono[1] += r.mono_failures
        if on_row is not None:
            on_row(row)
    rows.sort(key=lambda r: -r.eps)

    rep = ConvergenceReport(rows, exp.p, exp.L, exp.alpha, exp.probes_delta2)
    rep.checks = {"vi_checks": vi[0], "vi_failures": vi[1], "mono_checks": mono[0], "mono_failures": mono[1]}
    rep.flags["monotone_error"] = monotone_within_stderr(
        [r.err2p for r in rows], [r.stderr for r in rows]
    )
    positive = [r for r in rows if r.err2p > 0]
    if len(positive) >= 3:
        rep.slope, rep.log_intercept = fit_rate(positive)
        rep.flags["slope_floor"] = rep.slope >= SLOPE_FLOOR
    else:
        # nothing to fit: all-zero errors are exact convergence
        rep.flags["slope_floor"] = all(r.err2p == 0 for r in rows)
    probe = CAPACITY_PROBE if CAPACITY_PROBE in exp.probes_delta2 else exp.probes_delta2[0]
    rep.flags["capacity_halving"] = rows[-1].capacity[probe] <= 0.5 * rows[0].capacity[probe]
    rep.flags["capacity_chebyshev"] = all(
        r.capacity[d2] <= r.err2p / d2 ** (2 * exp.p) + N_STDERR * r.capacity_stderr[d2]
        for r in rows
        for d2 in exp.probes_delta2
    )
    rep.flags["variational_inequality"] = vi[1] == 0
    rep.flags["monotonicity"] = mono[1] == 0
    return rep


# ---------------------------------------------------------------------------
# analysis utilities


def _check_eta(eta: float) -> None:
    if not 0 < eta < 1 / math.e:
        raise ValueError("eta must lie in (0, 1/e)")


def rho_eta(x, eta: float):
    """x log(1/x) up to eta, continued linearly with slope log(1/eta) - 1."""
    _check_eta(eta)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("rho_eta is defined for x >= 0")
    log_inv_eta = math.log(1.0 / eta)
    xs = np.where((x > 0) & (x <= eta), x, 1.0)
    inner = np.where(x > 0, -xs * np.log(xs), 0.0)
    outer = eta * log_inv_eta + (log_inv_eta - 1.0) * (x - eta)
    out = np.where(x <= eta, inner, outer)
    return float(out) if out.ndim == 0 else out


def bihari_bound(h0: float, delta: float, T: float, eta: float) -> float:
    """h0^exp(-delta T) + h0, i.e. the bound with its constant set to 1."""
    _check_eta(eta)
    if not (delta > 0 and T > 0):
        raise ValueError("delta and T must be positive")
    if h0 < 0:
        raise ValueError("h0 must be nonnegative")
    if h0 == 0:
        return 0.0
    return h0 ** math.exp(-delta * T) + h0


class BDGResult(NamedTuple):
    lhs: float
    rhs: float
    ratio: float
    qv_lhs: float
    qv_rhs: float
    qv_ratio: float
    rhs_realized: float
    lhs_stderr: float


def _ratio(a, b):
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return a / b


def bdg_empirical_check(
    eta: Union[float, Callable],
    p: float,
    scenarios: ScenarioSet,
    grid: TimeGrid,
    n_paths: int,
    seed: int = 0,
) -> BDGResult:
    """Empirical B-D-G constants for integrands evaluated at left endpoints.

    ``eta`` is a constant or a callable (t, B_t) -> values per path.

    Ito integral:  lhs = E^[sup_t |sum eta dB|^p],  rhs = E^[(sum eta^2 h)^{p/2}]
    <B> integral:  qv_lhs = E^[sup_t |sum eta d<B>|^p],
                   qv_rhs = T^{p-1} E^[sum |eta|^p h]
    ``rhs_realized`` replaces h by the realised squared increments dB^2.
    """
    if not p >= 1:
        raise ValueError("p must be >= 1")
    h, T = grid.step, grid.horizon
    times = grid.times[:-1]
    ito_l, ito_r, qv_l, qv_r, real_r = [], [], [], [], []
    for si, control in enumerate(scenarios.controls):
        seeds = [(seed, si, j) for j in range(n_paths)]
        batch = sample_batch(control, grid, seeds, control_index=si)
        db = batch.db[:, :, 0]
        if callable(eta):
            b_left = batch.b[:, :-1, 0]
            vals = np.stack([np.asarray(eta(t, b_left[:, k]), dtype=float) * np.ones(n_paths)
                             for k, t in enumerate(times)], axis=1)
        else:
            vals = np.full(db.shape, float(eta))
        ito = np.cumsum(vals * db, axis=1)
        qv = np.cumsum(vals * batch.dqv[None, :], axis=1)
        ito_l.append(np.max(np.abs(ito), axis=1) ** p)
        ito_r.append(np.sum(vals**2 * h, axis=1) ** (p / 2))
        real_r.append(np.sum(vals**2 * db**2, axis=1) ** (p / 2))
        qv_l.append(np.max(np.abs(qv), axis=1) ** p)
        qv_r.append(T ** (p - 1) * np.sum(np.abs(vals) ** p * h, axis=1))
    lhs_est = sublinear_expectation(ito_l)
    lhs, rhs = lhs_est.value, sublinear_expectation(ito_r).value
    ql, qr = sublinear_expectation(qv_l).value, sublinear_expectation(qv_r).value
    return BDGResult(
        lhs, rhs, _ratio(lhs, rhs), ql, qr, _ratio(ql, qr),
        sublinear_expectation(real_r).value, lhs_est.stderr,
    )
