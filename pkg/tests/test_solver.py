import math

import numpy as np
import pytest

from gmsde.checks import reflected_bm_problem, unit_sigma_triple
from gmsde.coeffs import make_preset, zero_triple
from gmsde.convex import IndicatorInterval, quadratic, zero_potential
from gmsde.gbm import TimeGrid, sample_batch, sample_path
from gmsde.gexp import VolatilityBand, VolatilityControl
from gmsde.solver import (
    AVERAGED,
    ORIGINAL,
    MSDEProblem,
    Penalization,
    Projection,
    SolverBlowUp,
    coupled_monotonicity,
    estimate_sup_moment,
    solve_batch,
    solve_path,
    solve_rescaled,
    SolutionPath,
)
from gmsde.coeffs import bs_market_triple

E_SUP_B2 = 1.831931188354438  # E sup_{t<=1} B_t^2 = 2 * Catalan's constant
ONE = VolatilityBand(1.0, 1.0)
UNIT_C = VolatilityControl.constant(1.0)


def test_problem_validation():
    g = TimeGrid(1.0, 64)
    tr = unit_sigma_triple()
    with pytest.raises(ValueError):
        MSDEProblem(tr, IndicatorInterval(-1, 1), [2.0], ONE, Projection(), g)
    with pytest.raises(ValueError):
        MSDEProblem(tr, quadratic(), [0.0], ONE, Projection(), g)
    with pytest.raises(ValueError):
        MSDEProblem(tr, quadratic(), [0.0], ONE, Penalization(0.01), g)  # step > eps_y/2
    with pytest.raises(ValueError):
        Penalization(0.0)


def test_zero_potential_transports_noise():
    g = TimeGrid(1.0, 128)
    prob = MSDEProblem(unit_sigma_triple(), zero_potential(), [0.0], ONE, Penalization(1.0), g)
    path = sample_path(UNIT_C, g, 4)
    sol = solve_path(prob, path)
    np.testing.assert_allclose(sol.x[:, 0], path.b[:, 0], atol=1e-12)
    assert np.all(sol.k == 0)


def test_zero_coefficients_stay_put():
    g = TimeGrid(1.0, 32)
    prob = MSDEProblem(zero_triple(), IndicatorInterval(-1, 1), [0.25], ONE, Projection(), g)
    sol = solve_path(prob, sample_path(UNIT_C, g, 1))
    assert np.all(sol.x == 0.25) and np.all(sol.k == 0)


def test_solution_invariants():
    prob = reflected_bm_problem(256)
    batch = sample_batch(UNIT_C, prob.grid, list(range(50)))
    sol = solve_batch(prob, batch)
    assert np.all(sol.k[:, 0] == 0)
    assert np.all(sol.x >= 0)
    assert np.all(np.isfinite(sol.k_variation))
    assert np.all(np.diff(sol.k_variation, axis=1) >= 0)
    assert sol.vi_checks > 0 and sol.vi_failures == 0


def test_reflected_bm_terminal_mean_small():
    prob = reflected_bm_problem(256)
    batch = sample_batch(UNIT_C, prob.grid, [(1, j) for j in range(4000)])
    x1 = solve_batch(prob, batch, check=False).x[:, -1, 0]
    # coarse grid: allow the O(sqrt(h)) discretisation deficit on top of 3 SE
    se = x1.std(ddof=1) / math.sqrt(x1.size)
    assert abs(x1.mean() - math.sqrt(2 / math.pi)) <= 3 * se + 0.6 * math.sqrt(prob.grid.step)


def test_rescaled_unit_eps_equals_solve_path():
    tr, av = make_preset("decaying", k_trunc=20, m=20)
    g = TimeGrid(2.0, 128)
    prob = MSDEProblem(tr, IndicatorInterval(-5, 5), [1.0], ONE, Projection(), g, averaged=av)
    p = sample_path(UNIT_C, g, 8)
    np.testing.assert_array_equal(solve_rescaled(prob, p, 1.0).x, solve_path(prob, p).x)


def test_rescaled_small_eps_stays_near_x0():
    g = TimeGrid(1.0, 256)
    prob = MSDEProblem(unit_sigma_triple(), IndicatorInterval(-5, 5), [1.0], ONE, Projection(), g)
    batch = sample_batch(UNIT_C, g, list(range(200)))
    eps = 1e-8
    x = solve_batch(prob, batch, eps_avg=eps).x[:, :, 0]
    rms = np.sqrt(np.mean((x - 1.0) ** 2))
    assert rms <= 3 * math.sqrt(eps)


def test_gamma_zero_original_equals_averaged():
    tr, av = make_preset("decaying", gamma=0.0, k_trunc=20, m=20)
    g = TimeGrid(1.0, 64)
    prob = MSDEProblem(tr, IndicatorInterval(-5, 5), [1.0], ONE, Projection(), g, averaged=av)
    batch = sample_batch(VolatilityControl.constant(1.0), g, list(range(10)))
    a = solve_batch(prob, batch, eps_avg=0.1, kind=ORIGINAL)
    b = solve_batch(prob, batch, eps_avg=0.1, kind=AVERAGED)
    np.testing.assert_array_equal(a.x, b.x)


def test_monotonicity_of_coupled_solutions():
    tr, av = make_preset("decaying", k_trunc=20, m=20)
    g = TimeGrid(2.0, 256)
    prob = MSDEProblem(tr, IndicatorInterval(-0.5, 0.5), [0.2], ONE, Projection(), g, averaged=av)
    batch = sample_batch(VolatilityControl.constant(1.0), g, list(range(40)))
    a = solve_batch(prob, batch, 0.5, ORIGINAL, keep_increments=True)
    b = solve_batch(prob, batch, 0.5, AVERAGED, keep_increments=True)
    checks, failures = coupled_monotonicity(a, b)
    assert checks == 40 * 256 and failures == 0
    with pytest.raises(ValueError):
        coupled_monotonicity(solve_batch(prob, batch), b)


def test_penalization_vi_at_contact_points():
    prob = reflected_bm_problem(1024, scheme=Penalization(0.01))
    batch = sample_batch(UNIT_C, prob.grid, list(range(30)))
    sol = solve_batch(prob, batch)
    assert sol.vi_failures == 0


def test_k_continuity_under_refinement():
    """Largest K step shrinks like sqrt(h) (Brownian increments)."""
    prob = reflected_bm_problem(512)
    fine = prob.with_grid(TimeGrid(1.0, 1024))
    seeds = list(range(300))
    a = solve_batch(prob, sample_batch(UNIT_C, prob.grid, seeds), check=False).max_step_k.mean()
    b = solve_batch(fine, sample_batch(UNIT_C, fine.grid, seeds), check=False).max_step_k.mean()
    assert b <= a * 1.2 / math.sqrt(2)


def test_blowup_reported():
    g = TimeGrid(1.0, 64)
    prob = MSDEProblem(bs_market_triple(1e3, 0.0, 0.0), IndicatorInterval(-1, math.inf), [1.0], ONE, Projection(), g)
    with pytest.raises(SolverBlowUp) as info:
        solve_path(prob, sample_path(UNIT_C, g, 0))
    assert "step" in str(info.value)


def test_sup_moment_examples():
    paths = [[SolutionPath(np.full((5, 1), 1.5), np.zeros((5, 1)), np.zeros(5), 0.0, TimeGrid(1.0, 4))]]
    assert estimate_sup_moment(paths, 1.0) == pytest.approx(1.5**2)
    assert estimate_sup_moment(paths, 2.0) == pytest.approx(1.5**4)
    prob = reflected_bm_problem(64)
    s = solve_batch(prob, sample_batch(UNIT_C, prob.grid, list(range(20))))
    doubled = type(s)(2 * s.x, s.k, s.k_variation, s.max_step_k, s.grid)
    assert estimate_sup_moment([doubled], 1.0) == pytest.approx(4 * estimate_sup_moment([s], 1.0), rel=1e-12)


def test_sup_moment_brownian_oracle():
    """x = B (constraint never active): sup B^2 near 2G, with the discrete-sup
    deficit shrinking as the grid is refined."""
    g = TimeGrid(1.0, 1024)
    prob = MSDEProblem(unit_sigma_triple(), IndicatorInterval(-1e6, 1e6), [0.0], ONE, Projection(), g)
    batch = sample_batch(UNIT_C, g, [(2, j) for j in range(10_000)])
    sol = solve_batch(prob, batch, check=False)
    est = estimate_sup_moment([sol], 1.0, detail=True)
    assert est.value <= E_SUP_B2 + 3 * est.stderr
    # discrete sup misses at most about 2*1.25*0.5826*sqrt(h) of the continuous value
    assert est.value >= E_SUP_B2 - 3 * est.stderr - 1.5 * math.sqrt(g.step)


def test_reflected_bm_matches_discrete_walk_oracle():
    """Projected Euler on [0, inf) from 0 is the Lindley recursion, so X_N is
    the running maximum of a Gaussian random walk; its mean is
    sqrt(2T/pi) + zeta(1/2) sqrt(h) / sqrt(2 pi) up to o(sqrt(h))."""
    prob = reflected_bm_problem(1024)
    batch = sample_batch(UNIT_C, prob.grid, [(11, j) for j in range(10_000)])
    x1 = solve_batch(prob, batch, check=False).x[:, -1, 0]
    zeta_half = -1.4603545088095868
    oracle = math.sqrt(2 / math.pi) + zeta_half * math.sqrt(prob.grid.step) / math.sqrt(2 * math.pi)
    se = x1.std(ddof=1) / math.sqrt(x1.size)
    assert abs(x1.mean() - oracle) <= 3 * se
