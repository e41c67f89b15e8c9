"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from gmsde import cli
from gmsde.checks import (
    chebyshev_suite,
    expectation_axioms,
    moment_stability,
    reflected_bm_problem,
    yosida_consistency,
)
from gmsde.coeffs import example4_averaged, make_preset, averaging_deviation
from gmsde.config import OUTPUT_DIR_ENV, build_experiment, parse_config
from gmsde.gbm import TimeGrid, sample_batch
from gmsde.gexp import VolatilityControl
from gmsde.solver import solve_batch

SQRT_2_OVER_PI = 0.797884560802865
FBAR_TARGET = (2 / math.pi) * 0.915966

ACCEPTANCE_CONFIG = """
preset: decaying
gamma: 1.0
potential: {kind: interval, low: -5, high: 5}
p: 1
alpha: 0.25
L: 1
eps_list: [0.1, 0.03, 0.01, 0.003]
paths_per_scenario: 200
n_constant: 5
n_switching: 3
base_seed: 42
"""

# step-check totals accumulated by every acceptance run that integrates the inclusion
INCLUSION_TALLY = {"vi_checks": 0, "vi_failures": 0, "mono_checks": 0, "mono_failures": 0}


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def acceptance_run(tmp_path_factory):
    """Criterion 8's experiment, run twice through the CLI into separate directories."""
    outs = []
    for i in range(2):
        d = tmp_path_factory.mktemp(f"accept{i}")
        cfg = d / "cfg.yaml"
        cfg.write_text(ACCEPTANCE_CONFIG + f"output_dir: {d / 'out'}\n")
        mp = pytest.MonkeyPatch()
        mp.delenv(OUTPUT_DIR_ENV, raising=False)
        try:
            (code, seconds) = timed(lambda: cli.main(["run", "--config", str(cfg)]))
        finally:
            mp.undo()
        outs.append((code, seconds, d / "out"))
    return outs


def test_criterion_01_expectation_axioms():
    rows, secs = timed(lambda: expectation_axioms(100))
    ok = all(r.passed for r in rows) and secs < 1.0
    record(1, "expectation axioms on 100 matrices", ok,
           ", ".join(f"{r.name}={r.detail}" for r in rows) + f"; {secs:.2f}s")
    assert ok


def test_criterion_02_degenerate_band():
    def run():
        grid = TimeGrid(1.0, 64)
        batch = sample_batch(VolatilityControl.constant(1.0), grid, [(2, j) for j in range(10_000)])
        return batch

    batch, secs = timed(run)
    qv_exact = batch.qv[-1] == 1.0
    b1 = batch.b[:, -1, 0]
    var = b1.var(ddof=1)
    se = math.sqrt(np.var((b1 - b1.mean()) ** 2, ddof=1) / b1.size)
    ok = qv_exact and abs(var - 1.0) <= 3 * se and secs < 5.0
    record(2, "degenerate band", ok, f"<B>_1={batch.qv[-1]!r}, Var(B_1)={var:.5f} (3SE={3 * se:.5f}); {secs:.2f}s")
    assert ok


def test_criterion_03_reflected_oracle():
    def run():
        prob = reflected_bm_problem(1024)
        finals = []
        for chunk in range(4):
            seeds = [(3, chunk * 2500 + j) for j in range(2500)]
            batch = sample_batch(VolatilityControl.constant(1.0), prob.grid, seeds)
            sol = solve_batch(prob, batch, check=True)
            INCLUSION_TALLY["vi_checks"] += sol.vi_checks
            INCLUSION_TALLY["vi_failures"] += sol.vi_failures
            finals.append(sol.x[:, -1, 0])
        return np.concatenate(finals)

    x1, secs = timed(run)
    mean = x1.mean()
    se = x1.std(ddof=1) / math.sqrt(x1.size)
    ok = abs(mean - SQRT_2_OVER_PI) <= 3 * se and secs < 30.0
    # mean of the discrete scheme itself (running max of a Gaussian walk), for the record
    walk = SQRT_2_OVER_PI - 1.4603545088095868 * math.sqrt(2.0**-10) / math.sqrt(2 * math.pi)
    record(3, "reflected oracle", ok,
           f"mean={mean:.5f} target={SQRT_2_OVER_PI:.5f} |diff|={abs(mean - SQRT_2_OVER_PI):.5f} "
           f"3SE={3 * se:.5f} (scheme bias at h=2^-10: {walk - SQRT_2_OVER_PI:+.5f}); {secs:.1f}s")
    assert ok


def test_criterion_04_chebyshev_suite():
    rows, secs = timed(chebyshev_suite)
    failed = [r.name for r in rows if not r.passed]
    ok = len(rows) == 20 and not failed and secs < 30.0
    record(4, "Chebyshev capacity bound", ok, f"{len(rows) - len(failed)}/{len(rows)} hold; {secs:.1f}s")
    assert ok


def test_criterion_06_yosida_consistency():
    (res, gaps), secs = timed(yosida_consistency)
    ok = res.passed and secs < 60.0
    record(6, "Yosida consistency", ok, f"{res.detail}; {secs:.1f}s")
    assert ok


def test_criterion_07_moment_stability():
    exp = build_experiment(parse_config(ACCEPTANCE_CONFIG))
    (res, e_c, e_f), secs = timed(lambda: moment_stability(exp))
    record(7, "moment stability under step halving", res.passed, f"{res.detail}; {secs:.1f}s")
    assert res.passed


def test_criterion_08_averaging_convergence(acceptance_run):
    import json

    code, secs, out = acceptance_run[0]
    s = json.loads((out / "summary.json").read_text())
    f = s["flags"]
    errs = ", ".join(f"{r['err2p']:.4g}" for r in s["rows"])
    ok = f["monotone_error"] and f["slope_floor"] and s["slope"] >= 0.5 and secs < 600
    record(8, "averaging convergence", ok,
           f"err2p=[{errs}], slope={s['slope']:.3f} (floor 0.5, bound 0.75); {secs:.0f}s")
    assert ok


def test_criterion_09_capacity_convergence(acceptance_run):
    import json

    s = json.loads((acceptance_run[0][2] / "summary.json").read_text())
    caps = [r["capacity"]["0.1"] for r in s["rows"]]
    ok = s["flags"]["capacity_halving"] and s["flags"]["capacity_chebyshev"] and caps[-1] <= 0.5 * caps[0]
    record(9, "capacity convergence", ok, f"capacity@0.1=[{', '.join(f'{c:.4g}' for c in caps)}]")
    assert ok


def test_criterion_05_discrete_inclusion(acceptance_run):
    import json

    s = json.loads((acceptance_run[0][2] / "summary.json").read_text())
    for key in ("vi_checks", "vi_failures", "mono_checks", "mono_failures"):
        INCLUSION_TALLY[key] += s["checks"][key]
    t = INCLUSION_TALLY
    ok = t["vi_checks"] > 0 and t["mono_checks"] > 0 and t["vi_failures"] == 0 and t["mono_failures"] == 0
    record(5, "discrete variational inequality and monotonicity", ok,
           f"VI {t['vi_failures']}/{t['vi_checks']} failed, monotonicity {t['mono_failures']}/{t['mono_checks']} failed")
    assert ok


def test_criterion_10_example4_demo():
    fbar = float(example4_averaged(10_000, 1).f_bar(np.array([[math.pi / 2]]))[0, 0])
    tr, av = make_preset("example4")
    devs = [averaging_deviation(tr, av, [math.pi / 2], t1).dev_f for t1 in (2 * math.pi, 10.0, 100.0)]
    ok = abs(fbar - FBAR_TARGET) < 1e-4 and all(d > 0.5 for d in devs)
    record(10, "sine-family demo", ok,
           f"f_bar(pi/2)={fbar:.8f} target={FBAR_TARGET:.8f}; "
           f"dev_f(pi/2; T1=2pi,10,100)=[{', '.join(f'{d:.4f}' for d in devs)}] (does not vanish)")
    assert ok


def test_criterion_11_determinism(acceptance_run):
    a = (acceptance_run[0][2] / "rates.csv").read_bytes()
    b = (acceptance_run[1][2] / "rates.csv").read_bytes()
    ok = a == b and len(a) > 0
    record(11, "byte-identical rates.csv on rerun", ok, f"{len(a)} bytes, identical={a == b}")
    assert ok
