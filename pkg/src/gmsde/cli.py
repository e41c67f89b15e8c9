"""Command-line entry point.

    gmsde run            [--config cfg.yaml]
    gmsde check          [--config cfg.yaml]
    gmsde demo-example4  [--config cfg.yaml]

Exit codes: 0 success, 1 I/O or config error, 2 a pass flag failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_all
from .coeffs import AVERAGING_FACTOR, averaging_deviation, cesaro_deviation, example4_averaged
from .config import ConfigError, ExperimentConfig, build_experiment, load_config
from .gbm import sample_batch, write_path_csv, TimeGrid
from .harness import AveragingExperiment, horizon, n_steps_for, run_experiment
from .report import fmt, summary_dict, write_plot_script, write_rates_csv, write_summary_json

log = logging.getLogger("gmsde")

EXIT_OK, EXIT_IO, EXIT_FLAGS = 0, 1, 2


def _prepare_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write-test"
    probe.write_text("")
    probe.unlink()
    return path


def _dump_paths(exp: AveragingExperiment, out: Path) -> None:
    for ei, eps in enumerate(exp.eps_list):
        T = horizon(eps, exp.L, exp.alpha, exp.T_max)
        grid = TimeGrid(T, n_steps_for(T, exp.steps_per_unit_time))
        for si, control in enumerate(exp.scenarios(eps)):
            seeds = [(exp.base_seed, ei, si, j) for j in range(exp.paths_per_scenario)]
            batch = sample_batch(control, grid, seeds, control_index=si)
            for j in range(batch.n_paths):
                write_path_csv(batch.path(j), out / "paths" / f"eps{ei}_s{si}_p{j}.csv")


def _run_and_write(cfg: ExperimentConfig, exp: AveragingExperiment, out: Path, extra=None, title=""):
    _prepare_dir(out)
    report = run_experiment(
        exp,
        on_row=lambda r: log.info("eps=%g horizon=%.4g err2p=%.6g +- %.2g", r.eps, r.horizon, r.err2p, r.stderr),
    )
    write_rates_csv(report, out / "rates.csv")
    write_summary_json(summary_dict(report, cfg.model_dump(mode="json"), extra), out / "summary.json")
    write_plot_script(report, out / "plot.gp", title or exp.preset)
    if cfg.emit_paths:
        _dump_paths(exp, out)
    for name, ok in report.flags.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if report.slope is not None:
        print(f"slope = {report.slope:.4f}  (bound exponent {1 - exp.alpha:g}), Q = {report.Q:.4g}")
    print(f"wrote {out}")
    return report


def cmd_run(cfg: ExperimentConfig) -> int:
    exp = build_experiment(cfg)
    report = _run_and_write(cfg, exp, Path(cfg.output_dir))
    return EXIT_OK if report.passed else EXIT_FLAGS


def cmd_check(cfg: ExperimentConfig) -> int:
    exp = build_experiment(cfg)
    rows = run_all(exp)
    width = max(len(r.name) for r in rows)
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FLAGS


DEMO_XS = (math.pi / 4, math.pi / 2, 1.0)
DEMO_T1 = (math.pi, 2 * math.pi, 10.0, 100.0)


def example4_diagnostics(cfg: ExperimentConfig, exp: AveragingExperiment) -> dict:
    fbar_ref = float(example4_averaged(10_000, 1).f_bar(np.array([[math.pi / 2]]))[0, 0])
    rows = []
    for x in DEMO_XS:
        for t1 in DEMO_T1:
            dev = averaging_deviation(exp.triple, exp.averaged, x, t1)
            ces = cesaro_deviation(exp.triple, exp.averaged, x, t1)
            rows.append({
                "x": x, "T1": t1,
                "dev_f": dev.dev_f, "dev_g": dev.dev_g, "dev_sigma_sq": dev.dev_sigma_sq,
                "cesaro_f": ces.dev_f, "cesaro_g": ces.dev_g, "cesaro_sigma_sq": ces.dev_sigma_sq,
            })
    return {"fbar_pi_over_2_k1e4": fbar_ref, "averaging_factor": AVERAGING_FACTOR, "deviations": rows}


def cmd_demo_example4(cfg: ExperimentConfig) -> int:
    exp = build_experiment(cfg, preset="example4")
    out = Path(cfg.output_dir) / "demo-example4"
    _prepare_dir(out)
    diag = example4_diagnostics(cfg, exp)
    with (out / "deviations.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(diag["deviations"][0])
        w.writerow(keys)
        for r in diag["deviations"]:
            w.writerow([fmt(r[k]) for k in keys])
    print(f"f_bar(pi/2) [K=1e4] = {diag['fbar_pi_over_2_k1e4']:.8f}")
    for r in diag["deviations"]:
        print(f"x={r['x']:.4f} T1={r['T1']:8.3f}  |f-fbar| avg={r['dev_f']:.5f}  signed avg={r['cesaro_f']:.5f}")
    report = _run_and_write(cfg, exp, out, extra={"example4": diag}, title="example4 (sine family)")
    return EXIT_OK if report.passed else EXIT_FLAGS


COMMANDS = {"run": cmd_run, "check": cmd_check, "demo-example4": cmd_demo_example4}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmsde", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON or YAML experiment config")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
