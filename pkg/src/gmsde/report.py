"""Writers for rates.csv, summary.json and plot.gp."""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .harness import ConvergenceReport

__all__ = ["fmt", "write_rates_csv", "write_summary_json", "write_plot_script", "summary_dict"]


def fmt(v: float) -> str:
    """17 significant digits; round-trips every double."""
    return format(float(v), ".17g")


def _probe_label(d2: float) -> str:
    return f"capacity@{d2:g}"


def write_rates_csv(report: ConvergenceReport, dest: Path) -> Path:
    dest = Path(dest)
    header = ["eps", "horizon", "err2p", "stderr"] + [_probe_label(d) for d in report.probes_delta2]
    with dest.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in report.rows:
            w.writerow(
                [fmt(r.eps), fmt(r.horizon), fmt(r.err2p), fmt(r.stderr)]
                + [fmt(r.capacity[d]) for d in report.probes_delta2]
            )
    return dest


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def summary_dict(report: ConvergenceReport, cfg_dump: dict, extra: dict | None = None) -> dict:
    out = {
        "version": __version__,
        "preset": cfg_dump.get("preset"),
        "seeds": {"base_seed": cfg_dump.get("base_seed")},
        "slope": _clean(report.slope),
        "intercept": _clean(report.log_intercept),
        "Q": _clean(report.Q),
        "slope_bound": 1.0 - report.alpha,
        "flags": dict(report.flags),
        "passed": report.passed,
        "checks": dict(report.checks),
        "rows": [
            {
                "eps": r.eps,
                "horizon": r.horizon,
                "n_steps": r.n_steps,
                "err2p": r.err2p,
                "stderr": r.stderr,
                "capacity": {f"{d:g}": r.capacity[d] for d in report.probes_delta2},
                "capacity_stderr": {f"{d:g}": r.capacity_stderr[d] for d in report.probes_delta2},
            }
            for r in report.rows
        ],
        "estimator": "lower estimate (max over a finite volatility-scenario family)",
        "config": cfg_dump,
    }
    if extra:
        out.update(extra)
    return out


def write_summary_json(summary: dict, dest: Path) -> Path:
    dest = Path(dest)
    dest.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return dest


def write_plot_script(report: ConvergenceReport, dest: Path, title: str = "averaging error") -> Path:
    """Gnuplot script for log(err2p) against log(eps) with the fitted line."""
    dest = Path(dest)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    lines = [
        f"# generated {stamp}",
        "set datafile separator ','",
        "set key top left",
        "set logscale xy",
        "set xlabel 'eps'",
        "set ylabel 'E^[sup |X - Z|^{2p}]  (lower estimate)'",
        f"set title '{title}'",
    ]
    plot = ["'rates.csv' skip 1 using 1:3:4 with yerrorbars title 'err2p'"]
    if report.slope is not None:
        lines.append(f"fit_slope = {fmt(report.slope)}")
        lines.append(f"fit_intercept = {fmt(report.log_intercept)}")
        plot.append("exp(fit_intercept) * x**fit_slope title sprintf('fit slope %.3f', fit_slope)")
        # reference line with the theoretical exponent through the first point
        r0 = report.rows[0]
        if r0.err2p > 0:
            lines.append(f"bound_slope = {fmt(1.0 - report.alpha)}")
            lines.append(f"anchor = {fmt(r0.err2p / r0.eps ** (1.0 - report.alpha))}")
            plot.append("anchor * x**bound_slope dashtype 2 title 'eps^{1-alpha}'")
    lines.append("plot " + ", \\\n     ".join(plot))
    dest.write_text("\n".join(lines) + "\n")
    return dest
