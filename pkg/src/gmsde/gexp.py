"""Volatility uncertainty sets and sublinear expectation estimators.

The uncertainty set of a G-expectation is replaced by a finite family of
piecewise-constant variance-rate controls.  Every estimator here is a
max over scenarios of a classical sample statistic, so reported values are
lower estimates of the true sublinear quantity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "VolatilityBand",
    "VolatilityControl",
    "ScenarioSet",
    "ExpectationEstimate",
    "ChebyshevResult",
    "g_function",
    "make_scenario_set",
    "sublinear_expectation",
    "capacity",
    "capacity_with_stderr",
    "chebyshev_check",
]

# inequality checks allow this many standard errors of slack
N_STDERR = 3.0


@dataclass(frozen=True)
class VolatilityBand:
    """Admissible variance rates [sigma_low_sq, sigma_high_sq] per unit time."""

    sigma_low_sq: float
    sigma_high_sq: float

    def __post_init__(self):
        lo, hi = float(self.sigma_low_sq), float(self.sigma_high_sq)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("band bounds must be finite")
        if lo < 0 or hi <= 0 or lo > hi:
            raise ValueError(
                f"invalid band: need 0 <= sigma_low_sq <= sigma_high_sq and "
                f"sigma_high_sq > 0, got ({lo}, {hi})"
            )
        object.__setattr__(self, "sigma_low_sq", lo)
        object.__setattr__(self, "sigma_high_sq", hi)

    @property
    def degenerate(self) -> bool:
        return self.sigma_low_sq == self.sigma_high_sq

    def contains(self, value: float, rtol: float = 1e-12) -> bool:
        slack = rtol * self.sigma_high_sq
        return self.sigma_low_sq - slack <= value <= self.sigma_high_sq + slack


@dataclass(frozen=True)
class VolatilityControl:
    """Piecewise-constant, right-continuous variance rate.

    ``values[i]`` applies on ``[breakpoints[i], breakpoints[i+1])``; the last
    value holds up to ``horizon``.  Constant controls use an infinite horizon.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    horizon: float = float("inf")

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) == 0 or len(bp) != len(vals):
            raise ValueError("breakpoints and values must be non-empty and of equal length")
        if bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if bp[-1] > self.horizon:
            raise ValueError("breakpoints exceed the control horizon")
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise ValueError("variance rates must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "horizon", float(self.horizon))

    @classmethod
    def constant(cls, value: float) -> "VolatilityControl":
        return cls((0.0,), (value,))

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def at(self, t) -> np.ndarray:
        """Variance rate at time(s) ``t`` (vectorised)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.asarray(self.values)[np.clip(idx, 0, None)]

    def within(self, band: VolatilityBand) -> bool:
        return all(band.contains(v) for v in self.values)


@dataclass(frozen=True)
class ScenarioSet:
    """Finite surrogate of the uncertainty set: one control per scenario."""

    controls: tuple[VolatilityControl, ...]
    band: VolatilityBand
    label: str = ""

    def __post_init__(self):
        controls = tuple(self.controls)
        if not controls:
            raise ValueError("scenario set must be non-empty")
        for c in controls:
            if not c.within(self.band):
                raise ValueError("control values leave the volatility band")
        consts = {c.values[0] for c in controls if c.is_constant}
        if self.band.sigma_low_sq not in consts or self.band.sigma_high_sq not in consts:
            raise ValueError("scenario set must contain both endpoint constant controls")
        object.__setattr__(self, "controls", controls)

    def __len__(self) -> int:
        return len(self.controls)

    def __iter__(self):
        return iter(self.controls)

    def __getitem__(self, i: int) -> VolatilityControl:
        return self.controls[i]

    @classmethod
    def singleton(cls, value: float, label: str = "classical") -> "ScenarioSet":
        """One constant control; sublinear estimators reduce to plain means."""
        return cls((VolatilityControl.constant(value),), VolatilityBand(value, value), label)


def g_function(a, band: VolatilityBand):
    """G(a) = (sigma_high_sq * a^+ - sigma_low_sq * a^-) / 2."""
    a = np.asarray(a, dtype=float)
    out = 0.5 * (band.sigma_high_sq * np.maximum(a, 0.0) - band.sigma_low_sq * np.maximum(-a, 0.0))
    return float(out) if out.ndim == 0 else out


def make_scenario_set(
    band: VolatilityBand,
    n_constant: int,
    n_switching: int,
    switch_points: int,
    seed: int,
    horizon: float = 1.0,
    label: str = "",
) -> ScenarioSet:
    """Build constant controls on an even grid over the band plus random
    piecewise-constant controls.

    Switching controls take ``switch_points`` uniformly spaced breakpoints
    over ``[0, horizon)`` with values drawn uniformly in the band.  The draw
    depends only on ``seed``, so the same values are reused (rescaled in
    time) for any horizon.
    """
    if not isinstance(band, VolatilityBand):
        raise TypeError("band must be a VolatilityBand")
    if n_constant < 2:
        raise ValueError("n_constant must be at least 2")
    if n_switching < 0 or switch_points < 0:
        raise ValueError("n_switching and switch_points must be nonnegative")
    if not horizon > 0:
        raise ValueError("horizon must be positive")

    lo, hi = band.sigma_low_sq, band.sigma_high_sq
    levels = np.linspace(lo, hi, n_constant)
    levels[0], levels[-1] = lo, hi
    controls = [VolatilityControl.constant(v) for v in levels]

    if n_switching:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE7]))
        n_pieces = max(switch_points, 1)
        bp = tuple(horizon * np.arange(n_pieces) / n_pieces)
        for _ in range(n_switching):
            vals = rng.uniform(lo, hi, size=n_pieces)
            controls.append(VolatilityControl(bp, tuple(vals), horizon=horizon))

    return ScenarioSet(tuple(controls), band, label)


class ExpectationEstimate(NamedTuple):
    value: float
    per_scenario_means: list
    argmax_scenario: int
    stderr: float


def _as_scenario_list(samples) -> list[np.ndarray]:
    if isinstance(samples, np.ndarray):
        if samples.ndim == 1:
            samples = samples[None, :]
        rows = [np.asarray(r, dtype=float).ravel() for r in samples]
    else:
        rows = [np.asarray(r, dtype=float).ravel() for r in samples]
    if not rows:
        raise ValueError("empty scenario set")
    for i, r in enumerate(rows):
        if r.size == 0:
            raise ValueError(f"scenario {i} has no samples")
    return rows


def _mean(r: np.ndarray) -> float:
    # clipping to [min, max] keeps constants exact (a float sum of n copies
    # of c divided by n can be off by an ulp) and stays monotone in r
    return float(min(max(r.mean(), r.min()), r.max()))


def sublinear_expectation(samples) -> ExpectationEstimate:
    """Max over scenarios of the per-scenario sample mean.

    ``samples`` is a 2-d array (scenario, sample) or a sequence of 1-d
    arrays, one per scenario.  The estimate is biased low relative to the
    sup over the full uncertainty set.  ``stderr`` is the standard error of
    the maximising scenario's mean.
    """
    rows = _as_scenario_list(samples)
    means = [_mean(r) for r in rows]
    k = int(np.argmax(means))
    r = rows[k]
    se = float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0
    return ExpectationEstimate(means[k], means, k, se)


def capacity_with_stderr(indicator_samples) -> tuple[float, float, int]:
    """(capacity, binomial standard error, argmax scenario)."""
    rows = _as_scenario_list(indicator_samples)
    for r in rows:
        if not np.all((r == 0.0) | (r == 1.0)):
            raise ValueError("indicator samples must be 0/1")
    freqs = [float(r.mean()) for r in rows]
    k = int(np.argmax(freqs))
    p, n = freqs[k], rows[k].size
    return p, float(np.sqrt(p * (1.0 - p) / n)), k


def capacity(indicator_samples) -> float:
    """Max over scenarios of the empirical event frequency."""
    return capacity_with_stderr(indicator_samples)[0]


class ChebyshevResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def chebyshev_check(functional_samples, alpha: float, p: float) -> ChebyshevResult:
    """Compare capacity{|X| > alpha} with E^[|X|^p] / alpha^p."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    rows = _as_scenario_list(functional_samples)
    absx = [np.abs(r) for r in rows]
    lhs, se, _ = capacity_with_stderr([(a > alpha).astype(float) for a in absx])
    rhs = sublinear_expectation([a**p for a in absx]).value / alpha**p
    return ChebyshevResult(lhs, rhs, bool(lhs <= rhs + N_STDERR * se))
