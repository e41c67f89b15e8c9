"""Experiment configuration: parsing, validation, serialisation.

Configs are JSON or YAML mappings.  Unknown keys are errors.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .coeffs import make_preset
from .convex import IndicatorBox, IndicatorInterval, quadratic, zero_potential
from .gexp import VolatilityBand
from .harness import AveragingExperiment
from .solver import Penalization, Projection

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "dump_config",
    "build_experiment",
    "OUTPUT_DIR_ENV",
]

OUTPUT_DIR_ENV = "GMSDE_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class IntervalSpec(_Strict):
    kind: Literal["interval"] = "interval"
    low: float = -5.0
    high: float = 5.0


class BoxSpec(_Strict):
    kind: Literal["box"]
    lows: List[float]
    highs: List[float]


class QuadraticSpec(_Strict):
    kind: Literal["quadratic"]
    c: float = Field(1.0, ge=0)


class ZeroSpec(_Strict):
    kind: Literal["zero"]


PotentialSpec = Annotated[
    Union[IntervalSpec, BoxSpec, QuadraticSpec, ZeroSpec], Field(discriminator="kind")
]


class BandSpec(_Strict):
    sigma_low_sq: float = Field(0.5, ge=0)
    sigma_high_sq: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.sigma_low_sq > self.sigma_high_sq:
            raise ValueError("sigma_low_sq must not exceed sigma_high_sq")
        return self


class SchemeSpec(_Strict):
    kind: Literal["projection", "penalization"] = "projection"
    eps_yosida: float = Field(1e-2, gt=0)


class ExperimentConfig(_Strict):
    preset: Literal["example4", "decaying", "zero", "bs_market"] = "decaying"
    gamma: float = Field(1.0, ge=0)
    k_trunc: int = Field(1000, ge=1)
    m: int = Field(1000, ge=1)
    market_b: float = 0.05
    market_beta: float = 0.0
    market_sigma: float = 0.2

    potential: PotentialSpec = IntervalSpec()
    scheme: SchemeSpec = SchemeSpec()
    x0: float = 1.0
    band: BandSpec = BandSpec()

    p: float = Field(1.0, ge=1)
    alpha: float = Field(0.25, gt=0, lt=1)
    L: float = Field(1.0, gt=0)
    T_max: float = Field(100.0, gt=0)
    allow_growing_horizon: bool = False
    eps_list: List[float] = Field(default_factory=lambda: [0.1, 0.03, 0.01, 0.003], min_length=1)
    paths_per_scenario: int = Field(200, ge=2)
    n_constant: int = Field(5, ge=2)
    n_switching: int = Field(3, ge=0)
    switch_points: int = Field(4, ge=1)
    steps_per_unit_time: int = Field(512, ge=1)
    base_seed: int = Field(42, ge=0)
    workers: int = Field(1, ge=1)

    probes_delta2: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2], min_length=1)
    output_dir: str = "results"
    emit_paths: bool = False

    @field_validator("eps_list")
    @classmethod
    def _eps(cls, v):
        if any(not 0 < e <= 1 for e in v):
            raise ValueError("entries must lie in (0, 1]")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("must be strictly decreasing")
        return v

    @field_validator("probes_delta2")
    @classmethod
    def _probes(cls, v):
        if any(not d > 0 for d in v):
            raise ValueError("entries must be positive")
        return v

    @model_validator(mode="after")
    def _cross(self):
        if self.alpha > 0.5 and not self.allow_growing_horizon:
            raise ValueError("alpha > 0.5 requires allow_growing_horizon: true")
        return self


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "invalid config: " + "; ".join(lines)


def parse_config(text: str) -> ExperimentConfig:
    """Parse a JSON/YAML document into a validated config with defaults applied."""
    try:
        data = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Read a config file (or defaults when ``path`` is None) and apply the
    output-directory environment override."""
    text = Path(path).read_text() if path else ""
    cfg = parse_config(text)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        cfg = cfg.model_copy(update={"output_dir": env})
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True)


def build_potential(spec):
    if spec.kind == "interval":
        return IndicatorInterval(spec.low, spec.high)
    if spec.kind == "box":
        return IndicatorBox(tuple(spec.lows), tuple(spec.highs))
    if spec.kind == "quadratic":
        return quadratic(spec.c)
    return zero_potential()


def build_experiment(cfg: ExperimentConfig, preset: Optional[str] = None) -> AveragingExperiment:
    name = preset or cfg.preset
    triple, averaged = make_preset(
        name, gamma=cfg.gamma, k_trunc=cfg.k_trunc, m=cfg.m,
        market_b=cfg.market_b, market_beta=cfg.market_beta, market_sigma=cfg.market_sigma,
    )
    scheme = Projection() if cfg.scheme.kind == "projection" else Penalization(cfg.scheme.eps_yosida)
    try:
        potential = build_potential(cfg.potential)
        band = VolatilityBand(cfg.band.sigma_low_sq, cfg.band.sigma_high_sq)
    except ValueError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return AveragingExperiment(
        triple=triple,
        averaged=averaged,
        potential=potential,
        x0=[cfg.x0],
        band=band,
        eps_list=tuple(cfg.eps_list),
        p=cfg.p,
        L=cfg.L,
        alpha=cfg.alpha,
        paths_per_scenario=cfg.paths_per_scenario,
        n_constant=cfg.n_constant,
        n_switching=cfg.n_switching,
        switch_points=cfg.switch_points,
        base_seed=cfg.base_seed,
        steps_per_unit_time=cfg.steps_per_unit_time,
        T_max=cfg.T_max,
        scheme=scheme,
        probes_delta2=tuple(cfg.probes_delta2),
        allow_growing_horizon=cfg.allow_growing_horizon,
        workers=cfg.workers,
        preset=name,
    )
