"""Run configuration: defaults < JSON file < command-line flags."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ValidationError
from .pulse import DesignSpec

OUTPUT_ENV = "ROOTFLIP_OUTPUT_DIR"
STRATEGIES = ("deeprf", "mc", "exhaustive", "greedy")
DEFAULT_BUDGET = 500_000

# Small problem for minutes-scale runs.
CI_PROFILE = {"n_points": 256, "nb": 2, "tbw": 4.0, "flip_budget": 5000}
CI_MAX_BUDGET = 5000


@dataclass(frozen=True)
class RunConfig:
    nb: int = 7
    tbw: float = 6.0
    passband_ripple: float = 0.01
    stopband_ripple: float = 0.01
    band_gap: float = 6.0
    n_points: int = 512
    peak_constraint_gauss: float = 0.2
    transition_scale: float = 1.0
    strategy: str = "deeprf"
    flip_budget: int = DEFAULT_BUDGET
    seed: int = 0
    learning_rate: float = 1e-4
    normalize_state: bool = True
    baseline: bool = False
    greedy: bool = True
    memoize: bool = False
    output_dir: str = "rootflip_out"
    reproduction: bool = True
    ci: bool = False
    plots: bool = True

    def validate(self) -> "RunConfig":
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if int(self.flip_budget) != self.flip_budget or self.flip_budget < 0:
            raise ValidationError("flip_budget must be a nonnegative integer")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.ci and self.flip_budget > CI_MAX_BUDGET:
            raise ValidationError(f"the CI profile caps the budget at {CI_MAX_BUDGET}")
        if self.reproduction and self.memoize:
            raise ValidationError("memoization changes evaluation counts; disable reproduction mode")
        self.spec()
        return self

    def spec(self) -> DesignSpec:
        return DesignSpec(nb=self.nb, tbw=self.tbw, passband_ripple=self.passband_ripple,
                          stopband_ripple=self.stopband_ripple, band_gap=self.band_gap,
                          n_points=self.n_points, peak_constraint_gauss=self.peak_constraint_gauss,
                          transition_scale=self.transition_scale)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def field_names():
    return [f.name for f in fields(RunConfig)]


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    unknown = set(data) - set(field_names())
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return data


def build_config(flags: dict, config_path: Optional[str] = None, env=None) -> RunConfig:
    """Merge defaults, the JSON file, the output-dir env var and explicit flags.

    ``flags`` holds only options given on the command line (None = unset).
    """
    env = os.environ if env is None else env
    merged = {}
    if config_path:
        merged.update(load_config_file(config_path))
    ci = flags.get("ci") or merged.get("ci", False)
    if ci:
        base = dict(CI_PROFILE)
        base.update({k: v for k, v in merged.items() if k not in CI_PROFILE})
        merged = base
        merged["ci"] = True
    if env.get(OUTPUT_ENV):
        merged["output_dir"] = env[OUTPUT_ENV]
    merged.update({k: v for k, v in flags.items() if v is not None and k in field_names()})
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    return cfg.validate()
