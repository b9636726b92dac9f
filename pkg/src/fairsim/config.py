"""INI run configuration: a single ``[fairsim]`` section of ``key = value`` lines.

List values are comma separated. Unknown keys or sections are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .experiment import ExperimentPlan

SECTION = "fairsim"


class ConfigError(ValueError):
    """Invalid configuration (maps to exit status 2)."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in _strs(text))


def _strs(text: str) -> tuple[str, ...]:
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _int(text: str) -> int:
    return int(text.strip(), 0)


PLAN_KEYS = {
    "scenarios": _strs,
    "alphas": _floats,
    "mu_levels": _floats,
    "algorithms": _strs,
    "views": _strs,
    "replicates": _int,
    "n_train": _int,
    "n_test": _int,
    "n_candidates": _int,
    "n_features": _int,
    "master_seed": _int,
    "svm_cost": float,
    "knn_max_L": _int,
    "mlp_max_size": _int,
    "sc_test_features": str.strip,
    "censored_ties": str.strip,
}
RUN_KEYS = {
    "preset": str.strip,
    "out": str.strip,
    "threads": _int,
    "bias_level": float,
    "replicate": _int,
    "calibration_datasets": _int,
}


@dataclass(frozen=True)
class RunConfig:
    """Explicit plan keys plus run options; the plan is rebuilt on demand so
    a preset chosen on the command line still yields to keys in the file."""

    plan_values: dict = field(default_factory=dict)
    preset: str | None = None
    out: str | None = None
    threads: int | None = None
    bias_level: float | None = None
    replicate: int = 0
    calibration_datasets: int = 100

    @property
    def plan(self) -> ExperimentPlan:
        return _build_plan(self.preset, self.plan_values)

    def with_overrides(self, *, preset=None, seed=None, out=None) -> "RunConfig":
        cfg = self
        if preset is not None:
            cfg = replace(cfg, preset=preset)
        if seed is not None:
            cfg = replace(cfg, plan_values={**cfg.plan_values, "master_seed": int(seed)})
        if out is not None:
            cfg = replace(cfg, out=str(out))
        cfg.plan  # validate
        return cfg


def _build_plan(preset: str | None, values: dict) -> ExperimentPlan:
    try:
        if preset is not None:
            return ExperimentPlan.preset(preset, **values)
        return ExperimentPlan(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (knn_max_L)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    extra = [s for s in parser.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"{source}: unknown sections {extra}")
    if not parser.has_section(SECTION):
        raise ConfigError(f"{source}: missing [{SECTION}] section")
    plan_values, run_values = {}, {}
    for key, raw in parser.items(SECTION):
        if key in PLAN_KEYS:
            target, conv = plan_values, PLAN_KEYS[key]
        elif key in RUN_KEYS:
            target, conv = run_values, RUN_KEYS[key]
        else:
            raise ConfigError(f"{source}: unknown key {key!r}")
        try:
            target[key] = conv(raw)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {raw!r} ({exc})") from exc
    cfg = RunConfig(plan_values=plan_values, **run_values)
    cfg.plan  # validate now so errors carry the file name
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
