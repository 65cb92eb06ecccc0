"""Experiment configuration: strict JSON -> dataclasses.

Unknown keys are errors so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .engine import SystemConfig
from .policies import CONTROLLER_NAMES


class ConfigError(ValueError):
    """Bad experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep: the cross product of the grids, run for each algorithm."""

    base: SystemConfig
    lambda_grid: list[float]
    gamma_grid: list[float]
    m_grid: list[int]
    algorithms: list[str]
    n_replications: int
    output_path: str
    table_cache_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.lambda_grid:
            raise ConfigError("lambda_grid must be non-empty")
        if not self.gamma_grid:
            raise ConfigError("gamma_grid must be non-empty")
        if not self.m_grid:
            raise ConfigError("m_grid must be non-empty")
        if not self.algorithms:
            raise ConfigError("algorithms must be non-empty")
        for name in self.algorithms:
            if name not in CONTROLLER_NAMES:
                raise ConfigError(
                    f"unknown algorithm {name!r}, expected one of "
                    f"{CONTROLLER_NAMES}"
                )
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("algorithms contains duplicates")
        if self.n_replications < 1:
            raise ConfigError("n_replications must be >= 1")
        for lam in self.lambda_grid:
            if lam < 0.0:
                raise ConfigError("lambda_grid entries must be >= 0")
        for g in self.gamma_grid:
            if not 0.0 <= g < 1.0:
                raise ConfigError("gamma_grid entries must lie in [0, 1)")
        for m in self.m_grid:
            if m < 1:
                raise ConfigError("m_grid entries must be >= 1")


def _build_strict(cls, payload: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {where}: {', '.join(sorted(unknown))}"
        )
    return payload


def parse_experiment_spec(payload: dict) -> ExperimentSpec:
    if not isinstance(payload, dict):
        raise ConfigError("experiment spec must be a JSON object")
    _build_strict(ExperimentSpec, payload, "experiment spec")
    if "base" not in payload:
        raise ConfigError("experiment spec needs a 'base' system config")
    base_payload = payload["base"]
    if not isinstance(base_payload, dict):
        raise ConfigError("'base' must be a JSON object")
    _build_strict(SystemConfig, base_payload, "base system config")
    try:
        base = SystemConfig(**base_payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad base system config: {exc}") from exc
    try:
        return ExperimentSpec(
            base=base,
            lambda_grid=[float(x) for x in payload["lambda_grid"]],
            gamma_grid=[float(x) for x in payload["gamma_grid"]],
            m_grid=[int(x) for x in payload["m_grid"]],
            algorithms=list(payload["algorithms"]),
            n_replications=int(payload["n_replications"]),
            output_path=str(payload["output_path"]),
            table_cache_dir=(
                str(payload["table_cache_dir"])
                if payload.get("table_cache_dir") is not None
                else None
            ),
        )
    except KeyError as exc:
        raise ConfigError(f"experiment spec is missing {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad experiment spec: {exc}") from exc


def load_experiment_spec(path: str | Path) -> ExperimentSpec:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_experiment_spec(payload)
