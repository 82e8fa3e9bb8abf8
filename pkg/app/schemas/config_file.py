"""KEY=VALUE configuration files shared by ``run`` and ``simulate``.

One file may carry engine settings, scenario parameters or both; each command
takes the part it needs. Any key outside both sets is rejected.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from app.exceptions import ConfigError
from app.schemas.fusion_config import FusionConfig
from app.schemas.scenario import ExpertSpec, NoiseSpec, Scenario

logger = logging.getLogger(__name__)

FUSION_KEYS = {"loss", "lambda", "alpha", "delta", "eps_f", "eps_b", "eps_pi", "dt", "q_diag"}
SCENARIO_KEYS = {
    "q_true", "experts", "noise_c", "noise_decay", "noise_delta",
    "t_max", "sim_dt", "seed", "y0", "initial_state", "target",
}


def delta_to_decay(delta: float) -> float:
    """Volatility decay rate equivalent to the noise hyperparameter delta."""
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}")
    return math.log(1.0 / delta ** 4)


def decay_to_delta(decay: float) -> float:
    if decay < 0:
        raise ConfigError(f"decay must be >= 0, got {decay}")
    return math.exp(-decay / 4.0)


@dataclass
class ConfigFile:
    path: str
    fusion: Dict[str, str] = field(default_factory=dict)
    scenario: Dict[str, str] = field(default_factory=dict)


def read_config_file(path: str) -> ConfigFile:
    """Parse a KEY=VALUE file, splitting engine keys from scenario keys."""
    try:
        raw = dotenv_values(path)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    config = ConfigFile(path=str(path))
    unknown = []
    for key, value in raw.items():
        name = key.strip().lower()
        if value is None:
            raise ConfigError(f"{path}: key '{key}' has no value")
        if name in FUSION_KEYS:
            config.fusion[name] = value.strip()
        elif name in SCENARIO_KEYS:
            config.scenario[name] = value.strip()
        else:
            unknown.append(key)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(sorted(unknown))}")
    logger.info(f"Loaded {len(config.fusion)} engine and {len(config.scenario)} scenario keys from {path}")
    return config


def fusion_config_from(values: Dict[str, str], **overrides) -> FusionConfig:
    data = {("eps_B" if k == "eps_b" else k): v for k, v in values.items()}
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return FusionConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_first_error(e)) from e


def _parse_matrix(text: str) -> List[List[float]]:
    rows = [r for r in text.split(";") if r.strip()]
    return [[float(x) for x in row.split(",")] for row in rows]


def scenario_from(values: Dict[str, str], seed: Optional[int] = None) -> Scenario:
    """Build a validated Scenario from scenario-file values."""
    missing = [k for k in ("q_true", "experts", "t_max") if k not in values]
    if missing:
        raise ConfigError(f"scenario is missing keys {', '.join(missing)}")
    if "noise_decay" in values and "noise_delta" in values:
        raise ConfigError("give either noise_decay or noise_delta, not both")
    try:
        decay = float(values.get("noise_decay", 0.0))
        if "noise_delta" in values:
            decay = delta_to_decay(float(values["noise_delta"]))
        data = {
            "q_true": _parse_matrix(values["q_true"]),
            "experts": [ExpertSpec.parse(s) for s in values["experts"].split(";") if s.strip()],
            "noise": NoiseSpec(c=float(values.get("noise_c", 1.0)), decay=decay),
            "t_max": int(values["t_max"]),
            "dt": float(values.get("sim_dt", 1.0)),
            "seed": int(values.get("seed", 0)) if seed is None else seed,
            "y0": float(values.get("y0", 0.0)),
        }
        if "initial_state" in values:
            data["initial_state"] = int(values["initial_state"])
        if "target" in values:
            data["target"] = values["target"].strip().lower()
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_first_error(e)) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _first_error(error: ValidationError) -> str:
    details = error.errors()
    if not details:
        return str(error)
    first = details[0]
    location = ".".join(str(part) for part in first.get("loc", ())) or "value"
    return f"{location}: {first.get('msg', 'invalid value')}"
