import math
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.types import IntensityMatrix, validate_intensity

# Largest dt * max|Q_ii| accepted for a synthetic chain
MAX_JUMP_MASS = 0.1
MAX_SEED = 2 ** 64 - 1


class ExpertKind(str, Enum):
    CONSTANT = "constant"
    SINUSOID = "sinusoid"
    LAG = "lag"


class TargetKind(str, Enum):
    """What each observation reports: the level y_k or the per-tick drift (y_k - y_{k-1}) / dt."""

    LEVEL = "level"
    DRIFT = "drift"


class ExpertSpec(BaseModel):
    """A synthetic expert: constant, sinusoid or lag-of-target."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ExpertKind = Field(..., description="Shape of the expert's output")
    value: float = Field(0.0, description="Output of a constant expert")
    amplitude: float = Field(1.0, description="Sinusoid amplitude")
    period: float = Field(1.0, gt=0, description="Sinusoid period, in time units")
    phase: float = Field(0.0, description="Sinusoid phase, in radians")
    lag: int = Field(1, ge=1, description="Lag-of-target expert repeats y at t - lag")

    def predict(self, k: int, time: float, history: np.ndarray) -> float:
        """Output at tick ``k`` (time ``time``); ``history`` holds y_0..y_k."""
        if self.kind == ExpertKind.CONSTANT:
            return self.value
        if self.kind == ExpertKind.SINUSOID:
            return self.amplitude * math.sin(2.0 * math.pi * time / self.period + self.phase)
        # before the first full lag the initial value is all there is
        return float(history[max(k - self.lag, 0)])

    def predict_series(self, times: np.ndarray) -> np.ndarray:
        """Outputs over a whole time grid; lag experts need the target and go through ``predict``."""
        times = np.asarray(times, dtype=np.float64)
        if self.kind == ExpertKind.CONSTANT:
            return np.full(times.shape, self.value)
        if self.kind == ExpertKind.SINUSOID:
            return self.amplitude * np.sin(2.0 * np.pi * times / self.period + self.phase)
        raise ValueError("a lag expert depends on the target path")

    def describe(self) -> str:
        if self.kind == ExpertKind.CONSTANT:
            return f"constant:{self.value!r}"
        if self.kind == ExpertKind.SINUSOID:
            return f"sinusoid:{self.amplitude!r},{self.period!r},{self.phase!r}"
        return f"lag:{self.lag}"

    @classmethod
    def parse(cls, text: str) -> "ExpertSpec":
        """Parse ``constant:c``, ``sinusoid:amp,period,phase`` or ``lag:k``."""
        kind, _, args = text.strip().partition(":")
        kind = kind.strip().lower()
        values = [a.strip() for a in args.split(",")] if args.strip() else []
        if kind == ExpertKind.CONSTANT.value and len(values) == 1:
            return cls(kind=kind, value=float(values[0]))
        if kind == ExpertKind.SINUSOID.value and len(values) in (2, 3):
            phase = float(values[2]) if len(values) == 3 else 0.0
            return cls(kind=kind, amplitude=float(values[0]), period=float(values[1]), phase=phase)
        if kind == ExpertKind.LAG.value and len(values) == 1:
            return cls(kind=kind, lag=int(values[0]))
        raise ValueError(f"cannot parse expert spec '{text}'")


class NoiseSpec(BaseModel):
    """Residual volatility sigma_t = c * exp(-decay * t)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    c: float = Field(1.0, ge=0, le=1, description="Initial volatility C")
    decay: float = Field(0.0, ge=0, description="Exponential decay rate of the volatility")

    def sigma(self, time: np.ndarray) -> np.ndarray:
        return self.c * np.exp(-self.decay * np.asarray(time, dtype=np.float64))


class Scenario(BaseModel):
    """A regime-switching synthetic stream with known hidden states."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    q_true: List[List[float]] = Field(..., description="Intensity matrix of the hidden chain")
    experts: List[ExpertSpec] = Field(..., min_length=1, description="One spec per expert")
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    t_max: int = Field(..., ge=1, description="Number of ticks to generate")
    dt: float = Field(1.0, gt=0, description="Time elapsed per tick")
    seed: int = Field(0, ge=0, le=MAX_SEED, description="Seed of the PCG64 generator")
    y0: float = Field(0.0, description="Initial target value")
    target: TargetKind = Field(TargetKind.LEVEL, description="Observed quantity: level or drift")
    initial_state: Optional[int] = Field(
        None, ge=0, description="Hidden state at t=0; drawn uniformly when omitted")

    @model_validator(mode="after")
    def _check_chain(self):
        q = np.asarray(self.q_true, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"q_true must be square, got shape {q.shape}")
        if not validate_intensity(q):
            raise ValueError(
                "q_true is not an intensity matrix: off-diagonal entries must be >= 0 "
                "and every row must sum to 0")
        if q.shape[0] != len(self.experts):
            raise ValueError(f"q_true is {q.shape[0]}x{q.shape[0]} but there are {len(self.experts)} experts")
        jump_mass = self.dt * float(np.max(np.abs(np.diag(q))))
        if jump_mass > MAX_JUMP_MASS:
            raise ValueError(
                f"dt * max|Q_ii| = {jump_mass:.4g} exceeds {MAX_JUMP_MASS}; reduce dt or the rates")
        if self.initial_state is not None and self.initial_state >= q.shape[0]:
            raise ValueError(f"initial_state {self.initial_state} outside [0, {q.shape[0]})")
        return self

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    @property
    def q(self) -> IntensityMatrix:
        return IntensityMatrix(np.asarray(self.q_true, dtype=np.float64))
