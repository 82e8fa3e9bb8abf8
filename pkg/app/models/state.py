from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from app.exceptions import DomainError
from app.models.types import IntensityMatrix, SimplexVector


@dataclass(frozen=True)
class ExpertFilterState:
    """Posterior and loss memory of the filter watching expert ``expert``."""

    expert: int
    pi: SimplexVector
    last_loss: float = 0.0
    # None until the first tick; the sensitivity is 0 without a predecessor
    last_prediction: Optional[float] = None
    # Whether the last update floored the B denominator
    floored: bool = False

    def __post_init__(self):
        if not np.isfinite(self.last_loss):
            raise DomainError(f"last_loss of expert {self.expert} must be finite")
        if not 0 <= self.expert < self.pi.n:
            raise DomainError(f"expert index {self.expert} outside [0, {self.pi.n})")


@dataclass(frozen=True)
class BeliefState:
    """The whole mutable state of MoE-F, replaced wholesale at every tick."""

    experts: Tuple[ExpertFilterState, ...]
    q: IntensityMatrix
    # Number of ticks processed so far
    t: int = 0
    last_obs_t: Optional[int] = None

    def __post_init__(self):
        n = len(self.experts)
        if n < 1:
            raise DomainError("a belief state needs at least one expert")
        if self.q.n != n:
            raise DomainError(f"Q is {self.q.n}x{self.q.n} but there are {n} experts")
        if any(state.pi.n != n for state in self.experts):
            raise DomainError(f"every posterior must have {n} entries")

    @property
    def n(self) -> int:
        return len(self.experts)

    def posteriors(self) -> np.ndarray:
        """N x N matrix whose row n is the posterior of filter n."""
        return np.vstack([state.pi.weights for state in self.experts])


@dataclass(frozen=True, eq=False)
class TickOutput:
    t: int
    y: float
    fused: float
    estimates: np.ndarray
    pi_bar: SimplexVector
    scores: np.ndarray
    q_next: IntensityMatrix
    floor_events: int = 0
    # Expert-level weights actually applied to the predictions (pi_bar^T Pi)
    mixture: np.ndarray = field(default=None)
