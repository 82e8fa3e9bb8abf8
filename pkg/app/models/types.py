"""Numeric domain types shared by the filter, aggregation and simulator.

All types are immutable after construction: their arrays are private copies
with the write flag cleared, so instances can be shared between threads.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.exceptions import DomainError, NumericalFailure

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
STOCHASTIC_TOL = 1e-9
INTENSITY_ROW_TOL = 1e-10
INTENSITY_OFFDIAG_TOL = 1e-12
# Largest unit-mass error a projected point may carry and still be returned as is
PROJECTION_TOL = 1e-12


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DomainError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _square(arr: np.ndarray, name: str) -> None:
    if arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DomainError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")


@dataclass(frozen=True, eq=False)
class SimplexVector:
    """A probability distribution over the N experts."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights, 1, "SimplexVector")
        if w.size == 0:
            raise DomainError("SimplexVector needs at least one entry")
        if not np.all(np.isfinite(w)):
            raise DomainError("SimplexVector entries must be finite")
        if np.any(w < 0):
            raise DomainError(f"SimplexVector entries must be nonnegative, min is {w.min()}")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"SimplexVector entries must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return int(self.weights.size)

    def __len__(self) -> int:
        return self.n

    def tolist(self) -> list:
        return self.weights.tolist()

    @classmethod
    def uniform(cls, n: int) -> "SimplexVector":
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def one_hot(cls, n: int, k: int) -> "SimplexVector":
        w = np.zeros(n)
        w[k] = 1.0
        return cls(w)


@dataclass(frozen=True, eq=False)
class RowStochasticMatrix:
    """Nonnegative square matrix whose rows are probability distributions."""

    entries: np.ndarray

    def __post_init__(self):
        m = _frozen_array(self.entries, 2, "RowStochasticMatrix")
        _square(m, "RowStochasticMatrix")
        if not np.all(np.isfinite(m)):
            raise DomainError("RowStochasticMatrix entries must be finite")
        if np.any(m < 0):
            raise DomainError(f"RowStochasticMatrix entries must be nonnegative, min is {m.min()}")
        row_sums = m.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > STOCHASTIC_TOL:
            raise DomainError(f"RowStochasticMatrix rows must sum to 1, got {row_sums.tolist()}")
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])


@dataclass(frozen=True, eq=False)
class IntensityMatrix:
    """Generator (Q-matrix) of a continuous-time Markov chain.

    ``checked=False`` admits matrices that break the row-sum invariant; only
    the column-diagonal projection variant builds those.
    """

    entries: np.ndarray
    checked: bool = True

    def __post_init__(self):
        m = _frozen_array(self.entries, 2, "IntensityMatrix")
        _square(m, "IntensityMatrix")
        if not np.all(np.isfinite(m)):
            raise DomainError("IntensityMatrix entries must be finite")
        if self.checked and not validate_intensity(m):
            raise DomainError(
                "IntensityMatrix needs nonnegative off-diagonal entries and zero row sums, "
                f"row sums are {m.sum(axis=1).tolist()}")
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def is_valid(self) -> bool:
        return validate_intensity(self.entries)

    @classmethod
    def zeros(cls, n: int) -> "IntensityMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def initial(cls, n: int) -> "IntensityMatrix":
        """Off-diagonal 1/(N-1), diagonal -1; the 1x1 chain has rate 0."""
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        if n == 1:
            return cls.zeros(1)
        q = np.full((n, n), 1.0 / (n - 1))
        np.fill_diagonal(q, -1.0)
        return cls(q)


@dataclass(frozen=True, eq=False)
class ObservationRecord:
    """One tick: index, realized target and the N expert predictions."""

    t: int
    y: float
    predictions: np.ndarray

    def __post_init__(self):
        p = _frozen_array(self.predictions, 1, "predictions")
        if p.size == 0:
            raise DomainError("an observation needs at least one expert prediction")
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "y", float(self.y))

    @property
    def n(self) -> int:
        return int(self.predictions.size)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.y) and np.all(np.isfinite(self.predictions)))

    def clamped(self, eps_f: float) -> "ObservationRecord":
        """Predictions clipped into [eps_f, 1 - eps_f] (probability streams)."""
        return ObservationRecord(self.t, self.y, np.clip(self.predictions, eps_f, 1.0 - eps_f))


def project_to_simplex(v: Sequence[float], eps_pi: float) -> SimplexVector:
    """Clamp entries below eps_pi to exactly eps_pi and rescale the rest to the remaining mass.

    Points already on the simplex with every entry >= eps_pi come back unchanged,
    so the projection is idempotent.
    """
    arr = np.array(v, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DomainError("cannot project an empty vector")
    finite = np.isfinite(arr)
    if not finite.any():
        raise NumericalFailure("all entries are nonfinite, nothing to project")
    if not finite.all():
        logger.warning(f"Replacing {int((~finite).sum())} nonfinite entries by the simplex floor")
        arr[~finite] = eps_pi
    if arr.min() >= eps_pi and abs(arr.sum() - 1.0) <= PROJECTION_TOL:
        return SimplexVector(arr)

    floored = arr < eps_pi
    while True:
        free = ~floored
        budget = 1.0 - eps_pi * int(floored.sum())
        if not free.any() or budget <= 0:
            return SimplexVector.uniform(arr.size)
        arr[floored] = eps_pi
        arr[free] *= budget / arr[free].sum()
        # rescaling can push further entries under the floor
        newly = free & (arr < eps_pi)
        if not newly.any():
            return SimplexVector(arr)
        floored |= newly


def validate_intensity(q) -> bool:
    """True iff off-diagonals are >= -1e-12 and every |row sum| <= 1e-10."""
    m = np.asarray(q, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        return False
    if not np.all(np.isfinite(m)):
        return False
    off_diagonal = m[~np.eye(m.shape[0], dtype=bool)]
    if off_diagonal.size and off_diagonal.min() < -INTENSITY_OFFDIAG_TOL:
        return False
    return bool(np.max(np.abs(m.sum(axis=1))) <= INTENSITY_ROW_TOL)
