"""Synthetic regime-switching targets with known hidden states.

A hidden Markov chain w picks which expert's output drives the target:

    y_k = y_{k-1} + F_{w_{k-1}} * dt + sigma_{(k-1) dt} * sqrt(dt) * xi_k

with sigma_t = C * exp(-decay * t). Observation k (k = 1..t_max) carries y_k,
the expert outputs that drove the step into it, and w_{k-1} as ground truth.

Every draw comes from one ``numpy.random.Generator(PCG64(seed))`` in a fixed
order: initial state (when not given), t_max - 1 chain uniforms, t_max normals.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from app.exceptions import DomainError
from app.models.types import IntensityMatrix, ObservationRecord, RowStochasticMatrix, SimplexVector
from app.schemas.scenario import ExpertKind, Scenario, TargetKind

logger = logging.getLogger(__name__)

GENERATOR_NAME = "numpy.random.PCG64"


@dataclass(frozen=True, eq=False)
class SimulatedPath:
    observations: List[ObservationRecord]
    # hidden[k - 1] is the expert driving observation k
    hidden: np.ndarray
    generator: str = GENERATOR_NAME
    seed: int = 0

    def __post_init__(self):
        if len(self.observations) != len(self.hidden):
            raise DomainError(
                f"{len(self.observations)} observations but {len(self.hidden)} hidden states")

    def __len__(self) -> int:
        return len(self.observations)


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def transition_matrix(q: IntensityMatrix, dt: float) -> RowStochasticMatrix:
    """exp(Q dt) by scaling and squaring, clipped and renormalized to be stochastic."""
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    p = np.clip(expm(q.entries * dt), 0.0, None)
    return RowStochasticMatrix(p / p.sum(axis=1, keepdims=True))


def _sample_chain(q: IntensityMatrix, t_max: int, dt: float, rng: np.random.Generator,
                  initial_state: Optional[int] = None) -> np.ndarray:
    n = q.n
    if initial_state is None:
        initial_state = int(rng.integers(n))
    elif not 0 <= initial_state < n:
        raise DomainError(f"initial_state {initial_state} outside [0, {n})")
    draws = rng.random(max(t_max - 1, 0))
    states = np.full(t_max, initial_state, dtype=np.int64)
    if not np.any(q.entries):
        return states
    cumulative = np.cumsum(transition_matrix(q, dt).entries, axis=1)
    current = initial_state
    for k, u in enumerate(draws, start=1):
        current = min(int(np.searchsorted(cumulative[current], u, side="right")), n - 1)
        states[k] = current
    return states


def sample_hidden_chain(q: IntensityMatrix, t_max: int, dt: float, seed: int,
                        initial_state: Optional[int] = None) -> np.ndarray:
    """t_max states of the chain with generator Q, sampled with the exact exp(Q dt)."""
    if t_max < 0:
        raise DomainError(f"t_max must be >= 0, got {t_max}")
    return _sample_chain(q, t_max, dt, make_generator(seed), initial_state)


def _expert_outputs(scenario: Scenario, k: int, history: np.ndarray) -> np.ndarray:
    return np.array([e.predict(k, k * scenario.dt, history) for e in scenario.experts])


def simulate_target(scenario: Scenario) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of a path: y_0..y_T, hidden w_0..w_{T-1} and the T x N expert outputs."""
    rng = make_generator(scenario.seed)
    t_max, dt = scenario.t_max, scenario.dt
    hidden = _sample_chain(scenario.q, t_max, dt, rng, scenario.initial_state)
    xi = rng.standard_normal(t_max)
    steps = np.arange(t_max)
    noise = scenario.noise.sigma(steps * dt) * np.sqrt(dt) * xi

    if all(e.kind != ExpertKind.LAG for e in scenario.experts):
        outputs = np.column_stack([e.predict_series(steps * dt) for e in scenario.experts])
        drift = outputs[steps, hidden] * dt
        y = np.concatenate([[scenario.y0], scenario.y0 + np.cumsum(drift + noise)])
        return y, hidden, outputs

    # lag experts read the target itself, so the path is built step by step
    y = np.empty(t_max + 1)
    y[0] = scenario.y0
    outputs = np.empty((t_max, scenario.n_experts))
    for k in steps:
        outputs[k] = _expert_outputs(scenario, int(k), y[:k + 1])
        y[k + 1] = y[k] + outputs[k, hidden[k]] * dt + noise[k]
    return y, hidden, outputs


def synthesize(scenario: Scenario) -> SimulatedPath:
    """Observation records of a path; drift targets report (y_k - y_{k-1}) / dt, what constant experts forecast."""
    y, hidden, outputs = simulate_target(scenario)
    observed = y[1:] if scenario.target == TargetKind.LEVEL else np.diff(y) / scenario.dt
    observations = [ObservationRecord(t=k + 1, y=observed[k], predictions=outputs[k])
                    for k in range(scenario.t_max)]
    logger.info(f"Synthesized {scenario.t_max} ticks for {scenario.n_experts} experts "
                f"with {GENERATOR_NAME} seed={scenario.seed}")
    return SimulatedPath(observations=observations, hidden=hidden, seed=scenario.seed)


def stationary_distribution(q: IntensityMatrix) -> SimplexVector:
    """Least-squares solution of pi Q = 0 with unit mass."""
    n = q.n
    system = np.vstack([q.entries.T, np.ones((1, n))])
    rhs = np.concatenate([np.zeros(n), [1.0]])
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return SimplexVector(pi / pi.sum())


def noise_variance(c: float, decay: float, t: float) -> float:
    """Variance accumulated by the residual noise up to time t."""
    if decay < 0 or t < 0:
        raise DomainError(f"decay and t must be >= 0, got decay={decay}, t={t}")
    if decay == 0:
        return float(c * c * t)
    return float(c * c * (1.0 - np.exp(-2.0 * decay * t)) / (2.0 * decay))
