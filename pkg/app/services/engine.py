"""The MoE-F orchestrator: parallel filters, then robust aggregation, once per tick."""
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Deque, Dict, Iterable, List, Optional

import numpy as np

from app.config import MOEF_HISTORY, MOEF_WORKERS
from app.exceptions import DomainError, MoefError, NumericalFailure, SequenceError
from app.models.state import BeliefState, ExpertFilterState, TickOutput
from app.models.types import IntensityMatrix, ObservationRecord, SimplexVector
from app.schemas.fusion_config import FusionConfig
from app.services.aggregation import aggregate, effective_weights
from app.services.filter import expert_estimate, expert_score, filter_step

logger = logging.getLogger(__name__)


class MoefEngine:
    """Streaming MoE-F engine over a fixed set of N experts.

    Ticks are strictly sequential. With ``parallel=True`` the N filter updates
    of one tick run on a thread pool and aggregation waits for all of them.
    """

    def __init__(self, n_experts: int, config: FusionConfig, parallel: bool = False,
                 history_size: Optional[int] = None, workers: Optional[int] = None):
        if n_experts < 1:
            raise DomainError(f"n_experts must be >= 1, got {n_experts}")
        self.config = config
        self.parallel = parallel
        self.belief = BeliefState(
            experts=tuple(ExpertFilterState(expert=i, pi=SimplexVector.uniform(n_experts))
                          for i in range(n_experts)),
            q=IntensityMatrix.initial(n_experts),
        )
        size = MOEF_HISTORY if history_size is None else history_size
        self.history: Optional[Deque[TickOutput]] = deque(maxlen=size) if size > 0 else None
        self._workers = min(workers or MOEF_WORKERS or n_experts, n_experts)
        self._pool: Optional[ThreadPoolExecutor] = None
        self.total_floor_events = 0
        logger.info(f"Engine initialised: N={n_experts}, loss={config.loss.value}, "
                    f"lambda={config.lambda_}, alpha={config.alpha}, delta={config.delta}, "
                    f"parallel={parallel}")

    @property
    def n(self) -> int:
        return self.belief.n

    def _filter_all(self, obs: ObservationRecord) -> List[ExpertFilterState]:
        belief, cfg = self.belief, self.config

        def step(state: ExpertFilterState) -> ExpertFilterState:
            return filter_step(state, belief.q, obs, cfg, step=belief.t)

        if self.parallel and self.n > 1:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self._workers, thread_name_prefix="moef-filter")
            # map keeps expert order, so results do not depend on scheduling
            return list(self._pool.map(step, belief.experts))
        return [step(state) for state in belief.experts]

    def tick(self, obs: ObservationRecord) -> TickOutput:
        """Process one observation and install the projected Q for the next tick."""
        if obs.n != self.n:
            raise DomainError(f"observation at t={obs.t} has {obs.n} predictions, expected {self.n}")
        last_t = self.belief.last_obs_t
        if last_t is not None and obs.t <= last_t:
            raise SequenceError(f"t must be strictly increasing: got {obs.t} after {last_t}")
        if not obs.is_finite():
            raise NumericalFailure(f"observation at t={obs.t} contains nonfinite values")

        cfg = self.config
        if cfg.is_bce:
            obs = obs.clamped(cfg.eps_f)

        states = self._filter_all(obs)
        F = obs.predictions
        estimates = np.array([expert_estimate(s.pi, F) for s in states])
        scores = np.array([expert_score(obs.y, est, cfg.loss, cfg.eps_f) for est in estimates])
        result = aggregate(scores, estimates, cfg)

        new_belief = BeliefState(
            experts=tuple(states),
            q=result.q_next,
            t=self.belief.t + 1,
            last_obs_t=obs.t,
        )
        floor_events = sum(1 for s in states if s.floored)
        output = TickOutput(
            t=obs.t,
            y=obs.y,
            fused=result.fused,
            estimates=estimates,
            pi_bar=result.pi_bar,
            scores=scores,
            q_next=result.q_next,
            floor_events=floor_events,
            mixture=effective_weights(result.pi_bar, new_belief.posteriors()),
        )
        self.belief = new_belief
        self.total_floor_events += floor_events
        if self.history is not None:
            self.history.append(output)
        logger.debug(f"t={obs.t} fused={output.fused!r} pi_bar={output.pi_bar.tolist()}")
        return output

    def run_stream(self, observations: Iterable[ObservationRecord]) -> List[TickOutput]:
        """Tick through the observations, then release the worker pool.

        The pool is recreated on the next parallel tick. Callers driving ``tick``
        directly with ``parallel=True`` must call ``close`` or use the engine as a
        context manager.
        """
        outputs = []
        try:
            for obs in observations:
                try:
                    outputs.append(self.tick(obs))
                except MoefError as e:
                    raise type(e)(f"tick t={obs.t}: {e}") from e
        finally:
            self.close()
        if self.total_floor_events:
            logger.warning(f"B denominator floored {self.total_floor_events} times so far")
        logger.info(f"Stream finished: {len(outputs)} ticks")
        return outputs

    def snapshot(self) -> Dict[str, object]:
        """Plain-list copy of the current belief state."""
        return {
            "t": self.belief.t,
            "last_obs_t": self.belief.last_obs_t,
            "posteriors": self.belief.posteriors().tolist(),
            "last_losses": [s.last_loss for s in self.belief.experts],
            "q": self.belief.q.entries.tolist(),
        }

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self) -> "MoefEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def init_engine(n_experts: int, config: FusionConfig, **options) -> MoefEngine:
    return MoefEngine(n_experts, config, **options)


def tick(engine: MoefEngine, obs: ObservationRecord) -> TickOutput:
    return engine.tick(obs)


def run_stream(engine: MoefEngine, observations: Iterable[ObservationRecord]) -> List[TickOutput]:
    """Fold ``tick`` over the observations; failures carry the offending t."""
    return engine.run_stream(observations)
