"""Step 1 of MoE-F: N parallel discretized Wonham-Shiryaev filters.

Filter n watches only the running loss of expert n and keeps a posterior over
which of the N experts currently drives the target. The update is the
Euler-Maruyama step of the filtering equation: a drift through the current
intensity matrix plus a diffusion driven by the innovation of the loss.
"""
import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.exceptions import DomainError, NumericalFailure
from app.models.state import ExpertFilterState
from app.models.types import IntensityMatrix, ObservationRecord, SimplexVector, project_to_simplex
from app.schemas.fusion_config import FusionConfig, LossKind

logger = logging.getLogger(__name__)

LossLike = Union[LossKind, str]

TWO_TO_THREE_HALVES = 2.0 ** 1.5


def _kind(loss: LossLike) -> LossKind:
    return loss if isinstance(loss, LossKind) else LossKind(str(loss).strip().lower())


def _decay_factor(t: float, delta: float, power: int) -> float:
    """e^{t power ln(delta)}: underflows to 0 for tiny deltas, exactly 1 when delta = 1."""
    if delta <= 0:
        raise DomainError(f"delta must be > 0, got {delta}")
    return math.exp(t * power * math.log(delta))


def _check_probability(f_n: float) -> None:
    if not 0.0 < f_n < 1.0:
        raise DomainError(f"BCE needs a clamped prediction in (0, 1), got {f_n!r}")


def expert_sensitivity(f_now: float, f_prev: Optional[float]) -> float:
    """Backward difference of the expert's output; 0 without a predecessor."""
    if f_prev is None:
        return 0.0
    return float(f_now) - float(f_prev)


def helper_a_all(loss: LossLike, y: float, f_n: float, delta_f_n: float,
                 F: Sequence[float], t: float, delta: float = 1.0) -> np.ndarray:
    """A_t^{(n)}(e_i, y) for every basis vector e_i at once."""
    F = np.asarray(F, dtype=np.float64)
    if _kind(loss) == LossKind.MSE:
        return 2.0 * (y - f_n) * (F - delta_f_n + _decay_factor(t, delta, 8))
    _check_probability(f_n)
    sensitivity_term = -((y - f_n) * delta_f_n) / ((1.0 - f_n) * f_n)
    return sensitivity_term - math.log(f_n / (1.0 - f_n)) * F


def helper_a(loss: LossLike, i: int, y: float, f_n: float, delta_f_n: float,
             F: Sequence[float], t: float, delta: float = 1.0) -> float:
    """Expected loss drift of expert n if expert i were the active one."""
    F = np.asarray(F, dtype=np.float64)
    if not 0 <= i < F.size:
        raise DomainError(f"basis index {i} outside [0, {F.size})")
    return float(helper_a_all(loss, y, f_n, delta_f_n, F[i:i + 1], t, delta)[0])


def helper_a_bar(loss: LossLike, pi: SimplexVector, y: float, F: Sequence[float],
                 f_n: float, delta_f_n: float, t: float, delta: float = 1.0) -> float:
    """Posterior average of A over the latent active expert."""
    F = np.asarray(F, dtype=np.float64)
    if pi.n != F.size:
        raise DomainError(f"posterior has {pi.n} entries but there are {F.size} predictions")
    return float(pi.weights @ helper_a_all(loss, y, f_n, delta_f_n, F, t, delta))


def helper_b(loss: LossLike, y: float, f_n: float, t: float, delta: float = 1.0) -> float:
    """Raw diffusion coefficient of expert n's running loss."""
    if _kind(loss) == LossKind.MSE:
        return TWO_TO_THREE_HALVES * (y - f_n) * _decay_factor(t, delta, 4)
    _check_probability(f_n)
    b = -math.log(f_n / (1.0 - f_n))
    if delta != 1.0:
        b *= _decay_factor(t, delta, 4)
    return b


def floor_denominator(b: float, eps_B: float) -> Tuple[float, bool]:
    """sign(b) * max(|b|, eps_B) with sign(0) = +1, and whether the floor applied."""
    if abs(b) >= eps_B:
        return float(b), False
    return (eps_B if b >= 0 else -eps_B), True


def loss_value(loss: LossLike, y_hat: float, y: float, eps_f: float = 1e-6) -> float:
    """Squared error, or the (nonnegative) binary cross-entropy."""
    if _kind(loss) == LossKind.MSE:
        return float((y - y_hat) ** 2)
    p = min(max(float(y_hat), eps_f), 1.0 - eps_f)
    return float(-(y * math.log(p) + (1.0 - y) * math.log(1.0 - p)))


def innovation(delta_L: float, a_bar: float, b_floored: float) -> float:
    """Normalized surprise of the loss increment."""
    if b_floored == 0:
        raise DomainError("the innovation denominator must be floored away from 0")
    return (delta_L - a_bar) / b_floored


def filter_step(state_n: ExpertFilterState, q: IntensityMatrix, obs: ObservationRecord,
                cfg: FusionConfig, step: int = 0) -> ExpertFilterState:
    """One Euler-Maruyama update of the filter watching expert ``state_n.expert``.

    ``q`` is the intensity matrix installed by the previous tick and ``step``
    the number of ticks already processed (it drives the delta factors).
    """
    n = state_n.expert
    F = obs.predictions
    if F.size != state_n.pi.n:
        raise DomainError(f"observation at t={obs.t} has {F.size} predictions, expected {state_n.pi.n}")
    if cfg.is_bce:
        F = np.clip(F, cfg.eps_f, 1.0 - cfg.eps_f)
    f_n = float(F[n])
    pi = state_n.pi.weights

    delta_f = expert_sensitivity(f_n, state_n.last_prediction)
    current_loss = loss_value(cfg.loss, f_n, obs.y, cfg.eps_f)
    delta_loss = current_loss - state_n.last_loss

    a = helper_a_all(cfg.loss, obs.y, f_n, delta_f, F, step, cfg.delta)
    a_bar = float(pi @ a)
    b, floored = floor_denominator(helper_b(cfg.loss, obs.y, f_n, step, cfg.delta), cfg.eps_B)
    dw = innovation(delta_loss, a_bar, b)

    drift = (q.entries.T @ pi) * cfg.dt
    diffusion = pi * (a - a_bar) / b
    updated = pi + drift + diffusion * dw
    if not np.all(np.isfinite(updated)):
        raise NumericalFailure(f"posterior of expert {n} became nonfinite at t={obs.t}")
    if floored:
        logger.debug(f"B floored for expert {n} at t={obs.t}")

    return ExpertFilterState(
        expert=n,
        pi=project_to_simplex(updated, cfg.eps_pi),
        last_loss=current_loss,
        last_prediction=f_n,
        floored=floored,
    )


def expert_estimate(pi: SimplexVector, F: Sequence[float]) -> float:
    """Filter n's prediction: its posterior applied to the expert outputs."""
    F = np.asarray(F, dtype=np.float64)
    if pi.n != F.size:
        raise DomainError(f"posterior has {pi.n} entries but there are {F.size} predictions")
    return float(pi.weights @ F)


def expert_score(y: float, y_hat_n: float, loss: LossLike, eps_f: float = 1e-6) -> float:
    """Loss of filter n's prediction; lower is better."""
    return loss_value(loss, y_hat_n, y, eps_f)
