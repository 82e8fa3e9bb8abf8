"""Step 2 of MoE-F: robust aggregation and re-estimation of the Q-matrix.

The filters' scores are turned into Gibbs (softmin) weights, every row of a
stochastic matrix is filled with those weights and the matrix is pulled
towards the identity. Its principal logarithm has a closed form for this
rank-one family; projecting the logarithm onto intensity matrices gives the
Q used by the next tick.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.exceptions import DomainError
from app.models.types import IntensityMatrix, RowStochasticMatrix, SimplexVector
from app.schemas.fusion_config import FusionConfig, QDiag

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AggregationResult:
    pi_bar: SimplexVector
    fused: float
    p_alpha: RowStochasticMatrix
    q_next: IntensityMatrix
    scores: np.ndarray


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def softmin_weights(scores: Sequence[float], lambda_: float) -> SimplexVector:
    """Gibbs weights e^{-lambda s_n} / sum_i e^{-lambda s_i}."""
    if lambda_ <= 0:
        raise DomainError(f"lambda must be > 0, got {lambda_}")
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0 or not np.all(np.isfinite(s)):
        raise DomainError("scores must be a non-empty finite vector")
    energy = lambda_ * s
    w = np.exp(-(energy - energy.min()))
    return SimplexVector(w / w.sum())


def inner_objective(pi: SimplexVector, scores: Sequence[float], lambda_: float) -> float:
    """Expected score plus (1/lambda) * KL(pi | uniform)."""
    s = np.asarray(scores, dtype=np.float64)
    w = pi.weights
    mass = w > 0
    entropy_term = float(np.sum(w[mass] * np.log(w[mass] * w.size)))
    return float(w @ s) + entropy_term / lambda_


def fuse(pi_bar: SimplexVector, estimates: Sequence[float]) -> float:
    est = np.asarray(estimates, dtype=np.float64)
    if est.size != pi_bar.n:
        raise DomainError(f"{pi_bar.n} weights but {est.size} estimates")
    return float(pi_bar.weights @ est)


def build_perturbed_p(pi_bar: SimplexVector, alpha: float) -> RowStochasticMatrix:
    """(1 - alpha) * (every row = pi_bar) + alpha * I."""
    n = pi_bar.n
    p = (1.0 - alpha) * np.tile(pi_bar.weights, (n, 1)) + alpha * np.eye(n)
    return RowStochasticMatrix(p)


def matrix_log_perturbed(pi_bar: SimplexVector, alpha: float) -> np.ndarray:
    """Principal logarithm of P^alpha in closed form: log(alpha) * (I - 1 pi_bar^T).

    M = 1 pi_bar^T is idempotent, so f(alpha I + (1 - alpha) M) equals
    f(alpha) (I - M) + f(1) M, and log(1) = 0.
    """
    _check_alpha(alpha)
    n = pi_bar.n
    return math.log(alpha) * (np.eye(n) - np.outer(np.ones(n), pi_bar.weights))


def _relu_off_diagonal(log_p: np.ndarray) -> np.ndarray:
    m = np.asarray(log_p, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"log(P) must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("log(P) must be finite")
    rates = np.maximum(m, 0.0)
    np.fill_diagonal(rates, 0.0)
    return rates


def q_projection(log_p: np.ndarray) -> IntensityMatrix:
    """Closest intensity matrix in the infinity norm: ReLU off the diagonal, row sums on it."""
    rates = _relu_off_diagonal(log_p)
    return IntensityMatrix(rates - np.diag(rates.sum(axis=1)))


def q_projection_column(log_p: np.ndarray) -> IntensityMatrix:
    """Column-sum diagonal variant; rows need not sum to 0."""
    rates = _relu_off_diagonal(log_p)
    return IntensityMatrix(rates - np.diag(rates.sum(axis=0)), checked=False)


def infnorm_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Operator infinity norm of a - b (largest absolute row sum)."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.max(np.sum(np.abs(diff), axis=1)))


def kl_divergence(p: SimplexVector, q: SimplexVector) -> float:
    if p.n != q.n:
        raise DomainError(f"distributions have {p.n} and {q.n} entries")
    pw, qw = p.weights, q.weights
    support = pw > 0
    if np.any(qw[support] <= 0):
        raise DomainError("q has zero mass where p is positive")
    return float(np.sum(pw[support] * np.log(pw[support] / qw[support])))


def kl_perturbation_bound(pi_bar: SimplexVector, alpha: float) -> float:
    """Reverse-Pinsker bound on max_i KL(pi_bar | row i of P^alpha).

    Row i has density ratio 1/(1 - alpha) off position i and
    p_i / ((1 - alpha) p_i + alpha) at i. With a two-valued ratio the chord
    bound TV * (log M / (1 - 1/M) - log(1/m) / (1/m - 1)) is attained, giving
    -(1 - p_i) log(1 - alpha) - p_i log(1 + alpha (1 - p_i) / p_i).
    """
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    p = pi_bar.weights
    if p.min() <= 0:
        raise DomainError("the bound needs every weight to be positive")
    rest = 1.0 - p
    per_row = -rest * math.log1p(-alpha) - p * np.log1p(alpha * rest / p)
    return float(max(per_row.max(), 0.0))


def _chord_ratio(x: float) -> float:
    """-log(x) / (1/x - 1), continuous at x = 1."""
    if x == 1.0:
        return 1.0
    return -math.log(x) / (1.0 / x - 1.0)


def kl_bound_closed_form(pi_bar: SimplexVector, alpha: float) -> float:
    """2 alpha (g(pi_min) + g((1 - alpha) pi_min)) with g(x) = -log(x) / (1/x - 1).

    For skewed weights it falls below the measured worst-row KL;
    ``kl_perturbation_bound`` never does.
    """
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    pi_min = float(pi_bar.weights.min())
    if pi_min <= 0:
        raise DomainError("the bound needs every weight to be positive")
    return 2.0 * alpha * (_chord_ratio(pi_min) + _chord_ratio((1.0 - alpha) * pi_min))


def min_eigenvalue_certificate(pi_bar: SimplexVector, alpha: float) -> float:
    """Lower bound m - s sqrt(N - 1) on the smallest eigenvalue of P^alpha."""
    _check_alpha(alpha)
    p = build_perturbed_p(pi_bar, alpha).entries
    n = pi_bar.n
    m = np.trace(p) / n
    s2 = max(np.trace(p @ p) / n - m * m, 0.0)
    return float(m - math.sqrt(s2) * math.sqrt(n - 1))


def effective_weights(pi_bar: SimplexVector, posteriors: np.ndarray) -> np.ndarray:
    """Expert-level mixture pi_bar^T Pi applied to the predictions by the fused value."""
    return pi_bar.weights @ np.asarray(posteriors, dtype=np.float64)


def aggregate(scores: Sequence[float], estimates: Sequence[float], cfg: FusionConfig) -> AggregationResult:
    """Softmin, fused prediction, P^alpha, its logarithm and the projected Q."""
    s = np.asarray(scores, dtype=np.float64)
    pi_bar = softmin_weights(s, cfg.lambda_)
    log_p = matrix_log_perturbed(pi_bar, cfg.alpha)
    if cfg.q_diag == QDiag.COLUMN:
        q_next = q_projection_column(log_p)
    else:
        q_next = q_projection(log_p)
    return AggregationResult(
        pi_bar=pi_bar,
        fused=fuse(pi_bar, estimates),
        p_alpha=build_perturbed_p(pi_bar, cfg.alpha),
        q_next=q_next,
        scores=s,
    )
