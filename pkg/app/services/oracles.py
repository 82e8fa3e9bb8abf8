"""Self-checking oracle suites run by ``oracle-check``.

Each suite draws its own random instances from a generator derived from the
run seed and the suite name, so a fixed seed reproduces the worst instance.
A margin is "observed value minus allowed value": positive means a failure.
"""
import logging
import zlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np
from scipy.linalg import expm, logm

from app.models.types import SimplexVector, validate_intensity
from app.schemas.scenario import ExpertSpec, NoiseSpec, Scenario
from app.services.aggregation import (
    build_perturbed_p, infnorm_distance, inner_objective, kl_bound_closed_form, kl_divergence,
    kl_perturbation_bound, matrix_log_perturbed, min_eigenvalue_certificate, q_projection, softmin_weights,
)
from app.services.simulator import noise_variance, simulate_target

logger = logging.getLogger(__name__)

ROUND_TRIP_TOL = 1e-8
LOG_ORACLE_TOL = 1e-10
KL_SLACK = 1e-12
CERTIFICATE_SLACK = 1e-12
GRID_STEP = 0.001
OBJECTIVE_SLACK = 1e-12
VARIANCE_RTOL = 0.05
# Monte-Carlo seeds of the variance suite, independent of --trials
VARIANCE_SEEDS = 10_000


@dataclass
class SuiteResult:
    name: str
    trials: int
    worst_margin: float = -np.inf
    worst_instance: Dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst_margin <= 0.0

    def record(self, margin: float, **instance) -> None:
        if margin > self.worst_margin:
            self.worst_margin = float(margin)
            self.worst_instance = instance


def _rng(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, zlib.crc32(name.encode())])))


def _random_simplex(rng: np.random.Generator, n: int, floor: float = 0.0) -> SimplexVector:
    w = rng.dirichlet(np.ones(n))
    return SimplexVector(floor + (1.0 - n * floor) * w)


def _alphas(n: int):
    return (0.5, 0.9, 1.0 - 1.0 / n ** 2)


def matrix_log_round_trip(trials: int, seed: int) -> SuiteResult:
    """exp(closed-form log) recovers P^alpha; the closed form agrees with scipy's logm."""
    result = SuiteResult("matrix-log round-trip", trials)
    rng = _rng(seed, result.name)
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        pi_bar = _random_simplex(rng, n)
        alpha = float(rng.choice(_alphas(n)))
        p = build_perturbed_p(pi_bar, alpha).entries
        log_p = matrix_log_perturbed(pi_bar, alpha)
        round_trip = infnorm_distance(expm(log_p), p) - ROUND_TRIP_TOL
        oracle = infnorm_distance(log_p, np.real(logm(p))) - LOG_ORACLE_TOL
        result.record(max(round_trip, oracle), n=n, alpha=alpha, pi_bar=pi_bar.tolist())
    return result


def _simplex_grid(n: int, step: float) -> np.ndarray:
    m = int(round(1.0 / step))
    if n == 2:
        i = np.arange(m + 1)
        return np.column_stack([i, m - i]) / m
    i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = i + j <= m
    i, j = i[keep], j[keep]
    return np.column_stack([i, j, m - i - j]) / m


def _grid_objective(grid: np.ndarray, scores: np.ndarray, lambda_: float) -> np.ndarray:
    n = grid.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        entropy = np.where(grid > 0, grid * np.log(grid * n), 0.0).sum(axis=1)
    return grid @ scores + entropy / lambda_


def softmin_grid_dominance(trials: int, seed: int) -> SuiteResult:
    """No point of a 0.001 simplex grid beats the softmin weights on the inner objective."""
    result = SuiteResult("softmin grid dominance", trials)
    rng = _rng(seed, result.name)
    grids = {n: _simplex_grid(n, GRID_STEP) for n in (2, 3)}
    for _ in range(trials):
        n = int(rng.integers(2, 4))
        scores = rng.uniform(0.0, 5.0, size=n)
        lambda_ = float(rng.uniform(0.25, 4.0))
        weights = softmin_weights(scores, lambda_)
        grid_best = float(_grid_objective(grids[n], scores, lambda_).min())
        margin = inner_objective(weights, scores, lambda_) - grid_best - OBJECTIVE_SLACK
        result.record(margin, scores=scores.tolist(), lambda_=lambda_)
    return result


def kl_bound_dominance(trials: int, seed: int) -> SuiteResult:
    """KL from pi_bar to every row of P^alpha stays under the stability bound."""
    result = SuiteResult("KL bound dominance", trials)
    rng = _rng(seed, result.name)
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        pi_bar = _random_simplex(rng, n, floor=1e-3)
        alpha = float(rng.uniform(0.01, 0.99))
        rows = build_perturbed_p(pi_bar, alpha).entries
        worst_kl = max(kl_divergence(pi_bar, SimplexVector(row / row.sum())) for row in rows)
        margin = worst_kl - kl_perturbation_bound(pi_bar, alpha) - KL_SLACK
        result.record(margin, n=n, alpha=alpha, pi_bar=pi_bar.tolist(), worst_kl=worst_kl,
                      closed_form=kl_bound_closed_form(pi_bar, alpha))
    return result


def q_validity(trials: int, seed: int) -> SuiteResult:
    """Every projected Q is a valid intensity matrix and, for N=2, grid-optimal."""
    result = SuiteResult("Q validity and outer optimality", trials)
    rng = _rng(seed, result.name)
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        pi_bar = _random_simplex(rng, n)
        alpha = float(rng.uniform(0.01, 0.99))
        log_p = matrix_log_perturbed(pi_bar, alpha)
        q = q_projection(log_p)
        margin = 0.0 if validate_intensity(q.entries) else 1.0
        if n == 2:
            distance = infnorm_distance(q.entries, log_p)
            scale = 2.0 * float(np.abs(log_p).max())
            rates = np.linspace(0.0, scale, 201)
            a, b = np.meshgrid(rates, rates, indexing="ij")
            row0 = np.abs(-a - log_p[0, 0]) + np.abs(a - log_p[0, 1])
            row1 = np.abs(b - log_p[1, 0]) + np.abs(-b - log_p[1, 1])
            grid_best = float(np.maximum(row0, row1).min())
            margin = max(margin, distance - grid_best - OBJECTIVE_SLACK)
        result.record(margin, n=n, alpha=alpha, pi_bar=pi_bar.tolist())
    return result


def eigenvalue_certificate(trials: int, seed: int) -> SuiteResult:
    """For alpha >= 1 - 1/N^2 the certificate is positive and never exceeds lambda_min = alpha."""
    result = SuiteResult("eigenvalue certificate", trials)
    rng = _rng(seed, result.name)
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        pi_bar = _random_simplex(rng, n)
        alpha = float(rng.uniform(1.0 - 1.0 / n ** 2, 1.0 - 1e-9))
        certificate = min_eigenvalue_certificate(pi_bar, alpha)
        margin = max(-certificate, certificate - alpha - CERTIFICATE_SLACK)
        result.record(margin, n=n, alpha=alpha, pi_bar=pi_bar.tolist(), certificate=certificate)
    return result


def _driftless_scenario(decay: float, t_max: int, dt: float) -> Scenario:
    return Scenario(
        q_true=[[0.0, 0.0], [0.0, 0.0]],
        experts=[ExpertSpec(kind="constant", value=0.0), ExpertSpec(kind="constant", value=0.0)],
        noise=NoiseSpec(c=1.0, decay=decay),
        t_max=t_max,
        dt=dt,
        initial_state=0,
    )


def variance_monte_carlo(trials: int, seed: int) -> SuiteResult:
    """Terminal variance of driftless paths against the closed-form variance law."""
    result = SuiteResult("noise variance Monte-Carlo", trials)
    seeds = np.random.SeedSequence(seed).generate_state(VARIANCE_SEEDS, dtype=np.uint64)
    dt = 0.01
    for decay, t_max in ((0.0, 100), (0.5, 1000)):
        base = _driftless_scenario(decay, t_max, dt)
        terminal = np.array([simulate_target(base.model_copy(update={"seed": int(s)}))[0][-1] for s in seeds])
        expected = noise_variance(1.0, decay, t_max * dt)
        observed = float(np.var(terminal, ddof=1))
        margin = abs(observed - expected) / expected - VARIANCE_RTOL
        result.record(margin, decay=decay, horizon=t_max * dt, observed=observed, expected=expected,
                      seeds=len(seeds))
    return result


SUITES: List[Callable[[int, int], SuiteResult]] = [
    matrix_log_round_trip,
    softmin_grid_dominance,
    kl_bound_dominance,
    q_validity,
    eigenvalue_certificate,
    variance_monte_carlo,
]


def run_all(trials: int, seed: int) -> List[SuiteResult]:
    results = []
    for suite in SUITES:
        result = suite(trials, seed)
        logger.info(f"{result.name}: {'pass' if result.passed else 'FAIL'} "
                    f"(trials={result.trials}, worst margin={result.worst_margin:.3e})")
        results.append(result)
    return results
