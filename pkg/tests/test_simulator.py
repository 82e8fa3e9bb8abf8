import math

import numpy as np
import pytest

from app.exceptions import ConfigError, DomainError
from app.models.types import IntensityMatrix
from app.schemas.config_file import scenario_from
from app.schemas.scenario import ExpertSpec, NoiseSpec, Scenario
from app.services.simulator import (
    GENERATOR_NAME, noise_variance, sample_hidden_chain, simulate_target, stationary_distribution,
    synthesize, transition_matrix,
)

SYMMETRIC = IntensityMatrix(np.array([[-1.0, 1.0], [1.0, -1.0]]))


def driftless(decay, t_max, dt, seed):
    return Scenario(
        q_true=[[0.0]],
        experts=[ExpertSpec(kind="constant", value=0.0)],
        noise=NoiseSpec(c=1.0, decay=decay),
        t_max=t_max,
        dt=dt,
        seed=seed,
    )


class TestTransitionMatrix:
    def test_symmetric_two_state(self):
        p = transition_matrix(SYMMETRIC, math.log(2) / 2)
        np.testing.assert_allclose(p.entries, [[0.75, 0.25], [0.25, 0.75]], atol=1e-12)

    def test_zero_generator_is_identity(self):
        np.testing.assert_array_equal(transition_matrix(IntensityMatrix.zeros(3), 0.7).entries, np.eye(3))

    def test_semigroup(self):
        q = IntensityMatrix(np.array([[-0.3, 0.2, 0.1], [0.05, -0.05, 0.0], [0.4, 0.4, -0.8]]))
        one = transition_matrix(q, 0.2).entries
        two = transition_matrix(q, 0.4).entries
        np.testing.assert_allclose(one @ one, two, atol=1e-12)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(DomainError):
            transition_matrix(SYMMETRIC, 0.0)


class TestHiddenChain:
    def test_zero_generator_never_moves(self):
        states = sample_hidden_chain(IntensityMatrix.zeros(3), 500, 1.0, seed=3, initial_state=2)
        assert np.all(states == 2)

    def test_same_seed_same_path(self):
        a = sample_hidden_chain(SYMMETRIC, 1000, 0.05, seed=11)
        b = sample_hidden_chain(SYMMETRIC, 1000, 0.05, seed=11)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = sample_hidden_chain(SYMMETRIC, 1000, 0.05, seed=11)
        b = sample_hidden_chain(SYMMETRIC, 1000, 0.05, seed=12)
        assert not np.array_equal(a, b)

    def test_symmetric_occupancy(self):
        q = IntensityMatrix(np.array([[-2.0, 2.0], [2.0, -2.0]]))
        states = sample_hidden_chain(q, 100_000, 0.05, seed=5)
        assert abs(np.mean(states == 0) - 0.5) <= 0.02

    def test_rejects_bad_initial_state(self):
        with pytest.raises(DomainError):
            sample_hidden_chain(SYMMETRIC, 10, 0.1, seed=0, initial_state=2)


class TestSimulateTarget:
    def test_zero_noise_constant_drift(self):
        scenario = Scenario(q_true=[[0.0]], experts=[ExpertSpec(kind="constant", value=2.0)],
                            noise=NoiseSpec(c=0.0), t_max=5, y0=1.0)
        y, hidden, outputs = simulate_target(scenario)
        np.testing.assert_array_equal(y, [1.0, 3.0, 5.0, 7.0, 9.0, 11.0])
        np.testing.assert_array_equal(hidden, np.zeros(5))
        assert outputs.shape == (5, 1)

    def test_lag_expert_replays_history(self):
        scenario = Scenario(q_true=[[0.0]], experts=[ExpertSpec(kind="lag", lag=1)],
                            noise=NoiseSpec(c=0.0), t_max=4, y0=1.0)
        y, _, _ = simulate_target(scenario)
        np.testing.assert_array_equal(y, [1.0, 2.0, 3.0, 5.0, 8.0])

    def test_hidden_state_drives_the_step(self):
        scenario = scenario_from({
            "q_true": "-0.1,0.1;0.1,-0.1",
            "experts": "constant:0;constant:10",
            "noise_c": "0",
            "t_max": "200",
            "seed": "9",
        })
        path = synthesize(scenario)
        y = np.array([scenario.y0] + [o.y for o in path.observations])
        np.testing.assert_allclose(np.diff(y), 10.0 * path.hidden)
        assert [o.t for o in path.observations] == list(range(1, 201))
        assert set(np.unique(path.hidden)) == {0, 1}

    def test_drift_target_reports_the_step(self):
        values = {
            "q_true": "-0.1,0.1;0.1,-0.1",
            "experts": "constant:-1;constant:1",
            "noise_c": "0",
            "t_max": "100",
            "sim_dt": "0.5",
            "seed": "3",
            "target": "Drift",
        }
        path = synthesize(scenario_from(values))
        level = synthesize(scenario_from({**values, "target": "level"}))
        y = np.array([0.0] + [o.y for o in level.observations])
        np.testing.assert_allclose([o.y for o in path.observations], np.diff(y) / 0.5, atol=1e-12)
        # with no noise the active expert forecasts the drift exactly
        for obs, active in zip(path.observations, path.hidden):
            assert obs.y == pytest.approx(obs.predictions[active], abs=1e-12)

    def test_unknown_target(self):
        with pytest.raises(ConfigError):
            scenario_from({"q_true": "0", "experts": "constant:1", "t_max": "3", "target": "slope"})

    def test_synthesize_is_reproducible(self):
        scenario = scenario_from({
            "q_true": "-0.05,0.05;0.05,-0.05",
            "experts": "constant:-1;sinusoid:1,20",
            "noise_c": "0.3",
            "t_max": "100",
            "seed": "42",
        })
        a, b = synthesize(scenario), synthesize(scenario)
        assert a.generator == GENERATOR_NAME and a.seed == 42
        np.testing.assert_array_equal([o.y for o in a.observations], [o.y for o in b.observations])
        np.testing.assert_array_equal(a.hidden, b.hidden)

    def test_vectorized_and_stepwise_paths_agree(self):
        base = dict(q_true=[[-0.05, 0.05], [0.05, -0.05]], noise=NoiseSpec(c=0.2), t_max=50, seed=1)
        constant = ExpertSpec(kind="constant", value=0.5)
        sinusoid = ExpertSpec(kind="sinusoid", amplitude=2.0, period=10.0)
        # a lag expert forces the step-by-step path
        stepwise = Scenario(experts=[constant, sinusoid, ExpertSpec(kind="lag", lag=3)],
                            **{**base, "q_true": [[-0.05, 0.05, 0.0], [0.05, -0.05, 0.0], [0.0, 0.0, 0.0]],
                               "initial_state": 0})
        vectorized = Scenario(experts=[constant, sinusoid], initial_state=0, **base)
        y_step, _, out_step = simulate_target(stepwise)
        y_vec, _, out_vec = simulate_target(vectorized)
        np.testing.assert_allclose(out_step[:, :2], out_vec, atol=1e-12)
        assert y_step.shape == y_vec.shape

    @pytest.mark.parametrize("decay, t_max", [(0.0, 100), (0.5, 1000)])
    def test_terminal_variance(self, decay, t_max):
        dt = 0.01
        terminal = np.array([simulate_target(driftless(decay, t_max, dt, seed))[0][-1] for seed in range(4000)])
        expected = noise_variance(1.0, decay, t_max * dt)
        assert np.var(terminal, ddof=1) == pytest.approx(expected, rel=0.1)


class TestScenario:
    @pytest.mark.parametrize("values", [
        {"q_true": "-1,1", "experts": "constant:0;constant:1", "t_max": "5"},
        {"q_true": "-1,0.5;1,-1", "experts": "constant:0;constant:1", "t_max": "5"},
        {"q_true": "-0.05,0.05;0.05,-0.05", "experts": "constant:0", "t_max": "5"},
        {"q_true": "-1,1;1,-1", "experts": "constant:0;constant:1", "t_max": "5"},
        {"q_true": "-0.05,0.05;0.05,-0.05", "experts": "constant:0;wiggle:1", "t_max": "5"},
        {"q_true": "-0.05,0.05;0.05,-0.05", "experts": "constant:0;constant:1", "t_max": "5",
         "initial_state": "2"},
        {"q_true": "-0.05,0.05;0.05,-0.05", "experts": "constant:0;constant:1", "t_max": "5",
         "noise_c": "1.5"},
        {"q_true": "-0.05,0.05;0.05,-0.05", "experts": "constant:0;constant:1"},
    ])
    def test_invalid_scenarios(self, values):
        with pytest.raises(ConfigError):
            scenario_from(values)

    def test_seed_override(self):
        values = {"q_true": "0", "experts": "constant:1", "t_max": "3", "seed": "5"}
        assert scenario_from(values).seed == 5
        assert scenario_from(values, seed=2 ** 64 - 1).seed == 2 ** 64 - 1

    def test_noise_delta_maps_to_decay(self):
        values = {"q_true": "0", "experts": "constant:1", "t_max": "3", "noise_delta": "0.5"}
        assert scenario_from(values).noise.decay == pytest.approx(4 * math.log(2))

    def test_expert_descriptions_round_trip(self):
        for text in ("constant:1.5", "sinusoid:2.0,10.0,0.5", "lag:3"):
            assert ExpertSpec.parse(ExpertSpec.parse(text).describe()) == ExpertSpec.parse(text)


class TestStationaryAndVariance:
    def test_stationary_distribution(self):
        pi = stationary_distribution(IntensityMatrix(np.array([[-1.0, 1.0], [2.0, -2.0]])))
        np.testing.assert_allclose(pi.weights, [2 / 3, 1 / 3], atol=1e-12)

    def test_noise_variance(self):
        assert noise_variance(0.5, 0.0, 4.0) == pytest.approx(1.0)
        assert noise_variance(1.0, 0.5, 10.0) == pytest.approx(1.0 - math.exp(-10.0))
        assert noise_variance(1.0, 0.5, 1e6) == pytest.approx(1.0)
