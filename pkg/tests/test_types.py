import numpy as np
import pytest

from app.exceptions import DomainError, NumericalFailure
from app.models.types import (
    IntensityMatrix, ObservationRecord, RowStochasticMatrix, SimplexVector, project_to_simplex,
    validate_intensity,
)


class TestProjectToSimplex:
    def test_point_already_on_simplex(self):
        np.testing.assert_allclose(project_to_simplex([0.2, 0.8], 1e-12).weights, [0.2, 0.8], atol=1e-15)

    def test_negative_entry_is_floored(self):
        w = project_to_simplex([-0.1, 0.3], 1e-12).weights
        assert w[0] == 1e-12
        assert w[1] == pytest.approx(1.0, abs=1e-11)

    def test_pure_rescaling(self):
        np.testing.assert_allclose(project_to_simplex([2, 2, 4], 1e-12).weights, [0.25, 0.25, 0.5])

    def test_idempotent(self, rng):
        for _ in range(50):
            once = project_to_simplex(rng.normal(size=5), 1e-12)
            twice = project_to_simplex(once.weights, 1e-12)
            np.testing.assert_array_equal(twice.weights, once.weights)
            assert once.weights.min() >= 1e-12

    def test_floored_entry_sits_exactly_on_the_floor(self):
        once = project_to_simplex([-0.3, 0.5, 0.8], 1e-12)
        assert once.weights[0] == 1e-12
        assert once.weights.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_array_equal(project_to_simplex(once.weights, 1e-12).weights, once.weights)

    def test_rescaling_that_crosses_the_floor_is_floored_again(self):
        w = project_to_simplex([-1.0, 1.0001e-3, 1.0], 1e-3).weights
        assert w[0] == 1e-3 and w[1] == 1e-3
        assert w.min() >= 1e-3
        assert w.sum() == pytest.approx(1.0, abs=1e-15)

    def test_everything_below_the_floor_becomes_uniform(self):
        np.testing.assert_allclose(project_to_simplex([-1.0, -2.0, 0.0], 1e-12).weights, [1 / 3] * 3)

    def test_partially_nonfinite_is_repaired(self):
        w = project_to_simplex([np.nan, 1.0, 1.0], 1e-12).weights
        assert np.all(np.isfinite(w))
        assert w.sum() == pytest.approx(1.0)

    def test_all_nonfinite_raises(self):
        with pytest.raises(NumericalFailure):
            project_to_simplex([np.inf, np.nan], 1e-12)


class TestValidateIntensity:
    @pytest.mark.parametrize("q, expected", [
        ([[-1, 1], [1, -1]], True),
        ([[0]], True),
        ([[-1, 0.5], [1, -1]], False),
        ([[1, -1], [-1, 1]], False),
        ([[0, 0, 0], [0, 0, 0]], False),
    ])
    def test_examples(self, q, expected):
        assert validate_intensity(q) is expected

    def test_first_order_transition_is_stochastic(self):
        q = np.array([[-2.0, 1.5, 0.5], [0.3, -0.3, 0.0], [1.0, 1.0, -2.0]])
        assert validate_intensity(q)
        h = 1.0 / np.max(np.abs(np.diag(q)))
        RowStochasticMatrix(np.eye(3) + h * q)


class TestDomainTypes:
    def test_simplex_rejects_bad_sum(self):
        with pytest.raises(DomainError):
            SimplexVector([0.5, 0.6])

    def test_simplex_rejects_negative(self):
        with pytest.raises(DomainError):
            SimplexVector([1.5, -0.5])

    def test_arrays_are_read_only(self):
        v = SimplexVector.uniform(3)
        with pytest.raises(ValueError):
            v.weights[0] = 1.0

    def test_initial_intensity(self):
        np.testing.assert_array_equal(
            IntensityMatrix.initial(3).entries,
            [[-1, 0.5, 0.5], [0.5, -1, 0.5], [0.5, 0.5, -1]])
        np.testing.assert_array_equal(IntensityMatrix.initial(1).entries, [[0.0]])

    def test_intensity_rejects_invalid(self):
        with pytest.raises(DomainError):
            IntensityMatrix([[-1, 0.5], [1, -1]])

    def test_unchecked_intensity_is_flagged(self):
        q = IntensityMatrix([[-1, 0.5], [1, -1]], checked=False)
        assert not q.is_valid

    def test_observation_clamping(self):
        obs = ObservationRecord(t=3, y=1.0, predictions=[0.0, 0.5, 1.0]).clamped(1e-6)
        np.testing.assert_allclose(obs.predictions, [1e-6, 0.5, 1 - 1e-6])
        assert obs.t == 3 and obs.is_finite()

    def test_observation_detects_nonfinite(self):
        assert not ObservationRecord(t=0, y=np.nan, predictions=[0.1]).is_finite()
