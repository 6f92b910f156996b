# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

import json

import numpy as np
import pytest
from ssdeconv.errors import DataError, SingularMatrixError
from ssdeconv.model import ObservationSeries, Ordinary, StateSpaceSpec, Super, smoothness_regime
from ssdeconv.noise import GammaDifferenceIID, GaussianIID, LinearMap
from ssdeconv.simulation import benchmark_model


def scalar_spec(a=0.8, b=1.0) -> StateSpaceSpec:
    return StateSpaceSpec(
        A=np.array([[a]]), B=np.array([[b]]), eps=GaussianIID.standard(1), eta=GaussianIID.standard(1)
    )


class TestStateSpaceSpec:
    def test_stationary_covariance(self):
        assert scalar_spec().stationary_covariance()[0, 0] == pytest.approx(1.0 / 0.36)

    def test_root_covariances(self):
        cov = scalar_spec().root_covariances()
        assert cov["filter"][0, 0] == pytest.approx(1.0)
        assert cov["state"][0, 0] == pytest.approx(1.64)
        assert cov["observation"][0, 0] == pytest.approx(2.64)

    def test_root_covariances_with_scaled_observation(self):
        cov = scalar_spec(b=2.0).root_covariances()
        assert cov["filter"][0, 0] == pytest.approx(0.25)
        # eps - 0.4 eta
        assert cov["state"][0, 0] == pytest.approx(1.16)
        assert cov["observation"][0, 0] == pytest.approx(1.0 + 4.0 * 1.16)

    def test_matrices_are_read_only(self):
        spec = scalar_spec()
        with pytest.raises(ValueError):
            spec.A[0, 0] = 0.1

    def test_rejects_explosive_transition(self):
        with pytest.raises(DataError, match=r"\|\|A\|\|_2 < 1"):
            scalar_spec(a=1.0)

    def test_rejects_singular_observation_matrix(self):
        with pytest.raises(SingularMatrixError):
            scalar_spec(b=0.0)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(DataError):
            StateSpaceSpec(
                A=np.eye(2) * 0.5,
                B=np.eye(2),
                eps=GaussianIID.standard(1),
                eta=GaussianIID.standard(2),
            )

    def test_json_round_trip(self, tmp_path):
        spec = StateSpaceSpec(
            A=np.array([[0.56, -0.25], [0.25, 0.45]]),
            B=np.array([[1.0, -0.5], [0.5, 1.0]]),
            eps=GammaDifferenceIID.uniform(2, 1.5, 0.5),
            eta=GaussianIID((0.9, 0.9)),
        )
        path = tmp_path / "model.json"
        path.write_text(spec.to_json())
        loaded = StateSpaceSpec.load(path)
        np.testing.assert_array_equal(loaded.A, spec.A)
        np.testing.assert_array_equal(loaded.B, spec.B)
        assert loaded.eps == spec.eps
        assert loaded.eta == spec.eta

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(DataError, match="invalid JSON"):
            StateSpaceSpec.load(path)

    def test_missing_fields(self):
        with pytest.raises(DataError, match="eta"):
            StateSpaceSpec.from_dict({"A": [[0.5]], "B": [[1.0]], "eps": {"type": "gaussian", "sigma": 1.0}})

    def test_declared_dimension_mismatch(self):
        data = json.loads(scalar_spec().to_json())
        data["d"] = 2
        with pytest.raises(DataError):
            StateSpaceSpec.from_dict(data)


class TestObservationSeries:
    def test_vector_becomes_column(self):
        series = ObservationSeries(np.arange(5.0))
        assert series.n == 5
        assert series.d == 1
        np.testing.assert_array_equal(series.last, [4.0])

    def test_whitened(self):
        series = ObservationSeries(np.array([[2.0, 4.0], [6.0, 8.0], [1.0, 1.0]]))
        np.testing.assert_allclose(series.whitened(np.diag([0.5, 0.25]))[0], [1.0, 1.0])

    def test_values_are_copied_and_frozen(self):
        source = np.arange(4.0)
        series = ObservationSeries(source)
        source[0] = 100.0
        assert series.values[0, 0] == 0.0
        with pytest.raises(ValueError):
            series.values[0, 0] = 1.0

    @pytest.mark.parametrize(
        "values", [np.zeros(2), np.array([1.0, np.nan, 2.0]), np.zeros((3, 0))]
    )
    def test_rejects(self, values):
        with pytest.raises(DataError):
            ObservationSeries(values)


class TestRegimes:
    def test_positive_parameters(self):
        Ordinary(beta=1.0, b=1.0, c=1.0)
        Super(beta=2.0, gamma=0.5, b=2.0, r=1.0, c=1.0)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError, match="Ordinary.beta"):
            Ordinary(beta=0.0, b=1.0, c=1.0)
        with pytest.raises(ValueError, match="Super.gamma"):
            Super(beta=2.0, gamma=-1.0, b=2.0, r=1.0, c=1.0)


def mixed_spec(eta, eps=None) -> StateSpaceSpec:
    return StateSpaceSpec(
        A=0.5 * np.eye(2), B=np.eye(2), eps=eps if eps is not None else GaussianIID.standard(2), eta=eta
    )


class TestSmoothnessRegime:
    def test_benchmark_constants(self):
        assert smoothness_regime(benchmark_model("O1").spec) == Ordinary(beta=1.0, b=2.5, c=1.0)
        assert smoothness_regime(benchmark_model("O2").spec) == Ordinary(beta=1.0, b=2.5, c=1.0)
        assert smoothness_regime(benchmark_model("S1").spec) == Super(beta=2.0, gamma=0.5, b=2.0, r=0.5, c=1.0)

        s2 = smoothness_regime(benchmark_model("S2").spec)
        assert isinstance(s2, Super)
        assert s2.gamma == pytest.approx(0.5 * 0.81)
        # Smallest eigenvalue of the state-noise covariance is (0.979 - 0.204)^2.
        assert s2.r == pytest.approx(0.5 * 0.775**2)

    def test_ordinary_envelope_bounds_char(self):
        eta = LinearMap(((1.0, 0.5), (-0.3, 0.8)), GammaDifferenceIID((0.5, 1.5), (1.0, 0.7)))
        regime = smoothness_regime(mixed_spec(eta))
        assert isinstance(regime, Ordinary)
        assert regime.beta == pytest.approx(4.0)
        t = np.random.default_rng(4).normal(scale=5.0, size=(500, 2))
        envelope = regime.c * np.prod((1.0 + t**2) ** (-regime.beta / 2.0), axis=1)
        assert np.all(np.abs(eta.char(t)) >= envelope)

    def test_diagonal_envelope_bounds_char(self):
        eta = GammaDifferenceIID((0.5, 1.0), (2.0, 0.5))
        regime = smoothness_regime(mixed_spec(eta))
        assert regime == Ordinary(beta=2.0, b=2.0, c=0.5)
        t = np.random.default_rng(5).normal(scale=5.0, size=(500, 2))
        envelope = regime.c * np.prod((1.0 + t**2) ** (-regime.beta / 2.0), axis=1)
        assert np.all(np.abs(eta.char(t)) >= envelope)

    def test_forced_super_envelope_bounds_char(self):
        eta = LinearMap(((1.0, 0.5), (-0.3, 0.8)), GammaDifferenceIID((0.5, 1.5), (1.0, 0.7)))
        regime = smoothness_regime(mixed_spec(eta), "super")
        assert isinstance(regime, Super)
        t = np.random.default_rng(6).normal(scale=5.0, size=(500, 2))
        envelope = regime.c * np.prod(np.exp(-regime.gamma * np.abs(t) ** regime.beta), axis=1)
        assert np.all(np.abs(eta.char(t)) >= envelope)

    def test_gaussian_measurement_noise_is_not_ordinary(self):
        with pytest.raises(DataError, match="super smooth"):
            smoothness_regime(benchmark_model("S1").spec, "ordinary")

    def test_super_needs_light_state_noise_tail(self):
        with pytest.raises(DataError, match="explicit bandwidth"):
            smoothness_regime(benchmark_model("O1").spec, "super")
        heavy = mixed_spec(GaussianIID.standard(2), eps=GammaDifferenceIID.uniform(2, 1.0, 1.0))
        with pytest.raises(DataError, match="exponentially"):
            smoothness_regime(heavy)

    def test_ordinary_needs_square_integrable_state_noise(self):
        spec = mixed_spec(GammaDifferenceIID.uniform(2, 1.0, 1.0), eps=GammaDifferenceIID.uniform(2, 0.2, 1.0))
        with pytest.raises(DataError, match="square integrable"):
            smoothness_regime(spec)
