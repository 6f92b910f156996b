# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

import cmath
import math

import numpy as np
import pytest
from scipy import integrate
from ssdeconv.errors import DataError, SingularMatrixError, VanishingCharacteristicError
from ssdeconv.estimation import (
    TabulatedDensity,
    estimate_transition_matrix,
    eval_density,
    fit_model,
    fit_noise_density,
    fit_state_density,
    lattice_points,
    tabulate_function,
)
from ssdeconv.kernel import KernelSpec, build_fourier_nodes, kernel_fg, kernel_g
from ssdeconv.model import ObservationSeries
from ssdeconv.noise import GammaDifferenceIID, GaussianIID
from ssdeconv.simulation import benchmark_model, generate_series


def noiseless_series(A, B, x0, n) -> ObservationSeries:
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64)
    rows = []
    for _ in range(n):
        rows.append(np.asarray(B) @ x)
        x = A @ x
    return ObservationSeries(np.array(rows))


class TestTransitionMatrix:
    def test_noiseless_scalar_recursion(self):
        series = noiseless_series([[0.8]], [[1.0]], [5.0], 40)
        assert estimate_transition_matrix(series, [[1.0]])[0, 0] == pytest.approx(0.8, abs=1e-10)

    def test_noiseless_two_dimensional_recursion(self):
        A = np.array([[0.56, -0.25], [0.25, 0.45]])
        B = np.array([[1.0, -0.5], [0.5, 1.0]])
        series = noiseless_series(A, B, [1.0, 0.5], 40)
        np.testing.assert_allclose(estimate_transition_matrix(series, B), A, atol=1e-10)

    def test_matches_explicit_sums(self):
        rng = np.random.default_rng(2)
        values = rng.normal(size=(50, 2))
        B = np.array([[1.0, 0.2], [0.0, 2.0]])
        u = values @ np.linalg.inv(B).T
        lag2 = sum(np.outer(u[k], u[k - 2]) for k in range(2, 50))
        lag1 = sum(np.outer(u[k - 1], u[k - 2]) for k in range(2, 50))
        expected = lag2 @ np.linalg.inv(lag1)
        np.testing.assert_allclose(
            estimate_transition_matrix(ObservationSeries(values), B), expected, rtol=1e-9
        )

    def test_constant_zero_series(self):
        # The lag-one sum vanishes, its pseudo-inverse is zero.
        series = ObservationSeries(np.zeros((10, 1)))
        np.testing.assert_array_equal(estimate_transition_matrix(series, [[1.0]]), [[0.0]])

    def test_singular_B(self):
        with pytest.raises(SingularMatrixError):
            estimate_transition_matrix(ObservationSeries(np.ones((5, 1))), [[0.0]])


def classical_deconvolution(y: np.ndarray, x: float, h: float, sigma: float) -> float:
    """Quadrature of (1/pi) int_0^{2/h} FG(h t) / phi(t) mean cos(t (Y - x)) dt."""
    spec = KernelSpec()

    def integrand(t):
        phi = math.exp(-0.5 * (sigma * t) ** 2)
        return float(kernel_fg(spec, h * t)) / phi * float(np.mean(np.cos(t * (y - x))))

    value, _ = integrate.quad(integrand, 0.0, spec.a / h, limit=400)
    return value / math.pi


class TestStateDensity:
    def test_matches_deterministic_quadrature(self):
        rng = np.random.default_rng(7)
        sigma, h = 0.5, 0.5
        y = rng.normal(size=200) + sigma * rng.normal(size=200)
        series = ObservationSeries(y)
        nodes = build_fourier_nodes(h, 2.0, 20_000, seed=1)
        estimate = fit_state_density(series, [[1.0]], GaussianIID((sigma,)), nodes=nodes)

        grid = np.linspace(-3.0, 3.0, 20)
        mc = estimate(grid)
        exact = np.maximum([classical_deconvolution(y, x, h, sigma) for x in grid], 0.0)
        # Five standard errors of the node average.
        bound = 5.0 * estimate.amplitude * math.sqrt(np.mean(np.abs(estimate.weights) ** 2) / nodes.count)
        assert np.max(np.abs(mc - exact)) <= bound

    def test_vanishing_measurement_noise_gives_kernel_estimate(self):
        rng = np.random.default_rng(8)
        h = 0.6
        y = rng.normal(size=200)
        nodes = build_fourier_nodes(h, 2.0, 20_000, seed=2)
        estimate = fit_state_density(ObservationSeries(y), [[1.0]], GaussianIID((1e-6,)), nodes=nodes)

        grid = np.linspace(-2.5, 2.5, 11)
        kde = np.array([np.mean(kernel_g(KernelSpec(), (x - y) / h)) / h for x in grid])
        # The Fourier pair of the kernel: the sigma -> 0 quadrature is the same estimate.
        np.testing.assert_allclose([classical_deconvolution(y, x, h, 0.0) for x in grid], kde, atol=1e-6)
        bound = 5.0 * estimate.amplitude * math.sqrt(np.mean(np.abs(estimate.weights) ** 2) / nodes.count)
        assert np.max(np.abs(estimate.raw(grid).real - kde)) <= bound

    def test_node_count_convergence(self):
        sim = generate_series(benchmark_model("S1"), 300, seed=10)
        x = np.array([0.2])

        def spread(count: int, first_seed: int) -> float:
            values = []
            for seed in range(first_seed, first_seed + 200):
                nodes = build_fourier_nodes(0.7, 2.0, count, seed=seed)
                estimate = fit_state_density(sim.observations, [[1.0]], GaussianIID.standard(1), nodes=nodes)
                values.append(estimate.raw(x).real[0])
            return float(np.std(values, ddof=1))

        ratio = spread(500, 0) / spread(1_000, 1_000)
        assert math.sqrt(2.0) / 1.25 <= ratio <= math.sqrt(2.0) * 1.25

    def test_antithetic_nodes_give_real_integral(self):
        rng = np.random.default_rng(3)
        series = ObservationSeries(rng.normal(size=300))
        nodes = build_fourier_nodes(0.6, 2.0, 500, seed=0, antithetic=True)
        estimate = fit_state_density(series, [[1.0]], GaussianIID.standard(1), nodes=nodes)
        raw = estimate.raw(np.linspace(-4, 4, 33))
        assert np.max(np.abs(raw.imag)) <= 1e-10
        np.testing.assert_allclose(np.maximum(raw.real, 0.0), estimate(np.linspace(-4, 4, 33)), atol=1e-12)

    def test_values_are_non_negative_and_bounded(self):
        sim = generate_series(benchmark_model("S1"), 300, seed=4)
        fit = fit_model(sim.observations, [[1.0]], GaussianIID.standard(1), h=0.6, nodes=2_000)
        values = eval_density(fit.state_density, np.linspace(-8, 8, 200))
        assert np.all(values >= 0.0)
        assert np.all(values <= fit.state_density.bound + 1e-12)

    def test_evaluation_is_deterministic(self):
        sim = generate_series(benchmark_model("S1"), 200, seed=5)
        fit = fit_model(sim.observations, [[1.0]], GaussianIID.standard(1), h=0.6, nodes=1_000, seed=9)
        again = fit_model(sim.observations, [[1.0]], GaussianIID.standard(1), h=0.6, nodes=1_000, seed=9)
        x = np.linspace(-3, 3, 13)
        np.testing.assert_array_equal(fit.noise_density(x), again.noise_density(x))
        np.testing.assert_array_equal(fit.noise_density(x), fit.noise_density(x))

    def test_vanishing_characteristic_function(self):
        series = ObservationSeries(np.random.default_rng(0).normal(size=50))
        nodes = build_fourier_nodes(0.05, 2.0, 200, seed=0)
        with pytest.raises(VanishingCharacteristicError):
            fit_state_density(series, [[1.0]], GaussianIID.standard(1), nodes=nodes)

    def test_node_dimension_mismatch(self):
        series = ObservationSeries(np.random.default_rng(0).normal(size=(50, 2)))
        nodes = build_fourier_nodes(0.5, 2.0, 10, seed=0, d=1)
        with pytest.raises(DataError):
            fit_state_density(series, np.eye(2), GaussianIID.standard(2), nodes=nodes)

    def test_node_kernel_mismatch(self):
        series = ObservationSeries(np.random.default_rng(0).normal(size=50))
        nodes = build_fourier_nodes(0.5, 3.0, 10, seed=0)
        with pytest.raises(ValueError):
            fit_state_density(series, [[1.0]], GaussianIID.standard(1), nodes=nodes)


class TestNoiseDensity:
    def test_singular_transition_estimate(self):
        series = ObservationSeries(np.random.default_rng(0).normal(size=50))
        nodes = build_fourier_nodes(0.5, 2.0, 10, seed=0)
        with pytest.raises(SingularMatrixError):
            fit_noise_density(series, [[1.0]], [[1e-9]], GaussianIID.standard(1), nodes=nodes)

    def test_matches_naive_double_loop(self):
        model = benchmark_model("S2")
        B = model.spec.B
        series = generate_series(model, 60, seed=12).observations
        A_hat = estimate_transition_matrix(series, B)
        h = 0.8
        nodes = build_fourier_nodes(h, 2.0, 40, seed=4, d=2)
        estimate = fit_noise_density(series, B, A_hat, model.spec.eta, nodes=nodes)

        B_inv = np.linalg.inv(B)
        u = [B_inv @ y for y in series.values]
        residuals = [u[j + 1] - A_hat @ u[j] for j in range(len(u) - 1)]

        def phi_eta(s):
            # eta = 0.9 * N(0, I)
            return math.exp(-0.5 * 0.81 * float(s @ s))

        weights = []
        for zeta in nodes.nodes:
            fourier = 1.0
            for t in zeta:
                fourier *= min(1.0, max(0.0, (2.0 - abs(h * t)) / (2.0 - 1.0)))
            ecf = sum(cmath.exp(1j * float(zeta @ r)) for r in residuals) / len(residuals)
            denominator = phi_eta(B_inv.T @ zeta) * phi_eta(-(B_inv.T @ A_hat.T @ zeta))
            weights.append(fourier / denominator * ecf)
        amplitude = (2.0 / (h * math.pi)) ** 2

        points = np.array([[0.0, 0.0], [0.5, -0.3], [-1.2, 0.7], [2.0, 1.5]])
        expected = []
        for x in points:
            total = sum(w * cmath.exp(-1j * float(zeta @ x)) for w, zeta in zip(weights, nodes.nodes))
            expected.append(max(0.0, (amplitude * total / len(weights)).real))
        np.testing.assert_allclose(estimate(points), expected, rtol=1e-10, atol=1e-12)

    def test_gamma_difference_measurement_noise(self):
        sim = generate_series(benchmark_model("O1"), 500, seed=1)
        eta = GammaDifferenceIID.uniform(1, 0.5, 1.0)
        fit = fit_model(sim.observations, [[1.0]], eta, h=500 ** (-1 / 8), nodes=2_000, state_density=False)
        assert fit.state_density is None
        values = fit.noise_density(np.linspace(-4, 4, 81))
        assert np.all(np.isfinite(values))
        assert np.all(values >= 0.0)
        assert fit.noise_density.config()["target"] == "noise"

    def test_two_dimensional_fit(self):
        model = benchmark_model("S2")
        sim = generate_series(model, 300, seed=2)
        fit = fit_model(sim.observations, model.spec.B, model.spec.eta, h=0.8, nodes=1_000)
        assert fit.A_hat.shape == (2, 2)
        frame = fit.noise_density.to_frame(np.linspace(-2, 2, 5))
        assert list(frame.columns) == ["x1", "x2", "value"]
        assert len(frame) == 25
        assert np.all(frame["value"] >= 0.0)


class TestTabulation:
    def test_one_dimensional_interpolation(self):
        table = tabulate_function(lambda p: np.cos(p[:, 0]), -1.0, 1.0, d=1, points=2001)
        x = np.array([-0.3337, 0.0, 0.91])
        np.testing.assert_allclose(table(x), np.cos(x), atol=1e-6)

    def test_exact_outside_lattice(self):
        table = tabulate_function(lambda p: np.exp(-p[:, 0]), -1.0, 1.0, d=1, points=11)
        np.testing.assert_array_equal(table(np.array([2.0, -3.0])), np.exp(-np.array([2.0, -3.0])))

    def test_zero_outside_without_fallback(self):
        table = tabulate_function(lambda p: np.ones(p.shape[0]), -1.0, 1.0, d=2, points=5, exact_outside=False)
        np.testing.assert_array_equal(table(np.array([[0.0, 0.0], [0.0, 1.5]])), [1.0, 0.0])

    def test_multilinear_interpolation_is_exact_for_linear_functions(self):
        func = lambda p: p[:, 0] + 2.0 * p[:, 1]  # noqa: E731
        table = tabulate_function(func, [-1.0, -2.0], [1.0, 2.0], d=2, points=7)
        x = np.array([[0.13, -1.7], [0.9, 0.4]])
        np.testing.assert_allclose(table(x), func(x), atol=1e-12)

    def test_density_estimate_tabulation(self):
        sim = generate_series(benchmark_model("S1"), 300, seed=6)
        fit = fit_model(sim.observations, [[1.0]], GaussianIID.standard(1), h=0.7, nodes=1_000)
        table = fit.noise_density.tabulate(-5.0, 5.0)
        x = np.linspace(-4.9, 4.9, 57)
        np.testing.assert_allclose(table(x), fit.noise_density(x), atol=1e-3)
        np.testing.assert_array_equal(table(np.array([7.0])), fit.noise_density(np.array([7.0])))

    def test_lattice_points_order(self):
        points = lattice_points([np.array([0.0, 1.0]), np.array([5.0, 6.0, 7.0])])
        assert points.shape == (6, 2)
        np.testing.assert_array_equal(points[:3], [[0.0, 5.0], [0.0, 6.0], [0.0, 7.0]])

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            tabulate_function(np.cos, 1.0, -1.0, d=1)
        with pytest.raises(ValueError):
            tabulate_function(np.cos, -1.0, 1.0, d=1, points=1)

    def test_tabulated_density_dimension(self):
        table = TabulatedDensity([np.linspace(0, 1, 3)], np.zeros(3), None)
        assert table.d == 1
