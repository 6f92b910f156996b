# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Estimators of the transition matrix and of the state and state-noise densities.

The density estimators are Fourier deconvolution estimators whose inversion
integral is computed by Monte Carlo over a fixed set of nodes drawn uniformly
on the support cube of the kernel's Fourier transform. The data-dependent
Fourier sums are precomputed once per fit, so evaluating an estimate at a
point costs O(R_nodes):

    f(x) = max(0, Re[(a / (h pi))^d * mean_k w_k exp(-i zeta_k^T x)])

with per-node weights w_k that depend on the target:

- state density:  FK_h(zeta) / phi_eta(B^-T zeta) * mean_j exp(i zeta^T B^-1 Y_j)
- noise density:  FK_h(zeta) / [phi_eta(B^-T zeta) phi_eta(-B^-T Ahat^T zeta)]
                  * mean_j exp(i zeta^T (B^-1 Y_{j+1} - Ahat B^-1 Y_j))
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator

from .errors import DataError, SingularMatrixError, VanishingCharacteristicError
from .kernel import FourierNodes, KernelSpec, build_fourier_nodes
from .linalg import as_points, checked_inverse, pseudo_inverse, smallest_singular_value
from .model import ObservationSeries
from .noise import NoiseFamily
from .utils import logger

# Smallest admissible |phi_eta| on the integration cube.
CHAR_FLOOR = 1e-12
# Smallest admissible singular value of the estimated transition matrix.
A_HAT_FLOOR = 1e-8
# Complex entries materialized per block when summing over data or nodes.
BLOCK_ELEMENTS = 1 << 22

DensityTarget = Literal["state", "noise"]


def estimate_transition_matrix(series: ObservationSeries, B) -> np.ndarray:
    """Lag-two moment estimator of the state transition matrix.

    Ahat = (sum_{k=3}^n B^-1 Y_k Y_{k-2}^T B^-T) (sum_{k=3}^n B^-1 Y_{k-1} Y_{k-2}^T B^-T)^+

    The sums are not averaged; the pseudo-inverse makes the result identical
    to the averaged form whenever the inner matrix is invertible.
    """
    B_inv = checked_inverse(B, "B")
    u = series.whitened(B_inv)
    lag2 = u[2:].T @ u[:-2]
    lag1 = u[1:-1].T @ u[:-2]
    return lag2 @ pseudo_inverse(lag1)


def _block_rows(other: int) -> int:
    return max(1, BLOCK_ELEMENTS // max(1, other))


def _empirical_char(points: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """mean_j exp(i nodes_k^T points_j) for every node k."""
    out = np.empty(nodes.shape[0], dtype=np.complex128)
    step = _block_rows(points.shape[0])
    for start in range(0, nodes.shape[0], step):
        block = nodes[start : start + step]
        phase = points @ block.T
        out[start : start + step] = np.exp(1j * phase).mean(axis=0)
    return out


def _checked_char(eta: NoiseFamily, t: np.ndarray, what: str) -> np.ndarray:
    phi = eta.char(t)
    smallest = float(np.min(np.abs(phi)))
    if smallest < CHAR_FLOOR:
        raise VanishingCharacteristicError(
            f"characteristic function vanishes on integration cube ({what}: min |phi| = {smallest:.3g}); "
            "check the measurement-noise family and the bandwidth"
        )
    return phi


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    """A fitted deconvolution density; a fixed deterministic function of x."""

    target: DensityTarget
    nodes: FourierNodes
    weights: np.ndarray
    kernel: KernelSpec
    n: int

    @property
    def d(self) -> int:
        return self.nodes.d

    @property
    def amplitude(self) -> float:
        return self.nodes.amplitude

    @property
    def bound(self) -> float:
        """Upper bound amplitude * mean |w_k| on every evaluation."""
        return self.amplitude * float(np.mean(np.abs(self.weights)))

    def raw(self, x) -> np.ndarray:
        """Unclipped complex Monte Carlo integral at the rows of ``x``."""
        x = as_points(x, self.d)
        z = self.nodes.nodes
        out = np.empty(x.shape[0], dtype=np.complex128)
        step = _block_rows(z.shape[0])
        for start in range(0, x.shape[0], step):
            phase = x[start : start + step] @ z.T
            out[start : start + step] = np.exp(-1j * phase) @ self.weights
        return self.amplitude * out / z.shape[0]

    def __call__(self, x) -> np.ndarray:
        """Evaluate max(0, Re f~) at the rows of ``x``."""
        x = as_points(x, self.d)
        z = self.nodes.nodes
        w_re = self.weights.real
        w_im = self.weights.imag
        out = np.empty(x.shape[0])
        step = _block_rows(z.shape[0])
        for start in range(0, x.shape[0], step):
            phase = x[start : start + step] @ z.T
            out[start : start + step] = np.cos(phase) @ w_re + np.sin(phase) @ w_im
        return np.maximum(self.amplitude * out / z.shape[0], 0.0)

    def tabulate(
        self, lower, upper, points: int | None = None
    ) -> "TabulatedDensity":
        """Tabulate on a regular lattice; points outside it are evaluated exactly."""
        return tabulate_function(self, lower, upper, d=self.d, points=points)

    def to_frame(self, axes: Sequence[np.ndarray] | np.ndarray) -> pd.DataFrame:
        """Values over the Cartesian lattice of ``axes`` as columns x1..xd, value."""
        axes = _normalize_axes(axes, self.d)
        lattice = lattice_points(axes)
        frame = pd.DataFrame(lattice, columns=[f"x{i + 1}" for i in range(self.d)])
        frame["value"] = self(lattice)
        return frame

    def config(self) -> dict:
        return {"target": self.target, "n": self.n, **self.nodes.config()}


def eval_density(estimate: DensityEstimate, x) -> np.ndarray:
    return estimate(x)


def fit_state_density(
    series: ObservationSeries,
    B,
    eta: NoiseFamily,
    *,
    nodes: FourierNodes,
    kernel: KernelSpec = KernelSpec(),
) -> DensityEstimate:
    """Deconvolution estimate of the stationary state density f_X."""
    _check_nodes(nodes, kernel, series.d)
    B_inv = checked_inverse(B, "B")
    z = nodes.nodes
    phi = _checked_char(eta, z @ B_inv, "phi_eta(B^-T zeta)")
    u = series.whitened(B_inv)
    weights = kernel.fourier_nd(z, nodes.h) / phi * _empirical_char(u, z)
    logger.debug("fitted state density: n=%d nodes=%d h=%.4g", series.n, nodes.count, nodes.h)
    return DensityEstimate("state", nodes, weights, kernel, series.n)


def fit_noise_density(
    series: ObservationSeries,
    B,
    A_hat,
    eta: NoiseFamily,
    *,
    nodes: FourierNodes,
    kernel: KernelSpec = KernelSpec(),
) -> DensityEstimate:
    """Deconvolution estimate of the state-noise density f_eps.

    Requires ``A_hat`` to be nonsingular (smallest singular value >= 1e-8).
    """
    _check_nodes(nodes, kernel, series.d)
    B_inv = checked_inverse(B, "B")
    A_hat = np.asarray(A_hat, dtype=np.float64)
    sigma_min = smallest_singular_value(A_hat)
    if sigma_min < A_HAT_FLOOR:
        raise SingularMatrixError(
            f"estimated transition matrix is singular (smallest singular value {sigma_min:.3g})"
        )
    z = nodes.nodes
    phi_now = _checked_char(eta, z @ B_inv, "phi_eta(B^-T zeta)")
    phi_back = _checked_char(eta, -(z @ A_hat @ B_inv), "phi_eta(-B^-T Ahat^T zeta)")
    u = series.whitened(B_inv)
    residuals = u[1:] - u[:-1] @ A_hat.T
    weights = (
        kernel.fourier_nd(z, nodes.h) / (phi_now * phi_back) * _empirical_char(residuals, z)
    )
    logger.debug("fitted noise density: n=%d nodes=%d h=%.4g", series.n, nodes.count, nodes.h)
    return DensityEstimate("noise", nodes, weights, kernel, series.n)


def _check_nodes(nodes: FourierNodes, kernel: KernelSpec, d: int):
    if nodes.d != d:
        raise DataError(f"nodes have dimension {nodes.d} but the series has dimension {d}")
    if nodes.a != kernel.a:
        raise ValueError(
            f"nodes were drawn for support radius {nodes.a}, kernel has {kernel.a}"
        )


def _normalize_axes(axes, d: int) -> list[np.ndarray]:
    if isinstance(axes, np.ndarray) and axes.ndim == 1:
        axes = [axes] * d
    axes = [np.asarray(ax, dtype=np.float64) for ax in axes]
    if len(axes) != d:
        raise DataError(f"expected {d} grid axes, got {len(axes)}")
    return axes


def lattice_points(axes: list[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class TabulatedDensity:
    """Piecewise-linear interpolant of a function on a regular lattice.

    Inside the lattice values come from ``numpy.interp`` (d = 1) or a
    ``RegularGridInterpolator`` (d >= 2); outside it the wrapped function is
    evaluated exactly.
    """

    def __init__(
        self,
        axes: list[np.ndarray],
        values: np.ndarray,
        fallback: Callable[[np.ndarray], np.ndarray] | None,
    ):
        self.axes = axes
        self.values = values
        self.fallback = fallback
        self.lower = np.array([ax[0] for ax in axes])
        self.upper = np.array([ax[-1] for ax in axes])
        self._interpolator = (
            None
            if len(axes) == 1
            else RegularGridInterpolator(tuple(axes), values, method="linear")
        )

    @property
    def d(self) -> int:
        return len(self.axes)

    def __call__(self, x) -> np.ndarray:
        x = as_points(x, self.d)
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
        out = np.zeros(x.shape[0])
        if self._interpolator is None:
            out[inside] = np.interp(x[inside, 0], self.axes[0], self.values)
        elif np.any(inside):
            out[inside] = self._interpolator(x[inside])
        if self.fallback is not None and not np.all(inside):
            out[~inside] = self.fallback(x[~inside])
        return out


def tabulate_function(
    func: Callable[[np.ndarray], np.ndarray],
    lower,
    upper,
    *,
    d: int,
    points: int | None = None,
    exact_outside: bool = True,
) -> TabulatedDensity:
    """Tabulate a vectorized function of (m, d) points on [lower, upper]^d.

    ``points`` is the node count per axis (default 4096 for d = 1, 256 otherwise).
    """
    if points is None:
        points = 4096 if d == 1 else 256
    if points < 2:
        raise ValueError(f"tabulation needs at least 2 points per axis, got {points}")
    lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), (d,))
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), (d,))
    if np.any(upper <= lower):
        raise ValueError("tabulation range must satisfy lower < upper on every axis")
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(lower, upper)]
    values = np.asarray(func(lattice_points(axes)), dtype=np.float64)
    values = values.reshape((points,) * d)
    return TabulatedDensity(axes, values, func if exact_outside else None)


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Estimates of A, f_eps and (optionally) f_X from one observed series."""

    A_hat: np.ndarray
    noise_density: DensityEstimate
    state_density: DensityEstimate | None
    nodes: FourierNodes

    @property
    def h(self) -> float:
        return self.nodes.h

    def config(self) -> dict:
        return self.nodes.config()


def fit_model(
    series: ObservationSeries,
    B,
    eta: NoiseFamily,
    *,
    h: float,
    nodes: int = 10_000,
    seed: int = 0,
    kernel: KernelSpec = KernelSpec(),
    antithetic: bool = False,
    state_density: bool = True,
) -> FittedModel:
    """Estimate A, then f_eps (and f_X unless ``state_density`` is false) on one node set."""
    fourier_nodes = build_fourier_nodes(
        h, kernel.a, nodes, seed, d=series.d, antithetic=antithetic
    )
    A_hat = estimate_transition_matrix(series, B)
    noise = fit_noise_density(series, B, A_hat, eta, nodes=fourier_nodes, kernel=kernel)
    state = (
        fit_state_density(series, B, eta, nodes=fourier_nodes, kernel=kernel)
        if state_density
        else None
    )
    return FittedModel(A_hat=A_hat, noise_density=noise, state_density=state, nodes=fourier_nodes)
