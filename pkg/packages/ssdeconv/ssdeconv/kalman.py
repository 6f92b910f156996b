# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Parametric baseline: chi-square ellipsoids around the Kalman one-step predictor.

With known A, B and noise covariances Sigma (state) and Pi (measurement), the
one-step predictor of X_k from Y_1..Y_{k-1} and its error covariance follow

    K_k       = A Omega_k B^T (B Omega_k B^T + Pi)^-1
    Xhat_{k+1} = A Xhat_k + K_k (Y_k - B Xhat_k)
    Omega_{k+1} = A Omega_k A^T + Sigma - K_k B Omega_k A^T

and the three regions are ellipsoids {v : (v - c)^T S^-1 (v - c) <= q} with q
the chi-square quantile of the requested level.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import SingularMatrixError
from .linalg import checked_inverse, smallest_singular_value
from .model import ObservationSeries, StateSpaceSpec
from .prediction import IntervalSet, RootKind

KalmanInit = Literal["zero", "stationary"]


def chi2_quantile(d: int, p: float) -> float:
    """The p-quantile of the chi-square law with d degrees of freedom."""
    if d < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {d}")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must be in [0, 1), got {p}")
    return float(stats.chi2.ppf(p, d))


@dataclass(frozen=True, eq=False)
class EllipsoidReport:
    kind: RootKind
    center: np.ndarray
    shape: np.ndarray
    quantile: float
    level: float

    @property
    def d(self) -> int:
        return self.center.shape[0]

    def contains(self, v) -> bool:
        r = np.asarray(v, dtype=np.float64).reshape(-1) - self.center
        return bool(r @ np.linalg.solve(self.shape, r) <= self.quantile)

    def axis_lengths(self) -> np.ndarray:
        """Full axis lengths 2 sqrt(q lambda_i), longest first."""
        eig = np.linalg.eigvalsh(self.shape)[::-1]
        return 2.0 * np.sqrt(self.quantile * np.clip(eig, 0.0, None))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "center": self.center.tolist(),
            "shape": self.shape.tolist(),
            "quantile": self.quantile,
            "level": self.level,
        }


@dataclass(frozen=True, eq=False)
class KalmanPrediction:
    """One-step predictor of X_n from Y_1..Y_{n-1} and its error covariance."""

    state: np.ndarray
    covariance: np.ndarray


def kalman_predict(
    spec: StateSpaceSpec, series: ObservationSeries, init: KalmanInit = "zero"
) -> KalmanPrediction:
    """Run the predictor recursion from Xhat_1 = 0.

    ``init="zero"`` starts from Omega_1 = 0 (a series started at X_1 = 0);
    ``init="stationary"`` from the stationary state covariance.
    """
    if init == "zero":
        omega = np.zeros((spec.d, spec.d))
    elif init == "stationary":
        omega = spec.stationary_covariance()
    else:
        raise ValueError(f"init must be 'zero' or 'stationary', got {init!r}")
    A, B = spec.A, spec.B
    sigma = spec.eps.covariance()
    pi = spec.eta.covariance()
    x_hat = np.zeros(spec.d)
    for y in series.values[:-1]:
        innovation_cov = B @ omega @ B.T + pi
        gain = A @ omega @ B.T @ np.linalg.inv(innovation_cov)
        x_hat = A @ x_hat + gain @ (y - B @ x_hat)
        omega = A @ omega @ A.T + sigma - gain @ B @ omega @ A.T
        omega = 0.5 * (omega + omega.T)
    return KalmanPrediction(state=x_hat, covariance=omega)


def steady_state_covariance(spec: StateSpaceSpec) -> np.ndarray:
    """Fixed point of the error-covariance recursion (discrete algebraic Riccati)."""
    return scipy.linalg.solve_discrete_are(
        spec.A.T, spec.B.T, spec.eps.covariance(), spec.eta.covariance()
    )


def kalman_intervals(
    spec: StateSpaceSpec,
    series: ObservationSeries,
    level: float = 0.95,
    init: KalmanInit = "zero",
) -> IntervalSet:
    """Chi-square ellipsoids for X_n, X_{n+1} and Y_{n+1} around the one-step predictor.

    The covariances are Omega_n, A Omega_n A^T + Sigma and
    Pi + B Sigma B^T + B A Omega_n A^T B^T.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if series.d != spec.d:
        raise ValueError(f"series has dimension {series.d}, model has {spec.d}")
    prediction = kalman_predict(spec, series, init)
    omega = prediction.covariance
    if smallest_singular_value(omega) == 0.0:
        raise SingularMatrixError("the one-step error covariance Omega_n is singular")
    A, B = spec.A, spec.B
    sigma = spec.eps.covariance()
    pi = spec.eta.covariance()
    q = chi2_quantile(spec.d, level)

    state_shape = A @ omega @ A.T + sigma
    observation_shape = pi + B @ sigma @ B.T + B @ A @ omega @ A.T @ B.T
    regions = []
    for kind, center, shape in (
        (RootKind.FILTER, prediction.state, omega),
        (RootKind.STATE, A @ prediction.state, state_shape),
        (RootKind.OBSERVATION, B @ A @ prediction.state, observation_shape),
    ):
        checked_inverse(shape, f"{kind.value} covariance")
        regions.append(EllipsoidReport(kind, center, shape, q, level))
    return IntervalSet(*regions)

