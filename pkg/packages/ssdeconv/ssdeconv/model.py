# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Model specifications: the linear state space model

    X_{n+1} = A X_n + eps_{n+1}
    Y_n     = B X_n + eta_n

with its noise laws, the observed series, and the declared smoothness regime
of the measurement noise.
"""

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.linalg

from .errors import DataError, SingularMatrixError
from .linalg import as_matrix, checked_inverse, smallest_singular_value, spectral_norm
from .noise import GammaDifferenceIID, LinearMap, NoiseFamily, family_from_dict

MIN_SERIES_LENGTH = 3


@dataclass(frozen=True, eq=False)
class StateSpaceSpec:
    """A fully specified model, used for simulation and oracles."""

    A: np.ndarray
    B: np.ndarray
    eps: NoiseFamily
    eta: NoiseFamily

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        d = A.shape[0]
        if B.shape != A.shape:
            raise DataError(f"A is {A.shape} but B is {B.shape}")
        if self.eps.d != d or self.eta.d != d:
            raise DataError(
                f"noise dimensions (eps={self.eps.d}, eta={self.eta.d}) do not match d={d}"
            )
        checked_inverse(B, "B")
        if smallest_singular_value(A) == 0.0:
            raise SingularMatrixError("A is singular")
        norm = spectral_norm(A)
        if not norm < 1.0:
            raise DataError(f"A must satisfy ||A||_2 < 1, got {norm:.6g}")
        if smallest_singular_value(self.eps.covariance()) == 0.0:
            raise SingularMatrixError("the state-noise covariance is singular")
        for m in (A, B):
            m.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @cached_property
    def B_inv(self) -> np.ndarray:
        return np.linalg.inv(self.B)

    def stationary_covariance(self) -> np.ndarray:
        """Covariance of the stationary state: the solution of S = A S A^T + Sigma."""
        return scipy.linalg.solve_discrete_lyapunov(self.A, self.eps.covariance())

    def root_covariances(self) -> dict[str, np.ndarray]:
        """Covariances of the three predictive roots.

        ``filter``: B^-1 eta; ``state``: eps - A B^-1 eta;
        ``observation``: eta' + B eps - B A B^-1 eta.
        """
        sigma = self.eps.covariance()
        pi = self.eta.covariance()
        m = self.A @ self.B_inv
        filt = self.B_inv @ pi @ self.B_inv.T
        state = sigma + m @ pi @ m.T
        obs = pi + self.B @ state @ self.B.T
        return {"filter": filt, "state": state, "observation": obs}

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "eps": self.eps.to_dict(),
            "eta": self.eta.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpaceSpec":
        missing = [k for k in ("A", "B", "eps", "eta") if k not in data]
        if missing:
            raise DataError(f"model spec is missing field(s): {', '.join(missing)}")
        spec = cls(
            A=np.asarray(data["A"], dtype=np.float64),
            B=np.asarray(data["B"], dtype=np.float64),
            eps=family_from_dict(data["eps"]),
            eta=family_from_dict(data["eta"]),
        )
        if "d" in data and int(data["d"]) != spec.d:
            raise DataError(f"model spec declares d={data['d']} but A is {spec.d}x{spec.d}")
        return spec

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "StateSpaceSpec":
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON: {e}") from e
        return cls.from_dict(data)


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Observations Y_1..Y_n as an (n, d) array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2 or v.shape[1] < 1:
            raise DataError(f"observations must be an (n, d) array, got shape {v.shape}")
        if v.shape[0] < MIN_SERIES_LENGTH:
            raise DataError(
                f"at least {MIN_SERIES_LENGTH} observations are required, got {v.shape[0]}"
            )
        if not np.all(np.isfinite(v)):
            raise DataError("observations contain non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def last(self) -> np.ndarray:
        return self.values[-1]

    def whitened(self, B_inv: np.ndarray) -> np.ndarray:
        """Rows B^-1 Y_j."""
        return self.values @ np.asarray(B_inv).T


@dataclass(frozen=True)
class Ordinary:
    """Polynomially decaying measurement-noise characteristic function."""

    beta: float
    b: float
    c: float

    def __post_init__(self):
        _check_positive(self)


@dataclass(frozen=True)
class Super:
    """Exponentially decaying measurement-noise characteristic function."""

    beta: float
    gamma: float
    b: float
    r: float
    c: float

    def __post_init__(self):
        _check_positive(self)


SmoothnessRegime = Ordinary | Super


def _check_positive(regime):
    for name, value in vars(regime).items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(
                f"{type(regime).__name__}.{name} must be strictly positive, got {value}"
            )


RegimeKind = Literal["ordinary", "super"]


def _unwrap(family: NoiseFamily) -> tuple[np.ndarray, NoiseFamily]:
    """Total mixing matrix C and innermost family, so that phi(t) = base.char(t @ C)."""
    c = np.eye(family.d)
    while isinstance(family, LinearMap):
        c = c @ np.asarray(family.matrix)
        family = family.base
    return c, family


def _is_diagonal(c: np.ndarray) -> bool:
    return bool(np.all(c == np.diag(np.diag(c))))


def _gamma_difference_decay(c: np.ndarray, base: GammaDifferenceIID, kind: RegimeKind) -> tuple[float, float]:
    """(beta, constant) of a lower envelope of prod_i (1 + theta_i^2 s_i^2)^(-k_i), s = t @ C.

    The constant is gamma for the exponential envelope and c for the
    polynomial one.
    """
    k = np.asarray(base.shape)
    theta = np.asarray(base.scale)
    if _is_diagonal(c):
        spread = theta * np.abs(np.diag(c))
        if kind == "super":
            # log1p(x) <= x
            return 2.0, float(np.max(k * spread**2))
        return 2.0 * float(k.max()), float(np.prod(np.minimum(1.0, spread ** (-2.0 * k))))
    spread = theta * np.linalg.norm(c, axis=0)
    if kind == "super":
        return 2.0, float(np.sum(k * spread**2))
    return 2.0 * float(k.sum()), float(np.prod((1.0 + spread**2) ** (-k)))


def _state_noise_tail(eps: NoiseFamily, kind: RegimeKind) -> tuple[float, float]:
    """(b, r) for which |F f_eps|^2 stays integrable against the regime's weight."""
    _, base = _unwrap(eps)
    if base.is_gaussian:
        lam = float(np.linalg.eigvalsh(eps.covariance()).min())
        return 2.0, 0.5 * lam
    if kind == "super":
        raise DataError(
            "super smooth bandwidth needs a state noise with an exponentially decaying "
            "characteristic function; pass an explicit bandwidth"
        )
    assert isinstance(base, GammaDifferenceIID)
    k_min = min(base.shape)
    if not k_min > 0.25:
        raise DataError(
            f"state noise shape {k_min:g} leaves its characteristic function not square "
            "integrable; pass an explicit bandwidth"
        )
    return 2.0 * k_min - 0.5, 1.0


def smoothness_regime(spec: StateSpaceSpec, kind: RegimeKind | None = None) -> SmoothnessRegime:
    """Smoothness regime of ``spec`` with constants read off its noise laws.

    The measurement noise fixes the kind (Gaussian laws are super smooth,
    gamma differences ordinary smooth) together with beta, gamma and c; the
    state noise fixes b and r. ``kind`` forces the regime: a gamma-difference
    measurement noise also has a super smooth envelope, a Gaussian one has no
    ordinary smooth envelope.
    """
    c_eta, base = _unwrap(spec.eta)
    if kind is None:
        kind = "super" if base.is_gaussian else "ordinary"
    if base.is_gaussian and kind == "ordinary":
        raise DataError("Gaussian measurement noise is super smooth, not ordinary smooth")
    b, r = _state_noise_tail(spec.eps, kind)
    if base.is_gaussian:
        gamma = 0.5 * float(np.linalg.eigvalsh(spec.eta.covariance()).max())
        return Super(beta=2.0, gamma=gamma, b=b, r=r, c=1.0)
    assert isinstance(base, GammaDifferenceIID)
    beta, constant = _gamma_difference_decay(c_eta, base, kind)
    if kind == "super":
        return Super(beta=beta, gamma=constant, b=b, r=r, c=1.0)
    return Ordinary(beta=beta, b=b, c=constant)
