# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Flat-top kernel, Fourier integration nodes and bandwidth rules."""

import math
from dataclasses import dataclass

import numpy as np

from .model import Ordinary, RegimeKind, SmoothnessRegime, StateSpaceSpec, smoothness_regime
from .utils import rng_for

# Below this |x| the spatial profile is evaluated from its Taylor expansion.
TAYLOR_CUTOFF = 1e-4


@dataclass(frozen=True)
class KernelSpec:
    """Flat-top kernel whose Fourier transform is a trapezoid.

    The transform equals 1 on [-1, 1], decreases linearly to 0 at +-a and
    vanishes beyond; ``a = 2`` is the default profile.
    """

    a: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 1.0):
            raise ValueError(f"kernel support radius must be > 1, got {self.a}")

    def fourier_nd(self, t: np.ndarray, h: float) -> np.ndarray:
        """Fourier transform of K_h at the rows of ``t``: prod_i FG(h t_i)."""
        return np.prod(kernel_fg(self, h * np.asarray(t, dtype=np.float64)), axis=-1)


def kernel_fg(spec: KernelSpec, t) -> np.ndarray:
    """Fourier profile FG(t) in [0, 1]."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    return np.clip((spec.a - t) / (spec.a - 1.0), 0.0, 1.0)


def kernel_g(spec: KernelSpec, x) -> np.ndarray:
    """Spatial profile G(x) = (cos x - cos(a x)) / (pi (a - 1) x^2)."""
    x = np.asarray(x, dtype=np.float64)
    a = spec.a
    scale = 1.0 / (math.pi * (a - 1.0))
    small = np.abs(x) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, x)
    direct = (np.cos(safe) - np.cos(a * safe)) / safe**2
    x2 = x * x
    series = 0.5 * (a * a - 1.0) - (a**4 - 1.0) * x2 / 24.0
    return scale * np.where(small, series, direct)


@dataclass(frozen=True, eq=False)
class FourierNodes:
    """Integration nodes drawn uniformly on the cube [-a/h, a/h]^d."""

    h: float
    a: float
    seed: int
    nodes: np.ndarray
    antithetic: bool = False

    @property
    def count(self) -> int:
        return self.nodes.shape[0]

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def half_width(self) -> float:
        return self.a / self.h

    @property
    def amplitude(self) -> float:
        """Cube volume over (2 pi)^d, i.e. (a / (h pi))^d."""
        return (self.a / (self.h * math.pi)) ** self.d

    def config(self) -> dict:
        return {
            "h": self.h,
            "a": self.a,
            "nodes": self.count,
            "seed": self.seed,
            "antithetic": self.antithetic,
        }


def build_fourier_nodes(
    h: float,
    a: float,
    count: int,
    seed: int,
    *,
    d: int = 1,
    antithetic: bool = False,
) -> FourierNodes:
    """Draw ``count`` nodes uniformly on [-a/h, a/h]^d.

    With ``antithetic=True`` the negated nodes are appended, giving
    ``2 * count`` rows.
    """
    if count < 1:
        raise ValueError(f"node count must be >= 1, got {count}")
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    half_width = a / h
    nodes = rng_for(seed).uniform(-half_width, half_width, size=(count, d))
    if antithetic:
        nodes = np.concatenate([nodes, -nodes], axis=0)
    nodes.setflags(write=False)
    return FourierNodes(h=h, a=a, seed=seed, nodes=nodes, antithetic=antithetic)


@dataclass(frozen=True)
class BandwidthPolicy:
    """Either a declared smoothness regime or an explicit bandwidth."""

    regime: SmoothnessRegime | None = None
    h: float | None = None

    def __post_init__(self):
        if (self.regime is None) == (self.h is None):
            raise ValueError("a bandwidth policy needs exactly one of regime or h")
        if self.h is not None and not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"explicit bandwidth must be positive, got {self.h}")

    @classmethod
    def for_spec(cls, spec: StateSpaceSpec, kind: RegimeKind | None = None) -> "BandwidthPolicy":
        """The regime read off the noise laws of ``spec``."""
        return cls(regime=smoothness_regime(spec, kind))

    @property
    def label(self) -> str:
        if self.h is not None:
            return f"explicit({self.h})"
        return "ordinary" if isinstance(self.regime, Ordinary) else "super"


def default_bandwidth(n: int, policy: BandwidthPolicy) -> float:
    """Bandwidth for sample size ``n``.

    Ordinary smooth noise uses n^(-1/8), super smooth noise (log n)^(-0.1);
    an explicit bandwidth is returned unchanged.
    """
    if n < 3:
        raise ValueError(f"bandwidth needs n >= 3, got {n}")
    if policy.h is not None:
        return policy.h
    if isinstance(policy.regime, Ordinary):
        return n ** (-1.0 / 8.0)
    return math.log(n) ** (-0.1)
