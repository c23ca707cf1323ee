"""Generating functions for the number of measurements a target produces.

Covers Bernoulli detect/miss counts, extended targets with a bounded count
distribution, Poisson measurement counts, and the two-target resolution
model in which poorly separated targets can merge into a single return.
All evaluators are generic over the scalar kind of the argument so dual
numbers and contour grids flow through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scalars import sexp, spow

__all__ = [
    "DetectionModel",
    "ExtendedTargetPgf",
    "PoissonMeasPgf",
    "ResolutionModel",
    "pgf_eval",
    "resolution_function",
    "resolution_pgf",
]

MAX_EXTENDED_COUNT = 32


@dataclass(frozen=True)
class DetectionModel:
    """Detect-or-miss model with state-independent detection probability."""

    pd: float

    def __post_init__(self):
        if not 0.0 <= self.pd <= 1.0:
            raise ValueError("detection probability must lie in [0, 1]")

    @property
    def miss(self) -> float:
        return 1.0 - self.pd


@dataclass(frozen=True)
class ExtendedTargetPgf:
    """Detected targets emit m measurements with probability dm[m-1], m >= 1."""

    pd: float
    dm: tuple[float, ...]

    def __post_init__(self):
        if not 0.0 <= self.pd <= 1.0:
            raise ValueError("detection probability must lie in [0, 1]")
        dm = tuple(float(d) for d in self.dm)
        if len(dm) == 0 or len(dm) > MAX_EXTENDED_COUNT:
            raise ValueError(f"count support must have between 1 and {MAX_EXTENDED_COUNT} entries")
        if any(d < 0.0 for d in dm):
            raise ValueError("count probabilities must be non-negative")
        if abs(sum(dm) - 1.0) > 1e-12:
            raise ValueError("count probabilities must sum to one")
        object.__setattr__(self, "dm", dm)

    @property
    def mean_count(self) -> float:
        return self.pd * sum((m + 1) * d for m, d in enumerate(self.dm))


@dataclass(frozen=True)
class PoissonMeasPgf:
    """Poisson-distributed measurement count with constant mean rate."""

    rate: float

    def __post_init__(self):
        if self.rate < 0.0:
            raise ValueError("measurement rate must be non-negative")


@dataclass(frozen=True)
class ResolutionModel:
    """Two-target sensor resolution model.

    ``h1``/``h2`` map the two state spaces into measurement space; ``sigma``
    sets the separation scale below which the pair merges into one return.
    """

    h1: np.ndarray
    h2: np.ndarray
    sigma: np.ndarray
    pd1: float
    pd2: float

    def __post_init__(self):
        h1 = np.atleast_2d(np.asarray(self.h1, dtype=float))
        h2 = np.atleast_2d(np.asarray(self.h2, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if h1.shape[0] != h2.shape[0] or sigma.shape != (h1.shape[0], h1.shape[0]):
            raise ValueError("resolution maps and covariance must share the measurement dimension")
        if not np.allclose(sigma, sigma.T) or np.linalg.eigvalsh(sigma).min() <= 0:
            raise ValueError("resolution covariance must be symmetric positive definite")
        if not (0.0 <= self.pd1 <= 1.0 and 0.0 <= self.pd2 <= 1.0):
            raise ValueError("detection probabilities must lie in [0, 1]")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "sigma", sigma)


def pgf_eval(model, z):
    """Evaluate a count generating function at ``z`` (any scalar kind)."""
    if isinstance(model, DetectionModel):
        return model.miss + model.pd * z
    if isinstance(model, ExtendedTargetPgf):
        acc = 0.0
        for d in reversed(model.dm):
            acc = (acc + d) * z
        return (1.0 - model.pd) + model.pd * acc
    if isinstance(model, PoissonMeasPgf):
        return sexp(-model.rate + model.rate * z)
    raise TypeError(f"unsupported count model {type(model)!r}")


def resolution_function(rm: ResolutionModel, x1, x2) -> float:
    """Degree to which two targets are unresolved: 1 at coincident images, -> 0 apart."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    sep = rm.h1 @ x1 - rm.h2 @ x2
    return math.exp(-0.5 * float(sep @ np.linalg.solve(rm.sigma, sep)))


def resolution_coefficients(rm: ResolutionModel, x1, x2) -> tuple[float, float, float]:
    """Coefficients (c0, c1, c2) of the pair's measurement-count PGF."""
    f = resolution_function(rm, x1, x2)
    a1, b1 = 1.0 - rm.pd1, rm.pd1
    a2, b2 = 1.0 - rm.pd2, rm.pd2
    c0 = a1 * a2
    c1 = a1 * b2 + b1 * a2 + f * b1 * b2
    c2 = b1 * b2 * (1.0 - f)
    return c0, c1, c2


def resolution_pgf(rm: ResolutionModel, x1, x2, z):
    """Count PGF of the pair's merged-or-separate measurement process."""
    c0, c1, c2 = resolution_coefficients(rm, x1, x2)
    return c0 + c1 * z + c2 * spow(z, 2)
