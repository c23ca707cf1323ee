"""False-alarm point-process models over a bounded measurement box.

Poisson and i.i.d.-cluster clutter, their spatial densities (uniform over
the box, or a Gaussian truncated to the box), weighted-delta evaluation of
their generating functionals, and samplers for simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .gaussmath import GaussianDensity, gaussian_eval
from .scalars import sexp

__all__ = [
    "Box",
    "UniformBoxDensity",
    "TruncatedGaussianDensity",
    "PoissonClutter",
    "ClusterClutter",
    "clutter_secular_eval",
    "sample_clutter",
]

_QMC_EXPONENT = 13  # 2^13 deterministic low-discrepancy nodes for region masses


def _indicator_values(indicator, nodes: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(indicator(nodes), dtype=float)
        if vals.shape == (nodes.shape[0],):
            return vals
    except Exception:
        pass
    return np.fromiter((1.0 if indicator(y) else 0.0 for y in nodes), dtype=float)


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounded region of measurement space."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box must have hi > lo in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, point) -> bool:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return bool(np.all(point >= self.lo) and np.all(point <= self.hi))

    def qmc_nodes(self) -> np.ndarray:
        cached = getattr(self, "_qmc_cache", None)
        if cached is None:
            sampler = qmc.Sobol(d=self.dim, scramble=False)
            unit = sampler.random_base2(m=_QMC_EXPONENT)
            cached = self.lo + unit * (self.hi - self.lo)
            object.__setattr__(self, "_qmc_cache", cached)
        return cached


class UniformBoxDensity:
    """Uniform spatial density over the box."""

    def __init__(self, box: Box):
        self.box = box
        self._density = 1.0 / box.volume

    def pdf(self, point) -> float:
        return self._density if self.box.contains(point) else 0.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.box.lo, self.box.hi, size=(n, self.box.dim))

    def mass_on(self, indicator) -> float:
        """Probability mass of {y : indicator(y)} under this density.

        ``indicator`` may be vectorized (accepting an (n, dim) array) or
        pointwise.
        """
        nodes = self.box.qmc_nodes()
        inside = _indicator_values(indicator, nodes)
        return float(inside.mean())


class TruncatedGaussianDensity:
    """Gaussian spatial density restricted (and renormalized) to the box."""

    def __init__(self, base: GaussianDensity, box: Box):
        if base.dim != box.dim:
            raise ValueError("density and box dimensions differ")
        self.base = base
        self.box = box
        nodes = box.qmc_nodes()
        vals = np.array([gaussian_eval(base, y) for y in nodes])
        self._box_mass = float(vals.mean() * box.volume)
        if self._box_mass <= 0.0:
            raise ValueError("Gaussian carries no mass on the box")
        self._nodes = nodes
        self._node_vals = vals

    def pdf(self, point) -> float:
        if not self.box.contains(point):
            return 0.0
        return gaussian_eval(self.base, point) / self._box_mass

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty((n, self.box.dim))
        filled = 0
        while filled < n:
            draw = rng.multivariate_normal(self.base.mean, self.base.cov, size=max(n - filled, 8))
            for y in draw:
                if filled < n and self.box.contains(y):
                    out[filled] = y
                    filled += 1
        return out

    def mass_on(self, indicator) -> float:
        inside = _indicator_values(indicator, self._nodes) * self._node_vals
        return float(inside.mean() * self.box.volume / self._box_mass)


@dataclass(frozen=True)
class PoissonClutter:
    """Poisson clutter with mean count and a spatial density over the box."""

    lambda_total: float
    spatial: object

    def __post_init__(self):
        if not (0.0 <= self.lambda_total < math.inf):
            raise ValueError("mean clutter count must be finite and non-negative")

    def intensity(self, point) -> float:
        return self.lambda_total * self.spatial.pdf(point)


@dataclass(frozen=True)
class ClusterClutter:
    """i.i.d. cluster clutter: finite count distribution, common spatial density."""

    card_pgf: tuple[float, ...]
    spatial: object

    def __post_init__(self):
        p = tuple(float(v) for v in self.card_pgf)
        if any(v < 0 for v in p):
            raise ValueError("count probabilities must be non-negative")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ValueError("count probabilities must sum to one")
        object.__setattr__(self, "card_pgf", p)

    def count_pgf(self, z):
        acc = 0.0
        for c in reversed(self.card_pgf):
            acc = acc * z + c
        return acc

    @property
    def mean_count(self) -> float:
        return sum(c * p for c, p in enumerate(self.card_pgf))

    def intensity(self, point) -> float:
        return self.mean_count * self.spatial.pdf(point)


def clutter_secular_eval(c, base_g, weights):
    """Evaluate the clutter generating functional at base_g plus weighted deltas.

    ``weights`` is a sequence of (point, weight) pairs; weight kind is generic.
    """
    if isinstance(c, PoissonClutter):
        lam = c.lambda_total
        acc = -lam + lam * base_g
        for point, w in weights:
            acc = acc + w * (lam * c.spatial.pdf(point))
        return sexp(acc)
    if isinstance(c, ClusterClutter):
        arg = base_g
        for point, w in weights:
            arg = arg + w * c.spatial.pdf(point)
        return c.count_pgf(arg)
    raise TypeError(f"unsupported clutter model {type(c)!r}")


def sample_clutter(c, rng: np.random.Generator) -> list[np.ndarray]:
    """Draw one scan's clutter points."""
    if isinstance(c, PoissonClutter):
        n = int(rng.poisson(c.lambda_total))
    elif isinstance(c, ClusterClutter):
        n = int(rng.choice(len(c.card_pgf), p=np.asarray(c.card_pgf)))
    else:
        raise TypeError(f"unsupported clutter model {type(c)!r}")
    if n == 0:
        return []
    return [np.asarray(y) for y in c.spatial.sample(rng, n)]
