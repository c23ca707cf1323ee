"""Gaussian density algebra for linear-Gaussian target and sensor models.

Value types shared across the library (densities, mixtures, motion and
measurement models, ellipsoidal gates), the Kalman prediction/update steps,
and a small calculus of unnormalized exponential-quadratic ("canonical")
forms.  The canonical forms provide closed-form products, marginals and
integrals of Gaussian factors; every closed-form integral in the library
bottoms out here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

# Condition number above which a covariance/innovation matrix is rejected.
COND_LIMIT = 1e12

__all__ = [
    "SingularMatrixError",
    "GaussianDensity",
    "GaussianMixture",
    "MotionModel",
    "MeasurementModel",
    "Gate",
    "gaussian_eval",
    "kalman_predict",
    "predicted_measurement",
    "kalman_update",
    "gate_probability",
    "mahalanobis_sq",
    "mahalanobis_sq_many",
    "moment_match",
    "CanonicalForm",
    "density_form",
    "likelihood_form",
    "kernel_form",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix required to be invertible is numerically singular."""


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _check_cond(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise SingularMatrixError(f"{what} contains non-finite entries")
    if np.linalg.cond(a) > COND_LIMIT:
        raise SingularMatrixError(f"{what} is singular (condition number > {COND_LIMIT:g})")


def _as_cov(a, dim: int | None = None, what: str = "covariance") -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ValueError(f"{what} dimension {a.shape[0]} != expected {dim}")
    if not np.allclose(a, a.T, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{what} must be symmetric")
    eigs = np.linalg.eigvalsh(a)
    if eigs.min() < -1e-9 * max(1.0, eigs.max()):
        raise ValueError(f"{what} must be positive semi-definite")
    return _symmetrize(a)


@dataclass(frozen=True)
class GaussianDensity:
    """Multivariate normal with mean vector and (symmetric PSD) covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = _as_cov(self.cov, dim=mean.shape[0])
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def pdf(self, point) -> float:
        return gaussian_eval(self, point)

    def _factor(self):
        """Cached (inverse, log-determinant) with the singularity guard applied."""
        cached = getattr(self, "_factor_cache", None)
        if cached is None:
            if not np.all(np.isfinite(self.cov)):
                raise SingularMatrixError("covariance contains non-finite entries")
            eigs = np.linalg.eigvalsh(self.cov)
            if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > COND_LIMIT:
                raise SingularMatrixError(f"covariance is singular (condition number > {COND_LIMIT:g})")
            inv = np.linalg.inv(self.cov)
            logdet = float(np.sum(np.log(eigs)))
            cached = (inv, logdet)
            object.__setattr__(self, "_factor_cache", cached)
        return cached


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted sum of Gaussian components; weights need not sum to one.

    ``mass`` is the weight total (for intensity functions this is the
    expected point count), ``pdf`` evaluates the unit-mass normalization,
    and ``intensity`` evaluates the raw weighted sum.
    """

    weights: np.ndarray
    components: tuple[GaussianDensity, ...]

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        comps = tuple(self.components)
        if w.shape[0] != len(comps):
            raise ValueError("weight/component count mismatch")
        if np.any(w < -1e-12):
            raise ValueError("mixture weights must be non-negative")
        object.__setattr__(self, "weights", np.maximum(w, 0.0))
        object.__setattr__(self, "components", comps)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def pdf(self, point) -> float:
        m = self.mass
        if m <= 0.0:
            raise ValueError("cannot normalize a zero-mass mixture")
        return self.intensity(point) / m

    def intensity(self, point) -> float:
        return float(sum(w * gaussian_eval(c, point) for w, c in zip(self.weights, self.components)))

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(self.weights * factor, self.components)


def as_mixture(prior) -> GaussianMixture:
    """Coerce a GaussianDensity or mixture to a unit-mass GaussianMixture."""
    if isinstance(prior, GaussianDensity):
        return GaussianMixture(np.array([1.0]), (prior,))
    if isinstance(prior, GaussianMixture):
        m = prior.mass
        if m <= 0.0:
            raise ValueError("prior mixture has zero mass")
        return GaussianMixture(prior.weights / m, prior.components)
    raise TypeError(f"expected GaussianDensity or GaussianMixture, got {type(prior)!r}")


@dataclass(frozen=True)
class MotionModel:
    """Linear dynamics x' = F x + w with process noise covariance Q."""

    F: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        if F.shape[0] != F.shape[1]:
            raise ValueError("transition matrix must be square")
        Q = _as_cov(self.Q, dim=F.shape[0], what="process noise covariance")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)

    @property
    def dim(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True)
class MeasurementModel:
    """Linear observation y = H x + v with noise covariance R (positive definite)."""

    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        R = _as_cov(self.R, dim=H.shape[0], what="measurement noise covariance")
        if np.linalg.eigvalsh(R).min() <= 0.0:
            raise ValueError("measurement noise covariance must be positive definite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]

    @property
    def meas_dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class Gate:
    """Ellipsoidal validation region around a predicted measurement.

    A point y is inside the gate when its squared Mahalanobis distance to
    ``center`` is at most ``threshold``.
    """

    threshold: float
    center: GaussianDensity

    def __post_init__(self):
        if not self.threshold > 0.0:
            raise ValueError("gate threshold must be positive")

    def contains(self, point) -> bool:
        return mahalanobis_sq(self.center, point) <= self.threshold

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        return mahalanobis_sq_many(self.center, points) <= self.threshold


def gaussian_eval(d: GaussianDensity, point) -> float:
    """Evaluate the multivariate normal density at ``point``."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.shape[0] != d.dim:
        raise ValueError(f"point dimension {point.shape[0]} != density dimension {d.dim}")
    inv, logdet = d._factor()
    diff = point - d.mean
    maha = float(diff @ inv @ diff)
    return math.exp(-0.5 * (d.dim * math.log(2.0 * math.pi) + logdet + maha))


def mahalanobis_sq(d: GaussianDensity, point) -> float:
    point = np.atleast_1d(np.asarray(point, dtype=float))
    inv, _ = d._factor()
    diff = point - d.mean
    return float(diff @ inv @ diff)


def mahalanobis_sq_many(d: GaussianDensity, points: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distances for an (n, dim) array of points."""
    inv, _ = d._factor()
    diff = np.atleast_2d(np.asarray(points, dtype=float)) - d.mean
    return np.einsum("ni,ij,nj->n", diff, inv, diff)


def kalman_predict(prior: GaussianDensity, motion: MotionModel) -> GaussianDensity:
    """Propagate mean and covariance through the linear dynamics."""
    if motion.dim != prior.dim:
        raise ValueError("motion model dimension does not match prior")
    mean = motion.F @ prior.mean
    cov = _symmetrize(motion.F @ prior.cov @ motion.F.T + motion.Q)
    return GaussianDensity(mean, cov)


def predicted_measurement(predicted: GaussianDensity, mm: MeasurementModel) -> GaussianDensity:
    """Map a predicted state density into measurement space (innovation density)."""
    if mm.state_dim != predicted.dim:
        raise ValueError("measurement model state dimension does not match density")
    mean = mm.H @ predicted.mean
    cov = _symmetrize(mm.H @ predicted.cov @ mm.H.T + mm.R)
    return GaussianDensity(mean, cov)


def kalman_update(predicted: GaussianDensity, mm: MeasurementModel, y) -> GaussianDensity:
    """Condition a predicted state density on one measurement."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape[0] != mm.meas_dim:
        raise ValueError("measurement dimension does not match model")
    pm = predicted_measurement(predicted, mm)
    innovation_cov = pm.cov
    _check_cond(innovation_cov, "innovation covariance")
    gain = np.linalg.solve(innovation_cov, mm.H @ predicted.cov).T
    mean = predicted.mean + gain @ (y - pm.mean)
    cov = _symmetrize(predicted.cov - gain @ innovation_cov @ gain.T)
    return GaussianDensity(mean, cov)


def gate_probability(g: Gate) -> float:
    """Containment probability of the ellipsoidal gate (chi-square mass)."""
    return float(chi2.cdf(g.threshold, df=g.center.dim))


def moment_match(weights, means, covs) -> tuple[float, GaussianDensity]:
    """Collapse a Gaussian mixture to (mass, single Gaussian) by moment matching."""
    w = np.asarray(weights, dtype=float)
    mass = float(w.sum())
    if mass <= 0.0:
        raise ValueError("cannot moment-match a zero-mass mixture")
    p = w / mass
    means = [np.atleast_1d(np.asarray(m, dtype=float)) for m in means]
    mean = sum(pi * m for pi, m in zip(p, means))
    cov = sum(
        pi * (np.atleast_2d(c) + np.outer(m - mean, m - mean))
        for pi, m, c in zip(p, means, covs)
    )
    return mass, GaussianDensity(mean, _symmetrize(cov))


# ---------------------------------------------------------------------------
# Canonical (information-form) exponential-quadratic calculus.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalForm:
    """Unnormalized form exp(log_scale + eta.x - x.J.x / 2) over R^d.

    Products are additions of parameters, so arbitrary products of Gaussian
    densities, likelihoods and kernels stay in closed form.  ``J`` need only
    be positive definite when integrating.
    """

    log_scale: float
    eta: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        J = np.atleast_2d(np.asarray(self.J, dtype=float))
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "J", _symmetrize(J))

    @property
    def dim(self) -> int:
        return self.eta.shape[0]

    def __mul__(self, other: "CanonicalForm") -> "CanonicalForm":
        if other.dim != self.dim:
            raise ValueError("canonical form dimension mismatch")
        return CanonicalForm(self.log_scale + other.log_scale, self.eta + other.eta, self.J + other.J)

    def value_at(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return math.exp(self.log_scale + float(self.eta @ x) - 0.5 * float(x @ self.J @ x))

    def log_integral(self) -> float:
        """log of the integral over all of R^d (J must be positive definite)."""
        sign, logdet = np.linalg.slogdet(self.J)
        if sign <= 0:
            raise SingularMatrixError("canonical form is not integrable (J not PD)")
        mean = np.linalg.solve(self.J, self.eta)
        return self.log_scale + 0.5 * float(self.eta @ mean) + 0.5 * (self.dim * math.log(2.0 * math.pi) - logdet)

    def integral(self) -> float:
        return math.exp(self.log_integral())

    def moments(self) -> tuple[float, np.ndarray, np.ndarray]:
        """Total mass, mean and covariance of the form."""
        mass = self.integral()
        cov = np.linalg.inv(self.J)
        mean = cov @ self.eta
        return mass, mean, _symmetrize(cov)

    def condition(self, idx, values) -> "CanonicalForm":
        """Fix the coordinates ``idx`` to ``values``; returns a form over the rest."""
        idx = np.asarray(idx, dtype=int)
        values = np.atleast_1d(np.asarray(values, dtype=float))
        keep = np.setdiff1d(np.arange(self.dim), idx)
        Jaa = self.J[np.ix_(idx, idx)]
        Jba = self.J[np.ix_(keep, idx)]
        log_scale = self.log_scale + float(self.eta[idx] @ values) - 0.5 * float(values @ Jaa @ values)
        eta = self.eta[keep] - Jba @ values
        return CanonicalForm(log_scale, eta, self.J[np.ix_(keep, keep)])

    def marginal(self, keep) -> "CanonicalForm":
        """Integrate out all coordinates not in ``keep``."""
        keep = np.asarray(keep, dtype=int)
        drop = np.setdiff1d(np.arange(self.dim), keep)
        if drop.size == 0:
            return self
        Jbb = self.J[np.ix_(drop, drop)]
        sign, logdet = np.linalg.slogdet(Jbb)
        if sign <= 0:
            raise SingularMatrixError("marginalization block is not integrable")
        sol_eta = np.linalg.solve(Jbb, self.eta[drop])
        Jab = self.J[np.ix_(keep, drop)]
        log_scale = (
            self.log_scale
            + 0.5 * float(self.eta[drop] @ sol_eta)
            + 0.5 * (drop.size * math.log(2.0 * math.pi) - logdet)
        )
        eta = self.eta[keep] - Jab @ sol_eta
        J = self.J[np.ix_(keep, keep)] - Jab @ np.linalg.solve(Jbb, Jab.T)
        return CanonicalForm(log_scale, eta, J)


def density_form(d: GaussianDensity) -> CanonicalForm:
    """Canonical form of a normalized Gaussian density."""
    _check_cond(d.cov, "covariance")
    J = np.linalg.inv(d.cov)
    eta = J @ d.mean
    sign, logdet = np.linalg.slogdet(d.cov)
    log_scale = -0.5 * (d.dim * math.log(2.0 * math.pi) + logdet + float(d.mean @ eta))
    return CanonicalForm(log_scale, eta, _symmetrize(J))


def likelihood_form(A: np.ndarray, R: np.ndarray, y, dim: int | None = None) -> CanonicalForm:
    """N(y; A x, R) viewed as an unnormalized Gaussian form in x."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_cond(R, "likelihood noise covariance")
    Rinv = np.linalg.inv(R)
    J = A.T @ Rinv @ A
    eta = A.T @ Rinv @ y
    sign, logdet = np.linalg.slogdet(R)
    log_scale = -0.5 * (y.shape[0] * math.log(2.0 * math.pi) + logdet + float(y @ Rinv @ y))
    if dim is not None and A.shape[1] != dim:
        raise ValueError("likelihood map dimension mismatch")
    return CanonicalForm(log_scale, eta, J)


def kernel_form(A: np.ndarray, Sigma: np.ndarray) -> CanonicalForm:
    """exp(-(A x).Sigma^-1.(A x) / 2) as an unnormalized form in x."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    _check_cond(Sigma, "kernel covariance")
    J = A.T @ np.linalg.solve(Sigma, A)
    return CanonicalForm(0.0, np.zeros(A.shape[1]), J)
