"""Mixed first-order derivatives of secular functions and posterior statistics.

Substituting weighted point masses into a process functional yields an
ordinary analytic function of the weights whose mixed first-order partials
at zero are the functional derivatives.  Three interchangeable engines
compute them: seeded dual numbers (exact), tensor-product trapezoidal
contour quadrature with second-order poles at the origin, and central
finite differences.  On top of the derivatives sit the Bayes-posterior
summary statistics: intensity, factorial moments, and the distribution of
the number of targets extracted by inverting its generating function on a
circle.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .duals import MAX_VARIABLES, MultiDual
from .pgfl import SecularContext, evaluate_secular, target_labels

__all__ = [
    "BudgetError",
    "NumericalError",
    "derivative_ad",
    "derivative_cauchy",
    "derivative_fd",
    "mixed_derivative_ad",
    "mixed_derivative_cauchy",
    "mixed_derivative_fd",
    "mixed_derivative",
    "posterior_intensity",
    "posterior_cardinality",
    "factorial_moment",
    "tagged_extraction",
    "association_weights",
    "marked_branch_masses",
    "PosteriorStats",
]

CONTOUR_NODE_BUDGET = 10_000_000
DEFAULT_RADIUS = 0.5
DEFAULT_NODES = 32
DEFAULT_STEP = 1e-3
DENOMINATOR_FLOOR = 1e-300


class BudgetError(RuntimeError):
    """A derivative request exceeded the variable or node budget."""


class NumericalError(RuntimeError):
    """A statistic could not be extracted reliably (zero mass, bad vector)."""


# ---------------------------------------------------------------------------
# Low-level engines over a callable f(weights) -> scalar
# ---------------------------------------------------------------------------


def _centers(centers, nvars: int):
    if centers is None:
        return [0.0] * nvars
    centers = list(centers)
    if len(centers) != nvars:
        raise ValueError("one center per variable required")
    return centers


def derivative_ad(f, nvars: int, centers=None):
    """Exact mixed first partial (at the given centers) via nilpotent duals."""
    if nvars > MAX_VARIABLES:
        raise BudgetError(f"variable budget exceeded ({nvars} > {MAX_VARIABLES})")
    if nvars == 0:
        return complex(f(()))
    centers = _centers(centers, nvars)
    weights = [MultiDual.variable(i, nvars, value=centers[i]) for i in range(nvars)]
    out = f(tuple(weights))
    full = (1 << nvars) - 1
    return complex(out.coefficient(full))


def derivative_cauchy(f, nvars: int, radius: float = DEFAULT_RADIUS, nodes: int = DEFAULT_NODES, centers=None):
    """Tensor-product trapezoidal contour rule; exact for per-variable degree < nodes."""
    if radius <= 0 or nodes < 2:
        raise ValueError("contour radius must be positive and nodes >= 2")
    if nodes**nvars > CONTOUR_NODE_BUDGET:
        raise BudgetError(f"contour node budget exceeded ({nodes}^{nvars})")
    if nvars == 0:
        return complex(f(()))
    centers = _centers(centers, nvars)
    angles = 2.0 * math.pi * np.arange(nodes) / nodes
    ring = radius * np.exp(1j * angles)
    conj_phase = np.exp(-1j * angles)
    if nvars == 1:
        vals = np.asarray(f((centers[0] + ring,)))
        # Extended-precision accumulation: the phased sum cancels to a value far
        # below the summand magnitudes, so double-precision partial sums dominate
        # the error otherwise.
        total = np.sum((vals * conj_phase).astype(np.complex256))
        return complex(total / (nodes * radius))
    # Chunk over the first variable; broadcast the rest as an (nodes,)*k grid.
    grids = []
    phases = []
    for j in range(1, nvars):
        shape = [1] * (nvars - 1)
        shape[j - 1] = nodes
        grids.append(centers[j] + ring.reshape(shape))
        phases.append(conj_phase.reshape(shape))
    phase_rest = np.ones([nodes] * (nvars - 1), dtype=complex)
    for p in phases:
        phase_rest = phase_rest * p
    total = np.complex256(0.0)
    for k0 in range(nodes):
        vals = np.asarray(f((centers[0] + ring[k0],) + tuple(grids)))
        total += np.complex256(conj_phase[k0]) * np.sum((vals * phase_rest).astype(np.complex256))
    return complex(total / np.longdouble((nodes * radius)) ** nvars)


def derivative_fd(f, nvars: int, step: float = DEFAULT_STEP, centers=None):
    """Central-difference tensor stencil for the mixed first partial."""
    if not 0.0 < step <= 0.5:
        raise ValueError("finite-difference step must lie in (0, 0.5]")
    if nvars == 0:
        return complex(f(()))
    centers = _centers(centers, nvars)
    # Extended-precision stencil arithmetic: the alternating sum cancels across
    # many orders of magnitude, and the model ingredients entering the secular
    # function are identical at every stencil node, so the extra precision in
    # the weights directly lowers the cancellation floor.
    pts = np.array([-step, step], dtype=np.longdouble)
    sign = np.array([-1.0, 1.0], dtype=np.longdouble)
    grids = []
    sign_prod = np.ones([2] * nvars, dtype=np.longdouble)
    for j in range(nvars):
        shape = [1] * nvars
        shape[j] = 2
        grids.append(np.longdouble(centers[j]) + pts.reshape(shape))
        sign_prod = sign_prod * sign.reshape(shape)
    vals = np.asarray(f(tuple(grids)))
    total = np.sum(vals * sign_prod)
    return complex(total / (2.0 * np.longdouble(step)) ** nvars)


def derivative_engine(f, nvars: int, method: str = "ad", centers=None, **params):
    if method == "ad":
        return derivative_ad(f, nvars, centers=centers)
    if method == "cauchy":
        return derivative_cauchy(f, nvars, centers=centers, **params)
    if method == "fd":
        return derivative_fd(f, nvars, centers=centers, **params)
    raise ValueError(f"unknown differentiation method {method!r}")


# ---------------------------------------------------------------------------
# Expression-level wrappers
# ---------------------------------------------------------------------------


def _context_builder(expr, measurements, state_points, base_g, base_h):
    measurements = tuple(np.atleast_1d(np.asarray(y, dtype=float)) for y in measurements)
    state_points = tuple(state_points or ())
    m = len(measurements)

    def build(weights):
        deltas: dict = {}
        for k, (label, x) in enumerate(state_points):
            deltas.setdefault(label, []).append((np.atleast_1d(np.asarray(x, float)), weights[m + k]))
        return SecularContext(
            base_g=base_g,
            measurements=measurements,
            meas_weights=tuple(weights[:m]),
            state_deltas={k: tuple(v) for k, v in deltas.items()},
            base_h=dict(base_h or {}),
        )

    return build, m + len(state_points)


def mixed_derivative_ad(expr, measurements, state_points=(), base_g: float = 0.0, base_h=None):
    build, nvars = _context_builder(expr, measurements, state_points, base_g, base_h)
    return derivative_ad(lambda w: evaluate_secular(expr, build(w)), nvars)


def mixed_derivative_cauchy(
    expr,
    measurements,
    state_points=(),
    base_g: float = 0.0,
    base_h=None,
    radius: float = DEFAULT_RADIUS,
    nodes: int = DEFAULT_NODES,
):
    build, nvars = _context_builder(expr, measurements, state_points, base_g, base_h)
    return derivative_cauchy(lambda w: evaluate_secular(expr, build(w)), nvars, radius, nodes)


def mixed_derivative_fd(
    expr, measurements, state_points=(), base_g: float = 0.0, base_h=None, step: float = DEFAULT_STEP
):
    build, nvars = _context_builder(expr, measurements, state_points, base_g, base_h)
    return derivative_fd(lambda w: evaluate_secular(expr, build(w)), nvars, step)


def mixed_derivative(expr, measurements, state_points=(), method: str = "ad", base_g: float = 0.0, base_h=None, **params):
    if method == "ad":
        return mixed_derivative_ad(expr, measurements, state_points, base_g, base_h)
    if method == "cauchy":
        return mixed_derivative_cauchy(expr, measurements, state_points, base_g, base_h, **params)
    if method == "fd":
        return mixed_derivative_fd(expr, measurements, state_points, base_g, base_h, **params)
    raise ValueError(f"unknown differentiation method {method!r}")


# ---------------------------------------------------------------------------
# Posterior summary statistics
# ---------------------------------------------------------------------------


@dataclass
class PosteriorStats:
    """Summary statistics of a Bayes-posterior point process."""

    intensity: dict = field(default_factory=dict)  # (label, point-tuple) -> value
    cardinality: np.ndarray | None = None
    moments: dict = field(default_factory=dict)

    @property
    def mean_cardinality(self) -> float:
        if self.cardinality is None:
            raise ValueError("no cardinality distribution present")
        return float(np.arange(len(self.cardinality)) @ self.cardinality)


def _ratio(num, den):
    if abs(den) < DENOMINATOR_FLOOR:
        raise NumericalError("measurement set has vanishing probability under the model")
    return num / den


def posterior_intensity(expr, measurements, x, label, method: str = "ad", base_g: float = 0.0, **params):
    """Expected number of label-process points per unit volume at x, given the data."""
    den = mixed_derivative(expr, measurements, (), method, base_g, **params)
    num = mixed_derivative(expr, measurements, ((label, x),), method, base_g, **params)
    val = _ratio(num, den)
    return float(val.real)


def factorial_moment(expr, measurements, states, label, method: str = "ad", base_g: float = 0.0, **params):
    """k-th order factorial moment of the posterior at the given state points."""
    pts = tuple((label, x) for x in states)
    den = mixed_derivative(expr, measurements, (), method, base_g, **params)
    num = mixed_derivative(expr, measurements, pts, method, base_g, **params)
    return float(_ratio(num, den).real)


def posterior_cardinality(
    expr,
    measurements,
    labels=None,
    n_max: int = 64,
    method: str = "ad",
    base_g: float = 0.0,
    **params,
):
    """Posterior distribution of the number of targets, by circle inversion.

    Evaluates the posterior count PGF on a unit circle and extracts Taylor
    coefficients with the discrete inverse transform.
    """
    if labels is None:
        labels = sorted(target_labels(expr))
    nodes = 1
    while nodes < 2 * (n_max + 1) or nodes < 64:
        nodes *= 2
    den = mixed_derivative(expr, measurements, (), method, base_g, **params)
    if abs(den) < DENOMINATOR_FLOOR:
        raise NumericalError("measurement set has vanishing probability under the model")
    samples = np.empty(nodes, dtype=complex)
    for k in range(nodes):
        z = cmath.exp(2j * math.pi * k / nodes)
        num = mixed_derivative(expr, measurements, (), method, base_g, {lab: z for lab in labels}, **params)
        samples[k] = num / den
    coeffs = np.fft.fft(samples) / nodes  # fft kernel e^{-2pi i nk/N} inverts the circle samples
    p = coeffs[: n_max + 1].real
    if p.min() < -1e-9:
        raise NumericalError(f"cardinality extraction produced negative mass {p.min():.3e}")
    p = np.clip(p, 0.0, None)
    if abs(p.sum() - 1.0) > 1e-9:
        raise NumericalError(f"cardinality distribution sums to {p.sum()!r}")
    return p


# ---------------------------------------------------------------------------
# Branch marking (association events as derivative ratios)
# ---------------------------------------------------------------------------


def tagged_extraction(expr, measurements, tag_keys, base_g: float = 0.0, cumulative: bool = False):
    """Full-measurement-order derivative split by marked model branches.

    Each tag multiplies one model branch by a fresh dual variable.  With
    ``cumulative=False`` the tag seed is 0, so the coefficient of a tag
    subset S (times all measurement variables) is the exact derivative mass
    of hypotheses in which precisely the branches S fired; branches of the
    tagged atom not in S contribute nothing.  With ``cumulative=True`` the
    seed is 1 and a tag subset coefficient is the expected number of
    branch-firings (first-moment marking), which is what superposed
    intensity updates need.

    Returns (coeffs, denominator): ``coeffs`` maps frozensets of tag keys to
    complex masses; ``denominator`` is the unmarked full derivative.
    """
    measurements = tuple(np.atleast_1d(np.asarray(y, dtype=float)) for y in measurements)
    m = len(measurements)
    keys = list(tag_keys)
    nvars = m + len(keys)
    if nvars > MAX_VARIABLES:
        raise BudgetError(f"variable budget exceeded ({nvars} > {MAX_VARIABLES})")
    weights = [MultiDual.variable(i, nvars) for i in range(m)]
    seed = 1.0 if cumulative else 0.0
    tags = {key: MultiDual.variable(m + t, nvars, value=seed) for t, key in enumerate(keys)}
    ctx = SecularContext(
        base_g=base_g,
        measurements=measurements,
        meas_weights=tuple(weights),
        tags=tags,
    )
    out = evaluate_secular(expr, ctx)
    full = (1 << m) - 1
    coeffs: dict = {}
    for subset in range(1 << len(keys)):
        mask = full
        members = []
        for t in range(len(keys)):
            if subset >> t & 1:
                mask |= 1 << (m + t)
                members.append(keys[t])
        coeffs[frozenset(members)] = complex(out.coefficient(mask))
    if cumulative:
        den = coeffs[frozenset()]
    else:
        den = sum(coeffs.values())
    return coeffs, den


def branch_derivative(expr, measurements, tag_keys, base_g: float = 0.0, tag_center: float = 0.0, fixed_tags=None, method: str = "ad", **params):
    """Mixed derivative in all measurement weights plus the given tag variables.

    Tag variables are ordinary variables of the secular function, so any
    engine can differentiate them; ``tag_center`` 0 isolates a branch mass,
    1 yields the expected branch-firing count.  ``fixed_tags`` pins other
    branches to constants (e.g. 0 to suppress them).
    """
    measurements = tuple(np.atleast_1d(np.asarray(y, dtype=float)) for y in measurements)
    m = len(measurements)
    keys = list(tag_keys)
    nvars = m + len(keys)
    centers = [0.0] * m + [tag_center] * len(keys)

    def f(weights):
        tags = dict(fixed_tags or {})
        tags.update({key: weights[m + t] for t, key in enumerate(keys)})
        ctx = SecularContext(
            base_g=base_g,
            measurements=measurements,
            meas_weights=tuple(weights[:m]),
            tags=tags,
        )
        return evaluate_secular(expr, ctx)

    return derivative_engine(f, nvars, method=method, centers=centers, **params)


def association_weights(expr, measurements, label, extra_keys=(), base_g: float = 0.0, method: str = "ad", **params):
    """Posterior branch probabilities for one target's detection factor.

    Keys: (label, 'miss'), (label, 'assoc', i) for each measurement, plus
    any ``extra_keys`` such as (label, 'absent') for existence-wrapped
    targets.  The returned weights are normalized and sum to one.
    """
    m = len(measurements)
    keys = [(label, "miss")] + [(label, "assoc", i) for i in range(m)] + list(extra_keys)
    if method == "ad":
        coeffs, den = tagged_extraction(expr, measurements, keys, base_g=base_g, cumulative=False)
        if abs(den) < DENOMINATOR_FLOOR:
            raise NumericalError("measurement set has vanishing probability under the model")
        return {key: float((coeffs.get(frozenset({key}), 0.0) / den).real) for key in keys}
    nums = {
        key: branch_derivative(expr, measurements, [key], base_g=base_g, method=method, **params)
        for key in keys
    }
    total = sum(nums.values())
    if abs(total) < DENOMINATOR_FLOOR:
        raise NumericalError("measurement set has vanishing probability under the model")
    return {key: float((v / total).real) for key, v in nums.items()}


def marked_branch_masses(expr, measurements, label, base_g: float = 0.0, method: str = "ad", **params):
    """Expected branch-firing counts for a (possibly superposed) target label."""
    m = len(measurements)
    keys = [(label, "miss")] + [(label, "assoc", i) for i in range(m)]
    if method == "ad":
        coeffs, den = tagged_extraction(expr, measurements, keys, base_g=base_g, cumulative=True)
        if abs(den) < DENOMINATOR_FLOOR:
            raise NumericalError("measurement set has vanishing probability under the model")
        return {key: float((coeffs[frozenset({key})] / den).real) for key in keys}
    den = mixed_derivative(expr, measurements, (), method, base_g, **params)
    if abs(den) < DENOMINATOR_FLOOR:
        raise NumericalError("measurement set has vanishing probability under the model")
    out = {}
    for key in keys:
        num = branch_derivative(expr, measurements, [key], base_g=base_g, tag_center=1.0, method=method, **params)
        out[key] = float((num / den).real)
    return out


def subset_branch_weights(expr, measurements, label, base_g: float = 0.0, method: str = "ad", **params):
    """Posterior probability that the labeled atom consumed exactly each subset."""
    m = len(measurements)
    keys = [(label, "assoc", i) for i in range(m)]
    if method == "ad":
        coeffs, den = tagged_extraction(expr, measurements, keys, base_g=base_g, cumulative=False)
        if abs(den) < DENOMINATOR_FLOOR:
            raise NumericalError("measurement set has vanishing probability under the model")
        return {subset: float((v / den).real) for subset, v in coeffs.items()}
    nums = {}
    for bits in range(1 << m):
        subset = frozenset(keys[i] for i in range(m) if bits >> i & 1)
        fixed = {k: 0.0 for k in keys if k not in subset}
        nums[subset] = branch_derivative(
            expr, measurements, sorted(subset, key=keys.index), base_g=base_g,
            fixed_tags=fixed, method=method, **params
        )
    total = sum(nums.values())
    if abs(total) < DENOMINATOR_FLOOR:
        raise NumericalError("measurement set has vanishing probability under the model")
    return {subset: float((v / total).real) for subset, v in nums.items()}


def joint_branch_weights(expr, measurements, key_pairs, base_g: float = 0.0, method: str = "ad", **params):
    """Normalized masses of exclusive two-tag branches (unresolved-pair closing)."""
    if method == "ad":
        keys = sorted({k for pair in key_pairs for k in pair})
        coeffs, den = tagged_extraction(expr, measurements, keys, base_g=base_g, cumulative=False)
        if abs(den) < DENOMINATOR_FLOOR:
            raise NumericalError("measurement set has vanishing probability under the model")
        return {pair: float((coeffs.get(frozenset(pair), 0.0) / den).real) for pair in key_pairs}
    nums = {
        pair: branch_derivative(expr, measurements, list(pair), base_g=base_g, method=method, **params)
        for pair in key_pairs
    }
    total = sum(nums.values())
    if abs(total) < DENOMINATOR_FLOOR:
        raise NumericalError("measurement set has vanishing probability under the model")
    return {pair: float((v / total).real) for pair, v in nums.items()}
