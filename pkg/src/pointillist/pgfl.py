"""Joint target-measurement process expressions and their weighted-delta evaluation.

An expression tree composes atoms (one per target-measurement factor, plus
clutter) with combinators (product, existence wrapping, count-PGF wrapping,
superposition, marginalization).  Substituting weighted point masses for the
test functions turns the functional into an ordinary function of the weights;
``evaluate_secular`` computes that function in closed form, generically over
the weight kind (complex, numpy array, or dual number), so one evaluator
serves exact differentiation, contour quadrature and finite differences.

Under the linear-Gaussian, constant-detection restriction every inner
integral reduces to Gaussian-form algebra; that restriction is the price of
exactness and is deliberate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .clutter import ClusterClutter, PoissonClutter, clutter_secular_eval
from .detection import (
    DetectionModel,
    ExtendedTargetPgf,
    PoissonMeasPgf,
    ResolutionModel,
    resolution_function,
)
from .gaussmath import (
    CanonicalForm,
    GaussianDensity,
    GaussianMixture,
    Gate,
    MeasurementModel,
    as_mixture,
    density_form,
    gate_probability,
    gaussian_eval,
    kernel_form,
    likelihood_form,
    predicted_measurement,
)
from .scalars import sexp

__all__ = [
    "SecularContext",
    "BmdAtom",
    "BmeAtom",
    "PoissonMeasAtom",
    "DataAtom",
    "GenPhdAtom",
    "ResolutionAtom",
    "ClutterAtom",
    "Product",
    "ExistenceWrap",
    "PoissonWrap",
    "ClusterWrap",
    "Marginalize",
    "ProductFormFamily",
    "evaluate_secular",
    "target_labels",
    "compose_product",
    "wrap_existence",
    "superpose",
    "marginalize",
    "FilterSpec",
    "build_filter",
    "FILTER_KINDS",
]

_GH_NODES = {1: 48, 2: 24, 3: 12}


# ---------------------------------------------------------------------------
# Evaluation context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SecularContext:
    """Weighted-delta substitution under which an expression becomes a number.

    ``base_g`` is the constant part of the measurement test function (0 or 1).
    ``measurements``/``meas_weights`` attach a weight to each measurement
    point.  ``state_deltas`` maps a target label to (point, weight) pairs;
    ``base_h`` overrides the constant part of a label's test function
    (default 1; set to z to generate count distributions).  ``tags`` multiply
    individual model branches and are used to mark association events.
    """

    base_g: float = 1.0
    measurements: tuple = ()
    meas_weights: tuple = ()
    state_deltas: dict = field(default_factory=dict)
    base_h: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.measurements) != len(self.meas_weights):
            raise ValueError("each measurement point needs exactly one weight")

    def base_h_for(self, label):
        return self.base_h.get(label, 1.0)

    def deltas_for(self, label):
        return self.state_deltas.get(label, ())

    def tag(self, key):
        return self.tags.get(key)


def ones_context() -> SecularContext:
    return SecularContext(base_g=1.0)


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BmdAtom:
    """Single target with at-most-one measurement, optional ellipsoidal gate."""

    label: str
    prior: object  # GaussianDensity or GaussianMixture
    det: DetectionModel
    mm: MeasurementModel
    gate: Gate | None = None


@dataclass(frozen=True)
class DataAtom:
    """Measurement-induced candidate target; same algebra as BmdAtom."""

    label: str
    prior: object
    det: DetectionModel
    mm: MeasurementModel
    gate: Gate | None = None


@dataclass(frozen=True)
class BmeAtom:
    """Extended target emitting a bounded random number of measurements."""

    label: str
    prior: object
    ext: ExtendedTargetPgf
    mm: MeasurementModel


@dataclass(frozen=True)
class PoissonMeasAtom:
    """Target emitting a Poisson-distributed number of measurements."""

    label: str
    prior: object
    pm: PoissonMeasPgf
    mm: MeasurementModel


@dataclass(frozen=True)
class GenPhdAtom:
    """Target with an arbitrary symmetric multi-measurement likelihood family."""

    label: str
    prior: object
    family: object  # see ProductFormFamily for the required surface


@dataclass(frozen=True)
class ResolutionAtom:
    """Two targets whose returns can merge when poorly resolved by the sensor."""

    label1: str
    label2: str
    prior1: GaussianDensity
    prior2: GaussianDensity
    rm: ResolutionModel
    mm: MeasurementModel


@dataclass(frozen=True)
class ClutterAtom:
    """Clutter process, optionally restricted to a validation region.

    ``gate_mass`` is the spatial-density mass of the region; the effective
    mean count is scaled by it and measurement points are assumed to be
    pre-filtered to the region.
    """

    model: object
    gate_mass: float | None = None


@dataclass(frozen=True)
class Product:
    children: tuple


@dataclass(frozen=True)
class ExistenceWrap:
    """1 - chi + chi * child: the wrapped target exists with probability chi."""

    chi: float
    child: object
    tag_label: str | None = None


@dataclass(frozen=True)
class PoissonWrap:
    """Poisson number of i.i.d. copies of the child process."""

    nbar: float
    child: object


@dataclass(frozen=True)
class ClusterWrap:
    """Arbitrary finite count distribution over i.i.d. copies of the child."""

    card_pgf: tuple
    child: object


@dataclass(frozen=True)
class Marginalize:
    """Bind the listed target labels to the constant test function one."""

    labels: frozenset
    child: object


# ---------------------------------------------------------------------------
# Structure helpers
# ---------------------------------------------------------------------------


def target_labels(expr) -> frozenset:
    if isinstance(expr, (BmdAtom, DataAtom, BmeAtom, PoissonMeasAtom, GenPhdAtom)):
        return frozenset({expr.label})
    if isinstance(expr, ResolutionAtom):
        return frozenset({expr.label1, expr.label2})
    if isinstance(expr, ClutterAtom):
        return frozenset()
    if isinstance(expr, Product):
        out = frozenset()
        for c in expr.children:
            out |= target_labels(c)
        return out
    if isinstance(expr, (ExistenceWrap, PoissonWrap, ClusterWrap)):
        return target_labels(expr.child)
    if isinstance(expr, Marginalize):
        return target_labels(expr.child) - expr.labels
    raise TypeError(f"unknown expression node {type(expr)!r}")


def relabel(expr, mapping: dict):
    """Rewrite target labels throughout the tree."""
    if isinstance(expr, (BmdAtom, DataAtom, BmeAtom, PoissonMeasAtom, GenPhdAtom)):
        return replace(expr, label=mapping.get(expr.label, expr.label))
    if isinstance(expr, ResolutionAtom):
        return replace(
            expr,
            label1=mapping.get(expr.label1, expr.label1),
            label2=mapping.get(expr.label2, expr.label2),
        )
    if isinstance(expr, ClutterAtom):
        return expr
    if isinstance(expr, Product):
        return Product(tuple(relabel(c, mapping) for c in expr.children))
    if isinstance(expr, ExistenceWrap):
        return replace(
            expr,
            child=relabel(expr.child, mapping),
            tag_label=mapping.get(expr.tag_label, expr.tag_label),
        )
    if isinstance(expr, (PoissonWrap, ClusterWrap)):
        return replace(expr, child=relabel(expr.child, mapping))
    if isinstance(expr, Marginalize):
        return Marginalize(
            frozenset(mapping.get(l, l) for l in expr.labels), relabel(expr.child, mapping)
        )
    raise TypeError(f"unknown expression node {type(expr)!r}")


def _state_dims(expr, out: dict):
    if isinstance(expr, (BmdAtom, DataAtom, BmeAtom, PoissonMeasAtom, GenPhdAtom)):
        out.setdefault(expr.label, set()).add(as_mixture(expr.prior).dim)
    elif isinstance(expr, ResolutionAtom):
        out.setdefault(expr.label1, set()).add(expr.prior1.dim)
        out.setdefault(expr.label2, set()).add(expr.prior2.dim)
    elif isinstance(expr, Product):
        for c in expr.children:
            _state_dims(c, out)
    elif isinstance(expr, (ExistenceWrap, PoissonWrap, ClusterWrap, Marginalize)):
        _state_dims(expr.child, out)


def superpose(expr, labels, shared: str):
    """Merge the listed target labels onto one shared label (the diagonal)."""
    labels = set(labels)
    dims: dict = {}
    _state_dims(expr, dims)
    merged = set()
    for lab in labels:
        merged |= dims.get(lab, set())
    if len(merged) > 1:
        raise ValueError("superposed targets must share one state dimension")
    return relabel(expr, {lab: shared for lab in labels})


def marginalize(expr, labels):
    """Remove the listed processes by binding their test functions to one."""
    labels = frozenset(labels)
    return Marginalize(labels, expr)


def compose_product(children):
    """Joint expression of mutually independent processes."""
    children = tuple(children)
    if len(children) == 1:
        return children[0]
    seen: set = set()
    for c in children:
        labs = target_labels(c)
        if labs & seen:
            raise ValueError(f"duplicate target labels across product factors: {labs & seen}")
        seen |= labs
    return Product(children)


def _check_normalized(child, what: str):
    val = evaluate_secular(child, ones_context())
    if abs(val - 1.0) > 1e-9:
        raise ValueError(f"{what} requires a normalized child, got value-at-ones {val!r}")


def wrap_existence(chi: float, child, tag_label: str | None = None) -> ExistenceWrap:
    if not 0.0 <= chi <= 1.0:
        raise ValueError("existence probability out of range")
    _check_normalized(child, "existence wrap")
    if tag_label is None:
        labs = sorted(target_labels(child))
        tag_label = labs[0] if labs else None
    return ExistenceWrap(chi, child, tag_label)


def wrap_poisson(nbar: float, child) -> PoissonWrap:
    if nbar < 0.0:
        raise ValueError("expected target count must be non-negative")
    _check_normalized(child, "count wrap")
    return PoissonWrap(nbar, child)


def wrap_cluster(card_pgf, child) -> ClusterWrap:
    p = tuple(float(v) for v in card_pgf)
    if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
        raise ValueError("count distribution must be a probability vector")
    _check_normalized(child, "count wrap")
    return ClusterWrap(p, child)


# ---------------------------------------------------------------------------
# Atom evaluation
# ---------------------------------------------------------------------------


def _mixture_pm(prior: GaussianMixture, mm: MeasurementModel):
    return [predicted_measurement(c, mm) for c in prior.components]


def _phat(prior: GaussianMixture, pms, y) -> float:
    return float(sum(w * gaussian_eval(pm, y) for w, pm in zip(prior.weights, pms)))


def _likelihood(mm: MeasurementModel, x, y) -> float:
    return gaussian_eval(GaussianDensity(mm.H @ np.asarray(x, dtype=float), mm.R), y)


def _tagged(ctx, key, term):
    t = ctx.tag(key)
    return term if t is None else t * term


def _bmd_value(label, prior, det, mm, gate, ctx):
    prior = as_mixture(prior)
    if gate is not None and len(prior.components) > 1:
        raise ValueError("gating is only supported for single-Gaussian priors")
    pms = _mixture_pm(prior, mm)
    p_eff = gate_probability(gate) if gate is not None else 1.0
    pd = det.pd
    miss = 1.0 - pd * p_eff

    gated = [
        i
        for i, y in enumerate(ctx.measurements)
        if gate is None or gate.contains(y)
    ]

    def inner(base_term, lik):
        # base_term: closed-form integral of the detection factor against the
        # prior (or its pointwise value at a state delta).
        val = _tagged(ctx, (label, "miss"), miss * base_term)
        val = val + pd * p_eff * ctx.base_g * base_term
        for i in gated:
            term = ctx.meas_weights[i] * (pd * lik(i))
            val = val + _tagged(ctx, (label, "assoc", i), term)
        return val

    base = inner(1.0, lambda i: _phat(prior, pms, ctx.measurements[i]))
    value = ctx.base_h_for(label) * base
    for x, beta in ctx.deltas_for(label):
        point_val = inner(1.0, lambda i: _likelihood(mm, x, ctx.measurements[i]))
        value = value + beta * (prior.pdf(x) * point_val)
    return value


def _joint_marginal(prior: GaussianMixture, mm: MeasurementModel, points) -> float:
    """Closed-form integral of prior(x) * prod_i N(points_i; H x, R) dx."""
    total = 0.0
    for w, comp in zip(prior.weights, prior.components):
        form = density_form(comp)
        for y in points:
            form = form * likelihood_form(mm.H, mm.R, y)
        total += w * form.integral()
    return total


def _bme_value(atom: BmeAtom, ctx):
    prior = as_mixture(atom.prior)
    ext = atom.ext
    a, b = 1.0 - ext.pd, ext.pd
    m = len(ctx.measurements)
    idx = list(range(m))
    marg_cache: dict = {}

    def marginal_for(counts):
        key = tuple(counts)
        if key not in marg_cache:
            pts = []
            for i, k in enumerate(counts):
                pts.extend([ctx.measurements[i]] * k)
            marg_cache[key] = _joint_marginal(prior, atom.mm, pts)
        return marg_cache[key]

    def weight_monomial(counts):
        out = 1.0
        for i, k in enumerate(counts):
            if k:
                w = _tagged(ctx, (atom.label, "assoc", i), ctx.meas_weights[i])
                for _ in range(k):
                    out = out * w
        return out

    # Integrated detection factor: a + b * sum_m d_m * integral of z(x)^m.
    base = _tagged(ctx, (atom.label, "miss"), a)
    for count, dm in enumerate(ext.dm, start=1):
        if dm == 0.0:
            continue
        for k0 in range(count + 1):
            if ctx.base_g == 0.0 and k0 > 0:
                continue
            rest = count - k0
            for counts in _compositions(rest, m):
                coef = math.factorial(count) / (
                    math.factorial(k0) * math.prod(math.factorial(c) for c in counts)
                )
                term = weight_monomial(counts) * (b * dm * coef * marginal_for(counts))
                base = base + term
    value = ctx.base_h_for(atom.label) * base

    for x, beta in ctx.deltas_for(atom.label):
        z = ctx.base_g
        for i in idx:
            w = _tagged(ctx, (atom.label, "assoc", i), ctx.meas_weights[i])
            z = z + w * _likelihood(atom.mm, x, ctx.measurements[i])
        acc = 0.0
        for dm in reversed(ext.dm):
            acc = (acc + dm) * z
        value = value + beta * (prior.pdf(x) * (a + b * acc))
    return value


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _gh_nodes(dim: int):
    n = _GH_NODES.get(dim)
    if n is None:
        raise ValueError("Poisson-count atoms support measurement dimension <= 3")
    x, w = np.polynomial.hermite.hermgauss(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1) * math.sqrt(2.0)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        wts = wts * g.ravel()
    wts = wts / math.pi ** (dim / 2.0)
    return pts, wts


def _poisson_meas_value(atom: PoissonMeasAtom, ctx):
    prior = as_mixture(atom.prior)
    lam = atom.pm.rate
    mm = atom.mm
    m = len(ctx.measurements)

    def detection_factor(lik_vals):
        z = ctx.base_g
        for i in range(m):
            w = _tagged(ctx, (atom.label, "assoc", i), ctx.meas_weights[i])
            z = z + w * lik_vals[i]
        return sexp((z - 1.0) * lam)

    if m == 0:
        base = 1.0 if ctx.base_g == 1.0 else math.exp(-lam * (1.0 - ctx.base_g))
    else:
        # The state integral has no closed form; reduce it exactly to
        # measurement space (the likelihoods depend on x only through H x)
        # and apply Gauss-Hermite quadrature there.  The same approximation
        # is used for every weight kind, so cross-method comparisons are
        # unaffected by it.
        pts, wts = _gh_nodes(mm.meas_dim)
        base = 0.0
        for wc, comp in zip(prior.weights, prior.components):
            mean = mm.H @ comp.mean
            cov = mm.H @ comp.cov @ mm.H.T
            vals, vecs = np.linalg.eigh(cov)
            root = vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0)))
            nodes = mean + pts @ root.T
            for q in range(nodes.shape[0]):
                lik = [gaussian_eval(GaussianDensity(nodes[q], mm.R), y) for y in ctx.measurements]
                base = base + (wc * wts[q]) * detection_factor(lik)

    value = ctx.base_h_for(atom.label) * base
    for x, beta in ctx.deltas_for(atom.label):
        lik = [_likelihood(mm, x, y) for y in ctx.measurements]
        value = value + beta * (prior.pdf(x) * detection_factor(lik))
    return value


class ProductFormFamily:
    """Symmetric multi-measurement likelihood built from a count PGF and one
    common conditional likelihood; the default generalized-target family.
    """

    def __init__(self, ext: ExtendedTargetPgf, mm: MeasurementModel):
        self.ext = ext
        self.mm = mm

    @property
    def max_count(self) -> int:
        return len(self.ext.dm)

    def count_mass(self, n: int) -> float:
        # (1/n!) integral of the n-point joint density: the count probability.
        if n == 0:
            return 1.0 - self.ext.pd
        if n > self.max_count:
            return 0.0
        return self.ext.pd * self.ext.dm[n - 1]

    def missed_at(self, x) -> float:
        return self.count_mass(0)

    def tuple_density(self, x, points) -> float:
        n = len(points)
        val = math.factorial(n) * self.count_mass(n)
        for y in points:
            val *= _likelihood(self.mm, x, y)
        return val

    def tuple_marginal(self, prior: GaussianMixture, points) -> float:
        n = len(points)
        return math.factorial(n) * self.count_mass(n) * _joint_marginal(prior, self.mm, points)


def _genphd_value(atom: GenPhdAtom, ctx):
    prior = as_mixture(atom.prior)
    fam = atom.family
    m = len(ctx.measurements)
    if ctx.base_g == 1.0:
        if m > 0 and any(not _is_zero(w) for w in ctx.meas_weights):
            raise NotImplementedError(
                "generalized atoms support weighted deltas only at measurement base 0"
            )
        base = 1.0
    else:
        base = fam.count_mass(0)
        for n in range(1, fam.max_count + 1):
            inv = 1.0 / math.factorial(n)
            for tup in itertools.product(range(m), repeat=n):
                w = inv
                for i in tup:
                    w = w * _tagged(ctx, (atom.label, "assoc", i), ctx.meas_weights[i])
                pts = [ctx.measurements[i] for i in tup]
                base = base + w * fam.tuple_marginal(prior, pts)
    value = ctx.base_h_for(atom.label) * base
    for x, beta in ctx.deltas_for(atom.label):
        acc = fam.missed_at(x) if ctx.base_g == 0.0 else 1.0
        if ctx.base_g == 0.0:
            for n in range(1, fam.max_count + 1):
                inv = 1.0 / math.factorial(n)
                for tup in itertools.product(range(m), repeat=n):
                    w = inv
                    for i in tup:
                        w = w * _tagged(ctx, (atom.label, "assoc", i), ctx.meas_weights[i])
                    pts = [ctx.measurements[i] for i in tup]
                    acc = acc + w * fam.tuple_density(x, pts)
        value = value + beta * (prior.pdf(x) * acc)
    return value


def _is_zero(w) -> bool:
    try:
        return w == 0
    except Exception:
        return False


# -- resolution atom ---------------------------------------------------------


def _resolution_value(atom: ResolutionAtom, ctx):
    rm, mm = atom.rm, atom.mm
    d1, d2 = atom.prior1.dim, atom.prior2.dim
    a1, b1 = 1.0 - rm.pd1, rm.pd1
    a2, b2 = 1.0 - rm.pd2, rm.pd2
    m = len(ctx.measurements)
    idx1, idx2 = np.arange(d1), np.arange(d1, d1 + d2)

    def lift(mat, side):
        out = np.zeros((mat.shape[0], d1 + d2))
        if side == 1:
            out[:, :d1] = mat
        else:
            out[:, d1:] = mat
        return out

    joint_prior = _lift_form(density_form(atom.prior1), idx1, d1 + d2) * _lift_form(
        density_form(atom.prior2), idx2, d1 + d2
    )
    res_kernel = kernel_form(np.hstack([rm.h1, -rm.h2]), rm.sigma)
    B = np.hstack([rm.h1 * 0.5, rm.h2 * 0.5])  # merged return about the average image
    H1j, H2j = lift(mm.H, 1), lift(mm.H, 2)

    pm1 = predicted_measurement(atom.prior1, mm)
    pm2 = predicted_measurement(atom.prior2, mm)
    phat1 = [gaussian_eval(pm1, y) for y in ctx.measurements]
    phat2 = [gaussian_eval(pm2, y) for y in ctx.measurements]

    fbar = (joint_prior * res_kernel).integral()
    fm = [(joint_prior * res_kernel * likelihood_form(B, mm.R, y)).integral() for y in ctx.measurements]
    f1 = [(joint_prior * res_kernel * likelihood_form(H1j, mm.R, y)).integral() for y in ctx.measurements]
    f2 = [(joint_prior * res_kernel * likelihood_form(H2j, mm.R, y)).integral() for y in ctx.measurements]
    g12 = [
        [
            (
                joint_prior
                * res_kernel
                * likelihood_form(H1j, mm.R, yi)
                * likelihood_form(H2j, mm.R, yj)
            ).integral()
            for yj in ctx.measurements
        ]
        for yi in ctx.measurements
    ]

    def w1(i):
        return _tagged(ctx, (atom.label1, "assoc", i), ctx.meas_weights[i])

    def w2(i):
        return _tagged(ctx, (atom.label2, "assoc", i), ctx.meas_weights[i])

    def wboth(i):
        # One merged return consumes a single measurement but fires the
        # association branch of both targets.
        term = _tagged(ctx, (atom.label1, "assoc", i), ctx.meas_weights[i])
        return _tagged(ctx, (atom.label2, "assoc", i), term)

    def tm1(term):
        return _tagged(ctx, (atom.label1, "miss"), term)

    def tm2(term):
        return _tagged(ctx, (atom.label2, "miss"), term)

    def bracket(quants):
        """Assemble the detection bracket from precomputed integrals.

        ``quants`` provides: one, fbar, phat1[i], phat2[i], fm[i], f1[i],
        f2[i], g12[i][j] for the current conditioning of the state blocks.
        """
        g = ctx.base_g
        val = tm1(tm2(a1 * a2 * quants["one"]))
        s1 = g * quants["one"]
        for i in range(m):
            s1 = s1 + w1(i) * quants["p1"][i]
        val = val + tm2(b1 * a2) * s1
        s2 = g * quants["one"]
        for i in range(m):
            s2 = s2 + w2(i) * quants["p2"][i]
        val = val + tm1(a1 * b2) * s2
        # merged branch: both targets share one return
        merged = g * quants["fbar"]
        for i in range(m):
            merged = merged + wboth(i) * quants["fm"][i]
        val = val + b1 * b2 * merged
        # resolved branch: independent returns, with the unresolved part removed
        pair = g * g * (quants["one"] - quants["fbar"])
        for i in range(m):
            pair = pair + g * (w1(i) * (quants["p1"][i] - quants["f1"][i]))
            pair = pair + g * (w2(i) * (quants["p2"][i] - quants["f2"][i]))
        for i in range(m):
            for j in range(m):
                pair = pair + (w1(i) * w2(j)) * (
                    quants["p1"][i] * quants["p2"][j] - quants["g12"][i][j]
                )
        val = val + b1 * b2 * pair
        return val

    base_quants = {
        "one": 1.0,
        "fbar": fbar,
        "p1": phat1,
        "p2": phat2,
        "fm": fm,
        "f1": f1,
        "f2": f2,
        "g12": g12,
    }
    value = ctx.base_h_for(atom.label1) * ctx.base_h_for(atom.label2) * bracket(base_quants)

    def conditioned_quants(fix_first: bool, x):
        # Pin one state block and integrate the other; every bracket
        # ingredient reduces to a canonical-form integral over the free block.
        x = np.asarray(x, dtype=float)
        if fix_first:
            other_prior = density_form(atom.prior2)
            cond = lambda form: form.condition(idx1, x)
            other_H = H2j
            phat_other = phat2
        else:
            other_prior = density_form(atom.prior1)
            cond = lambda form: form.condition(idx2, x)
            other_H = H1j
            phat_other = phat1
        lik_self = [_likelihood(mm, x, y) for y in ctx.measurements]
        kern = cond(res_kernel)
        fbar_c = (other_prior * kern).integral()
        fm_c = [
            (other_prior * kern * cond(likelihood_form(B, mm.R, y))).integral()
            for y in ctx.measurements
        ]
        f_self_c = [lik_self[i] * fbar_c for i in range(m)]
        f_other_c = [
            (other_prior * kern * cond(likelihood_form(other_H, mm.R, y))).integral()
            for y in ctx.measurements
        ]
        if fix_first:
            return {
                "one": 1.0,
                "fbar": fbar_c,
                "p1": lik_self,
                "p2": phat_other,
                "fm": fm_c,
                "f1": f_self_c,
                "f2": f_other_c,
                "g12": [[lik_self[i] * f_other_c[j] for j in range(m)] for i in range(m)],
            }
        return {
            "one": 1.0,
            "fbar": fbar_c,
            "p1": phat_other,
            "p2": lik_self,
            "fm": fm_c,
            "f1": f_other_c,
            "f2": f_self_c,
            "g12": [[f_other_c[i] * lik_self[j] for j in range(m)] for i in range(m)],
        }

    for x1, beta1 in ctx.deltas_for(atom.label1):
        q = conditioned_quants(True, x1)
        value = value + beta1 * (
            gaussian_eval(atom.prior1, x1) * ctx.base_h_for(atom.label2) * bracket(q)
        )
    for x2, beta2 in ctx.deltas_for(atom.label2):
        q = conditioned_quants(False, x2)
        value = value + beta2 * (
            gaussian_eval(atom.prior2, x2) * ctx.base_h_for(atom.label1) * bracket(q)
        )
    # Both states pinned: everything is a pointwise product.
    for x1, beta1 in ctx.deltas_for(atom.label1):
        for x2, beta2 in ctx.deltas_for(atom.label2):
            f = resolution_function(rm, x1, x2)
            lik1 = [_likelihood(mm, x1, y) for y in ctx.measurements]
            lik2 = [_likelihood(mm, x2, y) for y in ctx.measurements]
            merged_center = 0.5 * (rm.h1 @ np.asarray(x1, float) + rm.h2 @ np.asarray(x2, float))
            likm = [gaussian_eval(GaussianDensity(merged_center, mm.R), y) for y in ctx.measurements]
            q = {
                "one": 1.0,
                "fbar": f,
                "p1": lik1,
                "p2": lik2,
                "fm": [f * v for v in likm],
                "f1": [f * v for v in lik1],
                "f2": [f * v for v in lik2],
                "g12": [[f * lik1[i] * lik2[j] for j in range(m)] for i in range(m)],
            }
            value = value + (beta1 * beta2) * (
                gaussian_eval(atom.prior1, x1) * gaussian_eval(atom.prior2, x2) * bracket(q)
            )
    return value


def _lift_form(form: CanonicalForm, idx, total: int) -> CanonicalForm:
    eta = np.zeros(total)
    eta[idx] = form.eta
    J = np.zeros((total, total))
    J[np.ix_(idx, idx)] = form.J
    return CanonicalForm(form.log_scale, eta, J)


def _clutter_value(atom: ClutterAtom, ctx):
    model = atom.model
    for y in ctx.measurements:
        if model.spatial.pdf(y) == 0.0:
            raise ValueError("measurement point outside the clutter support")
    if isinstance(model, PoissonClutter):
        lam_eff = model.lambda_total * (atom.gate_mass if atom.gate_mass is not None else 1.0)
        acc = -lam_eff + lam_eff * ctx.base_g
        for y, w in zip(ctx.measurements, ctx.meas_weights):
            acc = acc + w * model.intensity(y)
        return sexp(acc)
    if isinstance(model, ClusterClutter):
        if atom.gate_mass is not None:
            raise ValueError("gating is only supported for Poisson clutter")
        arg = ctx.base_g
        for y, w in zip(ctx.measurements, ctx.meas_weights):
            arg = arg + w * model.spatial.pdf(y)
        acc = 0.0
        for c in reversed(model.card_pgf):
            acc = acc * arg + c
        return acc
    raise TypeError(f"unsupported clutter model {type(model)!r}")


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------


def evaluate_secular(expr, ctx: SecularContext):
    """Evaluate the expression under the weighted-delta substitution."""
    if isinstance(expr, (BmdAtom, DataAtom)):
        return _bmd_value(expr.label, expr.prior, expr.det, expr.mm, expr.gate, ctx)
    if isinstance(expr, BmeAtom):
        return _bme_value(expr, ctx)
    if isinstance(expr, PoissonMeasAtom):
        return _poisson_meas_value(expr, ctx)
    if isinstance(expr, GenPhdAtom):
        return _genphd_value(expr, ctx)
    if isinstance(expr, ResolutionAtom):
        return _resolution_value(expr, ctx)
    if isinstance(expr, ClutterAtom):
        return _clutter_value(expr, ctx)
    if isinstance(expr, Product):
        out = 1.0
        for c in expr.children:
            out = out * evaluate_secular(c, ctx)
        return out
    if isinstance(expr, ExistenceWrap):
        absent = _tagged(ctx, (expr.tag_label, "absent"), 1.0 - expr.chi)
        return absent + expr.chi * evaluate_secular(expr.child, ctx)
    if isinstance(expr, PoissonWrap):
        return sexp((evaluate_secular(expr.child, ctx) - 1.0) * expr.nbar)
    if isinstance(expr, ClusterWrap):
        z = evaluate_secular(expr.child, ctx)
        acc = 0.0
        for c in reversed(expr.card_pgf):
            acc = acc * z + c
        return acc
    if isinstance(expr, Marginalize):
        inner = SecularContext(
            base_g=ctx.base_g,
            measurements=ctx.measurements,
            meas_weights=ctx.meas_weights,
            state_deltas={k: v for k, v in ctx.state_deltas.items() if k not in expr.labels},
            base_h={k: v for k, v in ctx.base_h.items() if k not in expr.labels},
            tags=ctx.tags,
        )
        return evaluate_secular(expr.child, inner)
    raise TypeError(f"unknown expression node {type(expr)!r}")


# ---------------------------------------------------------------------------
# Filter construction
# ---------------------------------------------------------------------------

FILTER_KINDS = (
    "bayes_markov",
    "bmd",
    "bme",
    "pda",
    "pda_extended",
    "jpda",
    "jpdas",
    "pmht",
    "pmhts",
    "ipda",
    "jipda",
    "jipdas",
    "mht",
    "mb",
    "phd",
    "cphd",
    "genphd",
    "joint_phd",
    "joint_genphd",
    "respair",
)

SHARED_LABEL = "target"


@dataclass
class FilterSpec:
    """Parameter bundle for ``build_filter``; fields are kind-dependent."""

    kind: str
    mm: MeasurementModel = None
    targets: list = None  # predicted per-target GaussianDensity
    det: DetectionModel = None
    clutter: object = None
    gate_threshold: float = None
    exist_probs: list = None  # chi_i for IPDA/JIPDA/MHT/MB
    ext: ExtendedTargetPgf = None
    rates: list = None  # per-target Poisson measurement rates
    intensity: GaussianMixture = None  # PHD/CPHD: mass = expected count
    card_pgf: tuple = None  # CPHD target-count distribution
    family: object = None  # generalized measurement family
    groups: list = None  # joint kinds: list of GaussianMixture intensities
    measurements: list = None  # MHT/MB data-induced candidates
    birth_priors: list = None  # explicit data-atom priors (else derived)
    birth_cov: np.ndarray = None
    gamma: object = None  # scalar, list, or None (intensity-ratio default)
    birth_intensity: float = 1e-4
    resolution: ResolutionModel = None
    pair_priors: tuple = None  # (prior1, prior2) for the unresolved pair


def _target_gate(spec: FilterSpec, density: GaussianDensity) -> Gate | None:
    if spec.gate_threshold is None:
        return None
    return Gate(spec.gate_threshold, predicted_measurement(density, spec.mm))


def _gated_clutter(spec: FilterSpec, gates: list) -> ClutterAtom:
    if spec.clutter is None:
        raise ValueError("filter kind requires a clutter model")
    if not gates or all(g is None for g in gates):
        return ClutterAtom(spec.clutter)
    if not isinstance(spec.clutter, PoissonClutter):
        raise ValueError("gating is only supported for Poisson clutter")

    live = [g for g in gates if g is not None]

    def in_union(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        hit = np.zeros(pts.shape[0], dtype=bool)
        for g in live:
            hit |= g.contains_many(pts)
        return hit if hit.shape[0] > 1 else bool(hit[0])

    mass = spec.clutter.spatial.mass_on(in_union)
    return ClutterAtom(spec.clutter, gate_mass=mass)


def _data_priors(spec: FilterSpec) -> list:
    if spec.birth_priors is not None:
        return list(spec.birth_priors)
    if spec.measurements is None:
        raise ValueError("data-induced kinds need the scan's measurements")
    H = spec.mm.H
    pinv = np.linalg.pinv(H)
    if spec.birth_cov is not None:
        cov = np.asarray(spec.birth_cov, dtype=float)
    else:
        proj = np.eye(H.shape[1]) - pinv @ H
        cov = pinv @ spec.mm.R @ pinv.T + 25.0 * (proj @ proj.T) + 1e-9 * np.eye(H.shape[1])
    return [GaussianDensity(pinv @ np.asarray(y, float), cov) for y in spec.measurements]


def _gammas(spec: FilterSpec) -> list:
    m = len(spec.measurements or ())
    if spec.gamma is not None:
        if np.isscalar(spec.gamma):
            return [float(spec.gamma)] * m
        return [float(g) for g in spec.gamma]
    out = []
    for y in spec.measurements:
        lam = spec.clutter.intensity(y) if spec.clutter is not None else 0.0
        out.append(spec.birth_intensity / (spec.birth_intensity + lam))
    return out


def build_filter(spec: FilterSpec):
    """Assemble the joint expression for one of the supported filter kinds."""
    kind = spec.kind
    if kind not in FILTER_KINDS:
        raise ValueError(f"unsupported filter kind {kind!r}")

    def per_target_atoms(dets=None, gated=True):
        atoms = []
        gates = []
        for i, tgt in enumerate(spec.targets):
            det = dets[i] if dets is not None else spec.det
            gate = _target_gate(spec, tgt) if gated else None
            gates.append(gate)
            atoms.append(BmdAtom(f"t{i}", tgt, det, spec.mm, gate))
        return atoms, gates

    if kind == "bayes_markov":
        (atom,), _ = per_target_atoms(dets=[DetectionModel(1.0)], gated=False)
        return atom
    if kind == "bmd":
        if spec.gate_threshold is not None:
            (atom,), _ = per_target_atoms()
        else:
            (atom,), _ = per_target_atoms(gated=False)
        return atom
    if kind == "bme":
        if spec.gate_threshold is not None:
            raise ValueError("gating is not supported with extended targets")
        return BmeAtom("t0", spec.targets[0], spec.ext, spec.mm)
    if kind in ("pda", "jpda", "jpdas"):
        atoms, gates = per_target_atoms()
        expr = compose_product([_gated_clutter(spec, gates)] + atoms)
        if kind == "jpdas":
            expr = superpose(expr, [a.label for a in atoms], SHARED_LABEL)
        return expr
    if kind == "pda_extended":
        if spec.gate_threshold is not None:
            raise ValueError("gating is not supported with extended targets")
        atom = BmeAtom("t0", spec.targets[0], spec.ext, spec.mm)
        return compose_product([ClutterAtom(spec.clutter), atom])
    if kind in ("pmht", "pmhts"):
        atoms = [
            PoissonMeasAtom(f"t{i}", tgt, PoissonMeasPgf(spec.rates[i]), spec.mm)
            for i, tgt in enumerate(spec.targets)
        ]
        expr = compose_product(atoms)
        if kind == "pmhts":
            expr = superpose(expr, [a.label for a in atoms], SHARED_LABEL)
        return expr
    if kind in ("ipda", "jipda", "jipdas"):
        atoms, gates = per_target_atoms()
        wrapped = [wrap_existence(chi, a) for chi, a in zip(spec.exist_probs, atoms)]
        expr = compose_product([_gated_clutter(spec, gates)] + wrapped)
        if kind == "jipdas":
            expr = superpose(expr, [a.label for a in atoms], SHARED_LABEL)
        return expr
    if kind in ("mht", "mb"):
        atoms, gates = per_target_atoms()
        wrapped = [wrap_existence(chi, a) for chi, a in zip(spec.exist_probs, atoms)]
        priors = _data_priors(spec)
        gammas = _gammas(spec)
        data_atoms = []
        data_gates = []
        for j, (prior, gam) in enumerate(zip(priors, gammas)):
            gate = _target_gate(spec, prior) if spec.gate_threshold is not None else None
            data_gates.append(gate)
            data_atoms.append(wrap_existence(gam, DataAtom(f"d{j}", prior, spec.det, spec.mm, gate)))
        expr = compose_product([_gated_clutter(spec, gates + data_gates)] + wrapped + data_atoms)
        if kind == "mb":
            labels = [a.label for a in atoms] + [f"d{j}" for j in range(len(data_atoms))]
            expr = superpose(expr, labels, SHARED_LABEL)
        return expr
    if kind in ("phd", "cphd"):
        if spec.gate_threshold is not None:
            raise ValueError("gating is not supported for superposed intensity kinds")
        mu = as_mixture(spec.intensity)
        atom = BmdAtom(SHARED_LABEL, mu, spec.det, spec.mm, None)
        if kind == "phd":
            wrap = wrap_poisson(spec.intensity.mass, atom)
        else:
            wrap = wrap_cluster(spec.card_pgf, atom)
        return compose_product([ClutterAtom(spec.clutter), wrap])
    if kind == "genphd":
        mu = as_mixture(spec.intensity)
        atom = GenPhdAtom(SHARED_LABEL, mu, spec.family)
        return compose_product([ClutterAtom(spec.clutter), wrap_poisson(spec.intensity.mass, atom)])
    if kind in ("joint_phd", "joint_genphd"):
        wraps = []
        for i, group in enumerate(spec.groups):
            mu = as_mixture(group)
            if kind == "joint_phd":
                atom = BmdAtom(f"g{i}", mu, spec.det, spec.mm, None)
            else:
                atom = GenPhdAtom(f"g{i}", mu, spec.family)
            wraps.append(wrap_poisson(group.mass, atom))
        return compose_product([ClutterAtom(spec.clutter)] + wraps)
    if kind == "respair":
        p1, p2 = spec.pair_priors
        atom = ResolutionAtom("t0", "t1", p1, p2, spec.resolution, spec.mm)
        return compose_product([ClutterAtom(spec.clutter), atom])
    raise AssertionError("unreachable")
