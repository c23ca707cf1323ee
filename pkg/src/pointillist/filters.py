"""Recursive multitarget filters: per-scan predict/update cycles.

Each update builds the scan's joint expression, extracts posterior summary
statistics by differentiating it (association branch masses, existence
probabilities, cardinality distributions), and closes the recursion with the
family's approximation: single-Gaussian moment matching per target for
fixed-target filters, conditional Bernoulli components for existence
filters, and Gaussian-mixture intensities for superposed count filters.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import poisson

from .clutter import PoissonClutter
from .detection import DetectionModel, ResolutionModel
from .gaussmath import (
    GaussianDensity,
    GaussianMixture,
    Gate,
    MeasurementModel,
    MotionModel,
    density_form,
    gaussian_eval,
    kalman_predict,
    kalman_update,
    kernel_form,
    likelihood_form,
    moment_match,
    predicted_measurement,
)
from .pgfl import FilterSpec, build_filter, evaluate_secular, ones_context
from .secular import (
    NumericalError,
    PosteriorStats,
    association_weights,
    joint_branch_weights,
    marked_branch_masses,
    posterior_cardinality,
    subset_branch_weights,
)

__all__ = [
    "BernoulliTrack",
    "CardinalityState",
    "MixtureIntensity",
    "FilterState",
    "FilterConfig",
    "BirthModel",
    "initial_state",
    "predict",
    "update",
    "mixture_reduce",
    "estimate",
    "unresolved_pair_step",
    "gate_measurements",
]

MixtureIntensity = GaussianMixture

FIXED_KINDS = ("bayes_markov", "pda", "jpda", "pmht")
BERNOULLI_KINDS = ("ipda", "jipda", "mht", "mb")
INTENSITY_KINDS = ("phd", "cphd")


@dataclass
class BernoulliTrack:
    existence: float
    density: GaussianDensity
    id: int

    def __post_init__(self):
        if not 0.0 <= self.existence <= 1.0:
            raise ValueError("existence probability out of range")


@dataclass
class CardinalityState:
    distribution: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.distribution, dtype=float)
        if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("cardinality state must be a probability vector")
        self.distribution = np.clip(p, 0.0, None)


@dataclass
class FilterState:
    """Filter-family-specific recursive state."""

    kind: str
    tracks: list = None  # GaussianDensity list (fixed-target kinds)
    bernoulli: list = None  # BernoulliTrack list
    intensity: GaussianMixture = None
    cardinality: CardinalityState = None
    groups: list = None  # list of GaussianMixture (joint intensity kinds)
    next_id: int = 0


@dataclass
class BirthModel:
    """New-target process for one scan."""

    intensity: GaussianMixture = None  # appended to intensity states
    bernoulli: list = None  # (existence, GaussianDensity) pairs


@dataclass
class FilterConfig:
    kind: str
    motion: MotionModel
    mm: MeasurementModel
    det: DetectionModel = None
    clutter: PoissonClutter = None
    survival: float = 1.0
    gate_threshold: float = None
    rates: list = None  # Poisson measurement rates per target
    birth: BirthModel = None
    gamma: float = None
    birth_cov: np.ndarray = None
    birth_intensity: float = 1e-4
    resolution: ResolutionModel = None
    n_max: int = 64
    prune_threshold: float = 1e-5
    merge_distance: float = 4.0
    max_components: int = 100
    confirm_threshold: float = 0.5
    drop_threshold: float = 1e-3
    max_tracks: int = 100


def initial_state(config: FilterConfig, densities=None, exist_probs=None, intensity=None, cardinality=None, groups=None) -> FilterState:
    kind = config.kind
    if kind in FIXED_KINDS or kind == "respair":
        return FilterState(kind, tracks=list(densities), next_id=len(densities))
    if kind in BERNOULLI_KINDS:
        exist_probs = exist_probs or [1.0] * len(densities)
        tracks = [BernoulliTrack(chi, d, i) for i, (chi, d) in enumerate(zip(exist_probs, densities))]
        return FilterState(kind, bernoulli=tracks, next_id=len(tracks))
    if kind == "phd":
        return FilterState(kind, intensity=intensity)
    if kind == "cphd":
        if cardinality is None:
            cardinality = poisson.pmf(np.arange(config.n_max + 1), intensity.mass)
            cardinality = cardinality / cardinality.sum()
        return FilterState(kind, intensity=intensity, cardinality=CardinalityState(cardinality))
    if kind == "joint_phd":
        return FilterState(kind, groups=list(groups))
    raise ValueError(f"unsupported filter kind {kind!r}")


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def _thin_cardinality(p: np.ndarray, survival: float) -> np.ndarray:
    n_max = len(p) - 1
    out = np.zeros_like(p)
    for n in range(n_max + 1):
        if p[n] == 0.0:
            continue
        for k in range(n + 1):
            out[k] += p[n] * math.comb(n, k) * survival**k * (1 - survival) ** (n - k)
    return out


def _convolve_births(p: np.ndarray, birth_mass: float) -> np.ndarray:
    n_max = len(p) - 1
    birth = poisson.pmf(np.arange(n_max + 1), birth_mass)
    out = np.convolve(p, birth)[: n_max + 1]
    return out / out.sum()


def predict(state: FilterState, motion: MotionModel, survival: float, birth: BirthModel = None) -> FilterState:
    """Propagate a filter state one scan ahead (thinning, dynamics, births)."""
    if not 0.0 <= survival <= 1.0:
        raise ValueError("survival probability out of range")
    if state.kind in FIXED_KINDS or state.kind == "respair":
        if birth is not None:
            raise ValueError("fixed-target kinds have no birth process")
        return replace(state, tracks=[kalman_predict(d, motion) for d in state.tracks])
    if state.kind in BERNOULLI_KINDS:
        tracks = [
            BernoulliTrack(survival * t.existence, kalman_predict(t.density, motion), t.id)
            for t in state.bernoulli
        ]
        next_id = state.next_id
        if birth is not None and birth.bernoulli:
            for chi, d in birth.bernoulli:
                tracks.append(BernoulliTrack(chi, d, next_id))
                next_id += 1
        return replace(state, bernoulli=tracks, next_id=next_id)
    if state.kind in INTENSITY_KINDS:
        weights = state.intensity.weights * survival
        comps = [kalman_predict(c, motion) for c in state.intensity.components]
        birth_mass = 0.0
        if birth is not None and birth.intensity is not None:
            weights = np.concatenate([weights, birth.intensity.weights])
            comps.extend(birth.intensity.components)
            birth_mass = birth.intensity.mass
        mix = GaussianMixture(weights, tuple(comps))
        if state.kind == "phd":
            return replace(state, intensity=mix)
        card = _convolve_births(_thin_cardinality(state.cardinality.distribution, survival), birth_mass)
        return replace(state, intensity=mix, cardinality=CardinalityState(card))
    if state.kind == "joint_phd":
        groups = [
            GaussianMixture(g.weights * survival, tuple(kalman_predict(c, motion) for c in g.components))
            for g in state.groups
        ]
        return replace(state, groups=groups)
    raise ValueError(f"unsupported filter kind {state.kind!r}")


# ---------------------------------------------------------------------------
# Gating
# ---------------------------------------------------------------------------


def _predicted_densities(state: FilterState):
    if state.kind in FIXED_KINDS or state.kind == "respair":
        return state.tracks
    if state.kind in BERNOULLI_KINDS:
        return [t.density for t in state.bernoulli]
    if state.kind in INTENSITY_KINDS:
        return list(state.intensity.components)
    if state.kind == "joint_phd":
        return [c for g in state.groups for c in g.components]
    raise ValueError(state.kind)


def gate_measurements(state: FilterState, config: FilterConfig, measurements):
    """Keep measurements inside the union of per-track validation regions."""
    measurements = [np.atleast_1d(np.asarray(y, float)) for y in measurements]
    if config.gate_threshold is None:
        return measurements
    gates = [
        Gate(config.gate_threshold, predicted_measurement(d, config.mm))
        for d in _predicted_densities(state)
    ]
    return [y for y in measurements if any(g.contains(y) for g in gates)]


# ---------------------------------------------------------------------------
# Update
# ---------------------------------------------------------------------------


def _multi_update(prior: GaussianDensity, mm: MeasurementModel, points):
    """Moments of prior(x) * prod_i N(y_i; H x, R): multi-measurement posterior."""
    form = density_form(prior)
    for y in points:
        form = form * likelihood_form(mm.H, mm.R, y)
    mass, mean, cov = form.moments()
    return mass, GaussianDensity(mean, cov)


def _spec_for_state(state: FilterState, config: FilterConfig, measurements) -> FilterSpec:
    kind = state.kind
    base = dict(
        mm=config.mm,
        det=config.det,
        clutter=config.clutter,
        gate_threshold=config.gate_threshold,
    )
    if kind == "bayes_markov":
        return FilterSpec(kind="bayes_markov", mm=config.mm, targets=list(state.tracks))
    if kind in ("pda", "jpda"):
        return FilterSpec(kind="jpda" if len(state.tracks) > 1 else "pda", targets=list(state.tracks), **base)
    if kind == "pmht":
        return FilterSpec(kind="pmht", mm=config.mm, targets=list(state.tracks), rates=list(config.rates))
    if kind in ("ipda", "jipda"):
        return FilterSpec(
            kind="jipda" if len(state.bernoulli) > 1 else "ipda",
            targets=[t.density for t in state.bernoulli],
            exist_probs=[t.existence for t in state.bernoulli],
            **base,
        )
    if kind in ("mht", "mb"):
        return FilterSpec(
            kind="mht",  # labeled form; component extraction is identical for both
            targets=[t.density for t in state.bernoulli],
            exist_probs=[t.existence for t in state.bernoulli],
            measurements=list(measurements),
            gamma=config.gamma,
            birth_cov=config.birth_cov,
            birth_intensity=config.birth_intensity,
            **base,
        )
    if kind == "phd":
        return FilterSpec(kind="phd", mm=config.mm, det=config.det, clutter=config.clutter, intensity=state.intensity)
    if kind == "cphd":
        return FilterSpec(
            kind="cphd",
            mm=config.mm,
            det=config.det,
            clutter=config.clutter,
            intensity=state.intensity,
            card_pgf=tuple(state.cardinality.distribution),
        )
    if kind == "joint_phd":
        return FilterSpec(kind="joint_phd", mm=config.mm, det=config.det, clutter=config.clutter, groups=list(state.groups))
    raise ValueError(f"unsupported filter kind {kind!r}")


def _close_single_gaussian(predicted: GaussianDensity, weights, config, measurements, label):
    comps_w, means, covs = [], [], []
    w_miss = weights[(label, "miss")]
    if w_miss > 0:
        comps_w.append(w_miss)
        means.append(predicted.mean)
        covs.append(predicted.cov)
    for i, y in enumerate(measurements):
        w = weights[(label, "assoc", i)]
        if w <= 0:
            continue
        upd = kalman_update(predicted, config.mm, y)
        comps_w.append(w)
        means.append(upd.mean)
        covs.append(upd.cov)
    _, matched = moment_match(comps_w, means, covs)
    return matched


def _intensity_mixture(state_mix: GaussianMixture, masses, config, measurements, label):
    """Assemble the posterior intensity mixture from marked branch masses."""
    mu_w = state_mix.weights / state_mix.mass
    pd = config.det.pd
    weights, comps = [], []
    miss_mass = masses[(label, "miss")]
    if miss_mass > 0:
        for wc, comp in zip(mu_w, state_mix.components):
            weights.append(miss_mass * wc)
            comps.append(comp)
    for j, y in enumerate(measurements):
        tau = masses[(label, "assoc", j)]
        if tau <= 0:
            continue
        lik = np.array(
            [wc * gaussian_eval(predicted_measurement(c, config.mm), y) for wc, c in zip(mu_w, state_mix.components)]
        )
        total = lik.sum()
        for wc_lik, comp in zip(lik, state_mix.components):
            if wc_lik <= 0:
                continue
            weights.append(tau * wc_lik / total)
            comps.append(kalman_update(comp, config.mm, y))
    return GaussianMixture(np.asarray(weights), tuple(comps))


def update(state: FilterState, config: FilterConfig, measurements, method: str = "ad", method_params=None):
    """One Bayes update: build the scan expression, extract statistics, close."""
    params = dict(method_params or {})
    measurements = gate_measurements(state, config, measurements)
    kind = state.kind
    if kind == "respair":
        d1, d2, stats = unresolved_pair_step(
            state.tracks[0], state.tracks[1], config.resolution, config.mm, config.clutter,
            measurements, method=method, method_params=params,
        )
        return replace(state, tracks=[d1, d2]), stats

    spec = _spec_for_state(state, config, measurements)
    expr = build_filter(spec)
    stats = PosteriorStats()

    if kind == "bayes_markov":
        if len(measurements) != 1:
            raise NumericalError("the always-detected single-target kind needs exactly one measurement")
        new_tracks = [kalman_update(d, config.mm, measurements[0]) for d in state.tracks]
        return replace(state, tracks=new_tracks), stats

    if kind in ("pda", "jpda"):
        new_tracks = []
        for t, predicted in enumerate(state.tracks):
            w = association_weights(expr, measurements, f"t{t}", method=method, **params)
            stats.moments[f"t{t}"] = w
            new_tracks.append(_close_single_gaussian(predicted, w, config, measurements, f"t{t}"))
        return replace(state, tracks=new_tracks), stats

    if kind == "pmht":
        new_tracks = []
        m = len(measurements)
        for t, predicted in enumerate(state.tracks):
            label = f"t{t}"
            subsets = subset_branch_weights(expr, measurements, label, method=method, **params)
            weights, means, covs = [], [], []
            for subset, w in subsets.items():
                if w <= 0:
                    continue
                pts = [measurements[i] for (_, _, i) in sorted(subset, key=lambda k: k[2])]
                _, comp = _multi_update(predicted, config.mm, pts)
                weights.append(w)
                means.append(comp.mean)
                covs.append(comp.cov)
            _, matched = moment_match(weights, means, covs)
            new_tracks.append(matched)
        return replace(state, tracks=new_tracks), stats

    if kind in ("ipda", "jipda", "mht", "mb"):
        new_tracks = []
        labels = [(f"t{i}", trk) for i, trk in enumerate(state.bernoulli)]
        next_id = state.next_id
        if kind in ("mht", "mb"):
            from .pgfl import _data_priors, _gammas

            data_priors = _data_priors(spec)
            for j, prior in enumerate(data_priors):
                labels.append((f"d{j}", BernoulliTrack(0.0, prior, -1)))
        for label, trk in labels:
            w = association_weights(expr, measurements, label, extra_keys=[(label, "absent")], method=method, **params)
            stats.moments[label] = w
            chi_post = 1.0 - w[(label, "absent")]
            if chi_post <= 0.0:
                continue
            cond = {k: v / chi_post for k, v in w.items() if k != (label, "absent")}
            matched = _close_single_gaussian(trk.density, cond, config, measurements, label)
            tid = trk.id
            if tid < 0:
                tid = next_id
                next_id += 1
            new_tracks.append(BernoulliTrack(min(chi_post, 1.0), matched, tid))
        if kind in ("mht", "mb"):
            new_tracks = [t for t in new_tracks if t.existence >= config.drop_threshold]
            new_tracks.sort(key=lambda t: -t.existence)
            new_tracks = new_tracks[: config.max_tracks]
            new_tracks.sort(key=lambda t: t.id)
        if method == "ad":  # diagnostic statistic, cheap only for the exact engine
            nmax = max(len(labels), 1)
            stats.cardinality = posterior_cardinality(expr, measurements, n_max=nmax)
        return replace(state, bernoulli=new_tracks, next_id=next_id), stats

    if kind in ("phd", "cphd"):
        masses = marked_branch_masses(expr, measurements, "target", method=method, **params)
        mix = _intensity_mixture(state.intensity, masses, config, measurements, "target")
        mix, _pruned = mixture_reduce(mix, config.prune_threshold, config.merge_distance, config.max_components)
        if kind == "phd":
            return replace(state, intensity=mix), stats
        card = posterior_cardinality(expr, measurements, n_max=config.n_max, method=method, **params)
        stats.cardinality = card
        return replace(state, intensity=mix, cardinality=CardinalityState(card)), stats

    if kind == "joint_phd":
        groups = []
        for i, g in enumerate(state.groups):
            masses = marked_branch_masses(expr, measurements, f"g{i}", method=method, **params)
            mix = _intensity_mixture(g, masses, config, measurements, f"g{i}")
            mix, _ = mixture_reduce(mix, config.prune_threshold, config.merge_distance, config.max_components)
            groups.append(mix)
        return replace(state, groups=groups), stats

    raise ValueError(f"unsupported filter kind {kind!r}")


# ---------------------------------------------------------------------------
# Mixture reduction and estimation
# ---------------------------------------------------------------------------


def mixture_reduce(mix: GaussianMixture, prune_threshold: float, merge_distance: float, max_components: int):
    """Prune, merge and cap a Gaussian mixture; returns (reduced, dropped mass)."""
    if prune_threshold < 0 or merge_distance <= 0 or max_components < 1:
        raise ValueError("reduction parameters must be positive")
    order = np.argsort(-mix.weights)
    weights = [float(mix.weights[i]) for i in order]
    comps = [mix.components[i] for i in order]
    dropped = sum(w for w in weights if w < prune_threshold)
    kept = [(w, c) for w, c in zip(weights, comps) if w >= prune_threshold]

    merged: list = []
    while kept:
        w0, c0 = kept.pop(0)
        group_w, group_m, group_c = [w0], [c0.mean], [c0.cov]
        rest = []
        inv = np.linalg.inv(c0.cov)
        for w, c in kept:
            d = c.mean - c0.mean
            if float(d @ inv @ d) < merge_distance:
                group_w.append(w)
                group_m.append(c.mean)
                group_c.append(c.cov)
            else:
                rest.append((w, c))
        mass, comp = moment_match(group_w, group_m, group_c)
        merged.append((mass, comp))
        kept = rest

    merged.sort(key=lambda wc: -wc[0])
    if len(merged) > max_components:
        dropped += sum(w for w, _ in merged[max_components:])
        merged = merged[:max_components]
    out = GaussianMixture(np.array([w for w, _ in merged]), tuple(c for _, c in merged))
    return out, dropped


def estimate(state: FilterState, config: FilterConfig = None):
    """Point estimates: states plus an optional existence/weight per entry."""
    confirm = config.confirm_threshold if config is not None else 0.5
    if state.kind in FIXED_KINDS or state.kind == "respair":
        return [(d.mean, None) for d in state.tracks]
    if state.kind in BERNOULLI_KINDS:
        return [(t.density.mean, t.existence) for t in state.bernoulli if t.existence > confirm]
    if state.kind in INTENSITY_KINDS:
        if state.kind == "cphd":
            n_hat = int(np.argmax(state.cardinality.distribution))
        else:
            mass = state.intensity.mass
            n_hat = int(np.argmax(poisson.pmf(np.arange(0, max(2, int(mass) + 3)), mass)))
        order = np.argsort(-state.intensity.weights)[:n_hat]
        return [(state.intensity.components[i].mean, float(state.intensity.weights[i])) for i in order]
    if state.kind == "joint_phd":
        out = []
        for g in state.groups:
            sub = FilterState("phd", intensity=g)
            out.extend(estimate(sub, config))
        return out
    raise ValueError(state.kind)


# ---------------------------------------------------------------------------
# Unresolved two-target update
# ---------------------------------------------------------------------------


def unresolved_pair_step(
    d1: GaussianDensity,
    d2: GaussianDensity,
    rm: ResolutionModel,
    mm: MeasurementModel,
    clutter: PoissonClutter,
    measurements,
    method: str = "ad",
    method_params=None,
):
    """One update for two possibly unresolved targets; returns the pair plus stats.

    Branch masses come from the marked expression; each branch's per-target
    marginal moments are closed-form Gaussian-form marginals (the merged and
    coupled branches involve the resolution kernel, so their marginals are
    not plain Kalman updates).
    """
    measurements = [np.atleast_1d(np.asarray(y, float)) for y in measurements]
    m = len(measurements)
    spec = FilterSpec(kind="respair", mm=mm, clutter=clutter, resolution=rm, pair_priors=(d1, d2))
    expr = build_filter(spec)
    miss0, miss1 = ("t0", "miss"), ("t1", "miss")
    a0 = [("t0", "assoc", i) for i in range(m)]
    a1 = [("t1", "assoc", i) for i in range(m)]
    key_pairs = [(miss0, miss1)]
    key_pairs += [(k, miss1) for k in a0]
    key_pairs += [(miss0, k) for k in a1]
    key_pairs += [(a0[i], a1[j]) for i in range(m) for j in range(m)]
    pair_weights = joint_branch_weights(
        expr, measurements, key_pairs, base_g=0.0, method=method, **dict(method_params or {})
    )

    dims = (d1.dim, d2.dim)
    idx = (np.arange(dims[0]), np.arange(dims[0], dims[0] + dims[1]))
    from .pgfl import _lift_form

    joint_prior = _lift_form(density_form(d1), idx[0], sum(dims)) * _lift_form(
        density_form(d2), idx[1], sum(dims)
    )
    res_kernel = kernel_form(np.hstack([rm.h1, -rm.h2]), rm.sigma)
    B = np.hstack([rm.h1 * 0.5, rm.h2 * 0.5])

    def lifted_lik(side, y):
        H = np.zeros((mm.H.shape[0], sum(dims)))
        if side == 0:
            H[:, : dims[0]] = mm.H
        else:
            H[:, dims[0] :] = mm.H
        return likelihood_form(H, mm.R, y)

    def branch_moments(target: int, branch):
        """(mean, cov) of the target's conditional density under one branch."""
        prior = (d1, d2)[target]
        kind, payload = branch
        if kind in ("mm", "other"):
            return prior.mean, prior.cov
        if kind == "self":
            upd = kalman_update(prior, mm, measurements[payload])
            return upd.mean, upd.cov
        if kind == "merged":
            form = joint_prior * res_kernel * likelihood_form(B, mm.R, measurements[payload])
            marg = form.marginal(idx[target])
            _, mean, cov = marg.moments()
            return mean, cov
        # coupled pair (i, j): self likelihood times (1 - kernel)-weighted partner
        i, j = payload
        own = (i, j)[target]
        other = (i, j)[1 - target]
        plain = joint_prior * lifted_lik(target, measurements[own]) * lifted_lik(
            1 - target, measurements[other]
        )
        kerned = plain * res_kernel
        m_plain, mu_p, c_p = plain.marginal(idx[target]).moments()
        m_kern, mu_k, c_k = kerned.marginal(idx[target]).moments()
        _, comp = moment_match([m_plain, -m_kern], [mu_p, mu_k], [c_p, c_k])
        return comp.mean, comp.cov

    def branch_of(pair):
        k0, k1 = pair
        if k0[1] == "miss" and k1[1] == "miss":
            return ("mm", None)
        if k0[1] == "miss":
            return ("t1only", k1[2])
        if k1[1] == "miss":
            return ("t0only", k0[2])
        if k0[2] == k1[2]:
            return ("merged", k0[2])
        return ("pair", (k0[2], k1[2]))

    per_target = {0: [], 1: []}
    assoc_table = {}
    for pair, w in pair_weights.items():
        branch = branch_of(pair)
        if w <= 0:
            continue
        assoc_table[branch] = assoc_table.get(branch, 0.0) + w
        kind, payload = branch
        for target in (0, 1):
            if kind == "mm":
                mb = branch_moments(target, ("mm", None))
            elif kind == "t0only":
                mb = branch_moments(target, ("self", payload) if target == 0 else ("other", None))
            elif kind == "t1only":
                mb = branch_moments(target, ("self", payload) if target == 1 else ("other", None))
            elif kind == "merged":
                mb = branch_moments(target, ("merged", payload))
            else:
                mb = branch_moments(target, ("coupled", payload))
            per_target[target].append((w, mb[0], mb[1]))

    stats = PosteriorStats(moments={"branches": assoc_table})
    new = []
    for target in (0, 1):
        ws = [w for w, _, _ in per_target[target]]
        ms = [m for _, m, _ in per_target[target]]
        cs = [c for _, _, c in per_target[target]]
        _, matched = moment_match(ws, ms, cs)
        new.append(matched)
    return new[0], new[1], stats
