"""Brute-force enumeration of association hypotheses on small problems.

Ground truth for the derivative-based machinery: every feasible explanation
of a scan (each target absent, missed, or claiming one measurement; leftover
measurements attributed to clutter) is enumerated and weighted by its
closed-form probability.  Posterior intensities, cardinality distributions,
association probabilities and second factorial moments follow by direct
summation.

This module intentionally avoids the expression/derivative code paths: it
uses scipy's normal pdf and information-form conditioning so that agreement
with the functional-derivative route is a genuine cross-check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, multivariate_normal

__all__ = [
    "OracleTarget",
    "OracleProblem",
    "OracleResult",
    "enumeration_oracle",
    "oracle_from_spec",
    "feasible_assignment_count",
    "respair_oracle",
]

MAX_TARGETS = 10  # existing targets plus measurement-induced candidates
MAX_MEASUREMENTS = 6
MAX_HYPOTHESES = 500_000


@dataclass(frozen=True)
class OracleTarget:
    mean: np.ndarray
    cov: np.ndarray
    pd: float
    exist: float = 1.0  # prior existence probability; 1 = certainly present
    label: str = ""


@dataclass
class OracleProblem:
    targets: list
    H: np.ndarray
    R: np.ndarray
    clutter_rate: float
    clutter_pdf: object  # callable y -> spatial density
    gate_threshold: float | None = None


@dataclass
class OracleResult:
    labels: list
    normalizer: float
    cardinality: np.ndarray
    association: dict  # (label, action) -> probability; action "miss"/"absent"/("assoc", j)
    existence: dict  # label -> posterior existence probability
    components: dict  # (label, action) -> (mean, cov) for non-absent actions
    pair_marginals: dict  # (label_t, label_u, action_t, action_u) -> probability
    hypothesis_count: int = 0

    def intensity(self, label: str, x) -> float:
        """Posterior intensity at x: action marginals times conditional densities."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        total = 0.0
        for (lab, act), p in self.association.items():
            if lab != label or act == "absent":
                continue
            mean, cov = self.components[(lab, act)]
            total += p * multivariate_normal.pdf(x, mean=mean, cov=cov)
        return total

    def second_moment(self, x1, x2) -> float:
        """Second factorial moment of the superposed posterior at (x1, x2)."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        pdf1 = {
            key: multivariate_normal.pdf(x1, mean=mc[0], cov=mc[1])
            for key, mc in self.components.items()
        }
        pdf2 = {
            key: multivariate_normal.pdf(x2, mean=mc[0], cov=mc[1])
            for key, mc in self.components.items()
        }
        total = 0.0
        for (lt, lu, at, au), p in self.pair_marginals.items():
            total += p * pdf1[(lt, at)] * pdf2[(lu, au)]
        return total

    def track_posterior(self, label: str):
        """Posterior existence and moment-matched conditional density."""
        chi_post = self.existence[label]
        if chi_post <= 0.0:
            return 0.0, None, None
        weights, means, covs = [], [], []
        for (lab, act), p in self.association.items():
            if lab != label or act == "absent":
                continue
            mean, cov = self.components[(lab, act)]
            weights.append(p)
            means.append(mean)
            covs.append(cov)
        w = np.asarray(weights) / sum(weights)
        mean = sum(wi * m for wi, m in zip(w, means))
        cov = sum(wi * (c + np.outer(m - mean, m - mean)) for wi, m, c in zip(w, means, covs))
        return chi_post, mean, cov


def _info_update(mean, cov, H, R, y):
    """Posterior by information-form conditioning (independent of the Kalman path)."""
    Jp = np.linalg.inv(cov)
    Ri = np.linalg.inv(R)
    J = Jp + H.T @ Ri @ H
    post_cov = np.linalg.inv(J)
    post_mean = post_cov @ (Jp @ mean + H.T @ Ri @ y)
    return post_mean, 0.5 * (post_cov + post_cov.T)


def _pred_meas_pdf(target: OracleTarget, H, R, y) -> float:
    s = H @ target.cov @ H.T + R
    return float(multivariate_normal.pdf(y, mean=H @ target.mean, cov=s))


def _in_gate(target: OracleTarget, H, R, y, threshold) -> bool:
    if threshold is None:
        return True
    s = H @ target.cov @ H.T + R
    d = y - H @ target.mean
    return float(d @ np.linalg.solve(s, d)) <= threshold


def enumeration_oracle(problem: OracleProblem, measurements) -> OracleResult:
    """Enumerate all feasible scan explanations and sum their probabilities."""
    measurements = [np.atleast_1d(np.asarray(y, float)) for y in measurements]
    n, m = len(problem.targets), len(measurements)
    if n > MAX_TARGETS or m > MAX_MEASUREMENTS:
        raise ValueError("enumeration budget exceeded")
    H, R = np.atleast_2d(problem.H), np.atleast_2d(problem.R)
    thr = problem.gate_threshold
    p_gate = 1.0 if thr is None else float(chi2.cdf(thr, df=H.shape[0]))

    gated = [
        [j for j, y in enumerate(measurements) if _in_gate(t, H, R, y, thr)]
        for t in problem.targets
    ]
    lam_vals = [problem.clutter_rate * problem.clutter_pdf(y) for y in measurements]
    labels = [t.label or f"t{i}" for i, t in enumerate(problem.targets)]

    # Per-(target, action) conditional posteriors and weight factors.
    components: dict = {}
    wfac: dict = {}
    for t, tgt in enumerate(problem.targets):
        components[(labels[t], "miss")] = (tgt.mean, tgt.cov)
        wfac[(t, "miss")] = tgt.exist * (1.0 - tgt.pd * p_gate)
        if tgt.exist < 1.0:
            wfac[(t, "absent")] = 1.0 - tgt.exist
        for j in gated[t]:
            components[(labels[t], ("assoc", j))] = _info_update(tgt.mean, tgt.cov, H, R, measurements[j])
            wfac[(t, ("assoc", j))] = tgt.exist * tgt.pd * _pred_meas_pdf(tgt, H, R, measurements[j])

    weights: list = []
    hypotheses: list = []

    def recurse(t: int, used: frozenset, actions: tuple, weight: float):
        if t == n:
            w = weight
            for j in range(m):
                if j not in used:
                    w *= lam_vals[j]
            if len(weights) >= MAX_HYPOTHESES:
                raise ValueError("enumeration budget exceeded")
            weights.append(w)
            hypotheses.append(actions)
            return
        tgt = problem.targets[t]
        if tgt.exist < 1.0:
            recurse(t + 1, used, actions + ("absent",), weight * wfac[(t, "absent")])
        recurse(t + 1, used, actions + ("miss",), weight * wfac[(t, "miss")])
        for j in gated[t]:
            if j in used:
                continue
            recurse(t + 1, used | {j}, actions + (("assoc", j),), weight * wfac[(t, ("assoc", j))])

    recurse(0, frozenset(), (), 1.0)
    z = float(sum(weights))
    if z <= 0.0:
        raise ValueError("all hypotheses have zero probability")

    card = np.zeros(n + 1)
    association: dict = {}
    existence: dict = {lab: 0.0 for lab in labels}
    pair_marginals: dict = {}
    for w, hyp in zip(weights, hypotheses):
        alive = [t for t, a in enumerate(hyp) if a != "absent"]
        card[len(alive)] += w
        for lab, act in zip(labels, hyp):
            association[(lab, act)] = association.get((lab, act), 0.0) + w
            if act != "absent":
                existence[lab] += w
        for t in alive:
            for u in alive:
                if t == u:
                    continue
                key = (labels[t], labels[u], hyp[t], hyp[u])
                pair_marginals[key] = pair_marginals.get(key, 0.0) + w
    card /= z
    association = {k: v / z for k, v in association.items()}
    existence = {k: v / z for k, v in existence.items()}
    pair_marginals = {k: v / z for k, v in pair_marginals.items()}
    return OracleResult(labels, z, card, association, existence, components, pair_marginals, len(weights))


def oracle_from_spec(spec, measurements) -> OracleResult:
    """Build an oracle problem from a filter parameter bundle (association kinds)."""
    from .pgfl import _data_priors, _gammas  # parameter plumbing only

    targets = []
    if spec.kind in ("pda", "jpda", "bayes_markov", "bmd"):
        for i, t in enumerate(spec.targets):
            pd = 1.0 if spec.kind == "bayes_markov" else spec.det.pd
            targets.append(OracleTarget(t.mean, t.cov, pd, 1.0, f"t{i}"))
    elif spec.kind in ("ipda", "jipda"):
        for i, (t, chi) in enumerate(zip(spec.targets, spec.exist_probs)):
            targets.append(OracleTarget(t.mean, t.cov, spec.det.pd, chi, f"t{i}"))
    elif spec.kind == "mht":
        for i, (t, chi) in enumerate(zip(spec.targets, spec.exist_probs)):
            targets.append(OracleTarget(t.mean, t.cov, spec.det.pd, chi, f"t{i}"))
        for j, (prior, gam) in enumerate(zip(_data_priors(spec), _gammas(spec))):
            targets.append(OracleTarget(prior.mean, prior.cov, spec.det.pd, gam, f"d{j}"))
    else:
        raise ValueError(f"oracle does not model filter kind {spec.kind!r}")
    if spec.clutter is not None:
        rate = spec.clutter.lambda_total
        pdf = spec.clutter.spatial.pdf
    else:
        rate, pdf = 0.0, lambda y: 0.0
    problem = OracleProblem(targets, spec.mm.H, spec.mm.R, rate, pdf, spec.gate_threshold)
    return enumeration_oracle(problem, measurements)


def feasible_assignment_count(n: int, m: int) -> int:
    """Number of feasible maps for n always-present targets and m measurements."""
    return sum(math.comb(n, k) * math.perm(m, k) for k in range(min(n, m) + 1))


# ---------------------------------------------------------------------------
# Resolution-aware oracle (scalar states, grid quadrature)
# ---------------------------------------------------------------------------


def respair_oracle(prior1, prior2, rm, mm, clutter, measurements, grid_half=10.0, grid_n=1201):
    """Enumerate pair hypotheses including a merged-return branch.

    Scalar state spaces only; every coupled integral is done by dense
    trapezoidal quadrature, keeping this oracle independent of the
    canonical-form algebra used by the expression evaluator.  Returns the
    hypothesis table, association probabilities, and a pointwise posterior
    intensity callable per target label ("t0", "t1").
    """
    measurements = [np.atleast_1d(np.asarray(y, float)) for y in measurements]
    m = len(measurements)
    a1, b1 = 1.0 - rm.pd1, rm.pd1
    a2, b2 = 1.0 - rm.pd2, rm.pd2
    h1 = float(rm.h1[0, 0])
    h2 = float(rm.h2[0, 0])
    sig = float(rm.sigma[0, 0])
    hm = float(mm.H[0, 0])
    r = float(mm.R[0, 0])

    x1 = np.linspace(prior1.mean[0] - grid_half, prior1.mean[0] + grid_half, grid_n)
    x2 = np.linspace(prior2.mean[0] - grid_half, prior2.mean[0] + grid_half, grid_n)

    def npdf(v, mean, var):
        return np.exp(-0.5 * (v - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)

    mu1 = npdf(x1, prior1.mean[0], prior1.cov[0, 0])
    mu2 = npdf(x2, prior2.mean[0], prior2.cov[0, 0])
    lam_vals = [clutter.lambda_total * clutter.spatial.pdf(y) for y in measurements]

    l1 = {j: npdf(hm * x1, measurements[j][0], r) for j in range(m)}
    l2 = {j: npdf(hm * x2, measurements[j][0], r) for j in range(m)}

    def fres_row(x1v):
        return np.exp(-0.5 * (h1 * x1v - h2 * x2) ** 2 / sig)

    def fres_col(x2v):
        return np.exp(-0.5 * (h1 * x1 - h2 * x2v) ** 2 / sig)

    def lmerged_row(x1v, j):
        return npdf(0.5 * (h1 * x1v + h2 * x2), measurements[j][0], r)

    def lmerged_col(x2v, j):
        return npdf(0.5 * (h1 * x1 + h2 * x2v), measurements[j][0], r)

    def i1(fn_vals):
        return float(np.trapezoid(fn_vals, x1))

    def i2(fn_vals):
        return float(np.trapezoid(fn_vals, x2))

    # State-space weight of each hypothesis branch (before clutter factors).
    hyps = []  # (kind, payload, state_weight)
    hyps.append(("mm", None, a1 * a2))
    phat1 = {j: i1(mu1 * l1[j]) for j in range(m)}
    phat2 = {j: i2(mu2 * l2[j]) for j in range(m)}
    for j in range(m):
        hyps.append(("1", j, b1 * a2 * phat1[j]))
        hyps.append(("2", j, a1 * b2 * phat2[j]))
        merged = i1(mu1 * np.array([i2(mu2 * fres_row(v) * lmerged_row(v, j)) for v in x1]))
        hyps.append(("merged", j, b1 * b2 * merged))
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            coupled = i1(mu1 * l1[i] * np.array([i2(mu2 * fres_row(v) * l2[j]) for v in x1]))
            hyps.append(("pair", (i, j), b1 * b2 * (phat1[i] * phat2[j] - coupled)))

    weights = []
    total = 0.0
    for kind, payload, w in hyps:
        taken = set()
        if kind in ("1", "2", "merged"):
            taken = {payload}
        elif kind == "pair":
            taken = set(payload)
        full = w
        for j in range(m):
            if j not in taken:
                full *= lam_vals[j]
        weights.append(full)
        total += full

    def clutterprod(kind, payload):
        taken = set()
        if kind in ("1", "2", "merged"):
            taken = {payload}
        elif kind == "pair":
            taken = set(payload)
        out = 1.0
        for j in range(m):
            if j not in taken:
                out *= lam_vals[j]
        return out

    def intensity(label, xq):
        xq = float(np.atleast_1d(xq)[0])
        acc = 0.0
        if label == "t0":
            mu_q = float(npdf(np.array([xq]), prior1.mean[0], prior1.cov[0, 0])[0])
            lq = {j: float(npdf(np.array([hm * xq]), measurements[j][0], r)[0]) for j in range(m)}
            for kind, payload, _w in hyps:
                cp = clutterprod(kind, payload)
                if kind == "mm":
                    acc += cp * a1 * a2 * mu_q
                elif kind == "1":
                    acc += cp * b1 * a2 * mu_q * lq[payload]
                elif kind == "2":
                    acc += cp * a1 * b2 * mu_q * phat2[payload]
                elif kind == "merged":
                    j = payload
                    inner = i2(mu2 * fres_row(xq) * lmerged_row(xq, j))
                    acc += cp * b1 * b2 * mu_q * inner
                else:
                    i, j = payload
                    inner = phat2[j] - i2(mu2 * fres_row(xq) * l2[j])
                    acc += cp * b1 * b2 * mu_q * lq[i] * inner
        else:
            mu_q = float(npdf(np.array([xq]), prior2.mean[0], prior2.cov[0, 0])[0])
            lq = {j: float(npdf(np.array([hm * xq]), measurements[j][0], r)[0]) for j in range(m)}
            for kind, payload, _w in hyps:
                cp = clutterprod(kind, payload)
                if kind == "mm":
                    acc += cp * a1 * a2 * mu_q
                elif kind == "2":
                    acc += cp * a1 * b2 * mu_q * lq[payload]
                elif kind == "1":
                    acc += cp * b1 * a2 * mu_q * phat1[payload]
                elif kind == "merged":
                    j = payload
                    inner = i1(mu1 * fres_col(xq) * lmerged_col(xq, j))
                    acc += cp * b1 * b2 * mu_q * inner
                else:
                    i, j = payload
                    inner = phat1[i] - i1(mu1 * fres_col(xq) * l1[i])
                    acc += cp * b1 * b2 * mu_q * lq[j] * inner
        return acc / total

    assoc = {}
    for (kind, payload, _w), wfull in zip(hyps, weights):
        key = (kind, payload)
        assoc[key] = assoc.get(key, 0.0) + wfull / total
    return {"normalizer": total, "intensity": intensity, "association": assoc}
