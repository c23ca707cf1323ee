"""Scenario generation and multi-object performance metrics.

Ground-truth trajectories follow the linear-Gaussian dynamics, detections
are Bernoulli thinned, measurements are corrupted and kept inside the
bounded measurement box, and clutter is appended from its point-process
model.  The random stream is a counter-based generator (Philox) keyed by
the scenario seed, so identical seeds reproduce byte-identical scan data on
any worker layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clutter import sample_clutter
from .detection import DetectionModel
from .gaussmath import GaussianDensity, MeasurementModel, MotionModel

__all__ = [
    "TargetSpec",
    "Scenario",
    "Scan",
    "ScanData",
    "simulate",
    "ospa",
    "run_metrics",
]

_MAX_REDRAWS = 50


def _chol(cov):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    # Allow PSD (e.g. zero process noise) via eigendecomposition fallback.
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        return vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0)))


@dataclass(frozen=True)
class TargetSpec:
    """One trajectory: alive on scans [birth, death), seeded from a Gaussian draw."""

    birth: int
    death: int
    initial: GaussianDensity

    def __post_init__(self):
        if not self.birth < self.death:
            raise ValueError("target birth scan must precede its death scan")


@dataclass
class Scenario:
    duration: int
    targets: list
    motion: MotionModel
    mm: MeasurementModel
    pd: DetectionModel
    clutter: object
    seed: int
    gate_threshold: float = None

    def __post_init__(self):
        for t in self.targets:
            if t.death > self.duration:
                raise ValueError("target death scan exceeds the scenario duration")


@dataclass
class Scan:
    truths: list  # (target id, state vector)
    measurements: list  # (point, origin id); origin -1 means clutter


@dataclass
class ScanData:
    scans: list

    @property
    def duration(self) -> int:
        return len(self.scans)


def _draw_in_box(rng, mean, chol, box):
    y = mean + chol @ rng.standard_normal(mean.shape[0])
    for _ in range(_MAX_REDRAWS):
        if box is None or box.contains(y):
            return y
        y = mean + chol @ rng.standard_normal(mean.shape[0])
    return np.clip(y, box.lo, box.hi)


def simulate(scenario: Scenario) -> ScanData:
    """Generate one deterministic realization of the scenario."""
    rng = np.random.Generator(np.random.Philox(key=scenario.seed))
    box = getattr(scenario.clutter.spatial, "box", None)
    chol_q = _chol(scenario.motion.Q)
    chol_r = _chol(scenario.mm.R)
    chol_init = [_chol(t.initial.cov) for t in scenario.targets]
    states = {}
    scans = []
    for k in range(scenario.duration):
        truths = []
        measurements = []
        for tid, spec in enumerate(scenario.targets):
            if not spec.birth <= k < spec.death:
                states.pop(tid, None)
                continue
            if tid not in states:
                states[tid] = spec.initial.mean + chol_init[tid] @ rng.standard_normal(spec.initial.dim)
            else:
                noise = chol_q @ rng.standard_normal(scenario.motion.dim)
                states[tid] = scenario.motion.F @ states[tid] + noise
            truths.append((tid, states[tid].copy()))
            if rng.uniform() < scenario.pd.pd:
                mean = scenario.mm.H @ states[tid]
                y = _draw_in_box(rng, mean, chol_r, box)
                measurements.append((y, tid))
        for y in sample_clutter(scenario.clutter, rng):
            measurements.append((np.asarray(y, dtype=float), -1))
        scans.append(Scan(truths, measurements))
    return ScanData(scans)


def ospa(estimates, truth, cutoff: float, order: float = 1.0) -> float:
    """Optimal-subpattern-assignment distance between two point sets."""
    if cutoff <= 0 or order < 1:
        raise ValueError("cutoff must be positive and order >= 1")
    xs = [np.atleast_1d(np.asarray(v, dtype=float)) for v in estimates]
    ys = [np.atleast_1d(np.asarray(v, dtype=float)) for v in truth]
    n, m = len(xs), len(ys)
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return float(cutoff)
    dist = np.empty((n, m))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            dist[i, j] = min(float(np.linalg.norm(x - y)), cutoff) ** order
    rows, cols = linear_sum_assignment(dist)
    cost = dist[rows, cols].sum() + cutoff**order * abs(n - m)
    return float((cost / max(n, m)) ** (1.0 / order))


def run_metrics(scans: ScanData, estimates, cutoff: float = 10.0, order: float = 1.0, project=None):
    """Per-scan OSPA, cardinality error and matched-pair localization RMSE.

    ``estimates`` is a per-scan list of state vectors; ``project`` maps both
    truth states and estimates into the comparison space (default identity).
    Returns a list of per-scan dicts plus an aggregate dict.
    """
    if len(estimates) != scans.duration:
        raise ValueError("estimate list length must match the scan count")
    if project is None:
        project = lambda v: np.atleast_1d(np.asarray(v, dtype=float))
    rows = []
    for k, scan in enumerate(scans.scans):
        true_pts = [project(x) for _, x in scan.truths]
        est_pts = [project(v) for v in estimates[k]]
        d = ospa(est_pts, true_pts, cutoff, order)
        card_err = abs(len(est_pts) - len(true_pts))
        rmse = float("nan")
        if est_pts and true_pts:
            cost = np.empty((len(est_pts), len(true_pts)))
            for i, x in enumerate(est_pts):
                for j, y in enumerate(true_pts):
                    cost[i, j] = float(np.linalg.norm(x - y))
            rows_i, cols_j = linear_sum_assignment(cost)
            matched = [
                cost[i, j] for i, j in zip(rows_i, cols_j) if cost[i, j] <= cutoff
            ]
            if matched:
                rmse = float(np.sqrt(np.mean(np.square(matched))))
        rows.append({"scan": k, "ospa": d, "card_err": card_err, "rmse": rmse})
    vals = np.array([r["ospa"] for r in rows])
    card = np.array([r["card_err"] for r in rows], dtype=float)
    rmses = np.array([r["rmse"] for r in rows])
    aggregate = {
        "ospa_mean": float(vals.mean()),
        "ospa_max": float(vals.max()),
        "card_err_mean": float(card.mean()),
        "rmse_mean": float(np.nanmean(rmses)) if not np.all(np.isnan(rmses)) else float("nan"),
    }
    return rows, aggregate
