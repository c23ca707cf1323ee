"""Configuration-driven runner: simulate a scenario, track it, emit artifacts.

Commands:
  run       execute a filter over simulated scans, write CSV/JSON/SVG outputs
  validate  parse a config, check invariants, verify the built expression
  demo      write bundled example configurations

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .clutter import Box, PoissonClutter, UniformBoxDensity
from .detection import DetectionModel, ResolutionModel
from .filters import (
    BirthModel,
    FilterConfig,
    estimate,
    initial_state,
    predict,
    update,
)
from .gaussmath import GaussianDensity, GaussianMixture, MeasurementModel, MotionModel
from .pgfl import FILTER_KINDS, build_filter, evaluate_secular, ones_context
from .secular import BudgetError, NumericalError, posterior_intensity
from .sim import Scenario, TargetSpec, run_metrics, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SUPPORTED_KINDS = ("pda", "jpda", "jipda", "mht", "phd", "cphd", "mb", "respair", "ipda", "pmht", "bayes_markov")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _need(cfg: dict, key: str, path: str):
    if key not in cfg:
        _fail(f"{path}.{key}", "missing required field")
    return cfg[key]


def _matrix(value, path: str) -> np.ndarray:
    try:
        out = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        _fail(path, "expected a numeric matrix")
    return out


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _parse_motion(cfg: dict, path: str) -> MotionModel:
    if "F" in cfg:
        return MotionModel(_matrix(cfg["F"], f"{path}.F"), _matrix(cfg["Q"], f"{path}.Q"))
    if cfg.get("model") == "cv":
        dims = int(cfg.get("dims", 2))
        dt = float(cfg.get("dt", 1.0))
        q = float(cfg.get("q", 0.01))
        eye = np.eye(dims)
        F = np.block([[eye, dt * eye], [np.zeros((dims, dims)), eye]])
        Q = q * np.block(
            [[dt**3 / 3 * eye, dt**2 / 2 * eye], [dt**2 / 2 * eye, dt * eye]]
        )
        return MotionModel(F, Q)
    _fail(path, "motion needs either matrices F/Q or model 'cv'")


def _parse_measurement(cfg: dict, path: str, state_dim: int) -> MeasurementModel:
    if "H" in cfg:
        return MeasurementModel(_matrix(cfg["H"], f"{path}.H"), _matrix(cfg["R"], f"{path}.R"))
    if cfg.get("model") == "position":
        dims = int(cfg.get("dims", 2))
        r = float(cfg.get("r", 0.25))
        H = np.hstack([np.eye(dims), np.zeros((dims, state_dim - dims))])
        return MeasurementModel(H, r * np.eye(dims))
    _fail(path, "measurement needs either matrices H/R or model 'position'")


def _parse_gaussian(cfg: dict, path: str) -> GaussianDensity:
    mean = _matrix(_need(cfg, "mean", path), f"{path}.mean")
    if "cov" in cfg:
        cov = _matrix(cfg["cov"], f"{path}.cov")
    elif "diag" in cfg:
        cov = np.diag(_matrix(cfg["diag"], f"{path}.diag"))
    else:
        _fail(path, "needs 'cov' or 'diag'")
    try:
        return GaussianDensity(mean, cov)
    except ValueError as e:
        _fail(path, str(e))


def _parse_scenario(cfg: dict, path: str, seed_override=None) -> Scenario:
    duration = int(_need(cfg, "duration", path))
    if duration <= 0:
        _fail(f"{path}.duration", "must be positive")
    box_spec = _matrix(_need(cfg, "box", path), f"{path}.box")
    if box_spec.ndim != 2 or box_spec.shape[1] != 2:
        _fail(f"{path}.box", "expected [[lo, hi], ...] per measurement dimension")
    box = Box(box_spec[:, 0], box_spec[:, 1])
    motion = _parse_motion(_need(cfg, "motion", path), f"{path}.motion")
    mm = _parse_measurement(_need(cfg, "measurement", path), f"{path}.measurement", motion.dim)
    if mm.meas_dim != box.dim:
        _fail(f"{path}.box", "box dimension must match the measurement dimension")
    pd = float(_need(cfg, "pd", path))
    if not 0.0 <= pd <= 1.0:
        _fail(f"{path}.pd", "detection probability out of range")
    lam = float(_need(cfg, "clutter", path).get("lambda", 0.0))
    if lam < 0:
        _fail(f"{path}.clutter.lambda", "must be non-negative")
    clutter = PoissonClutter(lam, UniformBoxDensity(box))
    targets = []
    for i, tc in enumerate(_need(cfg, "targets", path)):
        tpath = f"{path}.targets[{i}]"
        birth = int(tc.get("birth", 0))
        death = int(tc.get("death", duration))
        if not 0 <= birth < death <= duration:
            _fail(tpath, "requires 0 <= birth < death <= duration")
        targets.append(TargetSpec(birth, death, _parse_gaussian(tc, tpath)))
    if not targets:
        _fail(f"{path}.targets", "at least one target required")
    seed = int(seed_override if seed_override is not None else cfg.get("seed", 0))
    return Scenario(duration, targets, motion, mm, DetectionModel(pd), clutter, seed)


@dataclass
class RunConfig:
    scenario: Scenario
    scenario_cfg: dict
    filter_cfg: dict
    kind: str
    method: str
    method_params: dict
    out_dir: str
    seed: int


def parse_config(cfg: dict, seed_override=None, out_override=None, kind_override=None, method_override=None) -> RunConfig:
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    scen_cfg = _need(cfg, "scenario", "config")
    scenario = _parse_scenario(scen_cfg, "config.scenario", seed_override)
    fcfg = dict(_need(cfg, "filter", "config"))
    if kind_override:
        fcfg["kind"] = kind_override
    kind = _need(fcfg, "kind", "config.filter")
    if kind not in SUPPORTED_KINDS:
        _fail("config.filter.kind", f"unknown filter name {kind!r} (supported: {', '.join(SUPPORTED_KINDS)})")
    method = method_override or cfg.get("method", "ad")
    if method not in ("ad", "cauchy", "fd"):
        _fail("config.method", "must be one of ad, cauchy, fd")
    mp = dict(cfg.get("method_params", {}))
    for key, bound in (("radius", 0.0), ("nodes", 1.0), ("step", 0.0)):
        if key in mp and not float(mp[key]) > bound:
            _fail(f"config.method_params.{key}", "must be positive")
    allowed = {"ad": set(), "cauchy": {"radius", "nodes"}, "fd": {"step"}}[method]
    mp = {k: (int(v) if k == "nodes" else float(v)) for k, v in mp.items() if k in allowed}
    for i, chi in enumerate(fcfg.get("exist_probs", [])):
        if not 0.0 <= float(chi) <= 1.0:
            _fail(f"config.filter.exist_probs[{i}]", "existence probability out of range")
    if "survival" in fcfg and not 0.0 <= float(fcfg["survival"]) <= 1.0:
        _fail("config.filter.survival", "survival probability out of range")
    out_dir = out_override or cfg.get("out", "out")
    seed = int(seed_override if seed_override is not None else cfg.get("seed", scenario.seed))
    return RunConfig(scenario, scen_cfg, fcfg, kind, method, mp, out_dir, seed)


# ---------------------------------------------------------------------------
# Filter assembly
# ---------------------------------------------------------------------------


def _filter_config(rc: RunConfig) -> FilterConfig:
    scen = rc.scenario
    fcfg = rc.filter_cfg
    kw = dict(
        kind=rc.kind,
        motion=scen.motion,
        mm=scen.mm,
        det=scen.pd,
        clutter=scen.clutter,
        survival=float(fcfg.get("survival", 1.0)),
        gate_threshold=fcfg.get("gate_threshold"),
    )
    if rc.kind == "pmht":
        kw["rates"] = [float(r) for r in fcfg.get("rates", [1.0] * len(scen.targets))]
    if rc.kind in ("mht", "mb"):
        kw["gamma"] = fcfg.get("gamma", 0.05)
        if "birth_cov_diag" in fcfg:
            kw["birth_cov"] = np.diag(np.asarray(fcfg["birth_cov_diag"], dtype=float))
        kw["drop_threshold"] = float(fcfg.get("drop_threshold", 1e-3))
        kw["max_tracks"] = int(fcfg.get("max_tracks", 50))
        kw["confirm_threshold"] = float(fcfg.get("confirm_threshold", 0.5))
    if rc.kind == "respair":
        res = fcfg.get("resolution", {})
        kw["resolution"] = ResolutionModel(
            h1=scen.mm.H,
            h2=scen.mm.H,
            sigma=float(res.get("sigma", 1.0)) * np.eye(scen.mm.meas_dim),
            pd1=scen.pd.pd,
            pd2=scen.pd.pd,
        )
    if rc.kind == "cphd":
        kw["n_max"] = int(fcfg.get("n_max", 32))
    return FilterConfig(**kw)


def _initial_filter_state(rc: RunConfig, cfg: FilterConfig):
    scen = rc.scenario
    densities = [t.initial for t in scen.targets]
    kind = rc.kind
    if kind in ("bayes_markov", "pda", "jpda", "pmht", "respair"):
        return initial_state(cfg, densities=densities)
    if kind in ("ipda", "jipda", "mht", "mb"):
        chis = [float(c) for c in rc.filter_cfg.get("exist_probs", [0.9] * len(densities))]
        return initial_state(cfg, densities=densities, exist_probs=chis)
    if kind in ("phd", "cphd"):
        scale = float(rc.filter_cfg.get("initial_mass", float(len(densities))))
        weights = np.full(len(densities), scale / len(densities))
        return initial_state(cfg, intensity=GaussianMixture(weights, tuple(densities)))
    raise ConfigError(f"config.filter.kind: no initializer for {kind!r}")


def _birth_model(rc: RunConfig) -> BirthModel | None:
    bcfg = rc.filter_cfg.get("birth")
    if not bcfg:
        return None
    if rc.kind in ("phd", "cphd"):
        comps = [_parse_gaussian(c, f"config.filter.birth[{i}]") for i, c in enumerate(bcfg["components"])]
        weights = np.asarray(bcfg.get("weights", [0.1] * len(comps)), dtype=float)
        return BirthModel(intensity=GaussianMixture(weights, tuple(comps)))
    if rc.kind in ("ipda", "jipda", "mht", "mb"):
        pairs = [
            (float(c.get("existence", 0.05)), _parse_gaussian(c, f"config.filter.birth[{i}]"))
            for i, c in enumerate(bcfg["components"])
        ]
        return BirthModel(bernoulli=pairs)
    _fail("config.filter.birth", f"birth process unsupported for kind {rc.kind!r}")


def _scan_expression(rc: RunConfig, cfg: FilterConfig, state, measurements):
    from .filters import _spec_for_state

    if rc.kind == "respair":
        from .pgfl import FilterSpec

        return build_filter(
            FilterSpec(
                kind="respair",
                mm=cfg.mm,
                clutter=cfg.clutter,
                resolution=cfg.resolution,
                pair_priors=(state.tracks[0], state.tracks[1]),
            )
        )
    return build_filter(_spec_for_state(state, cfg, measurements))


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: str, header: list, rows: list):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_plot(path: str, scans, est_rows, state_dim: int):
    """Minimal static SVG: truth polylines plus estimate markers (dims 0, 1)."""
    pts = []
    for scan in scans.scans:
        for _, x in scan.truths:
            pts.append((x[0], x[1]))
    for _, _, vec, _ in est_rows:
        pts.append((vec[0], vec[1]))
    if not pts:
        lo = np.array([0.0, 0.0])
        hi = np.array([1.0, 1.0])
    else:
        arr = np.asarray(pts)
        lo, hi = arr.min(axis=0) - 1.0, arr.max(axis=0) + 1.0
    size = 640.0

    def sx(v):
        return (v - lo[0]) / max(hi[0] - lo[0], 1e-9) * (size - 40) + 20

    def sy(v):
        return size - ((v - lo[1]) / max(hi[1] - lo[1], 1e-9) * (size - 40) + 20)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(size)}" height="{int(size)}">',
        f'<rect width="{int(size)}" height="{int(size)}" fill="white"/>',
    ]
    tracks = {}
    for k, scan in enumerate(scans.scans):
        for tid, x in scan.truths:
            tracks.setdefault(tid, []).append((x[0], x[1]))
    for tid, path_pts in sorted(tracks.items()):
        d = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in path_pts)
        parts.append(f'<polyline points="{d}" fill="none" stroke="black" stroke-width="1.5"/>')
    for _, _, vec, _ in est_rows:
        parts.append(f'<circle cx="{sx(vec[0]):.2f}" cy="{sy(vec[1]):.2f}" r="2.5" fill="none" stroke="red"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _run_single(rc: RunConfig) -> dict:
    t_start = time.perf_counter()
    scen = rc.scenario
    data = simulate(scen)
    cfg = _filter_config(rc)
    state = _initial_filter_state(rc, cfg)
    birth = _birth_model(rc)

    expr0 = _scan_expression(rc, cfg, state, [])
    residual = abs(evaluate_secular(expr0, ones_context()) - 1.0)

    track_rows, est_rows, est_points = [], [], []
    t_predict = t_update = 0.0
    for k, scan in enumerate(data.scans):
        try:
            t0 = time.perf_counter()
            state = predict(state, cfg.motion, cfg.survival, birth)
            t_predict += time.perf_counter() - t0
            ys = [y for y, _ in scan.measurements]
            t0 = time.perf_counter()
            state, _stats = update(state, cfg, ys, method=rc.method, method_params=rc.method_params)
            t_update += time.perf_counter() - t0
        except (NumericalError, BudgetError) as e:
            raise NumericalError(f"scan {k}: {e}") from e
        scan_est = []
        for tid, (vec, weight) in enumerate(estimate(state, cfg)):
            track_rows.append((k, tid, vec, weight))
            est_rows.append((k, tid, vec, weight))
            scan_est.append(vec)
        est_points.append(scan_est)

    H = scen.mm.H
    rows, aggregate = run_metrics(data, est_points, cutoff=10.0, order=1.0, project=lambda v: H @ v)

    os.makedirs(rc.out_dir, exist_ok=True)
    state_dim = scen.motion.dim
    _write_csv(
        os.path.join(rc.out_dir, "tracks.csv"),
        ["scan", "track"] + [f"x{i}" for i in range(state_dim)] + ["weight"],
        [
            [str(k), str(tid)] + [_fmt(v) for v in vec] + [_fmt(w) if w is not None else ""]
            for k, tid, vec, w in track_rows
        ],
    )
    _write_csv(
        os.path.join(rc.out_dir, "measurements.csv"),
        ["scan"] + [f"y{i}" for i in range(scen.mm.meas_dim)] + ["origin"],
        [
            [str(k)] + [_fmt(v) for v in y] + [str(origin)]
            for k, scan in enumerate(data.scans)
            for y, origin in scan.measurements
        ],
    )
    _write_csv(
        os.path.join(rc.out_dir, "metrics.csv"),
        ["scan", "ospa", "card_err", "rmse"],
        [[str(r["scan"]), _fmt(r["ospa"]), _fmt(r["card_err"]), _fmt(r["rmse"])] for r in rows],
    )
    if state_dim >= 2:
        _write_plot(os.path.join(rc.out_dir, "plot.svg"), data, est_rows, state_dim)

    summary = {
        "filter": rc.kind,
        "method": rc.method,
        "method_params": rc.method_params,
        "seed": rc.seed,
        "config": {"scenario": rc.scenario_cfg, "filter": rc.filter_cfg},
        "normalization_residual": residual,
        "aggregate": aggregate,
        "timings": {
            "total_s": time.perf_counter() - t_start,
            "predict_s": t_predict,
            "update_s": t_update,
        },
        "diagnostics": _method_diagnostics(rc, cfg, data),
    }
    with open(os.path.join(rc.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _method_diagnostics(rc: RunConfig, cfg: FilterConfig, data) -> dict:
    """Cross-method agreement spot check on the first non-empty scan."""
    state = _initial_filter_state(rc, cfg)
    if rc.kind == "respair":
        return {}
    for scan in data.scans:
        ys = [y for y, _ in scan.measurements][:3]
        if not ys:
            continue
        from .filters import _spec_for_state, gate_measurements

        ys = gate_measurements(state, cfg, ys)
        if not ys:
            continue
        expr = build_filter(_spec_for_state(state, cfg, ys))
        from .pgfl import target_labels

        label = sorted(target_labels(expr))[0]
        x = np.asarray(_predage(state), dtype=float)
        try:
            ad = posterior_intensity(expr, ys, x, label, method="ad")
            ca = posterior_intensity(expr, ys, x, label, method="cauchy", radius=0.5, nodes=16)
            return {"intensity_ad": ad, "intensity_cauchy": ca, "abs_diff": abs(ad - ca)}
        except (NumericalError, BudgetError):
            return {}
    return {}


def _predage(state):
    from .filters import _predicted_densities

    return _predicted_densities(state)[0].mean


def cmd_run(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    seeds = [args.seed] if args.seed is not None else None
    if args.seeds:
        try:
            a, b = args.seeds.split("..")
            seeds = list(range(int(a), int(b) + 1))
        except ValueError:
            print("config error: --seeds expects A..B", file=sys.stderr)
            return EXIT_CONFIG

    try:
        configs = []
        if seeds is None:
            configs.append(parse_config(raw, out_override=args.out, kind_override=args.filter, method_override=args.method))
        else:
            for s in seeds:
                out = args.out or raw.get("out", "out")
                sub = out if len(seeds) == 1 else os.path.join(out, f"seed{s}")
                configs.append(
                    parse_config(raw, seed_override=s, out_override=sub, kind_override=args.filter, method_override=args.method)
                )
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    workers = int(os.environ.get("POINTILLIST_THREADS", "1"))
    try:
        if len(configs) > 1 and workers > 1:
            import multiprocessing as mp

            with mp.Pool(min(workers, len(configs))) as pool:
                summaries = pool.map(_run_single, configs)
        else:
            summaries = [_run_single(rc) for rc in configs]
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for s in summaries:
        print(f"{s['filter']}: seed {s['seed']} mean OSPA {s['aggregate']['ospa_mean']:.4f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        rc = parse_config(raw, kind_override=args.filter, method_override=args.method)
        cfg = _filter_config(rc)
        state = _initial_filter_state(rc, cfg)
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    expr = _scan_expression(rc, cfg, state, [])
    residual = abs(evaluate_secular(expr, ones_context()) - 1.0)
    if residual > 1e-9:
        print(f"numerical failure: built expression violates normalization by {residual:.3e}", file=sys.stderr)
        return EXIT_NUMERICAL
    normalized = {
        "scenario": rc.scenario_cfg,
        "filter": rc.filter_cfg,
        "method": rc.method,
        "method_params": rc.method_params,
        "seed": rc.seed,
        "out": rc.out_dir,
        "normalization_residual": residual,
    }
    print(json.dumps(normalized, indent=2, sort_keys=True))
    return EXIT_OK


DEMO_SCENARIO = {
    "duration": 50,
    "seed": 1,
    "box": [[-40.0, 40.0], [-40.0, 40.0]],
    "motion": {"model": "cv", "dims": 2, "dt": 1.0, "q": 0.02},
    "measurement": {"model": "position", "dims": 2, "r": 0.25},
    "pd": 0.92,
    "clutter": {"lambda": 2.0},
    "targets": [
        {"birth": 0, "death": 50, "mean": [-20.0, -15.0, 0.7, 0.55], "diag": [1.0, 1.0, 0.01, 0.01]},
        {"birth": 0, "death": 50, "mean": [20.0, -18.0, -0.75, 0.6], "diag": [1.0, 1.0, 0.01, 0.01]},
        {"birth": 0, "death": 50, "mean": [0.0, 18.0, 0.05, -0.65], "diag": [1.0, 1.0, 0.01, 0.01]},
    ],
}

DEMO_FILTERS = {
    "pda": {"kind": "pda", "gate_threshold": 25.0, "survival": 1.0},
    "jpda": {"kind": "jpda", "gate_threshold": 25.0, "survival": 1.0},
    "jipda": {"kind": "jipda", "gate_threshold": 25.0, "survival": 0.999, "exist_probs": [0.9, 0.9, 0.9]},
    "mht": {
        "kind": "mht",
        "gate_threshold": 25.0,
        "survival": 0.999,
        "exist_probs": [0.9, 0.9, 0.9],
        "gamma": 0.01,
        "birth_cov_diag": [1.0, 1.0, 0.25, 0.25],
        "drop_threshold": 0.01,
        "max_tracks": 20,
    },
    "phd": {"kind": "phd", "survival": 0.999, "gate_threshold": 25.0},
    "cphd": {"kind": "cphd", "survival": 0.999, "gate_threshold": 25.0, "n_max": 16},
    "mb": {
        "kind": "mb",
        "gate_threshold": 25.0,
        "survival": 0.999,
        "exist_probs": [0.9, 0.9, 0.9],
        "gamma": 0.01,
        "birth_cov_diag": [1.0, 1.0, 0.25, 0.25],
        "drop_threshold": 0.01,
        "max_tracks": 20,
    },
    "respair": {"kind": "respair", "resolution": {"sigma": 4.0}},
}

RESPAIR_SCENARIO = {
    "duration": 30,
    "seed": 5,
    "box": [[-30.0, 30.0]],
    "motion": {"F": [[1.0]], "Q": [[0.02]]},
    "measurement": {"H": [[1.0]], "R": [[0.3]]},
    "pd": 0.9,
    "clutter": {"lambda": 1.0},
    "targets": [
        {"birth": 0, "death": 30, "mean": [-2.0], "diag": [0.5]},
        {"birth": 0, "death": 30, "mean": [2.0], "diag": [0.5]},
    ],
}


def cmd_demo(args) -> int:
    out = args.out or "demo_configs"
    os.makedirs(out, exist_ok=True)
    for name, fcfg in DEMO_FILTERS.items():
        scen = RESPAIR_SCENARIO if name == "respair" else DEMO_SCENARIO
        if name == "pda":
            scen = dict(scen)
            scen["targets"] = [DEMO_SCENARIO["targets"][0]]
        cfg = {
            "scenario": scen,
            "filter": fcfg,
            "method": "ad",
            "seed": scen["seed"],
            "out": os.path.join(out, f"{name}_results"),
        }
        path = os.path.join(out, f"{name}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pointillist", description="Generating-functional multitarget tracking toolbox"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a filter over a simulated scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--filter", choices=SUPPORTED_KINDS)
    p_run.add_argument("--method", choices=("ad", "cauchy", "fd"))
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--seeds", help="inclusive range A..B of scenario seeds")
    p_run.add_argument("--out")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a configuration file")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--filter", choices=SUPPORTED_KINDS)
    p_val.add_argument("--method", choices=("ad", "cauchy", "fd"))
    p_val.set_defaults(func=cmd_validate)

    p_demo = sub.add_parser("demo", help="write bundled example configurations")
    p_demo.add_argument("--out")
    p_demo.set_defaults(func=cmd_demo)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
