"""Tests for the configuration-driven runner."""

import json
import os

import numpy as np
import pytest

from pointillist import cli


def small_config(tmp_path, kind="jpda", duration=6, lam=0.5, method="ad", seed=3):
    cfg = {
        "scenario": {
            "duration": duration,
            "seed": seed,
            "box": [[-25.0, 25.0], [-25.0, 25.0]],
            "motion": {"model": "cv", "dims": 2, "dt": 1.0, "q": 0.01},
            "measurement": {"model": "position", "dims": 2, "r": 0.25},
            "pd": 0.95,
            "clutter": {"lambda": lam},
            "targets": [
                {"birth": 0, "death": duration, "mean": [-6.0, -4.0, 0.4, 0.3], "diag": [1.0, 1.0, 0.01, 0.01]},
                {"birth": 0, "death": duration, "mean": [6.0, 4.0, -0.4, -0.3], "diag": [1.0, 1.0, 0.01, 0.01]},
            ],
        },
        "filter": {"kind": kind, "gate_threshold": 16.0},
        "method": method,
        "seed": seed,
        "out": str(tmp_path / "out"),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def test_run_writes_all_outputs(tmp_path):
    path, cfg = small_config(tmp_path)
    assert cli.main(["run", "--config", str(path)]) == 0
    out = tmp_path / "out"
    for name in ("tracks.csv", "measurements.csv", "metrics.csv", "summary.json", "plot.svg"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["normalization_residual"] <= 1e-12
    assert "ospa_mean" in summary["aggregate"]
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "scan,ospa,card_err,rmse"


def test_unknown_filter_name_exit_two(tmp_path, capsys):
    path, cfg = small_config(tmp_path)
    raw = json.loads(path.read_text())
    raw["filter"]["kind"] = "frobnicator"
    path.write_text(json.dumps(raw))
    assert cli.main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "config.filter.kind" in err


def test_same_config_and_seed_identical_bytes(tmp_path):
    path, _ = small_config(tmp_path)
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
    for name in ("tracks.csv", "measurements.csv", "metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_method_ad_vs_cauchy_metrics_agree(tmp_path):
    path, _ = small_config(tmp_path, duration=5, lam=0.3)
    assert cli.main(["run", "--config", str(path), "--method", "ad", "--out", str(tmp_path / "ad")]) == 0
    assert cli.main(["run", "--config", str(path), "--method", "cauchy", "--out", str(tmp_path / "ca")]) == 0
    a = np.genfromtxt(tmp_path / "ad" / "metrics.csv", delimiter=",", names=True)
    c = np.genfromtxt(tmp_path / "ca" / "metrics.csv", delimiter=",", names=True)
    for col in ("ospa", "card_err"):
        np.testing.assert_allclose(a[col], c[col], atol=1e-6)


def test_seeds_fanout_and_worker_determinism(tmp_path, monkeypatch):
    path, _ = small_config(tmp_path, duration=4)
    monkeypatch.setenv("POINTILLIST_THREADS", "1")
    assert cli.main(["run", "--config", str(path), "--seeds", "1..2", "--out", str(tmp_path / "w1")]) == 0
    monkeypatch.setenv("POINTILLIST_THREADS", "4")
    assert cli.main(["run", "--config", str(path), "--seeds", "1..2", "--out", str(tmp_path / "w4")]) == 0
    for seed in ("seed1", "seed2"):
        for name in ("tracks.csv", "measurements.csv", "metrics.csv"):
            assert (tmp_path / "w1" / seed / name).read_bytes() == (tmp_path / "w4" / seed / name).read_bytes()


def test_validate_ok_prints_normalized_config(tmp_path, capsys):
    path, _ = small_config(tmp_path)
    assert cli.main(["validate", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    parsed = json.loads(out)
    assert parsed["filter"]["kind"] == "jpda"
    assert parsed["normalization_residual"] <= 1e-9


def test_validate_rejects_bad_existence(tmp_path, capsys):
    path, _ = small_config(tmp_path, kind="jipda")
    raw = json.loads(path.read_text())
    raw["filter"]["exist_probs"] = [1.3, 0.5]
    path.write_text(json.dumps(raw))
    assert cli.main(["validate", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "existence probability out of range" in err
    assert "exist_probs[0]" in err


def test_validate_normalization_failure_exit_three(tmp_path, capsys, monkeypatch):
    # Injected-bug regression fixture: force the built expression to violate
    # normalization and check the diagnostic exit path.
    from pointillist.pgfl import ClusterWrap, BmdAtom
    from pointillist.detection import DetectionModel
    from pointillist.gaussmath import GaussianDensity
    import numpy as np

    path, _ = small_config(tmp_path)

    def broken_expression(rc, cfg, state, measurements):
        atom = BmdAtom("t0", GaussianDensity(np.zeros(4), np.eye(4)), DetectionModel(0.5), cfg.mm, None)
        return ClusterWrap((0.5, 0.3), atom)  # deficient count vector, bypassing the combinator

    monkeypatch.setattr(cli, "_scan_expression", broken_expression)
    assert cli.main(["validate", "--config", str(path)]) == 3
    assert "normalization" in capsys.readouterr().err


def test_demo_writes_configs(tmp_path):
    assert cli.main(["demo", "--out", str(tmp_path / "demos")]) == 0
    names = sorted(p.name for p in (tmp_path / "demos").glob("*.json"))
    assert {"pda.json", "jpda.json", "jipda.json", "mht.json", "phd.json", "cphd.json", "mb.json", "respair.json"} <= set(names)
    for p in (tmp_path / "demos").glob("*.json"):
        assert cli.main(["validate", "--config", str(p)]) == 0


def test_run_missing_config_file(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert "config error" in capsys.readouterr().err
