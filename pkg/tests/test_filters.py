"""Tests for the recursive filter layer."""

import math

import numpy as np
import pytest

from pointillist.clutter import Box, PoissonClutter, UniformBoxDensity
from pointillist.detection import DetectionModel, ResolutionModel
from pointillist.gaussmath import (
    GaussianDensity,
    GaussianMixture,
    MeasurementModel,
    MotionModel,
    kalman_update,
)
from pointillist.filters import (
    BernoulliTrack,
    BirthModel,
    FilterConfig,
    FilterState,
    estimate,
    initial_state,
    mixture_reduce,
    predict,
    unresolved_pair_step,
    update,
)
from pointillist.oracle import oracle_from_spec, respair_oracle
from pointillist.pgfl import FilterSpec

BOX = Box([-25.0, -25.0], [25.0, 25.0])
BOX1 = Box([-20.0], [20.0])
MM2 = MeasurementModel(np.eye(2), 0.5 * np.eye(2))
MM1 = MeasurementModel([[1.0]], [[0.4]])
MOTION2 = MotionModel(np.eye(2), 0.01 * np.eye(2))


def clutter2(lam):
    return PoissonClutter(lam, UniformBoxDensity(BOX))


def config(kind, **kw):
    base = dict(motion=MOTION2, mm=MM2, det=DetectionModel(0.9), clutter=clutter2(1.0))
    base.update(kw)
    return FilterConfig(kind=kind, **base)


def gd(mean, var=1.0):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return GaussianDensity(mean, var * np.eye(len(mean)))


class TestPredict:
    def test_identity_dynamics_no_change(self):
        cfg = config("jpda", motion=MotionModel(np.eye(2), np.zeros((2, 2))))
        state = initial_state(cfg, densities=[gd([1.0, 2.0])])
        out = predict(state, cfg.motion, survival=1.0)
        np.testing.assert_allclose(out.tracks[0].mean, [1.0, 2.0])
        np.testing.assert_allclose(out.tracks[0].cov, np.eye(2))

    def test_phd_mass_arithmetic(self):
        cfg = config("phd")
        mix = GaussianMixture([3.0], (gd([0.0, 0.0]),))
        state = initial_state(cfg, intensity=mix)
        birth = BirthModel(intensity=GaussianMixture([0.5], (gd([2.0, 2.0]),)))
        out = predict(state, cfg.motion, survival=0.9, birth=birth)
        assert out.intensity.mass == pytest.approx(3.0 * 0.9 + 0.5, rel=1e-12)

    def test_existence_propagation(self):
        cfg = config("jipda")
        state = initial_state(cfg, densities=[gd([0.0, 0.0])], exist_probs=[0.8])
        out = predict(state, cfg.motion, survival=0.95)
        assert out.bernoulli[0].existence == pytest.approx(0.76, rel=1e-12)

    def test_fixed_kind_rejects_birth(self):
        cfg = config("jpda")
        state = initial_state(cfg, densities=[gd([0.0, 0.0])])
        with pytest.raises(ValueError):
            predict(state, cfg.motion, 1.0, BirthModel(bernoulli=[(0.1, gd([0.0, 0.0]))]))


class TestUpdate:
    def test_bayes_markov_is_kalman(self):
        cfg = FilterConfig(kind="bayes_markov", motion=MOTION2, mm=MM2)
        prior = gd([0.0, 0.0], 1.0)
        state = initial_state(cfg, densities=[prior])
        y = np.array([1.0, -0.5])
        out, _ = update(state, cfg, [y])
        ref = kalman_update(prior, MM2, y)
        np.testing.assert_allclose(out.tracks[0].mean, ref.mean, rtol=1e-10)
        np.testing.assert_allclose(out.tracks[0].cov, ref.cov, rtol=1e-10)

    def test_pda_mixture_mean_from_oracle_weights(self):
        pd, lam = 0.8, 1.5
        prior = gd([0.0, 0.0], 1.0)
        cfg = config("pda", det=DetectionModel(pd), clutter=clutter2(lam))
        state = initial_state(cfg, densities=[prior])
        y = np.array([1.2, 0.8])
        out, _ = update(state, cfg, [y])
        spec = FilterSpec(kind="pda", mm=MM2, targets=[prior], det=DetectionModel(pd), clutter=clutter2(lam))
        res = oracle_from_spec(spec, [y])
        b_miss = res.association[("t0", "miss")]
        b_assoc = res.association[("t0", ("assoc", 0))]
        upd = kalman_update(prior, MM2, y)
        expected_mean = b_miss * prior.mean + b_assoc * upd.mean
        np.testing.assert_allclose(out.tracks[0].mean, expected_mean, rtol=1e-9)

    def test_phd_empty_scan_scales_by_miss_probability(self):
        pd = 0.85
        cfg = config("phd", det=DetectionModel(pd))
        mix = GaussianMixture([1.5, 0.5], (gd([0.0, 0.0]), gd([4.0, 4.0])))
        state = initial_state(cfg, intensity=mix)
        out, _ = update(state, cfg, [])
        assert out.intensity.mass == pytest.approx((1 - pd) * 2.0, rel=1e-9)
        x = np.array([0.3, 0.0])
        assert out.intensity.intensity(x) == pytest.approx((1 - pd) * mix.intensity(x), rel=1e-6)

    def test_jipda_update_matches_oracle_tracks(self):
        rng = np.random.default_rng(77)
        for _ in range(6):
            n = int(rng.integers(1, 3))
            densities = [gd(rng.uniform(-4, 4, 2), float(rng.uniform(0.5, 2))) for _ in range(n)]
            chis = [float(rng.uniform(0.3, 0.95)) for _ in range(n)]
            pd = float(rng.uniform(0.5, 0.95))
            lam = float(rng.uniform(0.3, 2.0))
            cfg = config("jipda", det=DetectionModel(pd), clutter=clutter2(lam))
            state = initial_state(cfg, densities=densities, exist_probs=chis)
            m = int(rng.integers(0, 4))
            ys = [rng.uniform(-5, 5, 2) for _ in range(m)]
            out, _ = update(state, cfg, ys)
            spec = FilterSpec(
                kind="jipda", mm=MM2, targets=densities, det=DetectionModel(pd),
                clutter=clutter2(lam), exist_probs=chis,
            )
            res = oracle_from_spec(spec, ys)
            for t, trk in enumerate(out.bernoulli):
                chi_ref, mean_ref, cov_ref = res.track_posterior(f"t{t}")
                assert trk.existence == pytest.approx(chi_ref, rel=1e-9)
                np.testing.assert_allclose(trk.density.mean, mean_ref, rtol=1e-8, atol=1e-10)
                np.testing.assert_allclose(trk.density.cov, cov_ref, rtol=1e-8, atol=1e-10)

    def test_mb_equals_mht_components(self):
        rng = np.random.default_rng(5)
        densities = [gd([-2.0, 0.0]), gd([3.0, 1.0])]
        chis = [0.7, 0.9]
        ys = [rng.uniform(-4, 4, 2) for _ in range(2)]
        kw = dict(det=DetectionModel(0.85), clutter=clutter2(1.0), gamma=0.1, birth_cov=4.0 * np.eye(2))
        cfg_mht = config("mht", **kw)
        cfg_mb = config("mb", **kw)
        s1 = initial_state(cfg_mht, densities=densities, exist_probs=chis)
        s2 = initial_state(cfg_mb, densities=densities, exist_probs=chis)
        o1, _ = update(s1, cfg_mht, ys)
        o2, _ = update(s2, cfg_mb, ys)
        assert len(o1.bernoulli) == len(o2.bernoulli)
        for a, b in zip(o1.bernoulli, o2.bernoulli):
            assert a.existence == pytest.approx(b.existence, rel=1e-12)
            np.testing.assert_allclose(a.density.mean, b.density.mean, rtol=1e-12)

    def test_pmht_weights_are_normalized_and_posterior_matches_single_target_bayes(self):
        # One target, one measurement: the Poisson-count posterior over subsets
        # must normalize, and the density must be a weighted Bayes combination.
        prior = gd([0.0, 0.0], 1.0)
        cfg = config("pmht", rates=[0.5], clutter=None, det=None)
        state = initial_state(cfg, densities=[prior])
        y = np.array([0.6, -0.4])
        out, _ = update(state, cfg, [y])
        assert out.tracks[0].cov[0, 0] < prior.cov[0, 0]  # some information gained


class TestReduceAndEstimate:
    def test_single_component_unchanged(self):
        mix = GaussianMixture([0.7], (gd([0.0, 0.0]),))
        out, dropped = mixture_reduce(mix, 1e-5, 4.0, 10)
        assert dropped == 0.0
        assert out.mass == pytest.approx(0.7)

    def test_identical_pair_merges(self):
        d = gd([1.0, 1.0])
        mix = GaussianMixture([0.4, 0.4], (d, d))
        out, dropped = mixture_reduce(mix, 1e-5, 4.0, 10)
        assert len(out.components) == 1
        assert out.weights[0] == pytest.approx(0.8)
        np.testing.assert_allclose(out.components[0].mean, d.mean)
        np.testing.assert_allclose(out.components[0].cov, d.cov)

    def test_mass_bookkeeping(self):
        mix = GaussianMixture([0.5, 1e-7, 0.3], (gd([0.0, 0.0]), gd([5.0, 5.0]), gd([9.0, 9.0])))
        out, dropped = mixture_reduce(mix, 1e-5, 4.0, 10)
        assert mix.mass - out.mass == pytest.approx(dropped, rel=1e-12)

    def test_estimate_jipda_empty_when_all_dead(self):
        cfg = config("jipda")
        state = FilterState("jipda", bernoulli=[BernoulliTrack(0.0, gd([0.0, 0.0]), 0)])
        assert estimate(state, cfg) == []

    def test_estimate_phd_pseudo_map(self):
        mix = GaussianMixture([1.1, 0.9, 0.05], (gd([0.0, 0.0]), gd([5.0, 0.0]), gd([9.0, 9.0])))
        state = FilterState("phd", intensity=mix)
        est = estimate(state)
        assert len(est) == 2
        means = sorted(float(e[0][0]) for e in est)
        assert means == pytest.approx([0.0, 5.0])

    def test_estimate_fixed_count(self):
        cfg = config("jpda")
        state = initial_state(cfg, densities=[gd([0.0, 0.0]), gd([1.0, 1.0]), gd([2.0, 2.0])])
        assert len(estimate(state, cfg)) == 3


class TestReductionIdentities:
    def test_ipda_chi_one_equals_pda(self):
        rng = np.random.default_rng(9)
        prior = gd([0.5, -0.5], 1.2)
        ys = [rng.uniform(-3, 3, 2) for _ in range(3)]
        cfg_p = config("pda", det=DetectionModel(0.8), clutter=clutter2(1.0))
        cfg_i = config("ipda", det=DetectionModel(0.8), clutter=clutter2(1.0))
        sp = initial_state(cfg_p, densities=[prior])
        si = initial_state(cfg_i, densities=[prior], exist_probs=[1.0])
        op, _ = update(sp, cfg_p, ys)
        oi, _ = update(si, cfg_i, ys)
        assert oi.bernoulli[0].existence == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(oi.bernoulli[0].density.mean, op.tracks[0].mean, rtol=1e-9)
        np.testing.assert_allclose(oi.bernoulli[0].density.cov, op.tracks[0].cov, rtol=1e-9)

    def test_pda_no_clutter_certain_detection_is_kalman(self):
        prior = gd([0.0, 0.0])
        cfg = config("pda", det=DetectionModel(1.0), clutter=clutter2(1e-12))
        state = initial_state(cfg, densities=[prior])
        y = np.array([0.8, 0.2])
        out, _ = update(state, cfg, [y])
        ref = kalman_update(prior, MM2, y)
        np.testing.assert_allclose(out.tracks[0].mean, ref.mean, rtol=1e-9)
        np.testing.assert_allclose(out.tracks[0].cov, ref.cov, rtol=1e-9)

    def test_gated_whole_space_equals_ungated(self):
        rng = np.random.default_rng(33)
        densities = [gd([-1.0, 0.0]), gd([2.0, 2.0])]
        ys = [rng.uniform(-4, 4, 2) for _ in range(3)]
        cfg_u = config("jpda")
        cfg_g = config("jpda", gate_threshold=1e9)
        su = initial_state(cfg_u, densities=densities)
        sg = initial_state(cfg_g, densities=densities)
        ou, _ = update(su, cfg_u, ys)
        og, _ = update(sg, cfg_g, ys)
        for a, b in zip(ou.tracks, og.tracks):
            np.testing.assert_allclose(a.mean, b.mean, rtol=1e-9)
            np.testing.assert_allclose(a.cov, b.cov, rtol=1e-9)


class TestUnresolvedPair:
    RM0 = ResolutionModel(h1=[[1.0]], h2=[[1.0]], sigma=[[1e-12]], pd1=0.8, pd2=0.7)

    def clut(self, lam=1.0):
        return PoissonClutter(lam, UniformBoxDensity(BOX1))

    def test_resolved_limit_equals_jpda(self):
        # A vanishing resolution scale makes the kernel numerically zero for
        # separated targets: the pair step must match a two-target update with
        # per-target detection probabilities.
        d1, d2 = gd([-3.0]), gd([3.0])
        ys = [np.array([-2.6]), np.array([2.5])]
        n1, n2, _ = unresolved_pair_step(d1, d2, self.RM0, MM1, self.clut(), ys)

        from pointillist.secular import association_weights
        from pointillist.pgfl import BmdAtom, ClutterAtom, compose_product

        expr = compose_product(
            [
                ClutterAtom(self.clut()),
                BmdAtom("t0", d1, DetectionModel(0.8), MM1, None),
                BmdAtom("t1", d2, DetectionModel(0.7), MM1, None),
            ]
        )
        from pointillist.gaussmath import moment_match

        for label, prior, matched in (("t0", d1, n1), ("t1", d2, n2)):
            w = association_weights(expr, ys, label)
            ws, ms, cs = [w[(label, "miss")]], [prior.mean], [prior.cov]
            for i, y in enumerate(ys):
                upd = kalman_update(prior, MM1, y)
                ws.append(w[(label, "assoc", i)])
                ms.append(upd.mean)
                cs.append(upd.cov)
            _, ref = moment_match(ws, ms, cs)
            np.testing.assert_allclose(matched.mean, ref.mean, rtol=1e-9)
            np.testing.assert_allclose(matched.cov, ref.cov, rtol=1e-9)

    def test_unresolved_limit_forbids_double_assignment(self):
        rm = ResolutionModel(h1=[[1.0]], h2=[[1.0]], sigma=[[1e14]], pd1=0.9, pd2=0.9)
        d1, d2 = gd([-0.2]), gd([0.2])
        ys = [np.array([-0.1]), np.array([0.3])]
        _, _, stats = unresolved_pair_step(d1, d2, rm, MM1, self.clut(), ys)
        branches = stats.moments["branches"]
        pair_mass = sum(v for k, v in branches.items() if k[0] == "pair")
        assert pair_mass == pytest.approx(0.0, abs=1e-9)

    def test_mid_resolution_matches_quadrature_oracle(self):
        d1, d2 = gd([-1.0], 0.8), gd([1.2], 0.6)
        rm = ResolutionModel(h1=[[1.0]], h2=[[1.0]], sigma=[[4.0]], pd1=0.85, pd2=0.7)
        clut = self.clut(1.0)
        ys = [np.array([0.1]), np.array([-2.0])]
        n1, n2, stats = unresolved_pair_step(d1, d2, rm, MM1, clut, ys)
        oracle = respair_oracle(d1, d2, rm, MM1, clut, ys, grid_half=12.0, grid_n=2401)
        xs = np.linspace(-11, 13, 2401)
        for label, matched in (("t0", n1), ("t1", n2)):
            dens = np.array([oracle["intensity"](label, x) for x in xs])
            mass = np.trapezoid(dens, xs)
            mean = np.trapezoid(xs * dens, xs) / mass
            var = np.trapezoid((xs - mean) ** 2 * dens, xs) / mass
            assert mass == pytest.approx(1.0, abs=1e-6)
            assert matched.mean[0] == pytest.approx(mean, abs=2e-6)
            assert matched.cov[0, 0] == pytest.approx(var, abs=5e-6)
