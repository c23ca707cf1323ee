"""Tests for clutter models, their functional evaluation and samplers."""

import math

import numpy as np
import pytest

from pointillist.clutter import (
    Box,
    ClusterClutter,
    PoissonClutter,
    TruncatedGaussianDensity,
    UniformBoxDensity,
    clutter_secular_eval,
    sample_clutter,
)
from pointillist.gaussmath import GaussianDensity


def unit_box(dim=1, half=10.0):
    return Box(-half * np.ones(dim), half * np.ones(dim))


def test_normalization_no_weights():
    c = PoissonClutter(2.5, UniformBoxDensity(unit_box()))
    assert clutter_secular_eval(c, 1.0, []) == pytest.approx(1.0, rel=1e-12)
    cc = ClusterClutter((0.2, 0.5, 0.3), UniformBoxDensity(unit_box()))
    assert clutter_secular_eval(cc, 1.0, []) == pytest.approx(1.0, rel=1e-12)


def test_void_probability():
    c = PoissonClutter(3.0, UniformBoxDensity(unit_box()))
    assert clutter_secular_eval(c, 0.0, []) == pytest.approx(math.exp(-3.0), rel=1e-12)


def test_poisson_single_delta_value():
    # lambda = 2, p(y1) = 0.25, alpha = 1: exp(-2 + 2 * 0.25) = exp(-1.5).
    box = Box([-2.0], [2.0])  # uniform density 1/4 = 0.25
    c = PoissonClutter(2.0, UniformBoxDensity(box))
    val = clutter_secular_eval(c, 0.0, [(np.array([0.3]), 1.0)])
    assert val == pytest.approx(math.exp(-1.5), rel=1e-12)


def test_monte_carlo_functional_cross_check():
    # For g(y) = c on A and 1 elsewhere, E[prod g(y_i)] = exp(-Lambda_A (1 - c)).
    rng = np.random.default_rng(99)
    box = Box([-2.0], [2.0])
    c = PoissonClutter(2.0, UniformBoxDensity(box))
    a_lo, a_hi, g_val = -1.0, 0.0, 0.35
    trials = 20000
    prods = np.empty(trials)
    for t in range(trials):
        pts = sample_clutter(c, rng)
        k = sum(1 for y in pts if a_lo <= y[0] <= a_hi)
        prods[t] = g_val**k
    lam_a = 2.0 * 0.25  # Lambda * mass of A under uniform density
    expected = math.exp(-lam_a * (1.0 - g_val))
    se = prods.std(ddof=1) / math.sqrt(trials)
    assert abs(prods.mean() - expected) < 4.0 * se + 1e-4


def test_poisson_is_cluster_special_case():
    lam = 1.5
    kmax = int(12 * lam)
    probs = np.array([math.exp(-lam) * lam**k / math.factorial(k) for k in range(kmax + 1)])
    probs = probs / probs.sum()
    box = Box([-5.0], [5.0])
    pois = PoissonClutter(lam, UniformBoxDensity(box))
    clus = ClusterClutter(tuple(probs), UniformBoxDensity(box))
    for base in (0.0, 1.0):
        for weights in ([], [(np.array([0.5]), 0.7)], [(np.array([0.5]), 0.4), (np.array([-1.0]), 0.2)]):
            a = clutter_secular_eval(pois, base, weights)
            b = clutter_secular_eval(clus, base, weights)
            assert a == pytest.approx(b, rel=1e-10)


def test_sampler_zero_rate():
    c = PoissonClutter(0.0, UniformBoxDensity(unit_box()))
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert sample_clutter(c, rng) == []


def test_sampler_degenerate_cardinality():
    cc = ClusterClutter((0.0, 0.0, 0.0, 1.0), UniformBoxDensity(unit_box(2)))
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert len(sample_clutter(cc, rng)) == 3


def test_sampler_mean_count_clt():
    c = PoissonClutter(5.0, UniformBoxDensity(unit_box()))
    rng = np.random.default_rng(42)
    counts = [len(sample_clutter(c, rng)) for _ in range(100000)]
    # 3 sigma for Poisson(5)/sqrt(1e5) is ~0.021; allow the stated 0.05.
    assert abs(np.mean(counts) - 5.0) < 0.05


def test_gated_poisson_restriction_statistics():
    # Restricting to a subregion gives Poisson counts with mean = Lambda * mass.
    rng = np.random.default_rng(7)
    box = Box([-2.0, -2.0], [2.0, 2.0])
    c = PoissonClutter(4.0, UniformBoxDensity(box))
    indicator = lambda y: y[0] > 0.0 and y[1] > 0.0
    mass = c.spatial.mass_on(indicator)
    assert mass == pytest.approx(0.25, abs=1e-3)
    counts = [sum(1 for y in sample_clutter(c, rng) if indicator(y)) for _ in range(30000)]
    mean = np.mean(counts)
    var = np.var(counts)
    assert mean == pytest.approx(4.0 * mass, abs=0.05)
    assert var == pytest.approx(4.0 * mass, abs=0.1)  # Poisson: variance = mean


def test_truncated_gaussian_density_normalizes():
    box = Box([-3.0], [3.0])
    d = TruncatedGaussianDensity(GaussianDensity([0.5], [[1.0]]), box)
    xs = np.linspace(-3, 3, 4001)
    mass = np.trapezoid([d.pdf([x]) for x in xs], xs)
    assert mass == pytest.approx(1.0, abs=2e-3)
    assert d.pdf([4.0]) == 0.0


def test_truncated_gaussian_mass_on_region():
    box = Box([-4.0], [4.0])
    d = TruncatedGaussianDensity(GaussianDensity([0.0], [[1.0]]), box)
    m = d.mass_on(lambda y: y[0] > 0.0)
    assert m == pytest.approx(0.5, abs=2e-3)
