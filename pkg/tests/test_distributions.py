import math

import numpy as np
import pytest
from scipy import special, stats

from maxdater.distributions import (
    Deterministic,
    DeterministicArrivals,
    Exponential,
    Lognormal,
    Pareto,
    RenewalArrivals,
    RngStream,
    Weibull,
    arrivals_from_config,
    arrivals_to_config,
    dist_from_config,
    dist_to_config,
    is_subexponential_family,
    normal_ppf,
    normal_tail,
)
from maxdater.distributions import _integrate_tail

ALL_DISTS = [
    Pareto(2.5, 1.0),
    Pareto(3.5, 0.25),
    Weibull(0.5, 1.3),
    Lognormal(-0.3, 0.9),
    Exponential(1.7),
    Deterministic(2.0),
]


# -- sampling / quantiles ----------------------------------------------------

def test_pareto_quantile_midpoint():
    # inverting the survival function at one half
    assert math.isclose(Pareto(2.5, 1.0).quantile(0.5), 0.5 ** (-1.0 / 2.5),
                        rel_tol=1e-12)


def test_deterministic_sample_is_point_mass():
    d = Deterministic(2.0)
    assert d.sample(RngStream(1, 2)) == 2.0
    assert np.all(d.sample(RngStream(3, 4), size=10) == 2.0)


def test_exponential_quantile_small_u_tends_to_zero():
    d = Exponential(1.0)
    assert d.quantile(1e-12) < 1e-11
    assert d.quantile(1e-300) > 0.0


def test_quantile_monotone_in_uniform():
    us = np.linspace(0.01, 0.99, 50)
    for dist in ALL_DISTS:
        q = np.asarray(dist.quantile(us))
        assert np.all(np.diff(q) >= 0.0)


# -- tails --------------------------------------------------------------------

def test_pareto_tail_value():
    assert math.isclose(Pareto(2.5, 1.0).tail(2.0), 2.0 ** -2.5, rel_tol=1e-14)


def test_tail_is_one_below_support():
    for dist in ALL_DISTS:
        assert dist.tail(-0.5) == 1.0


def test_deterministic_tail_past_value():
    assert Deterministic(2.0).tail(3.0) == 0.0
    assert Deterministic(2.0).tail(1.9) == 1.0


def test_tail_monotone_and_vanishing():
    xs = np.geomspace(0.01, 1e6, 200)
    for dist in ALL_DISTS:
        t = np.asarray([dist.tail(float(x)) for x in xs])
        assert np.all(np.diff(t) <= 1e-15)
        assert t[-1] < 1e-6


# -- integrated tails ----------------------------------------------------------

def test_pareto_integrated_tail_closed_form():
    # direct integral of t^(-2.5) from 4 to infinity is 4^(-1.5)/1.5
    assert math.isclose(Pareto(2.5, 1.0).integrated_tail(4.0),
                        min(1.0, 4.0 ** -1.5 / 1.5), rel_tol=1e-14)


def test_integrated_tail_at_infinity():
    for dist in ALL_DISTS:
        assert dist.integrated_tail(math.inf) == 0.0


def test_exponential_integrated_tail_at_zero():
    assert Exponential(1.0).integrated_tail(0.0) == 1.0


def test_integrated_tail_at_zero_is_capped_mean():
    for dist in ALL_DISTS:
        assert math.isclose(dist.integrated_tail(0.0), min(1.0, dist.mean()),
                            rel_tol=1e-8)


def test_integrated_tail_monotone():
    xs = np.linspace(0.0, 50.0, 120)
    for dist in ALL_DISTS:
        v = [dist.integrated_tail(float(x)) for x in xs]
        assert all(v[i + 1] <= v[i] + 1e-12 for i in range(len(v) - 1))


@pytest.mark.parametrize("dist", [Pareto(2.5, 1.0), Exponential(1.7)])
def test_quadrature_matches_closed_form(dist):
    xm = getattr(dist, "xm", 1.0)
    for x in [0.5 * xm] + [xm * 2 ** k for k in range(11)]:
        numeric = min(1.0, _integrate_tail(lambda u: float(dist.tail(u)), float(x)))
        exact = dist.integrated_tail(float(x))
        if exact < 1e-290:  # both sides underflow together
            assert numeric < 1e-290
        else:
            assert math.isclose(numeric, exact, rel_tol=1e-6)


def test_weibull_integrated_tail_against_incomplete_gamma():
    d = Weibull(0.5, 1.3)
    for x in (0.7, 3.0, 12.0, 40.0):
        exact = (d.scale / d.shape) * special.gamma(1.0 / d.shape) * \
            special.gammaincc(1.0 / d.shape, (x / d.scale) ** d.shape)
        assert math.isclose(d.integrated_tail(x), min(1.0, exact), rel_tol=1e-7)


def test_lognormal_integrated_tail_against_stop_loss():
    d = Lognormal(-0.3, 0.9)
    for x in (1.0, 5.0, 40.0):
        z = (math.log(x) - d.mu) / d.sigma
        exact = d.mean() * stats.norm.cdf(d.sigma - z) - x * stats.norm.sf(z)
        assert math.isclose(d.integrated_tail(x), min(1.0, exact), rel_tol=1e-7)


# -- moments -------------------------------------------------------------------

def test_means():
    assert math.isclose(Pareto(2.5, 1.0).mean(), 2.5 / 1.5, rel_tol=1e-14)
    assert math.isclose(Weibull(0.5, 1.3).mean(), 1.3 * math.gamma(3.0), rel_tol=1e-14)
    assert math.isclose(Exponential(1.7).mean(), 1 / 1.7, rel_tol=1e-14)
    assert Deterministic(2.0).mean() == 2.0


def test_pareto_with_mean():
    d = Pareto.with_mean(2.5, 0.5)
    assert math.isclose(d.mean(), 0.5, rel_tol=1e-14)
    assert math.isclose(d.xm, 0.3, rel_tol=1e-14)


def test_variances():
    assert Pareto(2.0, 1.0).variance() == math.inf
    assert math.isclose(Exponential(2.0).variance(), 0.25, rel_tol=1e-14)
    assert Deterministic(5.0).variance() == 0.0
    # empirical cross-check for the lognormal
    d = Lognormal(-0.3, 0.9)
    x = d.quantile(np.random.default_rng(0).random(400_000))
    assert math.isclose(float(np.var(x)), d.variance(), rel_tol=0.05)


# -- empirical sampler consistency ----------------------------------------------

def test_sampler_matches_tail_pareto():
    d = Pareto(2.5, 1.0)
    gen = RngStream(2024, 0).generator()
    x = np.asarray(d.quantile(gen.random(1_000_000)))
    for q in np.geomspace(1.2, 40.0, 10):
        p = d.tail(float(q))
        se = math.sqrt(p * (1 - p) / len(x))
        assert abs((x > q).mean() - p) <= 3.0 * se + 1e-12


def test_sampler_matches_tail_lognormal():
    d = Lognormal(-0.3, 0.9)
    gen = RngStream(2025, 0).generator()
    x = np.asarray(d.quantile(gen.random(200_000)))
    for q in np.geomspace(0.3, 8.0, 8):
        p = float(d.tail(float(q)))
        se = math.sqrt(p * (1 - p) / len(x))
        assert abs((x > q).mean() - p) <= 3.5 * se + 1e-12


# -- streams ---------------------------------------------------------------------

def test_stream_reproducibility_bit_exact():
    a = RngStream(99, 7).generator().random(100)
    b = RngStream(99, 7).generator().random(100)
    assert np.array_equal(a, b)


def test_distinct_streams_differ():
    a = RngStream(99, 7).generator().random(100)
    b = RngStream(99, 8).generator().random(100)
    c = RngStream(98, 7).generator().random(100)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_roles_are_independent_substreams():
    s = RngStream(5, 1)
    assert not np.array_equal(s.generator(0).random(50), s.generator(1).random(50))


# -- normal helpers -----------------------------------------------------------------

def test_normal_tail_values():
    assert normal_tail(0.0) == 0.5
    assert math.isclose(normal_tail(1.96), 0.0249979, rel_tol=1e-5)
    assert normal_tail(-40.0) == 1.0
    # quadrature oracle for the upper tail
    xs = np.linspace(1.0, 8.0, 70001)
    dens = np.exp(-xs ** 2 / 2.0) / math.sqrt(2 * math.pi)
    approx = float(np.trapezoid(dens, xs)) + normal_tail(8.0)
    assert abs(normal_tail(1.0) - approx) < 1e-9


def test_normal_tail_matches_scipy_everywhere():
    for x in np.linspace(-8, 8, 50):
        assert abs(normal_tail(float(x)) - stats.norm.sf(x)) < 1e-12


def test_normal_ppf_matches_scipy():
    us = np.random.default_rng(3).random(500)
    for u in us:
        assert abs(normal_ppf(float(u)) - stats.norm.ppf(u)) < 1e-12


# -- classification ------------------------------------------------------------------

def test_subexponential_classification_table():
    p = is_subexponential_family(Pareto(2.5, 1.0))
    assert (p.f_subexponential, p.fs_subexponential, p.ratio_x_squared, p.ratio_2x) \
        == (True, True, False, True)
    w = is_subexponential_family(Weibull(0.5, 1.0))
    assert (w.f_subexponential, w.fs_subexponential, w.ratio_x_squared, w.ratio_2x) \
        == (True, True, False, False)
    ln = is_subexponential_family(Lognormal(0.0, 1.0))
    assert (ln.f_subexponential, ln.fs_subexponential, ln.ratio_x_squared, ln.ratio_2x) \
        == (True, True, False, False)
    for light in (Exponential(1.0), Deterministic(1.0)):
        c = is_subexponential_family(light)
        assert (c.f_subexponential, c.fs_subexponential) == (False, False)
        assert c.ratio_x_squared is None and c.ratio_2x is None


# -- validation and configuration ------------------------------------------------------

@pytest.mark.parametrize("bad", [
    lambda: Pareto(1.0, 1.0),
    lambda: Pareto(2.5, 0.0),
    lambda: Weibull(1.0, 1.0),
    lambda: Weibull(0.5, -1.0),
    lambda: Lognormal(0.0, 0.0),
    lambda: Exponential(0.0),
    lambda: Deterministic(-1.0),
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_dist_config_roundtrip():
    for dist in ALL_DISTS:
        assert dist_from_config(dist_to_config(dist)) == dist


def test_dist_config_rejects_unknown_fields():
    with pytest.raises(ValueError):
        dist_from_config({"family": "pareto", "alpha": 2.5, "xm": 1.0, "wat": 1})
    with pytest.raises(ValueError):
        dist_from_config({"family": "nope"})
    with pytest.raises(ValueError):
        dist_from_config({"family": "pareto", "alpha": 2.5})


def test_arrivals():
    det = DeterministicArrivals(2.0)
    assert det.mean_spacing == 2.0
    assert np.all(det.sample_interarrivals(5) == 2.0)
    ren = RenewalArrivals(Exponential(2.0))
    assert math.isclose(ren.mean_spacing, 0.5, rel_tol=1e-14)
    taus = ren.sample_interarrivals(1000, RngStream(1, 0).generator())
    assert np.all(taus > 0.0)
    assert arrivals_from_config(arrivals_to_config(ren)) == ren
    with pytest.raises(ValueError):
        ren.sample_interarrivals(3)
    with pytest.raises(ValueError):
        arrivals_from_config({"kind": "renewal", "dist": {"family": "exponential", "rate": 1.0}, "x": 1})
