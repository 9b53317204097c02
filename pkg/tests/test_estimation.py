import math

import numpy as np
import pytest

from maxdater.asymptotics import veraverbeke
from maxdater.bounds import lower_bound_path, select_L, upper_bound_path
from maxdater.distributions import (
    Deterministic,
    DeterministicArrivals,
    Exponential,
    Pareto,
    RenewalArrivals,
    RngStream,
)
from maxdater.estimation import (
    HorizonPolicy,
    batch_stationary_daters,
    big_jump_diagnostic,
    check_assumption_H,
    collect_daters,
    comonotone_vector_sampler,
    estimate_tail,
    hill_tail_index,
    independent_vector_sampler,
    interarrival_insensitivity_check,
    jackson_work_sampler,
    moment_order_check,
    stationary_dater_sample,
)
from maxdater.models import (
    JacksonModel,
    MultiServerModel,
    SingleServerModel,
    TandemModel,
    tandem_path,
)

POLICY = HorizonPolicy(n0=16, n_max=16384)


def pareto_single(det_arrivals=True):
    arr = DeterministicArrivals(1.0) if det_arrivals else RenewalArrivals(Exponential(1.0))
    return SingleServerModel(service=Pareto(2.5, 0.3), arrivals=arr)


def pareto_tandem():
    return TandemModel(services=(Pareto(2.5, 0.3), Pareto(2.5, 0.15)),
                       arrivals=DeterministicArrivals(1.0))


def jackson_feedback():
    return JacksonModel(services=(Pareto(2.5, 0.18), Pareto(2.5, 0.12)),
                        routing=np.array([[0.0, 0.8, 0.2], [0.25, 0.0, 0.75]]),
                        external=np.array([0.7, 0.3]),
                        arrivals=DeterministicArrivals(1.0))


# -- policy ------------------------------------------------------------------------

def test_policy_validation():
    with pytest.raises(ValueError):
        HorizonPolicy(n0=0)
    with pytest.raises(ValueError):
        HorizonPolicy(n0=16, n_max=32)
    assert HorizonPolicy(n0=4, n_max=64).checkpoints() == [4, 8, 16, 32, 64]


# -- stationary sampler ---------------------------------------------------------------

def test_trivial_deterministic_queue():
    k = SingleServerModel(service=Deterministic(0.5),
                          arrivals=DeterministicArrivals(1.0))
    z, horizon, censored = stationary_dater_sample(k, POLICY, RngStream(1, 0))
    assert z == 0.5 and horizon == POLICY.n0 and not censored


def test_single_sample_matches_batch_element():
    for kernel in (pareto_single(), pareto_tandem(),
                   MultiServerModel(servers=2, service=Pareto(2.5, 0.48),
                                    arrivals=DeterministicArrivals(1.0)),
                   jackson_feedback()):
        streams = [RngStream(7, i) for i in range(20)]
        batch = batch_stationary_daters(kernel, POLICY, streams)
        z5, h5, c5 = stationary_dater_sample(kernel, POLICY, streams[5])
        assert z5 == batch.z[5] and h5 == batch.horizon[5] and c5 == batch.censored[5]


def test_sampler_against_window_brute_force():
    k = pareto_single(det_arrivals=False)
    batch = batch_stationary_daters(k, POLICY, [RngStream(9, i) for i in range(300)],
                                    want_windows=True)
    for i in range(300):
        w = batch.windows[i]
        sig = np.asarray(w.driving)[::-1]        # depth order
        tau = np.diff(w.epochs)[::-1]
        if len(sig) > 1:
            walk = np.cumsum(sig[1:] - tau)
            oracle = sig[0] + max(0.0, float(walk.max()))
        else:
            oracle = sig[0]
        assert math.isclose(batch.z[i], oracle, rel_tol=1e-12)


def test_station2_delay_matches_path_recursion():
    k = pareto_tandem()
    batch = batch_stationary_daters(k, POLICY, [RngStream(11, i) for i in range(200)],
                                    want_w2=True, want_windows=True)
    for i in range(200):
        tp = tandem_path(batch.windows[i])
        assert math.isclose(batch.w2[i], tp.w2[-1], rel_tol=1e-9, abs_tol=1e-12)
        assert math.isclose(batch.w1[i], tp.w1[-1], rel_tol=1e-9, abs_tol=1e-12)


def test_censoring_at_horizon_cap():
    # load 0.95: horizons often exceed a tiny cap
    k = SingleServerModel(service=Pareto(2.5, 0.57),
                          arrivals=DeterministicArrivals(0.6))
    policy = HorizonPolicy(n0=1, n_max=4)
    batch = batch_stationary_daters(k, policy, [RngStream(13, i) for i in range(400)])
    assert batch.censored.any()
    assert np.all(batch.horizon[batch.censored] == 4)


def test_sandwich_on_replayed_final_windows():
    k = pareto_tandem()
    L = select_L(k, seed=15)
    batch = batch_stationary_daters(k, POLICY, [RngStream(17, i) for i in range(150)],
                                    want_windows=True)
    for i in range(150):
        w = batch.windows[i]
        pad = (-w.m + 1) % L
        if pad:  # left-pad the window to a block multiple with fresh draws
            extra = k.sample_driving(pad, RngStream(170_000, i))
            epochs = np.concatenate([w.epochs[0] - np.arange(pad, 0, -1), w.epochs])
            from maxdater.netcore import Window
            w = Window(m=w.m - pad, epochs=epochs,
                       driving=np.concatenate([extra, w.driving]))
        up = upper_bound_path(k, w, L)
        low = lower_bound_path(k, w)
        z = k.maximal_dater(w)
        assert low.value <= z + 1e-9 <= up.response + 1e-9


# -- tail estimation ---------------------------------------------------------------------

def test_estimate_tail_degenerate_step():
    k = SingleServerModel(service=Deterministic(0.5),
                          arrivals=DeterministicArrivals(1.0))
    est = estimate_tail(k, [0.25, 0.4, 0.5, 0.6], 200, POLICY, seed=19)
    assert np.array_equal(est.p_hat, [1.0, 1.0, 0.0, 0.0])
    assert est.censor_fraction == 0.0 and not est.tainted


def test_estimate_tail_monotone_and_chunk_invariant():
    k = pareto_single()
    a = estimate_tail(k, [0.5, 1.0, 2.0, 4.0], 2000, POLICY, seed=21, chunk_size=128)
    b = estimate_tail(k, [0.5, 1.0, 2.0, 4.0], 2000, POLICY, seed=21, chunk_size=701)
    assert np.array_equal(a.p_hat, b.p_hat)
    assert np.all(np.diff(a.p_hat) <= 0.0)


def test_estimate_tail_threads_deterministic():
    k = pareto_single()
    a = estimate_tail(k, [1.0, 2.0], 3000, POLICY, seed=23, chunk_size=500, threads=1)
    b = estimate_tail(k, [1.0, 2.0], 3000, POLICY, seed=23, chunk_size=500, threads=4)
    assert np.array_equal(a.p_hat, b.p_hat)


def test_estimate_tail_formula_ratios():
    svc = Pareto(2.5, 0.3)
    k = SingleServerModel(service=svc, arrivals=DeterministicArrivals(1.0))
    formula = lambda x: veraverbeke(1.0, 1.0, 0.5, svc, x)
    est = estimate_tail(k, [1.0, 2.0], 5000, POLICY, seed=25, formula=formula)
    assert est.formula is not None and est.ratio is not None
    assert np.allclose(est.ratio, est.p_hat / est.formula)


def test_estimate_tail_tainted_flag():
    k = SingleServerModel(service=Pareto(2.5, 0.57),
                          arrivals=DeterministicArrivals(0.6))
    est = estimate_tail(k, [1.0], 500, HorizonPolicy(n0=1, n_max=4), seed=27)
    assert est.censor_fraction > 1e-3 and est.tainted


def test_ratio_trend_toward_one_with_depth():
    svc = Pareto(2.5, 0.3)
    k = SingleServerModel(service=svc, arrivals=DeterministicArrivals(1.0))
    formula = lambda x: veraverbeke(1.0, 1.0, 0.5, svc, x)
    # levels where the formula is about 1e-1 and 1e-2
    shallow = 0.3 * (0.4 / 1e-1) ** (2 / 3)
    deep = 0.3 * (0.4 / 1e-2) ** (2 / 3)
    closer = 0
    for rep in range(10):
        est = estimate_tail(k, [shallow, deep], 100_000,
                            HorizonPolicy(n0=32, n_max=16384), seed=1000 + rep,
                            formula=formula)
        if abs(est.ratio[1] - 1.0) <= abs(est.ratio[0] - 1.0):
            closer += 1
    assert closer >= 8


# -- tail index --------------------------------------------------------------------------

def test_hill_on_exact_pareto():
    samples = Pareto(2.5, 1.0).quantile(np.random.default_rng(5).random(100_000))
    est = hill_tail_index(np.asarray(samples), 1000, seed=5)
    assert abs(est.index - 2.5) < 0.1
    assert est.std_error < 0.2


def test_hill_scale_invariance():
    samples = np.asarray(Pareto(2.5, 1.0).quantile(np.random.default_rng(6).random(20_000)))
    a = hill_tail_index(samples, 500, n_boot=10, seed=1)
    b = hill_tail_index(1000.0 * samples, 500, n_boot=10, seed=1)
    assert math.isclose(a.index, b.index, rel_tol=1e-9)


def test_hill_degenerate_and_bounds():
    with pytest.raises(ValueError):
        hill_tail_index(np.ones(1000), 100)
    with pytest.raises(ValueError):
        hill_tail_index(np.arange(1, 100, dtype=float), 5)
    with pytest.raises(ValueError):
        hill_tail_index(np.arange(1, 100, dtype=float), 60)


def test_moment_order_check_pareto_and_light():
    k = pareto_single()
    rep = moment_order_check(k, 2.5, HorizonPolicy(n0=32, n_max=16384), seed=29,
                             samples=60_000, k=400)
    assert rep.heavy_tailed
    assert abs(rep.dater_index - 1.5) < 0.4
    light = SingleServerModel(service=Exponential(2.0),
                              arrivals=DeterministicArrivals(1.0))
    rep2 = moment_order_check(light, math.inf, POLICY, seed=31,
                              samples=60_000, k=400)
    assert not rep2.heavy_tailed


# -- big jump census ------------------------------------------------------------------------

def test_big_jump_starved_for_light_tails():
    light = SingleServerModel(service=Exponential(2.0),
                              arrivals=DeterministicArrivals(1.0))
    rep = big_jump_diagnostic(light, 40.0, POLICY, seed=33, target=50, budget=2000)
    assert rep.starved and rep.conditioned == 0


def test_big_jump_single_server_deep_level():
    k = pareto_single()
    rep = big_jump_diagnostic(k, 16.29, POLICY, seed=35, target=100,
                              budget=300_000)
    assert not rep.starved and rep.conditioned == 100
    f = rep.fractions[0.25]
    assert f["one"] >= 0.8
    assert f["two_plus"] <= 0.15
    assert f["zero"] + f["one"] + f["two_plus"] == pytest.approx(1.0)
    # a larger threshold never increases the census
    assert rep.fractions[0.5]["two_plus"] <= f["two_plus"]


# -- work-vector tail equivalence -----------------------------------------------------------

def test_hcheck_independent_passes_deep():
    rep = check_assumption_H(independent_vector_sampler([Pareto(2.5, 1.0)] * 2),
                             [8.0, 16.0, 32.0], 400_000, seed=37)
    assert rep.consistent and rep.deepest_level == 32.0


def test_hcheck_comonotone_fails_at_half():
    rep = check_assumption_H(comonotone_vector_sampler(Pareto(2.5, 1.0), 2),
                             [8.0, 16.0, 24.0], 400_000, seed=39)
    assert not rep.consistent
    i = int(np.argmax(rep.levels == rep.deepest_level))
    assert abs(rep.max_over_marginals[i] - 0.5) < 0.05


def test_hcheck_jackson_compound_passes():
    model = JacksonModel(services=(Pareto(2.5, 1.0), Pareto(2.5, 1.0)),
                         routing=np.array([[0.0, 0.5, 0.5], [0.3, 0.0, 0.7]]),
                         external=np.array([1.0, 0.0]),
                         arrivals=DeterministicArrivals(10.0))
    rep = check_assumption_H(jackson_work_sampler(model), [8.0, 16.0, 32.0],
                             150_000, seed=41)
    assert rep.consistent


def test_hcheck_drops_unresolvable_levels():
    rep = check_assumption_H(independent_vector_sampler([Pareto(2.5, 1.0)] * 2),
                             [8.0, 1e6], 20_000, seed=43)
    assert rep.dropped_levels == 1 and rep.deepest_level == 8.0


# -- interarrival insensitivity ----------------------------------------------------------------

def test_insensitivity_identical_specs_ratio_one():
    k = pareto_single()
    a = estimate_tail(k, [1.0, 2.0, 4.0], 4000, POLICY, seed=45)
    b = estimate_tail(k, [1.0, 2.0, 4.0], 4000, POLICY, seed=45)
    assert np.array_equal(a.p_hat, b.p_hat)


def test_insensitivity_report_contains_one():
    k = pareto_single()
    rep = interarrival_insensitivity_check(k, 1.0, [2.0, 6.0, 16.0], 100_000,
                                           HorizonPolicy(n0=32, n_max=16384), seed=47)
    assert rep.deepest_level == 16.0
    assert rep.deepest_contains_one
    assert not rep.mismatch


def test_insensitivity_flags_mean_mismatch():
    k = pareto_single()
    rep = interarrival_insensitivity_check(k, 1.0, [1.0, 2.0], 30_000,
                                           HorizonPolicy(n0=32, n_max=16384),
                                           seed=49, a_renewal=0.62)
    assert rep.mismatch
