import numpy as np
import pytest

from maxdater.distributions import (
    Deterministic,
    DeterministicArrivals,
    Exponential,
    Pareto,
    RenewalArrivals,
    RngStream,
)
from maxdater.models import (
    JacksonModel,
    MultiServerModel,
    SingleServerModel,
    TandemModel,
)
from maxdater.netcore import (
    Kernel,
    PerturbationPlan,
    Window,
    verify_axioms,
    verify_dater_lemmas,
)


def single_kernel(load=0.5):
    return SingleServerModel(service=Pareto.with_mean(2.5, load),
                             arrivals=DeterministicArrivals(1.0))


def tandem_kernel():
    return TandemModel(services=(Pareto(2.5, 0.3), Pareto(2.5, 0.15)),
                       arrivals=RenewalArrivals(Exponential(1.0)))


def multi_kernel():
    return MultiServerModel(servers=3, service=Pareto(2.5, 0.9),
                            arrivals=DeterministicArrivals(1.0))


def jackson_kernel():
    return JacksonModel(
        services=(Pareto(2.5, 0.3), Pareto(2.5, 0.2)),
        routing=np.array([[0.0, 0.8, 0.2], [0.25, 0.0, 0.75]]),
        external=np.array([0.7, 0.3]),
        arrivals=RenewalArrivals(Exponential(1.0)))


ALL_KERNELS = [single_kernel, tandem_kernel, multi_kernel, jackson_kernel]


# -- window mechanics ---------------------------------------------------------

def test_window_validation():
    with pytest.raises(ValueError):
        Window(m=0, epochs=np.array([]), driving=np.array([]))
    with pytest.raises(ValueError):
        Window(m=0, epochs=np.array([1.0, 0.5]), driving=np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        Window(m=0, epochs=np.array([0.0, 1.0]), driving=np.array([1.0]))


def test_window_restrict_and_shift():
    w = Window(m=-2, epochs=np.array([-2.0, -1.0, 0.0]),
               driving=np.array([1.0, 2.0, 3.0]))
    assert w.n == 0 and w.size == 3
    sub = w.restrict(-1, 0)
    assert sub.m == -1 and np.array_equal(sub.epochs, [-1.0, 0.0])
    assert np.array_equal(sub.driving, [2.0, 3.0])
    assert w.shifted(2.0).shift == 2.0
    with pytest.raises(ValueError):
        w.restrict(-3, 0)


# -- hand examples -------------------------------------------------------------

def test_single_customer_last_activity():
    k = single_kernel()
    w = Window(m=0, epochs=np.array([0.0]), driving=np.array([3.0]))
    assert k.last_activity(w) == 3.0
    assert k.maximal_dater(w) == 3.0


def test_zero_services_attain_causality_bound():
    for make in ALL_KERNELS:
        k = make()
        w = k.sample_window(-5, 0, RngStream(1, 0))
        if isinstance(k, TandemModel):
            driving = np.zeros_like(np.asarray(w.driving))
        elif isinstance(k, JacksonModel):
            driving = tuple(
                type(r)(stations=r.stations, services=np.zeros_like(r.services))
                for r in w.driving)
        else:
            driving = np.zeros_like(np.asarray(w.driving))
        w0 = Window(m=w.m, epochs=w.epochs, driving=driving)
        assert k.last_activity(w0) == w.epochs[-1]
        assert k.maximal_dater(w0) == 0.0


def test_axiom_report_structure_and_pass():
    k = single_kernel()
    w = k.sample_window(-7, 0, RngStream(5, 1))
    report = verify_axioms(k, w, PerturbationPlan(), RngStream(5, 2))
    assert set(report) == {"causality", "external_monotonicity", "homogeneity",
                           "separability"}
    assert all(res.passed for res in report.values())


def test_homogeneity_shift_is_exact():
    for make in ALL_KERNELS:
        k = make()
        w = k.sample_window(-9, 0, RngStream(11, 3))
        x = k.last_activity(w)
        assert k.last_activity(w.shifted(7.25)) == x + 7.25
        assert k.last_activity(w.shifted(0.1)) == x + 0.1


def test_monotonicity_single_epoch_raise():
    k = tandem_kernel()
    w = k.sample_window(-6, 0, RngStream(2, 0))
    x0 = k.last_activity(w)
    for j in range(w.size):
        delta = np.zeros(w.size)
        delta[j] = 0.7
        raised = np.maximum.accumulate(w.epochs + delta)
        assert k.last_activity(w.with_epochs(raised)) >= x0 - 1e-12


def test_separability_constructed_gap_exact():
    for make in ALL_KERNELS:
        k = make()
        w = k.sample_window(-8, 0, RngStream(21, 4))
        report = verify_axioms(k, w, PerturbationPlan(split=-4), RngStream(21, 5))
        assert report["separability"].passed
        assert report["separability"].witness["premise_holds"]


# -- dater lemmas ---------------------------------------------------------------

def test_lemma_examples_single_server():
    # two customers: services (3, 1), spacing 1
    k = single_kernel()
    w = Window(m=-1, epochs=np.array([0.0, 1.0]), driving=np.array([3.0, 1.0]))
    assert k.maximal_dater(w) == 3.0  # max(1, 3 + 1 - 1)
    report = verify_dater_lemmas(k, w, split=-1)
    assert all(r.passed for r in report.values())
    # the splitting bound is tight here: 3 <= 1 + (3 - 1)
    wit = report["splitting_bound"].witness
    assert wit["suffix"] + wit["carry"] == 3.0


def test_lemma_examples_tandem():
    k = tandem_kernel()
    w = Window(m=-1, epochs=np.array([-1.0, 0.0]),
               driving=np.array([[2.0, 1.0], [1.0, 3.0]]))
    assert k.maximal_dater(w) == 5.0
    report = verify_dater_lemmas(k, w, split=-1)
    assert all(r.passed for r in report.values())
    wit = report["subadditivity"].witness
    assert wit["left"] == 3.0 and wit["right"] == 4.0


def test_prepending_zero_services_never_decreases():
    k = single_kernel()
    w = Window(m=-3, epochs=np.array([-3.0, -2.0, -1.0, 0.0]),
               driving=np.array([0.0, 2.0, 0.5, 1.0]))
    z_inner = k.maximal_dater(w.restrict(-2, 0))
    assert k.maximal_dater(w) >= z_inner


def test_nested_window_daters_nondecreasing():
    for make in ALL_KERNELS:
        k = make()
        w = k.sample_window(-30, 0, RngStream(31, 6))
        zs = [k.maximal_dater(w.restrict(-n, 0)) for n in range(31)]
        assert all(zs[i + 1] >= zs[i] - 1e-12 for i in range(30))


def test_lemma_inequalities_random_windows():
    gen = np.random.default_rng(0)
    for make in ALL_KERNELS:
        k = make()
        for i in range(25):
            size = int(gen.integers(2, 20))
            w = k.sample_window(-size + 1, 0, RngStream(100, i))
            split = int(gen.integers(w.m, w.n))
            report = verify_dater_lemmas(k, w, split)
            assert all(r.passed for r in report.values()), (k.name, i)


def test_determinism_repeated_evaluation():
    for make in ALL_KERNELS:
        k = make()
        w = k.sample_window(-12, 0, RngStream(77, 0))
        assert k.last_activity(w) == k.last_activity(w)
        assert k.maximal_dater(w) == k.maximal_dater(w)


# -- a deliberately broken kernel must be caught ---------------------------------

class _BrokenShiftKernel(Kernel):
    """Violates homogeneity: absolute epochs leak into the dater."""

    name = "broken"
    has_AA = False
    r = 1

    def __init__(self):
        self.arrivals = DeterministicArrivals(1.0)

    def sample_driving_gens(self, count, service_gen, route_gen=None):
        return np.asarray([service_gen.random() for _ in range(count)])

    def _last_activity(self, epochs, driving):
        return float(epochs[-1] + sum(driving))

    def last_activity(self, window):  # wrong on purpose: shift enters twice
        return 1.001 * window.shift + self._last_activity(window.epochs, window.driving)


def test_broken_kernel_fails_homogeneity():
    k = _BrokenShiftKernel()
    w = k.sample_window(-4, 0, RngStream(9, 9))
    report = verify_axioms(k, w, PerturbationPlan(), RngStream(9, 10))
    assert not report["homogeneity"].passed


def test_axiom_suite_all_kernels_small():
    gen = np.random.default_rng(4)
    for make in ALL_KERNELS:
        k = make()
        for i in range(40):
            size = int(gen.integers(1, 33))
            w = k.sample_window(-size + 1, 0, RngStream(500, i))
            report = verify_axioms(k, w, PerturbationPlan(n_monotonicity=4),
                                   RngStream(501, i))
            assert all(r.passed for r in report.values()), (k.name, i)
