"""Network kernel interface and the pathwise property harness.

A kernel maps a realized window (arrival epochs plus per-customer driving
variables) to the time of the last activity in the network.  The harness
checks, on coupled realizations, the four structural properties every kernel
must satisfy (causality, external monotonicity, homogeneity under time
shifts, separability across idle split points) together with the internal
monotonicity / subadditivity / splitting inequalities of the window dater.

Time shifts are carried symbolically on the window (a ``shift`` field added
once at evaluation) so the homogeneity identity holds in exact float
arithmetic rather than up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .distributions import ArrivalSpec, RngStream, ARRIVAL_ROLE, ROUTE_ROLE, SERVICE_ROLE

__all__ = [
    "Window",
    "Kernel",
    "PerturbationPlan",
    "CheckResult",
    "verify_axioms",
    "verify_dater_lemmas",
    "ineq_le",
]


def ineq_le(a: float, b: float) -> bool:
    """a <= b up to relative float slack."""
    return a <= b + 1e-9 * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class Window:
    """One realized finite input: customers m..n with epochs and driving data.

    ``driving`` holds one record per customer; its concrete shape is owned by
    the kernel (an array of service times, a matrix of per-station services,
    a tuple of routes).  ``shift`` is a symbolic offset: the epochs are to be
    read as ``epochs + shift``, applied exactly once when an absolute time is
    produced.
    """

    m: int
    epochs: np.ndarray
    driving: Any
    shift: float = 0.0

    def __post_init__(self):
        epochs = np.asarray(self.epochs, dtype=float)
        object.__setattr__(self, "epochs", epochs)
        if epochs.ndim != 1 or len(epochs) == 0:
            raise ValueError("window must contain at least one customer")
        if np.any(np.diff(epochs) < 0.0):
            raise ValueError("arrival epochs must be nondecreasing")
        if len(self.driving) != len(epochs):
            raise ValueError(
                f"driving length {len(self.driving)} != epoch count {len(epochs)}")

    @property
    def n(self) -> int:
        return self.m + len(self.epochs) - 1

    @property
    def size(self) -> int:
        return len(self.epochs)

    def shifted(self, c: float) -> "Window":
        return replace(self, shift=self.shift + c)

    def with_epochs(self, epochs: np.ndarray) -> "Window":
        return replace(self, epochs=np.asarray(epochs, dtype=float))

    def restrict(self, lo: int, hi: int) -> "Window":
        """Restriction to customers lo..hi (inclusive, absolute indices)."""
        if not (self.m <= lo <= hi <= self.n):
            raise ValueError(f"restriction [{lo},{hi}] outside window [{self.m},{self.n}]")
        i0, i1 = lo - self.m, hi - self.m + 1
        return replace(self, m=lo, epochs=self.epochs[i0:i1], driving=self.driving[i0:i1])


class Kernel:
    """Base class for concrete network models.

    Subclasses provide ``_last_activity(epochs, driving)``, the pure function
    of the realized window, plus driving-variable sampling.  Models with a
    per-customer, per-station work decomposition additionally expose
    ``customer_station_work``.
    """

    name: str = "kernel"
    has_AA: bool = False
    r: int = 1
    arrivals: ArrivalSpec

    # -- pure evaluation ----------------------------------------------------

    def _last_activity(self, epochs: np.ndarray, driving: Any) -> float:
        raise NotImplementedError

    def last_activity(self, window: Window) -> float:
        """Epoch of the last activity when fed only this window."""
        return window.shift + self._last_activity(window.epochs, window.driving)

    def maximal_dater(self, window: Window) -> float:
        """Last activity measured from the final arrival; shift-free."""
        return self._last_activity(window.epochs, window.driving) - window.epochs[-1]

    # -- sampling -----------------------------------------------------------

    def sample_driving_gens(self, count: int, service_gen: np.random.Generator,
                            route_gen: Optional[np.random.Generator] = None) -> Any:
        """Draw `count` driving records from already-opened generators.

        Incremental extensions must continue a stream where the previous
        stage stopped, so the generators are owned by the caller.
        """
        raise NotImplementedError

    def sample_driving(self, count: int, stream: RngStream) -> Any:
        return self.sample_driving_gens(count, stream.generator(SERVICE_ROLE),
                                        stream.generator(ROUTE_ROLE))

    def sample_window(self, m: int, n: int, stream: RngStream) -> Window:
        """Sample a window for customers m..n; epoch 0 anchors customer 0
        when the range contains it, else the left edge."""
        count = n - m + 1
        if count < 1:
            raise ValueError("window must contain at least one customer")
        gen = stream.generator(ARRIVAL_ROLE)
        tau = self.arrivals.sample_interarrivals(count - 1, gen)
        epochs = np.concatenate(([0.0], np.cumsum(tau)))
        if m <= 0 <= n:
            epochs = epochs - epochs[-m]
        driving = self.sample_driving(count, stream)
        return Window(m=m, epochs=epochs, driving=driving)

    def saturated_window(self, count: int, stream: RngStream) -> Window:
        """All arrivals at epoch 0: the saturated input over `count` customers."""
        driving = self.sample_driving(count, stream)
        return Window(m=-count, epochs=np.zeros(count), driving=driving)

    # -- optional decomposition ----------------------------------------------

    def customer_station_work(self, window: Window) -> np.ndarray:
        """Per-customer, per-station work matrix (size x r); only when has_AA."""
        raise NotImplementedError(f"{self.name} has no per-station decomposition")

    def one_customer_dater(self, window: Window, i: int) -> float:
        """Dater of the lone customer i from the window's driving data."""
        sub = window.restrict(i, i)
        return self.maximal_dater(sub)


# ---------------------------------------------------------------------------
# Property harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationPlan:
    """Inputs for one axiom verification pass.

    ``epoch_shifts``: nonnegative upward perturbations for the monotonicity
    check, one array per trial (drawn if absent).  ``homogeneity_c``: the
    scalar time shift.  ``split``: the separability split customer l; the
    harness widens the gap after l so the premise holds.
    """

    epoch_shifts: Optional[Sequence[np.ndarray]] = None
    n_monotonicity: int = 10
    homogeneity_c: float = 7.25
    split: Optional[int] = None


@dataclass
class CheckResult:
    passed: bool
    witness: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"passed": bool(self.passed), **self.witness}


def verify_axioms(kernel: Kernel, window: Window, plan: PerturbationPlan,
                  stream: Optional[RngStream] = None) -> dict:
    """Check the four kernel properties on one realized window.

    Failures land in the report, never raise.  Returns a dict keyed by
    property name with CheckResult values.
    """
    report: dict[str, CheckResult] = {}
    x0 = kernel.last_activity(window)
    t_last = window.epochs[-1] + window.shift

    # causality
    report["causality"] = CheckResult(
        passed=ineq_le(t_last, x0),
        witness={"last_activity": x0, "last_epoch": t_last})

    # external monotonicity under upward epoch perturbations
    shifts = plan.epoch_shifts
    if shifts is None:
        gen = (stream or RngStream(0)).generator(ARRIVAL_ROLE)
        shifts = [np.maximum(gen.random(window.size), 0.0) * gen.random() * 3.0
                  for _ in range(plan.n_monotonicity)]
    mono_ok, mono_wit = True, {}
    for k, delta in enumerate(shifts):
        delta = np.asarray(delta, dtype=float)
        if np.any(delta < 0.0):
            raise ValueError("monotonicity perturbations must be nonnegative")
        # keep epochs nondecreasing: apply the cumulative max of the raise
        raised = np.maximum.accumulate(window.epochs + delta)
        raised = np.maximum(raised, window.epochs)
        x1 = kernel.last_activity(window.with_epochs(raised))
        if not ineq_le(x0, x1):
            mono_ok = False
            mono_wit = {"trial": k, "before": x0, "after": x1}
            break
    report["external_monotonicity"] = CheckResult(mono_ok, mono_wit)

    # homogeneity, exact: the shift is carried symbolically
    c = plan.homogeneity_c
    x_shifted = kernel.last_activity(window.shifted(c))
    report["homogeneity"] = CheckResult(
        passed=(x_shifted == x0 + c),
        witness={"c": c, "shifted": x_shifted, "expected": x0 + c})

    # separability with a constructed gap
    if window.size >= 2:
        split = plan.split if plan.split is not None else window.m + (window.size - 1) // 2
        split = min(max(split, window.m), window.n - 1)
        x_pre = kernel.last_activity(window.restrict(window.m, split))
        gap_epochs = window.epochs.copy()
        i_split = split - window.m
        need = (x_pre - window.shift) - gap_epochs[i_split + 1]
        if need > -1.0:  # enlarge so the premise holds with margin 1
            gap_epochs[i_split + 1:] += need + 1.0
        gapped = window.with_epochs(gap_epochs)
        premise = kernel.last_activity(gapped.restrict(window.m, split)) <= gap_epochs[i_split + 1] + window.shift
        x_full = kernel.last_activity(gapped)
        x_suffix = kernel.last_activity(gapped.restrict(split + 1, window.n))
        report["separability"] = CheckResult(
            passed=bool(premise and x_full == x_suffix),
            witness={"split": split, "premise_holds": bool(premise),
                     "full": x_full, "suffix": x_suffix})
    else:
        report["separability"] = CheckResult(True, {"skipped": "window of size 1"})

    return report


def verify_dater_lemmas(kernel: Kernel, window: Window, split: int) -> dict:
    """Check internal monotonicity, subadditivity and the splitting bound.

    ``split`` is the customer l with m <= l < n.  The splitting bound uses the
    window's right edge in the role of customer 0.
    """
    m, n = window.m, window.n
    if not (m <= split < n):
        raise ValueError(f"split {split} outside ({m}, {n})")
    report: dict[str, CheckResult] = {}

    z_full = kernel.maximal_dater(window)

    # internal monotonicity: dropping the leftmost customer cannot increase Z
    if window.size >= 2:
        z_tail = kernel.maximal_dater(window.restrict(m + 1, n))
        report["internal_monotonicity"] = CheckResult(
            ineq_le(z_tail, z_full), {"prepended": z_full, "inner": z_tail})
    else:
        report["internal_monotonicity"] = CheckResult(True, {"skipped": "size 1"})

    # subadditivity across the split
    z_left = kernel.maximal_dater(window.restrict(m, split))
    z_right = kernel.maximal_dater(window.restrict(split + 1, n))
    report["subadditivity"] = CheckResult(
        ineq_le(z_full, z_left + z_right),
        {"whole": z_full, "left": z_left, "right": z_right})

    # splitting bound: Z[m,n] <= Z[l+1,n] + (Z[m,l] - gap)^+ with the
    # interarrival gap between customers l and l+1
    tau_gap = window.epochs[split + 1 - m] - window.epochs[split - m]
    bound = z_right + max(0.0, z_left - tau_gap)
    report["splitting_bound"] = CheckResult(
        ineq_le(z_full, bound),
        {"whole": z_full, "suffix": z_right, "carry": max(0.0, z_left - tau_gap)})

    return report
