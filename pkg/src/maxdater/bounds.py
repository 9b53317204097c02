"""Saturation-rule drain-rate estimation, stability verdicts, and the
single-server bound queues that sandwich a network's window dater.

The drain rate gamma(0) is the almost-sure limit of Z over the saturated
input (all arrivals collapsed to epoch zero) divided by the customer count.
Stability holds when the arrival rate times gamma(0) stays below one.

The upper bound runs the network over blocks of L customers under saturation
and feeds the block daters as service times of a single-server queue whose
response dominates the network dater pathwise.  The lower bound, available
when per-customer work decomposes across stations, is the fork-join response:
the worst isolated station response driven by the same interarrivals.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import RngStream
from .models import TandemModel
from .netcore import Kernel, Window, ineq_le

__all__ = [
    "Gamma0Estimate",
    "estimate_gamma0",
    "stability_verdict",
    "select_L",
    "UpperBoundPath",
    "upper_bound_path",
    "LowerBoundPath",
    "lower_bound_path",
    "SandwichReport",
    "sandwich_check",
    "derive_seed",
]


def derive_seed(seed: int, label: str) -> int:
    """A stable 64-bit sub-seed for one named use of a master seed."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class Gamma0Estimate:
    """Monte Carlo estimate of the saturated drain rate at one horizon."""

    horizon: int
    replications: int
    estimate: float
    half_width: float
    reference: Optional[float]

    def as_dict(self) -> dict:
        return {"horizon": self.horizon, "replications": self.replications,
                "gamma0": self.estimate, "ci": self.half_width,
                "reference": self.reference}


def estimate_gamma0(kernel: Kernel, horizon: int, replications: int,
                    seed: int) -> Gamma0Estimate:
    """Estimate gamma(0) from saturated windows of `horizon` customers."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    zs = np.empty(replications)
    for i in range(replications):
        window = kernel.saturated_window(horizon, RngStream(seed, i))
        zs[i] = kernel.maximal_dater(window)
    mean = float(zs.mean()) / horizon
    if replications > 1:
        hw = 1.96 * float(zs.std(ddof=1)) / math.sqrt(replications) / horizon
    else:
        hw = 0.0
    reference = None
    ref_fn = getattr(kernel, "gamma0_reference", None)
    if ref_fn is not None:
        reference = float(ref_fn())
    return Gamma0Estimate(horizon=horizon, replications=replications,
                          estimate=mean, half_width=hw, reference=reference)


def stability_verdict(kernel: Kernel, gamma0: Gamma0Estimate) -> str:
    """'stable' when the upper CI bound of (rate x gamma0) is below one,
    'unstable' when the lower bound exceeds one, else 'inconclusive'."""
    lam = 1.0 / kernel.arrivals.mean_spacing
    hi = lam * (gamma0.estimate + gamma0.half_width)
    lo = lam * (gamma0.estimate - gamma0.half_width)
    if hi < 1.0:
        return "stable"
    if lo > 1.0:
        return "unstable"
    return "inconclusive"


def select_L(kernel: Kernel, seed: int, delta: float = 0.1,
             replications: int = 200, cap: int = 2 ** 20) -> int:
    """Smallest block size L (doubling scan) whose saturated block dater mean
    is safely below (1 - delta) * L * a, with a 3-sigma sampling margin."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0,1)")
    a = kernel.arrivals.mean_spacing
    L = 1
    while L <= cap:
        g = estimate_gamma0(kernel, L, replications, derive_seed(seed, f"select_L:{L}"))
        mean_z = g.estimate * L
        hw_z = g.half_width * L
        if mean_z + 3.0 * hw_z <= (1.0 - delta) * L * a:
            return L
        L *= 2
    raise RuntimeError(
        f"no block size up to {cap} certifies the drain margin; "
        "the load is too close to critical for the requested delta")


@dataclass(frozen=True)
class UpperBoundPath:
    """The L-block bound queue evaluated on one window: block service times,
    block interarrivals, waiting path, and the finite-horizon response."""

    L: int
    s_hat: np.ndarray
    tau_hat: np.ndarray
    waits: np.ndarray
    response: float


def upper_bound_path(kernel: Kernel, window: Window, L: int) -> UpperBoundPath:
    """Evaluate the bound queue over a window whose size is a multiple of L.

    Block service times are the window dater of each L-block under collapsed
    (saturated) epochs; block interarrivals are the spacings of the block-end
    epochs; the response comes from the waiting recursion over blocks.
    """
    size = window.size
    if size % L != 0:
        raise ValueError(f"window size {size} is not a multiple of L={L}; pad the window")
    blocks = size // L
    s_hat = np.empty(blocks)
    for k in range(blocks):
        sub = window.driving[k * L:(k + 1) * L]
        s_hat[k] = kernel.maximal_dater(Window(m=0, epochs=np.zeros(L), driving=sub))
        if isinstance(kernel, TandemModel):
            fast = _tandem_block_dater(np.asarray(sub, dtype=float))
            if abs(fast - s_hat[k]) > 1e-9 * max(1.0, abs(s_hat[k])):
                raise RuntimeError(
                    f"tandem block formula disagrees with the kernel: {fast} vs {s_hat[k]}")
    ends = window.epochs[L - 1::L]
    tau_hat = np.diff(ends)
    waits = np.zeros(blocks)
    for k in range(1, blocks):
        waits[k] = max(0.0, waits[k - 1] + s_hat[k - 1] - tau_hat[k - 1])
    response = waits[-1] + s_hat[-1]
    return UpperBoundPath(L=L, s_hat=s_hat, tau_hat=tau_hat, waits=waits,
                          response=response)


def _tandem_block_dater(driving: np.ndarray) -> float:
    """Closed-form saturated block dater of the tandem: the best split of the
    block between station-1 and station-2 work."""
    s1 = driving[:, 0]
    s2 = driving[:, 1]
    pre1 = np.cumsum(s1)
    suf2 = np.cumsum(s2[::-1])[::-1]
    return float((pre1 + suf2).max())


@dataclass(frozen=True)
class LowerBoundPath:
    """Fork-join lower bound: isolated per-station responses and their max."""

    per_station: np.ndarray
    value: float


def lower_bound_path(kernel: Kernel, window: Window) -> LowerBoundPath:
    """Isolated single-server response per station over (station work,
    interarrivals); the fork-join response is the max across stations."""
    if not kernel.has_AA:
        raise ValueError(f"{kernel.name} has no per-station work decomposition")
    work = kernel.customer_station_work(window)
    tau = np.diff(window.epochs)
    r = work.shape[1]
    responses = np.empty(r)
    for j in range(r):
        w = 0.0
        col = work[:, j]
        for k in range(len(tau)):
            w = max(0.0, w + col[k] - tau[k])
        responses[j] = w + col[-1]
    return LowerBoundPath(per_station=responses, value=float(responses.max()))


@dataclass(frozen=True)
class SandwichReport:
    """Pathwise check lower <= Z <= upper on one realization, plus the block
    inequalities relating block daters to per-station block work."""

    z: float
    upper: float
    lower: Optional[float]
    upper_ok: bool
    lower_ok: bool
    block_ineq_ok: bool
    block_subadd_ok: bool
    upper_margin: float
    lower_margin: Optional[float]

    @property
    def ok(self) -> bool:
        return self.upper_ok and self.lower_ok and self.block_ineq_ok and self.block_subadd_ok

    def as_dict(self) -> dict:
        return {"z": self.z, "upper": self.upper, "lower": self.lower,
                "upper_ok": self.upper_ok, "lower_ok": self.lower_ok,
                "block_ineq_ok": self.block_ineq_ok,
                "block_subadd_ok": self.block_subadd_ok,
                "upper_margin": self.upper_margin, "lower_margin": self.lower_margin}


def sandwich_check(kernel: Kernel, window: Window, L: int) -> SandwichReport:
    """Assert the finite-horizon sandwich on a shared realization."""
    z = kernel.maximal_dater(window)
    up = upper_bound_path(kernel, window, L)
    upper_ok = ineq_le(z, up.response)

    lower = None
    lower_ok = True
    lower_margin = None
    block_ineq_ok = True
    if kernel.has_AA:
        low = lower_bound_path(kernel, window)
        lower = low.value
        lower_ok = ineq_le(low.value, z)
        lower_margin = z - low.value
        work = kernel.customer_station_work(window)
        blocks = window.size // L
        for k in range(blocks):
            blk = work[k * L:(k + 1) * L]
            lo = float(blk.sum(axis=0).max())
            hi = float(blk.sum())
            if not (ineq_le(lo, up.s_hat[k]) and ineq_le(up.s_hat[k], hi)):
                block_ineq_ok = False
                break

    block_subadd_ok = True
    for k in range(window.size // L):
        z_sum = sum(kernel.one_customer_dater(window, window.m + i)
                    for i in range(k * L, (k + 1) * L))
        if not ineq_le(up.s_hat[k], z_sum):
            block_subadd_ok = False
            break

    return SandwichReport(z=z, upper=up.response, lower=lower,
                          upper_ok=upper_ok, lower_ok=lower_ok,
                          block_ineq_ok=block_ineq_ok,
                          block_subadd_ok=block_subadd_ok,
                          upper_margin=up.response - z,
                          lower_margin=lower_margin)
