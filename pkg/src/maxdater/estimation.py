"""Monte Carlo estimation of stationary dater tails and the diagnostics
built on top of it: tail-index checks, the single-big-jump census, the
sum/max tail-equivalence check for per-station work vectors, and the
deterministic-versus-renewal arrival comparison.

The stationary dater is a monotone limit over nested windows extended into
the past.  Each replication doubles its horizon until the value is exactly
unchanged across two consecutive doublings (then the limit was attained at
the recorded onset horizon), or gives up at the horizon cap and is counted
as censored; censoring biases tail estimates downward and is reported.

Replication i always draws from stream (master seed, i), so every number is
reproducible bit-exactly and independent of chunking or thread scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace as dc_replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .distributions import (
    ARRIVAL_ROLE,
    ROUTE_ROLE,
    SERVICE_ROLE,
    DeterministicArrivals,
    Distribution,
    Exponential,
    RenewalArrivals,
    RngStream,
)
from .models import (
    JacksonModel,
    MultiServerModel,
    SingleServerModel,
    TandemModel,
)
from .netcore import Kernel, Window

__all__ = [
    "HorizonPolicy",
    "StationaryBatch",
    "stationary_dater_sample",
    "batch_stationary_daters",
    "TailEstimate",
    "estimate_tail",
    "collect_daters",
    "HillEstimate",
    "hill_tail_index",
    "MomentCheckReport",
    "moment_order_check",
    "BigJumpReport",
    "big_jump_diagnostic",
    "HCheckReport",
    "check_assumption_H",
    "independent_vector_sampler",
    "comonotone_vector_sampler",
    "jackson_work_sampler",
    "InsensitivityReport",
    "interarrival_insensitivity_check",
]


@dataclass(frozen=True)
class HorizonPolicy:
    """Doubling schedule for the nested-window limit.

    Windows are evaluated at n0, 2*n0, 4*n0, ... up to n_max.  A replication
    stabilizes when the tracked values are exactly unchanged at two
    consecutive checkpoints; the reported horizon is the first checkpoint at
    which the final value appeared.
    """

    n0: int = 16
    n_max: int = 16384

    def __post_init__(self):
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if self.n_max < 4 * self.n0:
            raise ValueError("n_max must be at least 4 * n0")

    def checkpoints(self) -> List[int]:
        out = []
        n = self.n0
        while n <= self.n_max:
            out.append(n)
            n *= 2
        return out


@dataclass
class StationaryBatch:
    """Stationary samples for a batch of replications."""

    z: np.ndarray
    horizon: np.ndarray
    censored: np.ndarray
    w1: Optional[np.ndarray] = None          # tandem station-1 delay of customer 0
    w2: Optional[np.ndarray] = None          # tandem station-2 delay of customer 0
    windows: Optional[list] = None           # realized final windows, on request


def stationary_dater_sample(kernel: Kernel, policy: HorizonPolicy,
                            stream: RngStream) -> Tuple[float, int, bool]:
    """One stationary dater draw: (value, onset horizon, censored flag)."""
    batch = batch_stationary_daters(kernel, policy, [stream])
    return float(batch.z[0]), int(batch.horizon[0]), bool(batch.censored[0])


def batch_stationary_daters(kernel: Kernel, policy: HorizonPolicy,
                            streams: Sequence[RngStream],
                            want_w2: bool = False,
                            want_windows: bool = False) -> StationaryBatch:
    """Stationary daters for a batch of replications, one stream each.

    The same draw protocol runs for a batch of one, so single samples and
    batched runs agree bit-exactly per stream.
    """
    if want_w2 and not isinstance(kernel, TandemModel):
        raise ValueError("station-2 delays exist only for the tandem model")
    if isinstance(kernel, (SingleServerModel, TandemModel, MultiServerModel)):
        return _cohort_daters(kernel, policy, streams, want_w2, want_windows)
    return _generic_daters(kernel, policy, streams, want_windows)


# ---------------------------------------------------------------------------
# Cohort engine: stage-synchronized doubling with depth-indexed matrices.
# Column d of a matrix belongs to customer -d; column j of the spacing matrix
# is the interarrival between customers -(j+1) and -j.
# ---------------------------------------------------------------------------


def _cohort_daters(kernel: Kernel, policy: HorizonPolicy,
                   streams: Sequence[RngStream],
                   want_w2: bool, want_windows: bool) -> StationaryBatch:
    reps = len(streams)
    if reps == 0:
        empty = np.empty(0)
        return StationaryBatch(z=empty, horizon=np.empty(0, dtype=np.int64),
                               censored=np.empty(0, dtype=bool),
                               w1=empty if want_w2 else None,
                               w2=empty if want_w2 else None,
                               windows=[] if want_windows else None)
    out_z = np.full(reps, np.nan)
    out_h = np.zeros(reps, dtype=np.int64)
    out_c = np.zeros(reps, dtype=bool)
    out_w1 = np.full(reps, np.nan) if want_w2 else None
    out_w2 = np.full(reps, np.nan) if want_w2 else None
    windows: Optional[list] = [None] * reps if want_windows else None

    tandem = isinstance(kernel, TandemModel)
    arrivals = kernel.arrivals
    det_spacing = arrivals.spacing if isinstance(arrivals, DeterministicArrivals) else None

    srv_gens = [s.generator(SERVICE_ROLE) for s in streams]
    arr_gens = None if det_spacing is not None else [s.generator(ARRIVAL_ROLE) for s in streams]

    active = np.arange(reps)
    sig1 = np.empty((reps, 0))
    sig2 = np.empty((reps, 0)) if tandem else None
    tau = None if det_spacing is not None else np.empty((reps, 0))

    prev_z = np.full(reps, -1.0)
    prev_w1 = np.full(reps, -1.0)
    stable = np.zeros(reps, dtype=np.int64)
    onset = np.full(reps, policy.n0, dtype=np.int64)

    checkpoints = policy.checkpoints()
    prev_cur = 0
    for ci, cur in enumerate(checkpoints):
        span = cur - prev_cur + (1 if prev_cur == 0 else 0)
        nact = len(active)
        # stage draws, one call per replication per matrix
        if tandem:
            new1 = np.empty((nact, span))
            new2 = np.empty((nact, span))
            if kernel.coupling == "comonotone":
                for row, rep in enumerate(active):
                    u = srv_gens[rep].random(span)
                    new1[row] = u
                    new2[row] = u
            else:
                for row, rep in enumerate(active):
                    u = srv_gens[rep].random((span, 2))
                    new1[row] = u[:, 0]
                    new2[row] = u[:, 1]
            new1 = np.asarray(kernel.services[0].quantile(new1), dtype=float)
            new2 = np.asarray(kernel.services[1].quantile(new2), dtype=float)
            sig2 = np.hstack([sig2, new2])
        else:
            new1 = np.empty((nact, span))
            for row, rep in enumerate(active):
                new1[row] = srv_gens[rep].random(span)
            new1 = np.asarray(kernel.service.quantile(new1), dtype=float)
        sig1 = np.hstack([sig1, new1])
        tau_span = cur - prev_cur
        if det_spacing is None:
            new_tau = np.empty((nact, tau_span))
            for row, rep in enumerate(active):
                new_tau[row] = arr_gens[rep].random(tau_span)
            new_tau = np.asarray(arrivals.dist.quantile(new_tau), dtype=float)
            tau = np.hstack([tau, new_tau])

        # evaluate the window dater at this checkpoint
        tau_part = tau if det_spacing is None else det_spacing
        if isinstance(kernel, SingleServerModel):
            z_now = _eval_single(sig1, tau_part)
            w1_now = None
        elif tandem:
            z_now, w1_now, _ = _eval_tandem(sig1, sig2, tau_part)
        else:
            z_now = _eval_multi(kernel.servers, sig1, tau_part)
            w1_now = None

        pz = prev_z[active]
        if not np.all(z_now >= pz):
            raise AssertionError("window dater decreased along a nested extension")
        eq = z_now == pz
        if w1_now is not None:
            eq &= w1_now == prev_w1[active]
        stable_act = np.where(eq, stable[active] + 1, 0)
        onset_act = np.where(eq, onset[active], cur)
        stable[active] = stable_act
        onset[active] = onset_act
        prev_z[active] = z_now
        if w1_now is not None:
            prev_w1[active] = w1_now

        last = ci == len(checkpoints) - 1
        done = stable_act >= 2
        finish = done | last
        if np.any(finish):
            idx = active[finish]
            out_z[idx] = z_now[finish]
            out_h[idx] = np.where(done[finish], onset_act[finish], cur)
            out_c[idx] = ~done[finish]
            if want_w2:
                z_f = z_now[finish]
                w1_f = w1_now[finish]
                out_w1[idx] = w1_f
                out_w2[idx] = z_f - w1_f - sig1[finish, 0] - (sig2[finish, 0] if tandem else 0.0)
            if want_windows:
                rows = np.nonzero(finish)[0]
                for row in rows:
                    # the window that attained the returned value; the
                    # confirmation doublings beyond the onset are bookkeeping
                    n_win = int(onset_act[row]) if done[row] else cur
                    windows[active[row]] = _window_from_depth(
                        kernel, sig1[row, :n_win + 1],
                        None if sig2 is None else sig2[row, :n_win + 1],
                        tau[row, :n_win] if det_spacing is None else None,
                        det_spacing)
        keep = ~finish
        if not np.any(keep):
            break
        active = active[keep]
        sig1 = sig1[keep]
        if tandem:
            sig2 = sig2[keep]
        if det_spacing is None:
            tau = tau[keep]
        prev_cur = cur

    return StationaryBatch(z=out_z, horizon=out_h, censored=out_c,
                           w1=out_w1, w2=out_w2, windows=windows)


def _eval_single(sig: np.ndarray, tau) -> np.ndarray:
    """Dater of the nested window: sigma_0 plus the running max of the
    service-minus-spacing walk into the past."""
    if sig.shape[1] == 1:
        return sig[:, 0].copy()
    inc = sig[:, 1:] - (tau if not np.isscalar(tau) else tau)
    walk = np.cumsum(inc, axis=1)
    return sig[:, 0] + np.maximum(0.0, walk.max(axis=1))


def _eval_tandem(sig1: np.ndarray, sig2: np.ndarray, tau
                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized split-form dater of the tandem plus the station-1 delay."""
    nact, width = sig1.shape
    cur = width - 1
    if np.isscalar(tau):
        ct = np.arange(width) * tau
        ct = np.broadcast_to(ct, (nact, width))
    else:
        ct = np.concatenate([np.zeros((nact, 1)), np.cumsum(tau, axis=1)], axis=1)
    a1 = np.cumsum(sig1, axis=1)
    a2 = np.cumsum(sig2, axis=1)
    g = a1 - ct
    # suffix running max of g along increasing depth
    sufmax = np.flip(np.maximum.accumulate(np.flip(g, axis=1), axis=1), axis=1)
    z = (a2 - (a1 - sig1) + sufmax).max(axis=1)
    if cur >= 1:
        walk = np.cumsum(sig1[:, 1:] - tau, axis=1)
        w1 = np.maximum(0.0, walk.max(axis=1))
    else:
        w1 = np.zeros(nact)
    return z, w1, a2


def _eval_multi(servers: int, sig: np.ndarray, tau) -> np.ndarray:
    """Ordered-workload recursion from the deepest customer forward."""
    nact, width = sig.shape
    w = np.zeros((nact, servers))
    scalar_tau = np.isscalar(tau)
    for depth in range(width - 1, 0, -1):
        w[:, 0] += sig[:, depth]
        w -= tau if scalar_tau else tau[:, depth - 1][:, None]
        np.clip(w, 0.0, None, out=w)
        w.sort(axis=1)
    return np.maximum(w[:, 0] + sig[:, 0], w[:, -1])


def _window_from_depth(kernel: Kernel, sig1_row: np.ndarray,
                       sig2_row: Optional[np.ndarray],
                       tau_row: Optional[np.ndarray],
                       det_spacing: Optional[float]) -> Window:
    """Materialize the final left-to-right window of one replication."""
    width = len(sig1_row)
    if det_spacing is not None:
        ct = np.arange(width) * det_spacing
    else:
        ct = np.concatenate([[0.0], np.cumsum(tau_row)])
    epochs = -ct[::-1]
    if sig2_row is not None:
        driving = np.stack([sig1_row[::-1], sig2_row[::-1]], axis=1)
    else:
        driving = sig1_row[::-1].copy()
    return Window(m=-(width - 1), epochs=epochs, driving=driving)


def _generic_daters(kernel: Kernel, policy: HorizonPolicy,
                    streams: Sequence[RngStream],
                    want_windows: bool) -> StationaryBatch:
    """Per-replication fallback for kernels without a vectorized evaluator:
    grow the window leftward and re-evaluate at each checkpoint."""
    reps = len(streams)
    out_z = np.full(reps, np.nan)
    out_h = np.zeros(reps, dtype=np.int64)
    out_c = np.zeros(reps, dtype=bool)
    windows: Optional[list] = [None] * reps if want_windows else None
    checkpoints = policy.checkpoints()

    for i, stream in enumerate(streams):
        srv_gen = stream.generator(SERVICE_ROLE)
        route_gen = stream.generator(ROUTE_ROLE)
        arr_gen = stream.generator(ARRIVAL_ROLE)
        driving: list = []
        tau: list = []
        prev = -1.0
        stable = 0
        onset = checkpoints[0]
        prev_cur = 0
        for ci, cur in enumerate(checkpoints):
            count = (cur - prev_cur) + (1 if prev_cur == 0 else 0)
            new_driving = kernel.sample_driving_gens(count, srv_gen, route_gen)
            driving.extend(new_driving)
            tau.extend(kernel.arrivals.sample_interarrivals(cur - prev_cur, arr_gen))
            ct = np.concatenate([[0.0], np.cumsum(tau)])
            epochs = -ct[::-1]
            window = Window(m=-cur, epochs=epochs, driving=_reorder(driving))
            z = kernel.maximal_dater(window)
            if z < prev:
                raise AssertionError("window dater decreased along a nested extension")
            if z == prev:
                stable += 1
            else:
                stable = 0
                onset = cur
            prev = z
            if stable >= 2 or ci == len(checkpoints) - 1:
                out_z[i] = z
                out_h[i] = onset if stable >= 2 else cur
                out_c[i] = stable < 2
                if want_windows:
                    n_win = int(out_h[i])
                    ct_w = np.concatenate([[0.0], np.cumsum(tau[:n_win])])
                    windows[i] = Window(m=-n_win, epochs=-ct_w[::-1],
                                        driving=_reorder(driving[:n_win + 1]))
                break
            prev_cur = cur
    return StationaryBatch(z=out_z, horizon=out_h, censored=out_c, windows=windows)


def _reorder(driving_by_depth: list):
    """Depth-ordered driving records to left-to-right order."""
    rev = list(reversed(driving_by_depth))
    if np.isscalar(rev[0]) or isinstance(rev[0], (float, np.floating, np.ndarray)):
        return np.asarray(rev, dtype=float)
    return tuple(rev)


# ---------------------------------------------------------------------------
# Tail estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailEstimate:
    """Estimated exceedance curve over a level grid."""

    levels: np.ndarray
    p_hat: np.ndarray
    half_width: np.ndarray
    replications: int
    censored: int
    censor_fraction: float
    tainted: bool
    seed: int
    formula: Optional[np.ndarray] = None
    ratio: Optional[np.ndarray] = None

    CSV_HEADER = "x,p_hat,ci_lo,ci_hi,formula,ratio,censor_frac"

    def rows(self) -> List[dict]:
        out = []
        for i, x in enumerate(self.levels):
            out.append({
                "x": float(x),
                "p_hat": float(self.p_hat[i]),
                "ci_lo": float(max(0.0, self.p_hat[i] - self.half_width[i])),
                "ci_hi": float(min(1.0, self.p_hat[i] + self.half_width[i])),
                "formula": None if self.formula is None else float(self.formula[i]),
                "ratio": None if self.ratio is None else float(self.ratio[i]),
                "censor_frac": self.censor_fraction,
            })
        return out


def estimate_tail(kernel: Kernel, levels: Sequence[float], replications: int,
                  policy: HorizonPolicy, seed: int,
                  formula: Optional[Callable[[float], float]] = None,
                  statistic: str = "dater",
                  chunk_size: int = 65536, threads: int = 1) -> TailEstimate:
    """Exceedance probabilities of the stationary dater over a level grid.

    ``statistic`` may be "dater" or "station2_delay" (tandem only).  When a
    formula callable is supplied, per-level values and estimate/formula
    ratios are attached.
    """
    levels = np.asarray(sorted(float(x) for x in levels))
    if len(levels) == 0:
        raise ValueError("need at least one level")
    want_w2 = statistic == "station2_delay"
    if statistic not in ("dater", "station2_delay"):
        raise ValueError(f"unknown statistic {statistic!r}")

    ranges = [(lo, min(lo + chunk_size, replications))
              for lo in range(0, replications, chunk_size)]

    def one_chunk(bounds: Tuple[int, int]) -> Tuple[np.ndarray, int]:
        lo, hi = bounds
        streams = [RngStream(seed, i) for i in range(lo, hi)]
        batch = batch_stationary_daters(kernel, policy, streams, want_w2=want_w2)
        values = batch.w2 if want_w2 else batch.z
        counts = np.array([(values > x).sum() for x in levels], dtype=np.int64)
        return counts, int(batch.censored.sum())

    counts = np.zeros(len(levels), dtype=np.int64)
    censored = 0
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for c, cen in pool.map(one_chunk, ranges):
                counts += c
                censored += cen
    else:
        for bounds in ranges:
            c, cen = one_chunk(bounds)
            counts += c
            censored += cen

    p = counts / replications
    hw = 1.96 * np.sqrt(p * (1.0 - p) / replications)
    censor_fraction = censored / replications
    formula_vals = None
    ratios = None
    if formula is not None:
        formula_vals = np.array([formula(float(x)) for x in levels])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(formula_vals > 0.0, p / formula_vals, np.nan)
    return TailEstimate(levels=levels, p_hat=p, half_width=hw,
                        replications=replications, censored=censored,
                        censor_fraction=censor_fraction,
                        tainted=censor_fraction > 1e-3, seed=seed,
                        formula=formula_vals, ratio=ratios)


def collect_daters(kernel: Kernel, count: int, policy: HorizonPolicy, seed: int,
                   statistic: str = "dater", chunk_size: int = 65536) -> np.ndarray:
    """Raw stationary samples (for tail-index and moment diagnostics)."""
    want_w2 = statistic == "station2_delay"
    out = np.empty(count)
    for lo in range(0, count, chunk_size):
        hi = min(lo + chunk_size, count)
        streams = [RngStream(seed, i) for i in range(lo, hi)]
        batch = batch_stationary_daters(kernel, policy, streams, want_w2=want_w2)
        out[lo:hi] = batch.w2 if want_w2 else batch.z
    return out


# ---------------------------------------------------------------------------
# Tail index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HillEstimate:
    index: float
    std_error: float
    k: int
    sample_count: int


def hill_tail_index(samples: np.ndarray, k: int, n_boot: int = 200,
                    seed: int = 0) -> HillEstimate:
    """Hill tail-index estimate over the k largest order statistics, with a
    bootstrap standard error."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if k < 10:
        raise ValueError("need k >= 10 top order statistics")
    if k >= n / 2:
        raise ValueError(f"k={k} too large for {n} samples (need k < n/2)")

    def _hill(arr: np.ndarray) -> float:
        top = np.partition(arr, n - k - 1)[n - k - 1:]
        floor = float(np.min(top))
        if floor <= 0.0:
            raise ValueError("tail order statistics must be positive")
        logs = np.log(np.sort(top)[1:]) - math.log(floor)
        h = float(logs.mean())
        if h <= 0.0:
            raise ValueError("degenerate sample: zero log spacings in the tail")
        return 1.0 / h

    index = _hill(samples)
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0xB00,))))
    boot = np.empty(n_boot)
    for b in range(n_boot):
        resample = samples[gen.integers(0, n, n)]
        boot[b] = _hill(resample)
    return HillEstimate(index=index, std_error=float(boot.std(ddof=1)), k=k,
                        sample_count=n)


@dataclass(frozen=True)
class MomentCheckReport:
    """Hill index of simulated daters against the index implied by the
    service tail (one less than the service index)."""

    service_index: float
    expected_index: float
    dater_index: float
    gap: float
    heavy_tailed: bool
    drift_ratio: float
    hill: HillEstimate

    def as_dict(self) -> dict:
        return {"service_index": self.service_index,
                "expected_index": self.expected_index,
                "dater_index": self.dater_index, "gap": self.gap,
                "heavy_tailed": self.heavy_tailed,
                "drift_ratio": self.drift_ratio,
                "hill_se": self.hill.std_error, "k": self.hill.k}


def moment_order_check(kernel: Kernel, service_index: float,
                       policy: HorizonPolicy, seed: int,
                       samples: int = 200_000, k: int = 1000) -> MomentCheckReport:
    """Check that dater samples carry tail index (service index - 1).

    A Hill estimate that keeps drifting upward as the tail is probed deeper
    (smaller k) marks the sample as not heavy-tailed.
    """
    z = collect_daters(kernel, samples, policy, seed)
    est = hill_tail_index(z, k, seed=seed)
    k_lo = max(10, k // 4)
    k_hi = min(4 * k, (len(z) - 1) // 2)
    deep = hill_tail_index(z, k_lo, n_boot=50, seed=seed)
    shallow = hill_tail_index(z, k_hi, n_boot=50, seed=seed)
    drift = deep.index / shallow.index
    heavy = drift < 1.4
    expected = service_index - 1.0
    return MomentCheckReport(service_index=service_index,
                             expected_index=expected,
                             dater_index=est.index,
                             gap=est.index - expected,
                             heavy_tailed=heavy, drift_ratio=drift, hill=est)


# ---------------------------------------------------------------------------
# Single-big-jump census
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BigJumpReport:
    """Census of driving variables exceeding a fraction of the level across
    replications conditioned on a large dater."""

    level: float
    conditioned: int
    budget_used: int
    starved: bool
    fractions: Dict[float, Dict[str, float]]  # theta -> {zero, one, two_plus}

    def as_dict(self) -> dict:
        return {"level": self.level, "conditioned": self.conditioned,
                "budget_used": self.budget_used, "starved": self.starved,
                "fractions": {str(t): f for t, f in self.fractions.items()}}


def _jump_matrix(kernel: Kernel, window: Window) -> np.ndarray:
    if kernel.has_AA:
        return kernel.customer_station_work(window)
    return np.asarray(window.driving, dtype=float).reshape(window.size, -1)


def big_jump_diagnostic(kernel: Kernel, level: float, policy: HorizonPolicy,
                        seed: int, thetas: Sequence[float] = (0.1, 0.25, 0.5),
                        target: int = 200, budget: int = 1_000_000,
                        chunk_size: int = 65536) -> BigJumpReport:
    """Count big driving variables on paths conditioned on dater > level.

    Conditioned replications are replayed from their streams to materialize
    the realized window; per-customer, per-station work entries above
    theta * level are counted for each theta.
    """
    conditioned: List[int] = []
    used = 0
    for lo in range(0, budget, chunk_size):
        hi = min(lo + chunk_size, budget)
        streams = [RngStream(seed, i) for i in range(lo, hi)]
        batch = batch_stationary_daters(kernel, policy, streams)
        hits = np.nonzero(batch.z > level)[0]
        conditioned.extend(int(lo + h) for h in hits)
        used = hi
        if len(conditioned) >= target:
            conditioned = conditioned[:target]
            break

    fractions: Dict[float, Dict[str, float]] = {}
    if conditioned:
        replay = batch_stationary_daters(
            kernel, policy, [RngStream(seed, i) for i in conditioned],
            want_windows=True)
        counts = {t: [] for t in thetas}
        for window in replay.windows:
            mat = _jump_matrix(kernel, window)
            for t in thetas:
                counts[t].append(int((mat > t * level).sum()))
        for t in thetas:
            arr = np.asarray(counts[t])
            fractions[t] = {"zero": float((arr == 0).mean()),
                            "one": float((arr == 1).mean()),
                            "two_plus": float((arr >= 2).mean())}
    return BigJumpReport(level=level, conditioned=len(conditioned),
                         budget_used=used, starved=len(conditioned) == 0,
                         fractions=fractions)


# ---------------------------------------------------------------------------
# Sum/max tail equivalence of per-station work vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HCheckReport:
    levels: np.ndarray
    p_sum: np.ndarray
    p_max: np.ndarray
    marginal_sum: np.ndarray
    max_over_marginals: np.ndarray      # p_max / sum_j p_j
    sum_over_marginals: np.ndarray      # p_sum / sum_j p_j
    ratio_ci: np.ndarray                # (levels, 2, 2): per ratio lo/hi
    deepest_level: Optional[float]
    dropped_levels: int
    consistent: bool

    def as_dict(self) -> dict:
        return {"levels": self.levels.tolist(),
                "p_sum": self.p_sum.tolist(), "p_max": self.p_max.tolist(),
                "marginal_sum": self.marginal_sum.tolist(),
                "max_over_marginals": self.max_over_marginals.tolist(),
                "sum_over_marginals": self.sum_over_marginals.tolist(),
                "deepest_level": self.deepest_level,
                "dropped_levels": self.dropped_levels,
                "consistent": self.consistent}


def independent_vector_sampler(dists: Sequence[Distribution]):
    """Sampler of independent per-station work vectors."""
    def draw(count: int, stream: RngStream) -> np.ndarray:
        gen = stream.generator(SERVICE_ROLE)
        u = gen.random((count, len(dists)))
        cols = [np.asarray(d.quantile(u[:, j]), dtype=float)
                for j, d in enumerate(dists)]
        return np.stack(cols, axis=1)
    return draw


def comonotone_vector_sampler(dist: Distribution, r: int):
    """Sampler of fully dependent copies (one uniform drives every station)."""
    def draw(count: int, stream: RngStream) -> np.ndarray:
        gen = stream.generator(SERVICE_ROLE)
        col = np.asarray(dist.quantile(gen.random(count)), dtype=float)
        return np.tile(col[:, None], (1, r))
    return draw


def jackson_work_sampler(model: JacksonModel):
    """Sampler of lone-customer per-station work vectors of a network."""
    def draw(count: int, stream: RngStream) -> np.ndarray:
        srv = stream.generator(SERVICE_ROLE)
        rt = stream.generator(ROUTE_ROLE)
        out = np.empty((count, model.r))
        for i in range(count):
            out[i] = model.sample_route(srv, rt).station_work(model.r)
        return out
    return draw


def check_assumption_H(sampler, levels: Sequence[float], samples: int,
                       seed: int, band: Tuple[float, float] = (0.8, 1.25),
                       min_exceedances: int = 25,
                       chunk_size: int = 200_000) -> HCheckReport:
    """Empirical tail equivalence of sum, max and marginal-sum of a work
    vector over a level grid.

    The verdict is taken at the deepest level where all three counts resolve;
    unresolvable levels are dropped from the grid and counted.
    """
    levels = np.asarray(sorted(float(x) for x in levels))
    n_sum = np.zeros(len(levels), dtype=np.int64)
    n_max = np.zeros(len(levels), dtype=np.int64)
    n_marg: Optional[np.ndarray] = None
    done = 0
    idx = 0
    while done < samples:
        take = min(chunk_size, samples - done)
        mat = sampler(take, RngStream(seed, idx))
        idx += 1
        done += take
        if n_marg is None:
            n_marg = np.zeros((len(levels), mat.shape[1]), dtype=np.int64)
        row_sum = mat.sum(axis=1)
        row_max = mat.max(axis=1)
        for i, x in enumerate(levels):
            n_sum[i] += int((row_sum > x).sum())
            n_max[i] += int((row_max > x).sum())
            n_marg[i] += (mat > x).sum(axis=0)

    p_sum = n_sum / samples
    p_max = n_max / samples
    marg = n_marg.sum(axis=1) / samples

    def ratio_ci(p1: np.ndarray, n1: np.ndarray, p2: np.ndarray, n2: np.ndarray
                 ) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(p2 > 0, p1 / p2, np.nan)
            se = np.sqrt(np.where(n1 > 0, (1 - p1) / np.maximum(n1, 1), np.inf)
                         + np.where(n2 > 0, (1 - p2) / np.maximum(n2, 1), np.inf))
            lo = r * np.exp(-1.96 * se)
            hi = r * np.exp(1.96 * se)
        return np.stack([lo, hi], axis=1)

    marg_counts = n_marg.sum(axis=1)
    ci_max = ratio_ci(p_max, n_max, marg, marg_counts)
    ci_sum = ratio_ci(p_sum, n_sum, marg, marg_counts)
    ratio_ci_arr = np.stack([ci_max, ci_sum], axis=1)

    resolvable = (n_sum >= min_exceedances) & (n_max >= min_exceedances) \
        & (marg_counts >= min_exceedances)
    dropped = int(len(levels) - resolvable.sum())
    deepest = None
    consistent = False
    if np.any(resolvable):
        i = int(np.nonzero(resolvable)[0].max())
        deepest = float(levels[i])
        lo_band, hi_band = band
        consistent = all(ci[0] <= hi_band and ci[1] >= lo_band
                         for ci in (ci_max[i], ci_sum[i]))
    with np.errstate(divide="ignore", invalid="ignore"):
        max_over = np.where(marg > 0, p_max / marg, np.nan)
        sum_over = np.where(marg > 0, p_sum / marg, np.nan)
    return HCheckReport(levels=levels, p_sum=p_sum, p_max=p_max,
                        marginal_sum=marg, max_over_marginals=max_over,
                        sum_over_marginals=sum_over, ratio_ci=ratio_ci_arr,
                        deepest_level=deepest, dropped_levels=dropped,
                        consistent=consistent)


# ---------------------------------------------------------------------------
# Deterministic versus renewal interarrivals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InsensitivityReport:
    levels: np.ndarray
    p_deterministic: np.ndarray
    p_renewal: np.ndarray
    ratio: np.ndarray
    ratio_ci: np.ndarray            # (levels, 2)
    deepest_level: Optional[float]
    deepest_contains_one: bool
    mismatch: bool

    def as_dict(self) -> dict:
        return {"levels": self.levels.tolist(),
                "p_deterministic": self.p_deterministic.tolist(),
                "p_renewal": self.p_renewal.tolist(),
                "ratio": self.ratio.tolist(),
                "ratio_ci": self.ratio_ci.tolist(),
                "deepest_level": self.deepest_level,
                "deepest_contains_one": self.deepest_contains_one,
                "mismatch": self.mismatch}


def interarrival_insensitivity_check(kernel: Kernel, a: float,
                                     levels: Sequence[float],
                                     replications: int, policy: HorizonPolicy,
                                     seed: int, chunk_size: int = 65536,
                                     min_exceedances: int = 25,
                                     a_renewal: Optional[float] = None
                                     ) -> InsensitivityReport:
    """Tail estimates under equally spaced versus exponential interarrivals
    of the same mean, on shared service streams (paired comparison).

    ``a_renewal`` overrides the renewal-side mean; a deliberate mismatch is
    how the misconfiguration flag is exercised.
    """
    det = dc_replace(kernel, arrivals=DeterministicArrivals(a))
    ren = dc_replace(kernel, arrivals=RenewalArrivals(
        Exponential(rate=1.0 / (a if a_renewal is None else a_renewal))))
    est_d = estimate_tail(det, levels, replications, policy, seed, chunk_size=chunk_size)
    est_r = estimate_tail(ren, levels, replications, policy, seed, chunk_size=chunk_size)

    n = replications
    cnt_d = np.rint(est_d.p_hat * n).astype(np.int64)
    cnt_r = np.rint(est_r.p_hat * n).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(est_r.p_hat > 0, est_d.p_hat / est_r.p_hat, np.nan)
        se = np.sqrt(np.where(cnt_d > 0, (1 - est_d.p_hat) / np.maximum(cnt_d, 1), np.inf)
                     + np.where(cnt_r > 0, (1 - est_r.p_hat) / np.maximum(cnt_r, 1), np.inf))
        ci = np.stack([ratio * np.exp(-1.96 * se), ratio * np.exp(1.96 * se)], axis=1)

    resolvable = (cnt_d >= min_exceedances) & (cnt_r >= min_exceedances)
    deepest = None
    contains = False
    mismatch = False
    if np.any(resolvable):
        i = int(np.nonzero(resolvable)[0].max())
        deepest = float(est_d.levels[i])
        contains = bool(ci[i, 0] <= 1.0 <= ci[i, 1])
        # gross misconfiguration flag: genuine arrival-shape differences stay
        # well inside this band at any depth, a wrong mean does not
        mismatch = bool(ci[i, 1] < 1.0 / 3.0 or ci[i, 0] > 3.0)
    return InsensitivityReport(levels=est_d.levels,
                               p_deterministic=est_d.p_hat,
                               p_renewal=est_r.p_hat, ratio=ratio,
                               ratio_ci=ci, deepest_level=deepest,
                               deepest_contains_one=contains,
                               mismatch=mismatch)
