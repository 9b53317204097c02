"""Service and interarrival distributions, arrival processes, and random streams.

Every family supports exact closed-form tails, first moments, and
inverse-transform sampling, so that a fixed uniform input always maps to the
same quantile.  That coupling is what the pathwise comparison harnesses rely
on: perturb an input while holding the underlying uniforms fixed.

Integrated tails (the survival function of the integrated-tail distribution,
``min(1, integral of the tail from x to infinity)``) are closed form for
Pareto, Exponential and Deterministic, and computed by adaptive Simpson
quadrature for Weibull and Lognormal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

__all__ = [
    "RngStream",
    "SERVICE_ROLE",
    "ARRIVAL_ROLE",
    "ROUTE_ROLE",
    "Pareto",
    "Weibull",
    "Lognormal",
    "Exponential",
    "Deterministic",
    "Distribution",
    "SubexpClassification",
    "is_subexponential_family",
    "normal_tail",
    "normal_ppf",
    "DeterministicArrivals",
    "RenewalArrivals",
    "ArrivalSpec",
    "dist_from_config",
    "dist_to_config",
    "arrivals_from_config",
    "arrivals_to_config",
]

ArrayLike = Union[float, np.ndarray]

# Stream roles: one substream per kind of randomness so that, e.g., switching
# the arrival process leaves the service draws of a replication untouched.
SERVICE_ROLE = 0
ARRIVAL_ROLE = 1
ROUTE_ROLE = 2


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by (master seed, replication index).

    Distinct (seed, index) pairs give statistically independent streams;
    identical pairs reproduce identical draws bit-exactly.  ``generator(role)``
    returns an independent substream per role so unrelated draw kinds never
    share a counter.
    """

    seed: int
    index: int = 0

    def generator(self, role: int = SERVICE_ROLE) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.index, role))
        return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Standard normal helpers
# ---------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)


def normal_tail(x: float) -> float:
    """Upper tail of the standard normal distribution, via erfc."""
    return 0.5 * math.erfc(x / _SQRT2)


# Coefficients of the Acklam rational approximation to the normal quantile.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def _norm_ppf_scalar(p: float) -> float:
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q
              + _PPF_C[4]) * q + _PPF_C[5])
             / ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1.0))
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((((_PPF_A[0] * r + _PPF_A[1]) * r + _PPF_A[2]) * r + _PPF_A[3]) * r
              + _PPF_A[4]) * r + _PPF_A[5]) * q
             / (((((_PPF_B[0] * r + _PPF_B[1]) * r + _PPF_B[2]) * r + _PPF_B[3]) * r
                 + _PPF_B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q
               + _PPF_C[4]) * q + _PPF_C[5])
              / ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1.0))
    # One Halley refinement against erfc brings the result to full precision.
    e = 0.5 * math.erfc(-x / _SQRT2) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


_norm_ppf_vec = np.vectorize(_norm_ppf_scalar, otypes=[float])


def normal_ppf(p: ArrayLike) -> ArrayLike:
    """Standard normal quantile function (inverse of the CDF)."""
    if np.isscalar(p):
        return _norm_ppf_scalar(float(p))
    return _norm_ppf_vec(p)


_erfc_vec = np.vectorize(math.erfc, otypes=[float])


# ---------------------------------------------------------------------------
# Adaptive Simpson quadrature of a tail (used where no closed form exists)
# ---------------------------------------------------------------------------

def _integrate_tail(tail, x0: float, rel_tol: float = 1e-8) -> float:
    """Integrate ``tail(u)`` from x0 to infinity by adaptive Simpson.

    The upper limit is pushed out by doubling until the tail has decayed to
    1e-16 of its value at x0; panels are then split recursively until the
    local Simpson refinement stabilizes, so kinks at support edges only cost
    local subdivisions.
    """
    t0 = tail(x0)
    if t0 <= 0.0:
        return 0.0
    cutoff = 1e-16 * t0
    upper = x0 + 1.0
    for _ in range(200):
        if tail(upper) < cutoff:
            break
        upper = x0 + 2.0 * (upper - x0)

    def simpson(a: float, fa: float, m: float, fm: float, b: float, fb: float) -> float:
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    # seed panels on a geometric-ish grid so mass near x0 is seen early
    seeds = [x0 + (upper - x0) * t for t in
             (0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.25, 0.5, 0.75, 1.0)]
    coarse = 0.0
    panels = []
    for a, b in zip(seeds[:-1], seeds[1:]):
        m = 0.5 * (a + b)
        fa, fm, fb = tail(a), tail(m), tail(b)
        panels.append((a, fa, m, fm, b, fb))
        coarse += simpson(a, fa, m, fm, b, fb)
    tol = rel_tol * max(abs(coarse), 1e-300)

    def refine(a, fa, m, fm, b, fb, whole, tol, depth) -> float:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = tail(lm), tail(rm)
        left = simpson(a, fa, lm, flm, m, fm)
        right = simpson(m, fm, rm, frm, b, fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (refine(a, fa, lm, flm, m, fm, left, tol / 2.0, depth - 1)
                + refine(m, fm, rm, frm, b, fb, right, tol / 2.0, depth - 1))

    total = 0.0
    for a, fa, m, fm, b, fb in panels:
        whole = simpson(a, fa, m, fm, b, fb)
        total += refine(a, fa, m, fm, b, fb, whole, tol / len(panels), 48)
    return total


# ---------------------------------------------------------------------------
# Distribution families
# ---------------------------------------------------------------------------


class _Dist:
    """Shared behaviour: sampling via quantile and the integrated tail clamp."""

    def sample(self, rng: RngStream, size: Optional[int] = None,
               generator: Optional[np.random.Generator] = None) -> ArrayLike:
        """Draw by inverse transform from this family."""
        gen = generator if generator is not None else rng.generator(SERVICE_ROLE)
        u = gen.random() if size is None else gen.random(size)
        return self.quantile(u)

    def integrated_tail(self, x: float) -> float:
        """min(1, integral of tail(u) du from x to infinity)."""
        x = float(x)
        if math.isinf(x) and x > 0:
            return 0.0
        if x < 0.0:
            return min(1.0, -x + self._tail_integral(0.0))
        return min(1.0, self._tail_integral(x))

    def _tail_integral(self, x: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Pareto(_Dist):
    """Pareto with tail (x / xm)^-alpha on [xm, infinity); alpha > 1."""

    alpha: float
    xm: float

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"Pareto index must exceed 1, got {self.alpha}")
        if not self.xm > 0.0:
            raise ValueError(f"Pareto scale must be positive, got {self.xm}")

    @classmethod
    def with_mean(cls, alpha: float, mean: float) -> "Pareto":
        return cls(alpha=alpha, xm=mean * (alpha - 1.0) / alpha)

    def mean(self) -> float:
        return self.alpha * self.xm / (self.alpha - 1.0)

    def variance(self) -> float:
        if self.alpha <= 2.0:
            return math.inf
        a = self.alpha
        return self.xm ** 2 * a / ((a - 1.0) ** 2 * (a - 2.0))

    def tail(self, x: ArrayLike) -> ArrayLike:
        if np.isscalar(x):
            return 1.0 if x <= self.xm else (x / self.xm) ** (-self.alpha)
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.xm, 1.0, (np.maximum(x, self.xm) / self.xm) ** (-self.alpha))

    def quantile(self, u: ArrayLike) -> ArrayLike:
        if np.isscalar(u):
            return self.xm * (1.0 - u) ** (-1.0 / self.alpha)
        return self.xm * (1.0 - np.asarray(u)) ** (-1.0 / self.alpha)

    def _tail_integral(self, x: float) -> float:
        head = self.xm / (self.alpha - 1.0)
        if x <= self.xm:
            return (self.xm - x) + head
        return head * (x / self.xm) ** (1.0 - self.alpha)


@dataclass(frozen=True)
class Weibull(_Dist):
    """Weibull with tail exp(-(x/scale)^shape), heavy-tailed for shape < 1."""

    shape: float
    scale: float

    def __post_init__(self):
        if not 0.0 < self.shape < 1.0:
            raise ValueError(f"Weibull shape must lie in (0,1), got {self.shape}")
        if not self.scale > 0.0:
            raise ValueError(f"Weibull scale must be positive, got {self.scale}")

    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def variance(self) -> float:
        g1 = math.gamma(1.0 + 1.0 / self.shape)
        g2 = math.gamma(1.0 + 2.0 / self.shape)
        return self.scale ** 2 * (g2 - g1 * g1)

    def tail(self, x: ArrayLike) -> ArrayLike:
        if np.isscalar(x):
            return 1.0 if x <= 0.0 else math.exp(-((x / self.scale) ** self.shape))
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, 1.0, np.exp(-((np.maximum(x, 0.0) / self.scale) ** self.shape)))

    def quantile(self, u: ArrayLike) -> ArrayLike:
        if np.isscalar(u):
            return self.scale * (-math.log1p(-u)) ** (1.0 / self.shape) if u > 0.0 else 0.0
        u = np.asarray(u)
        return self.scale * (-np.log1p(-u)) ** (1.0 / self.shape)

    def _tail_integral(self, x: float) -> float:
        return _integrate_tail(lambda u: self.tail(u), x)


@dataclass(frozen=True)
class Lognormal(_Dist):
    """Lognormal: log of the variable is Normal(mu, sigma^2)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"Lognormal spread must be positive, got {self.sigma}")

    def mean(self) -> float:
        return math.exp(self.mu + self.sigma ** 2 / 2.0)

    def variance(self) -> float:
        s2 = self.sigma ** 2
        return (math.exp(s2) - 1.0) * math.exp(2.0 * self.mu + s2)

    def tail(self, x: ArrayLike) -> ArrayLike:
        if np.isscalar(x):
            if x <= 0.0:
                return 1.0
            return 0.5 * math.erfc((math.log(x) - self.mu) / (self.sigma * _SQRT2))
        x = np.asarray(x, dtype=float)
        out = np.ones_like(x)
        pos = x > 0.0
        z = (np.log(x[pos]) - self.mu) / (self.sigma * _SQRT2)
        out[pos] = 0.5 * _erfc_vec(z)
        return out

    def quantile(self, u: ArrayLike) -> ArrayLike:
        z = normal_ppf(u)
        if np.isscalar(u):
            return math.exp(self.mu + self.sigma * z)
        return np.exp(self.mu + self.sigma * np.asarray(z))

    def _tail_integral(self, x: float) -> float:
        return _integrate_tail(lambda u: self.tail(u), x)


@dataclass(frozen=True)
class Exponential(_Dist):
    """Exponential with the given rate; the light-tailed reference family."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError(f"Exponential rate must be positive, got {self.rate}")

    def mean(self) -> float:
        return 1.0 / self.rate

    def variance(self) -> float:
        return 1.0 / self.rate ** 2

    def tail(self, x: ArrayLike) -> ArrayLike:
        if np.isscalar(x):
            return 1.0 if x <= 0.0 else math.exp(-self.rate * x)
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def quantile(self, u: ArrayLike) -> ArrayLike:
        if np.isscalar(u):
            return -math.log1p(-u) / self.rate
        return -np.log1p(-np.asarray(u)) / self.rate

    def _tail_integral(self, x: float) -> float:
        return math.exp(-self.rate * x) / self.rate


@dataclass(frozen=True)
class Deterministic(_Dist):
    """Point mass at a nonnegative value."""

    value: float

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError(f"Deterministic value must be nonnegative, got {self.value}")

    def mean(self) -> float:
        return self.value

    def variance(self) -> float:
        return 0.0

    def tail(self, x: ArrayLike) -> ArrayLike:
        if np.isscalar(x):
            return 1.0 if x < self.value else 0.0
        return np.where(np.asarray(x, dtype=float) < self.value, 1.0, 0.0)

    def quantile(self, u: ArrayLike) -> ArrayLike:
        if np.isscalar(u):
            return self.value
        return np.full(np.shape(u), self.value)

    def _tail_integral(self, x: float) -> float:
        return max(0.0, self.value - x)


Distribution = Union[Pareto, Weibull, Lognormal, Exponential, Deterministic]


# ---------------------------------------------------------------------------
# Tail-regime classification (analytic, per family)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubexpClassification:
    """Per-family tail regime flags.

    ``ratio_x_squared`` records whether the integrated tail at x^2 stays
    comparable to the one at x; ``ratio_2x`` the same for 2x.  Both are None
    for light-tailed families where the question does not arise.
    """

    f_subexponential: bool
    fs_subexponential: bool
    ratio_x_squared: Optional[bool]  # liminf Fbar_s(x^2)/Fbar_s(x) > 0
    ratio_2x: Optional[bool]         # liminf Fbar_s(2x)/Fbar_s(x) > 0


def is_subexponential_family(dist: Distribution) -> SubexpClassification:
    """Classify a family analytically; limit statements are never sampled."""
    if isinstance(dist, Pareto):
        # Regular variation: the 2x ratio tends to 2^(1-alpha) > 0, while the
        # x^2 ratio collapses like x^(1-alpha).
        return SubexpClassification(True, True, False, True)
    if isinstance(dist, (Weibull, Lognormal)):
        return SubexpClassification(True, True, False, False)
    if isinstance(dist, (Exponential, Deterministic)):
        return SubexpClassification(False, False, None, None)
    raise TypeError(f"unknown distribution type: {type(dist)!r}")


# ---------------------------------------------------------------------------
# Arrival processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeterministicArrivals:
    """Equally spaced arrivals with the given spacing."""

    spacing: float

    def __post_init__(self):
        if not self.spacing > 0.0:
            raise ValueError(f"arrival spacing must be positive, got {self.spacing}")

    @property
    def mean_spacing(self) -> float:
        return self.spacing

    def sample_interarrivals(self, n: int, generator: Optional[np.random.Generator] = None) -> np.ndarray:
        # No randomness consumed: deterministic arrivals leave the arrival
        # substream untouched, which keeps paired comparisons aligned.
        return np.full(n, self.spacing)


@dataclass(frozen=True)
class RenewalArrivals:
    """Renewal arrivals with i.i.d. spacings from the given distribution."""

    dist: Distribution

    def __post_init__(self):
        if isinstance(self.dist, Deterministic) and self.dist.value <= 0.0:
            raise ValueError("renewal spacing must be almost surely positive")

    @property
    def mean_spacing(self) -> float:
        return self.dist.mean()

    def sample_interarrivals(self, n: int, generator: Optional[np.random.Generator] = None) -> np.ndarray:
        if generator is None:
            raise ValueError("renewal arrivals need a generator")
        u = generator.random(n)
        return np.asarray(self.dist.quantile(u), dtype=float).reshape(n)


ArrivalSpec = Union[DeterministicArrivals, RenewalArrivals]


# ---------------------------------------------------------------------------
# Configuration literals
# ---------------------------------------------------------------------------

_FAMILY_FIELDS = {
    "pareto": ("alpha", "xm"),
    "weibull": ("shape", "scale"),
    "lognormal": ("mu", "sigma"),
    "exponential": ("rate",),
    "deterministic": ("value",),
}

_FAMILY_TYPES = {
    "pareto": Pareto,
    "weibull": Weibull,
    "lognormal": Lognormal,
    "exponential": Exponential,
    "deterministic": Deterministic,
}


def dist_from_config(cfg: dict) -> Distribution:
    """Build a distribution from a JSON literal like {"family":"pareto",...}."""
    if not isinstance(cfg, dict) or "family" not in cfg:
        raise ValueError(f"distribution literal must carry a 'family' key: {cfg!r}")
    family = cfg["family"]
    if family not in _FAMILY_FIELDS:
        raise ValueError(f"unknown distribution family {family!r}")
    fields = _FAMILY_FIELDS[family]
    extra = set(cfg) - {"family", *fields}
    if extra:
        raise ValueError(f"unknown fields for {family}: {sorted(extra)}")
    missing = [f for f in fields if f not in cfg]
    if missing:
        raise ValueError(f"missing fields for {family}: {missing}")
    return _FAMILY_TYPES[family](**{f: float(cfg[f]) for f in fields})


def dist_to_config(dist: Distribution) -> dict:
    for family, cls in _FAMILY_TYPES.items():
        if isinstance(dist, cls):
            return {"family": family, **{f: getattr(dist, f) for f in _FAMILY_FIELDS[family]}}
    raise TypeError(f"unknown distribution type: {type(dist)!r}")


def arrivals_from_config(cfg: dict) -> ArrivalSpec:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError(f"arrival literal must carry a 'kind' key: {cfg!r}")
    kind = cfg["kind"]
    if kind == "deterministic":
        extra = set(cfg) - {"kind", "spacing"}
        if extra:
            raise ValueError(f"unknown fields for deterministic arrivals: {sorted(extra)}")
        return DeterministicArrivals(spacing=float(cfg["spacing"]))
    if kind == "renewal":
        extra = set(cfg) - {"kind", "dist"}
        if extra:
            raise ValueError(f"unknown fields for renewal arrivals: {sorted(extra)}")
        return RenewalArrivals(dist=dist_from_config(cfg["dist"]))
    raise ValueError(f"unknown arrival kind {kind!r}")


def arrivals_to_config(arrivals: ArrivalSpec) -> dict:
    if isinstance(arrivals, DeterministicArrivals):
        return {"kind": "deterministic", "spacing": arrivals.spacing}
    if isinstance(arrivals, RenewalArrivals):
        return {"kind": "renewal", "dist": dist_to_config(arrivals.dist)}
    raise TypeError(f"unknown arrival spec: {type(arrivals)!r}")
