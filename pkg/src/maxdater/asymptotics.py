"""Closed-form tail asymptotes for stationary daters and station delays.

Every evaluator returns the asymptote value at a level x: a constant times
the integrated tail of the reference distribution (possibly at a rescaled
argument), plus, in the equal-drift tandem case, a normal-tail integral
evaluated by adaptive quadrature.

Constants are assembled in exact rational arithmetic from the float inputs
and rounded once, so stacked formulas do not accumulate rounding noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

from .distributions import Distribution, is_subexponential_family, normal_tail

__all__ = [
    "veraverbeke",
    "network_upper_const",
    "network_lower_const",
    "tandem_exact_const",
    "tandem_exact",
    "W2Asymptote",
    "tandem_w2",
    "multiserver_exact",
    "integrated_tail_of_Y",
]


def _ratio(num: float, hi: float, lo: float) -> float:
    """num / (hi - lo) in exact rationals, rounded once."""
    return float(Fraction(num) / (Fraction(hi) - Fraction(lo)))


def veraverbeke(d: float, a: float, b: float, dist: Distribution, x: float) -> float:
    """Single-queue supremum asymptote: (d / (a - b)) x integrated tail."""
    if not a > b:
        raise ValueError(f"stability requires a > b, got a={a}, b={b}")
    if d < 0.0:
        raise ValueError("tail weight d must be nonnegative")
    return _ratio(d, a, b) * dist.integrated_tail(x)


def network_upper_const(d: float, a: float, gamma0: float) -> float:
    """Coefficient of the generic network upper bound: d / (a - gamma0)."""
    if not a > gamma0:
        raise ValueError(f"stability requires a > gamma0, got a={a}, gamma0={gamma0}")
    return _ratio(d, a, gamma0)


def network_lower_const(ds: Sequence[float], a: float, bs: Sequence[float]) -> float:
    """Coefficient of the fork-join lower bound: sum_j d_j / (a - b_j)."""
    if len(ds) != len(bs):
        raise ValueError("per-station weights and means must align")
    total = Fraction(0)
    for d, b in zip(ds, bs):
        if not a > b:
            raise ValueError(f"stability requires a > b_j for all j; got b_j={b}")
        total += Fraction(d) / (Fraction(a) - Fraction(b))
    lower = float(total)
    upper = network_upper_const(float(sum(ds)), a, max(bs))
    assert lower <= upper * (1.0 + 1e-12), "lower coefficient exceeded the upper one"
    return lower


def tandem_exact_const(d1: float, d2: float, a: float, b1: float, b2: float) -> float:
    """Exact end-to-end tandem coefficient: d1/(a-b) + d2/(a-b2), b = max."""
    b = max(b1, b2)
    if not a > b:
        raise ValueError(f"stability requires a > max(b1,b2), got a={a}")
    const = float(Fraction(d1) / (Fraction(a) - Fraction(b))
                  + Fraction(d2) / (Fraction(a) - Fraction(b2)))
    lower = network_lower_const([d1, d2], a, [b1, b2])
    upper = network_upper_const(d1 + d2, a, b)
    assert lower - 1e-12 <= const <= upper + 1e-12, \
        "tandem coefficient left the lower/upper bracket"
    return const


def tandem_exact(d1: float, d2: float, a: float, b1: float, b2: float,
                 dist: Distribution, x: float) -> float:
    """Exact tandem end-to-end tail asymptote at level x."""
    return tandem_exact_const(d1, d2, a, b1, b2) * dist.integrated_tail(x)


@dataclass(frozen=True)
class W2Asymptote:
    """Station-2 delay asymptote value at one level.

    ``certified`` signals whether the formula is a genuine equivalence for
    the given weights and family (the remainder term is dominated); when
    False the value is exact only up to an additive term that is negligible
    relative to the integrated tail.
    """

    value: float
    certified: bool
    integral: Optional[float] = None
    integral_error: Optional[float] = None


def tandem_w2(a: float, b1: float, b2: float, d1: float, d2: float,
              dist: Distribution, x: float,
              variances: Optional[Tuple[float, float]] = None,
              quad_rel_tol: float = 1e-6) -> W2Asymptote:
    """Station-2 stationary delay asymptote; dispatches on the drift order.

    With b1 > b2 the answer is the isolated station-2 asymptote.  With equal
    means it adds a normal-tail integral (finite variances required).  With
    b1 < b2 it adds the integrated tail at a stretched level.
    """
    if not a > max(b1, b2):
        raise ValueError("stability requires a > max(b1, b2)")
    flags = is_subexponential_family(dist)
    if b1 > b2:
        value = veraverbeke(d2, a, b2, dist, x)
        return W2Asymptote(value=value, certified=d2 > 0.0)
    if b1 == b2:
        if variances is None:
            raise ValueError("the equal-means case needs the two service variances")
        v1, v2 = variances
        if not (math.isfinite(v1) and math.isfinite(v2)):
            raise ValueError("the equal-means case needs finite service variances")
        v = math.sqrt(v1 + v2)
        integral, err = _equal_means_integral(dist, x, a - b1, v, quad_rel_tol)
        value = 2.0 * d1 * integral + veraverbeke(d2, a, b1, dist, x)
        certified = d2 > 0.0 or (d1 > 0.0 and bool(flags.ratio_x_squared))
        return W2Asymptote(value=value, certified=certified,
                           integral=integral, integral_error=err)
    # b1 < b2
    stretch = float((Fraction(a) - Fraction(b1)) / (Fraction(b2) - Fraction(b1)))
    value = (veraverbeke(d2, a, b2, dist, x)
             + _ratio(d1, a, b2) * dist.integrated_tail(x * stretch))
    certified = d2 > 0.0 or (d1 > 0.0 and bool(flags.ratio_2x))
    return W2Asymptote(value=value, certified=certified)


def _equal_means_integral(dist: Distribution, x: float, drift: float,
                          v: float, rel_tol: float) -> Tuple[float, float]:
    """integral over y of tail(x + y*drift) * normal_tail(x / (v sqrt(y))).

    Substituting y = (x/v)^2 t balances the two decay scales; the upper limit
    stops where the service tail has decayed to 1e-14 of its value at x, or
    at t = 1e4, whichever comes first.  Composite Simpson with panel doubling
    until the relative change drops below rel_tol; the last change is the
    reported error estimate.
    """
    if x <= 0.0 or v <= 0.0 or drift <= 0.0:
        raise ValueError("the integral needs x > 0, v > 0 and positive drift")
    scale = (x / v) ** 2
    base = float(dist.tail(x))
    if base <= 0.0:
        return 0.0, 0.0

    def integrand(t: float) -> float:
        if t <= 0.0:
            return 0.0
        return float(dist.tail(x + scale * t * drift)) * normal_tail(x / (v * math.sqrt(scale * t)))

    t_hi = 1.0
    while t_hi < 1e4 and float(dist.tail(x + scale * t_hi * drift)) >= 1e-14 * base:
        t_hi *= 2.0
    t_hi = min(t_hi, 1e4)

    n = 128
    prev = None
    change = math.inf
    for _ in range(22):
        h = t_hi / n
        total = integrand(0.0) + integrand(t_hi)
        odd = sum(integrand((2 * i + 1) * h) for i in range(n // 2))
        even = sum(integrand((2 * i) * h) for i in range(1, n // 2))
        val = (h / 3.0) * (total + 4.0 * odd + 2.0 * even)
        if prev is not None:
            change = abs(val - prev)
            if change <= rel_tol * max(abs(val), 1e-300):
                return scale * val, scale * change
        prev = val
        n *= 2
    return scale * prev, scale * change


def multiserver_exact(a: float, b: float, m: int, dist: Distribution, x: float) -> float:
    """Multiserver dater asymptote; the rescaled second term is active only
    when one busy server cannot be compensated by the other m-1."""
    if m < 1:
        raise ValueError("server count must be >= 1")
    if not b < m * a:
        raise ValueError(f"stability requires b < m*a, got b={b}, m*a={m * a}")
    first = float(Fraction(1) / Fraction(a)) * dist.integrated_tail(x)
    if b <= (m - 1) * a:
        return first
    coef = float(Fraction(1) / (Fraction(m) * Fraction(a) - Fraction(b))
                 - Fraction(1) / Fraction(a))
    arg = float(Fraction(b) * Fraction(x) / (Fraction(b) - (m - 1) * Fraction(a)))
    return first + coef * dist.integrated_tail(arg)


def integrated_tail_of_Y(l: float, nu_mean: float, dist: Distribution,
                         x: float) -> Tuple[float, float]:
    """Asymptote of the integrated tail of compound per-station work
    (a light-tailed visit count over i.i.d. services): weight and value."""
    if l < 0.0 or nu_mean < 0.0:
        raise ValueError("weights must be nonnegative")
    d = l * nu_mean
    return d, d * dist.integrated_tail(x)
