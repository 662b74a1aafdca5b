"""
special_fn.py — Special functions for the identity catalog
============================================================
Responsibilities:
  • Upper incomplete gamma Γ(α; x) = ∫_x^∞ t^{α-1} e^{-t} dt for every real α
  • Exponential integral Ei on the negative half-line
  • Time change of the gamma-tail composition: ∫_t^∞ s^{-1} Γ(α; s) ds

Design choices:
  • Series / Lentz continued fraction written out here so acceptance
    thresholds do not depend on a host special-function suite
  • α ≤ 0 reduced to α ∈ (0, 1] (or α = 0) by the downward recurrence
    Γ(a; x) = (Γ(a+1; x) - x^a e^{-x}) / a, stable for x ≤ 1
  • Array variants are thin np.vectorize wrappers (pure, thread-safe)
"""

import logging
import math
import sys

import numpy as np

from errors import InvalidParameterError, QuadratureError
from quadrature import quad_scalar

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286061   # 20 digits

_EPS      = 1e-16
_FPMIN    = sys.float_info.min / _EPS
_MAX_ITER = 10_000


# ══════════════════════════════════════════════════════════════════════════════
#  Series and continued-fraction kernels
# ══════════════════════════════════════════════════════════════════════════════

def _lower_series(a: float, x: float) -> float:
    """γ(a, x) for a > 0 by the power series."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x))
    raise QuadratureError(f"γ({a}, {x}) series did not converge")


def _upper_continued_fraction(a: float, x: float) -> float:
    """Γ(a, x) by the modified Lentz continued fraction; any real a, x ≳ 1."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b if abs(b) > _FPMIN else 1.0 / _FPMIN
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x)) * h
    raise QuadratureError(f"Γ({a}; {x}) continued fraction did not converge")


def _e1_series(x: float) -> float:
    """E1(x) = Γ(0; x) = -C - ln x - Σ (-x)^k / (k·k!), for small x."""
    total = 0.0
    term = 1.0
    for k in range(1, _MAX_ITER):
        term *= -x / k
        contrib = term / k
        total += contrib
        if abs(contrib) < _EPS * max(abs(total), 1e-300):
            break
    return -EULER_GAMMA - math.log(x) - total


# ══════════════════════════════════════════════════════════════════════════════
#  Public functions
# ══════════════════════════════════════════════════════════════════════════════

def inc_gamma_tail(alpha: float, x: float) -> float:
    """Γ(α; x) for real α and x > 0, to ~1e-12 relative."""
    if not x > 0:
        raise InvalidParameterError(f"Γ(α; x) needs x > 0, got x={x}")
    alpha = float(alpha)
    x = float(x)

    if x > 1.0 and not (alpha > 0 and x < alpha + 1.0):
        return _upper_continued_fraction(alpha, x)

    if alpha > 0:
        return math.gamma(alpha) - _lower_series(alpha, x)
    if alpha == 0:
        return _e1_series(x)

    steps = math.ceil(-alpha)
    base_alpha = alpha + steps
    value = inc_gamma_tail(base_alpha, x)
    a = base_alpha
    for _ in range(steps):
        a -= 1.0
        value = (value - x ** a * math.exp(-x)) / a
    return value


def ei(x: float) -> float:
    """Ei(x) for x < 0; Ei(-w) = -Γ(0; w)."""
    if not x < 0:
        raise InvalidParameterError(f"Ei is only provided for x < 0, got x={x}")
    w = -float(x)
    if w <= 2.0:
        total = 0.0
        term = 1.0
        for k in range(1, _MAX_ITER):
            term *= -w / k
            contrib = term / k
            total += contrib
            if abs(contrib) < _EPS * max(abs(total), 1e-300):
                break
        return EULER_GAMMA + math.log(w) + total
    return -inc_gamma_tail(0.0, w)


def example4_time_change(alpha: float, t: float) -> float:
    """∫_t^∞ s^{-1} Γ(α; s) ds, the time change of Γ-tail ∘ selfdecomposability."""
    if not t > 0:
        raise InvalidParameterError(f"time change needs t > 0, got t={t}")
    return quad_scalar(lambda s: inc_gamma_tail(alpha, s) / s, t, np.inf,
                       epsabs=1e-14, epsrel=1e-12)


inc_gamma_tail_array = np.vectorize(inc_gamma_tail, otypes=[float])
example4_time_change_array = np.vectorize(example4_time_change, otypes=[float])


# ══════════════════════════════════════════════════════════════════════════════
#  CLI test
# ══════════════════════════════════════════════════════════════════════════════

if __name__ == "__main__":
    print(f"\n  {'w':>8} {'Γ(0;w)':>22} {'-Ei(-w)':>22}")
    print("  " + "─" * 54)
    for w in (1e-3, 0.1, 1.0, 5.0, 20.0):
        print(f"  {w:>8g} {inc_gamma_tail(0.0, w):>22.16g} {-ei(-w):>22.16g}")
