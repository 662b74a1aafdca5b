"""
quadrature.py — Numerical integration layer
=============================================
Responsibilities:
  • Elementwise, vectorised integration of complex integrands over (a, b]
    with b possibly +∞ (exponent transforms, lazy image densities)
  • Scalar adaptive integration with divergence classification
  • Fourier-weighted tails ∫_a^∞ f(x) cos/sin(yx) dx for spectral measures

Design choices:
  • scipy.integrate.tanhsinh (double-exponential rule) for the vectorised
    path: endpoint singularities of the catalog densities cost nothing extra
    and every y-value is an independent element sharing one call
  • (a, ∞) is mapped to (0, e^{-a}] with u = e^{-t} before integrating
  • Strict elements that miss TOL_QUAD on the first pass are redone on
    cells: unit cells in doubling blocks along (a, ∞), dyadic and uniform
    cells on (a, b]. Whatever still misses TOL_QUAD raises QuadratureError
  • Real and imaginary parts are integrated as separate elements
  • scipy.integrate.quad (QUADPACK) for scalar work; a failed integral is
    DivergentMassError when its outermost dyadic shells carry mass, else
    QuadratureError
"""

import logging
import math
import warnings
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from config import QUAD_MAX_CELLS, QUAD_MAXLEVEL, TOL_DIV, TOL_QUAD
from errors import DivergentMassError, QuadratureError

logger = logging.getLogger(__name__)

_RTOL = 1e-12
_FIRST_LEVEL = min(8, QUAD_MAXLEVEL)
_MIN_CELLS = 8            # unit cells walked before a tail may settle
_SETTLE = 1e-3            # block and endpoint size, as a share of atol, that ends the walk
_FINITE_SPLITS = 16
_FINITE_DYADIC = 8
_SHELL_DEPTH = 480


# ══════════════════════════════════════════════════════════════════════════════
#  Vectorised (elementwise) integration
# ══════════════════════════════════════════════════════════════════════════════

def _on_unit_interval(f: Callable) -> Callable:
    """Integrand in u = e^{-t} for the piece (a, ∞)."""
    def g(u, *args):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            t = -np.log(u)
            val = f(t, *args) / u
        return np.where(u > 0, val, 0.0)
    return g


def _split_parts(f: Callable) -> Callable:
    def g(t, *args):
        *inner, part = args
        val = f(t, *inner)
        return np.where(part == 0, np.real(val), np.imag(val))
    return g


def _run(g: Callable, a, b, args: tuple, atol: float, maxlevel: int):
    with np.errstate(all="ignore"):
        res = integrate.tanhsinh(g, a, b, args=args, atol=atol, rtol=_RTOL, maxlevel=maxlevel)
    integral = np.asarray(res.integral, dtype=float)
    error = np.nan_to_num(np.asarray(res.error, dtype=float), nan=np.inf)
    ok = np.asarray(res.success, dtype=bool) & np.isfinite(integral)
    return integral, error, ok


def _accept(total: np.ndarray, error: np.ndarray, atol: float, where: str) -> np.ndarray:
    bad = ~np.isfinite(total) | (error > atol * np.maximum(1.0, np.abs(total)))
    if np.any(bad):
        worst = float(np.max(np.where(bad, error, 0.0)))
        raise QuadratureError(
            f"tanh-sinh missed {atol:.0e} on {int(bad.sum())} element(s) over {where}; "
            f"worst error estimate {worst:.3g}"
        )
    return total


def _finite_cells(g: Callable, a: np.ndarray, b: np.ndarray, args: tuple, atol: float) -> np.ndarray:
    """(a, b] cut into uniform cells refined dyadically toward both ends."""
    ends = 2.0 ** -np.arange(1, _FINITE_DYADIC + 1) / _FINITE_SPLITS
    fractions = np.unique(np.concatenate([
        np.linspace(0.0, 1.0, _FINITE_SPLITS + 1), ends, 1.0 - ends,
    ]))
    n_cells = fractions.size - 1
    edges = a[:, None] + (b - a)[:, None] * fractions[None, :]
    sub = tuple(np.repeat(x, n_cells) for x in args)
    val, err, ok = _run(g, edges[:, :-1].ravel(), edges[:, 1:].ravel(), sub,
                        atol / n_cells, QUAD_MAXLEVEL)
    total = val.reshape(a.size, n_cells).sum(axis=1)
    error = np.where(ok, 0.0, err).reshape(a.size, n_cells).sum(axis=1)
    return _accept(total, error, atol, "a finite range")


def _half_line_cells(g: Callable, a: np.ndarray, args: tuple, atol: float) -> np.ndarray:
    """
    (a, ∞) walked in unit cells, doubling the block each step, until the last
    block and the integrand at its end both fall under _SETTLE·atol; the rest
    goes through the u-map.
    """
    n = a.size
    total = np.zeros(n)
    error = np.zeros(n)
    reach = np.zeros(n)
    active = np.ones(n, dtype=bool)
    cell_tol = atol / QUAD_MAX_CELLS
    walked, count = 0, 1
    while walked < QUAD_MAX_CELLS and active.any():
        idx = np.flatnonzero(active)
        lo = (a[idx][:, None] + walked + np.arange(count)[None, :]).ravel()
        sub = tuple(np.repeat(x[idx], count) for x in args)
        val, err, ok = _run(g, lo, lo + 1.0, sub, cell_tol, QUAD_MAXLEVEL)
        block = val.reshape(idx.size, count).sum(axis=1)
        total[idx] += block
        error[idx] += np.where(ok, 0.0, err).reshape(idx.size, count).sum(axis=1)
        walked += count
        count = walked
        reach[idx] = walked
        if walked >= _MIN_CELLS:
            with np.errstate(all="ignore"):
                edge = np.abs(g(a[idx] + walked, *[x[idx] for x in args]))
            settled = (np.abs(block) <= _SETTLE * atol) & (np.nan_to_num(edge, nan=np.inf) <= _SETTLE * atol)
            active[idx[settled]] = False
    if active.any():
        logger.debug("tanh-sinh: %d tail(s) unsettled after %d cells", int(active.sum()), walked)
    with np.errstate(over="ignore"):
        upper = np.exp(-(a + reach))
    val, err, ok = _run(_on_unit_interval(g), np.zeros(n), upper, args, atol, QUAD_MAXLEVEL)
    total += val
    error += np.where(ok, 0.0, err)
    return _accept(total, error, atol, "a half line")


def _finite_range(g, a, b, args, atol, strict):
    if not strict:
        val, _, ok = _run(g, a, b, args, atol, QUAD_MAXLEVEL)
        if not ok.all():
            logger.debug("tanh-sinh: %d element(s) below target accuracy (lenient)", int((~ok).sum()))
        return np.nan_to_num(val, nan=0.0)
    val, _, ok = _run(g, a, b, args, atol, _FIRST_LEVEL)
    if not ok.all():
        idx = np.flatnonzero(~ok)
        val[idx] = _finite_cells(g, a[idx], b[idx], tuple(x[idx] for x in args), atol)
    return val


def _half_line(g, a, args, atol, strict):
    mapped = _on_unit_interval(g)
    zero = np.zeros_like(a)
    if not strict:
        val, _, ok = _run(mapped, zero, np.exp(-a), args, atol, QUAD_MAXLEVEL)
        if not ok.all():
            logger.debug("tanh-sinh: %d tail(s) below target accuracy (lenient)", int((~ok).sum()))
        return np.nan_to_num(val, nan=0.0)
    val, _, ok = _run(mapped, zero, np.exp(-a), args, atol, _FIRST_LEVEL)
    if not ok.all():
        idx = np.flatnonzero(~ok)
        val[idx] = _half_line_cells(g, a[idx], tuple(x[idx] for x in args), atol)
    return val


def integrate_vec(
    f: Callable,
    a,
    b,
    args: Sequence = (),
    *,
    atol: float = TOL_QUAD,
    strict: bool = True,
) -> np.ndarray:
    """
    Elementwise ∫_a^b f(t, *args) dt for complex-valued, elementwise f.

    a, b and args broadcast together; b may be +∞. Returns a complex array
    of the broadcast shape. Elements with b ≤ a are 0. Strict elements meet
    atol·max(1, |value|) or raise QuadratureError; strict=False returns the
    best single-pass estimate (inner integrals of lazy densities, whose outer
    integral carries the accuracy check).
    """
    arrays = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                 *[np.asarray(x) for x in args])
    a_, b_, *args_ = arrays
    shape = a_.shape
    out = np.zeros(shape, dtype=complex)
    if a_.size == 0:
        return out

    split = _split_parts(f)
    finite = np.isfinite(b_) & (b_ > a_)
    infinite = np.isinf(b_) & (b_ > 0)

    for mask, infinite_piece in ((finite, False), (infinite, True)):
        if not np.any(mask):
            continue
        k = int(mask.sum())
        lo = np.repeat(a_[mask], 2)
        sub = tuple(np.repeat(x[mask], 2) for x in args_) + (np.tile([0, 1], k),)
        if infinite_piece:
            val = _half_line(split, lo, sub, atol, strict)
        else:
            val = _finite_range(split, lo, np.repeat(b_[mask], 2), sub, atol, strict)
        out[mask] = val[0::2] + 1j * val[1::2]
    return out


def integrate_pieces(
    f: Callable,
    edges: Sequence[float],
    args: Sequence = (),
    *,
    atol: float = TOL_QUAD,
    strict: bool = True,
) -> np.ndarray:
    """Sum of integrate_vec over consecutive (edges[i], edges[i+1]] pieces."""
    total = None
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        piece = integrate_vec(f, lo, hi, args, atol=atol, strict=strict)
        total = piece if total is None else total + piece
    if total is None:
        shape = np.broadcast_shapes(*[np.shape(x) for x in args]) if args else ()
        return np.zeros(shape, dtype=complex)
    return total


# ══════════════════════════════════════════════════════════════════════════════
#  Scalar integration (QUADPACK)
# ══════════════════════════════════════════════════════════════════════════════

def _guarded(f: Callable[[float], float]) -> Callable[[float], float]:
    """Overflow and pole hits read as +∞ so they reach the divergence test."""
    def g(x):
        try:
            with np.errstate(all="ignore"):
                return float(f(x))
        except (OverflowError, ZeroDivisionError, FloatingPointError):
            return math.inf
    return g


def _shell_depth(anchor: float, width: float) -> int:
    if anchor == 0.0:
        return _SHELL_DEPTH
    room = math.log2(width / (abs(anchor) * 2.0 ** -50))
    return int(max(1, min(_SHELL_DEPTH, room - 1)))


def _end_shells(a: float, b: float) -> list[tuple[float, float]]:
    """The outermost dyadic shell at each end of (a, b]."""
    width = min(1.0, (b - a) / 2) if math.isfinite(a) and math.isfinite(b) else 1.0
    shells = []
    if math.isinf(b):
        far = max(abs(a) if math.isfinite(a) else 1.0, 1.0) * 2.0 ** _SHELL_DEPTH
        shells.append((far, 2 * far))
    else:
        d = _shell_depth(b, width)
        shells.append((b - width * 2.0 ** -d, b - width * 2.0 ** -(d + 1)))
    if math.isinf(a):
        far = max(abs(b) if math.isfinite(b) else 1.0, 1.0) * 2.0 ** _SHELL_DEPTH
        shells.append((-2 * far, -far))
    else:
        d = _shell_depth(a, width)
        shells.append((a + width * 2.0 ** -(d + 1), a + width * 2.0 ** -d))
    return shells


def _diverges(g: Callable[[float], float], a: float, b: float) -> bool:
    for lo, hi in _end_shells(a, b):
        if not hi > lo:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mass, _ = integrate.quad(g, lo, hi, limit=200)
        if not math.isfinite(mass) or abs(mass) > TOL_DIV:
            return True
    return False


def quad_scalar(f: Callable[[float], float], a: float, b: float, *,
                epsabs: float = 1e-13, epsrel: float = 1e-12, limit: int = 500,
                points: Sequence[float] | None = None, tol: float = TOL_QUAD) -> float:
    """
    Adaptive Gauss–Kronrod integral of a real scalar function.

    When QUADPACK warns with an error estimate above tol·max(1, |value|), or
    the value is not finite, the end shells decide: mass there means
    DivergentMassError, none means QuadratureError.
    """
    g = _guarded(f)
    kwargs = dict(epsabs=epsabs, epsrel=epsrel, limit=limit)
    if points is not None and np.isfinite(a) and np.isfinite(b):
        kwargs["points"] = [p for p in points if a < p < b]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, abserr = integrate.quad(g, a, b, **kwargs)
    warned = [w for w in caught if issubclass(w.category, integrate.IntegrationWarning)]
    if math.isfinite(value) and (not warned or abserr <= tol * max(1.0, abs(value))):
        if warned:
            logger.debug("quad warning over (%s, %s]: %s", a, b, str(warned[0].message).splitlines()[0])
        return float(value)
    if _diverges(g, a, b):
        raise DivergentMassError(f"integral over ({a}, {b}] diverges")
    detail = str(warned[0].message).splitlines()[0] if warned else "non-finite value"
    raise QuadratureError(f"quad over ({a}, {b}] failed: {detail} (err={abserr:.3g})")


def fourier_tail(f: Callable[[float], float], a: float, y: float, kind: str) -> float:
    """∫_a^∞ f(x)·cos(yx) dx (kind='cos') or ·sin(yx) (kind='sin'), y > 0."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, abserr = integrate.quad(_guarded(f), a, np.inf, weight=kind, wvar=y,
                                       epsabs=1e-13, limlst=200)
    warned = any(issubclass(w.category, integrate.IntegrationWarning) for w in caught)
    if not math.isfinite(value) or (warned and abserr > TOL_QUAD * max(1.0, abs(value))):
        raise QuadratureError(f"Fourier tail ({kind}, y={y}) failed: err={abserr:.3g}")
    return float(value)
