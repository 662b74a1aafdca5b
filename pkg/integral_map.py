"""
integral_map.py — Random integral mappings I^{h,r}_{(a,b]}
============================================================
Responsibilities:
  • MappingSpec (h, r, interval, sign convention) and exponent transforms
      non-decreasing r:  Φ ↦ ∫ Φ(h(t)y) dr(t)
      non-increasing r:  Φ ↦ ∫ Φ(-h(t)y) |dr(t)|
  • compose(): nested mappings reduced to a single mapping whose time
    change is the image of the product measure under h₁⊗…⊗h_m
  • domain_check(): numerical finiteness probes + log-moment requirement
  • Homomorphism / convolution-power / dilation checks, triple-level image,
    continuity probe along compound Poisson approximations

Design choices:
  • Exponents are lazy: apply() returns a LevyExponent whose evaluation
    integrates over the time-change measure for the whole y-array at once
  • Negative kernels and decreasing time changes are folded into one sign;
    compose() records whether the input law must be reflected
  • Divergence is declared when the outermost shell of a truncation
    sequence still carries more than TOL_DIV
"""

import logging
import math
import threading
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from config import PROBE_Y, TOL_DIV
from errors import (
    DivergentMassError, DomainViolationError, SpectralDivergenceError, UndecidableError,
    UnsupportedTripleError,
)
from levy_core import (
    LevyExponent, LevyTriple, SpectralMeasure, check_id_log, conv_power, convolve,
    default_grid, dilate, exponent_of, hermitian, make_law, negate_law,
)
from measure_alg import DOWN, UP, HalfLineMeasure, KernelFunction, TimeChange, pushforward
from quadrature import integrate_pieces, integrate_vec, quad_scalar
from special_fn import inc_gamma_tail

logger = logging.getLogger(__name__)

_HI_SHELLS = 9      # (H·2^k, H·2^{k+1}], last shell ends at 512·H
_LO_SHELLS = 40     # dyadic shells toward a finite endpoint
_SCREEN_ATOL = 1e-3 * TOL_DIV


# ══════════════════════════════════════════════════════════════════════════════
#  MappingSpec
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class MappingSpec:
    kernel:       KernelFunction
    time_change:  TimeChange
    negate_input: bool = False
    name:         str = ""

    @property
    def interval(self) -> tuple[float, float]:
        return self.time_change.interval

    @property
    def sign(self) -> float:
        """-1 when r is non-increasing (the exponent is read at -h(t)y)."""
        return -1.0 if self.time_change.direction == DOWN else 1.0

    @property
    def label(self) -> str:
        return self.name or f"I[{self.kernel.form},{self.time_change.form}]"

    def with_kernel_scale(self, u: float) -> "MappingSpec":
        """I^{uh, r}."""
        return replace(self, kernel=self.kernel.scaled(u), name=f"{self.label}·h×{u:g}")

    def with_time_scale(self, s: float) -> "MappingSpec":
        """I^{h, sr}."""
        return replace(self, time_change=self.time_change.scaled(s), name=f"{self.label}·r×{s:g}")

    def describe(self) -> dict:
        return {
            "name":         self.label,
            "kernel":       self.kernel.describe(),
            "time_change":  self.time_change.describe(),
            "negate_input": self.negate_input,
        }


@dataclass
class DomainReport:
    finiteness:          bool
    log_moment_required: bool
    log_moment_holds:    bool | None
    notes:               list[str] = field(default_factory=list)

    def __str__(self) -> str:
        lm = "n/a" if not self.log_moment_required else {True: "holds", False: "FAILS", None: "unknown"}[self.log_moment_holds]
        status = "✓ in domain" if self.finiteness else "✗ outside domain"
        return f"{status} (log-moment: {lm}){'; ' + '; '.join(self.notes) if self.notes else ''}"


class IdentityMemo:
    """
    Results keyed by the identity of the objects they were computed from.

    Entries hold their key objects, so an id cannot be recycled while it is
    stored; the table is dropped whole once it reaches `size`.
    """

    def __init__(self, size: int = 512):
        self._size = size
        self._store: dict[tuple[int, ...], tuple[tuple, object]] = {}
        self._lock = threading.Lock()

    def get(self, *keys):
        with self._lock:
            hit = self._store.get(tuple(map(id, keys)))
        if hit is not None and all(a is b for a, b in zip(hit[0], keys)):
            return hit[1]
        return None

    def put(self, keys: tuple, value):
        with self._lock:
            if len(self._store) >= self._size:
                self._store.clear()
            self._store[tuple(map(id, keys))] = (keys, value)
        return value

    def clear(self) -> None:
        with self._lock:
            self._store.clear()


_DOMAIN_REPORTS = IdentityMemo()
_APPLIED = IdentityMemo()


def clear_memos() -> None:
    _DOMAIN_REPORTS.clear()
    _APPLIED.clear()


# ══════════════════════════════════════════════════════════════════════════════
#  apply
# ══════════════════════════════════════════════════════════════════════════════

def apply(spec: MappingSpec, e: LevyExponent, *, check: bool = True) -> LevyExponent:
    """
    Exponent of I^{h,r}_{(a,b]}(ν) from the exponent of ν.

    Repeated calls with the same spec and exponent objects return the same
    lazy exponent.
    """
    if check:
        require_domain(spec, e)
    cached = _APPLIED.get(spec, e)
    if cached is not None:
        return cached
    rho = spec.time_change.measure()
    base = negate_law(e) if spec.negate_input else e
    sign = spec.sign
    kernel = spec.kernel
    edges = rho.edges()

    def integrand(t, yy):
        return base(sign * kernel.value(t) * yy) * rho.density_at(t)

    def phi(y):
        out = np.zeros(np.shape(y), dtype=complex)
        if rho.density is not None:
            out = out + integrate_pieces(integrand, edges, (y,))
        for x, m in rho.atoms:
            out = out + m * base(sign * float(kernel.value(np.array(x))) * y)
        return out

    return _APPLIED.put((spec, e), LevyExponent(fn=hermitian(phi),
                                                provenance=("transformed", spec.label, e.provenance)))


# ══════════════════════════════════════════════════════════════════════════════
#  compose
# ══════════════════════════════════════════════════════════════════════════════

def compose(specs: list[MappingSpec], closed_form: bool = True) -> MappingSpec:
    """
    Single mapping equal to specs[0] ∘ specs[1] ∘ … (order is immaterial).

    The result has kernel w ↦ w and the image time-change measure; it uses
    r(t) = ρ((c, t]) when ρ is finite near c, otherwise r(t) = ρ((t, d])
    with a reflected input where the sign bookkeeping requires it.
    """
    if not specs:
        raise DomainViolationError("compose needs at least one mapping")
    if len(specs) == 1:
        return specs[0]

    sigma = 1
    kernels, measures = [], []
    for s in specs:
        k_sign = s.kernel.sign_on(s.interval)
        sigma *= k_sign * int(s.sign) * (-1 if s.negate_input else 1)
        kernels.append(s.kernel.scaled(k_sign))
        measures.append(s.time_change.measure())

    rho = pushforward(kernels, measures, closed_form=closed_form)
    tail_mode = rho.infinite_near_lo or (rho.cdf_fn is None and rho.tail_fn is not None)
    tc = TimeChange.from_measure(rho, DOWN if tail_mode else UP)
    negate = (sigma < 0) != tail_mode
    name = "∘".join(s.label for s in specs)
    logger.info("compose %s → time change %s (%s), reflected input=%s",
                name, tc.form, tc.direction, negate)
    return MappingSpec(kernel=KernelFunction.of("identity"), time_change=tc,
                       negate_input=negate, name=name)


# ══════════════════════════════════════════════════════════════════════════════
#  domain_check
# ══════════════════════════════════════════════════════════════════════════════

def _probe_pieces(spec: MappingSpec, rho: HalfLineMeasure):
    """Core piece plus truncation shells: list of (lo, hi, group)."""
    a, b = spec.interval
    pieces = []
    core_lo, core_hi = a, b
    if math.isinf(b):
        big = max(a, 0.0) + 1.0
        core_hi = big
        pieces += [(big * 2.0 ** k, big * 2.0 ** (k + 1), "hi") for k in range(_HI_SHELLS)]
    elif rho.infinite_near_hi:
        w0 = min(1.0, (b - a) / 2.0)
        core_hi = b - w0
        pieces += [(b - w0 * 2.0 ** -k, b - w0 * 2.0 ** -(k + 1), "hi") for k in range(_LO_SHELLS)]
    if rho.infinite_near_lo:
        w0 = min(1.0, (core_hi - a) / 2.0)
        core_lo = a + w0
        pieces += [(a + w0 * 2.0 ** -(k + 1), a + w0 * 2.0 ** -k, "lo") for k in range(_LO_SHELLS)]
    pieces.insert(0, (core_lo, core_hi, "core"))
    return pieces


def _log_moment_required(spec: MappingSpec, rho: HalfLineMeasure) -> bool:
    """h vanishes at an end where ρ carries infinite mass."""
    a, b = spec.interval
    ends = []
    if rho.infinite_near_lo:
        ends.append(a)
    if rho.infinite_near_hi or math.isinf(b):
        ends.append(b)
    for end in ends:
        if abs(float(spec.kernel.value(np.array(end)))) < 1e-12:
            return True
    return False


def domain_check(spec: MappingSpec, e: LevyExponent) -> DomainReport:
    """
    Necessary numerical condition for ν ∈ 𝒟^{h,r}; a report for divergence.

    QuadratureError and other numerical failures propagate. Reports are
    memoised per (spec, exponent) object pair.
    """
    cached = _DOMAIN_REPORTS.get(spec, e)
    if cached is not None:
        return cached
    return _DOMAIN_REPORTS.put((spec, e), _domain_check(spec, e))


def _domain_check(spec: MappingSpec, e: LevyExponent) -> DomainReport:
    rho = spec.time_change.measure()
    notes: list[str] = []

    required = _log_moment_required(spec, rho)
    holds: bool | None = None
    if required:
        if e.triple is None:
            notes.append("log-moment required but the input law has no triple")
        else:
            try:
                holds = check_id_log(e.triple.spectral)
            except UndecidableError as exc:
                notes.append(str(exc))
        if holds is False:
            notes.append("spectral measure has infinite log-moment")
            logger.info("domain_check %s: log-moment fails", spec.label)
            return DomainReport(False, True, False, notes)

    base = negate_law(e) if spec.negate_input else e
    sign = spec.sign
    pieces = _probe_pieces(spec, rho)
    lo = np.array([p[0] for p in pieces])[:, None]
    hi = np.array([p[1] for p in pieces])[:, None]
    y = np.asarray(PROBE_Y, dtype=float)[None, :]

    def integrand(t, yy):
        return np.abs(base(sign * spec.kernel.value(t) * yy)) * rho.density_at(t)

    finite = True
    try:
        vals = np.zeros((len(pieces), y.shape[1]))
        if rho.density is not None:
            vals = integrate_vec(integrand, lo, hi, (y,), atol=_SCREEN_ATOL, strict=False).real
        atom_part = sum(m * np.abs(base(sign * float(spec.kernel.value(np.array(x))) * y[0]))
                        for x, m in rho.atoms)
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(atom_part))):
            finite = False
            notes.append("probe integral is not finite")
        for group in ("lo", "hi"):
            idx = [i for i, p in enumerate(pieces) if p[2] == group]
            if idx and finite:
                last = float(np.max(vals[idx[-1]]))
                if last > TOL_DIV:
                    finite = False
                    notes.append(f"{group}-end truncation shell still carries {last:.3g}")
    except (DivergentMassError, SpectralDivergenceError) as exc:
        finite = False
        notes.append(f"truncation diverges: {exc}")

    if required and holds is None:
        notes.append("log-moment undecided")
    logger.debug("domain_check %s: finite=%s notes=%s", spec.label, finite, notes)
    return DomainReport(finite, required, holds, notes)


def require_domain(spec: MappingSpec, e: LevyExponent) -> None:
    report = domain_check(spec, e)
    if not report.finiteness:
        raise DomainViolationError(f"{spec.label}: {report}")


# ══════════════════════════════════════════════════════════════════════════════
#  Algebraic properties
# ══════════════════════════════════════════════════════════════════════════════

def _max_pairwise(values: list[np.ndarray]) -> float:
    worst = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            worst = max(worst, float(np.max(np.abs(values[i] - values[j]))))
    return worst


def verify_homomorphism(spec: MappingSpec, e1: LevyExponent, e2: LevyExponent,
                        grid=None) -> float:
    """max |I(ν1 ∗ ν2) - I(ν1) - I(ν2)| over the grid."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    require_domain(spec, e1)
    require_domain(spec, e2)
    joint = apply(spec, convolve(e1, e2), check=False)(grid)
    split = apply(spec, e1, check=False)(grid) + apply(spec, e2, check=False)(grid)
    err = float(np.max(np.abs(joint - split)))
    logger.info("homomorphism %s: max error %.3g", spec.label, err)
    return err


def verify_conv_power(spec: MappingSpec, e: LevyExponent, s: float, grid=None) -> float:
    """Pairwise max over I(ν^{*s}), I(ν)^{*s}, I^{h,sr}(ν)."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    require_domain(spec, e)
    forms = [
        apply(spec, conv_power(e, s), check=False)(grid),
        conv_power(apply(spec, e, check=False), s)(grid),
        apply(spec.with_time_scale(s), e, check=False)(grid),
    ]
    err = _max_pairwise(forms)
    logger.info("convolution power %s, s=%g: max pairwise error %.3g", spec.label, s, err)
    return err


def verify_dilation(spec: MappingSpec, e: LevyExponent, u: float, grid=None) -> float:
    """Pairwise max over I(T_u ν), T_u I(ν), I^{uh,r}(ν); u may be negative."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    require_domain(spec, e)
    forms = [
        apply(spec, dilate(e, u), check=False)(grid),
        dilate(apply(spec, e, check=False), u)(grid),
        apply(spec.with_kernel_scale(u), e, check=False)(grid),
    ]
    err = _max_pairwise(forms)
    logger.info("dilation %s, u=%g: max pairwise error %.3g", spec.label, u, err)
    return err


# ══════════════════════════════════════════════════════════════════════════════
#  Triple-level image
# ══════════════════════════════════════════════════════════════════════════════

def _integrate_where(rho: HalfLineMeasure, g, cond, cuts: list[float]) -> float:
    """∫ g·1{cond} dρ where cond is constant between consecutive cuts."""
    edges = sorted(set(rho.edges()) | {c for c in cuts if rho.support[0] < c < rho.support[1]})
    total = sum(m * g(x) for x, m in rho.atoms if cond(x))
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi) if math.isfinite(hi) else lo + 1.0
        if rho.density is not None and cond(mid):
            total += quad_scalar(lambda t: g(t) * float(rho.density_at(t)), lo, hi)
    return total


def _image_spectral(spec: MappingSpec, rho: HalfLineMeasure, x: float, m: float) -> SpectralMeasure:
    """m · image of ρ under t ↦ sign·h(t)·x, as a spectral measure on ℝ."""
    k = spec.kernel.scaled(spec.sign * x)
    k_sign = k.sign_on(spec.interval)
    img = pushforward([k.scaled(k_sign)], [rho], closed_form=False)
    out = SpectralMeasure.zero()
    if img.density is not None:
        dens = img.density_at
        out = out.plus(SpectralMeasure.from_density(lambda w: m * dens(w), img.support,
                                                    label=f"image({x:g})"))
    if img.atoms:
        out = out.plus(SpectralMeasure.from_atoms([(w, m * mass) for w, mass in img.atoms]))
    return out.reflected() if k_sign < 0 else out


def transform_triple(spec: MappingSpec, t: LevyTriple) -> LevyTriple:
    """
    Triple of I^{h,r}(ν) for Gaussian / compound Poisson ν.

    R' = R ∫h² dρ; M' = Σ m_j (image of ρ under t ↦ h(t)x_j); the shift
    absorbs the change of compensation region |x| ≤ 1.
    """
    if t.spectral.kind not in ("zero", "atoms"):
        raise UnsupportedTripleError(
            f"triple images need Gaussian or finite-atom jumps, got spectral kind {t.spectral.kind!r}"
        )
    if spec.negate_input:
        t = t.reflected()
    rho = spec.time_change.measure()
    sign = spec.sign

    def g(s: float) -> float:
        return sign * float(spec.kernel.value(np.array(s)))

    try:
        int_g = rho.integrate(g) if (t.shift or t.spectral.kind == "atoms") else 0.0
        int_g2 = rho.integrate(lambda s: g(s) ** 2) if t.gauss_var else 0.0
        shift = t.shift * int_g
        spectral = SpectralMeasure.zero()
        for x, m in t.spectral.effective_atoms():
            cuts = []
            if not spec.kernel.is_constant:
                level = abs(1.0 / (x * spec.kernel.scale))
                for target in (level, -level):
                    try:
                        with np.errstate(all="ignore"):
                            s_star = float(spec.kernel.inverse(np.array(target * spec.kernel.scale)))
                    except ValueError:
                        continue
                    if math.isfinite(s_star):
                        cuts.append(s_star)
            inside_now = abs(x) <= 1.0
            if inside_now:
                corr = -_integrate_where(rho, g, lambda s: abs(g(s) * x) > 1.0, cuts)
            else:
                corr = _integrate_where(rho, g, lambda s: abs(g(s) * x) <= 1.0, cuts)
            shift += m * x * corr
            spectral = spectral.plus(_image_spectral(spec, rho, x, m))
    except DivergentMassError as exc:
        raise UnsupportedTripleError(f"{spec.label}: triple image diverges ({exc})") from exc

    logger.debug("transform_triple %s: z'=%.6g R'=%.6g", spec.label, shift, t.gauss_var * int_g2)
    return LevyTriple(shift=shift, gauss_var=t.gauss_var * int_g2, spectral=spectral)


# ══════════════════════════════════════════════════════════════════════════════
#  Continuity along compound Poisson approximations
# ══════════════════════════════════════════════════════════════════════════════

def gamma_cp_approximation(shape: float, rate: float, level: int) -> LevyTriple:
    """
    Compound Poisson law whose atoms discretise c·e^{-λx}/x dx on [ε, X].

    Each cell keeps its mass and its first moment; ε shrinks and X grows
    with the level.
    """
    eps = 2.0 ** -(level + 2)
    top = 8.0 + 4.0 * level
    edges = np.geomspace(eps, top, 16 * 2 ** level + 1)
    atoms = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mass = shape * (inc_gamma_tail(0.0, rate * lo) - inc_gamma_tail(0.0, rate * hi))
        first = shape * (math.exp(-rate * lo) - math.exp(-rate * hi)) / rate
        atoms.append((first / mass, mass))
    return make_law("compound_poisson", atoms=atoms)


@dataclass
class ContinuityReport:
    table: pd.DataFrame

    @property
    def converging(self) -> bool:
        d = self.table["distance"].to_numpy()
        return bool(d[-1] < d[0] and np.all(np.diff(d) <= 1e-12))

    def __str__(self) -> str:
        return self.table.to_string(index=False)


def continuity_probe(spec: MappingSpec, shape: float = 1.0, rate: float = 1.0,
                     levels=(0, 1, 2, 3), grid=None) -> ContinuityReport:
    """Distance between I(ν_n) and I(ν) for compound Poisson ν_n → gamma ν."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    target_law = make_law("gamma", shape=shape, rate=rate)
    target = apply(spec, exponent_of(target_law))(grid)
    rows = []
    for level in levels:
        approx = gamma_cp_approximation(shape, rate, level)
        mapped = apply(spec, exponent_of(approx), check=False)(grid)
        dist = float(np.max(np.abs(mapped - target)))
        rows.append({"level": level, "atoms": len(approx.spectral.atoms), "distance": dist})
        logger.info("continuity %s level %d: %d atoms, distance %.3g",
                    spec.label, level, rows[-1]["atoms"], dist)
    return ContinuityReport(pd.DataFrame(rows))
