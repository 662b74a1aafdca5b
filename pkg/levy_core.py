"""
levy_core.py — Infinitely divisible laws on ℝ and their Lévy exponents
========================================================================
Responsibilities:
  • LevyTriple [z, R, M] and SpectralMeasure (family / atoms / density / sum)
  • Lévy–Khintchine evaluation Φ(y) = iyz - ½Ry² + ∫(e^{iyx} - 1 - iyx·1{|x|≤1}) M(dx)
    in closed form for catalogued families, by quadrature otherwise
  • Semigroup operations on exponents: convolve, conv_power, dilate, negate_law
  • Log-moment test deciding membership in ID_log

Design choices:
  • Jumps on the closed ball |x| ≤ 1 are compensated (atoms at ±1 included)
  • Every exponent is evaluated on |y| and conjugated for y < 0, so
    Φ(-y) = conj Φ(y) holds exactly
  • All objects are frozen dataclasses; exponents are pure callables on
    numpy arrays, safe to share between threads
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy.special import gamma as gamma_fn

from config import GRID_COUNT, GRID_MAX, GRID_MIN, TOL_DIV
from errors import (
    DivergentMassError, InvalidParameterError, SpectralDivergenceError,
    UndecidableError, UnsupportedFamilyError,
)
from quadrature import fourier_tail, integrate_pieces, quad_scalar

logger = logging.getLogger(__name__)

LAW_FAMILIES = (
    "gaussian", "shift", "compound_poisson", "cp_exponential",
    "gamma", "stable", "log_tail",
)

_LOG_MOMENT_MAX_S = 512.0   # x = e^s stays finite


def default_grid() -> np.ndarray:
    return np.linspace(GRID_MIN, GRID_MAX, GRID_COUNT)


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise InvalidParameterError(f"{name} must be a positive real, got {value}")
    return value


# ══════════════════════════════════════════════════════════════════════════════
#  Spectral families
# ══════════════════════════════════════════════════════════════════════════════

def _stable_constant(alpha: float) -> float:
    """K_α with ∫_0^∞ (1 - cos u) u^{-1-α} du = K_α."""
    if alpha == 1.0:
        return math.pi / 2.0
    return float(gamma_fn(1.0 - alpha) * math.cos(math.pi * alpha / 2.0) / alpha)


def _family_density(family: str, p: Mapping[str, float]) -> Callable:
    if family == "gamma":
        c, lam = p["shape"], p["rate"]
        return lambda x: c * np.exp(-lam * x) / x
    if family == "stable":
        c, alpha = p["scale"], p["alpha"]
        return lambda x: c * np.abs(x) ** (-1.0 - alpha)
    if family == "cp_exponential":
        lam, theta = p["rate"], p["theta"]
        return lambda x: lam * theta * np.exp(-theta * x)
    if family == "log_tail":
        lam = p["rate"]
        return lambda x: lam / (x * np.log(x) ** 2)
    raise UnsupportedFamilyError(f"unknown spectral family {family!r}")


def _family_support(family: str) -> tuple[float, float]:
    return {
        "gamma":          (0.0, np.inf),
        "stable":         (-np.inf, np.inf),
        "cp_exponential": (0.0, np.inf),
        "log_tail":       (math.e, np.inf),
    }[family]


def _family_closed_form(family: str, p: Mapping[str, float]) -> Callable | None:
    """Spectral part of Φ in closed form, or None when only quadrature exists."""
    if family == "gamma":
        c, lam = p["shape"], p["rate"]
        drift = c * (1.0 - math.exp(-lam)) / lam
        return lambda y: -c * np.log(1.0 - 1j * y / lam) - 1j * y * drift
    if family == "stable":
        c, alpha = p["scale"], p["alpha"]
        k = _stable_constant(alpha)
        return lambda y: -2.0 * c * k * np.abs(y) ** alpha + 0j
    if family == "cp_exponential":
        lam, theta = p["rate"], p["theta"]
        drift = lam * (1.0 - (1.0 + theta) * math.exp(-theta)) / theta
        return lambda y: lam * (1j * y / (theta - 1j * y)) - 1j * y * drift
    return None


def _family_mass(family: str, p: Mapping[str, float]) -> float:
    if family in ("cp_exponential", "log_tail"):
        return float(p["rate"])
    return math.inf


def _validate_family(family: str, p: Mapping[str, float]) -> None:
    if family == "gamma":
        _require_positive("shape", p["shape"])
        _require_positive("rate", p["rate"])
    elif family == "stable":
        if not 0.0 < p["alpha"] < 2.0:
            raise SpectralDivergenceError(
                f"stable index must lie in (0, 2) for ∫min(x²,1)M(dx) < ∞, got {p['alpha']}"
            )
        _require_positive("scale", p["scale"])
    elif family == "cp_exponential":
        _require_positive("rate", p["rate"])
        _require_positive("theta", p["theta"])
    elif family == "log_tail":
        _require_positive("rate", p["rate"])
    else:
        raise UnsupportedFamilyError(f"unknown spectral family {family!r}")


# ══════════════════════════════════════════════════════════════════════════════
#  Lévy–Khintchine quadrature
# ══════════════════════════════════════════════════════════════════════════════

def _compensated(x, y):
    """e^{iyx} - 1 - iyx without cancellation for small |yx|."""
    u = x * y
    return -2.0 * np.sin(0.5 * u) ** 2 + 1j * (np.sin(u) - u)


def _tail_part(f: Callable, a: float, b: float, y: np.ndarray, sign: float) -> np.ndarray:
    """∫_a^b (e^{i·sign·yx} - 1) f(x) dx for 1 ≤ a < b ≤ ∞."""
    if np.isfinite(b):
        return integrate_pieces(
            lambda x, yy: (np.exp(1j * sign * yy * x) - 1.0) * f(x), [a, b], (y,)
        )
    mass = quad_scalar(f, a, np.inf)
    flat = np.ravel(y)
    out = np.zeros(flat.shape, dtype=complex)
    for i, yv in enumerate(flat):
        if yv == 0.0:
            continue
        s = sign * math.copysign(1.0, yv)
        cos_part = fourier_tail(f, a, abs(yv), "cos")
        sin_part = fourier_tail(f, a, abs(yv), "sin")
        out[i] = (cos_part - mass) + 1j * s * sin_part
    return out.reshape(np.shape(y))


def levy_khintchine_quadrature(density: Callable, support: tuple[float, float],
                               y: np.ndarray) -> np.ndarray:
    """∫(e^{iyx} - 1 - iyx·1{|x|≤1}) f(x) dx over the support, by quadrature."""
    lo, hi = support
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.shape, dtype=complex)
    for a, b in ((max(lo, -1.0), min(hi, 0.0)), (max(lo, 0.0), min(hi, 1.0))):
        if b > a:
            out += integrate_pieces(lambda x, yy: _compensated(x, yy) * density(x), [a, b], (y,))
    if hi > 1.0:
        out += _tail_part(density, max(lo, 1.0), hi, y, sign=1.0)
    if lo < -1.0:
        out += _tail_part(lambda x: density(-x), max(-hi, 1.0), -lo, y, sign=-1.0)
    return out


# ══════════════════════════════════════════════════════════════════════════════
#  SpectralMeasure
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class SpectralMeasure:
    """
    Lévy (spectral) measure M on ℝ \\ {0}.

    kind is one of: zero, family, atoms, density, sum. `weight` scales the
    whole measure (convolution powers) and `reflect` mirrors it (x ↦ -x).
    """
    kind:       str = "zero"
    family:     str = ""
    params:     Mapping[str, float] = field(default_factory=dict)
    atoms:      tuple[tuple[float, float], ...] = ()
    density:    Callable | None = None
    support:    tuple[float, float] = (0.0, 0.0)
    components: tuple["SpectralMeasure", ...] = ()
    weight:     float = 1.0
    reflect:    bool = False
    label:      str = ""

    # ── constructors ─────────────────────────────────────────────────────────
    @classmethod
    def zero(cls) -> "SpectralMeasure":
        return cls(kind="zero", label="0")

    @classmethod
    def from_atoms(cls, atoms) -> "SpectralMeasure":
        cleaned = tuple((float(x), float(m)) for x, m in atoms)
        for x, m in cleaned:
            if x == 0.0:
                raise InvalidParameterError("a Lévy measure puts no mass on {0}")
            if m < 0:
                raise InvalidParameterError(f"atom mass must be ≥ 0, got {m}")
        return cls(kind="atoms", atoms=cleaned, label=f"atoms{list(cleaned)}")

    @classmethod
    def from_density(cls, fn: Callable, support: tuple[float, float],
                     label: str = "density") -> "SpectralMeasure":
        lo, hi = float(support[0]), float(support[1])
        if not hi > lo:
            raise InvalidParameterError(f"empty density support ({lo}, {hi})")
        return cls(kind="density", density=fn, support=(lo, hi), label=label)

    @classmethod
    def from_family(cls, family: str, **params: float) -> "SpectralMeasure":
        params = {k: float(v) for k, v in params.items()}
        _validate_family(family, params)
        return cls(kind="family", family=family, params=params,
                   support=_family_support(family), label=family)

    # ── algebra ──────────────────────────────────────────────────────────────
    def scaled(self, s: float) -> "SpectralMeasure":
        return replace(self, weight=self.weight * s)

    def reflected(self) -> "SpectralMeasure":
        return replace(self, reflect=not self.reflect)

    def plus(self, other: "SpectralMeasure") -> "SpectralMeasure":
        if self.kind == "zero":
            return other
        if other.kind == "zero":
            return self
        return SpectralMeasure(kind="sum", components=(self, other),
                               label=f"{self.label}+{other.label}")

    # ── views ────────────────────────────────────────────────────────────────
    def effective_atoms(self) -> list[tuple[float, float]]:
        if self.kind == "atoms":
            sign = -1.0 if self.reflect else 1.0
            return [(sign * x, self.weight * m) for x, m in self.atoms]
        if self.kind == "sum":
            out = []
            for comp in self._resolved_components():
                out.extend(comp.effective_atoms())
            return out
        return []

    def effective_support(self) -> tuple[float, float]:
        lo, hi = self.support
        return (-hi, -lo) if self.reflect else (lo, hi)

    def density_at(self) -> Callable | None:
        """Density of the absolutely continuous part (weight and reflection applied)."""
        if self.kind == "family":
            base = _family_density(self.family, self.params)
        elif self.kind == "density":
            base = self.density
        else:
            return None
        w = self.weight
        if self.reflect:
            return lambda x: w * base(-x)
        return lambda x: w * base(x)

    def _resolved_components(self) -> list["SpectralMeasure"]:
        return [
            replace(c, weight=c.weight * self.weight, reflect=c.reflect != self.reflect)
            for c in self.components
        ]

    @property
    def has_closed_form(self) -> bool:
        if self.kind in ("zero", "atoms"):
            return True
        if self.kind == "family":
            return _family_closed_form(self.family, self.params) is not None
        if self.kind == "sum":
            return all(c.has_closed_form for c in self.components)
        return False

    # ── masses ───────────────────────────────────────────────────────────────
    def total_mass(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "atoms":
            return sum(m for _, m in self.effective_atoms())
        if self.kind == "family":
            return self.weight * _family_mass(self.family, self.params)
        if self.kind == "sum":
            return sum(c.total_mass() for c in self._resolved_components())
        lo, hi = self.effective_support()
        f = self.density_at()
        try:
            return sum(quad_scalar(f, a, b) for a, b in _split_at_zero(lo, hi))
        except DivergentMassError:
            return math.inf

    def is_compound_poisson(self) -> bool:
        return math.isfinite(self.total_mass())

    def validate(self) -> None:
        """Raise SpectralDivergenceError unless ∫ min(x², 1) M(dx) < ∞."""
        if self.kind in ("zero", "atoms", "family"):
            return
        if self.kind == "sum":
            for c in self.components:
                c.validate()
            return
        f = self.density_at()
        lo, hi = self.effective_support()
        pieces = [
            (max(lo, -np.inf), min(hi, -1.0), f),
            (max(lo, -1.0), min(hi, 0.0), lambda x: x * x * f(x)),
            (max(lo, 0.0), min(hi, 1.0), lambda x: x * x * f(x)),
            (max(lo, 1.0), min(hi, np.inf), f),
        ]
        try:
            for a, b, g in pieces:
                if b > a:
                    quad_scalar(g, a, b)
        except DivergentMassError as exc:
            raise SpectralDivergenceError(
                f"{self.label}: ∫ min(x², 1) M(dx) diverges"
            ) from exc

    # ── exponent ─────────────────────────────────────────────────────────────
    def exponent(self, y: np.ndarray, method: str = "auto") -> np.ndarray:
        """∫(e^{iyx} - 1 - iyx·1{|x|≤1}) M(dx) evaluated elementwise."""
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return np.zeros(y.shape, dtype=complex)
        if self.kind == "atoms":
            out = np.zeros(y.shape, dtype=complex)
            for x, m in self.effective_atoms():
                comp = x if abs(x) <= 1.0 else 0.0
                out += m * (np.exp(1j * y * x) - 1.0 - 1j * y * comp)
            return out
        if self.kind == "sum":
            return sum(c.exponent(y, method) for c in self._resolved_components())
        if self.kind == "family" and method == "auto":
            cf = _family_closed_form(self.family, self.params)
            if cf is not None:
                arg = -y if self.reflect else y
                return self.weight * cf(arg)
        return levy_khintchine_quadrature(self.density_at(), self.effective_support(), y)


def _split_at_zero(lo: float, hi: float) -> list[tuple[float, float]]:
    if lo < 0.0 < hi:
        return [(lo, 0.0), (0.0, hi)]
    return [(lo, hi)]


# ══════════════════════════════════════════════════════════════════════════════
#  LevyTriple
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class LevyTriple:
    """ν = [z, R, M]; `family`/`params` name the catalog law (for samplers)."""
    shift:     float = 0.0
    gauss_var: float = 0.0
    spectral:  SpectralMeasure = field(default_factory=SpectralMeasure.zero)
    family:    str = "custom"
    params:    Mapping = field(default_factory=dict)
    negated:   bool = False

    def __post_init__(self):
        if not self.gauss_var >= 0:
            raise InvalidParameterError(f"Gaussian variance must be ≥ 0, got {self.gauss_var}")
        self.spectral.validate()

    def reflected(self) -> "LevyTriple":
        """Triple of ν⁻ = L(-Y_ν(1))."""
        return replace(self, shift=-self.shift, spectral=self.spectral.reflected(),
                       negated=not self.negated)

    def scaled(self, s: float) -> "LevyTriple":
        """Triple of ν^{*s}."""
        return replace(self, shift=s * self.shift, gauss_var=s * self.gauss_var,
                       spectral=self.spectral.scaled(s), family="custom", params={})

    def describe(self) -> dict:
        return {
            "family":    self.family,
            "params":    dict(self.params),
            "shift":     self.shift,
            "gauss_var": self.gauss_var,
            "spectral":  self.spectral.label,
            "negated":   self.negated,
        }


def make_law(family: str, **params) -> LevyTriple:
    """Build a catalog law. Unknown families raise UnsupportedFamilyError."""
    if family == "gaussian":
        mean = float(params.get("mean", 0.0))
        var = float(params.get("variance", 1.0))
        return LevyTriple(shift=mean, gauss_var=var, family=family,
                          params={"mean": mean, "variance": var})
    if family == "shift":
        c = float(params.get("c", 0.0))
        return LevyTriple(shift=c, family=family, params={"c": c})
    if family == "compound_poisson":
        atoms = params.get("atoms", [[1.0, 1.0]])
        shift = float(params.get("shift", 0.0))
        spectral = SpectralMeasure.from_atoms(atoms)
        return LevyTriple(shift=shift, spectral=spectral, family=family,
                          params={"atoms": spectral.atoms, "shift": shift})
    spectral_params = {
        "cp_exponential": ("rate", "theta"),
        "gamma":          ("shape", "rate"),
        "stable":         ("alpha", "scale"),
        "log_tail":       ("rate",),
    }
    if family not in spectral_params:
        raise UnsupportedFamilyError(f"unknown law family {family!r}")
    defaults = {"rate": 1.0, "theta": 1.0, "shape": 1.0, "alpha": 1.0, "scale": 1.0}
    fam_params = {k: float(params.get(k, defaults[k])) for k in spectral_params[family]}
    shift = float(params.get("shift", 0.0))
    spectral = SpectralMeasure.from_family(family, **fam_params)
    return LevyTriple(shift=shift, spectral=spectral, family=family,
                      params={**fam_params, "shift": shift})


def combine(t1: LevyTriple, t2: LevyTriple) -> LevyTriple:
    """Triple of ν1 ∗ ν2."""
    return LevyTriple(shift=t1.shift + t2.shift, gauss_var=t1.gauss_var + t2.gauss_var,
                      spectral=t1.spectral.plus(t2.spectral))


# ══════════════════════════════════════════════════════════════════════════════
#  LevyExponent
# ══════════════════════════════════════════════════════════════════════════════

def hermitian(fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluate fn on unique |y| values and conjugate for y < 0."""
    def wrapped(y):
        y = np.asarray(y, dtype=float)
        mags, inverse = np.unique(np.abs(y).ravel(), return_inverse=True)
        vals = np.asarray(fn(mags), dtype=complex)[inverse].reshape(y.shape)
        return np.where(y < 0, np.conj(vals), vals)
    return wrapped


@dataclass(frozen=True)
class LevyExponent:
    """y ↦ Φ(y) = log of the characteristic function, evaluated on numpy arrays."""
    fn:         Callable[[np.ndarray], np.ndarray]
    provenance: tuple = ("closed-form",)
    triple:     LevyTriple | None = None

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.asarray(self.fn(y), dtype=complex)

    @classmethod
    def zero(cls) -> "LevyExponent":
        return cls(fn=lambda y: np.zeros(np.shape(y), dtype=complex),
                   provenance=("closed-form", "delta0"),
                   triple=LevyTriple(family="shift", params={"c": 0.0}))


def exponent_of(triple: LevyTriple, method: str = "auto") -> LevyExponent:
    """
    Lévy–Khintchine exponent of a triple.

    method='auto' uses closed forms where catalogued; method='quadrature'
    forces adaptive quadrature of the spectral integral (oracle path).
    """
    if method not in ("auto", "quadrature"):
        raise InvalidParameterError(f"unknown evaluation method {method!r}")
    z, r, m = triple.shift, triple.gauss_var, triple.spectral

    def phi(y):
        return 1j * y * z - 0.5 * r * y * y + m.exponent(y, method)

    return LevyExponent(fn=hermitian(phi), provenance=("from-triple", triple.family, method),
                        triple=triple)


def convolve(e1: LevyExponent, e2: LevyExponent) -> LevyExponent:
    triple = combine(e1.triple, e2.triple) if e1.triple and e2.triple else None
    return LevyExponent(fn=lambda y: e1(y) + e2(y),
                        provenance=("convolve", e1.provenance, e2.provenance), triple=triple)


def conv_power(e: LevyExponent, s: float) -> LevyExponent:
    """Exponent of ν^{*s}: s·Φ."""
    if not s > 0:
        raise InvalidParameterError(f"convolution power needs s > 0, got {s}")
    return LevyExponent(fn=lambda y: s * e(y), provenance=("conv_power", s, e.provenance),
                        triple=e.triple.scaled(s) if e.triple else None)


def dilate(e: LevyExponent, u: float) -> LevyExponent:
    """Exponent of T_u ν: y ↦ Φ(u·y)."""
    if u == 0:
        raise InvalidParameterError("dilation factor must be nonzero")
    triple = e.triple.reflected() if (u == -1.0 and e.triple) else None
    return LevyExponent(fn=lambda y: e(u * np.asarray(y, dtype=float)),
                        provenance=("dilate", u, e.provenance), triple=triple)


def negate_law(e: LevyExponent) -> LevyExponent:
    """Exponent of ν⁻ = L(-Y_ν(1)): y ↦ Φ(-y)."""
    return LevyExponent(fn=lambda y: e(-np.asarray(y, dtype=float)),
                        provenance=("negate", e.provenance),
                        triple=e.triple.reflected() if e.triple else None)


# ══════════════════════════════════════════════════════════════════════════════
#  Log-moment (ID_log)
# ══════════════════════════════════════════════════════════════════════════════

def log_moment(m: SpectralMeasure) -> float:
    """∫_{|x|>1} log(1+|x|) M(dx); +∞ when divergent."""
    total = sum(x_m * math.log1p(abs(x)) for x, x_m in m.effective_atoms() if abs(x) > 1.0)
    if m.kind == "sum":
        return sum(log_moment(c) for c in m._resolved_components())
    f = m.density_at()
    if f is None:
        return total
    lo, hi = m.effective_support()
    try:
        if hi > 1.0:
            total += quad_scalar(lambda x: math.log1p(x) * f(x), max(lo, 1.0), hi)
        if lo < -1.0:
            total += quad_scalar(lambda x: math.log1p(x) * f(-x), max(-hi, 1.0), -lo)
    except DivergentMassError:
        return math.inf
    return total


def _log_moment_increments(f: Callable, a: float) -> list[float]:
    """∫ log(1+x) f(x) dx over x ∈ [e^{S_k}, e^{S_{k+1}}], S doubling from log a."""
    s0 = max(math.log(a), 0.0)
    edges = [s0] + [s0 + 2.0 ** k for k in range(0, 10) if s0 + 2.0 ** k <= _LOG_MOMENT_MAX_S]
    g = lambda s: math.log1p(math.exp(s)) * f(math.exp(s)) * math.exp(s)
    return [quad_scalar(g, lo, hi, epsabs=1e-14) for lo, hi in zip(edges[:-1], edges[1:])]


def check_id_log(m: SpectralMeasure) -> bool:
    """
    True iff ∫_{|x|>1} log(1+|x|) M(dx) < ∞.

    Catalog families are decided analytically; densities by watching the
    increments of the integral over doubling ranges of log|x|. Raises
    UndecidableError when the increments neither vanish nor stall.
    """
    if m.kind in ("zero", "atoms"):
        return True
    if m.kind == "sum":
        return all(check_id_log(c) for c in m.components)
    if m.kind == "family":
        return m.family != "log_tail"

    f = m.density_at()
    lo, hi = m.effective_support()
    tails = []
    if hi > 1.0:
        tails.append((f, max(lo, 1.0), hi))
    if lo < -1.0:
        tails.append((lambda x: f(-x), max(-hi, 1.0), -lo))
    for g, a, b in tails:
        if np.isfinite(b):
            continue
        incs = _log_moment_increments(g, a)
        logger.debug("log-moment increments for %s: %s", m.label, incs)
        if incs[-1] <= TOL_DIV:
            continue
        tail = incs[-3:]
        if len(tail) == 3 and all(later >= 0.9 * earlier for earlier, later in zip(tail, tail[1:])):
            return False
        raise UndecidableError(f"{m.label}: log-moment increments {tail} neither vanish nor stall")
    return True


# ══════════════════════════════════════════════════════════════════════════════
#  CLI test
# ══════════════════════════════════════════════════════════════════════════════

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)-8s %(message)s",
                        datefmt="%H:%M:%S")
    y = np.array([0.5, 1.0, 2.0, 5.0])
    law = make_law("gamma", shape=1.0, rate=1.0)
    closed = exponent_of(law)(y)
    quad = exponent_of(law, method="quadrature")(y)
    print(f"\n  {'y':>6} {'closed form':>36} {'quadrature':>36}")
    for yv, c, q in zip(y, closed, quad):
        print(f"  {yv:>6g} {c.real:>17.12f}{c.imag:+17.12f}i {q.real:>17.12f}{q.imag:+17.12f}i")
