"""
path_sim.py — Monte Carlo evaluation of random integral mappings
==================================================================
Responsibilities:
  • Discretise (a, b] into a PathGrid, truncating improper ends where the
    remaining ∫(|h| + h²) dρ falls below LEVYMAP_TRUNCATION_TOL
  • Draw exact increments Y(r(t_{i+1})) - Y(r(t_i)) ~ ν^{*|Δr_i|} for
    drift / Gaussian / compound-Poisson / gamma laws
  • Form h(b)Y(r(b)) - h(a)Y(r(a)) - Σ Y(r(t_i))·Δh_i per path
  • Empirical characteristic function with confidence bands, comparison
    against the analytic exponent, and refinement studies

Design choices:
  • Paths are drawn in blocks of PATH_BLOCK, each with its own child of
    SeedSequence(seed); blocks run on a thread pool and are merged in
    block order, so samples depend on the seed only
  • Nodes are streamed in segments of NODE_SEGMENT cells; memory stays
    O(PATH_BLOCK × NODE_SEGMENT) per worker
  • Stable and log-tail laws have no exact increment sampler and raise
    UnsupportedFamilyError
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd
from scipy.stats import norm

from config import (
    BAND_Z_QUANTILE, BASE_NODES, DEFAULT_PATHS, DEFAULT_SEED, ECF_COVERAGE, NODE_SEGMENT,
    PATH_BLOCK, THREADS, TRUNCATION_TOL,
)
from errors import InvalidParameterError, UnsupportedFamilyError
from integral_map import MappingSpec, apply, require_domain
from levy_core import LevyExponent, LevyTriple, SpectralMeasure, default_grid, exponent_of
from measure_alg import DOWN
from quadrature import quad_scalar

logger = logging.getLogger(__name__)

_MAX_DOUBLINGS = 12    # upper truncation stops at base + 4096
_MAX_HALVINGS  = 60
_MOMENT_STEP   = 1e-3  # δ in the mean / variance read-off from Φ(δ)

Sampler = Callable[[np.random.Generator, np.ndarray, int], np.ndarray]


# ══════════════════════════════════════════════════════════════════════════════
#  Grid
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class PathGrid:
    interval:   tuple[float, float]
    nodes:      np.ndarray
    level:      int = 0
    truncation: float | None = None    # T replacing b = ∞
    lower:      float | None = None    # ε replacing a where ρ is infinite
    geometric:  bool = False

    @property
    def n_cells(self) -> int:
        return int(self.nodes.size - 1)

    def describe(self) -> dict:
        return {
            "interval":   list(self.interval),
            "level":      self.level,
            "cells":      self.n_cells,
            "start":      float(self.nodes[0]),
            "end":        float(self.nodes[-1]),
            "truncation": self.truncation,
            "lower":      self.lower,
            "geometric":  self.geometric,
        }

    def __str__(self) -> str:
        spacing = "geometric" if self.geometric else "uniform"
        return (f"PathGrid(level={self.level}, {self.n_cells} {spacing} cells on "
                f"({self.nodes[0]:.3g}, {self.nodes[-1]:.3g}])")


def _weight(spec: MappingSpec) -> Callable[[float], float]:
    """t ↦ (|h(t)| + h(t)²)·|r'(t)|."""
    rho = spec.time_change.measure()
    kernel = spec.kernel

    def w(t: float) -> float:
        h = float(kernel.value(np.array(t)))
        return (abs(h) + h * h) * float(rho.density_at(t))
    return w


def _upper_cut(spec: MappingSpec, start: float) -> float:
    w = _weight(spec)
    cut = start + 1.0
    for k in range(_MAX_DOUBLINGS + 1):
        cut = start + 2.0 ** k
        rest = quad_scalar(w, cut, math.inf)
        if rest < TRUNCATION_TOL:
            return cut
    logger.warning("%s: tail weight beyond T=%.4g is %.3g > %g; truncating anyway",
                   spec.label, cut, rest, TRUNCATION_TOL)
    return cut


def _lower_cut(spec: MappingSpec, a: float, end: float) -> float:
    w = _weight(spec)
    width = min(end - a, 1.0) / 2.0
    cut = a + width
    for _ in range(_MAX_HALVINGS):
        cut = a + width
        head = quad_scalar(w, a, cut)
        if head < TRUNCATION_TOL:
            return cut
        width /= 2.0
    logger.warning("%s: head weight below ε=%.3g is still %.3g; truncating anyway",
                   spec.label, cut, head)
    return cut


def make_grid(spec: MappingSpec, level: int = 0, *, truncation: float | None = None,
              lower: float | None = None) -> PathGrid:
    """
    Grid with BASE_NODES·4^level cells on (a, b].

    b = ∞ is replaced by T (given, or doubled until the remaining weight is
    below tolerance); an end where ρ is infinite is pulled in likewise.
    Geometric spacing is used toward a singular lower end.
    """
    if level < 0:
        raise InvalidParameterError(f"refinement level must be ≥ 0, got {level}")
    a, b = spec.interval
    rho = spec.time_change.measure()

    lo_cut = None
    if rho.infinite_near_lo or not math.isfinite(a):
        if not math.isfinite(a):
            raise InvalidParameterError("path grids need a finite lower end")
        lo_cut = lower if lower is not None else _lower_cut(spec, a, b if math.isfinite(b) else a + 2.0)
    start = lo_cut if lo_cut is not None else a

    hi_cut = None
    if not math.isfinite(b):
        hi_cut = truncation if truncation is not None else _upper_cut(spec, start)
    elif rho.infinite_near_hi:
        raise InvalidParameterError(f"{spec.label}: time change is unbounded at the finite end {b}")
    end = hi_cut if hi_cut is not None else b

    n = BASE_NODES * 4 ** level
    geometric = lo_cut is not None and start > 0
    nodes = np.geomspace(start, end, n + 1) if geometric else np.linspace(start, end, n + 1)
    grid = PathGrid(interval=(a, b), nodes=nodes, level=level, truncation=hi_cut,
                    lower=lo_cut, geometric=geometric)
    logger.debug("%s: %s", spec.label, grid)
    return grid


# ══════════════════════════════════════════════════════════════════════════════
#  Increment samplers
# ══════════════════════════════════════════════════════════════════════════════

def _spectral_parts(m: SpectralMeasure) -> list[SpectralMeasure]:
    if m.kind == "sum":
        return [p for c in m._resolved_components() for p in _spectral_parts(c)]
    return [m]


def increment_sampler(law: LevyTriple) -> Sampler:
    """
    Exact sampler of ν^{*dt}: (rng, dt[L], n_paths) ↦ array (n_paths, L).

    The triple is read directly (shift, Gaussian part, atoms, gamma and
    exponential-jump families, weights and reflections included), so scaled
    and reflected catalog laws are sampleable too.
    """
    drift = law.shift
    var = law.gauss_var
    jumps: list[Sampler] = []

    for part in _spectral_parts(law.spectral):
        if part.kind == "zero":
            continue
        sign = -1.0 if part.reflect else 1.0
        if part.kind == "atoms":
            for x, m in part.effective_atoms():
                if abs(x) <= 1.0:
                    drift -= m * x
                jumps.append(lambda rng, dt, n, x=x, m=m: x * rng.poisson(m * dt, size=(n, dt.size)))
        elif part.kind == "family" and part.family == "gamma":
            c = part.weight * part.params["shape"]
            lam = part.params["rate"]
            drift -= sign * c * (1.0 - math.exp(-lam)) / lam
            jumps.append(lambda rng, dt, n, c=c, lam=lam, sign=sign:
                         sign * rng.gamma(c * dt, 1.0 / lam, size=(n, dt.size)))
        elif part.kind == "family" and part.family == "cp_exponential":
            lam = part.weight * part.params["rate"]
            theta = part.params["theta"]
            drift -= sign * lam * (1.0 - (1.0 + theta) * math.exp(-theta)) / theta

            def cp_exp(rng, dt, n, lam=lam, theta=theta, sign=sign):
                counts = rng.poisson(lam * dt, size=(n, dt.size))
                sizes = rng.gamma(np.maximum(counts, 1), 1.0 / theta)
                return sign * np.where(counts > 0, sizes, 0.0)
            jumps.append(cp_exp)
        else:
            raise UnsupportedFamilyError(
                f"no exact increment sampler for spectral part {part.label!r}"
            )

    def sample(rng: np.random.Generator, dt: np.ndarray, n: int) -> np.ndarray:
        out = np.broadcast_to(drift * dt, (n, dt.size)).copy()
        if var > 0:
            out += rng.normal(0.0, np.sqrt(var * dt), size=(n, dt.size))
        for draw in jumps:
            out += draw(rng, dt, n)
        return out

    return sample


# ══════════════════════════════════════════════════════════════════════════════
#  Path sums
# ══════════════════════════════════════════════════════════════════════════════

def ibp_sum(h: np.ndarray, increments: np.ndarray) -> np.ndarray:
    """h(t_n)Y(t_n) - h(t_0)Y(t_0) - Σ Y(t_i)(h(t_{i+1}) - h(t_i)), Y(t_0) = 0."""
    increments = np.atleast_2d(increments)
    path = np.cumsum(increments, axis=1)
    left = np.concatenate([np.zeros((path.shape[0], 1)), path[:, :-1]], axis=1)
    return h[-1] * path[:, -1] - left @ np.diff(h)


def right_riemann_sum(h: np.ndarray, increments: np.ndarray) -> np.ndarray:
    """Σ h(t_{i+1})·(Y(t_{i+1}) - Y(t_i))."""
    return np.atleast_2d(increments) @ h[1:]


def _simulate_block(rng: np.random.Generator, size: int, sampler: Sampler,
                    dr: np.ndarray, h: np.ndarray, negate: bool) -> np.ndarray:
    y_run = np.zeros(size)
    acc = np.zeros(size)
    dh = np.diff(h)
    for start in range(0, dr.size, NODE_SEGMENT):
        seg = slice(start, min(start + NODE_SEGMENT, dr.size))
        dz = sampler(rng, dr[seg], size)
        if negate:
            dz = -dz
        path = y_run[:, None] + np.cumsum(dz, axis=1)
        left = np.concatenate([y_run[:, None], path[:, :-1]], axis=1)
        acc -= left @ dh[seg]
        y_run = path[:, -1]
    return h[-1] * y_run + acc


# ══════════════════════════════════════════════════════════════════════════════
#  SimResult
# ══════════════════════════════════════════════════════════════════════════════

@dataclass
class SimResult:
    samples:  np.ndarray
    seed:     int
    n_paths:  int
    y:        np.ndarray
    ecf:      np.ndarray
    band:     np.ndarray
    grid:     PathGrid
    mapping:  str = ""
    law:      str = ""

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def variance(self) -> float:
        return float(np.var(self.samples, ddof=1)) if self.samples.size > 1 else 0.0

    def samples_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"path": np.arange(self.samples.size), "value": self.samples})

    def ecf_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"y": self.y, "re": self.ecf.real, "im": self.ecf.imag, "band": self.band})

    def to_dict(self) -> dict:
        return {
            "mapping":  self.mapping,
            "law":      self.law,
            "seed":     self.seed,
            "n_paths":  self.n_paths,
            "grid":     self.grid.describe(),
            "mean":     self.mean,
            "variance": self.variance,
        }

    def __str__(self) -> str:
        return (f"SimResult({self.mapping} on {self.law}: {self.n_paths:,} paths, "
                f"mean={self.mean:.5g}, var={self.variance:.5g}, level={self.grid.level})")


def empirical_cf(samples: np.ndarray, y: np.ndarray, chunk: int = 16) -> np.ndarray:
    """mean_k exp(i·y·X_k); exactly 1 at y = 0 and never above 1 in modulus."""
    samples = np.asarray(samples, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape, dtype=complex)
    for i in range(0, y.size, chunk):
        arg = np.outer(y[i:i + chunk], samples)
        out[i:i + chunk] = np.cos(arg).mean(axis=1) + 1j * np.sin(arg).mean(axis=1)
    mod = np.abs(out)
    return np.where(mod > 1.0, out / np.where(mod > 1.0, mod, 1.0), out)


def confidence_band(ecf: np.ndarray, n: int, kind: str = "simple") -> np.ndarray:
    """4/√n everywhere ('simple') or z_{0.995}·√((1-|ecf|²)/n) ('clt')."""
    if kind == "simple":
        return np.full(ecf.shape, 4.0 / math.sqrt(n))
    if kind == "clt":
        z = float(norm.ppf(BAND_Z_QUANTILE))
        return z * np.sqrt(np.maximum(1.0 - np.abs(ecf) ** 2, 0.0) / n)
    raise InvalidParameterError(f"unknown band kind {kind!r}; use 'simple' or 'clt'")


def simulate_integral(spec: MappingSpec, law: LevyTriple, grid: PathGrid | None = None,
                      n_paths: int = DEFAULT_PATHS, seed: int = DEFAULT_SEED, *,
                      y: np.ndarray | None = None, band: str = "simple",
                      threads: int = THREADS, check: bool = True) -> SimResult:
    """Sample ∫_{(a,b]} h(t) dY(r(t)) path by path and attach its ECF."""
    if n_paths < 1:
        raise InvalidParameterError(f"n_paths must be ≥ 1, got {n_paths}")
    sampler = increment_sampler(law)
    if check:
        require_domain(spec, exponent_of(law))
    grid = grid or make_grid(spec)
    y = default_grid() if y is None else np.asarray(y, dtype=float)

    tc = spec.time_change
    r = tc.value(grid.nodes)
    if not np.all(np.isfinite(r)):
        raise InvalidParameterError(f"{spec.label}: time change is infinite on the path grid")
    dr = np.abs(np.diff(r))
    h = spec.kernel.value(grid.nodes)
    negate = (tc.direction == DOWN) != spec.negate_input

    n_blocks = -(-n_paths // PATH_BLOCK)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(PATH_BLOCK, n_paths - k * PATH_BLOCK) for k in range(n_blocks)]

    def run(k: int) -> np.ndarray:
        return _simulate_block(np.random.default_rng(children[k]), sizes[k], sampler, dr, h, negate)

    logger.info("simulating %s on %s: %d paths, %d cells, %d thread(s)",
                spec.label, law.family, n_paths, grid.n_cells, threads)
    if threads <= 1 or n_blocks == 1:
        blocks = [run(k) for k in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(run, range(n_blocks)))
    samples = np.concatenate(blocks)

    ecf = empirical_cf(samples, y)
    result = SimResult(samples=samples, seed=seed, n_paths=n_paths, y=y, ecf=ecf,
                       band=confidence_band(ecf, n_paths, band), grid=grid,
                       mapping=spec.label, law=law.family)
    logger.info("%s", result)
    return result


# ══════════════════════════════════════════════════════════════════════════════
#  ECF comparison
# ══════════════════════════════════════════════════════════════════════════════

@dataclass
class EcfReport:
    y:           np.ndarray
    discrepancy: np.ndarray
    band:        np.ndarray
    coverage:    float = ECF_COVERAGE

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(self.discrepancy)) if self.discrepancy.size else 0.0

    @property
    def fraction_outside(self) -> float:
        return float(np.mean(self.discrepancy > self.band)) if self.discrepancy.size else 0.0

    @property
    def passed(self) -> bool:
        return 1.0 - self.fraction_outside >= self.coverage

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"y": self.y, "discrepancy": self.discrepancy, "band": self.band,
                             "outside": self.discrepancy > self.band})

    def to_dict(self) -> dict:
        return {
            "max_discrepancy":  self.max_discrepancy,
            "fraction_outside": self.fraction_outside,
            "coverage":         self.coverage,
            "passed":           self.passed,
        }

    def __str__(self) -> str:
        status = "✓" if self.passed else "✗"
        return (f"{status} ECF vs exp(Φ): max|Δ|={self.max_discrepancy:.3g}, "
                f"{self.fraction_outside:.1%} of points outside the band")


def ecf_compare(sim: SimResult, e: LevyExponent, coverage: float = ECF_COVERAGE) -> EcfReport:
    """|ecf(y) - exp(Φ(y))| on the simulation's y-grid."""
    target = np.exp(e(sim.y))
    return EcfReport(y=sim.y, discrepancy=np.abs(sim.ecf - target), band=sim.band, coverage=coverage)


def ecf_agreement(a: SimResult, b: SimResult) -> float:
    """Share of y-points where two ECFs agree within the sum of their bands."""
    if not np.array_equal(a.y, b.y):
        raise InvalidParameterError("ECFs were taken on different y-grids")
    return float(np.mean(np.abs(a.ecf - b.ecf) <= a.band + b.band))


# ══════════════════════════════════════════════════════════════════════════════
#  Refinement study
# ══════════════════════════════════════════════════════════════════════════════

@dataclass
class RefineReport:
    table:   pd.DataFrame
    n_paths: int
    notes:   list[str] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        """Discrepancy non-increasing across levels, up to two simple bands of MC noise."""
        d = self.table["discrepancy"].to_numpy()
        if d.size < 2:
            return True
        slack = 2.0 * 4.0 / math.sqrt(self.n_paths)
        return bool(np.all(np.diff(d) <= slack))

    def __str__(self) -> str:
        head = "monotone" if self.monotone else "NOT monotone"
        return f"RefineReport ({head})\n{self.table.to_string(index=False)}"


def model_moments(e: LevyExponent, delta: float = _MOMENT_STEP) -> tuple[float, float]:
    """(mean, variance) read off Φ(δ) ≈ iδμ - δ²σ²/2."""
    phi = complex(e(np.array([delta]))[0])
    return phi.imag / delta, -2.0 * phi.real / delta ** 2


def refine_study(spec: MappingSpec, law: LevyTriple, levels=(0, 1, 2, 3),
                 n_paths: int = DEFAULT_PATHS, seed: int = DEFAULT_SEED, *,
                 y: np.ndarray | None = None, threads: int = THREADS) -> RefineReport:
    """simulate_integral + ecf_compare at each level, one row per level."""
    target = apply(spec, exponent_of(law))
    mu, var = model_moments(target)
    rows = []
    for level in levels:
        grid = make_grid(spec, level)
        sim = simulate_integral(spec, law, grid, n_paths, seed, y=y, threads=threads, check=False)
        rep = ecf_compare(sim, target)
        rows.append({
            "level":          level,
            "nodes":          grid.n_cells + 1,
            "truncation":     grid.truncation if grid.truncation is not None else float(grid.nodes[-1]),
            "discrepancy":    rep.max_discrepancy,
            "mean":           sim.mean,
            "model_mean":     mu,
            "mean_error":     abs(sim.mean - mu),
            "variance":       sim.variance,
            "model_variance": var,
        })
        logger.info("level %d: max|Δ|=%.3g, mean error %.3g", level, rep.max_discrepancy, abs(sim.mean - mu))
    return RefineReport(table=pd.DataFrame(rows), n_paths=n_paths)


# ══════════════════════════════════════════════════════════════════════════════
#  CLI test
# ══════════════════════════════════════════════════════════════════════════════

if __name__ == "__main__":
    from levy_core import make_law
    from mapping_catalog import kexp

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)-8s %(message)s",
                        datefmt="%H:%M:%S")
    spec = kexp().spec
    print(refine_study(spec, make_law("shift", c=1.0), levels=(0, 1, 2), n_paths=8))
    sim = simulate_integral(spec, make_law("gaussian"), n_paths=20_000, seed=7)
    print(sim)
    print(ecf_compare(sim, apply(spec, exponent_of(make_law("gaussian")))))
