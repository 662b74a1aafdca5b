"""
mapping_catalog.py — Named mappings and the identity gallery
==============================================================
Responsibilities:
  • Named mappings: upsilon (kexp, kexp_alt), selfdecomposability (lmap),
    Thorin (thorin) and the power / gamma-tail families
  • Identity checks comparing nested, swapped, composed and closed-form
    single mappings on a y-grid
  • Thorin factorization witness (thorin = lmap∘kexp = kexp∘lmap)
  • Suite registry driven by `cli_app verify`

Design choices:
  • Every check is deterministic; a failed check writes its per-y error
    curve as CSV next to the report
  • Suites expand into independent tasks run on a thread pool capped by
    LEVYMAP_THREADS; results keep task order
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import cache
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from artifacts import write_csv
from config import SUITE_ALPHAS, SUITE_BETAS, SUITE_TOLERANCES, THREADS
from errors import ConfigError
from integral_map import (
    IdentityMemo, MappingSpec, apply, clear_memos, compose, require_domain, verify_conv_power,
    verify_dilation, verify_homomorphism,
)
from levy_core import LevyExponent, LevyTriple, default_grid, exponent_of, make_law
from measure_alg import KernelFunction, TimeChange

logger = logging.getLogger(__name__)

INF = math.inf


# ══════════════════════════════════════════════════════════════════════════════
#  Named mappings
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class NamedMapping:
    name:      str
    spec:      MappingSpec
    class_tag: str = "other"    # E | L | T | other


def _spec(name: str, kernel: KernelFunction, tc: TimeChange, negate: bool = False) -> MappingSpec:
    return MappingSpec(kernel=kernel, time_change=tc, negate_input=negate, name=name)


@cache
def kexp() -> NamedMapping:
    """I^{t, 1-e^{-t}}_{(0,∞)}."""
    return NamedMapping("kexp", _spec("kexp", KernelFunction.of("identity"),
                                      TimeChange.of("one_minus_exp")), "E")


@cache
def kexp_alt() -> NamedMapping:
    """I^{-log s, s}_{(0,1]}."""
    return NamedMapping("kexp_alt", _spec("kexp_alt", KernelFunction.of("neg_log"),
                                          TimeChange.of("identity", interval=(0.0, 1.0))), "E")


@cache
def lmap() -> NamedMapping:
    """I^{e^{-s}, s}_{(0,∞)}."""
    return NamedMapping("lmap", _spec("lmap", KernelFunction.of("exp_decay"),
                                      TimeChange.of("identity", interval=(0.0, INF))), "L")


@cache
def thorin() -> NamedMapping:
    """I^{w, Γ(0;w)}_{(0,∞)} applied to the reflected law."""
    return NamedMapping("thorin", _spec("thorin", KernelFunction.of("identity"),
                                        TimeChange.of("inc_gamma_tail", alpha=0.0), negate=True), "T")


@cache
def identity_mapping() -> NamedMapping:
    """I^{1, t}_{(0,1]}: leaves every law unchanged."""
    return NamedMapping("identity", _spec("identity", KernelFunction.of("constant", c=1.0),
                                          TimeChange.of("identity", interval=(0.0, 1.0))))


@cache
def power_unit(p: float, name: str = "") -> MappingSpec:
    """I^{t^p, t}_{(0,1]}."""
    return _spec(name or f"power({p:g})", KernelFunction.of("power", p=p),
                 TimeChange.of("identity", interval=(0.0, 1.0)))


def example2_factors(beta: float) -> list[MappingSpec]:
    return [power_unit(1.0 / beta), power_unit(1.0 / (2.0 * beta))]


def example2_single(beta: float) -> MappingSpec:
    """I^{w, 2w^β - w^{2β}}_{(0,1]}."""
    return _spec(f"double_power({beta:g})", KernelFunction.of("identity"),
                 TimeChange.of("double_power", beta=beta))


def example2_third(beta: float) -> MappingSpec:
    """I^{(1-√t)^{1/β}, t}_{(0,1]}."""
    return _spec(f"one_minus_sqrt({beta:g})", KernelFunction.of("one_minus_sqrt_power", beta=beta),
                 TimeChange.of("identity", interval=(0.0, 1.0)))


def example3_factors(beta: float) -> list[MappingSpec]:
    return [power_unit(1.0 / beta), lmap().spec]


def example3_middle(beta: float) -> MappingSpec:
    """I^{e^{-s}, s + β^{-1}e^{-βs} - β^{-1}}_{(0,∞)}."""
    return _spec(f"damped_linear({beta:g})", KernelFunction.of("exp_decay"),
                 TimeChange.of("exp_damped_linear", beta=beta))


def example3_single(beta: float) -> MappingSpec:
    """I^{-w, β^{-1}w^β - log w - β^{-1}}_{(0,1]}."""
    return _spec(f"log_power_tail({beta:g})", KernelFunction.of("negated"),
                 TimeChange.of("log_power_tail", beta=beta))


def example4_factors(alpha: float) -> list[MappingSpec]:
    first = _spec(f"gamma_tail({alpha:g})", KernelFunction.of("identity"),
                  TimeChange.of("inc_gamma_tail", alpha=alpha))
    return [first, lmap().spec]


def example4_single(alpha: float) -> MappingSpec:
    """I^{t, ∫_t^∞ s^{-1}Γ(α;s) ds}_{(0,∞)}."""
    return _spec(f"gamma_tail_integral({alpha:g})", KernelFunction.of("identity"),
                 TimeChange.of("gamma_tail_integral", alpha=alpha))


def named_mapping(name: str, param: float | None = None) -> MappingSpec:
    """Look up a mapping by name; parametrised families take β or α as `param`."""
    simple = {"kexp": kexp, "kexp_alt": kexp_alt, "lmap": lmap, "thorin": thorin,
              "identity": identity_mapping}
    if name in simple:
        return simple[name]().spec
    families: dict[str, Callable[[float], MappingSpec]] = {
        "example2_composed": example2_single,
        "example2_third":    example2_third,
        "example3_power":    lambda b: example3_factors(b)[0],
        "example3_middle":   example3_middle,
        "example3_single":   example3_single,
        "example4_gamma":    lambda a: example4_factors(a)[0],
        "example4_single":   example4_single,
        "power":             power_unit,
    }
    if name not in families:
        raise ConfigError(f"unknown mapping {name!r}", field_path="mappings.named")
    if param is None:
        raise ConfigError(f"mapping {name!r} needs a parameter", field_path="mappings.param")
    return families[name](float(param))


# ══════════════════════════════════════════════════════════════════════════════
#  Identity checks
# ══════════════════════════════════════════════════════════════════════════════

@dataclass
class IdentityCheckResult:
    name:          str
    grid:          np.ndarray
    max_abs_error: float
    tolerance:     float
    forms:         dict[str, np.ndarray] = field(default_factory=dict)
    law:           str = ""
    artifacts:     list[Path] = field(default_factory=list)
    witnesses:     dict[str, LevyExponent] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_error <= self.tolerance)

    def error_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"y": self.grid})
        for (a, va), (b, vb) in combinations(self.forms.items(), 2):
            frame[f"{a}|{b}"] = np.abs(va - vb)
        return frame

    def to_dict(self) -> dict:
        return {
            "identity":      self.name,
            "law":           self.law,
            "grid":          {"min": float(self.grid.min()), "max": float(self.grid.max()),
                              "count": int(self.grid.size)},
            "forms":         list(self.forms),
            "max_abs_error": self.max_abs_error,
            "tolerance":     self.tolerance,
            "passed":        self.passed,
            "artifacts":     [str(p) for p in self.artifacts],
        }

    def __str__(self) -> str:
        status = "✓" if self.passed else "✗"
        return f"{status} {self.name:<28} {self.law:<18} max|Δ|={self.max_abs_error:.3g} (tol {self.tolerance:g})"


def _grid(grid) -> np.ndarray:
    return default_grid() if grid is None else np.asarray(grid, dtype=float)


_EVALUATED = IdentityMemo()


def _values(f: LevyExponent, grid: np.ndarray) -> np.ndarray:
    """f on the grid, reused when the same exponent object meets the same grid again."""
    table = _EVALUATED.get(f)
    if table is None:
        table = _EVALUATED.put((f,), {})
    key = grid.tobytes()
    if key not in table:
        table[key] = f(grid)
    return table[key]


def clear_caches() -> None:
    """Forget mapped exponents and their grid values."""
    clear_memos()
    _EVALUATED.clear()


def _evaluate(name: str, law: str, forms: dict[str, LevyExponent], grid, tol: float,
              out_dir: Path | None) -> IdentityCheckResult:
    grid = _grid(grid)
    values = {k: _values(f, grid) for k, f in forms.items()}
    worst = 0.0
    for (_, va), (_, vb) in combinations(values.items(), 2):
        worst = max(worst, float(np.max(np.abs(va - vb))))
    result = IdentityCheckResult(name=name, grid=grid, max_abs_error=worst, tolerance=tol,
                                 forms=values, law=law)
    if not result.passed:
        logger.warning("identity %s on %s failed: max error %.3g > %g", name, law, worst, tol)
        if out_dir is not None:
            path = Path(out_dir) / f"{name}_{law or 'law'}_errors.csv"
            result.artifacts.append(write_csv(result.error_frame(), path))
    else:
        logger.info("identity %s on %s passed: max error %.3g", name, law, worst)
    return result


def _require_all(specs: list[MappingSpec], e: LevyExponent) -> None:
    for spec in specs:
        require_domain(spec, e)


def check_example1(e: LevyExponent, grid=None, tol: float = SUITE_TOLERANCES["example1"],
                   out_dir: Path | None = None, law: str = "") -> IdentityCheckResult:
    """kexp∘lmap = lmap∘kexp = I^{w,Γ(0;w)} on the reflected law."""
    k, l, t = kexp().spec, lmap().spec, thorin().spec
    _require_all([k, l, t], e)
    forms = {
        "kexp∘lmap": apply(k, apply(l, e, check=False), check=False),
        "lmap∘kexp": apply(l, apply(k, e, check=False), check=False),
        "thorin":    apply(t, e, check=False),
    }
    return _evaluate("example1", law, forms, grid, tol, out_dir)


def check_kexp_alt(e: LevyExponent, grid=None, tol: float = SUITE_TOLERANCES["kexp_alt"],
                   out_dir: Path | None = None, law: str = "") -> IdentityCheckResult:
    forms = {"kexp": apply(kexp().spec, e), "kexp_alt": apply(kexp_alt().spec, e)}
    return _evaluate("kexp_alt", law, forms, grid, tol, out_dir)


def _nested_forms(factors: list[MappingSpec], e: LevyExponent) -> dict[str, LevyExponent]:
    f1, f2 = factors
    return {
        "nested":   apply(f1, apply(f2, e, check=False), check=False),
        "swapped":  apply(f2, apply(f1, e, check=False), check=False),
        "composed": apply(compose(factors), e, check=False),
    }


def check_example2(beta: float, e: LevyExponent, grid=None, tol: float = SUITE_TOLERANCES["example2"],
                   out_dir: Path | None = None, law: str = "") -> IdentityCheckResult:
    factors = example2_factors(beta)
    _require_all(factors, e)
    forms = _nested_forms(factors, e)
    forms["single"] = apply(example2_single(beta), e, check=False)
    forms["third"] = apply(example2_third(beta), e)
    return _evaluate(f"example2(beta={beta:g})", law, forms, grid, tol, out_dir)


def check_example3(beta: float, e: LevyExponent, grid=None, tol: float = SUITE_TOLERANCES["example3"],
                   out_dir: Path | None = None, law: str = "") -> IdentityCheckResult:
    factors = example3_factors(beta)
    _require_all(factors, e)
    forms = _nested_forms(factors, e)
    forms["middle"] = apply(example3_middle(beta), e)
    forms["single"] = apply(example3_single(beta), e)
    return _evaluate(f"example3(beta={beta:g})", law, forms, grid, tol, out_dir)


def check_example4(alpha: float, e: LevyExponent, grid=None, tol: float = SUITE_TOLERANCES["example4"],
                   out_dir: Path | None = None, law: str = "") -> IdentityCheckResult:
    factors = example4_factors(alpha)
    _require_all(factors, e)
    forms = _nested_forms(factors, e)
    forms["single"] = apply(example4_single(alpha), e)
    return _evaluate(f"example4(alpha={alpha:g})", law, forms, grid, tol, out_dir)


def thorin_factorization_witness(e: LevyExponent, grid=None, tol: float = SUITE_TOLERANCES["thorin"],
                                 out_dir: Path | None = None, law: str = "") -> IdentityCheckResult:
    """
    Thorin image realised inside both L and 𝒦^{(e)}:
    thorin(ν) = lmap(kexp(ν)) = kexp(lmap(ν)).

    The intermediate laws kexp(ν), lmap(ν) are returned as witnesses. The
    nested exponents are the ones check_example1 builds, so a suite running
    both evaluates them once.
    """
    k, l, t = kexp().spec, lmap().spec, thorin().spec
    _require_all([k, l, t], e)
    via_kexp = apply(k, e, check=False)
    via_lmap = apply(l, e, check=False)
    forms = {
        "thorin":     apply(t, e, check=False),
        "lmap(kexp)": apply(l, via_kexp, check=False),
        "kexp(lmap)": apply(k, via_lmap, check=False),
    }
    result = _evaluate("thorin_witness", law, forms, grid, tol, out_dir)
    result.witnesses = {"kexp_image": via_kexp, "lmap_image": via_lmap}
    return result


# ══════════════════════════════════════════════════════════════════════════════
#  Suites
# ══════════════════════════════════════════════════════════════════════════════

def catalog_laws() -> dict[str, LevyTriple]:
    """Catalog laws with finite log-moment."""
    return {
        "gaussian":         make_law("gaussian", mean=0.0, variance=1.0),
        "shift":            make_law("shift", c=1.0),
        "gamma":            make_law("gamma", shape=1.0, rate=1.0),
        "compound_poisson": make_law("compound_poisson", atoms=[[1.0, 1.0]]),
        "cp_exponential":   make_law("cp_exponential", rate=1.0, theta=1.0),
        "cauchy":           make_law("stable", alpha=1.0, scale=1.0),
    }


@cache
def catalog_exponent(name: str) -> LevyExponent:
    """Shared exponent of a catalog law, so suites reuse mapped exponents."""
    return exponent_of(catalog_laws()[name])


def _property_result(name: str, law: str, err: float, grid, tol: float) -> IdentityCheckResult:
    return IdentityCheckResult(name=name, grid=_grid(grid), max_abs_error=err, tolerance=tol, law=law)


def _algebra_tasks(grid, tol, out_dir) -> list[Callable[[], IdentityCheckResult]]:
    tasks = []
    g, gam = catalog_exponent("gaussian"), catalog_exponent("gamma")
    for mapping in (kexp(), lmap()):
        spec = mapping.spec
        tasks.append(lambda spec=spec, m=mapping.name: _property_result(
            f"homomorphism[{m}]", "gaussian+gamma", verify_homomorphism(spec, g, gam, grid), grid, tol))
        for law_name in ("gaussian", "gamma"):
            e = catalog_exponent(law_name)
            for s in (0.5, 2.0, 3.0):
                tasks.append(lambda spec=spec, e=e, s=s, m=mapping.name, ln=law_name: _property_result(
                    f"conv_power[{m}](s={s:g})", ln, verify_conv_power(spec, e, s, grid), grid, tol))
            for u in (-1.0, 0.5, 2.0):
                tasks.append(lambda spec=spec, e=e, u=u, m=mapping.name, ln=law_name: _property_result(
                    f"dilation[{m}](u={u:g})", ln, verify_dilation(spec, e, u, grid), grid, tol))
    return tasks


def _law_tasks(check, law_names, params=(None,)):
    def build(grid, tol, out_dir):
        tasks = []
        for p in params:
            for ln in law_names:
                e = catalog_exponent(ln)
                if p is None:
                    tasks.append(lambda e=e, ln=ln: check(e, grid, tol, out_dir, ln))
                else:
                    tasks.append(lambda e=e, ln=ln, p=p: check(p, e, grid, tol, out_dir, ln))
        return tasks
    return build


SUITES: dict[str, Callable] = {
    "example1": _law_tasks(check_example1, ("gaussian", "gamma", "compound_poisson")),
    "kexp_alt": _law_tasks(check_kexp_alt, ("gaussian", "shift", "compound_poisson")),
    "example2": _law_tasks(check_example2, ("gaussian", "compound_poisson"), SUITE_BETAS),
    "example3": _law_tasks(check_example3, ("gaussian", "gamma"), SUITE_BETAS),
    "example4": _law_tasks(check_example4, ("gaussian", "gamma"), SUITE_ALPHAS),
    "thorin":   _law_tasks(thorin_factorization_witness, tuple(catalog_laws())),
    "algebra":  _algebra_tasks,
}


def run_suite(name: str, grid=None, tol: float | None = None, out_dir: Path | None = None,
              threads: int = THREADS) -> list[IdentityCheckResult]:
    """
    Run one suite (or 'all'); results are returned in task order.

    Each suite is held to its own entry in SUITE_TOLERANCES unless `tol`
    overrides them all.
    """
    names = list(SUITES) if name == "all" else [name]
    for n in names:
        if n not in SUITES:
            raise ConfigError(f"unknown suite {n!r}; choose from {['all', *SUITES]}", field_path="suite")
    tasks = [task for n in names
             for task in SUITES[n](grid, SUITE_TOLERANCES[n] if tol is None else tol, out_dir)]
    logger.info("running suite %s: %d checks on %d thread(s)", name, len(tasks), threads)
    if threads <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda task: task(), tasks))


# ══════════════════════════════════════════════════════════════════════════════
#  CLI test
# ══════════════════════════════════════════════════════════════════════════════

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)-8s %(message)s",
                        datefmt="%H:%M:%S")
    for res in run_suite("example1", grid=np.linspace(-10, 10, 41)):
        print(res)
