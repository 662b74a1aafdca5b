"""
cli_app.py — Command-line entry point
=======================================
Responsibilities:
  • exponent  — evaluate Φ of a law (optionally through a chain of mappings)
  • compose   — reduce a list of mappings to one and tabulate its time change
  • verify    — run identity suites from mapping_catalog
  • simulate  — Monte Carlo sample of a mapped law plus ECF report

Design choices:
  • Every command reads a JSON RunConfig; flags override file values
  • Artifacts go to --out (default LEVYMAP_OUT_DIR) via atomic writes
  • The process exit code is the LevymapError.exit_code of any failure,
    1 for failed checks or unexpected errors, 0 otherwise

Usage:
    python cli_app.py exponent --config runs/gauss_lmap.json
    python cli_app.py verify --suite example1 --grid -10:10:201
    python cli_app.py simulate --config runs/kexp_drift.json --paths 20000 --seed 7
"""

import argparse
import logging
import math
import sys
from pathlib import Path

from artifacts import exponent_frame, write_csv, write_json
from config import LOG_FILE, LOG_FORMAT, LOG_LEVEL, THREADS
from errors import ConfigError, LevymapError
from integral_map import MappingSpec, apply, compose
from levy_core import LevyExponent, exponent_of
from mapping_catalog import run_suite
from measure_alg import tabulate
from path_sim import ecf_compare, make_grid, refine_study, simulate_integral
from run_config import RunConfig, build_law, build_mappings, load_config

logger = logging.getLogger(__name__)

_TABLE_POINTS = 200


# ══════════════════════════════════════════════════════════════════════════════
#  Helpers
# ══════════════════════════════════════════════════════════════════════════════

def _mapped_exponent(cfg: RunConfig, specs: list[MappingSpec]) -> LevyExponent:
    """Φ of the configured law with mappings applied in list order."""
    e = exponent_of(build_law(cfg), method=cfg.method)
    for spec in specs:
        e = apply(spec, e)
    return e


def _single_mapping(cfg: RunConfig) -> MappingSpec:
    specs = build_mappings(cfg)
    if not specs:
        raise ConfigError("at least one mapping is required", field_path="mappings")
    return compose(specs, closed_form=cfg.closed_form)


def _table_range(spec: MappingSpec) -> tuple[float, float]:
    lo, hi = spec.interval
    if lo <= 0:
        lo = 1e-3
    if not math.isfinite(hi):
        hi = max(lo * 10.0, 20.0)
    return lo, hi


# ══════════════════════════════════════════════════════════════════════════════
#  Commands
# ══════════════════════════════════════════════════════════════════════════════

def cmd_exponent(cfg: RunConfig) -> int:
    y = cfg.grid.array()
    specs = build_mappings(cfg)
    e = _mapped_exponent(cfg, specs)
    values = e(y)
    out = Path(cfg.out_dir)
    csv_path = write_csv(exponent_frame(y, values), out / "exponent.csv")
    write_json({
        "command":    "exponent",
        "law":        cfg.law.model_dump(mode="json"),
        "mappings":   [s.describe() for s in specs],
        "method":     cfg.method,
        "provenance": repr(e.provenance),
        "artifacts":  [str(csv_path)],
    }, out / "exponent.json")
    print(f"✓ exponent on {y.size} points → {csv_path}")
    return 0


def cmd_compose(cfg: RunConfig) -> int:
    spec = _single_mapping(cfg)
    rho = spec.time_change.measure()
    lo, hi = _table_range(spec)
    out = Path(cfg.out_dir)
    artifacts = [write_csv(tabulate(rho, lo, hi, _TABLE_POINTS), out / "compose_measure.csv")]
    if cfg.law is not None:
        y = cfg.grid.array()
        e = apply(spec, exponent_of(build_law(cfg), method=cfg.method))
        artifacts.append(write_csv(exponent_frame(y, e(y)), out / "compose_exponent.csv"))
    write_json({
        "command":   "compose",
        "composed":  spec.describe(),
        "artifacts": [str(p) for p in artifacts],
    }, out / "compose.json")
    print(f"✓ composed {spec.label} → time change {spec.time_change.form} ({spec.time_change.direction})")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    results = run_suite(cfg.suite, grid=cfg.grid.array(), tol=cfg.tolerance, out_dir=out,
                        threads=cfg.simulation.threads or THREADS)
    failed = [r for r in results if not r.passed]
    write_json({
        "command": "verify",
        "suite":   cfg.suite,
        "passed":  not failed,
        "checks":  [r.to_dict() for r in results],
    }, out / "verify.json")
    for r in results:
        print(r)
    print(f"{len(results) - len(failed)}/{len(results)} identities hold")
    return 1 if failed else 0


def cmd_simulate(cfg: RunConfig) -> int:
    spec = _single_mapping(cfg)
    law = build_law(cfg)
    sim_cfg = cfg.simulation
    threads = sim_cfg.threads or THREADS
    y = cfg.grid.array()
    grid = make_grid(spec, sim_cfg.level, truncation=sim_cfg.truncation)
    sim = simulate_integral(spec, law, grid, cfg.n_paths, cfg.seed, y=y, band=sim_cfg.band,
                            threads=threads)
    target = apply(spec, exponent_of(law, method=cfg.method), check=False)
    report = ecf_compare(sim, target)

    out = Path(cfg.out_dir)
    artifacts = [
        write_csv(sim.samples_frame(), out / "samples.csv"),
        write_csv(report.to_frame().assign(ecf_re=sim.ecf.real, ecf_im=sim.ecf.imag), out / "ecf.csv"),
    ]
    payload = {"command": "simulate", **sim.to_dict(), "ecf": report.to_dict()}
    if sim_cfg.levels:
        study = refine_study(spec, law, sim_cfg.levels, cfg.n_paths, cfg.seed, y=y, threads=threads)
        artifacts.append(write_csv(study.table, out / "refine.csv"))
        payload["refine"] = {"monotone": study.monotone}
    payload["artifacts"] = [str(p) for p in artifacts]
    write_json(payload, out / "simulate.json")
    print(sim)
    print(report)
    return 0 if report.passed else 1


COMMANDS = {
    "exponent": cmd_exponent,
    "compose":  cmd_compose,
    "verify":   cmd_verify,
    "simulate": cmd_simulate,
}


# ══════════════════════════════════════════════════════════════════════════════
#  Entry point
# ══════════════════════════════════════════════════════════════════════════════

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levymap",
                                     description="Random integral mappings of infinitely divisible laws")
    parser.add_argument("command", choices=sorted(COMMANDS), help="What to run")
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--out",    type=Path, help="Artifact directory")
    parser.add_argument("--seed",   type=int,  help="Monte Carlo seed")
    parser.add_argument("--tol",    type=float, help="Identity tolerance for every suite (default: per suite)")
    parser.add_argument("--grid",   help="y-grid as MIN:MAX:COUNT")
    parser.add_argument("--paths",  type=int,  help="Number of Monte Carlo paths")
    parser.add_argument("--suite",  help="Identity suite for 'verify' (or 'all')")
    return parser


def setup_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(LOG_FILE, encoding="utf-8", delay=True),
        ],
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        cfg = load_config(args.config, out_dir=args.out, seed=args.seed, tolerance=args.tol,
                          grid=args.grid, n_paths=args.paths, suite=args.suite)
        return COMMANDS[args.command](cfg)
    except LevymapError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"✗ {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception:
        logger.exception("%s crashed", args.command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
