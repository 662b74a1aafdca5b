"""
config.py — Centralized configuration for levymap
Loads from environment variables with sensible defaults.
"""

import os
from pathlib import Path

# ─── Base Paths ───────────────────────────────────────────────────────────────
BASE_DIR   = Path(__file__).parent
LOGS_DIR   = BASE_DIR / "logs"
OUTPUT_DIR = Path(os.getenv("LEVYMAP_OUT_DIR", str(BASE_DIR / "output")))

LOGS_DIR.mkdir(exist_ok=True)

# ─── Quadrature ───────────────────────────────────────────────────────────────
TOL_QUAD      = float(os.getenv("LEVYMAP_TOL_QUAD",  "1e-10"))   # abs, exponent values
TOL_DIV       = float(os.getenv("LEVYMAP_TOL_DIV",   "1e-8"))    # divergence shells
QUAD_MAXLEVEL = int(os.getenv("LEVYMAP_QUAD_MAXLEVEL", "10"))
QUAD_MAX_CELLS = int(os.getenv("LEVYMAP_QUAD_MAX_CELLS", "256"))  # unit cells on (a, ∞)

# Domain checks: y-values of the truncation shells
PROBE_Y = (0.1, 1.0, 10.0)

# ─── Evaluation grid ─────────────────────────────────────────────────────────
DEFAULT_GRID = os.getenv("LEVYMAP_GRID", "-10:10:201")


def parse_grid(text: str) -> tuple[float, float, int]:
    """Parse 'MIN:MAX:COUNT' into a (min, max, count) tuple."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must look like MIN:MAX:COUNT, got {text!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1 or hi < lo:
        raise ValueError(f"grid {text!r} is empty")
    return lo, hi, count


GRID_MIN, GRID_MAX, GRID_COUNT = parse_grid(DEFAULT_GRID)

# ─── Identity suite ──────────────────────────────────────────────────────────
# max pairwise |ΔΦ| on the grid, per suite; --tol overrides all of them
SUITE_TOLERANCES = {
    "example1": 1e-6,
    "kexp_alt": 1e-8,
    "example2": 1e-8,
    "example3": 1e-6,
    "example4": 1e-6,
    "thorin":   1e-6,
    "algebra":  1e-8,
}
SUITE_BETAS    = (0.5, 1.0, 2.0)
SUITE_ALPHAS   = (0.5, 1.0, 2.0)

# ─── Monte Carlo ─────────────────────────────────────────────────────────────
DEFAULT_SEED     = int(os.getenv("LEVYMAP_SEED", "20140501"))
DEFAULT_PATHS    = int(os.getenv("LEVYMAP_PATHS", "200000"))
BASE_NODES       = int(os.getenv("LEVYMAP_BASE_NODES", str(2 ** 12)))
TRUNCATION_TOL   = float(os.getenv("LEVYMAP_TRUNCATION_TOL", "1e-6"))
PATH_BLOCK       = 256            # paths per seeded block; fixed for reproducibility
NODE_SEGMENT     = 4096           # grid cells drawn per RNG call
BAND_Z_QUANTILE  = 0.995
ECF_COVERAGE     = 0.95           # share of grid points required inside the band

THREADS = max(1, int(os.getenv("LEVYMAP_THREADS", str(os.cpu_count() or 1))))

# ─── Logging ─────────────────────────────────────────────────────────────────
LOG_LEVEL  = os.getenv("LEVYMAP_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s  %(message)s"
LOG_FILE   = LOGS_DIR / "levymap.log"

# ─── Artifacts ───────────────────────────────────────────────────────────────
SCHEMA_VERSION = 1
CSV_FLOAT_FMT  = "%.17g"
