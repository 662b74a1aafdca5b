"""
artifacts.py — CSV / JSON artifact writers
============================================
All artifacts are written to a temporary sibling first and renamed into
place, so a reader never sees a half-written file.
"""

import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from config import CSV_FLOAT_FMT, SCHEMA_VERSION

logger = logging.getLogger(__name__)


def _atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.debug("artifact written: %s", path)
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """Header row, '.' decimal, 17 significant digits."""
    return _atomic_write(path, frame.to_csv(index=False, float_format=CSV_FLOAT_FMT, lineterminator="\n"))


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return str(obj)


def write_json(payload: dict, path: Path) -> Path:
    """JSON report with schema version and generation timestamp."""
    body = {
        "schema_version": SCHEMA_VERSION,
        "generated_at":   datetime.now(tz=timezone.utc).isoformat(),
        **payload,
    }
    return _atomic_write(path, json.dumps(body, indent=2, default=_default, allow_nan=True) + "\n")


def exponent_frame(y: np.ndarray, values: np.ndarray) -> pd.DataFrame:
    values = np.asarray(values, dtype=complex)
    return pd.DataFrame({"y": np.asarray(y, dtype=float), "re": values.real, "im": values.imag})
