"""File formats used by the command line tool.

Numbers are written with 17 significant digits so that every float
round-trips exactly; scalar results printed for people use 12.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .generators import GENERATOR_KEYS, generator_from_config  # noqa: F401  (re-exported)
from .transport import DiscreteDistribution

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on older interpreters
    import tomli as tomllib

WEIGHT_SLACK = 1e-3


def fmt(x) -> str:
    """Round-trip representation with 17 significant digits."""
    return format(float(x), ".17g")


def fmt_short(x) -> str:
    """Human-facing scalar with 12 significant digits."""
    return format(float(x), ".12g")


def _text(path) -> str:
    if str(path) == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _numeric_rows(text: str):
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f for f in line.replace(",", " ").split()]
        rows.append(fields)
    return rows


def _floats(fields, where):
    try:
        return [float(f) for f in fields]
    except ValueError:
        raise ValueError(f"non-numeric entry in {where}: {fields}") from None


def read_vector(path) -> np.ndarray:
    """Numbers separated by commas, whitespace or newlines."""
    rows = _numeric_rows(_text(path))
    values = _floats([f for row in rows for f in row], path)
    if not values:
        raise ValueError(f"{path}: empty vector")
    return np.array(values)


def read_matrix(path) -> np.ndarray:
    """Rectangular table of numbers; a non-numeric first row is a header."""
    rows = _numeric_rows(_text(path))
    if rows:
        try:
            _floats(rows[0], path)
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: rows have different lengths")
    return np.array([_floats(r, path) for r in rows])


def parse_distribution(text: str, where: str = "<input>") -> DiscreteDistribution:
    """CSV with header ``w,x1,...,xd`` and one atom per row.

    Weights summing to within ``1e-3`` of one are renormalized; anything
    further off is rejected.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [[f.strip() for f in row] for row in reader if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise ValueError(f"{where}: empty distribution file")
    header, body = rows[0], rows[1:]
    if not header or header[0].lower() != "w" or len(header) < 2:
        raise ValueError(f"{where}: header must read w,x1,...,xd")
    if not body:
        raise ValueError(f"{where}: no atoms")
    if any(len(r) != len(header) for r in body):
        raise ValueError(f"{where}: every row needs {len(header)} fields")
    table = np.array([_floats(r, where) for r in body])
    weights, atoms = table[:, 0], table[:, 1:]
    total = weights.sum()
    if not abs(total - 1.0) <= WEIGHT_SLACK:
        raise ValueError(f"{where}: weights sum to {total!r}, outside [0.999, 1.001]")
    return DiscreteDistribution(atoms, weights / total)


def read_distribution(path) -> DiscreteDistribution:
    return parse_distribution(_text(path), str(path))


def format_distribution(dist: DiscreteDistribution) -> str:
    header = ["w"] + [f"x{i + 1}" for i in range(dist.dimension)]
    lines = [",".join(header)]
    for w, atom in zip(dist.weights, dist.atoms):
        lines.append(",".join([fmt(w)] + [fmt(v) for v in atom]))
    return "\n".join(lines) + "\n"


def format_csv(header, rows) -> str:
    """CSV text; floats get 17 significant digits, other values ``str``."""
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(out) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        # repr of a float round-trips exactly; non-finite values become strings
        return value if math.isfinite(value) else str(value)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def load_config(path) -> dict:
    """TOML (``.toml``) or JSON generator configuration."""
    text = _text(path)
    if str(path).endswith(".toml"):
        cfg = tomllib.loads(text)
    else:
        cfg = json.loads(text)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: configuration must be a table/object")
    unknown = set(cfg) - GENERATOR_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    return cfg
