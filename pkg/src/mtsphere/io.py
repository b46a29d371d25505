"""Serialization: field JSON records, node-value CSV dumps, report writers.

All CSV output uses a fixed %.12e float format and LF newlines so that
identical seed + config produces byte-identical files.  JSON reports carry a
schema_version field.
"""

from __future__ import annotations

import json
import os
import pathlib

import numpy as np

from .errors import ConfigurationError
from .geometry import PotentialField, SphereGrid, build_grid

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "MTSPHERE_OUT"

_FLOAT_FMT = "%.12e"


def resolve_out_dir(path) -> pathlib.Path:
    """Apply the environment override and create the directory."""
    override = os.environ.get(OUTPUT_DIR_ENV)
    out = pathlib.Path(override) if override else pathlib.Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def field_to_json(phi: PotentialField) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "N": phi.grid.n_nodes,
        "L": phi.grid.max_degree,
        "parity": phi.parity,
        "coefficients": [float(c) for c in phi.coeffs],
    }


def save_field(phi: PotentialField, path) -> None:
    pathlib.Path(path).write_text(json.dumps(field_to_json(phi), indent=1) + "\n")


def load_field(path, grid: SphereGrid | None = None) -> PotentialField:
    data = json.loads(pathlib.Path(path).read_text())
    if "coefficients" not in data:
        raise ConfigurationError(f"{path} is not a field record")
    if grid is None:
        grid = build_grid(int(data["N"]))
    coeffs = np.asarray(data["coefficients"], dtype=float)
    if coeffs.size > grid.max_degree + 1:
        raise ConfigurationError(
            f"field degree {coeffs.size - 1} exceeds grid degree {grid.max_degree}"
        )
    return PotentialField.from_coeffs(grid, coeffs, data.get("parity"))


def save_field_nodes_csv(phi: PotentialField, path) -> None:
    rows = [(float(m), float(v)) for m, v in zip(phi.grid.mu, phi.values)]
    write_csv(path, ("mu", "value"), rows)


def _fmt(x) -> str:
    if isinstance(x, float):
        return _FLOAT_FMT % x
    if isinstance(x, (np.floating,)):
        return _FLOAT_FMT % float(x)
    return str(x)


def write_csv(path, header, rows) -> pathlib.Path:
    path = pathlib.Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json_report(path, payload: dict) -> pathlib.Path:
    path = pathlib.Path(path)
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")
