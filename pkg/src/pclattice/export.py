"""CSV and JSON manifest writers.

Floats are written in shortest round-trip form (``repr``), so reading a CSV
back with ``float`` recovers every value bit for bit and repeated runs give
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .lattice import Trajectory


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(value)


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(h) for h in header]
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def trajectory_header(trajectory: Trajectory) -> list[str]:
    return ["t"] + [f"v_{int(j)}" for j in trajectory.layers]


def write_trajectory(path, trajectory: Trajectory) -> Path:
    rows = ([t, *snap] for t, snap in zip(trajectory.times, trajectory.states))
    return write_csv(path, trajectory_header(trajectory), rows)


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else format_value(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    timings: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add_output(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = sha256(path)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "version": self.version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "timings": self.timings,
            "outputs": {name: {"sha256": digest} for name, digest in sorted(self.outputs.items())},
            "extra": self.extra,
        }

    def write(self, path) -> Path:
        return write_json(path, self.as_dict())


def verify_manifest(path) -> dict[str, bool]:
    """Recompute every checksum listed in a manifest; keys are output file names."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    return {name: sha256(path.parent / name) == entry["sha256"] for name, entry in data["outputs"].items()}
