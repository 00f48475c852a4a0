"""Deterministic output: versioned CSV tables, JSON documents and run manifests."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

CSV_VERSION = "v1"
SIG_DIGITS = 12


def fmt(x) -> str:
    """Fixed 12-significant-digit formatting; blanks for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.{SIG_DIGITS}g}"
    return str(x)


def csv_text(kind: str, columns, rows) -> str:
    """CSV payload with a ``# nlsgraph <kind>-csv v1`` version line."""
    lines = [f"# nlsgraph {kind}-csv {CSV_VERSION}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def write_csv(path, kind: str, columns, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(kind, columns, rows))
    return path


def read_csv(path):
    """Parse a table written by ``write_csv``: returns ``(kind, columns, rows of strings)``."""
    lines = Path(path).read_text().splitlines()
    tag = lines[0].split()
    if len(tag) != 4 or tag[:2] != ["#", "nlsgraph"] or not tag[2].endswith("-csv"):
        raise ValueError("not an nlsgraph CSV table")
    if tag[3] != CSV_VERSION:
        raise ValueError(f"unsupported CSV version {tag[3]!r}")
    columns = lines[1].split(",")
    rows = [dict(zip(columns, line.split(","))) for line in lines[2:] if line]
    return tag[2][: -len("-csv")], columns, rows


SWEEP_COLUMNS = (
    "mu", "energy", "multiplier", "derivative", "derivative_residual", "second_difference",
    "kirchhoff_residual", "el_residual", "mech_variation", "halfline_constant", "converged", "n_clusters",
)


def sweep_rows(records) -> list:
    rows = []
    for r in records:
        row = {k: getattr(r, k) for k in ("mu", "energy", "multiplier", "derivative", "derivative_residual",
                                          "second_difference", "converged", "n_clusters")}
        row.update({k: r.diagnostics.get(k) for k in ("kirchhoff_residual", "el_residual", "mech_variation", "halfline_constant")})
        rows.append(row)
    return rows


UNIQ_COLUMNS = ("run", "energy", "multiplier", "cluster_id")
EDGE_COLUMNS = ("edge", "x", "u")


def edge_rows(result) -> list:
    g = result.graph
    rows = []
    for i, e in enumerate(g.edges):
        for x, y in zip(e.coords(), result.u.edge_values(i)):
            rows.append({"edge": e.label or str(i), "x": float(x), "u": float(y)})
    return rows


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if x is None or isinstance(x, (bool, int, str)):
        return x
    if hasattr(x, "to_dict"):
        return _jsonable(x.to_dict())
    return repr(x)


def json_text(doc) -> str:
    """Canonical JSON: sorted keys, non-finite floats as null."""
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_json(path, doc) -> Path:
    path = Path(path)
    path.write_text(json_text(doc))
    return path


def load_schema(name: str) -> dict:
    text = resources.files("nlsgraph").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc, name: str):
    """Validate ``doc`` (after JSON normalization) against a bundled schema."""
    jsonschema.validate(json.loads(json_text(doc)), load_schema(name))


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str
    graph: dict | None = None
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def start(self):
        self.timestamps["start"] = _now()

    def finish(self):
        self.timestamps["end"] = _now()

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> Path:
        doc = self.to_dict()
        validate(doc, "manifest")
        return write_json(path, doc)

    @classmethod
    def load(cls, path) -> "RunManifest":
        doc = json.loads(Path(path).read_text())
        validate(doc, "manifest")
        return cls(**doc)


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
