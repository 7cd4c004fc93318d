"""Machine-readable suite reports (JSON, flat CSV)."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math

from . import __version__
from .testing import SuiteResult

SCHEMA_FILE = "report.schema.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_json(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def build_report(result: SuiteResult, inputs: dict, seed: int, mode: str,
                 counterfactual: bool, wall_time: float | None = None) -> dict:
    """``inputs`` maps an input name (dag, scenario, data) to a dict with at
    least a ``sha256`` digest. Wall time is only recorded when given, so that
    reruns produce byte-identical reports by default."""
    report = {
        "tool": "causaltest",
        "version": __version__,
        "inputs": inputs,
        "seeds": {"suite": seed},
        "mode": mode,
        "counterfactual": counterfactual,
        "summary": result.summary,
        "results": [r.to_dict() for r in result.results],
    }
    if result.rows_total is not None:
        report["rows"] = {"total": result.rows_total, "filtered": result.rows_filtered}
    if wall_time is not None:
        report["wall_time_s"] = wall_time
    return _clean(report)


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


CSV_FIELDS = ["name", "verdict", "mode", "metric", "treatment", "control_value", "treatment_value",
              "outcome", "point", "ci_low", "ci_high", "adjustment_set", "n_used", "stratum", "error"]


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in report["results"]:
        est = r["estimate"] or {}
        row = {"name": r["name"], "verdict": r["verdict"], "mode": r["mode"], "error": r["error"] or ""}
        for k in CSV_FIELDS:
            if k in est:
                v = est[k]
                row[k] = " ".join(v) if isinstance(v, list) else ("" if v is None else v)
        w.writerow(row)
    return buf.getvalue()


def load_schema() -> dict:
    from importlib import resources
    text = resources.files("causaltest").joinpath("fixtures", SCHEMA_FILE).read_text("utf-8")
    return json.loads(text)
