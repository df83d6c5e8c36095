"""Report assembly, schema validation, fingerprints and JSON/CSV output."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any

import jsonschema

SCHEMA_VERSION = "treefpp/1"

REPORT_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "tool_version", "command", "config", "status", "results", "fingerprint"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "tool_version": {"type": "string"},
        "command": {"type": "string"},
        "config": {"type": "object"},
        "group": {
            "type": ["object", "null"],
            "required": ["key", "degree", "kind"],
            "properties": {
                "key": {"type": "string"},
                "degree": {"type": "integer", "minimum": 2},
                "kind": {"enum": ["presentation", "finite_type"]},
                "text": {"type": "string"},
                "facts": {"type": "object"},
            },
        },
        "status": {"enum": ["ok", "inconclusive", "error"]},
        "results": {"type": ["object", "null"]},
        "error": {
            "type": ["object", "null"],
            "required": ["type", "message"],
            "properties": {"type": {"type": "string"}, "message": {"type": "string"}},
        },
        "timing": {"type": "object"},
        "fingerprint": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
    },
}

CSV_COLUMNS = ["level", "exact_num", "exact_den", "mc_estimate", "mc_stderr", "samples",
               "quotient_order", "provenance", "lower", "upper"]


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def fingerprint(payload: dict) -> str:
    """SHA-256 of the canonical JSON of the deterministic part of a report."""
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def build_report(command: str, config: dict, group: dict | None, results: dict | None,
                 status: str, error: dict | None, seconds: float, version: str) -> dict:
    payload = {"command": command, "group": group, "results": results, "status": status, "error": error}
    return {
        "schema": SCHEMA_VERSION,
        "tool_version": version,
        "command": command,
        "config": config,
        "group": group,
        "status": status,
        "results": results,
        "error": error,
        "timing": {"seconds": round(seconds, 6)},
        "fingerprint": fingerprint(payload),
    }


def validate_report(report: dict) -> None:
    jsonschema.validate(report, REPORT_SCHEMA)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def series_csv(series: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for e in series["entries"]:
        num = den = ""
        if e["exact"] is not None:
            num, _, den = e["exact"].partition("/")
            den = den or "1"
        mc = e["mc"] or {}
        writer.writerow([
            e["level"], num, den,
            "" if not mc else repr(mc["estimate"]),
            "" if not mc else repr(mc["stderr"]),
            mc.get("samples", ""),
            "" if e["quotient_order"] is None else e["quotient_order"],
            e["provenance"],
            "" if e["lower"] is None else _decimal(e["lower"]),
            "" if e["upper"] is None else _decimal(e["upper"]),
        ])
    return buf.getvalue()


def _decimal(text: str) -> str:
    num, _, den = text.partition("/")
    return repr(int(num) / int(den or 1))


def write_report(report: dict, json_path: str | Path | None = None,
                 csv_path: str | Path | None = None) -> list[Path]:
    """Write the JSON report and, for FPP runs, the series CSV."""
    validate_report(report)
    written = []
    if json_path is not None:
        Path(json_path).write_text(report_json(report))
        written.append(Path(json_path))
    if csv_path is not None:
        results = report.get("results") or {}
        if "series" not in results:
            raise ValueError("CSV output is only available for fpp reports")
        Path(csv_path).write_text(series_csv(results["series"]))
        written.append(Path(csv_path))
    return written


def read_report(path: str | Path) -> dict:
    """Load and validate a report; unknown fields are kept and ignored."""
    report = json.loads(Path(path).read_text())
    validate_report(report)
    return report
