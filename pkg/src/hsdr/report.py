"""Evaluation reports: long-format metric rows, JSON / CSV emission and parsing."""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, HsdrIOError, InvalidInput

SCHEMA_VERSION = 1
ROW_FIELDS = ("method", "detector", "r", "n_pixels", "component", "component2", "trial",
              "metric", "value")
_INT_FIELDS = ("r", "n_pixels", "component", "component2", "trial")
_STR_FIELDS = ("method", "detector", "metric")


def make_row(method, metric, value, **keys):
    """One metric observation; unspecified key columns are None."""
    row = dict.fromkeys(ROW_FIELDS)
    unknown = set(keys) - set(ROW_FIELDS)
    if unknown:
        raise InvalidInput(f"unknown row fields {sorted(unknown)}")
    row.update(keys)
    row["method"] = method
    row["metric"] = metric
    row["value"] = float(value)
    for k in _INT_FIELDS:
        if row[k] is not None:
            row[k] = int(row[k])
    return row


@dataclass
class EvalReport:
    command: str
    config: dict
    rows: list = field(default_factory=list)
    timestamps: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def add(self, method, metric, value, **keys):
        self.rows.append(make_row(method, metric, value, **keys))

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "config": self.config,
            "rows": [dict(r) for r in self.rows],
            "timestamps": dict(self.timestamps),
        }

    def select(self, **where):
        return [r for r in self.rows if all(r.get(k) == v for k, v in where.items())]


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def to_json(report):
    d = report.to_dict()
    d["rows"] = [{k: _json_value(v) for k, v in r.items()} for r in d["rows"]]
    return json.dumps(d, indent=2, sort_keys=False)


def to_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in report.rows:
        w.writerow(["" if r[k] is None else (repr(r[k]) if k == "value" else r[k])
                    for k in ROW_FIELDS])
    return buf.getvalue()


def emit_report(report, fmt, path):
    """Write ``report`` as ``json`` or ``csv`` to ``path``."""
    if fmt == "json":
        text = to_json(report)
    elif fmt == "csv":
        text = to_csv(report)
    else:
        raise InvalidInput(f"unknown report format {fmt!r}")
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc


def _typed(row):
    out = {}
    for k in ROW_FIELDS:
        v = row.get(k)
        if v == "" or v is None:
            out[k] = None
        elif k in _INT_FIELDS:
            out[k] = int(v)
        elif k == "value":
            out[k] = float(v)
        else:
            out[k] = str(v)
    return out


def parse_csv_rows(text):
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != ROW_FIELDS:
        raise FormatError(f"unexpected CSV header {reader.fieldnames}", offset=0)
    return [_typed(r) for r in reader]


def parse_json_report(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON report: {exc.msg}", offset=exc.pos) from None
    if d.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported report schema {d.get('schema_version')!r}", offset=0)
    rep = EvalReport(d["command"], d["config"], timestamps=d.get("timestamps", {}))
    rep.rows = [_typed(r) for r in d["rows"]]
    return rep


def load_report(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc
    if str(path).endswith(".csv"):
        rep = EvalReport("unknown", {})
        rep.rows = parse_csv_rows(text)
        return rep
    return parse_json_report(text)
