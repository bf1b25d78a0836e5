"""Reading and writing DFP tables and scan results.

Tables are long-format records ``fiducial,outcome,probability`` in CSV or
JSON. Results are written atomically (temp file in the target directory,
then rename) with the resolved run configuration embedded in the file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .base import DfpError
from .fisher import DfpTable
from .qubit import FIDUCIAL_LABELS

TABLE_COLUMNS = ("fiducial", "outcome", "probability")


def _is_json(path):
    return Path(path).suffix.lower() == ".json"


def _records_from_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or tuple(f.strip() for f in reader.fieldnames) != TABLE_COLUMNS:
        raise DfpError(f"table header must be {','.join(TABLE_COLUMNS)}, got {reader.fieldnames}")
    return [{k.strip(): (v or "").strip() for k, v in row.items()} for row in reader]


def _records_from_json(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DfpError(f"malformed JSON table: {exc}") from None
    if isinstance(data, dict) and "columns" in data:
        # result-file layout written by write_table
        cols = data["columns"]
        if cols != list(TABLE_COLUMNS):
            raise DfpError(f"table columns must be {list(TABLE_COLUMNS)}, got {cols}")
        data = [dict(zip(cols, row)) for row in data.get("rows", [])]
    elif isinstance(data, dict):
        data = data.get("records")
    if not isinstance(data, list):
        raise DfpError("JSON table must be a list of records or an object with a 'records' list")
    return data


def table_from_records(records, atol=1e-6):
    """Assemble a :class:`DfpTable` from ``{fiducial, outcome, probability}`` records.

    Outcomes keep their order of first appearance. Negative readings are
    clamped and rows renormalised; a ``UserWarning`` is issued for rows whose
    raw sum misses 1 by more than ``atol``. Raw values stay in ``table.raw``.
    """
    values = {}
    outcomes = []
    for i, rec in enumerate(records):
        try:
            fid, out, prob = str(rec["fiducial"]), str(rec["outcome"]), rec["probability"]
            prob = float(prob)
        except (KeyError, TypeError, ValueError):
            raise DfpError(f"record {i} is malformed: {rec!r}") from None
        if fid not in FIDUCIAL_LABELS:
            raise DfpError(f"record {i}: unknown fiducial {fid!r}")
        if not math.isfinite(prob):
            raise DfpError(f"record {i}: probability is not finite")
        if (fid, out) in values:
            raise DfpError(f"duplicate entry for fiducial {fid}, outcome {out}")
        values[(fid, out)] = prob
        if out not in outcomes:
            outcomes.append(out)
    missing = [(f, o) for f in FIDUCIAL_LABELS for o in outcomes if (f, o) not in values]
    if missing:
        raise DfpError(f"table is missing entries {missing[:4]}{'...' if len(missing) > 4 else ''}")
    raw = np.array([[values[(f, o)] for o in outcomes] for f in FIDUCIAL_LABELS])
    table = DfpTable.from_raw(raw, outcomes=tuple(outcomes), fiducials=FIDUCIAL_LABELS, atol=atol)
    bad = np.abs(table.residuals) > atol
    if np.any(bad):
        rows = [FIDUCIAL_LABELS[i] for i in np.flatnonzero(bad)]
        warnings.warn(f"rows {rows} renormalised; raw sums deviate from 1 by more than {atol}", UserWarning)
    return table


def read_table(path, atol=1e-6):
    """Load a DFP table from CSV or JSON (chosen by extension)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DfpError(f"cannot read table {path}: {exc.strerror}") from None
    records = _records_from_json(text) if _is_json(path) else _records_from_csv(text)
    if not records:
        raise DfpError(f"table {path} has no records")
    return table_from_records(records, atol)


def table_records(table):
    return [
        {"fiducial": f, "outcome": o, "probability": float(table.q[i, j])}
        for i, f in enumerate(table.fiducials)
        for j, o in enumerate(table.outcomes)
    ]


def write_table(path, table, config=None):
    records = table_records(table)
    rows = [(r["fiducial"], r["outcome"], r["probability"]) for r in records]
    write_rows(path, TABLE_COLUMNS, rows, config or {})


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _json_cell(v):
    if isinstance(v, (float, np.floating)) and math.isfinite(v):
        return float(v)
    return _cell(v)


def _render(path, columns, rows, config, notes):
    if path is not None and _is_json(path):
        doc = {
            "config": config,
            "notes": notes,
            "columns": list(columns),
            "rows": [[_json_cell(v) for v in row] for row in rows],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    for key in sorted(notes):
        buf.write(f"# {key}: {json.dumps(notes[key])}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_rows(path, columns, rows, config, notes=None):
    """Write a result table; ``path`` of ``None`` or ``-`` returns the text instead.

    Files are replaced atomically so readers never see partial output.
    """
    notes = notes or {}
    if path in (None, "-"):
        return _render(None, columns, rows, config, notes)
    text = _render(path, columns, rows, config, notes)
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return text
