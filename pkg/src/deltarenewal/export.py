"""On-disk artifacts of a run.

Every writer is a pure function of its inputs: floats are written with ``repr`` (shortest
round-trip form) and JSON keys are sorted, so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

FIELD_DIR = "fields"
TRACE_FILE = "trace.csv"
REPORT_FILE = "singularities.json"
LEDGER_FILE = "order_ledger.csv"
ANNOTATION_FILE = "annotations.json"
MANIFEST_FILE = "manifest.json"
CONVERGENCE_FILE = "convergence.csv"


def _num(v: Any) -> Any:
    """JSON-safe scalar: nan and inf become strings."""
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    return _num(obj)


def write_json(path: str | Path, payload: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------- solution pieces
def write_fields(out: Path, smooth) -> list[Path]:
    """One CSV per region with columns ``x, t, u_smooth``."""
    d = Path(out) / FIELD_DIR
    d.mkdir(parents=True, exist_ok=True)
    for old in d.glob("region_*.csv"):
        old.unlink()
    paths = []
    for f in smooth.fields():
        if not len(f):
            continue
        order = np.lexsort((f.x, f.t))
        rows = zip(f.x[order], f.t[order], f.values[order])
        paths.append(write_csv(d / f"region_{f.region.index:03d}.csv", ["x", "t", "u_smooth"], rows))
    return paths


def write_trace(out: Path, smooth) -> Path:
    tr = smooth.trace
    m = tr.t <= smooth.horizon + 1e-12
    rows = zip(tr.t[m], tr.v_r[m], tr.u0[m], tr.provenance[m])
    return write_csv(Path(out) / TRACE_FILE, ["t", "v_r", "u0_smooth", "region"], rows)


def singularity_report(sol) -> dict:
    """One record per emission event plus the lines present from the start."""
    ledger = {e.line: e for e in sol.ledger.entries}
    events = []
    for ev in sol.events:
        term = sol.terms.get(ev.emitted_line)
        entry = ledger.get(ev.emitted_line)
        rec = {
            "time": ev.time,
            "kind": ev.kind,
            "generation": ev.generation,
            "line": ev.emitted_line,
            "line_offset": sol.support.lines[ev.emitted_line].offset,
            "parents": [list(c) for c in ev.contributions],
            "atoms": [list(a) for a in (term.atoms if term else ())],
            "ledger": None if entry is None else {
                "incoming_order": entry.incoming_order, "increment": entry.increment,
                "structural_order": entry.structural_order, "emitted_order": entry.emitted_order,
                "measure_order": entry.measure_order},
        }
        if ev.emitted_line in sol.v_atoms:
            rec["trace_atoms"] = [list(a) for a in sol.v_atoms[ev.emitted_line][1]]
        events.append(rec)
    initial = [{"line": ln.index, "line_offset": ln.offset, "atoms": [list(a) for a in sol.terms[ln.index].atoms]}
               for ln in sol.support.lines if ln.origin == "initial_atom"]
    return {
        "horizon": sol.horizon,
        "flags": list(sol.flags),
        "assumptions": [{"name": v.name, "passed": v.passed, "severity": v.severity,
                         "message": v.message, "witness": v.witness} for v in sol.verdicts],
        "approximate_functions": sol.config.approximate_functions,
        "initial_lines": initial,
        "events": events,
        "orders_by_generation": sol.ledger.by_generation(),
    }


def write_report(out: Path, sol) -> Path:
    return write_json(Path(out) / REPORT_FILE, singularity_report(sol))


def write_ledger(out: Path, ledger) -> Path:
    cols = ["time", "line", "generation", "kind", "incoming_order", "increment",
            "structural_order", "emitted_order", "measure_order"]
    rows = ([r[c] for c in cols] for r in ledger.to_records())
    return write_csv(Path(out) / LEDGER_FILE, cols, rows)


def annotations(sol) -> dict:
    """Segments of the singular lines inside the domain and the emission points."""
    L, T = sol.config.max_age, sol.horizon
    segs = []
    for idx, term in sorted(sol.terms.items()):
        tau = term.line.offset
        t0 = max(tau, 0.0)
        t1 = min(T, L + tau)
        if t1 <= t0:
            continue
        segs.append({"line": idx, "offset": tau, "x0": t0 - tau, "t0": t0, "x1": t1 - tau, "t1": t1,
                     "generation": term.line.generation, "atoms": [list(a) for a in term.atoms]})
    points = [{"x": 0.0, "t": ev.time, "kind": ev.kind, "line": ev.emitted_line} for ev in sol.events]
    return {"lines": segs, "events": points, "max_age": L, "horizon": T}


def write_annotations(out: Path, sol) -> Path:
    return write_json(Path(out) / ANNOTATION_FILE, annotations(sol))


def write_solution(out: str | Path, sol) -> list[Path]:
    """Every deterministic artifact of a hybrid solve."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_fields(out, sol.smooth)
    paths += [write_trace(out, sol.smooth), write_report(out, sol), write_ledger(out, sol.ledger),
              write_annotations(out, sol)]
    return paths


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
