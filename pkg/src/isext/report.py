"""Covering code-size estimates and CSV reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import clone_and_combine
from .ddg import CONST, DDG, INPUT
from .miso import ArchConstraints, ClusterGraph, max_miso

COVER_COLUMNS = ["ddg", "max_inputs", "base_size", "maxmiso_size", "clustered_size", "reduction_pct"]
SET_COLUMNS = ["set", "before", "after", "factor"]
SUBSUME_COLUMNS = ["f_name", "g_name", "verdict", "witness", "iterations", "solver_time_ms"]


def code_size(g: DDG, cg: ClusterGraph) -> int:
    """One instruction per cluster plus one per uncovered operation."""
    covered = cg.covered()
    roots = set(cg.clusters)
    for o in g.outputs:
        kind = g.nodes[o].kind
        if kind in (INPUT, CONST):
            continue
        if o in covered and o not in roots:
            raise ValueError(f"output {o!r} is not produced by the covering")
    uncovered = sum(1 for i in g.ops() if i not in covered)
    return len(cg.clusters) + uncovered


def base_size(g: DDG) -> int:
    return len(g.ops())


@dataclass
class CoverReport:
    ddg: str
    max_inputs: int
    base_size: int
    maxmiso_size: int
    clustered_size: int
    maxmiso: ClusterGraph | None = field(default=None, repr=False, compare=False)
    clustered: ClusterGraph | None = field(default=None, repr=False, compare=False)

    @property
    def reduction_pct(self):
        if not self.maxmiso_size:
            return 0.0
        return (self.maxmiso_size - self.clustered_size) / self.maxmiso_size * 100.0

    def row(self):
        return [self.ddg, str(self.max_inputs), str(self.base_size), str(self.maxmiso_size),
                str(self.clustered_size), f"{self.reduction_pct:.2f}"]


@dataclass
class SetReport:
    name: str
    before: int
    after: int
    removed: list = field(default_factory=list)

    @property
    def factor(self):
        return self.before / self.after if self.after else 1.0

    def row(self):
        return [self.name, str(self.before), str(self.after), f"{self.factor:.2f}"]


def cover_report(g: DDG, max_inputs: int, ac: ArchConstraints | None = None) -> CoverReport:
    ac = ac or ArchConstraints(max_inputs=max_inputs)
    mm = max_miso(g, ac)
    cl = clone_and_combine(mm, ac)
    return CoverReport(g.name, max_inputs, base_size(g), code_size(g, mm), code_size(g, cl), mm, cl)


def sweep(g: DDG, lo: int, hi: int, **ac_kw) -> list[CoverReport]:
    if lo < 1 or hi < lo:
        raise ValueError(f"bad max_inputs range {lo}:{hi}")
    return [cover_report(g, k, ArchConstraints(max_inputs=k, **ac_kw)) for k in range(lo, hi + 1)]


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def cover_csv(reports) -> str:
    return _csv(COVER_COLUMNS, [r.row() for r in reports])


def set_csv(reports) -> str:
    return _csv(SET_COLUMNS, [r.row() for r in reports])


def subsume_csv(results, timing=True) -> str:
    cols = SUBSUME_COLUMNS if timing else SUBSUME_COLUMNS[:-1]
    rows = []
    for r in results:
        row = [r.f, r.g, r.status, str(r.witness) if r.witness else "", str(r.iterations)]
        if timing:
            row.append(f"{r.elapsed_ms:.1f}")
        rows.append(row)
    return _csv(cols, rows)


def read_cover_csv(text: str) -> list[dict]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append({
            "ddg": row["ddg"],
            "max_inputs": int(row["max_inputs"]),
            "base_size": int(row["base_size"]),
            "maxmiso_size": int(row["maxmiso_size"]),
            "clustered_size": int(row["clustered_size"]),
            "reduction_pct": float(row["reduction_pct"]),
        })
    return out


def read_set_csv(text: str) -> list[dict]:
    return [{"set": r["set"], "before": int(r["before"]), "after": int(r["after"]), "factor": float(r["factor"])}
            for r in csv.DictReader(io.StringIO(text))]


def summary(reports) -> str:
    lines = []
    for r in reports:
        lines.append(f"{r.ddg:<20} k={r.max_inputs}  base={r.base_size:<4} maxmiso={r.maxmiso_size:<4} "
                     f"clustered={r.clustered_size:<4} reduction={r.reduction_pct:.2f}%")
    return "\n".join(lines) + ("\n" if lines else "")


def emit_reports(reports, path, set_reports=()) -> list[Path]:
    """Write cover.csv (+ sets.csv when given) and summary.txt under ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "cover.csv"
    p.write_text(cover_csv(reports), encoding="utf-8", newline="")
    written.append(p)
    if set_reports:
        p = out / "sets.csv"
        p.write_text(set_csv(set_reports), encoding="utf-8", newline="")
        written.append(p)
    text = summary(reports)
    for s in set_reports:
        text += f"set {s.name}: {s.before} -> {s.after} (x{s.factor:.2f})\n"
    p = out / "summary.txt"
    p.write_text(text, encoding="utf-8", newline="")
    written.append(p)
    return written
