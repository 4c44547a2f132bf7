"""Exact-match evaluation of predicted descriptors against ground truth.

A prediction counts as correct for a task only when its canonical string
equals the ground-truth string, so a correct negative (both sides NA)
scores correct on all three tasks. Presence is additionally treated as a
binary classification with precision/recall/F1; metrics with a zero
denominator are reported as absent, never coerced to 0 or 1.

Aggregation is over one or more independent runs of the same record set:
each metric gets a mean and sample standard deviation across runs, at the
per-city level and overall. Overall accuracy micro-averages over records
by default; macro (mean of city accuracies) is available behind a flag.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, stdev
from typing import Iterable, Optional, Sequence

from .descriptors import PVDescriptor, validate_descriptor

ACCURACY_TASKS = ("presence", "quantity", "location")
PRESENCE_METRICS = ("precision", "recall", "f1")
OVERALL = "overall"

REPORT_COLUMNS = ("city", "task", "mean", "std", "n_records", "n_runs")


@dataclass(frozen=True)
class MatchResult:
    presence: bool
    quantity: bool
    location: bool


@dataclass(frozen=True)
class ScoredRecord:
    """One prediction scored against its ground truth."""

    record_id: str
    city: str
    presence_match: bool
    quantity_match: bool
    location_match: bool
    pred_presence: bool
    true_presence: bool


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> Optional[float]:
        return (self.tp + self.tn) / self.total if self.total else None


@dataclass(frozen=True)
class AggregateRow:
    city: str
    task: str
    mean: float
    std: float
    n_records: int
    n_runs: int


def exact_match_score(pred: PVDescriptor, truth: PVDescriptor) -> MatchResult:
    """Field-wise canonical-string equality for the three label tasks."""
    for d in (pred, truth):
        violation = validate_descriptor(d)
        if violation is not None:
            raise ValueError(f"cannot score invalid descriptor: {violation}")
    p, t = pred.as_strings(), truth.as_strings()
    return MatchResult(
        presence=p["presence"] == t["presence"],
        quantity=p["quantity"] == t["quantity"],
        location=p["location"] == t["location"],
    )


def score_record(record_id: str, city: str, pred: PVDescriptor,
                 truth: PVDescriptor) -> ScoredRecord:
    m = exact_match_score(pred, truth)
    return ScoredRecord(
        record_id=record_id,
        city=city,
        presence_match=m.presence,
        quantity_match=m.quantity,
        location_match=m.location,
        pred_presence=pred.presence,
        true_presence=truth.presence,
    )


def presence_confusion(pairs: Iterable[tuple[bool, bool]]) -> ConfusionCounts:
    """Count (predicted, true) presence pairs; positive class is presence."""
    tp = fp = fn = tn = 0
    for pred, truth in pairs:
        if pred and truth:
            tp += 1
        elif pred and not truth:
            fp += 1
        elif not pred and truth:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision_recall_f1(
    c: ConfusionCounts,
) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """The three presence metrics; None where the denominator is zero."""
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else None
    if precision is None or recall is None or (precision + recall) == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def _task_flag(rec: ScoredRecord, task: str) -> bool:
    return {
        "presence": rec.presence_match,
        "quantity": rec.quantity_match,
        "location": rec.location_match,
    }[task]


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if len(values) == 1:
        return values[0], 0.0
    return mean(values), stdev(values)


def aggregate(
    runs: Sequence[Sequence[ScoredRecord]],
    average: str = "micro",
) -> list[AggregateRow]:
    """Aggregate scored runs into per-city and overall rows.

    Every run must cover exactly the same record ids. The overall group
    comes first, with its accuracy tasks followed by presence
    precision/recall/F1 (omitted if undefined in any run); cities follow
    in sorted order with the three accuracy tasks each.
    """
    if average not in ("micro", "macro"):
        raise ValueError("average must be 'micro' or 'macro'")
    if not runs:
        raise ValueError("no runs to aggregate")
    id_sets = [frozenset(r.record_id for r in run) for run in runs]
    for i, ids in enumerate(id_sets[1:], start=2):
        if ids != id_sets[0]:
            diff = sorted(ids ^ id_sets[0])[:5]
            raise ValueError(
                f"run {i} scores a different record set than run 1 "
                f"(first differing ids: {diff})"
            )
    n_runs = len(runs)
    n_total = len(id_sets[0])
    cities = sorted({r.city for r in runs[0]})

    rows: list[AggregateRow] = []
    for task in ACCURACY_TASKS:
        per_run = []
        for run in runs:
            if average == "micro":
                per_run.append(
                    sum(_task_flag(r, task) for r in run) / len(run)
                )
            else:
                city_accs = []
                for city in cities:
                    recs = [r for r in run if r.city == city]
                    city_accs.append(sum(_task_flag(r, task) for r in recs) / len(recs))
                per_run.append(mean(city_accs))
        m, s = _mean_std(per_run)
        rows.append(AggregateRow(OVERALL, task, m, s, n_total, n_runs))

    prf_runs: dict[str, list[float]] = {name: [] for name in PRESENCE_METRICS}
    defined = True
    for run in runs:
        c = presence_confusion([(r.pred_presence, r.true_presence) for r in run])
        values = precision_recall_f1(c)
        for name, value in zip(PRESENCE_METRICS, values):
            if value is None:
                defined = False
            else:
                prf_runs[name].append(value)
    if defined:
        for name in PRESENCE_METRICS:
            m, s = _mean_std(prf_runs[name])
            rows.append(AggregateRow(OVERALL, name, m, s, n_total, n_runs))

    for city in cities:
        n_city = sum(1 for r in runs[0] if r.city == city)
        for task in ACCURACY_TASKS:
            per_run = []
            for run in runs:
                recs = [r for r in run if r.city == city]
                per_run.append(sum(_task_flag(r, task) for r in recs) / len(recs))
            m, s = _mean_std(per_run)
            rows.append(AggregateRow(city, task, m, s, n_city, n_runs))
    return rows


def render_report(rows: Sequence[AggregateRow], fmt: str = "csv") -> str:
    """Serialize aggregate rows; floats use shortest round-trip form."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in rows:
            writer.writerow([r.city, r.task, repr(r.mean), repr(r.std),
                             r.n_records, r.n_runs])
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(REPORT_COLUMNS) + " |",
                 "|" + "|".join(["---"] * len(REPORT_COLUMNS)) + "|"]
        for r in rows:
            lines.append(
                f"| {r.city} | {r.task} | {r.mean!r} | {r.std!r} "
                f"| {r.n_records} | {r.n_runs} |"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format: {fmt!r}")


def parse_markdown_report(text: str) -> list[AggregateRow]:
    """Inverse of render_report(fmt="markdown"), for round-trip checks."""
    rows = []
    for line in text.strip().splitlines()[2:]:
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        rows.append(
            AggregateRow(cells[0], cells[1], float(cells[2]), float(cells[3]),
                         int(cells[4]), int(cells[5]))
        )
    return rows


def emit_report(rows: Sequence[AggregateRow], path: Path | str,
                fmt: str = "csv") -> Path:
    out = Path(path)
    out.write_text(render_report(rows, fmt), encoding="utf-8")
    return out


def check_f1_identity(precision: float, recall: float, f1: float,
                      tol: float = 1e-9) -> bool:
    """Literal harmonic-mean identity: f1*(p+r) == 2*p*r within tol."""
    return math.isclose(f1 * (precision + recall), 2 * precision * recall,
                        rel_tol=0, abs_tol=tol)
