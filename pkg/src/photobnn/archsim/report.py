"""Metrics CSV, trace export and cross-config comparison reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from scipy.stats import gmean

from ..errors import ValidationError
from .engine import SimEvent, format_trace
from .simulator import Metrics

CSV_HEADER = ("config", "workload", "latency_s", "fps", "power_w", "fps_per_w")

# Reference gmean ratios of the OXBNN designs over each baseline, shown next
# to simulated ratios for context only. FPS is for the 50 GS/s design,
# FPS/W for the 5 GS/s design.
PUBLISHED_GMEAN_FPS = {"ROBIN_EO": 62.0, "ROBIN_PO": 8.0, "LIGHTBULB": 7.0}
PUBLISHED_GMEAN_FPS_PER_W = {"ROBIN_EO": 6.8, "ROBIN_PO": 7.6, "LIGHTBULB": 2.14}


def metrics_csv(rows: Iterable[Metrics]) -> str:
    """CSV with a fixed header; floats are written with ``repr`` so they parse back exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for m in rows:
        writer.writerow([m.config, m.workload, repr(m.latency_s), repr(m.fps),
                         repr(m.total_power_W), repr(m.fps_per_watt)])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValidationError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for row in reader:
        out.append({k: (row[k] if k in ("config", "workload") else float(row[k]))
                    for k in CSV_HEADER})
    return out


def trace_text(events: Iterable[SimEvent]) -> str:
    return format_trace(events)


@dataclass(frozen=True)
class Ratio:
    workload: str
    fps: float
    fps_per_w: float


@dataclass(frozen=True)
class Comparison:
    """Ratios of one subject config over one baseline config."""

    subject: str
    baseline: str
    per_workload: tuple[Ratio, ...]
    gmean_fps: float
    gmean_fps_per_w: float


@dataclass(frozen=True)
class ComparisonReport:
    reference: str
    workloads: tuple[str, ...]
    comparisons: tuple[Comparison, ...]

    def get(self, baseline: str) -> Comparison:
        for c in self.comparisons:
            if c.baseline == baseline:
                return c
        raise KeyError(baseline)

    def to_text(self) -> str:
        lines = [f"reference: {self.reference}"]
        for c in self.comparisons:
            lines.append(f"vs {c.baseline}:")
            lines.append(f"  {'workload':<16}{'FPS ratio':>14}{'FPS/W ratio':>14}")
            for r in c.per_workload:
                lines.append(f"  {r.workload:<16}{r.fps:>14.4g}{r.fps_per_w:>14.4g}")
            pub = ""
            if c.baseline in PUBLISHED_GMEAN_FPS:
                pub = (f"   (reference: FPS {PUBLISHED_GMEAN_FPS[c.baseline]:g}x,"
                       f" FPS/W {PUBLISHED_GMEAN_FPS_PER_W[c.baseline]:g}x)")
            lines.append(f"  {'gmean':<16}{c.gmean_fps:>14.4g}{c.gmean_fps_per_w:>14.4g}{pub}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("reference", "baseline", "workload", "fps_ratio", "fps_per_w_ratio"))
        for c in self.comparisons:
            for r in c.per_workload:
                writer.writerow((c.subject, c.baseline, r.workload, repr(r.fps), repr(r.fps_per_w)))
            writer.writerow((c.subject, c.baseline, "gmean", repr(c.gmean_fps),
                             repr(c.gmean_fps_per_w)))
        return buf.getvalue()


def compare(metrics_by_config: Mapping[str, Iterable[Metrics]],
            reference: str | None = None) -> ComparisonReport:
    """Per-workload FPS and FPS/W ratios of ``reference`` over every other config.

    ``reference`` defaults to the first config. Every config must cover
    the same workloads.
    """
    table = {cfg: {m.workload: m for m in rows} for cfg, rows in metrics_by_config.items()}
    if len(table) < 2:
        raise ValidationError("compare needs at least two configs")
    ref = reference or next(iter(table))
    if ref not in table:
        raise ValidationError(f"reference config {ref!r} has no metrics")
    workloads = tuple(table[ref])
    for cfg, rows in table.items():
        if set(rows) != set(workloads):
            raise ValidationError(
                f"workload sets differ: {cfg} has {sorted(rows)}, {ref} has {sorted(workloads)}"
            )
    comparisons = []
    for cfg, rows in table.items():
        if cfg == ref:
            continue
        ratios = tuple(
            Ratio(w, table[ref][w].fps / rows[w].fps,
                  table[ref][w].fps_per_watt / rows[w].fps_per_watt)
            for w in workloads
        )
        comparisons.append(Comparison(
            ref, cfg, ratios,
            float(gmean([r.fps for r in ratios])),
            float(gmean([r.fps_per_w for r in ratios])),
        ))
    return ComparisonReport(ref, workloads, tuple(comparisons))


def geometric_mean(values: Iterable[float]) -> float:
    values = list(values)
    if not values or any(not (v > 0 and math.isfinite(v)) for v in values):
        raise ValidationError("geometric mean needs positive finite values")
    return float(gmean(values))
