"""Latency aggregation and reporting for benchmark runs.

A report holds one cell per (mode, concurrency, duration-bucket) with
nearest-rank percentiles over per-segment end-to-end latencies. JSON output
is canonical (sorted keys, no whitespace), so identical runs serialize to
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass


def percentile(samples: list[float], p: float) -> float:
    """Nearest-rank percentile: sort ascending, take element
    ceil(p * n) - 1 (0-based). Empty input is an error, never silently 0."""
    if not samples:
        raise ValueError("percentile of no samples")
    if not 0 < p <= 1:
        raise ValueError("p must be in (0, 1]")
    ordered = sorted(samples)
    rank = math.ceil(p * len(ordered)) - 1
    return ordered[rank]


@dataclass
class ReportCell:
    mode: str
    concurrency: int
    bucket_lo_s: float
    bucket_hi_s: float
    n: int
    p50_ms: float
    p90_ms: float
    max_ms: float
    mean_batch_size: float

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("a report cell needs at least one sample")
        if not self.p50_ms <= self.p90_ms <= self.max_ms:
            raise ValueError("percentiles must be ordered: p50 <= p90 <= max")

    @property
    def bucket(self) -> tuple[float, float]:
        return (self.bucket_lo_s, self.bucket_hi_s)


@dataclass
class LatencyReport:
    mode: str
    concurrency: int
    clock: str
    seed: int
    config_hash: str
    cells: list[ReportCell]

    def cell(self, bucket: tuple[float, float]) -> ReportCell:
        for c in self.cells:
            if c.bucket == bucket:
                return c
        raise KeyError(f"no cell for bucket {bucket}")


def build_cells(mode: str, concurrency: int,
                samples_by_bucket: dict[tuple[float, float],
                                        list[tuple[float, int]]]
                ) -> list[ReportCell]:
    """Aggregate (e2e_ms, batch_size) samples into ordered cells."""
    cells = []
    for (lo, hi) in sorted(samples_by_bucket):
        rows = samples_by_bucket[(lo, hi)]
        if not rows:
            continue
        lat = [e2e for e2e, _size in rows]
        sizes = [size for _e2e, size in rows]
        cells.append(ReportCell(
            mode=mode, concurrency=concurrency, bucket_lo_s=lo,
            bucket_hi_s=hi, n=len(rows),
            p50_ms=percentile(lat, 0.5),
            p90_ms=percentile(lat, 0.9),
            max_ms=max(lat),
            mean_batch_size=sum(sizes) / len(sizes),
        ))
    return cells


def report_to_json(report: LatencyReport) -> str:
    payload = {
        "mode": report.mode,
        "concurrency": report.concurrency,
        "clock": report.clock,
        "seed": report.seed,
        "config_hash": report.config_hash,
        "cells": [asdict(c) for c in report.cells],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def report_from_json(text: str) -> LatencyReport:
    payload = json.loads(text)
    return LatencyReport(
        mode=payload["mode"], concurrency=payload["concurrency"],
        clock=payload["clock"], seed=payload["seed"],
        config_hash=payload["config_hash"],
        cells=[ReportCell(**c) for c in payload["cells"]],
    )


CSV_HEADER = ("mode,concurrency,bucket_lo_s,bucket_hi_s,n,"
              "p50_ms,p90_ms,max_ms,mean_batch_size,seed")


def report_to_csv(report: LatencyReport) -> str:
    lines = [CSV_HEADER]
    for c in report.cells:
        lines.append(
            f"{c.mode},{c.concurrency},{c.bucket_lo_s:g},{c.bucket_hi_s:g},"
            f"{c.n},{c.p50_ms:.3f},{c.p90_ms:.3f},{c.max_ms:.3f},"
            f"{c.mean_batch_size:.3f},{report.seed}")
    return "\n".join(lines) + "\n"


def report_to_table(report: LatencyReport) -> str:
    head = (f"mode={report.mode} concurrency={report.concurrency} "
            f"clock={report.clock} seed={report.seed}")
    rows = [head,
            f"{'bucket':>12} {'n':>5} {'p50_ms':>10} {'p90_ms':>10} "
            f"{'max_ms':>10} {'batch':>6}"]
    for c in report.cells:
        bucket = f"{c.bucket_lo_s:g}-{c.bucket_hi_s:g}s"
        rows.append(f"{bucket:>12} {c.n:>5} {c.p50_ms:>10.1f} "
                    f"{c.p90_ms:>10.1f} {c.max_ms:>10.1f} "
                    f"{c.mean_batch_size:>6.2f}")
    return "\n".join(rows) + "\n"


def emit_report(report: LatencyReport, fmt: str = "table",
                out_path: str | None = None) -> str:
    """Render a report; optionally write it to out_path. Returns the text."""
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "table":
        text = report_to_table(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if out_path is not None:
        try:
            with open(out_path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {out_path}: {exc}") from exc
    return text


@dataclass
class CellComparison:
    concurrency: int
    bucket_lo_s: float
    bucket_hi_s: float
    p90_a_ms: float
    p90_b_ms: float
    delta_ms: float
    delta_rel: float


def compare_modes(a: LatencyReport, b: LatencyReport) -> list[CellComparison]:
    """Per-cell p90 deltas of b relative to a. Reports must cover identical
    (concurrency, bucket) cells."""
    keys_a = {(c.concurrency, c.bucket) for c in a.cells}
    keys_b = {(c.concurrency, c.bucket) for c in b.cells}
    if keys_a != keys_b:
        missing = sorted(keys_a ^ keys_b)
        raise ValueError(f"reports do not cover the same cells: {missing}")
    out = []
    for cell_a in a.cells:
        cell_b = next(c for c in b.cells
                      if (c.concurrency, c.bucket) ==
                         (cell_a.concurrency, cell_a.bucket))
        delta = cell_b.p90_ms - cell_a.p90_ms
        out.append(CellComparison(
            concurrency=cell_a.concurrency,
            bucket_lo_s=cell_a.bucket_lo_s,
            bucket_hi_s=cell_a.bucket_hi_s,
            p90_a_ms=cell_a.p90_ms,
            p90_b_ms=cell_b.p90_ms,
            delta_ms=delta,
            delta_rel=delta / cell_a.p90_ms if cell_a.p90_ms else 0.0,
        ))
    return out


def comparison_table(rows: list[CellComparison], label_a: str = "a",
                     label_b: str = "b") -> str:
    out = [f"{'C':>4} {'bucket':>12} {label_a + ' p90':>12} "
           f"{label_b + ' p90':>12} {'delta_ms':>10} {'delta_%':>8}"]
    for r in rows:
        bucket = f"{r.bucket_lo_s:g}-{r.bucket_hi_s:g}s"
        out.append(f"{r.concurrency:>4} {bucket:>12} {r.p90_a_ms:>12.1f} "
                   f"{r.p90_b_ms:>12.1f} {r.delta_ms:>10.1f} "
                   f"{100 * r.delta_rel:>8.1f}")
    return "\n".join(out) + "\n"


def hash_config(obj) -> str:
    """Stable short hash of any JSON-serializable config description."""
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"),
                       default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
