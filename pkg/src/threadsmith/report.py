"""Report assembly and emission (json, csv, text table).

Rows are named by topic-sampling prefix (IND/COND) plus generation mode
(BASELINE, SCAFFOLD/FewS, CONT/ZeroS, CONT/FewS, SCAFFOLD/FineT), with
TEST SET and TRAIN SET as real-data reference rows. Cells are macro means
over communities with population std in parentheses.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .tree_metrics import mean_std

logger = logging.getLogger(__name__)

REFERENCE_ROWS = ("TEST SET", "TRAIN SET")

SAMPLING_LABELS = {"ind": "IND", "cond": "COND"}
MODE_LABELS = {
    "baseline": "BASELINE",
    "scaffold-fewshot": "SCAFFOLD/FewS",
    "scaffold-finetuned": "SCAFFOLD/FineT",
    "content-zeroshot": "CONT/ZeroS",
    "content-fewshot": "CONT/FewS",
}

# Canonical column order; unknown metrics follow alphabetically.
METRIC_ORDER = (
    "success_rate",
    "n_posts",
    "n_unique_users",
    "max_depth",
    "max_breadth",
    "wiener",
    "structural_virality",
    "cascade_virality",
    "user_posts",
    "user_depth",
    "user_direct_replies",
    "user_indirect_replies",
    "topic_js_similarity",
    "topic_weighted_jaccard",
    "mauve",
    "realism",
)


def row_label(sampling: str, mode: str) -> str:
    try:
        return f"{SAMPLING_LABELS[sampling]} {MODE_LABELS[mode]}"
    except KeyError as exc:
        raise ValueError(f"unknown row component: {exc.args[0]!r}") from exc


@dataclass
class ReportRow:
    """One table row: per-community metric values, None meaning undefined."""

    label: str
    per_community: dict[str, dict[str, float | None]] = field(default_factory=dict)

    def metric_names(self) -> list[str]:
        names: set[str] = set()
        for values in self.per_community.values():
            names.update(values)
        return sorted(names)

    def cell(self, metric: str) -> tuple[float | None, float | None, int]:
        """(macro mean, population std, n contributing communities)."""
        values = [
            v[metric]
            for _, v in sorted(self.per_community.items())
            if v.get(metric) is not None
        ]
        if not values:
            return None, None, 0
        mean, std = mean_std(values)
        return mean, std, len(values)


@dataclass
class MetricsReport:
    rows: list[ReportRow] = field(default_factory=list)
    communities: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def row(self, label: str) -> ReportRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def upsert(self, row: ReportRow) -> None:
        for i, existing in enumerate(self.rows):
            if existing.label == row.label:
                logger.warning("replacing report row %r", row.label)
                self.rows[i] = row
                return
        self.rows.append(row)

    def metric_names(self) -> list[str]:
        names: set[str] = set()
        for r in self.rows:
            names.update(r.metric_names())
        ordered = [m for m in METRIC_ORDER if m in names]
        ordered.extend(sorted(names - set(METRIC_ORDER)))
        return ordered


def _row_sort_key(label: str) -> tuple:
    if label in REFERENCE_ROWS:
        return (0, REFERENCE_ROWS.index(label), "")
    parts = label.split(" ", 1)
    sampling_order = {"IND": 0, "COND": 1}
    mode_order = {m: i for i, m in enumerate(MODE_LABELS.values())}
    if len(parts) == 2 and parts[0] in sampling_order:
        return (1, sampling_order[parts[0]], mode_order.get(parts[1], 99), parts[1])
    return (2, label)


def sorted_rows(report: MetricsReport) -> list[ReportRow]:
    return sorted(report.rows, key=lambda r: _row_sort_key(r.label))


def format_cell(mean: float | None, std: float | None) -> str:
    if mean is None:
        return "n/a"
    return f"{mean:.3f} (±{std:.3f})"


def report_to_json(report: MetricsReport) -> dict:
    return {
        "communities": sorted(report.communities),
        "config": report.config,
        "rows": [
            {
                "label": r.label,
                "per_community": {
                    c: dict(sorted(v.items())) for c, v in sorted(r.per_community.items())
                },
                "cells": {
                    m: {"mean": mean, "std": std, "n": n}
                    for m in r.metric_names()
                    for (mean, std, n) in [r.cell(m)]
                },
            }
            for r in sorted_rows(report)
        ],
    }


def report_from_json(payload: dict) -> MetricsReport:
    report = MetricsReport(
        communities=list(payload.get("communities", [])),
        config=dict(payload.get("config", {})),
    )
    for row in payload.get("rows", []):
        report.rows.append(
            ReportRow(label=row["label"], per_community=row.get("per_community", {}))
        )
    return report


def load_report(path: str | Path) -> MetricsReport:
    return report_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def merge_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Later reports win on duplicate row labels."""
    merged = MetricsReport()
    seen_communities: set[str] = set()
    for rep in reports:
        seen_communities.update(rep.communities)
        if rep.config and not merged.config:
            merged.config = dict(rep.config)
        for row in rep.rows:
            merged.upsert(
                ReportRow(label=row.label, per_community={
                    c: dict(v) for c, v in row.per_community.items()
                })
            )
    merged.communities = sorted(seen_communities)
    return merged


def render_csv(report: MetricsReport) -> str:
    metrics = report.metric_names()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", *metrics])
    for row in sorted_rows(report):
        cells = []
        for m in metrics:
            mean, std, _ = row.cell(m)
            cells.append("" if mean is None else f"{mean:.6g}|{std:.6g}")
        writer.writerow([row.label, *cells])
    return buf.getvalue()


def render_text(report: MetricsReport) -> str:
    metrics = report.metric_names()
    header = ["row", *metrics]
    lines = [header]
    for row in sorted_rows(report):
        cells = [row.label]
        for m in metrics:
            mean, std, _ = row.cell(m)
            cells.append(format_cell(mean, std))
        lines.append(cells)
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    rendered = []
    for i, line in enumerate(lines):
        rendered.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(line)).rstrip())
        if i == 0:
            rendered.append("  ".join("-" * w for w in widths))
    return "\n".join(rendered) + "\n"


def write_report(report: MetricsReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "report.json",
        "csv": out / "report.csv",
        "text": out / "report.txt",
    }
    paths["json"].write_text(
        json.dumps(report_to_json(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    paths["csv"].write_text(render_csv(report), encoding="utf-8")
    paths["text"].write_text(render_text(report), encoding="utf-8")
    return paths
