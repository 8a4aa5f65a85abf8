import json

import pytest

from threadsmith.report import (
    METRIC_ORDER,
    MetricsReport,
    ReportRow,
    format_cell,
    load_report,
    merge_reports,
    render_csv,
    render_text,
    report_from_json,
    report_to_json,
    row_label,
    sorted_rows,
    write_report,
)


def _report():
    report = MetricsReport(communities=["a", "b"], config={"seed": 7})
    report.upsert(
        ReportRow(
            "TEST SET",
            {
                "a": {"n_posts": 4.0, "mauve": None},
                "b": {"n_posts": 6.0, "mauve": None},
            },
        )
    )
    report.upsert(
        ReportRow(
            "IND BASELINE",
            {
                "a": {"n_posts": 3.0, "success_rate": 0.5, "mauve": 0.8},
                "b": {"n_posts": 5.0, "success_rate": 0.7, "mauve": 0.6},
            },
        )
    )
    report.upsert(
        ReportRow(
            "COND SCAFFOLD/FewS",
            {"a": {"n_posts": 2.0, "success_rate": 1.0}},
        )
    )
    return report


def test_row_label():
    assert row_label("ind", "baseline") == "IND BASELINE"
    assert row_label("cond", "scaffold-fewshot") == "COND SCAFFOLD/FewS"
    with pytest.raises(ValueError):
        row_label("both", "baseline")
    with pytest.raises(ValueError):
        row_label("ind", "magic")


def test_cell_macro_stats():
    report = _report()
    mean, std, n = report.row("IND BASELINE").cell("n_posts")
    assert mean == 4.0
    assert std == 1.0
    assert n == 2
    mean, std, n = report.row("TEST SET").cell("mauve")
    assert (mean, std, n) == (None, None, 0)
    mean, std, n = report.row("COND SCAFFOLD/FewS").cell("n_posts")
    assert (mean, std, n) == (2.0, 0.0, 1)


def test_upsert_replaces_by_label():
    report = _report()
    report.upsert(ReportRow("IND BASELINE", {"a": {"n_posts": 9.0}}))
    assert len([r for r in report.rows if r.label == "IND BASELINE"]) == 1
    assert report.row("IND BASELINE").cell("n_posts")[0] == 9.0
    with pytest.raises(KeyError):
        report.row("missing row")


def test_metric_names_follow_canonical_order():
    report = _report()
    report.upsert(ReportRow("IND CONT/ZeroS", {"a": {"zzz_custom": 1.0}}))
    names = report.metric_names()
    assert names.index("success_rate") < names.index("n_posts")
    assert names.index("n_posts") < names.index("mauve")
    assert names[-1] == "zzz_custom"
    for name in names[:-1]:
        assert name in METRIC_ORDER


def test_sorted_rows_reference_first():
    report = _report()
    report.upsert(ReportRow("TRAIN SET", {"a": {"n_posts": 1.0}}))
    report.upsert(ReportRow("IND SCAFFOLD/FewS", {"a": {"n_posts": 1.0}}))
    labels = [r.label for r in sorted_rows(report)]
    assert labels == [
        "TEST SET",
        "TRAIN SET",
        "IND BASELINE",
        "IND SCAFFOLD/FewS",
        "COND SCAFFOLD/FewS",
    ]


def test_format_cell():
    assert format_cell(None, None) == "n/a"
    assert format_cell(0.5, 0.0) == "0.500 (±0.000)"
    assert format_cell(1.23456, 0.789) == "1.235 (±0.789)"


def test_json_round_trip():
    report = _report()
    payload = report_to_json(report)
    json.dumps(payload)  # serializable
    back = report_from_json(payload)
    assert back.communities == report.communities
    assert back.config == report.config
    assert [r.label for r in back.rows] == [r.label for r in report.rows]
    assert back.row("IND BASELINE").per_community == report.row("IND BASELINE").per_community


def test_merge_reports_later_wins():
    first = _report()
    second = MetricsReport(communities=["c"], config={"seed": 8})
    second.upsert(ReportRow("IND BASELINE", {"c": {"n_posts": 7.0}}))
    second.upsert(ReportRow("COND BASELINE", {"c": {"n_posts": 1.0}}))
    merged = merge_reports([first, second])
    assert merged.row("IND BASELINE").per_community == {"c": {"n_posts": 7.0}}
    assert {r.label for r in merged.rows} >= {"TEST SET", "COND BASELINE"}
    assert merged.communities == ["a", "b", "c"]


def test_render_csv_shape():
    csv_text = render_csv(_report())
    lines = csv_text.strip().split("\n")
    header = lines[0].split(",")
    assert header[0] == "row"
    assert "n_posts" in header
    assert len(lines) == 1 + 3
    baseline = next(l for l in lines if l.startswith("IND BASELINE"))
    assert "4|1" in baseline


def test_render_text_table():
    text = render_text(_report())
    lines = text.split("\n")
    assert lines[0].startswith("row")
    assert set(lines[1]) <= {"-", " "}
    assert any("n/a" in line for line in lines)
    assert any("IND BASELINE" in line for line in lines)
    # columns line up: every data row has a cell starting where the header does
    col = lines[0].index("n_posts")
    for line in lines[2:]:
        if line.strip():
            assert line[col] != " "


def test_write_report_files(tmp_path):
    paths = write_report(_report(), tmp_path)
    assert set(paths) == {"json", "csv", "text"}
    loaded = load_report(paths["json"])
    assert loaded.row("IND BASELINE").cell("n_posts")[0] == 4.0
    raw = paths["json"].read_text()
    assert raw == json.dumps(json.loads(raw), indent=2, sort_keys=True) + "\n"
    assert paths["csv"].read_text().startswith("row,")
    assert "IND BASELINE" in paths["text"].read_text()
