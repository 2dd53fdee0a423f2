from __future__ import annotations

import math
from pathlib import Path

import pytest

from vlm_harness.batch import ResultsRow, ResultsTable
from vlm_harness.config import ConfigError
from vlm_harness.report import (
    MetricReport,
    ReportError,
    ReportTask,
    build_report,
    load_report_config,
    load_truth,
    reliability_rates,
    render_report_text,
    report_metric_rows,
    write_metric_csv,
)


def make_table(header: list[str], rows: dict[str, dict[str, str]]) -> ResultsTable:
    table = ResultsTable(header=header)
    for image, cells in rows.items():
        table.rows.append(ResultsRow(image, cells))
    return table


# --- report config --------------------------------------------------------------


def test_load_report_config_basic() -> None:
    tasks = load_report_config(
        "[task]\n"
        "column = sidewalk\n"
        "kind = binary\n"
        "\n"
        "[task]\n"
        "column = vegetation\n"
        "kind = ordinal\n"
        "classes = 6\n"
        "\n"
        "[task]\n"
        "column = length\n"
        "kind = continuous\n"
        "range = 50\n"
    )
    assert tasks == [
        ReportTask("sidewalk", "binary", None, None),
        ReportTask("vegetation", "ordinal", None, 6),
        ReportTask("length", "continuous", 50.0, None),
    ]


def test_report_config_errors() -> None:
    with pytest.raises(ConfigError, match="only \\[task\\]"):
        load_report_config("[global]\ncolumn = x\n")
    with pytest.raises(ConfigError, match="missing 'column'"):
        load_report_config("[task]\nkind = binary\n")
    with pytest.raises(ConfigError, match="kind must be one of"):
        load_report_config("[task]\ncolumn = x\nkind = fancy\n")
    with pytest.raises(ConfigError, match="ordinal kind requires 'classes'"):
        load_report_config("[task]\ncolumn = x\nkind = ordinal\n")
    with pytest.raises(ConfigError, match="range must be positive"):
        load_report_config("[task]\ncolumn = x\nkind = count\nrange = 0\n")
    with pytest.raises(ConfigError, match="no \\[task\\]"):
        load_report_config("# nothing here\n")


# --- ground truth ---------------------------------------------------------------


def test_load_truth(tmp_path: Path) -> None:
    path = tmp_path / "truth.csv"
    path.write_text(
        "image,vehicles,sidewalk\na.jpg,3,1\nb.jpg,0,\n", encoding="utf-8"
    )
    truth = load_truth(path)
    assert truth == {"a.jpg": {"vehicles": 3.0, "sidewalk": 1.0}, "b.jpg": {"vehicles": 0.0}}


def test_load_truth_errors(tmp_path: Path) -> None:
    bad_header = tmp_path / "bad_header.csv"
    bad_header.write_text("picture,count\na.jpg,1\n", encoding="utf-8")
    with pytest.raises(ReportError, match="first column"):
        load_truth(bad_header)

    torn = tmp_path / "torn.csv"
    torn.write_text("image,count\na.jpg\n", encoding="utf-8")
    with pytest.raises(ReportError, match="malformed row"):
        load_truth(torn)

    words = tmp_path / "words.csv"
    words.write_text("image,count\na.jpg,three\n", encoding="utf-8")
    with pytest.raises(ReportError, match="non-numeric truth value"):
        load_truth(words)


# --- reliability -----------------------------------------------------------------


def test_reliability_counts_runs_entries() -> None:
    table = make_table(
        ["image", "count", "count_consensus", "count_agreement", "count_runs",
         "count_truncated"],
        {
            "a.jpg": {"count": "3", "count_runs": "3;NA;3", "count_truncated": "0"},
            "b.jpg": {"count": "NA", "count_runs": "NA;NA;NA", "count_truncated": "1"},
        },
    )
    rates = reliability_rates(table, ["count"])
    assert rates["na_rate"] == pytest.approx(4 / 6)
    assert rates["truncation_rate"] == pytest.approx(1 / 2)


def test_reliability_single_cell_without_runs_column() -> None:
    table = make_table(
        ["image", "count", "count_truncated"],
        {
            "a.jpg": {"count": "3", "count_truncated": "0"},
            "b.jpg": {"count": "NA", "count_truncated": "0"},
            "c.jpg": {"count": "", "count_truncated": ""},  # never executed
        },
    )
    rates = reliability_rates(table, ["count"])
    assert rates["na_rate"] == pytest.approx(1 / 2)
    assert rates["truncation_rate"] == 0.0


def test_reliability_empty_table_rates_are_zero() -> None:
    table = make_table(["image", "count", "count_truncated"], {})
    rates = reliability_rates(table, ["count"])
    assert rates == {"na_rate": 0.0, "truncation_rate": 0.0}


def test_truncation_rate_101_of_600() -> None:
    columns = ["t1", "t2", "t3", "t4", "t5"]
    header = ["image"]
    for column in columns:
        header.extend([column, column + "_truncated"])
    rows: dict[str, dict[str, str]] = {}
    flagged = 0
    for i in range(120):
        cells: dict[str, str] = {}
        for column in columns:
            cells[column] = "1"
            cells[column + "_truncated"] = "1" if flagged < 101 else "0"
            flagged += 1 if flagged < 101 else 0
        rows[f"img_{i:03d}.jpg"] = cells
    table = make_table(header, rows)
    rate = reliability_rates(table, columns)["truncation_rate"]
    assert rate == 101 / 600
    assert f"{rate * 100.0:.1f}" == "16.8"


# --- build_report ----------------------------------------------------------------


BINARY_TABLE = make_table(
    ["image", "sidewalk", "sidewalk_truncated"],
    {
        "a.jpg": {"sidewalk": "1", "sidewalk_truncated": "0"},
        "b.jpg": {"sidewalk": "0", "sidewalk_truncated": "0"},
        "c.jpg": {"sidewalk": "0", "sidewalk_truncated": "0"},
        "d.jpg": {"sidewalk": "0", "sidewalk_truncated": "0"},
    },
)
BINARY_TRUTH = {
    "a.jpg": {"sidewalk": 1.0},
    "b.jpg": {"sidewalk": 1.0},
    "c.jpg": {"sidewalk": 0.0},
    "d.jpg": {"sidewalk": 0.0},
}


def test_build_report_binary_hand_example() -> None:
    report = build_report(BINARY_TABLE, BINARY_TRUTH, [ReportTask("sidewalk", "binary")])
    evaluation = report.tasks["sidewalk"]
    assert evaluation.metrics["accuracy"] == pytest.approx(0.75)
    assert evaluation.metrics["sensitivity"] == pytest.approx(0.5)
    assert evaluation.metrics["specificity"] == pytest.approx(1.0)
    assert evaluation.metrics["cohen_kappa"] == pytest.approx(0.5)
    # 0/1 truth spans a range of 1, so proximity equals accuracy.
    assert evaluation.proximity == pytest.approx(0.75)
    assert report.overall_proximity == pytest.approx(0.75)
    assert evaluation.n_evaluated == 4
    assert evaluation.n_na == 0


def test_build_report_default_range_is_observed_spread() -> None:
    table = make_table(
        ["image", "count", "count_truncated"],
        {
            "a.jpg": {"count": "2", "count_truncated": "0"},
            "b.jpg": {"count": "6", "count_truncated": "0"},
            "c.jpg": {"count": "8", "count_truncated": "0"},
        },
    )
    truth = {"a.jpg": {"count": 2.0}, "b.jpg": {"count": 5.0}, "c.jpg": {"count": 9.0}}
    report = build_report(table, truth, [ReportTask("count", "count")])
    evaluation = report.tasks["count"]
    assert evaluation.value_range == 7.0
    assert evaluation.proximity == pytest.approx((1 + 6 / 7 + 6 / 7) / 3)


def test_build_report_na_predictions_are_skipped_and_counted() -> None:
    table = make_table(
        ["image", "count", "count_truncated"],
        {
            "a.jpg": {"count": "4", "count_truncated": "0"},
            "b.jpg": {"count": "NA", "count_truncated": "0"},
            "c.jpg": {"count": "7", "count_truncated": "0"},
        },
    )
    truth = {"a.jpg": {"count": 4.0}, "b.jpg": {"count": 5.0}, "c.jpg": {"count": 9.0}}
    report = build_report(table, truth, [ReportTask("count", "count")])
    evaluation = report.tasks["count"]
    assert evaluation.n_evaluated == 2
    assert evaluation.n_na == 1
    assert evaluation.metrics["mae"] == pytest.approx(1.0)


def test_build_report_overall_is_unweighted_mean() -> None:
    table = make_table(
        ["image", "a", "a_truncated", "b", "b_truncated"],
        {
            "x.jpg": {"a": "1", "a_truncated": "0", "b": "10", "b_truncated": "0"},
            "y.jpg": {"a": "0", "a_truncated": "0", "b": "30", "b_truncated": "0"},
        },
    )
    truth = {"x.jpg": {"a": 1.0, "b": 20.0}, "y.jpg": {"a": 0.0, "b": 30.0}}
    report = build_report(
        table, truth, [ReportTask("a", "binary"), ReportTask("b", "continuous")]
    )
    score_a = report.tasks["a"].proximity
    score_b = report.tasks["b"].proximity
    assert score_a == pytest.approx(1.0)
    assert score_b == pytest.approx((0.0 + 1.0) / 2)  # b off by the full 10-range once
    assert report.overall_proximity == pytest.approx((score_a + score_b) / 2)


def test_build_report_errors() -> None:
    extra_image = make_table(
        ["image", "sidewalk", "sidewalk_truncated"],
        {"mystery.jpg": {"sidewalk": "1", "sidewalk_truncated": "0"}},
    )
    with pytest.raises(ReportError, match="'mystery.jpg' is not present"):
        build_report(extra_image, BINARY_TRUTH, [ReportTask("sidewalk", "binary")])

    with_other = make_table(
        ["image", "other", "other_truncated"],
        {"a.jpg": {"other": "1", "other_truncated": "0"}},
    )
    with pytest.raises(ReportError, match="no value for image 'a.jpg', column 'other'"):
        build_report(with_other, BINARY_TRUTH, [ReportTask("other", "binary")])

    with pytest.raises(ReportError, match="no column 'missing'"):
        build_report(BINARY_TABLE, BINARY_TRUTH, [ReportTask("missing", "binary")])

    constant = {image: {"sidewalk": 1.0} for image in BINARY_TRUTH}
    with pytest.raises(ReportError, match="constant ground truth"):
        build_report(BINARY_TABLE, constant, [ReportTask("sidewalk", "binary")])

    text_cells = make_table(
        ["image", "sidewalk", "sidewalk_truncated"],
        {"a.jpg": {"sidewalk": "probably", "sidewalk_truncated": "0"}},
    )
    with pytest.raises(ReportError, match="non-numeric value 'probably'"):
        build_report(text_cells, BINARY_TRUTH, [ReportTask("sidewalk", "binary")])

    bad_binary = make_table(
        ["image", "sidewalk", "sidewalk_truncated"],
        {
            "a.jpg": {"sidewalk": "2", "sidewalk_truncated": "0"},
            "c.jpg": {"sidewalk": "0", "sidewalk_truncated": "0"},
        },
    )
    with pytest.raises(ReportError, match="binary values must be 0/1"):
        build_report(bad_binary, BINARY_TRUTH, [ReportTask("sidewalk", "binary")])

    all_na = make_table(
        ["image", "sidewalk", "sidewalk_truncated"],
        {"a.jpg": {"sidewalk": "NA", "sidewalk_truncated": "0"}},
    )
    with pytest.raises(ReportError, match="no evaluated pairs"):
        build_report(all_na, BINARY_TRUTH, [ReportTask("sidewalk", "binary")])


def test_build_report_ordinal_uses_classes() -> None:
    table = make_table(
        ["image", "vegetation", "vegetation_truncated"],
        {
            "a.jpg": {"vegetation": "2", "vegetation_truncated": "0"},
            "b.jpg": {"vegetation": "5", "vegetation_truncated": "0"},
            "c.jpg": {"vegetation": "4", "vegetation_truncated": "0"},
        },
    )
    truth = {
        "a.jpg": {"vegetation": 2.0},
        "b.jpg": {"vegetation": 4.0},
        "c.jpg": {"vegetation": 4.0},
    }
    report = build_report(table, truth, [ReportTask("vegetation", "ordinal", None, 6)])
    evaluation = report.tasks["vegetation"]
    assert evaluation.metrics["exact"] == pytest.approx(2 / 3)
    assert evaluation.metrics["within1class"] == pytest.approx(1.0)


# --- rendering -------------------------------------------------------------------


def _small_report() -> MetricReport:
    return build_report(BINARY_TABLE, BINARY_TRUTH, [ReportTask("sidewalk", "binary")])


def test_render_report_text_layout() -> None:
    text = render_report_text(_small_report(), model_name="street-model")
    assert "Task: sidewalk (binary)" in text
    assert "accuracy       : 75.0%" in text
    assert "cohen_kappa    : 0.50" in text
    assert "proximity      : 75.0%" in text
    assert "1. street-model  mean proximity 75.0%" in text
    assert "Overall proximity : 75.0%" in text
    assert "NA rate           : 0.0%" in text
    assert "Truncation rate   : 0.0%" in text


def test_render_formats_nan_as_na() -> None:
    # All-positive truth leaves specificity undefined; it must render as NA.
    table = make_table(
        ["image", "flag", "flag_truncated"],
        {
            "a.jpg": {"flag": "0", "flag_truncated": "0"},
            "b.jpg": {"flag": "1", "flag_truncated": "0"},
        },
    )
    truth = {"a.jpg": {"flag": 1.0}, "b.jpg": {"flag": 1.0}}
    report = build_report(
        table, truth, [ReportTask("flag", "binary", value_range=1.0)]
    )
    assert math.isnan(report.tasks["flag"].metrics["specificity"])
    text = render_report_text(report)
    assert "specificity    : NA" in text
    assert "sensitivity    : 50.0%" in text


def test_metric_csv_round_trip(tmp_path: Path) -> None:
    report = _small_report()
    path = tmp_path / "metrics.csv"
    write_metric_csv(path, report)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "task,metric,value"
    assert any(line.startswith("sidewalk,accuracy,0.75") for line in lines)
    assert any(line.startswith("overall,proximity,") for line in lines)
    assert len(lines) == 1 + len(report_metric_rows(report))


def test_metric_csv_nan_written_as_na(tmp_path: Path) -> None:
    table = make_table(
        ["image", "count", "count_truncated"],
        {
            "a.jpg": {"count": "3", "count_truncated": "0"},
            "b.jpg": {"count": "3", "count_truncated": "0"},
        },
    )
    truth = {"a.jpg": {"count": 2.0}, "b.jpg": {"count": 4.0}}
    report = build_report(table, truth, [ReportTask("count", "count")])
    assert math.isnan(report.tasks["count"].metrics["pearson_r"])
    path = tmp_path / "metrics.csv"
    write_metric_csv(path, report)
    assert "count,pearson_r,NA" in path.read_text(encoding="utf-8")
