import csv
import json

import pytest

from kgcap.errors import ConfigError
from kgcap.evaluation import EvalRecord, compare_sets
from kgcap.report import ReportInputs, emit_report, histogram


def records(scores, prefix="im"):
    out = []
    for i, s in enumerate(scores):
        out.append(
            EvalRecord(
                image_id=f"{prefix}{i}",
                clip_score=s / 10.0,
                informativeness=s,
                infometic=s * s / 10.0,
            )
        )
    return out


@pytest.fixture
def inputs():
    return ReportInputs(
        custom=records([1.0, 3.0, 5.0, 7.0]),
        baseline=records([2.0, 2.0, 4.0, 6.0]),
        custom_name="custom",
        baseline_name="vlm",
        metadata={"dataset": "fixture10", "kg_enabled": True, "backbone": "vit-768",
                  "model": "transformer", "frequency_corpus": "fixture"},
        noun_counts={"custom": 5, "baseline": 3},
    )


class TestHistogram:
    def test_four_records_spanning_unit_interval(self):
        counts = histogram([0.0, 0.3, 0.7, 1.0], 0.0, 1.0)
        assert len(counts) == 20
        assert sum(counts) == 4
        assert counts[0] == 1 and counts[19] == 1  # top edge inclusive
        assert counts[6] == 1 and counts[14] == 1

    def test_degenerate_range(self):
        counts = histogram([2.0, 2.0], 2.0, 2.0)
        assert counts[0] == 2 and sum(counts) == 2


class TestEmitReport:
    def test_expected_files(self, tmp_path, inputs):
        written = emit_report(inputs, tmp_path / "report")
        names = {p.name for p in written}
        expected = {"scores.csv", "summary.json", "comparison_table.csv", "noun_table.csv"}
        for metric in ("clip_score", "informativeness", "infometic"):
            expected |= {f"hist_{metric}.csv", f"hist_{metric}.svg", f"compare_{metric}.svg"}
        assert names == expected

    def test_byte_identical_across_runs(self, tmp_path, inputs):
        emit_report(inputs, tmp_path / "a")
        emit_report(inputs, tmp_path / "b")
        for path in sorted((tmp_path / "a").iterdir()):
            assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()

    def test_summary_matches_compare_sets(self, tmp_path, inputs):
        emit_report(inputs, tmp_path / "report")
        summary = json.loads((tmp_path / "report" / "summary.json").read_text())
        for metric in ("clip_score", "informativeness", "infometic"):
            expected = compare_sets(inputs.custom, inputs.baseline, metric)
            got = summary["comparisons"][metric]
            assert got["percentage"] == expected.percentage
            assert got["n_better"] == expected.n_better

    def test_summary_recomputable_from_scores_csv(self, tmp_path, inputs):
        emit_report(inputs, tmp_path / "report")
        summary = json.loads((tmp_path / "report" / "summary.json").read_text())
        by_set = {"custom": [], "vlm": []}
        with (tmp_path / "report" / "scores.csv").open() as fh:
            for row in csv.DictReader(fh):
                if row["infometic"]:
                    by_set[row["set"]].append(float(row["infometic"]))
        for set_name, values in by_set.items():
            assert summary["sets"][set_name]["infometic"]["mean"] == pytest.approx(
                sum(values) / len(values), abs=1e-12
            )

    def test_comparison_table_schema(self, tmp_path, inputs):
        emit_report(inputs, tmp_path / "report")
        with (tmp_path / "report" / "comparison_table.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        row = rows[0]
        assert row["dataset"] == "fixture10"
        assert row["kg"] == "with"
        assert row["backbone"] == "vit-768"
        assert row["model"] == "transformer"
        assert set(rows[0]) >= {
            "clipscore_custom_pct", "clipscore_baseline_pct",
            "infometic_custom_pct", "infometic_baseline_pct",
        }

    def test_noun_table_schema(self, tmp_path, inputs):
        emit_report(inputs, tmp_path / "report")
        with (tmp_path / "report" / "noun_table.csv").open() as fh:
            (row,) = list(csv.DictReader(fh))
        assert row["custom_model"] == "5"
        assert row["baseline_model"] == "3"
        assert row["best_model"] == "custom"

    def test_unscored_records_kept_out_of_stats(self, tmp_path, inputs):
        inputs.custom.append(EvalRecord(image_id="bad", ok=False, error="no image feature"))
        (written,) = [p for p in emit_report(inputs, tmp_path / "r") if p.name == "scores.csv"]
        with written.open() as fh:
            rows = [r for r in csv.DictReader(fh) if r["image"] == "bad"]
        assert rows[0]["error"] == "no image feature"
        summary = json.loads((tmp_path / "r" / "summary.json").read_text())
        assert summary["sets"]["custom"]["n_scored"] == 4
        assert summary["sets"]["custom"]["n_records"] == 5

    def test_unwritable_directory_raises(self, tmp_path, inputs):
        blocked = tmp_path / "blocked"
        blocked.write_text("file, not dir", encoding="utf-8")
        with pytest.raises(ConfigError):
            emit_report(inputs, blocked)
