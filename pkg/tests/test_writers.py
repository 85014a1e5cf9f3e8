"""Tests for report, score-dump and table writers."""

import json

import numpy as np
import pandas as pd

from drsplat.writers import (
    read_score_dump,
    to_jsonable,
    write_json_report,
    write_label_table,
    write_score_dump,
    write_table,
)


class TestJsonReport:
    """Tests for JSON reports."""

    def test_numpy_and_none(self, tmp_output_dir):
        """numpy values become plain JSON and undefined values become null."""
        path = tmp_output_dir / "report.json"
        write_json_report({"miou": np.float64(0.5), "per_label": {0: 1.0, 1: None}, "n": np.int64(3)}, path)
        text = path.read_text()
        assert text.endswith("\n")
        assert json.loads(text) == {"miou": 0.5, "per_label": {"0": 1.0, "1": None}, "n": 3}

    def test_arrays(self):
        """Arrays and booleans convert recursively."""
        assert to_jsonable({"a": np.array([1, 2]), "b": np.bool_(True)}) == {"a": [1, 2], "b": True}


class TestScoreDump:
    """Tests for raw float32 score dumps."""

    def test_round_trip(self, tmp_output_dir):
        """Scores are stored as little-endian float32."""
        scores = np.array([0.25, -1.0, 0.5])
        path = tmp_output_dir / "scores.f32"
        write_score_dump(scores, path)
        assert path.stat().st_size == 12
        assert np.array_equal(read_score_dump(path), scores)


class TestTables:
    """Tests for CSV tables."""

    def test_csv(self, tmp_output_dir):
        """Rows are written as CSV with one column per key."""
        path = tmp_output_dir / "sweep.csv"
        write_table([{"threshold": 0.1, "iou": 0.5}, {"threshold": 0.2, "iou": 0.75}], path)
        df = pd.read_csv(path)
        assert list(df.columns) == ["threshold", "iou"]
        assert df["iou"].tolist() == [0.5, 0.75]

    def test_empty_rows(self, tmp_output_dir):
        """No rows means no file."""
        path = tmp_output_dir / "empty.csv"
        write_table([], path)
        assert not path.exists()

    def test_label_table(self, tmp_output_dir):
        """Per-label tables sit next to the report."""
        write_label_table({0: 0.5, 1: None}, tmp_output_dir / "eval.json")
        df = pd.read_csv(tmp_output_dir / "eval_labels.csv")
        assert df["label"].tolist() == [0, 1]
        assert df["iou"].iloc[0] == 0.5
        assert pd.isna(df["iou"].iloc[1])
