"""End-to-end tests of the command-line interface."""

import json

import pytest
from typer.testing import CliRunner

from drsplat.cli import app
from drsplat.io_utils import read_matrix

runner = CliRunner()

SPEC = {
    "seed": 3,
    "gaussian_count": 40,
    "label_count": 3,
    "dim": 16,
    "rig": {"views": 3, "width": 32, "height": 32, "focal": 40.0},
}


def _invoke(*args):
    result = runner.invoke(app, [str(a) for a in args] + ["--quiet"])
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture
def workspace(tmp_output_dir):
    """Generated scene, masks and registration in one directory."""
    spec = tmp_output_dir / "spec.json"
    spec.write_text(json.dumps(SPEC))
    paths = {
        "spec": spec,
        "scene": tmp_output_dir / "scene.drsg",
        "points": tmp_output_dir / "points.drpc",
        "labels": tmp_output_dir / "labels.drsf",
        "masks": tmp_output_dir / "masks.drmd",
        "reg": tmp_output_dir / "reg",
    }
    _invoke(
        "gen-scene", "--spec", spec, "--out-scene", paths["scene"],
        "--out-points", paths["points"], "--out-labels", paths["labels"],
    )
    _invoke(
        "render-masks", "--scene", paths["scene"], "--labels", paths["labels"],
        "--rig", spec, "--out", paths["masks"],
    )
    _invoke("register", "--scene", paths["scene"], "--masks", paths["masks"], "--topk", 10, "--out", paths["reg"])
    return paths


class TestPipelineCommands:
    """Tests chaining the commands on a small synthetic scene."""

    def test_register_outputs(self, workspace):
        """Registration writes the scene, features and survivor map."""
        reg = workspace["reg"]
        survivors = json.loads(reg.with_name("reg.survivors.json").read_text())
        assert reg.with_name("reg.drsg").exists()
        assert reg.with_name("reg.drsf").exists()
        assert survivors["mode"] == "full"
        assert survivors["survivors"] == len(survivors["kept_indices"])
        assert survivors["source_count"] == SPEC["gaussian_count"]

    def test_segment_and_eval(self, workspace, tmp_output_dir):
        """Segmentation scores well against point-cloud pseudo-labels."""
        reg = workspace["reg"]
        seg = tmp_output_dir / "seg.json"
        report = tmp_output_dir / "eval.json"
        _invoke(
            "segment", "--scene", reg.with_name("reg.drsg"), "--features", reg.with_name("reg.drsf"),
            "--labels", workspace["labels"], "--out", seg,
        )
        _invoke("eval-iou", "--pred", seg, "--gt-points", workspace["points"], "--out", report)

        result = json.loads(report.read_text())
        assert result["miou"] is not None and result["miou"] >= 0.5
        assert set(result["accuracy"]) == {"iou>0.15", "iou>0.30", "iou>0.45"}
        assert (tmp_output_dir / "eval_labels.csv").exists()
        assert (tmp_output_dir / "logs" / "run.log").exists()

    def test_eval_iou_ablation(self, workspace, tmp_output_dir):
        """Removing the most and least significant Gaussians is reported side by side."""
        reg = workspace["reg"]
        seg = tmp_output_dir / "seg.json"
        report = tmp_output_dir / "eval_ablation.json"
        _invoke(
            "segment", "--scene", reg.with_name("reg.drsg"), "--features", reg.with_name("reg.drsf"),
            "--labels", workspace["labels"], "--out", seg,
        )
        _invoke(
            "eval-iou", "--pred", seg, "--gt-points", workspace["points"],
            "--ablate-fraction", 0.3, "--out", report,
        )

        ablation = json.loads(report.read_text())["ablation"]
        assert ablation["fraction"] == 0.3
        top, bottom = ablation["top"], ablation["bottom"]
        assert top["removed"] == bottom["removed"] > 0
        assert top["removed_significance"] > bottom["removed_significance"]
        for side in (top, bottom):
            assert side["miou"] is None or 0.0 <= side["miou"] <= 1.0

    def test_eval_voxel(self, workspace, tmp_output_dir):
        """The voxel oracle labels the registered scene and compares a segmentation."""
        reg = workspace["reg"]
        seg = tmp_output_dir / "seg.json"
        report = tmp_output_dir / "voxel.json"
        _invoke(
            "segment", "--scene", reg.with_name("reg.drsg"), "--features", reg.with_name("reg.drsf"),
            "--labels", workspace["labels"], "--out", seg,
        )
        _invoke("eval-voxel", "--scene", reg.with_name("reg.drsg"), "--pred", seg, "--out", report)

        result = json.loads(report.read_text())
        assert result["nonempty_voxels"] > 0
        assert result["voxel_miou"] is None or 0.0 <= result["voxel_miou"] <= 1.0

    def test_query_with_sweep(self, workspace, tmp_output_dir):
        """A label query selects Gaussians and sweeps thresholds."""
        reg = workspace["reg"]
        embedding = read_matrix(workspace["labels"])[0]
        query_file = tmp_output_dir / "query.json"
        query_file.write_text(json.dumps({"embedding": embedding.tolist(), "label": 0, "threshold": 0.5}))
        report = tmp_output_dir / "query_report.json"
        scores = tmp_output_dir / "scores.f32"

        _invoke(
            "query", "--scene", reg.with_name("reg.drsg"), "--features", reg.with_name("reg.drsf"),
            "--query", query_file, "--sweep", "--sweep-steps", 11, "--scores-out", scores, "--out", report,
        )
        result = json.loads(report.read_text())
        assert len(result["selected"]) > 0
        assert len(result["sweep"]) == 11
        assert result["best_threshold"] is not None
        assert scores.stat().st_size == 4 * result["count"]
        assert (tmp_output_dir / "query_report_sweep.csv").exists()

    def test_pq_registration(self, workspace, tmp_output_dir):
        """A trained codebook turns registration into PQ codes."""
        db = tmp_output_dir / "db.drsf"
        cb = tmp_output_dir / "cb.drpq"
        stem = tmp_output_dir / "reg_pq"
        _invoke("gen-db", "--labels", workspace["labels"], "--n", 512, "--out", db)
        _invoke("train-pq", "--db", db, "--subvectors", 4, "--centroids", 32, "--out", cb)
        _invoke(
            "register", "--scene", workspace["scene"], "--masks", workspace["masks"],
            "--topk", 10, "--codebook", cb, "--out", stem,
        )
        survivors = json.loads(stem.with_name("reg_pq.survivors.json").read_text())
        assert survivors["mode"] == "pq"
        assert survivors["feature_bytes"] == 4 * survivors["survivors"]

        seg = tmp_output_dir / "seg_pq.json"
        _invoke(
            "segment", "--scene", stem.with_name("reg_pq.drsg"), "--features", stem.with_name("reg_pq.drsf"),
            "--codebook", cb, "--labels", workspace["labels"], "--out", seg,
        )
        assert len(json.loads(seg.read_text())["labels"]) == survivors["survivors"]

    def test_rerun_is_byte_identical(self, workspace, tmp_output_dir):
        """Registering twice gives identical binary outputs."""
        again = tmp_output_dir / "again"
        _invoke("register", "--scene", workspace["scene"], "--masks", workspace["masks"], "--topk", 10, "--out", again)
        reg = workspace["reg"]
        for suffix in (".drsg", ".drsf"):
            assert again.with_name("again" + suffix).read_bytes() == reg.with_name("reg" + suffix).read_bytes()

    def test_query_segment_eval_reruns_are_byte_identical(self, workspace, tmp_output_dir):
        """Query, segmentation and evaluation reports repeat byte for byte."""
        reg = workspace["reg"]
        embedding = read_matrix(workspace["labels"])[1]
        query_file = tmp_output_dir / "query.json"
        query_file.write_text(json.dumps({"embedding": embedding.tolist(), "label": 1, "threshold": 0.5}))

        for run in ("a", "b"):
            _invoke(
                "query", "--scene", reg.with_name("reg.drsg"), "--features", reg.with_name("reg.drsf"),
                "--query", query_file, "--sweep", "--scores-out", tmp_output_dir / f"scores_{run}.f32",
                "--out", tmp_output_dir / f"query_{run}.json",
            )
            _invoke(
                "segment", "--scene", reg.with_name("reg.drsg"), "--features", reg.with_name("reg.drsf"),
                "--labels", workspace["labels"], "--out", tmp_output_dir / f"seg_{run}.json",
            )
            # Both evaluations read the first segmentation, so only the command itself varies
            _invoke(
                "eval-iou", "--pred", tmp_output_dir / "seg_a.json", "--gt-points", workspace["points"],
                "--ablate-fraction", 0.3, "--out", tmp_output_dir / f"eval_{run}.json",
            )

        for name in ("query_{}.json", "query_{}_sweep.csv", "scores_{}.f32", "seg_{}.json",
                     "eval_{}.json", "eval_{}_labels.csv"):
            a = (tmp_output_dir / name.format("a")).read_bytes()
            b = (tmp_output_dir / name.format("b")).read_bytes()
            assert a == b, name


class TestCommandErrors:
    """Tests for error handling at the command line."""

    def test_bad_repetitions(self, tmp_output_dir):
        """Invalid arguments exit with status 1."""
        result = runner.invoke(app, ["bench-lut", "--n", "100", "--d", "8", "--l", "2", "--reps", "5", "--quiet"])
        assert result.exit_code == 1

    def test_unknown_query_mode(self, workspace, tmp_output_dir):
        """An unknown scoring mode exits with status 1 before any input is read."""
        result = runner.invoke(app, [
            "query", "--scene", str(workspace["reg"].with_name("reg.drsg")),
            "--features", str(workspace["reg"].with_name("reg.drsf")),
            "--query", str(tmp_output_dir / "missing.json"),
            "--mode", "nearest", "--out", str(tmp_output_dir / "q.json"), "--quiet",
        ])
        assert result.exit_code == 1

    def test_bench_small(self, tmp_output_dir):
        """A small benchmark writes its report."""
        out = tmp_output_dir / "bench.json"
        _invoke("bench-lut", "--n", 1000, "--d", 16, "--l", 4, "--out", out)
        report = json.loads(out.read_text())
        assert report["top1_agree"] is True


class TestExperimentCommands:
    """Tests for the Top-k ablation and metric correlation commands."""

    def test_ablate_topk(self, tmp_output_dir):
        """One row per k, written as JSON and CSV, identical on rerun."""
        spec = tmp_output_dir / "spec.json"
        spec.write_text(json.dumps(SPEC))
        outputs = []
        for run in ("a", "b"):
            out = tmp_output_dir / f"ablation_{run}.json"
            _invoke("ablate-topk", "--spec", spec, "--topk", 1, "--topk", 10, "--out", out)
            outputs.append(out)

        report = json.loads(outputs[0].read_text())
        assert [row["k"] for row in report["rows"]] == [1, 10]
        for row in report["rows"]:
            assert row["survivors"] + row["pruned"] == SPEC["gaussian_count"]
        assert outputs[0].with_suffix(".csv").exists()
        assert outputs[0].read_bytes() == outputs[1].read_bytes()

    def test_eval_correlation(self, tmp_output_dir):
        """A short correlation run reports both coefficients and a per-scene table."""
        out = tmp_output_dir / "correlation.json"
        _invoke("eval-correlation", "--scenes", 4, "--seed", 1, "--out", out)

        report = json.loads(out.read_text())
        assert len(report["settings"]) == 4
        assert len(report["weighted_miou"]) == len(report["included"])
        for key in ("r_weighted", "r_unweighted"):
            assert report[key] is None or -1.0 <= report[key] <= 1.0
        assert out.with_suffix(".csv").exists()
