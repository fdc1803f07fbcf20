"""End-to-end CLI behavior: exit codes, JSON stdout, files on disk."""

import contextlib
import io
import json
import subprocess
import sys

import pytest

from meshmlp import (
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    parse_mesh,
    save_manifest,
    write_labeled_mesh,
)
from meshmlp.cli import run_command
from meshmlp.shapes import icosphere, make_classification_dataset, make_segmentation_dataset


def run_cli(*argv):
    """Invoke the CLI in-process; returns (exit_code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = run_command(list(argv))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def seg_project(tmp_path_factory):
    """A trained segmentation run: dataset, warm cache, checkpoint, report."""
    root = tmp_path_factory.mktemp("cli_seg")
    manifest = make_segmentation_dataset(root, train=3, held_out=2, seed=0)
    cache = tmp_path_factory.mktemp("cli_seg_cache")
    out = tmp_path_factory.mktemp("cli_seg_run")
    code, stdout, stderr = run_cli(
        "train", "--manifest", str(manifest), "--cache", str(cache),
        "--out", str(out), "--epochs", "2", "--eval-every", "2",
        "--accum", "2", "--eigenpairs", "16", "--no-augment",
    )
    assert code == 0, stderr
    return {
        "manifest": manifest,
        "cache": cache,
        "out": out,
        "payload": json.loads(stdout),
        "checkpoint": out / "checkpoint.mmlpckpt",
    }


@pytest.fixture(scope="module")
def cls_project(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_cls")
    manifest = make_classification_dataset(root, per_class=2, held_out=1, seed=0)
    cache = tmp_path_factory.mktemp("cli_cls_cache")
    out = tmp_path_factory.mktemp("cli_cls_run")
    code, stdout, stderr = run_cli(
        "train", "--manifest", str(manifest), "--cache", str(cache),
        "--out", str(out), "--epochs", "2", "--eval-every", "2",
        "--accum", "2", "--eigenpairs", "16",
    )
    assert code == 0, stderr
    return {
        "manifest": manifest,
        "cache": cache,
        "payload": json.loads(stdout),
        "checkpoint": out / "checkpoint.mmlpckpt",
    }


class TestTrain:
    def test_payload_and_files(self, seg_project):
        payload = seg_project["payload"]
        out = seg_project["out"]
        assert payload["epochs_run"] == 2
        assert payload["checkpoint"] == str(seg_project["checkpoint"])
        assert seg_project["checkpoint"].exists()
        assert len((out / "training_log.jsonl").read_text().splitlines()) == 2
        for name in (
            "loss_curve.png", "metrics.csv", "confusion.csv",
            "confusion_matrix.png", "class_metrics.png",
        ):
            assert (out / name).exists()
        reported = {p.rsplit("/", 1)[-1] for p in payload["report_files"]}
        assert "loss_curve.png" in reported and "metrics.csv" in reported
        confusion = payload["metrics"]["confusion"]
        assert len(confusion) == 2 and sum(map(sum, confusion)) == 2 * 320

    def test_metrics_csv_table(self, seg_project):
        lines = (seg_project["out"] / "metrics.csv").read_text().splitlines()
        assert lines[0] == "class,iou,dsc"
        assert len(lines) == 3  # header + one row per class
        for line in lines[1:]:
            class_id, iou, dsc = line.split(",")
            assert 0.0 <= float(iou) <= 1.0 and 0.0 <= float(dsc) <= 1.0

    def test_confusion_csv_table(self, seg_project):
        lines = (seg_project["out"] / "confusion.csv").read_text().splitlines()
        assert lines[0] == "true\\pred,0,1"
        total = sum(
            int(cell) for line in lines[1:] for cell in line.split(",")[1:]
        )
        assert total == 2 * 320


class TestEval:
    def test_stdout_is_json_and_reruns_identical(self, seg_project):
        argv = (
            "eval", "--manifest", str(seg_project["manifest"]),
            "--checkpoint", str(seg_project["checkpoint"]),
            "--cache", str(seg_project["cache"]), "--eigenpairs", "16",
        )
        code_a, out_a, _ = run_cli(*argv)
        code_b, out_b, _ = run_cli(*argv)
        assert code_a == code_b == 0
        assert out_a == out_b
        payload = json.loads(out_a)
        assert 0.0 <= payload["accuracy"] <= 1.0
        assert sum(map(sum, payload["confusion"])) == 2 * 320

    def test_report_directory(self, seg_project, tmp_path):
        report_dir = tmp_path / "report"
        code, _, _ = run_cli(
            "eval", "--manifest", str(seg_project["manifest"]),
            "--checkpoint", str(seg_project["checkpoint"]),
            "--cache", str(seg_project["cache"]), "--eigenpairs", "16",
            "--report", str(report_dir),
        )
        assert code == 0
        for name in ("metrics.csv", "confusion.csv", "confusion_matrix.png", "class_metrics.png"):
            assert (report_dir / name).exists()
        assert not (report_dir / "loss_curve.png").exists()

    def test_channel_mismatch_is_usage_error(self, seg_project):
        code, stdout, stderr = run_cli(
            "eval", "--manifest", str(seg_project["manifest"]),
            "--checkpoint", str(seg_project["checkpoint"]),
            "--cache", str(seg_project["cache"]),
            "--features", "xyz", "--eigenpairs", "16",
        )
        assert code == 1
        assert stdout == ""
        assert "channels" in stderr

    def test_empty_split_is_usage_error(self, seg_project, tmp_path):
        manifest = load_manifest(seg_project["manifest"])
        train_only = DatasetManifest(
            manifest.task,
            manifest.num_classes,
            [e for e in manifest.entries if e.split == "train"],
            root=manifest.root,
        )
        path = tmp_path / "train_only.json"
        save_manifest(train_only, path)
        code, stdout, stderr = run_cli(
            "eval", "--manifest", str(path),
            "--checkpoint", str(seg_project["checkpoint"]),
            "--cache", str(seg_project["cache"]), "--eigenpairs", "16",
        )
        assert code == 1
        assert "no 'test' entries" in stderr


class TestPredict:
    def test_segmentation_writes_labels_and_mesh(self, seg_project, tmp_path):
        pred_dir = tmp_path / "pred"
        code, stdout, _ = run_cli(
            "predict", "--manifest", str(seg_project["manifest"]),
            "--checkpoint", str(seg_project["checkpoint"]),
            "--cache", str(seg_project["cache"]), "--eigenpairs", "16",
            "--out", str(pred_dir),
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["task"] == "segmentation"
        assert len(payload["predictions"]) == 2
        for item in payload["predictions"]:
            assert item["faces"] == 320
            labels = (pred_dir / item["labels_file"].rsplit("/", 1)[-1]).read_text().splitlines()
            assert len(labels) == 320
            assert set(map(int, labels)) <= {0, 1}
            mesh = parse_mesh(pred_dir / item["mesh_file"].rsplit("/", 1)[-1])
            assert mesh.n_faces == 320

    def test_segmentation_without_out_dir(self, seg_project):
        code, stdout, _ = run_cli(
            "predict", "--manifest", str(seg_project["manifest"]),
            "--checkpoint", str(seg_project["checkpoint"]),
            "--cache", str(seg_project["cache"]), "--eigenpairs", "16",
        )
        assert code == 0
        for item in json.loads(stdout)["predictions"]:
            assert "labels_file" not in item

    def test_classification_classes(self, cls_project):
        code, stdout, _ = run_cli(
            "predict", "--manifest", str(cls_project["manifest"]),
            "--checkpoint", str(cls_project["checkpoint"]),
            "--cache", str(cls_project["cache"]), "--eigenpairs", "16",
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["task"] == "classification"
        assert len(payload["predictions"]) == 2
        for item in payload["predictions"]:
            assert item["class"] in (0, 1)
            assert "labels_file" not in item

    def test_classification_train_payload(self, cls_project):
        metrics = cls_project["payload"]["metrics"]
        assert sum(map(sum, metrics["confusion"])) == 2


class TestPreprocess:
    def test_computed_then_reused(self, seg_project, tmp_path):
        cache = tmp_path / "fresh_cache"
        argv = (
            "preprocess", "--manifest", str(seg_project["manifest"]),
            "--cache", str(cache), "--eigenpairs", "16",
        )
        code, stdout, _ = run_cli(*argv)
        assert code == 0
        first = json.loads(stdout)
        assert first == {"computed": 5, "reused": 0, "failed": 0, "failures": []}
        code, stdout, _ = run_cli(*argv)
        assert code == 0
        assert json.loads(stdout)["reused"] == 5

    def test_subset_divisor_limits_train_entries(self, seg_project, tmp_path):
        code, stdout, _ = run_cli(
            "preprocess", "--manifest", str(seg_project["manifest"]),
            "--cache", str(tmp_path / "cache"), "--eigenpairs", "16",
            "--subset-divisor", "3",
        )
        assert code == 0
        payload = json.loads(stdout)
        # ceil(3 / 3) = 1 train mesh survives, both test meshes stay
        assert payload["computed"] + payload["reused"] == 3

    def test_failures_reported_per_mesh(self, tmp_path):
        manifest = DatasetManifest(
            "segmentation", 2,
            [ManifestEntry(mesh="missing.obj", split="train", labels="missing_labels.txt")],
            root=tmp_path,
        )
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        code, stdout, _ = run_cli(
            "preprocess", "--manifest", str(path), "--cache", str(tmp_path / "c"),
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["failed"] == 1
        assert payload["failures"][0]["mesh"] == "missing.obj"

    def test_unknown_feature_block_is_usage_error(self, seg_project, tmp_path):
        code, stdout, stderr = run_cli(
            "preprocess", "--manifest", str(seg_project["manifest"]),
            "--cache", str(tmp_path / "c"), "--features", "xyz,bogus",
        )
        assert code == 1
        assert stdout == ""
        assert "bogus" in stderr


class TestInfo:
    def test_mesh_report(self, tmp_path):
        path = tmp_path / "sphere.obj"
        write_labeled_mesh(path, icosphere(2))
        code, stdout, _ = run_cli("info", "--mesh", str(path))
        assert code == 0
        payload = json.loads(stdout)
        assert payload["n_vertices"] == 162
        assert payload["n_faces"] == 320
        assert payload["watertight"] is True
        assert payload["path"] == str(path)

    def test_manifest_summary(self, seg_project):
        code, stdout, _ = run_cli("info", "--manifest", str(seg_project["manifest"]))
        assert code == 0
        payload = json.loads(stdout)
        assert payload["task"] == "segmentation"
        assert payload["entries"] == 5
        assert payload["splits"] == {"train": 3, "test": 2}

    def test_requires_exactly_one_input(self, seg_project, tmp_path):
        path = tmp_path / "sphere.obj"
        write_labeled_mesh(path, icosphere(0))
        both = run_cli(
            "info", "--mesh", str(path), "--manifest", str(seg_project["manifest"])
        )
        neither = run_cli("info")
        assert both[0] == 1 and "exactly one" in both[2]
        assert neither[0] == 1 and "exactly one" in neither[2]


class TestDispatch:
    def test_no_command_prints_help(self):
        code, stdout, stderr = run_cli()
        assert code == 1
        assert "usage" in stderr
        assert stdout == ""

    def test_unknown_flag(self):
        code, _, stderr = run_cli("train", "--bogus")
        assert code == 1
        assert stderr.startswith("error:")

    def test_missing_required_flag(self):
        code, _, stderr = run_cli("eval")
        assert code == 1
        assert stderr.startswith("error:")

    def test_missing_manifest_file(self, tmp_path):
        code, stdout, stderr = run_cli("info", "--manifest", str(tmp_path / "nope.json"))
        assert code == 1
        assert stdout == ""
        assert stderr.startswith("error:")

    def test_module_entry_point(self, seg_project):
        proc = subprocess.run(
            [sys.executable, "-m", "meshmlp", "info", "--manifest", str(seg_project["manifest"])],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["entries"] == 5
