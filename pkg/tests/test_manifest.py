"""Manifest loading, validation, and training-set subsampling."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshmlp import (
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    load_manifest,
    save_manifest,
    subset_training_set,
)


def seg_manifest(n_train, n_test=3):
    entries = [
        ManifestEntry(mesh=f"m{i:03d}.obj", labels=f"m{i:03d}.txt", split="train")
        for i in range(n_train)
    ]
    entries += [
        ManifestEntry(mesh=f"t{i:03d}.obj", labels=f"t{i:03d}.txt", split="test")
        for i in range(n_test)
    ]
    return DatasetManifest(task="segmentation", num_classes=4, entries=entries)


def cls_manifest(per_class, num_classes=3):
    entries = [
        ManifestEntry(mesh=f"c{c}_{i:03d}.obj", class_id=c, split="train")
        for c in range(num_classes)
        for i in range(per_class)
    ]
    entries.append(ManifestEntry(mesh="held.obj", class_id=0, split="test"))
    return DatasetManifest(task="classification", num_classes=num_classes, entries=entries)


class TestValidation:
    def test_unknown_task(self):
        with pytest.raises(ManifestError, match="task"):
            DatasetManifest(task="regression", num_classes=2, entries=[])

    def test_too_few_classes(self):
        with pytest.raises(ManifestError, match="num_classes"):
            DatasetManifest(task="segmentation", num_classes=1, entries=[])

    def test_unknown_split(self):
        entry = ManifestEntry(mesh="a.obj", labels="a.txt", split="val")
        with pytest.raises(ManifestError, match="split"):
            DatasetManifest(task="segmentation", num_classes=2, entries=[entry])

    def test_classification_needs_class_id(self):
        entry = ManifestEntry(mesh="a.obj", split="train")
        with pytest.raises(ManifestError, match="class id"):
            DatasetManifest(task="classification", num_classes=2, entries=[entry])

    def test_class_id_range(self):
        entry = ManifestEntry(mesh="a.obj", class_id=5, split="train")
        with pytest.raises(ManifestError, match="out of range"):
            DatasetManifest(task="classification", num_classes=2, entries=[entry])

    def test_segmentation_needs_labels(self):
        entry = ManifestEntry(mesh="a.obj", split="train")
        with pytest.raises(ManifestError, match="label file"):
            DatasetManifest(task="segmentation", num_classes=2, entries=[entry])


class TestRoundTrip:
    def test_save_load(self, tmp_path):
        manifest = seg_manifest(5)
        path = tmp_path / "sub" / "data.json"
        path.parent.mkdir()
        save_manifest(manifest, path)
        back = load_manifest(path)
        assert back.task == manifest.task
        assert back.num_classes == manifest.num_classes
        assert back.entries == manifest.entries
        # paths resolve relative to the manifest file
        assert back.mesh_path(back.entries[0]) == path.parent / "m000.obj"
        assert back.labels_path(back.entries[0]) == path.parent / "m000.txt"

    def test_classification_round_trip(self, tmp_path):
        manifest = cls_manifest(4)
        path = tmp_path / "data.json"
        save_manifest(manifest, path)
        back = load_manifest(path)
        assert back.entries == manifest.entries
        assert back.labels_path(back.entries[0]) is None

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ManifestError, match="JSON"):
            load_manifest(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "missing.json"
        path.write_text('{"task": "segmentation", "entries": []}')
        with pytest.raises(ManifestError, match="field"):
            load_manifest(path)


class TestSubset:
    def test_divisor_table(self):
        # 381 train entries with divisors 10/50/100 keep 39/8/4
        manifest = seg_manifest(381)
        for divisor, expected in ((10, 39), (50, 8), (100, 4)):
            out = subset_training_set(manifest, divisor, seed=0)
            assert len(out.split_entries("train")) == expected
            assert len(out.split_entries("test")) == 3

    def test_divisor_one_is_identity(self):
        manifest = seg_manifest(17)
        out = subset_training_set(manifest, 1, seed=9)
        assert out.entries == manifest.entries

    def test_deterministic_in_seed(self):
        manifest = seg_manifest(100)
        a = subset_training_set(manifest, 10, seed=3)
        b = subset_training_set(manifest, 10, seed=3)
        c = subset_training_set(manifest, 10, seed=4)
        assert a.entries == b.entries
        assert a.entries != c.entries

    def test_order_preserved(self):
        manifest = seg_manifest(50)
        out = subset_training_set(manifest, 5, seed=1)
        names = [e.mesh for e in out.entries]
        original = [e.mesh for e in manifest.entries]
        assert names == [m for m in original if m in set(names)]

    def test_classification_keeps_every_class(self):
        manifest = cls_manifest(per_class=7, num_classes=5)
        out = subset_training_set(manifest, 100, seed=0)
        train = out.split_entries("train")
        # ceil(7/100) = 1 per class
        assert sorted(e.class_id for e in train) == [0, 1, 2, 3, 4]

    def test_bad_divisor(self):
        with pytest.raises(ManifestError):
            subset_training_set(seg_manifest(4), 0, seed=0)

    @settings(deadline=None, max_examples=40)
    @given(
        n=st.integers(min_value=1, max_value=400),
        divisor=st.integers(min_value=1, max_value=150),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_segmentation_subset_size(self, n, divisor, seed):
        out = subset_training_set(seg_manifest(n), divisor, seed)
        assert len(out.split_entries("train")) == math.ceil(n / divisor)

    @settings(deadline=None, max_examples=40)
    @given(
        per_class=st.integers(min_value=1, max_value=60),
        divisor=st.integers(min_value=1, max_value=80),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_classification_subset_size(self, per_class, divisor, seed):
        out = subset_training_set(cls_manifest(per_class), divisor, seed)
        per = math.ceil(per_class / divisor)
        assert len(out.split_entries("train")) == 3 * per
