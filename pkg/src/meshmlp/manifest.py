"""Dataset manifests: which meshes exist, their labels, and the split.

A manifest is a single JSON object:

    {
      "task": "classification" | "segmentation",
      "num_classes": 8,
      "entries": [
        {"mesh": "shapes/alien_01.obj",
         "labels": "labels/alien_01.txt",   # segmentation only
         "class": 3,                        # classification only
         "split": "train"}
      ]
    }

Mesh and label paths are resolved relative to the manifest file, so a
dataset directory can be moved wholesale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError

TASKS = ("classification", "segmentation")
SPLITS = ("train", "test")


@dataclass
class ManifestEntry:
    mesh: str
    split: str
    labels: str | None = None
    class_id: int | None = None


@dataclass
class DatasetManifest:
    task: str
    num_classes: int
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path, compare=False)

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ManifestError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.num_classes < 2:
            raise ManifestError(f"num_classes must be at least 2, got {self.num_classes}")
        for entry in self.entries:
            if entry.split not in SPLITS:
                raise ManifestError(f"unknown split {entry.split!r} for {entry.mesh}")
            if self.task == "classification":
                if entry.class_id is None:
                    raise ManifestError(f"classification entry {entry.mesh} lacks a class id")
                if not 0 <= entry.class_id < self.num_classes:
                    raise ManifestError(
                        f"class id {entry.class_id} out of range for {entry.mesh}"
                    )
            elif entry.labels is None:
                raise ManifestError(f"segmentation entry {entry.mesh} lacks a label file")

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def mesh_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.mesh

    def labels_path(self, entry: ManifestEntry) -> Path | None:
        return None if entry.labels is None else self.root / entry.labels


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    try:
        entries = [
            ManifestEntry(
                mesh=item["mesh"],
                split=item["split"],
                labels=item.get("labels"),
                class_id=item.get("class"),
            )
            for item in payload["entries"]
        ]
        manifest = DatasetManifest(
            task=payload["task"],
            num_classes=int(payload["num_classes"]),
            entries=entries,
            root=path.parent,
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"{path}: missing or malformed field ({exc})") from None
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    items = []
    for e in manifest.entries:
        item: dict = {"mesh": e.mesh, "split": e.split}
        if e.labels is not None:
            item["labels"] = e.labels
        if e.class_id is not None:
            item["class"] = e.class_id
        items.append(item)
    payload = {"task": manifest.task, "num_classes": manifest.num_classes, "entries": items}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def subset_training_set(
    manifest: DatasetManifest, divisor: int, seed: int
) -> DatasetManifest:
    """Shrink the train split to ceil(N / divisor) entries, chosen at random.

    Classification manifests are subsampled per class so no class
    disappears; segmentation manifests are subsampled globally. Test
    entries pass through untouched and the relative order of surviving
    entries is preserved. The draw is deterministic in the seed.
    """
    if divisor < 1:
        raise ManifestError(f"subset divisor must be >= 1, got {divisor}")
    rng = np.random.default_rng(seed)
    train = [i for i, e in enumerate(manifest.entries) if e.split == "train"]

    keep: set[int] = set()
    if manifest.task == "classification":
        by_class: dict[int, list[int]] = {}
        for i in train:
            by_class.setdefault(manifest.entries[i].class_id, []).append(i)
        for class_id in sorted(by_class):
            members = by_class[class_id]
            count = math.ceil(len(members) / divisor)
            chosen = rng.choice(len(members), size=count, replace=False)
            keep.update(members[j] for j in chosen)
    else:
        count = math.ceil(len(train) / divisor)
        chosen = rng.choice(len(train), size=count, replace=False)
        keep.update(train[j] for j in chosen)

    entries = [
        e
        for i, e in enumerate(manifest.entries)
        if e.split != "train" or i in keep
    ]
    return DatasetManifest(
        task=manifest.task,
        num_classes=manifest.num_classes,
        entries=entries,
        root=manifest.root,
    )
