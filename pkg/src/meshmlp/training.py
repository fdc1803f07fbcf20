"""Training loop, evaluation, and the metric calculations.

Batches are single meshes; gradient accumulation stands in for larger
batches. Everything is driven by one seeded generator (shuffling and
augmentation draws included), so a rerun with identical inputs and
flags reproduces the loss trajectory bit for bit under a fixed BLAS
thread configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import IO

import numpy as np

from .autodiff import Tape, Tensor, softmax_cross_entropy
from .checkpoint import save_checkpoint
from .errors import ManifestError, NonFiniteLossError
from .features import FeatureConfig, Sample, augment_rotation, load_split
from .manifest import DatasetManifest
from .model import (
    DEFAULT_GROUPS,
    DEFAULT_HEAD_WIDTHS,
    ModelState,
    NetworkConfig,
    face_label_vote,
    forward_logits,
    init_network,
)
from .optim import accumulate_then_step


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    The architecture fields default to the stock network; tests shrink
    them. early_stop_accuracy, when set, ends training at the first
    epoch whose training accuracy reaches the threshold.
    """

    epochs: int = 200
    lr: float = 1e-3
    lr_decay_epoch: int = 150
    lr_decay_factor: float = 0.1
    accumulation: int = 8
    weight_decay: float = 1e-4
    seed: int = 0
    augment: bool = True
    eval_every: int = 10
    early_stop_accuracy: float | None = None
    norm_kind: str = "ln"
    features: FeatureConfig = dataclass_field(default_factory=FeatureConfig)
    stem_width: int = 256
    groups: tuple[tuple[int, int, int], ...] = DEFAULT_GROUPS
    head_widths: tuple[int, int] = DEFAULT_HEAD_WIDTHS
    residual: bool = True

    def network_config(self, task: str, num_classes: int) -> NetworkConfig:
        return NetworkConfig(
            task=task,
            num_classes=num_classes,
            input_channels=self.features.channels,
            stem_width=self.stem_width,
            groups=self.groups,
            head_widths=self.head_widths,
            norm_kind=self.norm_kind,
            residual=self.residual,
        )


@dataclass
class Metrics:
    """Confusion-matrix derived scores.

    The confusion matrix is indexed [true, predicted]. Per-class IoU is
    TP / (TP + FP + FN) and DSC is 2TP / (2TP + FP + FN); classes that
    never occur in either truth or prediction score 1 by convention.
    """

    confusion: np.ndarray
    accuracy: float
    per_class_iou: np.ndarray
    per_class_dsc: np.ndarray

    @classmethod
    def from_confusion(cls, confusion: np.ndarray) -> "Metrics":
        confusion = np.asarray(confusion, dtype=np.int64)
        tp = np.diag(confusion).astype(np.float64)
        fn = confusion.sum(axis=1) - tp
        fp = confusion.sum(axis=0) - tp
        union = tp + fp + fn
        iou = np.where(union > 0, tp / np.where(union > 0, union, 1.0), 1.0)
        dsc_den = 2.0 * tp + fp + fn
        dsc = np.where(dsc_den > 0, 2.0 * tp / np.where(dsc_den > 0, dsc_den, 1.0), 1.0)
        total = confusion.sum()
        accuracy = float(tp.sum() / total) if total else 0.0
        return cls(confusion, accuracy, iou, dsc)

    @property
    def mean_iou(self) -> float:
        return float(self.per_class_iou.mean())

    @property
    def mean_dsc(self) -> float:
        return float(self.per_class_dsc.mean())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mean_iou": self.mean_iou,
            "mean_dsc": self.mean_dsc,
            "per_class_iou": [float(v) for v in self.per_class_iou],
            "per_class_dsc": [float(v) for v in self.per_class_dsc],
            "confusion": self.confusion.tolist(),
        }


@dataclass
class TrainResult:
    state: ModelState
    records: list[dict]
    metrics: Metrics | None


def _sample_loss(
    state: ModelState, sample: Sample, features: np.ndarray
) -> tuple[Tensor, Tape, int, int]:
    """Forward pass and loss; returns (loss, tape, n_correct, n_scored)."""
    tape = Tape()
    logits = forward_logits(state, tape, Tensor(features), mode="train")
    if state.config.task == "classification":
        targets = np.array([sample.target])
    else:
        targets = sample.vertex_targets
    loss = softmax_cross_entropy(tape, logits, targets)
    predicted = logits.data.argmax(axis=1)
    return loss, tape, int((predicted == targets).sum()), len(targets)


def train(
    manifest: DatasetManifest,
    config: TrainConfig,
    cache_dir: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
    log_stream: IO | None = None,
) -> TrainResult:
    """Fit a network on the manifest's train split.

    Writes a JSONL record per epoch to log_path and human progress
    lines to log_stream when given. Evaluation on the test split runs
    every eval_every epochs and once more at the end. The final state
    is saved to checkpoint_path when given.

    Raises NonFiniteLossError the moment a sample loss stops being
    finite, naming the epoch and mesh.
    """
    cache_dir = Path(cache_dir) if cache_dir is not None else None
    train_samples = load_split(manifest, "train", config.features, cache_dir)
    test_samples = load_split(manifest, "test", config.features, cache_dir)
    if not train_samples:
        raise ManifestError("manifest has no train entries")

    state = init_network(
        config.network_config(manifest.task, manifest.num_classes), seed=config.seed
    )
    parameters = state.parameters()
    rng = np.random.default_rng(config.seed)
    records: list[dict] = []
    log_file = open(log_path, "w") if log_path is not None else None

    def say(text: str) -> None:
        if log_stream is not None:
            print(text, file=log_stream, flush=True)

    try:
        for epoch in range(1, config.epochs + 1):
            decay = config.lr_decay_factor if epoch >= config.lr_decay_epoch else 1.0
            lr = config.lr * decay
            order = rng.permutation(len(train_samples))
            hits = 0
            scored = 0

            def closure_for(sample: Sample):
                def closure() -> float:
                    nonlocal hits, scored
                    features = sample.features
                    if config.augment:
                        features = augment_rotation(features, config.features, rng)
                    loss, tape, correct, count = _sample_loss(state, sample, features)
                    value = float(loss.data[0, 0])
                    if not np.isfinite(value):
                        raise NonFiniteLossError(
                            f"non-finite loss at epoch {epoch} on {sample.mesh_id}"
                        )
                    tape.backward(loss)
                    hits += correct
                    scored += count
                    return value

                return closure

            losses, steps = accumulate_then_step(
                (closure_for(train_samples[i]) for i in order),
                parameters,
                config.accumulation,
                lr=lr,
                weight_decay=config.weight_decay,
            )
            train_accuracy = hits / max(scored, 1)
            record = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "train_accuracy": train_accuracy,
                "lr": lr,
                "steps": steps,
            }
            stop = (
                config.early_stop_accuracy is not None
                and train_accuracy >= config.early_stop_accuracy
            )
            last = stop or epoch == config.epochs
            if test_samples and (last or (config.eval_every and epoch % config.eval_every == 0)):
                metrics = evaluate(state, test_samples)
                record["eval_accuracy"] = metrics.accuracy
                record["eval_mean_iou"] = metrics.mean_iou
            records.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            say(
                f"epoch {epoch:4d}  loss {record['train_loss']:.4f}  "
                f"acc {train_accuracy:.3f}"
                + (f"  eval_acc {record['eval_accuracy']:.3f}" if "eval_accuracy" in record else "")
            )
            if stop:
                say(f"early stop: train accuracy reached {train_accuracy:.3f}")
                break
    finally:
        if log_file is not None:
            log_file.close()

    metrics = evaluate(state, test_samples) if test_samples else None
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, state)
    return TrainResult(state, records, metrics)


def predict_sample(state: ModelState, sample: Sample) -> np.ndarray:
    """Raw logits for one sample in eval mode: (1, K) or (n, K)."""
    tape = Tape()
    logits = forward_logits(state, tape, Tensor(sample.features), mode="eval")
    return logits.data


def evaluate(state: ModelState, samples: list[Sample]) -> Metrics:
    """Score samples with frozen statistics.

    Classification counts one prediction per mesh. Segmentation votes
    vertex logits down to faces and counts every face, pooled over all
    meshes so large meshes weigh more, matching how the label files are
    distributed.
    """
    k = state.config.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    for sample in samples:
        logits = predict_sample(state, sample)
        if state.config.task == "classification":
            confusion[sample.target, int(logits.argmax())] += 1
        else:
            voted = face_label_vote(logits, sample.faces)
            np.add.at(confusion, (sample.face_labels, voted), 1)
    return Metrics.from_confusion(confusion)
