"""Residual MLP over per-vertex features.

Every layer is a 1x1 map applied to all vertices at once, so the
network never looks at connectivity; geometry enters only through the
input features. The backbone narrows twice for the bottleneck blocks
and re-widens by concatenating a snapshot of the early activations,
giving the deep half repeated access to the shallow representation.

Blocks follow the pre-activation bottleneck pattern

    y = x + FC_up(relu(norm(FC_mid(relu(norm(FC_down(x)))))))

and a norm+relu pair follows every transition FC between stages.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    NORM_KINDS,
    Parameter,
    Tape,
    Tensor,
    add,
    affine,
    concat_channels,
    mean_pool_rows,
    norm_layer,
    relu,
)
from .errors import ShapeMismatchError

# (width, bottleneck, repeats) per group; the narrow prefix runs at stem
# width and the wide suffix at twice that.
DEFAULT_GROUPS = (
    (256, 64, 3),
    (256, 64, 4),
    (256, 64, 6),
    (512, 128, 3),
    (512, 128, 3),
    (512, 128, 4),
    (512, 128, 6),
    (512, 128, 3),
)
DEFAULT_HEAD_WIDTHS = (128, 32)
TASKS = ("classification", "segmentation")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture description; hashable into a checkpoint digest.

    Group widths must equal the stem width (narrow prefix) or twice it
    (wide suffix), with all narrow groups first; that is what the
    snapshot-and-concat wiring assumes. The default matches the stock
    architecture; tests shrink stem_width to keep runtimes down.
    """

    task: str
    num_classes: int
    input_channels: int = 26
    stem_width: int = 256
    groups: tuple[tuple[int, int, int], ...] = DEFAULT_GROUPS
    head_widths: tuple[int, int] = DEFAULT_HEAD_WIDTHS
    norm_kind: str = "ln"
    norm_groups: int = 8
    residual: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        wide = 2 * self.stem_width
        seen_wide = False
        for w, b, r in self.groups:
            if w not in (self.stem_width, wide):
                raise ValueError(
                    f"group width {w} is neither stem width {self.stem_width} nor {wide}"
                )
            if w == self.stem_width and seen_wide:
                raise ValueError("narrow groups must precede wide groups")
            seen_wide = seen_wide or w == wide
            if r < 1 or b < 1:
                raise ValueError(f"bad group spec ({w}, {b}, {r})")

    def narrow_groups(self) -> list[tuple[int, int, int]]:
        return [g for g in self.groups if g[0] == self.stem_width]

    def wide_groups(self) -> list[tuple[int, int, int]]:
        return [g for g in self.groups if g[0] == 2 * self.stem_width]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "num_classes": self.num_classes,
            "input_channels": self.input_channels,
            "stem_width": self.stem_width,
            "groups": [list(g) for g in self.groups],
            "head_widths": list(self.head_widths),
            "norm_kind": self.norm_kind,
            "norm_groups": self.norm_groups,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NetworkConfig":
        return cls(
            task=payload["task"],
            num_classes=int(payload["num_classes"]),
            input_channels=int(payload["input_channels"]),
            stem_width=int(payload["stem_width"]),
            groups=tuple(tuple(g) for g in payload["groups"]),
            head_widths=tuple(payload["head_widths"]),
            norm_kind=payload["norm_kind"],
            norm_groups=int(payload["norm_groups"]),
            residual=bool(payload["residual"]),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ModelState:
    """Parameters and normalization buffers for one network instance."""

    config: NetworkConfig
    params: dict[str, Parameter]
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())


def _layer_plan(config: NetworkConfig) -> list[tuple[str, str, int, int]]:
    """Flat list of (name, kind, fan_in, fan_out) in creation order.

    kind is "fc" (weight plus bias) or "norm" (gain plus shift, fan_out
    channels). Keeping the plan in one place means init, forward, and
    the checkpoint loader can never disagree about what exists.
    """
    plan: list[tuple[str, str, int, int]] = []

    def fc(name, fan_in, fan_out):
        plan.append((name, "fc", fan_in, fan_out))

    def norm(name, channels):
        plan.append((name, "norm", 0, channels))

    def transition(name, fan_in, fan_out):
        fc(f"{name}.fc", fan_in, fan_out)
        norm(f"{name}.norm", fan_out)

    def group(index, width, bottleneck, repeats):
        for r in range(repeats):
            base = f"g{index}.r{r}"
            fc(f"{base}.fc1", width, bottleneck)
            norm(f"{base}.n1", bottleneck)
            fc(f"{base}.fc2", bottleneck, bottleneck)
            norm(f"{base}.n2", bottleneck)
            fc(f"{base}.fc3", bottleneck, width)

    stem = config.stem_width
    wide = 2 * stem
    transition("stem", config.input_channels, stem)
    gi = 0
    for w, b, r in config.narrow_groups():
        group(gi, w, b, r)
        gi += 1
    wide_groups = config.wide_groups()
    ti = 0
    for pos, (w, b, r) in enumerate(wide_groups):
        if pos == 0:
            transition(f"t{ti}", stem, wide)
            ti += 1
        elif pos < len(wide_groups) - 1:
            # project back to stem width, the snapshot concat restores the rest
            transition(f"t{ti}", wide, stem)
            ti += 1
        group(gi, w, b, r)
        gi += 1
    last_width = wide if wide_groups else stem
    transition(f"t{ti}", last_width, config.head_widths[0])
    transition(f"t{ti + 1}", config.head_widths[0], config.head_widths[1])
    fc("head.fc", config.head_widths[1], config.num_classes)
    return plan


def init_network(
    config: NetworkConfig, seed: int = 0, dtype=np.float32
) -> ModelState:
    """Fresh parameters: uniform(+-1/sqrt(fan_in)) weights, zero biases,
    unit gains, zero shifts. Batch-norm running stats start at (0, 1).
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Parameter] = {}
    buffers: dict[str, dict[str, np.ndarray]] = {}
    for name, kind, fan_in, fan_out in _layer_plan(config):
        if kind == "fc":
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            params[f"{name}.W"] = Parameter(w.astype(dtype), name=f"{name}.W")
            params[f"{name}.b"] = Parameter(
                np.zeros((1, fan_out), dtype=dtype), name=f"{name}.b"
            )
        else:
            params[f"{name}.gamma"] = Parameter(
                np.ones((1, fan_out), dtype=dtype), name=f"{name}.gamma"
            )
            params[f"{name}.beta"] = Parameter(
                np.zeros((1, fan_out), dtype=dtype), name=f"{name}.beta"
            )
            if config.norm_kind == "bn":
                buffers[name] = {
                    "mean": np.zeros((1, fan_out), dtype=dtype),
                    "var": np.ones((1, fan_out), dtype=dtype),
                }
    return ModelState(config, params, buffers)


class _Forward:
    """One forward pass; binds the tape, mode, and state together."""

    def __init__(self, state: ModelState, tape: Tape, mode: str):
        self.state = state
        self.tape = tape
        self.mode = mode

    def fc(self, name: str, x: Tensor) -> Tensor:
        p = self.state.params
        return affine(self.tape, x, p[f"{name}.W"], p[f"{name}.b"])

    def norm(self, name: str, x: Tensor) -> Tensor:
        p = self.state.params
        return norm_layer(
            self.tape,
            x,
            self.state.config.norm_kind,
            p[f"{name}.gamma"],
            p[f"{name}.beta"],
            mode=self.mode,
            state=self.state.buffers.get(name),
            groups=self.state.config.norm_groups,
        )

    def transition(self, name: str, x: Tensor) -> Tensor:
        return relu(self.tape, self.norm(f"{name}.norm", self.fc(f"{name}.fc", x)))

    def block(self, base: str, x: Tensor) -> Tensor:
        h = relu(self.tape, self.norm(f"{base}.n1", self.fc(f"{base}.fc1", x)))
        h = relu(self.tape, self.norm(f"{base}.n2", self.fc(f"{base}.fc2", h)))
        h = self.fc(f"{base}.fc3", h)
        return add(self.tape, x, h) if self.state.config.residual else h

    def group(self, index: int, repeats: int, x: Tensor) -> Tensor:
        for r in range(repeats):
            x = self.block(f"g{index}.r{r}", x)
        return x


def backbone(
    state: ModelState, tape: Tape, features: Tensor, mode: str = "train"
) -> Tensor:
    """Per-vertex embedding, (n, input_channels) -> (n, head_widths[1])."""
    config = state.config
    if features.data.shape[1] != config.input_channels:
        raise ShapeMismatchError(
            f"expected {config.input_channels} input channels, "
            f"got {features.data.shape[1]}"
        )
    f = _Forward(state, tape, mode)
    x = f.transition("stem", features)
    gi = 0
    for _, b, r in config.narrow_groups():
        x = f.group(gi, r, x)
        gi += 1
    snapshot = x
    wide_groups = config.wide_groups()
    ti = 0
    for pos, (_, b, r) in enumerate(wide_groups):
        if pos == 0:
            x = f.transition(f"t{ti}", x)
            ti += 1
        elif pos < len(wide_groups) - 1:
            x = f.transition(f"t{ti}", x)
            x = concat_channels(tape, x, snapshot)
            ti += 1
        x = f.group(gi, r, x)
        gi += 1
    x = f.transition(f"t{ti}", x)
    x = f.transition(f"t{ti + 1}", x)
    return x


def forward_logits(
    state: ModelState, tape: Tape, features: Tensor, mode: str = "train"
) -> Tensor:
    """Task head on top of the backbone.

    Classification pools vertices first and returns (1, K); segmentation
    maps every vertex embedding and returns (n, K).
    """
    x = backbone(state, tape, features, mode)
    f = _Forward(state, tape, mode)
    if state.config.task == "classification":
        return f.fc("head.fc", mean_pool_rows(tape, x))
    return f.fc("head.fc", x)


def face_label_vote(vertex_logits: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Per-face labels from per-vertex logits.

    Each face averages the softmax of its three corners and takes the
    argmax; exact ties resolve to the smallest class id through
    argmax's first-hit rule.
    """
    logits = np.asarray(vertex_logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    face_probs = probs[faces].mean(axis=1)
    return np.argmax(face_probs, axis=1).astype(np.int64)
