"""Reverse-mode automatic differentiation on dense 2-D arrays.

The whole network is expressible with a dozen operations on (rows,
channels) matrices, so this engine stays deliberately small: a Tensor
wraps a numpy array and its gradient, a Tape records one closure per
operation, and backward replays the closures in reverse. Gradients
accumulate additively, which makes fan-out (the same tensor consumed
twice) correct for free.

Training runs in float32; gradient verification builds the same graph
in float64, where central differences are trustworthy to ~1e-9.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    InvalidGroupCountError,
    InvalidTargetError,
    ShapeMismatchError,
)

EPS_NORM = 1e-5
NORM_KINDS = ("ln", "bn", "gn", "in", "grn")
BN_MOMENTUM = 0.9


class Tensor:
    """A 2-D float array plus the gradient accumulated for it."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """Trainable tensor with persistent Adam state.

    The gradient survives across samples until the optimizer consumes
    it, which is what gradient accumulation relies on.
    """

    __slots__ = ("name", "adam_m", "adam_v", "step_count")

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, dtype)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0


class Tape:
    """Ordered record of differentiable operations.

    backward seeds the loss gradient with one and replays the recorded
    closures last-to-first. A tape is built fresh for every forward
    pass; nothing is retained between samples.
    """

    __slots__ = ("_records",)

    def __init__(self):
        self._records: list = []

    def _push(self, closure) -> None:
        self._records.append(closure)

    def backward(self, loss: Tensor) -> None:
        if loss.data.shape != (1, 1):
            raise ShapeMismatchError(
                f"backward starts from a scalar (1, 1) tensor, got {loss.data.shape}"
            )
        loss.grad = np.ones_like(loss.data)
        for closure in reversed(self._records):
            closure()


def _accumulate(t: Tensor, delta: np.ndarray) -> None:
    if t.grad is None:
        t.grad = delta.astype(t.data.dtype, copy=True)
    else:
        t.grad += delta


def affine(tape: Tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ W + b with W (in, out) and b (1, out)."""
    if x.data.shape[1] != w.data.shape[0] or b.data.shape != (1, w.data.shape[1]):
        raise ShapeMismatchError(
            f"affine shapes x{x.data.shape} W{w.data.shape} b{b.data.shape}"
        )
    out = Tensor(x.data @ w.data + b.data)

    def backward():
        if out.grad is None:
            return
        _accumulate(x, out.grad @ w.data.T)
        _accumulate(w, x.data.T @ out.grad)
        _accumulate(b, out.grad.sum(axis=0, keepdims=True))

    tape._push(backward)
    return out


def relu(tape: Tape, x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0))

    def backward():
        if out.grad is None:
            return
        _accumulate(x, np.where(mask, out.grad, 0))

    tape._push(backward)
    return out


def add(tape: Tape, x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ShapeMismatchError(f"add shapes {x.data.shape} vs {y.data.shape}")
    out = Tensor(x.data + y.data)

    def backward():
        if out.grad is None:
            return
        _accumulate(x, out.grad)
        _accumulate(y, out.grad)

    tape._push(backward)
    return out


def concat_channels(tape: Tape, x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape[0] != y.data.shape[0]:
        raise ShapeMismatchError(
            f"concat rows differ: {x.data.shape[0]} vs {y.data.shape[0]}"
        )
    split = x.data.shape[1]
    out = Tensor(np.concatenate([x.data, y.data], axis=1))

    def backward():
        if out.grad is None:
            return
        _accumulate(x, out.grad[:, :split])
        _accumulate(y, out.grad[:, split:])

    tape._push(backward)
    return out


def mean_pool_rows(tape: Tape, x: Tensor) -> Tensor:
    """Average over rows: (n, c) -> (1, c)."""
    n = x.data.shape[0]
    out = Tensor(x.data.mean(axis=0, keepdims=True))

    def backward():
        if out.grad is None:
            return
        _accumulate(x, np.broadcast_to(out.grad / n, x.data.shape))

    tape._push(backward)
    return out


def softmax_cross_entropy(tape: Tape, logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy over rows, computed via the max-subtraction trick.

    targets is an integer array of shape (n,), one class id per row.
    Uniform logits give exactly ln(num_classes).
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.data.shape
    if targets.shape[0] != n:
        raise ShapeMismatchError(f"{targets.shape[0]} targets for {n} rows")
    if targets.min() < 0 or targets.max() >= k:
        raise InvalidTargetError(
            f"targets must lie in [0, {k}), got range "
            f"[{targets.min()}, {targets.max()}]"
        )
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss_value = -log_probs[np.arange(n), targets].mean()
    out = Tensor(np.array([[loss_value]], dtype=logits.data.dtype))

    def backward():
        if out.grad is None:
            return
        grad = np.exp(log_probs)
        grad[np.arange(n), targets] -= 1.0
        _accumulate(logits, grad * (out.grad[0, 0] / n))

    tape._push(backward)
    return out


# ---------------------------------------------------------------------------
# normalization layers
#
# All five share the epsilon and the (1, c) gain/shift convention. The
# reductions differ: LN over channels per row, BN/IN over rows per
# channel, GN over channel groups per row, GRN over a global response
# norm. Backward formulas are the classic whitening gradients written
# against population variance.


def _whiten_backward(dy_hat, x_hat, inv_std, axis):
    correction = dy_hat.mean(axis=axis, keepdims=True)
    projection = (dy_hat * x_hat).mean(axis=axis, keepdims=True)
    return (dy_hat - correction - x_hat * projection) * inv_std


def layer_norm(tape: Tape, x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Normalize each row over its channels."""
    _check_norm_shapes("layer_norm", x, gamma, beta)
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + EPS_NORM)
    x_hat = (x.data - mu) * inv_std
    out = Tensor(x_hat * gamma.data + beta.data)

    def backward():
        if out.grad is None:
            return
        _accumulate(gamma, (out.grad * x_hat).sum(axis=0, keepdims=True))
        _accumulate(beta, out.grad.sum(axis=0, keepdims=True))
        _accumulate(x, _whiten_backward(out.grad * gamma.data, x_hat, inv_std, axis=1))

    tape._push(backward)
    return out


def batch_norm(
    tape: Tape,
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: dict,
    mode: str = "train",
) -> Tensor:
    """Normalize each channel over the rows of the batch.

    Rows are the vertices of a single mesh here, so "batch" statistics
    are really per-mesh statistics. Training updates the running mean
    and variance in state; evaluation freezes them and the gradient no
    longer flows through the statistics.
    """
    _check_norm_shapes("batch_norm", x, gamma, beta)
    if state is None or "mean" not in state or "var" not in state:
        raise ValueError("batch_norm needs a state dict with running mean and var")
    if mode == "train":
        mu = x.data.mean(axis=0, keepdims=True)
        var = x.data.var(axis=0, keepdims=True)
        state["mean"] = BN_MOMENTUM * state["mean"] + (1.0 - BN_MOMENTUM) * mu
        state["var"] = BN_MOMENTUM * state["var"] + (1.0 - BN_MOMENTUM) * var
        inv_std = 1.0 / np.sqrt(var + EPS_NORM)
        x_hat = (x.data - mu) * inv_std
        out = Tensor(x_hat * gamma.data + beta.data)

        def backward():
            if out.grad is None:
                return
            _accumulate(gamma, (out.grad * x_hat).sum(axis=0, keepdims=True))
            _accumulate(beta, out.grad.sum(axis=0, keepdims=True))
            _accumulate(
                x, _whiten_backward(out.grad * gamma.data, x_hat, inv_std, axis=0)
            )

    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(state["var"] + EPS_NORM)
        x_hat = (x.data - state["mean"]) * inv_std
        out = Tensor(x_hat * gamma.data + beta.data)

        def backward():
            if out.grad is None:
                return
            _accumulate(gamma, (out.grad * x_hat).sum(axis=0, keepdims=True))
            _accumulate(beta, out.grad.sum(axis=0, keepdims=True))
            _accumulate(x, out.grad * gamma.data * inv_std)

    else:
        raise ValueError(f"unknown mode {mode!r}")
    tape._push(backward)
    return out


def instance_norm(tape: Tape, x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Per-channel normalization over the current rows, no running state.

    With one mesh per batch this is batch_norm's training statistics
    applied unconditionally, which is exactly the intent: each mesh is
    its own instance.
    """
    _check_norm_shapes("instance_norm", x, gamma, beta)
    mu = x.data.mean(axis=0, keepdims=True)
    var = x.data.var(axis=0, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + EPS_NORM)
    x_hat = (x.data - mu) * inv_std
    out = Tensor(x_hat * gamma.data + beta.data)

    def backward():
        if out.grad is None:
            return
        _accumulate(gamma, (out.grad * x_hat).sum(axis=0, keepdims=True))
        _accumulate(beta, out.grad.sum(axis=0, keepdims=True))
        _accumulate(x, _whiten_backward(out.grad * gamma.data, x_hat, inv_std, axis=0))

    tape._push(backward)
    return out


def group_norm(
    tape: Tape, x: Tensor, gamma: Tensor, beta: Tensor, groups: int = 8
) -> Tensor:
    """Normalize each row over contiguous channel groups."""
    _check_norm_shapes("group_norm", x, gamma, beta)
    n, c = x.data.shape
    if c % groups != 0:
        raise InvalidGroupCountError(f"{c} channels not divisible by {groups} groups")
    xg = x.data.reshape(n, groups, c // groups)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + EPS_NORM)
    x_hat = ((xg - mu) * inv_std).reshape(n, c)
    out = Tensor(x_hat * gamma.data + beta.data)

    def backward():
        if out.grad is None:
            return
        _accumulate(gamma, (out.grad * x_hat).sum(axis=0, keepdims=True))
        _accumulate(beta, out.grad.sum(axis=0, keepdims=True))
        dy_hat = (out.grad * gamma.data).reshape(n, groups, c // groups)
        dx = _whiten_backward(dy_hat, x_hat.reshape(n, groups, c // groups), inv_std, axis=2)
        _accumulate(x, dx.reshape(n, c))

    tape._push(backward)
    return out


def global_response_norm(tape: Tape, x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """y = gamma * (x * g / mean(g)) + beta + x with g the per-channel L2 norm.

    The response norm g is taken over rows; dividing by its mean makes
    the layer calibrate channels against each other. The built-in skip
    keeps it usable as a drop-in normalization.
    """
    _check_norm_shapes("global_response_norm", x, gamma, beta)
    n, c = x.data.shape
    g = np.sqrt((x.data**2).sum(axis=0, keepdims=True))
    m = g.mean() + EPS_NORM
    ratio = g / m
    scaled = x.data * ratio
    out = Tensor(gamma.data * scaled + beta.data + x.data)

    def backward():
        if out.grad is None:
            return
        _accumulate(gamma, (out.grad * scaled).sum(axis=0, keepdims=True))
        _accumulate(beta, out.grad.sum(axis=0, keepdims=True))
        du = out.grad * gamma.data
        dratio = (du * x.data).sum(axis=0, keepdims=True)
        # ratio_j = g_j / m where m averages every channel's response
        dg = dratio / m - (dratio * g).sum() / (c * m * m)
        g_safe = np.where(g > 0, g, 1.0)
        _accumulate(x, out.grad + du * ratio + x.data * (dg / g_safe))

    tape._push(backward)
    return out


def _check_norm_shapes(name: str, x: Tensor, gamma: Tensor, beta: Tensor) -> None:
    c = x.data.shape[1]
    if gamma.data.shape != (1, c) or beta.data.shape != (1, c):
        raise ShapeMismatchError(
            f"{name} expects gain and shift of shape (1, {c}), got "
            f"{gamma.data.shape} and {beta.data.shape}"
        )


def norm_layer(
    tape: Tape,
    x: Tensor,
    kind: str,
    gamma: Tensor,
    beta: Tensor,
    *,
    mode: str = "train",
    state: dict | None = None,
    groups: int = 8,
) -> Tensor:
    """Dispatch to one of the five normalization kinds by short name."""
    if kind == "ln":
        return layer_norm(tape, x, gamma, beta)
    if kind == "bn":
        return batch_norm(tape, x, gamma, beta, state, mode)
    if kind == "in":
        return instance_norm(tape, x, gamma, beta)
    if kind == "gn":
        return group_norm(tape, x, gamma, beta, groups)
    if kind == "grn":
        return global_response_norm(tape, x, gamma, beta)
    raise ValueError(f"unknown norm kind {kind!r}, expected one of {NORM_KINDS}")


def finite_difference_check(
    build_loss,
    wrt: list[Tensor],
    rng: np.random.Generator | None = None,
    coords_per_tensor: int = 8,
    step: float = 1e-5,
) -> dict:
    """Compare tape gradients against central differences.

    build_loss rebuilds the forward pass from the current tensor values
    and returns (loss, tape); it must reference the exact Tensor objects
    listed in wrt. A random subset of coordinates per tensor is probed.
    Run the graph in float64 or the differences drown in rounding.

    Returns {"max_rel_error", "n_checked"}; coordinates where both the
    analytic and numeric values are below 1e-7 count as exact.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    loss, tape = build_loss()
    for t in wrt:
        t.grad = None
    tape.backward(loss)
    analytic = [None if t.grad is None else t.grad.copy() for t in wrt]

    max_rel = 0.0
    checked = 0
    for t, a in zip(wrt, analytic):
        size = t.data.size
        picks = rng.choice(size, size=min(coords_per_tensor, size), replace=False)
        for flat in picks:
            idx = np.unravel_index(flat, t.data.shape)
            center = t.data[idx]
            h = step * max(1.0, abs(float(center)))
            t.data[idx] = center + h
            up = float(build_loss()[0].data[0, 0])
            t.data[idx] = center - h
            down = float(build_loss()[0].data[0, 0])
            t.data[idx] = center
            numeric = (up - down) / (2.0 * h)
            exact = 0.0 if a is None else float(a[idx])
            magnitude = max(abs(exact), abs(numeric))
            if magnitude >= 1e-7:
                max_rel = max(max_rel, abs(exact - numeric) / magnitude)
            checked += 1
    return {"max_rel_error": max_rel, "n_checked": checked}
