"""Adam with gradient accumulation over single-mesh batches.

Meshes differ in vertex count, so samples cannot be stacked into one
tensor; instead each sample's backward pass adds into the parameter
gradients and an optimizer step fires once enough samples have
contributed. Averaging happens at step time by rescaling the summed
gradients, which keeps a B-sample accumulated step identical to a
true B-sample batch.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .autodiff import Parameter

ADAM_DEFAULTS = dict(lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-4)


def adam_step(
    parameters: Iterable[Parameter],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-4,
) -> None:
    """One bias-corrected Adam update; consumed gradients are cleared.

    Weight decay enters as an L2 term on the gradient. Parameters whose
    gradient is None are skipped, so frozen or unused parameters cost
    nothing.
    """
    for p in parameters:
        if p.grad is None:
            continue
        g = p.grad
        if weight_decay:
            g = g + weight_decay * p.data
        p.step_count += 1
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1**p.step_count)
        v_hat = p.adam_v / (1.0 - beta2**p.step_count)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def accumulate_then_step(
    closures: Iterable[Callable[[], float]],
    parameters: list[Parameter],
    accumulation: int,
    **adam_kwargs,
) -> tuple[list[float], int]:
    """Run per-sample loss closures, stepping after every `accumulation`.

    Each closure performs its own forward and backward pass, adding
    into the parameter gradients, and returns the sample loss. Before a
    step the summed gradients are scaled by 1/count; a trailing
    remainder smaller than `accumulation` scales by the actual count so
    the final step is still a proper mean.

    Returns (losses, number of optimizer steps).
    """
    if accumulation < 1:
        raise ValueError(f"accumulation must be >= 1, got {accumulation}")
    losses: list[float] = []
    pending = 0
    steps = 0

    def flush():
        nonlocal pending, steps
        scale = 1.0 / pending
        for p in parameters:
            if p.grad is not None:
                p.grad *= scale
        adam_step(parameters, **adam_kwargs)
        pending = 0
        steps += 1

    for closure in closures:
        losses.append(float(closure()))
        pending += 1
        if pending == accumulation:
            flush()
    if pending:
        flush()
    return losses, steps
