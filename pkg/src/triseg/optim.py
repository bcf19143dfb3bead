"""Training-side pieces: pixelwise cross-entropy, poly LR schedule, SGD with
momentum, and a central finite-difference gradient checker."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor

log = logging.getLogger(__name__)


def cross_entropy_pixelwise(
    logits: Tensor,
    target: np.ndarray,
    class_weights: Sequence[float] = (1.0, 1.0),
) -> Tensor:
    """Mean over pixels of ``-w[y] * log softmax(logits)[y]`` for binary labels.

    ``logits`` is (n, 2, h, w); ``target`` is (n, h, w) with values in {0, 1}.
    Log-sum-exp is stabilized, so the loss is finite for any finite logits.
    """
    if logits.data.ndim != 4 or logits.data.shape[1] != 2:
        raise ValueError(f"logits must be (n, 2, h, w), got {logits.data.shape}")
    target = np.asarray(target)
    n, _, h, w = logits.data.shape
    if target.shape != (n, h, w):
        raise ValueError(f"target shape {target.shape} does not match logits {logits.data.shape}")
    labels = target.astype(np.int64)
    if not np.array_equal(np.asarray(target, dtype=np.float64), labels) or \
            labels.min() < 0 or labels.max() > 1:
        raise ValueError("target labels must be binary {0, 1}")
    weights = np.asarray(class_weights, dtype=logits.data.dtype)
    if weights.shape != (2,):
        raise ValueError(f"class_weights must be two values, got {class_weights!r}")

    z = logits.data
    m = z.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, labels[:, None], axis=1)[:, 0]
    wmap = weights[labels]
    count = labels.size
    loss_val = (-(wmap * picked).sum(dtype=np.float64) / count)
    out_data = np.asarray(loss_val, dtype=logits.data.dtype).reshape(1, 1, 1, 1)

    def backward(g):
        if not logits.requires_grad:
            return
        softmax = np.exp(logp)
        grad = softmax * wmap[:, None]
        np.put_along_axis(
            grad, labels[:, None],
            np.take_along_axis(grad, labels[:, None], axis=1) - wmap[:, None],
            axis=1,
        )
        logits._accumulate(grad * (float(g.reshape(())) / count))

    return Tensor._from_op(out_data, (logits,), backward, "cross-entropy loss")


@dataclass(frozen=True)
class PolySchedule:
    """lr(iter) = base_lr * (1 - iter/max_iter) ** power."""

    base_lr: float = 0.05
    power: float = 0.9
    max_iter: int = 1

    def __post_init__(self):
        if self.base_lr < 0 or self.power <= 0 or self.max_iter < 1:
            raise ValueError(f"invalid schedule {self}")


def poly_lr(schedule: PolySchedule, iteration: int) -> float:
    if not 0 <= iteration <= schedule.max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {schedule.max_iter}]")
    return schedule.base_lr * (1.0 - iteration / schedule.max_iter) ** schedule.power


class SGD:
    """SGD with momentum and decoupled-from-nothing classic weight decay:

    v <- momentum * v + grad + weight_decay * param
    param <- param - lr * v
    """

    def __init__(self, params: Iterable[Tensor], momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = [p for p in params if p.requires_grad]
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float) -> None:
        if lr < 0:
            raise ValueError(f"lr must be >= 0, got {lr}")
        for p, v in zip(self.params, self._velocity):
            grad = collect_gradient(p)
            sgd_step_inplace(p.data, grad, v, lr, self.momentum, self.weight_decay)


def collect_gradient(param: Tensor) -> np.ndarray:
    """Gradient of a parameter after backward(); zeros (with a warning) if the
    parameter never reached the loss."""
    if param.grad is None:
        log.warning("parameter %r is detached from the loss graph; using zero gradient",
                    param.name or param)
        return np.zeros_like(param.data)
    if param.grad.shape != param.data.shape:
        raise ValueError(f"gradient shape {param.grad.shape} != param shape {param.data.shape}")
    return param.grad


def sgd_step_inplace(
    param: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    if grad.shape != param.shape or velocity.shape != param.shape:
        raise ValueError("sgd_step: param/grad/velocity shapes must agree")
    velocity *= momentum
    velocity += grad
    if weight_decay:
        velocity += weight_decay * param
    param -= param.dtype.type(lr) * velocity


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-6,
    max_coords_per_param: int = 24,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` rebuilds the graph and returns the scalar loss; the analytic
    gradient comes from one backward pass, the numerical one from
    ``(f(x + h') - f(x - h')) / 2h'`` with ``h' = h * max(1, |x|)`` per
    coordinate. Relative error uses ``max(1, |analytic|, |numeric|)`` as the
    denominator. float32 parameters are rejected: the difference quotient
    would be all roundoff.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise TypeError("grad_check requires float64 parameters")
    rng = rng or np.random.default_rng(0)

    for p in params:
        p.grad = None
    loss = loss_fn()
    if loss.data.dtype != np.float64:
        raise TypeError("grad_check requires a float64 graph")
    loss.backward()
    analytic = [collect_gradient(p).copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        size = p.data.size
        if size <= max_coords_per_param:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords_per_param, replace=False)
        flat = p.data.reshape(-1)
        for idx in coords:
            orig = flat[idx]
            step = h * max(1.0, abs(orig))
            flat[idx] = orig + step
            f_plus = float(loss_fn().data.reshape(()))
            flat[idx] = orig - step
            f_minus = float(loss_fn().data.reshape(()))
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(ga.reshape(-1)[idx])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    if not math.isfinite(worst):
        raise NonFiniteError("gradient check produced a non-finite error")
    return worst
