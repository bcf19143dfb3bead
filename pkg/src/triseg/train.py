"""Per-axis training: foreground-biased slice sampling, rotation/scale
augmentation, weighted cross-entropy, SGD under the poly schedule."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .inference import pad_to_multiple
from .optim import SGD, PolySchedule, cross_entropy_pixelwise, poly_lr
from .preprocess import AugmentSpec, nearest_resize, random_rotation, sample_scale
from .tensor import NonFiniteError, Tensor, bilinear_resize
from .volume import Axis, extract_slices

DEFAULT_CHECKPOINTS = {
    "coronal": "checkpoints/coronal.ckpt",
    "sagittal": "checkpoints/sagittal.ckpt",
    "axial": "checkpoints/axial.ckpt",
}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    max_iter: int = 2000
    base_lr: float = 0.05
    power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 1e-4
    class_weights: tuple[float, float] = (1.0, 3.0)
    fg_slice_prob: float = 0.7
    seed: int = 0
    checkpoints: dict = field(default_factory=lambda: dict(DEFAULT_CHECKPOINTS))

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.base_lr <= 0 or self.power <= 0:
            raise ValueError("base_lr and power must be positive")
        if not 0.0 <= self.fg_slice_prob <= 1.0:
            raise ValueError("fg_slice_prob must lie in [0, 1]")
        if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
            raise ValueError("class_weights must be two positive reals")
        if set(self.checkpoints) != set(DEFAULT_CHECKPOINTS):
            raise ValueError("checkpoints must map exactly the three axis names")


class SliceDataset:
    """All slices of one view across the training cases, with an index of
    slices that contain foreground."""

    def __init__(self, volumes: list[np.ndarray], masks: list[np.ndarray], axis: Axis):
        if not volumes or len(volumes) != len(masks):
            raise ValueError("need matching, non-empty volume and mask lists")
        self.axis = axis
        self.images = [extract_slices(v, axis).astype(np.float32) for v in volumes]
        self.masks = [extract_slices(m, axis).astype(np.uint8) for m in masks]
        shape = self.images[0].shape[1:]
        for img, msk in zip(self.images, self.masks):
            if img.shape != msk.shape or img.shape[1:] != shape:
                raise ValueError("all cases must share slice dimensions")
        self.slice_shape = shape
        self.all_index = [(c, i) for c, img in enumerate(self.images) for i in range(img.shape[0])]
        self.fg_index = [(c, i) for c, msk in enumerate(self.masks)
                         for i in range(msk.shape[0]) if msk[i].any()]
        if not self.fg_index:
            raise ValueError(f"no {axis.value} slice contains foreground; nothing to learn")

    def sample_pair(self, rng: np.random.Generator, fg_prob: float):
        pool = self.fg_index if rng.random() < fg_prob else self.all_index
        c, i = pool[int(rng.integers(len(pool)))]
        return self.images[c][i], self.masks[c][i]


def sample_batch(dataset: SliceDataset, cfg: TrainConfig, aug: AugmentSpec,
                 rng: np.random.Generator, stride: int):
    """One augmented batch: rotate each slice, then resize the whole batch by
    a single scale drawn from the training scale set."""
    scale = sample_scale(aug, rng)
    h, w = dataset.slice_shape
    oh = max(1, int(round(h * scale)))
    ow = max(1, int(round(w * scale)))
    images, labels = [], []
    for _ in range(cfg.batch_size):
        img, msk = dataset.sample_pair(rng, cfg.fg_slice_prob)
        img, msk, _ = random_rotation(img, msk, aug, rng)
        images.append(img)
        labels.append(nearest_resize(msk, oh, ow))
    stacked = np.stack(images)[:, None]
    resized = bilinear_resize(Tensor(stacked), oh, ow).data
    batch, _ = pad_to_multiple(resized, stride, "reflect")
    targets, _ = pad_to_multiple(np.stack(labels).astype(np.int64), stride, "zero")
    return batch, targets, scale


def train_axis_model(model, dataset: SliceDataset, cfg: TrainConfig,
                     aug: AugmentSpec) -> list[dict]:
    """Run the training loop; returns one log row per iteration."""
    rng = np.random.default_rng([cfg.seed, _axis_ordinal(dataset.axis)])
    optimizer = SGD(model.parameters().values(), momentum=cfg.momentum,
                    weight_decay=cfg.weight_decay)
    rows: list[dict] = []
    if cfg.max_iter == 0:
        return rows
    schedule = PolySchedule(base_lr=cfg.base_lr, power=cfg.power, max_iter=cfg.max_iter)
    for iteration in range(cfg.max_iter):
        batch, targets, _ = sample_batch(dataset, cfg, aug, rng, model.output_stride)
        lr = poly_lr(schedule, iteration)
        try:
            optimizer.zero_grad()
            loss = cross_entropy_pixelwise(model.forward(batch, mode="train"),
                                           targets, cfg.class_weights)
            loss.backward()
            optimizer.step(lr)
        except NonFiniteError as exc:
            raise NonFiniteError(f"training aborted at iteration {iteration}: {exc}") from exc
        rows.append({"iteration": iteration, "loss": float(loss.data.reshape(-1)[0]), "lr": lr})
    return rows


def _axis_ordinal(axis: Axis) -> int:
    return {"coronal": 0, "sagittal": 1, "axial": 2}[axis.value]


def write_train_log(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["iteration", "loss", "lr"])
        writer.writeheader()
        for row in rows:
            writer.writerow({"iteration": row["iteration"],
                             "loss": f"{row['loss']:.17g}", "lr": f"{row['lr']:.17g}"})


def moving_average(values, window: int = 10) -> np.ndarray:
    vals = np.asarray(values, dtype=np.float64)
    if len(vals) < window:
        raise ValueError(f"need at least {window} values")
    kernel = np.ones(window) / window
    return np.convolve(vals, kernel, mode="valid")
