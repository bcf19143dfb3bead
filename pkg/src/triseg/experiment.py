"""End-to-end seeded experiment: generate a phantom dataset, train one model
per view, evaluate multi-scale / multi-view fusion on the held-out cases, and
write deterministic artifacts (checkpoints, masks, CSV/JSON reports).

The attention ablation needs no second training: zeroing the attention
output projection turns the block into an exact identity, so the same
checkpoints are scored once as trained and once with attention bypassed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import RunConfig, run_config_to_dict, save_run_config
from .inference import binarize, fuse_probabilities, view_scale_probabilities
from .metrics import config_fingerprint, evaluate_set, write_report_csv, write_report_json
from .model import SegmentationModel, load_model
from .mvol import read_mvol, write_mvol
from .phantom import generate_phantom
from .preprocess import hu_window_normalize
from .train import SliceDataset, train_axis_model, write_train_log
from .volume import ALL_AXES, Axis, majority_vote, restack

FUSED = "fused"
FUSED_NO_ATTENTION = "fused_no_attention"


def case_file_names(seed: int) -> tuple[str, str]:
    return f"volume_{seed}.mvol", f"mask_{seed}.mvol"


def generate_dataset(cfg: RunConfig, out_dir) -> dict:
    """Write volume/mask MVOL pairs for every configured seed plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = []
    for split, seeds in (("train", cfg.dataset.train_list()), ("test", cfg.dataset.test_list())):
        for seed in seeds:
            volume, mask = generate_phantom(cfg.phantom, seed)
            vol_name, mask_name = case_file_names(seed)
            write_mvol(out / vol_name, volume)
            write_mvol(out / mask_name, mask)
            cases.append({"seed": seed, "split": split, "volume": vol_name, "mask": mask_name})
    manifest = {"schema_version": 1, "cases": cases,
                "n_train": len(cfg.dataset.train_list()), "n_test": len(cfg.dataset.test_list())}
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_split(data_dir, seeds: list[int]) -> list[tuple[int, np.ndarray, np.ndarray]]:
    data = Path(data_dir)
    cases = []
    for seed in seeds:
        vol_name, mask_name = case_file_names(seed)
        cases.append((seed, read_mvol(data / vol_name), read_mvol(data / mask_name)))
    return cases


def train_view(cfg: RunConfig, axis: Axis, train_cases, checkpoint_path, log_path) -> list[dict]:
    """Train the model for one view and persist checkpoint + CSV log."""
    volumes = [hu_window_normalize(v, cfg.window) for _, v, _ in train_cases]
    masks = [m for _, _, m in train_cases]
    dataset = SliceDataset(volumes, masks, axis)
    model = SegmentationModel(cfg.model_config(), seed=cfg.model.init_seed)
    rows = train_axis_model(model, dataset, cfg.train, cfg.augment)
    Path(checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
    arch = {**model.arch_descriptor(), "axis": axis.value}
    ckpt.save_checkpoint(checkpoint_path, arch, model.state_arrays())
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        write_train_log(rows, log_path)
    return rows


def load_view_models(checkpoint_dir, cfg: RunConfig) -> dict[Axis, SegmentationModel]:
    models = {}
    for axis in ALL_AXES:
        path = Path(checkpoint_dir) / cfg.train.checkpoints[axis.value]
        arch, _ = ckpt.load_checkpoint(path)
        recorded = arch.get("axis")
        if recorded != axis.value:
            raise ValueError(f"{path}: checkpoint was trained for axis {recorded!r}, "
                             f"expected {axis.value!r}")
        models[axis] = load_model(path)
    return models


class _AttentionBypass:
    """Temporarily zero every attention projection, restoring on exit."""

    def __init__(self, models):
        self.kernels = [m.attention.w.kernel.data for m in models if m.attention is not None]

    def __enter__(self):
        self.saved = [k.copy() for k in self.kernels]
        for k in self.kernels:
            k[...] = 0
        return self

    def __exit__(self, *exc):
        for k, saved in zip(self.kernels, self.saved):
            k[...] = saved
        return False


def predict_case(models: dict[Axis, SegmentationModel], volume_norm: np.ndarray,
                 cfg: RunConfig) -> dict[str, np.ndarray]:
    """All mask variants for one normalized volume from a single forward sweep
    per axis/scale: the fused mask plus one mask per single training scale."""
    scales = cfg.inference.scales
    per_axis: dict[Axis, dict[float, np.ndarray]] = {
        axis: view_scale_probabilities(models[axis], volume_norm, axis, cfg.inference)
        for axis in ALL_AXES
    }
    variants: dict[str, np.ndarray] = {}
    for name, chosen in [(FUSED, scales)] + [(f"scale_{s:g}", (s,)) for s in scales]:
        views = []
        for axis in ALL_AXES:
            fused = fuse_probabilities([per_axis[axis][s] for s in chosen])
            views.append(restack(binarize(fused, cfg.inference.rho), axis))
        variants[name] = majority_vote(*views)
    return variants


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def evaluate_test_set(cfg: RunConfig, models: dict[Axis, SegmentationModel], test_cases,
                      out_dir) -> dict:
    """Score every variant on the held-out cases; write predictions + reports."""
    out = Path(out_dir)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(parents=True, exist_ok=True)

    collected: dict[str, list] = {}
    for seed, volume, mask in test_cases:
        norm = hu_window_normalize(volume, cfg.window)
        variants = predict_case(models, norm, cfg)
        with _AttentionBypass(models.values()):
            bypassed = predict_case(models, norm, cfg)
        variants[FUSED_NO_ATTENTION] = bypassed[FUSED]
        write_mvol(out / "predictions" / f"pred_{seed}.mvol", variants[FUSED])
        for name, pred in variants.items():
            collected.setdefault(name, []).append((pred, mask, seed))

    fingerprint = config_fingerprint(
        run_config_to_dict(cfg)["inference"],
        *(models[axis].arch_descriptor() for axis in ALL_AXES),
    )
    summary: dict = {"variants": {}}
    for name, cases in collected.items():
        report = evaluate_set(cases, fingerprint=fingerprint)
        write_report_csv(report, out / "reports" / f"eval_{name}.csv")
        write_report_json(report, out / "reports" / f"eval_{name}.json")
        summary["variants"][name] = report.mean_dsc

    single = {k: v for k, v in summary["variants"].items() if k.startswith("scale_")}
    fused = summary["variants"][FUSED]
    no_attn = summary["variants"][FUSED_NO_ATTENTION]
    summary.update({
        "mean_fused_dsc": fused,
        "best_single_scale": max(single, key=single.get),
        "best_single_scale_dsc": max(single.values()),
        "mean_fused_no_attention_dsc": no_attn,
        "trend_multiscale_ok": bool(fused >= max(single.values()) - 0.01),
        "trend_attention_ok": bool(fused >= no_attn - 0.01),
    })
    return summary


def run_experiment(cfg: RunConfig, out_dir) -> dict:
    """The full seeded pipeline; every artifact lands under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_run_config(cfg, out / "config.json")

    generate_dataset(cfg, out / "data")
    train_cases = load_split(out / "data", cfg.dataset.train_list())
    test_cases = load_split(out / "data", cfg.dataset.test_list())

    training = {}
    for axis in ALL_AXES:
        rows = train_view(cfg, axis, train_cases,
                          out / cfg.train.checkpoints[axis.value],
                          out / "logs" / f"train_{axis.value}.csv")
        losses = [r["loss"] for r in rows]
        training[axis.value] = {
            "iterations": len(rows),
            "first_loss": losses[0] if losses else None,
            "last_loss": losses[-1] if losses else None,
        }

    models = load_view_models(out, cfg)
    summary = evaluate_test_set(cfg, models, test_cases, out)
    summary["training"] = training
    summary["checkpoint_sha256"] = {
        axis.value: _file_sha256(out / cfg.train.checkpoints[axis.value]) for axis in ALL_AXES
    }
    with open(out / "reports" / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


def desk_run_config() -> RunConfig:
    """The desk-scale configuration used by the seeded acceptance experiment:
    64-cubed phantoms, a slim encoder, and ASPP rates shrunk to fit the
    stride-8 feature maps of 80-112 pixel inputs."""
    from .model import AsppConfig, BackboneConfig

    base = RunConfig()
    return replace(
        base,
        backbone=BackboneConfig(stage_channels=(8, 16, 32, 64), blocks_per_stage=(1, 1, 1, 1)),
        aspp=AsppConfig(rates=(2, 4, 6), branch_channels=32),
    )
