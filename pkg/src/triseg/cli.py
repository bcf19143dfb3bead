"""Command-line surface: phantom generation, per-view training, multi-view
inference, evaluation, and the built-in self-test.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import RunConfig, load_run_config, save_run_config
from .experiment import generate_dataset, load_split, load_view_models, train_view
from .inference import infer_view
from .metrics import config_fingerprint, evaluate_set, write_report_csv, write_report_json
from .model import load_model
from .mvol import MvolError, read_mvol, write_mvol
from .preprocess import hu_window_normalize
from .selftest import run_selftest
from .tensor import NonFiniteError
from .volume import ALL_AXES, Axis, majority_vote

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (FileNotFoundError, NotADirectoryError, IsADirectoryError, PermissionError,
                MvolError, ckpt.CheckpointError, ValueError, RuntimeError, KeyError, OSError)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; the contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _thread_limits(args):
    """Cap BLAS worker threads; --deterministic forces a single thread so
    reduction order cannot vary between runs."""
    limit = 1 if args.deterministic else args.threads
    if limit is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - depends on environment
        print("warning: threadpoolctl unavailable, thread cap not enforced", file=sys.stderr)
        return contextlib.nullcontext()
    return threadpool_limits(limits=limit)


def _load_config(args) -> RunConfig:
    if args.config is None:
        return RunConfig()
    return load_run_config(args.config)


def _echo_config(cfg: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    save_run_config(cfg, out_dir / "config.json")


def cmd_gen_phantom(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    manifest = generate_dataset(cfg, out)
    _echo_config(cfg, out)
    print(f"wrote {2 * len(manifest['cases'])} mvol files "
          f"({manifest['n_train']} train / {manifest['n_test']} test cases) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    axis = Axis.from_name(args.axis)
    out = Path(args.out)
    data_dir = Path(args.data) if args.data else Path(cfg.dataset.data_dir)
    train_cases = load_split(data_dir, cfg.dataset.train_list())
    ckpt_path = out / cfg.train.checkpoints[axis.value]
    log_path = out / f"train_{axis.value}.csv"
    rows = train_view(cfg, axis, train_cases, ckpt_path, log_path)
    _echo_config(cfg, out)
    last = f", final loss {rows[-1]['loss']:.4f}" if rows else ""
    print(f"trained {axis.value} model for {len(rows)} iterations{last}; "
          f"checkpoint at {ckpt_path}")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    volume = read_mvol(args.volume)
    if volume.dtype != np.float32:
        raise ValueError(f"{args.volume}: expected an intensity volume, got a mask")
    norm = hu_window_normalize(volume, cfg.window)
    ckpt_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else Path(".")

    if args.single_axis:
        axis = Axis.from_name(args.axis)
        path = ckpt_dir / cfg.train.checkpoints[axis.value]
        arch, _ = ckpt.load_checkpoint(path)
        if arch.get("axis") != axis.value:
            raise ValueError(f"{path}: trained for axis {arch.get('axis')!r}, wanted {axis.value!r}")
        mask = infer_view(load_model(path), norm, axis, cfg.inference)
    else:
        models = load_view_models(ckpt_dir, cfg)
        views = [infer_view(models[axis], norm, axis, cfg.inference) for axis in ALL_AXES]
        mask = majority_vote(*views)

    out.mkdir(parents=True, exist_ok=True)
    mask_path = out / f"pred_{Path(args.volume).stem}.mvol"
    write_mvol(mask_path, mask)
    _echo_config(cfg, out)
    print(f"wrote {mask_path} ({int(mask.sum())} foreground voxels)")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.mvol"))}
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.mvol"))}
    if not pred_files:
        raise ValueError(f"no .mvol files in {pred_dir}")
    unmatched = sorted(set(pred_files) ^ set(gt_files))
    if unmatched:
        raise ValueError(f"unmatched case ids between pred and gt dirs: {unmatched}")
    cases = []
    digests = []
    for name in sorted(pred_files):
        pred = read_mvol(pred_files[name])
        gt = read_mvol(gt_files[name])
        cases.append((pred, gt, Path(name).stem))
        digests.append(name)
    report = evaluate_set(cases, fingerprint=config_fingerprint(*digests))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "eval.csv")
    write_report_json(report, out / "eval.json")
    print(f"mean DSC {report.mean_dsc:.4f} over {len(report.per_case)} cases; report in {out}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    failed = 0
    for name, ok, detail in run_selftest():
        status = "ok" if ok else "FAIL"
        print(f"[{status}] {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} check(s) failed")
        return EXIT_NUMERIC
    print("all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="triseg",
                     description="slice-wise volumetric segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="RunConfig JSON (defaults apply when omitted)")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
        p.add_argument("--deterministic", action="store_true",
                       help="single-threaded kernels, fixed reduction order")

    p = sub.add_parser("gen-phantom", help="write the phantom dataset as MVOL files")
    common(p)
    p.set_defaults(func=cmd_gen_phantom)

    p = sub.add_parser("train", help="train the model for one view")
    common(p)
    p.add_argument("--axis", required=True, choices=[a.value for a in ALL_AXES])
    p.add_argument("--data", help="dataset directory (default: from config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment a volume with the three view models")
    common(p)
    p.add_argument("--volume", required=True, help="input MVOL volume")
    p.add_argument("--checkpoint-dir", help="directory holding the per-axis checkpoints")
    p.add_argument("--single-axis", action="store_true",
                   help="skip majority voting, use only --axis")
    p.add_argument("--axis", choices=[a.value for a in ALL_AXES])
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    common(p)
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "single_axis", False) and not args.axis:
        parser.error("--single-axis requires --axis")
    try:
        with _thread_limits(args):
            return args.func(args)
    except NonFiniteError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
