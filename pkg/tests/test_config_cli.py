"""RunConfig document handling and the command-line surface."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from triseg import cli
from triseg.checkpoint import load_checkpoint
from triseg.config import (
    DatasetSpec,
    RunConfig,
    load_run_config,
    run_config_from_dict,
    run_config_to_dict,
    save_run_config,
)
from triseg.inference import infer_view
from triseg.model import SegmentationModel, load_model
from triseg.mvol import read_mvol, write_mvol
from triseg.optim import PolySchedule, poly_lr
from triseg.preprocess import hu_window_normalize
from triseg.tensor import NonFiniteError
from triseg.train import TrainConfig
from triseg.volume import Axis

# ---------------------------------------------------------------------------
# config document
# ---------------------------------------------------------------------------


def test_default_config_roundtrips_through_dict():
    cfg = RunConfig()
    assert run_config_from_dict(run_config_to_dict(cfg)) == cfg


def test_partial_sections_fall_back_to_defaults():
    cfg = run_config_from_dict({"train": {"max_iter": 7}})
    assert cfg.train.max_iter == 7
    assert cfg.train.base_lr == 0.05
    assert cfg.inference.scales == (1.25, 1.5, 1.75)


def test_unknown_top_level_key_rejected():
    with pytest.raises(ValueError, match="unknown top-level"):
        run_config_from_dict({"trian": {}})


def test_unknown_nested_key_names_its_section():
    with pytest.raises(ValueError, match="'train'"):
        run_config_from_dict({"train": {"max_itr": 10}})


def test_schema_version_mismatch_rejected():
    with pytest.raises(ValueError, match="schema_version"):
        run_config_from_dict({"schema_version": 2})


def test_save_load_file_roundtrip_and_stable_echo(tmp_path):
    cfg = run_config_from_dict({"train": {"max_iter": 3}, "inference": {"scales": [1.0]}})
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_run_config(cfg, p1)
    loaded = load_run_config(p1)
    assert loaded == cfg
    save_run_config(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()   # echo of the echo is identical


def test_invalid_json_is_a_value_error(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ValueError, match="JSON"):
        load_run_config(p)


def test_overlapping_seed_ranges_rejected():
    with pytest.raises(ValueError, match="overlap"):
        DatasetSpec(train_seeds=(0, 45), test_seeds=(45, 64))
    with pytest.raises(ValueError, match="overlap"):
        run_config_from_dict({"dataset": {"train_seeds": [0, 10], "test_seeds": [5, 20]}})


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(class_weights=(1.0,))
    with pytest.raises(ValueError):
        TrainConfig(checkpoints={"coronal": "c.ckpt"})
    with pytest.raises(ValueError):
        TrainConfig(fg_slice_prob=1.5)


# ---------------------------------------------------------------------------
# CLI — a small end-to-end arrangement shared by the command tests
# ---------------------------------------------------------------------------

_TINY_DOC = {
    "schema_version": 1,
    "dataset": {"train_seeds": [0, 2], "test_seeds": [3, 4]},
    "phantom": {"dims": [24, 24, 24], "n_foci": [1, 2], "focus_radius_vox": [2.0, 4.0]},
    "backbone": {"stage_channels": [4, 6, 8, 10], "blocks_per_stage": [1, 1, 1, 1]},
    "aspp": {"rates": [2, 3], "branch_channels": 6},
    "model": {"decoder_channels": 6},
    "inference": {"scales": [1.0, 1.5]},
    "augment": {"train_scales": [1.0, 1.5]},
    "train": {"batch_size": 2, "max_iter": 8},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Config file, generated dataset, and three checkpoints (one briefly
    trained, two at initialization) for the command tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(_TINY_DOC))

    zero_doc = dict(_TINY_DOC)
    zero_doc["train"] = {**_TINY_DOC["train"], "max_iter": 0}
    zero_path = root / "config_zero.json"
    zero_path.write_text(json.dumps(zero_doc))

    data = root / "data"
    assert cli.main(["gen-phantom", "--config", str(cfg_path), "--out", str(data),
                     "--deterministic"]) == 0

    run = root / "run"
    assert cli.main(["train", "--config", str(cfg_path), "--axis", "coronal",
                     "--data", str(data), "--out", str(run), "--deterministic"]) == 0
    for axis in ("sagittal", "axial"):
        assert cli.main(["train", "--config", str(zero_path), "--axis", axis,
                         "--data", str(data), "--out", str(run), "--deterministic"]) == 0
    return {"root": root, "cfg": cfg_path, "cfg_zero": zero_path, "data": data, "run": run}


def test_usage_errors_exit_with_one():
    for argv in ([], ["unknown-cmd"], ["train", "--out", "x"],
                 ["infer", "--out", "x", "--volume", "v.mvol", "--single-axis"],
                 ["train", "--axis", "oblique", "--out", "x"]):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 1, argv


def test_gen_phantom_writes_dataset(workdir):
    data = workdir["data"]
    mvols = sorted(p.name for p in data.glob("*.mvol"))
    assert len(mvols) == 10                      # 5 cases x (volume + mask)
    for seed in range(5):
        assert f"volume_{seed}.mvol" in mvols and f"mask_{seed}.mvol" in mvols
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["n_train"] == 3 and manifest["n_test"] == 2
    splits = {c["seed"]: c["split"] for c in manifest["cases"]}
    assert splits == {0: "train", 1: "train", 2: "train", 3: "test", 4: "test"}
    # the config echo is the resolved document
    assert load_run_config(data / "config.json") == load_run_config(workdir["cfg"])


def test_gen_phantom_rerun_is_byte_identical(workdir, tmp_path):
    again = tmp_path / "data2"
    assert cli.main(["gen-phantom", "--config", str(workdir["cfg"]), "--out", str(again),
                     "--deterministic"]) == 0
    for path in sorted(workdir["data"].iterdir()):
        assert (again / path.name).read_bytes() == path.read_bytes(), path.name


def test_default_split_mirrors_45_20():
    cfg = RunConfig()
    assert len(cfg.dataset.train_list()) == 45
    assert len(cfg.dataset.test_list()) == 20


def test_zero_iteration_training_checkpoints_the_init_state(workdir):
    cfg = load_run_config(workdir["cfg_zero"])
    arch, tensors = load_checkpoint(workdir["run"] / "checkpoints/sagittal.ckpt")
    assert arch["axis"] == "sagittal"
    fresh = SegmentationModel(cfg.model_config(), seed=cfg.model.init_seed)
    expected = fresh.state_arrays()
    assert set(tensors) == set(expected)
    for name, arr in expected.items():
        np.testing.assert_array_equal(tensors[name], arr, err_msg=name)
    log = (workdir["run"] / "train_sagittal.csv").read_text().splitlines()
    assert log == ["iteration,loss,lr"]


def test_training_log_matches_poly_schedule(workdir):
    with open(workdir["run"] / "train_coronal.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["iteration"]) for r in rows] == list(range(8))
    schedule = PolySchedule(base_lr=0.05, power=0.9, max_iter=8)
    for i, row in enumerate(rows):
        assert float(row["lr"]) == poly_lr(schedule, i)   # .17g round-trips exactly
        assert np.isfinite(float(row["loss"]))


def test_infer_fused_writes_binary_mask(workdir, tmp_path, capsys):
    out = tmp_path / "pred"
    rc = cli.main(["infer", "--config", str(workdir["cfg"]),
                   "--volume", str(workdir["data"] / "volume_3.mvol"),
                   "--checkpoint-dir", str(workdir["run"]), "--out", str(out),
                   "--deterministic"])
    assert rc == 0
    mask = read_mvol(out / "pred_volume_3.mvol")
    assert mask.shape == (24, 24, 24) and mask.dtype == np.uint8
    assert set(np.unique(mask)) <= {0, 1}
    assert "pred_volume_3.mvol" in capsys.readouterr().out


def test_single_axis_mode_equals_library_view_inference(workdir, tmp_path):
    out = tmp_path / "pred1ax"
    rc = cli.main(["infer", "--config", str(workdir["cfg"]),
                   "--volume", str(workdir["data"] / "volume_4.mvol"),
                   "--checkpoint-dir", str(workdir["run"]), "--out", str(out),
                   "--single-axis", "--axis", "coronal", "--deterministic"])
    assert rc == 0
    got = read_mvol(out / "pred_volume_4.mvol")

    cfg = load_run_config(workdir["cfg"])
    model = load_model(workdir["run"] / "checkpoints/coronal.ckpt")
    norm = hu_window_normalize(read_mvol(workdir["data"] / "volume_4.mvol"), cfg.window)
    np.testing.assert_array_equal(got, infer_view(model, norm, Axis.CORONAL, cfg.inference))


def test_infer_data_errors_exit_with_two(workdir, tmp_path):
    # a mask is not an intensity volume
    assert cli.main(["infer", "--config", str(workdir["cfg"]),
                     "--volume", str(workdir["data"] / "mask_3.mvol"),
                     "--checkpoint-dir", str(workdir["run"]),
                     "--out", str(tmp_path / "x")]) == 2
    # missing checkpoints
    assert cli.main(["infer", "--config", str(workdir["cfg"]),
                     "--volume", str(workdir["data"] / "volume_3.mvol"),
                     "--checkpoint-dir", str(tmp_path / "nowhere"),
                     "--out", str(tmp_path / "y")]) == 2


def test_train_missing_data_dir_exits_with_two(workdir, tmp_path):
    assert cli.main(["train", "--config", str(workdir["cfg"]), "--axis", "axial",
                     "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "o")]) == 2


def test_eval_identical_dirs_scores_one(workdir, tmp_path, capsys):
    gt = tmp_path / "gt"
    gt.mkdir()
    for seed in (3, 4):
        blob = (workdir["data"] / f"mask_{seed}.mvol").read_bytes()
        (gt / f"mask_{seed}.mvol").write_bytes(blob)
    out = tmp_path / "report"
    assert cli.main(["eval", "--pred", str(gt), "--gt", str(gt), "--out", str(out)]) == 0
    assert "mean DSC 1.0000" in capsys.readouterr().out
    doc = json.loads((out / "eval.json").read_text())
    assert doc["mean_dsc"] == 1.0


def test_eval_reproduces_worked_overlap_case(tmp_path):
    # |gt| = 4, |pred| = 6, overlap 3 -> DSC 0.6
    gt_mask = np.zeros((2, 2, 3), dtype=np.uint8)
    gt_mask[0, 0, :3] = 1
    gt_mask[0, 1, 0] = 1
    pred_mask = np.zeros((2, 2, 3), dtype=np.uint8)
    pred_mask[0, 0, :3] = 1
    pred_mask[1, 1, :3] = 1
    pred_d, gt_d, out = tmp_path / "p", tmp_path / "g", tmp_path / "r"
    pred_d.mkdir(), gt_d.mkdir()
    write_mvol(gt_d / "case.mvol", gt_mask)
    write_mvol(pred_d / "case.mvol", pred_mask)
    assert cli.main(["eval", "--pred", str(pred_d), "--gt", str(gt_d), "--out", str(out)]) == 0
    doc = json.loads((out / "eval.json").read_text())
    assert doc["mean_dsc"] == pytest.approx(0.6, abs=1e-15)


def test_eval_rejects_unmatched_or_empty_dirs(workdir, tmp_path):
    a, b, out = tmp_path / "a", tmp_path / "b", tmp_path / "out"
    a.mkdir(), b.mkdir()
    write_mvol(a / "x.mvol", np.zeros((2, 2, 2), dtype=np.uint8))
    write_mvol(b / "y.mvol", np.zeros((2, 2, 2), dtype=np.uint8))
    assert cli.main(["eval", "--pred", str(a), "--gt", str(b), "--out", str(out)]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["eval", "--pred", str(empty), "--gt", str(b), "--out", str(out)]) == 2


def test_selftest_passes(capsys):
    assert cli.main(["selftest", "--deterministic"]) == 0
    out = capsys.readouterr().out
    assert "[ok]" in out and "all checks passed" in out
    assert "FAIL" not in out


def test_numerical_failures_exit_with_three(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_selftest",
                        lambda: [("conv", False, "max err 1.0")])
    assert cli.main(["selftest"]) == 3
    monkeypatch.setattr(cli, "run_selftest",
                        lambda: (_ for _ in ()).throw(NonFiniteError("overflow")))
    assert cli.main(["selftest"]) == 3
    assert "numerical failure" in capsys.readouterr().err
