"""Dice overlap scoring and per-case evaluation reports."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class CaseResult(NamedTuple):
    case_id: object
    dsc: float
    gt_voxels: int
    pred_voxels: int
    overlap: int


def _binary(mask: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(mask)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{what} mask must be binary")
    return arr


def dsc(pred: np.ndarray, gt: np.ndarray) -> float:
    """Dice-Sorensen coefficient 2|A∩B| / (|A|+|B|); both-empty counts as 1.0."""
    p = _binary(pred, "predicted")
    g = _binary(gt, "ground-truth")
    if p.shape != g.shape:
        raise ValueError(f"mask dims differ: {p.shape} vs {g.shape}")
    n_p = int(np.count_nonzero(p))
    n_g = int(np.count_nonzero(g))
    if n_p + n_g == 0:
        return 1.0
    overlap = int(np.count_nonzero(np.logical_and(p, g)))
    return 2.0 * overlap / (n_p + n_g)


@dataclass(frozen=True)
class EvalReport:
    per_case: tuple[CaseResult, ...]
    mean_dsc: float
    fingerprint: str = ""

    def __post_init__(self):
        recomputed = sum(c.dsc for c in self.per_case) / len(self.per_case)
        if abs(recomputed - self.mean_dsc) > 1e-12:
            raise ValueError("mean_dsc inconsistent with per-case scores")


def evaluate_set(cases, fingerprint: str = "") -> EvalReport:
    """Score a list of (pred, gt, case_id) triples; deterministic id order."""
    cases = list(cases)
    if not cases:
        raise ValueError("evaluate_set needs at least one case")
    ids = [cid for _, _, cid in cases]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate case ids: {dupes}")
    results = []
    for pred, gt, cid in sorted(cases, key=lambda item: str(item[2])):
        p = _binary(pred, "predicted")
        g = _binary(gt, "ground-truth")
        score = dsc(p, g)
        results.append(CaseResult(
            case_id=cid,
            dsc=score,
            gt_voxels=int(np.count_nonzero(g)),
            pred_voxels=int(np.count_nonzero(p)),
            overlap=int(np.count_nonzero(np.logical_and(p, g))),
        ))
    mean = sum(r.dsc for r in results) / len(results)
    return EvalReport(per_case=tuple(results), mean_dsc=mean, fingerprint=fingerprint)


def config_fingerprint(*parts) -> str:
    """Stable hex digest of config fragments (dicts, strings, bytes)."""
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            digest.update(part)
        elif isinstance(part, str):
            digest.update(part.encode())
        else:
            digest.update(json.dumps(part, sort_keys=True, default=str).encode())
        digest.update(b"\x00")
    return digest.hexdigest()


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["case_id", "dsc", "gt_voxels", "pred_voxels", "overlap"])
        for case in report.per_case:
            writer.writerow([case.case_id, f"{case.dsc:.6f}",
                             case.gt_voxels, case.pred_voxels, case.overlap])
        writer.writerow(["mean", f"{report.mean_dsc:.6f}", "", "", ""])


def write_report_json(report: EvalReport, path) -> None:
    doc = {
        "mean_dsc": report.mean_dsc,
        "fingerprint": report.fingerprint,
        "cases": [case._asdict() for case in report.per_case],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
