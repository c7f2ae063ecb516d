"""Detection metrics (AUROC, EER), kernel similarity structure, report output.

Scores are oriented so that higher means more bona fide; the positive
class for both metrics is bona fide (label 1). Rates on the ROC are exact
integer ratios, so the EER crossing can be checked against brute-force
sweeps without rounding surprises.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .quantum import fidelity_kernel
from .svm import KernelSpec, rbf_kernel

SCHEMA_VERSION = 1
POSITIVE_LABEL = "bonafide"


@dataclass(frozen=True)
class RocCurve:
    """Empirical ROC sampled at +inf, every distinct score (descending), -inf.

    A sample is predicted positive when its score >= threshold, so fpr
    rises from 0 to 1 as the threshold falls.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    fnr: np.ndarray
    tpr: np.ndarray


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be matching 1-D vectors")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    if labels.min() == labels.max():
        raise ValueError("both classes must be present")
    return scores, labels.astype(np.int64)


def roc_points(scores, labels) -> RocCurve:
    scores, labels = _check_binary(scores, labels)
    npos = int(labels.sum())
    nneg = labels.size - npos
    distinct = np.unique(scores)[::-1]
    thresholds = np.concatenate([[np.inf], distinct, [-np.inf]])
    fpr = np.empty(thresholds.size)
    fnr = np.empty(thresholds.size)
    for i, tau in enumerate(thresholds):
        pred_pos = scores >= tau
        tp = int(np.count_nonzero(pred_pos & (labels == 1)))
        fp = int(np.count_nonzero(pred_pos & (labels == 0)))
        fpr[i] = fp / nneg
        fnr[i] = (npos - tp) / npos
    return RocCurve(thresholds, fpr, fnr, 1.0 - fnr)


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties at 0.5.

    Computed from midrank sums (the Mann-Whitney statistic), which equals
    pair counting exactly because midranks are half-integers.
    """
    scores, labels = _check_binary(scores, labels)
    npos = int(labels.sum())
    nneg = labels.size - npos
    ranks = rankdata(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - npos * (npos + 1) / 2.0) / (npos * nneg)


def eer(scores, labels) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Walks the ROC from high thresholds down and returns the first point
    where fpr >= fnr, interpolating linearly between the bracketing
    operating points when the crossing falls between thresholds.
    """
    roc = roc_points(scores, labels)
    diff = roc.fpr - roc.fnr
    idx = int(np.argmax(diff >= 0.0))
    if diff[idx] == 0.0:
        tau = roc.thresholds[idx]
        if not math.isfinite(tau):
            tau = roc.thresholds[min(idx + 1, roc.thresholds.size - 1)]
        return float(roc.fpr[idx]), float(tau)
    a, b = idx - 1, idx
    fpr_a, fpr_b = roc.fpr[a], roc.fpr[b]
    fnr_a, fnr_b = roc.fnr[a], roc.fnr[b]
    t = (fnr_a - fpr_a) / ((fpr_b - fpr_a) + (fnr_a - fnr_b))
    value = float(fpr_a + t * (fpr_b - fpr_a))
    tau_a, tau_b = roc.thresholds[a], roc.thresholds[b]
    if math.isfinite(tau_a) and math.isfinite(tau_b):
        tau = float(tau_a + t * (tau_b - tau_a))
    else:
        tau = float(tau_b) if math.isfinite(tau_b) else float(tau_a)
    return value, tau


@dataclass(frozen=True)
class GroupStats:
    mean: float
    std: float
    n_pairs: int

    @property
    def delta_pct(self) -> float:
        """Percent change from the self-similarity baseline of 1.0."""
        return (self.mean - 1.0) * 100.0

    @classmethod
    def from_values(cls, values) -> "GroupStats":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return cls(math.nan, math.nan, 0)
        return cls(float(values.mean()), float(values.std()), int(values.size))

    def to_dict(self) -> dict:
        if self.n_pairs == 0:
            return {"mean": None, "std": None, "n_pairs": 0, "delta_pct": None}
        return {"mean": self.mean, "std": self.std, "n_pairs": self.n_pairs,
                "delta_pct": self.delta_pct}


@dataclass(frozen=True)
class KernelStructureReport:
    """Similarity grouped by pair type, plus a per-patch-slot breakdown of
    the cross-class group when features are available."""

    same_sample: dict
    within_class: dict
    cross_class: GroupStats
    cross_class_per_slot: dict

    def to_dict(self) -> dict:
        return {
            "same_sample": {c: s.to_dict() for c, s in self.same_sample.items()},
            "within_class": {c: s.to_dict() for c, s in self.within_class.items()},
            "cross_class": self.cross_class.to_dict(),
            "cross_class_per_slot": {k: s.to_dict()
                                     for k, s in self.cross_class_per_slot.items()},
        }


def _slot_kernel(x, y, kernel: KernelSpec) -> float:
    if kernel.kind == "quantum":
        return fidelity_kernel(x, y, kernel.depth, kernel.s3_axis)
    return rbf_kernel(x, y, kernel.gamma)


def kernel_structure(gram_values, labels, features=None,
                     kernel: KernelSpec | None = None) -> KernelStructureReport:
    """Group Gram entries into same-sample, within-class, and cross-class sets.

    Off-diagonal groups use i < j pairs only, so the diagonal never leaks
    into the cross-sample statistics. When features and a kernel spec are
    given, the cross-class group is additionally recomputed per patch slot
    with single-patch kernels over each length-4 block.
    """
    k = np.asarray(gram_values, dtype=np.float64)
    labels = list(labels)
    n = k.shape[0]
    if len(labels) != n:
        raise ValueError("labels must align with the Gram matrix")
    classes = sorted(set(labels))
    lab = np.array(labels)

    same_sample = {c: GroupStats.from_values(np.diag(k)[lab == c]) for c in classes}
    iu, ju = np.triu_indices(n, k=1)
    within = {}
    for c in classes:
        mask = (lab[iu] == c) & (lab[ju] == c)
        within[c] = GroupStats.from_values(k[iu[mask], ju[mask]])
    cross_mask = lab[iu] != lab[ju]
    cross = GroupStats.from_values(k[iu[cross_mask], ju[cross_mask]])

    per_slot = {}
    if features is not None:
        if kernel is None:
            raise ValueError("per-slot breakdown needs the kernel spec")
        x = np.stack([np.asarray(f.values if hasattr(f, "values") else f,
                                 dtype=np.float64) for f in features])
        resolved = kernel.resolve(x)
        n_slots = x.shape[1] // 4
        ci, cj = iu[cross_mask], ju[cross_mask]
        for slot in range(n_slots):
            block = x[:, 4 * slot:4 * slot + 4]
            vals = [_slot_kernel(block[a], block[b], resolved)
                    for a, b in zip(ci, cj)]
            per_slot[f"patch{slot + 1}"] = GroupStats.from_values(vals)
    return KernelStructureReport(same_sample, within, cross, per_slot)


def _plain(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {str(key): _plain(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_report(json_path, roc_csv_path, metrics: dict, roc: RocCurve) -> None:
    """Write the JSON summary and the ROC operating points CSV.

    Refuses empty metrics before touching the filesystem, so a failed run
    never leaves a partial report behind.
    """
    if not metrics:
        raise ValueError("refusing to write an empty report")
    payload = {"schema_version": SCHEMA_VERSION, "positive_label": POSITIVE_LABEL}
    payload.update(_plain(metrics))
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    roc_csv_path = Path(roc_csv_path)
    roc_csv_path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.column_stack([roc.thresholds, roc.fpr, roc.tpr, roc.fnr])
    np.savetxt(roc_csv_path, rows, delimiter=",", fmt="%.17g",
               header="threshold,fpr,tpr,fnr", comments="")
