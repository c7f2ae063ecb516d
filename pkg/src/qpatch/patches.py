"""Patch summary features over standardized log-mel spectrograms.

The spectrogram is cut into non-overlapping square patches (default 4x4,
time by mel). Each patch is reduced to four statistics:

  s1  mean activation (also the patch ranking score)
  s2  spectral centroid over the patch's local mel bins
  s3  spectral bandwidth around that centroid
  s4  inter-frame coherence (mean adjacent-frame cosine similarity)

The top-k patches by s1 are concatenated into a feature vector of
length 4k.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import EPS, Spectrogram


@dataclass(frozen=True)
class Patch:
    """A square time-frequency tile; indices locate its top-left corner."""

    values: np.ndarray
    time_index: int
    freq_index: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("patch must be a square matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("patch contains non-finite values")


@dataclass(frozen=True)
class PatchSummary:
    s1: float
    s2: float
    s3: float
    s4: float
    source: tuple[int, int]

    @property
    def score(self) -> float:
        return self.s1

    def as_vector(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3, self.s4])


@dataclass(frozen=True)
class FeatureVector:
    """Concatenated summaries of the selected patches, selection order kept."""

    values: np.ndarray
    patch_order: tuple[tuple[int, int], ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "patch_order", tuple(tuple(p) for p in self.patch_order))
        if values.size != 4 * len(self.patch_order):
            raise ValueError("feature length must be 4 per selected patch")


def partition(spec: Spectrogram, patch_size: int = 4) -> list[Patch]:
    """Cut the spectrogram into non-overlapping patches, time-major order.

    Trailing frames that do not fill a whole patch row are dropped. The mel
    axis (64 bins) must divide evenly by the patch size.
    """
    t, f = spec.values.shape
    if t < patch_size:
        raise ValueError(
            f"spectrogram too short for one patch: {t} frames < {patch_size}")
    if f % patch_size != 0:
        raise ValueError(f"{f} mel bins not divisible by patch size {patch_size}")
    patches = []
    for ti in range(0, (t // patch_size) * patch_size, patch_size):
        for fi in range(0, f, patch_size):
            patches.append(Patch(spec.values[ti:ti + patch_size, fi:fi + patch_size],
                                 ti, fi))
    return patches


def summarize(patch: Patch) -> PatchSummary:
    """Reduce one patch to (s1, s2, s3, s4).

    The centroid and bandwidth use local bin indices 0..size-1 and
    nonnegative weights w_f proportional to |column mean| + eps, so they are
    well defined even when standardization makes means negative. Coherence
    averages the cosine similarity of the size-1 adjacent frame pairs, with
    an eps-guarded denominator so zero-norm frames contribute 0.
    """
    v = patch.values
    size = v.shape[0]
    s1 = float(v.mean())
    col_means = v.mean(axis=0)
    raw = np.abs(col_means) + EPS
    w = raw / raw.sum()
    bins = np.arange(size, dtype=np.float64)
    s2 = float(np.dot(bins, w))
    s3 = float(np.sqrt(np.dot((bins - s2) ** 2, w)))
    sims = []
    for tau in range(size - 1):
        a, b = v[tau], v[tau + 1]
        denom = np.linalg.norm(a) * np.linalg.norm(b) + EPS
        sims.append(float(np.dot(a, b)) / denom)
    s4 = float(np.mean(sims))
    return PatchSummary(s1, s2, s3, s4, (patch.time_index, patch.freq_index))


def select_top_k(summaries: list[PatchSummary], k: int) -> list[PatchSummary]:
    """Pick the k summaries with the largest s1.

    Ties break toward the smaller list index, and the output is ordered by
    descending s1 then ascending index, so selection is deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(summaries):
        raise ValueError(f"k={k} exceeds patch count {len(summaries)}")
    order = sorted(range(len(summaries)), key=lambda i: (-summaries[i].s1, i))
    return [summaries[i] for i in order[:k]]


def make_feature_vector(selected: list[PatchSummary]) -> FeatureVector:
    if not selected:
        raise ValueError("need at least one selected patch")
    values = np.concatenate([s.as_vector() for s in selected])
    return FeatureVector(values, tuple(s.source for s in selected))


def extract_features(spec: Spectrogram, k: int = 2, patch_size: int = 4) -> FeatureVector:
    """Full patch pipeline: partition, summarize, rank, concatenate."""
    summaries = [summarize(p) for p in partition(spec, patch_size)]
    return make_feature_vector(select_top_k(summaries, k))


def write_features_csv(path, rows) -> None:
    """Persist features: one row per utterance.

    Each input row is (utterance_id, label, FeatureVector). Labels are the
    strings "bonafide" or "spoof". Patch locations are stored after the
    feature values so files are self-describing.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no feature rows to write")
    k = len(rows[0][2].patch_order)
    header = ["id", "label"]
    header += [f"x{i}" for i in range(4 * k)]
    for j in range(k):
        header += [f"patch{j}_t", f"patch{j}_f"]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for uid, label, feat in rows:
            if len(feat.patch_order) != k:
                raise ValueError("inconsistent patch counts across rows")
            record = [uid, label]
            record += [f"{x:.17g}" for x in feat.values]
            for t_idx, f_idx in feat.patch_order:
                record += [str(t_idx), str(f_idx)]
            writer.writerow(record)


def read_features_csv(path):
    """Inverse of write_features_csv: list of (id, label, FeatureVector)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_vals = sum(1 for h in header if h.startswith("x"))
        k = n_vals // 4
        rows = []
        for record in reader:
            uid, label = record[0], record[1]
            values = np.array([float(x) for x in record[2:2 + n_vals]])
            locs = []
            for j in range(k):
                base = 2 + n_vals + 2 * j
                locs.append((int(record[base]), int(record[base + 1])))
            rows.append((uid, label, FeatureVector(values, tuple(locs))))
    return rows
