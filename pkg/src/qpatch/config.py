"""Experiment configuration: one JSON file, one seed, flag overrides win."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .dsp import FrontEndConfig
from .spoof import SpoofConfig, SplitCounts
from .svm import KernelSpec


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of the pipeline with their defaults.

    Audio front end: 16 kHz, 25 ms / 10 ms Hann frames, 1024-point FFT,
    64 mel bins. Patches: 4x4, top-2 by mean activation. Circuit: depth 1.
    Spoofs: 20 dB SNR noise plus a uniform spectral tilt. Split: 40/10 per
    class. Everything random derives from the single seed.
    """

    work_dir: str = "qpatch_work"
    input_dir: str | None = None
    win_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 1024
    n_mels: int = 64
    f_low: float = 0.0
    f_high: float = 8000.0
    patch_size: int = 4
    k: int = 2
    depth: int = 1
    s3_axis: str = "Z"
    snr_db: float = 20.0
    tilt_low: float = -0.6
    tilt_high: float = 0.6
    train_per_class: int = 40
    dev_per_class: int = 10
    svm_c: float = 1.0
    gamma: float | str = "scale"
    seed: int = 7

    def front_end(self) -> FrontEndConfig:
        return FrontEndConfig(win_ms=self.win_ms, hop_ms=self.hop_ms,
                              fft_size=self.fft_size, n_mels=self.n_mels,
                              f_low=self.f_low, f_high=self.f_high)

    def spoof_config(self) -> SpoofConfig:
        return SpoofConfig(snr_db=self.snr_db, tilt_low=self.tilt_low,
                           tilt_high=self.tilt_high, seed=self.seed)

    def split_counts(self) -> SplitCounts:
        return SplitCounts(train_per_class=self.train_per_class,
                           dev_per_class=self.dev_per_class)

    def kernel_spec(self, kind: str) -> KernelSpec:
        return KernelSpec(kind=kind, depth=self.depth, s3_axis=self.s3_axis,
                          gamma=self.gamma)

    def resolved_input_dir(self) -> Path:
        if self.input_dir is not None:
            return Path(self.input_dir)
        return Path(self.work_dir) / "bonafide"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults, an optional JSON file, and flag overrides (flags win)."""
    merged: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(raw) - _FIELDS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ValueError(f"unknown config override: {key}")
        merged[key] = value
    return ExperimentConfig(**merged)
