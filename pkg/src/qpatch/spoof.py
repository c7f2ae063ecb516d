"""Spoof generation and dataset assembly.

Spoofed counterparts of bona fide recordings are made by additive white
Gaussian noise at a controlled SNR followed by a first-order spectral
tilt. A bundled synthetic-voice generator (seeded harmonic complexes with
vibrato and amplitude envelopes) provides self-contained bona fide audio;
real corpora can be supplied by path instead.

Every random draw flows through named substreams of one experiment seed,
keyed by utterance id, so per-file generation can run in any order and
still produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import TARGET_SAMPLE_RATE, Waveform, load_wav, resample_to, save_wav

BONAFIDE = "bonafide"
SPOOF = "spoof"
NO_NOISE = math.inf  # snr_db sentinel: noise stage disabled


def substream(seed: int, *tags) -> np.random.Generator:
    """Independent RNG keyed by (seed, tags); stable across platforms and runs."""
    digest = hashlib.sha256("/".join(str(t) for t in tags).encode()).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([seed, key]))


@dataclass(frozen=True)
class SpoofConfig:
    snr_db: float = 20.0
    tilt_low: float = -0.6
    tilt_high: float = 0.6
    seed: int = 7

    def __post_init__(self):
        if not (math.isfinite(self.snr_db) or self.snr_db == NO_NOISE):
            raise ValueError("snr_db must be finite or the no-noise sentinel")
        if not (-1.0 < self.tilt_low <= self.tilt_high < 1.0):
            raise ValueError(
                f"tilt range [{self.tilt_low}, {self.tilt_high}] must sit inside (-1, 1)")


@dataclass(frozen=True)
class SplitCounts:
    train_per_class: int = 40
    dev_per_class: int = 10

    @property
    def per_class(self) -> int:
        return self.train_per_class + self.dev_per_class

    def __post_init__(self):
        if self.train_per_class < 1 or self.dev_per_class < 1:
            raise ValueError("both splits need at least one sample per class")


@dataclass(frozen=True)
class ManifestEntry:
    uid: str
    path: str
    label: str
    split: str
    source_id: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.uid for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate utterance ids in manifest")
        for split in ("train", "dev"):
            n_bona = sum(1 for e in self.entries
                         if e.split == split and e.label == BONAFIDE)
            n_spoof = sum(1 for e in self.entries
                          if e.split == split and e.label == SPOOF)
            if n_bona != n_spoof:
                raise ValueError(
                    f"{split} split unbalanced: {n_bona} bonafide vs {n_spoof} spoof")

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


def add_noise(w: Waveform, snr_db: float, rng: np.random.Generator) -> Waveform:
    """Add white Gaussian noise scaled so the realized SNR equals snr_db.

    The noise is rescaled against its own measured power, so the power
    ratio is exact up to rounding rather than expected-value only. Samples
    pushed outside [-1, 1] are clipped and the clipped fraction reported.
    """
    if snr_db == NO_NOISE:
        return w
    p_signal = float(np.mean(w.samples ** 2))
    if p_signal <= 0.0:
        raise ValueError("cannot set an SNR against a zero-power signal")
    noise = rng.standard_normal(w.samples.size)
    p_target = p_signal / 10.0 ** (snr_db / 10.0)
    noise *= np.sqrt(p_target / np.mean(noise ** 2))
    out = w.samples + noise
    n_clipped = int(np.count_nonzero(np.abs(out) > 1.0))
    if n_clipped:
        warnings.warn(
            f"noise at {snr_db} dB SNR clipped {n_clipped / out.size:.4%} of samples")
        out = np.clip(out, -1.0, 1.0)
    return Waveform(out, w.sample_rate)


def spectral_distort(w: Waveform, tilt: float) -> Waveform:
    """First-order tilt y[n] = x[n] - tilt*x[n-1], renormalized to input RMS.

    Positive tilt suppresses low frequencies (pre-emphasis), negative
    boosts them. If the filtered signal is essentially silent the renorm
    is skipped and the raw filter output passes through with a warning.
    """
    if not abs(tilt) < 1.0:
        raise ValueError(f"|tilt| must be < 1, got {tilt}")
    x = w.samples
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - tilt * x[:-1]
    rms_in = float(np.sqrt(np.mean(x ** 2)))
    rms_out = float(np.sqrt(np.mean(y ** 2)))
    if rms_out < 1e-6:
        warnings.warn("tilted signal is near silence; skipping RMS renormalization")
        return Waveform(y, w.sample_rate)
    return Waveform(y * (rms_in / rms_out), w.sample_rate)


def make_spoof(w: Waveform, uid: str, config: SpoofConfig) -> Waveform:
    """Noise then tilt, with all draws from the utterance's own substream."""
    rng = substream(config.seed, "spoof", uid)
    tilt = float(rng.uniform(config.tilt_low, config.tilt_high))
    noisy = add_noise(w, config.snr_db, rng)
    return spectral_distort(noisy, tilt)


def _harmonic_voice(rng: np.random.Generator, duration_s: float,
                    sample_rate: int) -> Waveform:
    """One synthetic utterance: a harmonic complex with vibrato and envelope."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(110.0, 220.0)
    vib_rate = rng.uniform(4.5, 6.5)
    vib_depth = rng.uniform(0.005, 0.02)
    inst_freq = f0 * (1.0 + vib_depth * np.sin(2 * np.pi * vib_rate * t))
    phase = 2 * np.pi * np.cumsum(inst_freq) / sample_rate
    n_harm = int(rng.integers(8, 13))
    rolloff = rng.uniform(0.8, 1.5)
    sig = np.zeros(n)
    for h in range(1, n_harm + 1):
        amp = 1.0 / h ** rolloff
        sig += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    am_rate = rng.uniform(1.5, 3.5)
    am_depth = rng.uniform(0.05, 0.2)
    sig *= 1.0 + am_depth * np.sin(2 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi))
    attack = min(int(rng.uniform(0.05, 0.15) * sample_rate), n // 4)
    release = min(int(rng.uniform(0.10, 0.30) * sample_rate), n // 3)
    env = np.ones(n)
    env[:attack] = np.linspace(0.0, 1.0, attack, endpoint=False)
    env[n - release:] = np.linspace(1.0, 0.0, release)
    sig *= env
    peak_target = rng.uniform(0.5, 0.8)
    sig *= peak_target / np.max(np.abs(sig))
    return Waveform(sig, sample_rate)


def generate_synthetic_corpus(out_dir, n_files: int, seed: int,
                              duration_s: float = 1.0,
                              sample_rate: int = TARGET_SAMPLE_RATE) -> list[Path]:
    """Write n_files seeded synthetic voices as utt000.wav, utt001.wav, ..."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_files):
        rng = substream(seed, "voice", i)
        w = _harmonic_voice(rng, duration_s, sample_rate)
        path = out_dir / f"utt{i:03d}.wav"
        save_wav(path, w)
        paths.append(path)
    return paths


def _assign_splits(ids: list[str], counts: SplitCounts, rng) -> dict[str, str]:
    order = list(ids)
    rng.shuffle(order)
    assignment = {}
    for i, uid in enumerate(order):
        assignment[uid] = "train" if i < counts.train_per_class else "dev"
    return assignment


def build_dataset(bonafide_dir, spoof_dir, config: SpoofConfig = SpoofConfig(),
                  counts: SplitCounts = SplitCounts()) -> DatasetManifest:
    """Select bona fide files, synthesize their spoofs, and assign splits.

    Files are taken in sorted name order; each class is shuffled into its
    train/dev split with an independent substream so the two classes stay
    balanced by construction.
    """
    bonafide_dir = Path(bonafide_dir)
    spoof_dir = Path(spoof_dir)
    wavs = sorted(bonafide_dir.glob("*.wav"))
    need = counts.per_class
    if len(wavs) < need:
        raise ValueError(
            f"need {need} bona fide WAV files in {bonafide_dir}, found "
            f"{len(wavs)} (short {need - len(wavs)})")
    wavs = wavs[:need]
    spoof_dir.mkdir(parents=True, exist_ok=True)

    bona_entries = {}
    spoof_entries = {}
    for path in wavs:
        uid = path.stem
        w = resample_to(load_wav(path))
        spoof_uid = f"{uid}_spoof"
        spoof_path = spoof_dir / f"{spoof_uid}.wav"
        save_wav(spoof_path, make_spoof(w, uid, config))
        bona_entries[uid] = (str(path), uid)
        spoof_entries[spoof_uid] = (str(spoof_path), uid)

    split_bona = _assign_splits(sorted(bona_entries), counts,
                                substream(config.seed, "split", BONAFIDE))
    split_spoof = _assign_splits(sorted(spoof_entries), counts,
                                 substream(config.seed, "split", SPOOF))

    entries = []
    for uid in sorted(bona_entries):
        path, source = bona_entries[uid]
        entries.append(ManifestEntry(uid, path, BONAFIDE, split_bona[uid], source))
    for uid in sorted(spoof_entries):
        path, source = spoof_entries[uid]
        entries.append(ManifestEntry(uid, path, SPOOF, split_spoof[uid], source))
    return DatasetManifest(tuple(entries), config.seed)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path", "label", "split", "source_id"])
        for e in manifest.entries:
            writer.writerow([e.uid, e.path, e.label, e.split, e.source_id])


def read_manifest(path, seed: int = 0) -> DatasetManifest:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["id", "path", "label", "split", "source_id"]:
            raise ValueError(f"unexpected manifest header {header}")
        entries = [ManifestEntry(*row) for row in reader]
    return DatasetManifest(tuple(entries), seed)
