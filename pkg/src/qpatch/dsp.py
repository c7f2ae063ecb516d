"""Audio front end: WAV loading, resampling, STFT, mel filterbank, log-mel standardization.

All operations are pure functions on immutable inputs. The pipeline per
utterance is: load -> resample to 16 kHz -> STFT (Hann window, power
spectrum) -> mel filterbank energies -> log compression -> per-utterance
standardization.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

# Single numerical-stability constant used across the feature pipeline.
EPS = 1e-8

TARGET_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples in nominal range [-1, 1] with their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"invalid sample rate {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Standardized log-mel matrix, frames (rows) by mel bins (columns)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError("spectrogram must be a 2-D matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrogram contains non-finite entries")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters evaluated on the non-negative FFT bins.

    ``weights`` has one row per filter and one column per FFT bin
    (fft_size // 2 + 1 columns). Triangles peak at height 1 and are
    centered uniformly on the HTK mel scale.
    """

    weights: np.ndarray
    fft_size: int
    sample_rate: int
    f_low: float
    f_high: float
    center_freqs: np.ndarray

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class FrontEndConfig:
    """Parameters of the log-mel front end."""

    sample_rate: int = TARGET_SAMPLE_RATE
    win_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 1024
    n_mels: int = 64
    f_low: float = 0.0
    f_high: float = 8000.0

    @property
    def win_length(self) -> int:
        return int(round(self.win_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "win_ms": self.win_ms,
            "hop_ms": self.hop_ms,
            "fft_size": self.fft_size,
            "n_mels": self.n_mels,
            "f_low": self.f_low,
            "f_high": self.f_high,
            "eps": EPS,
        }


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window w[n] = 0.5 * (1 - cos(2*pi*n/L))."""
    n = np.arange(length, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / length))


def stft(w: Waveform, win_ms: float = 25.0, hop_ms: float = 10.0,
         fft_size: int = 1024) -> np.ndarray:
    """Short-time Fourier transform with a periodic Hann window.

    Returns a complex matrix with one row per frame and fft_size // 2 + 1
    columns (non-negative frequency bins). Frames are hopped by hop_ms,
    windowed, then zero-padded to fft_size; trailing samples shorter than
    one window are dropped.
    """
    win_len = int(round(win_ms * w.sample_rate / 1000.0))
    hop_len = int(round(hop_ms * w.sample_rate / 1000.0))
    if win_len <= 0 or hop_len <= 0:
        raise ValueError("window and hop must be positive")
    if fft_size < win_len:
        raise ValueError(f"fft_size {fft_size} shorter than window ({win_len} samples)")
    if w.samples.size < win_len:
        raise ValueError(
            f"signal too short: {w.samples.size} samples < one {win_len}-sample window")
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, win_len)[::hop_len]
    windowed = frames * hann_window(win_len)
    return np.fft.rfft(windowed, n=fft_size, axis=1)


def mel_energies(stft_out: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    """Filterbank energies E(f, tau) = sum_k |X(k, tau)|^2 H_f(k), frames x n_mels."""
    spectrum = np.asarray(stft_out)
    if spectrum.ndim != 2 or spectrum.shape[1] != fb.weights.shape[1]:
        raise ValueError(
            f"bin count mismatch: spectrum has {spectrum.shape[-1]} bins, "
            f"filterbank expects {fb.weights.shape[1]}")
    power = np.abs(spectrum) ** 2
    return power @ fb.weights.T


def log_standardize(energies: np.ndarray) -> Spectrogram:
    """Log-compress energies and standardize over all time-frequency entries.

    M = log(E + eps), then (M - mean) / (std + eps) with the population
    standard deviation taken over the whole utterance.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if np.any(energies < 0):
        raise ValueError("energies must be non-negative")
    logmel = np.log(energies + EPS)
    mu = logmel.mean()
    sigma = logmel.std()
    return Spectrogram((logmel - mu) / (sigma + EPS))


def build_mel_filterbank(n_mels: int = 64, fft_size: int = 1024,
                         sample_rate: int = TARGET_SAMPLE_RATE,
                         f_low: float = 0.0, f_high: float = 8000.0) -> MelFilterbank:
    """Build triangular filters with centers uniformly spaced on the HTK mel scale.

    Triangles have unnormalized peak height 1; adjacent filters cross at
    each other's feet.
    """
    if not (0.0 <= f_low < f_high <= sample_rate / 2.0):
        raise ValueError(
            f"band edges must satisfy 0 <= f_low < f_high <= sr/2, "
            f"got [{f_low}, {f_high}] at sr={sample_rate}")
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    mel_pts = np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    n_bins = fft_size // 2 + 1
    bin_freqs = np.arange(n_bins, dtype=np.float64) * sample_rate / fft_size
    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        weights[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterbank(weights=weights, fft_size=fft_size, sample_rate=sample_rate,
                         f_low=f_low, f_high=f_high, center_freqs=hz_pts[1:-1])


def resample_to(w: Waveform, target_rate: int = TARGET_SAMPLE_RATE) -> Waveform:
    """Windowed-sinc polyphase resampling; pass-through when already at target."""
    if w.sample_rate == target_rate:
        return w
    g = math.gcd(target_rate, w.sample_rate)
    samples = resample_poly(w.samples, target_rate // g, w.sample_rate // g)
    return Waveform(samples, target_rate)


def logmel_spectrogram(w: Waveform, config: FrontEndConfig = FrontEndConfig()) -> Spectrogram:
    """Full front end: resample, STFT, mel energies, log compression, standardization."""
    w = resample_to(w, config.sample_rate)
    fb = build_mel_filterbank(config.n_mels, config.fft_size, config.sample_rate,
                              config.f_low, config.f_high)
    spectrum = stft(w, config.win_ms, config.hop_ms, config.fft_size)
    return log_standardize(mel_energies(spectrum, fb))


def load_wav(path) -> Waveform:
    """Read a PCM-16, PCM-32, or float WAV file; stereo is averaged to mono."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    if samples.ndim == 2:
        warnings.warn(f"{path}: averaging {samples.shape[1]} channels to mono")
        samples = samples.mean(axis=1)
    return Waveform(np.asarray(samples, dtype=np.float64), int(rate))


def save_wav(path, w: Waveform) -> None:
    """Write 16-bit PCM; values outside [-1, 1] are clipped with a warning."""
    samples = w.samples
    n_clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    if n_clipped:
        warnings.warn(f"{path}: clipping {n_clipped}/{samples.size} samples to [-1, 1]")
        samples = np.clip(samples, -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype(np.int16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), w.sample_rate, pcm)


def save_spectrogram(spec: Spectrogram, csv_path, config: FrontEndConfig) -> None:
    """Persist a spectrogram as CSV (row = frame) plus a JSON config sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(csv_path, spec.values, delimiter=",", fmt="%.17g")
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def load_spectrogram(csv_path) -> Spectrogram:
    values = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    return Spectrogram(values)
