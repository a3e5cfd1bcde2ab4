"""Audio ingestion and magnitude-spectrogram features.

Everything here is a pure function of its inputs. Waveforms are resampled to
16 kHz and framed into 512-point Hann-windowed segments hopped by 256 samples,
giving 257 magnitude bins per frame.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

TARGET_RATE_HZ = 16000
FRAME_SIZE = 512
FRAME_SHIFT = 256
N_BINS = FRAME_SIZE // 2 + 1

# Resampler design constants.
CUTOFF_FRACTION = 0.9
KAISER_BETA = 8.0
TAPS_PER_PHASE = 16


class AudioFormatError(ValueError):
    """Raised for unreadable, unsupported or empty audio."""


@dataclass(frozen=True)
class Waveform:
    """Mono samples in [-1, 1] with their sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if samples.size == 0:
            raise AudioFormatError("waveform is empty")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class Spectrogram:
    """Non-negative STFT magnitudes, one row per frame."""

    frames: np.ndarray
    frame_shift_s: float = FRAME_SHIFT / TARGET_RATE_HZ
    frame_size_s: float = FRAME_SIZE / TARGET_RATE_HZ

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.frames
        return self.frames.astype(dtype)

    def __len__(self):
        return self.n_frames


def n_frames_for(n_samples: int) -> int:
    """Frame count produced by :func:`stft_magnitude` for ``n_samples``."""
    if n_samples < FRAME_SIZE:
        raise ValueError(f"need at least {FRAME_SIZE} samples, got {n_samples}")
    return 1 + (n_samples - FRAME_SIZE) // FRAME_SHIFT


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit PCM into int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype.kind == "f":
        return np.clip(data.astype(np.float64), -1.0, 1.0)
    raise AudioFormatError(f"unsupported sample type {data.dtype}")


def read_wav(path: str | os.PathLike) -> Waveform:
    """Read a RIFF/WAVE file without resampling; channels are averaged."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, OSError, EOFError) as exc:
        raise AudioFormatError(f"cannot read {path}: {exc}") from exc
    samples = _pcm_to_float(np.asarray(data))
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioFormatError(f"{path} contains no samples")
    return Waveform(samples, rate)


def write_wav(path: str | os.PathLike, w: Waveform) -> None:
    """Write ``w`` as 16-bit PCM."""
    pcm = np.round(np.clip(w.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    wavfile.write(path, w.sample_rate_hz, pcm)


def load_waveform(path: str | os.PathLike, target_rate_hz: int = TARGET_RATE_HZ) -> Waveform:
    """Load a WAV file as a mono waveform at ``target_rate_hz``."""
    return resample(read_wav(path), target_rate_hz)


def _lowpass(up: int, down: int) -> np.ndarray:
    ratio = max(up, down)
    numtaps = 2 * TAPS_PER_PHASE * ratio + 1
    h = firwin(numtaps, CUTOFF_FRACTION / ratio, window=("kaiser", KAISER_BETA))
    return h * up


def resample(w: Waveform, target_rate_hz: int) -> Waveform:
    """Band-limited rational resampling with a Kaiser-windowed sinc.

    The cutoff sits at 0.9 of the Nyquist frequency of the lower of the two
    rates. Output length is ``round(len(w) * target / source)``.
    """
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz <= 0:
        raise ValueError("target rate must be positive")
    if target_rate_hz == w.sample_rate_hz:
        return w
    g = gcd(target_rate_hz, w.sample_rate_hz)
    up, down = target_rate_hz // g, w.sample_rate_hz // g
    y = resample_poly(w.samples, up, down, window=_lowpass(up, down))
    n_out = int(round(len(w) * target_rate_hz / w.sample_rate_hz))
    if n_out == 0:
        raise AudioFormatError("resampled waveform would be empty")
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.pad(y, (0, n_out - y.size))
    return Waveform(y, target_rate_hz)


def hann_window(n: int = FRAME_SIZE) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray) -> np.ndarray:
    """Split ``samples`` into overlapping frames starting at 0, 256, 512, ..."""
    samples = np.asarray(samples, dtype=np.float64)
    n_frames_for(samples.size)
    windows = np.lib.stride_tricks.sliding_window_view(samples, FRAME_SIZE)
    return windows[::FRAME_SHIFT]


def stft_magnitude(w: Waveform | np.ndarray) -> Spectrogram:
    """Raw (uncompressed) magnitude STFT, shape ``(n_frames, 257)``.

    No centre padding is applied, so the first frame covers samples 0..511.
    """
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    frames = frame_signal(samples) * hann_window()
    return Spectrogram(np.abs(np.fft.rfft(frames, axis=1)))


def save_spectrogram_csv(spec: Spectrogram | np.ndarray, path: str | os.PathLike) -> None:
    """Debug dump: one row per frame, 257 decimal columns."""
    frames = np.asarray(spec)
    header = ",".join(f"bin_{k}" for k in range(frames.shape[1]))
    np.savetxt(path, frames, delimiter=",", header=header, comments="", fmt="%.17g")


def load_spectrogram_csv(path: str | os.PathLike) -> Spectrogram:
    return Spectrogram(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))
