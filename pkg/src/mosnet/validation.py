"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .dsp import Spectrogram


def check_spectrogram(spec, n_bins=None, dtype=np.float32) -> np.ndarray:
    """Return ``spec`` as a finite 2-D ``(frames, bins)`` array."""
    arr = spec.frames if isinstance(spec, Spectrogram) else spec
    arr = np.asarray(arr, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"spectrogram must be 2-D (frames, bins), got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("spectrogram has no frames")
    if n_bins is not None and arr.shape[1] != n_bins:
        raise ValueError(f"expected {n_bins} frequency bins, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("spectrogram contains non-finite values")
    return arr


def check_spectrograms(X, n_bins=None, dtype=np.float32) -> list[np.ndarray]:
    """Validate a sequence of variable-length spectrograms sharing one bin count."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        raise ValueError("expected a sequence of spectrograms, got a single 2-D array")
    specs = [check_spectrogram(s, n_bins, dtype) for s in X]
    if not specs:
        raise ValueError("no spectrograms given")
    bins = {s.shape[1] for s in specs}
    if len(bins) > 1:
        raise ValueError(f"spectrograms disagree on bin count: {sorted(bins)}")
    return specs


def check_pairs(X, n_bins=None, dtype=np.float32):
    """Split a sequence of ``(spec_a, spec_b)`` pairs into two validated lists."""
    X = list(X)
    if not X:
        raise ValueError("no pairs given")
    if any(len(p) != 2 for p in X):
        raise ValueError("each sample must be a (spec_a, spec_b) pair")
    a = check_spectrograms([p[0] for p in X], n_bins, dtype)
    b = check_spectrograms([p[1] for p in X], a[0].shape[1], dtype)
    return a, b


def check_targets(y, n, low=None, high=None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != n:
        raise ValueError(f"got {y.size} targets for {n} samples")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if (low is not None and np.any(y < low)) or (high is not None and np.any(y > high)):
        raise ValueError(f"targets must lie in [{low}, {high}]")
    return y
