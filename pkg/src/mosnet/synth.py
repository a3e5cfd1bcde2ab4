"""Desk-scale synthetic corpora standing in for real listening-test data.

MOS corpus: every system gets a quality ``rho`` in [0, 1]. Its utterances are
harmonic tones buried in white noise whose SNR rises with ``rho``, and their
ground-truth MOS is ``1 + 4 * rho`` plus a little jitter, so cleaner audio
maps to higher scores.

Pair corpus: every pseudo-speaker has its own fundamental frequency and
harmonic envelope; same-speaker pairs share them, different-speaker pairs
do not.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import RatingRecord, SimilarityPair, save_manifest, save_pairs, save_ratings
from .dsp import TARGET_RATE_HZ, Waveform, write_wav
from .rng import make_rng

SNR_DB_RANGE = (-10.0, 40.0)
DURATION_RANGE_S = (0.5, 1.5)
MOS_JITTER = 0.1
RATINGS_PER_UTTERANCE = 4


@dataclass
class SynthCorpus:
    waveforms: dict[str, Waveform]
    records: list[RatingRecord]
    quality: dict[str, float]
    system_of: dict[str, str]
    paths: dict[str, str] = field(default_factory=dict)

    @property
    def utterance_ids(self) -> list[str]:
        return list(self.waveforms)

    def ground_truth(self) -> dict[str, float]:
        sums: dict[str, list] = {}
        for r in self.records:
            sums.setdefault(r.utterance_id, []).append(r.score)
        return {u: float(np.mean(s)) for u, s in sums.items()}


def harmonic_tone(f0, duration_s, rng, n_harmonics=8, envelope=None, rate=TARGET_RATE_HZ):
    """Sum of harmonics of ``f0`` with a slow vibrato and random phases."""
    n = int(round(duration_s * rate))
    t = np.arange(n) / rate
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * f0 * np.cumsum(vibrato) / rate
    amps = envelope if envelope is not None else 1.0 / np.arange(1, n_harmonics + 1)
    x = np.zeros(n)
    for k, a in enumerate(amps, start=1):
        if k * f0 < rate / 2:
            x += a * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    fade = min(n // 10, 400)
    ramp = np.linspace(0, 1, fade)
    x[:fade] *= ramp
    x[n - fade:] *= ramp[::-1]
    return x


def add_noise(x, snr_db, rng):
    noise = rng.standard_normal(x.size)
    p_sig = np.mean(x ** 2)
    noise *= np.sqrt(p_sig / (10 ** (snr_db / 10)) / np.mean(noise ** 2))
    return x + noise


def _normalise(x, peak=0.5):
    return x * (peak / np.max(np.abs(x)))


def integer_ratings(target, rng, n=RATINGS_PER_UTTERANCE, lo=1, hi=5):
    """``n`` integer ratings in ``[lo, hi]`` whose mean is ``round(n*target)/n``.

    Listener disagreement is simulated by moving single points between
    listeners, which leaves the mean unchanged.
    """
    total = int(np.clip(round(n * target), n * lo, n * hi))
    base, extra = divmod(total, n)
    ratings = np.full(n, base)
    ratings[:extra] += 1
    for _ in range(rng.integers(0, 3)):
        i, j = rng.choice(n, 2, replace=False)
        if ratings[i] < hi and ratings[j] > lo:
            ratings[i] += 1
            ratings[j] -= 1
    return rng.permutation(ratings)


def system_qualities(n_systems, rng) -> np.ndarray:
    """Jittered grid on [0, 1] so qualities spread over the whole range."""
    return (rng.permutation(n_systems) + rng.uniform(0, 1, n_systems)) / n_systems


def synth_corpus(n_systems: int, utterances_per_system: int, seed=0,
                 out_dir: str | os.PathLike | None = None, n_listeners=16) -> SynthCorpus:
    """Generate audio plus four pseudo-listener MOS ratings per utterance.

    With ``out_dir`` the audio is written as 16-bit WAV under ``wav/`` along
    with ``ratings.csv`` and ``manifest.csv``.
    """
    if n_systems < 1 or utterances_per_system < 1:
        raise ValueError("need at least one system and one utterance per system")
    rng = make_rng(seed, "synth-corpus")
    quality = system_qualities(n_systems, rng)
    lo_db, hi_db = SNR_DB_RANGE
    waveforms, records, system_of, q = {}, [], {}, {}
    for s in range(n_systems):
        sys_id = f"S{s:02d}"
        q[sys_id] = float(quality[s])
        for u in range(utterances_per_system):
            uid = f"{sys_id}_U{u:03d}"
            tone = harmonic_tone(rng.uniform(100, 300), rng.uniform(*DURATION_RANGE_S), rng)
            audio = _normalise(add_noise(tone, lo_db + (hi_db - lo_db) * quality[s], rng))
            waveforms[uid] = Waveform(audio, TARGET_RATE_HZ)
            system_of[uid] = sys_id
            target = np.clip(1 + 4 * quality[s] + rng.normal(0, MOS_JITTER), 1, 5)
            listeners = rng.choice(n_listeners, RATINGS_PER_UTTERANCE, replace=False)
            for lid, score in zip(listeners, integer_ratings(target, rng)):
                records.append(RatingRecord(uid, sys_id, f"L{lid:03d}", int(score)))
    corpus = SynthCorpus(waveforms, records, q, system_of)
    if out_dir is not None:
        write_corpus(corpus, out_dir)
    return corpus


def write_corpus(corpus: SynthCorpus, out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    for uid, w in corpus.waveforms.items():
        write_wav(out / "wav" / f"{uid}.wav", w)
        corpus.paths[uid] = f"wav/{uid}.wav"
    save_ratings(corpus.records, out / "ratings.csv")
    save_manifest(corpus.paths, out / "manifest.csv")


@dataclass
class PairCorpus:
    waveforms_a: list[Waveform]
    waveforms_b: list[Waveform]
    scores: np.ndarray
    labels: np.ndarray
    pairs: list[SimilarityPair] = field(default_factory=list)


def _speaker_bank(n_speakers, rng):
    f0s = 90.0 * (1.4 ** np.arange(n_speakers)) * rng.uniform(0.97, 1.03, n_speakers)
    envelopes = []
    for _ in range(n_speakers):
        peak = rng.uniform(1, 6)
        width = rng.uniform(1.0, 3.0)
        k = np.arange(1, 11)
        envelopes.append(np.exp(-0.5 * ((k - peak) / width) ** 2) + 0.05)
    return rng.permutation(f0s), envelopes


def synth_pairs(n_pairs: int, n_speakers=5, seed=0, snr_db=25.0, test_fraction=0.2,
                out_dir: str | os.PathLike | None = None) -> PairCorpus:
    """Balanced same/different-speaker pairs with four-level scores.

    Same-speaker pairs get score 1 or 2, different-speaker pairs 3 or 4, so
    the merged label is 1 exactly for same-speaker pairs.
    """
    if n_speakers < 2:
        raise ValueError("need at least two speakers")
    rng = make_rng(seed, "synth-pairs")
    f0s, envelopes = _speaker_bank(n_speakers, rng)

    def utterance(spk):
        f0 = f0s[spk] * rng.uniform(0.98, 1.02)
        tone = harmonic_tone(f0, rng.uniform(*DURATION_RANGE_S), rng, envelope=envelopes[spk])
        return Waveform(_normalise(add_noise(tone, snr_db, rng)), TARGET_RATE_HZ)

    wa, wb, scores = [], [], []
    for k in range(n_pairs):
        same = k % 2 == 0
        a = int(rng.integers(n_speakers))
        b = a if same else int((a + rng.integers(1, n_speakers)) % n_speakers)
        wa.append(utterance(a))
        wb.append(utterance(b))
        scores.append(int(rng.integers(1, 3)) if same else int(rng.integers(3, 5)))
    scores = np.array(scores)
    labels = (scores <= 2).astype(int)
    n_test = int(round(test_fraction * n_pairs))
    test = set(rng.permutation(n_pairs)[:n_test].tolist())
    corpus = PairCorpus(wa, wb, scores, labels)
    paths = []
    if out_dir is not None:
        out = Path(out_dir)
        (out / "wav").mkdir(parents=True, exist_ok=True)
        for k in range(n_pairs):
            pa, pb = f"wav/P{k:04d}_a.wav", f"wav/P{k:04d}_b.wav"
            write_wav(out / pa, wa[k])
            write_wav(out / pb, wb[k])
            paths.append((pa, pb))
    for k in range(n_pairs):
        pa, pb = paths[k] if paths else ("", "")
        corpus.pairs.append(SimilarityPair(pa, pb, int(labels[k]),
                                           "test" if k in test else "train", f"P{k:04d}"))
    if out_dir is not None:
        save_pairs(corpus.pairs, Path(out_dir) / "pairs.csv")
    return corpus
