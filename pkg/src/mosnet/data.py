"""Listening-test ratings, manifests, splits and similarity labels.

Ratings use one canonical CSV schema (UTF-8, header required)::

    utterance_id,system_id,listener_id,kind,score,is_natural

``kind`` is ``mos`` (score 1-5) or ``similarity`` (integer score 1-4).
Exports from other listening-test tools should be converted to this schema;
:func:`records_from_rows` is the adapter point for already-parsed rows.
"""

from __future__ import annotations

import csv
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rng import make_rng

RATINGS_COLUMNS = ("utterance_id", "system_id", "listener_id", "kind", "score", "is_natural")
MANIFEST_COLUMNS = ("utterance_id", "audio_path")
PAIRS_COLUMNS = ("pair_id", "path_a", "path_b", "label")
SCORE_RANGE = {"mos": (1, 5), "similarity": (1, 4)}
EXPECTED_RATINGS_PER_UTTERANCE = 4
# train / validation / test sizes of the full 20,580-utterance corpus
REFERENCE_SPLIT = (13580, 3000, 4000)
SPLITS = ("train", "val", "test")


class RatingsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RatingRecord:
    utterance_id: str
    system_id: str
    listener_id: str
    score: float
    kind: str = "mos"
    is_natural: bool = False

    def __post_init__(self):
        if self.kind not in SCORE_RANGE:
            raise RatingsFormatError(f"unknown rating kind {self.kind!r}")
        lo, hi = SCORE_RANGE[self.kind]
        if not lo <= self.score <= hi:
            raise RatingsFormatError(
                f"{self.kind} score {self.score} outside [{lo}, {hi}] "
                f"(utterance {self.utterance_id}, listener {self.listener_id})")
        if self.kind == "similarity" and self.score != int(self.score):
            raise RatingsFormatError(f"similarity score must be an integer, got {self.score}")


@dataclass(frozen=True)
class UtteranceSample:
    utterance_id: str
    system_id: str
    audio_path: str | None
    ground_truth: float
    split: str = "train"
    n_ratings: int = 0


@dataclass(frozen=True)
class SimilarityPair:
    path_a: str
    path_b: str
    label: int
    split: str = "train"
    pair_id: str = ""
    system_id: str | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"similarity label must be 0 or 1, got {self.label}")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no", ""):
        return False
    raise RatingsFormatError(f"cannot read {text!r} as a boolean")


def _parse_score(text: str):
    try:
        value = float(text)
    except ValueError:
        raise RatingsFormatError(f"score {text!r} is not a number") from None
    return int(value) if value.is_integer() else value


def records_from_rows(rows) -> list[RatingRecord]:
    """Validate dict rows keyed by :data:`RATINGS_COLUMNS`.

    Duplicate (listener, utterance, kind) triples are rejected.
    """
    records = []
    seen = set()
    for line, row in enumerate(rows, start=2):
        try:
            rec = RatingRecord(
                utterance_id=row["utterance_id"].strip(),
                system_id=row["system_id"].strip(),
                listener_id=row["listener_id"].strip(),
                score=_parse_score(row["score"]),
                kind=row["kind"].strip(),
                is_natural=_parse_bool(row["is_natural"]),
            )
        except RatingsFormatError as exc:
            raise RatingsFormatError(f"row {line}: {exc}") from None
        key = (rec.listener_id, rec.utterance_id, rec.kind)
        if key in seen:
            raise RatingsFormatError(f"row {line}: duplicate rating {key}")
        seen.add(key)
        records.append(rec)
    return records


def load_ratings(path: str | os.PathLike) -> list[RatingRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise RatingsFormatError(f"{path} is empty")
        missing = [c for c in RATINGS_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise RatingsFormatError(f"{path} lacks columns {missing}")
        records = records_from_rows(reader)
    if not records:
        raise RatingsFormatError(f"{path} has no rating rows")
    return records


def save_ratings(records, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RATINGS_COLUMNS)
        for r in records:
            w.writerow([r.utterance_id, r.system_id, r.listener_id, r.kind,
                        repr(r.score), int(r.is_natural)])


def ground_truth(records, kind="mos", exclude_natural=False) -> dict[str, tuple[str, float, int]]:
    """Mean score per utterance: ``{utterance_id: (system_id, mean, n_ratings)}``.

    Utterances rated by a number of listeners other than four are kept, with
    a warning.
    """
    scores = defaultdict(list)
    systems = {}
    for r in records:
        if r.kind != kind or (exclude_natural and r.is_natural):
            continue
        scores[r.utterance_id].append(r.score)
        prev = systems.setdefault(r.utterance_id, r.system_id)
        if prev != r.system_id:
            raise RatingsFormatError(f"utterance {r.utterance_id} tagged with two systems")
    odd = [u for u, s in scores.items() if len(s) != EXPECTED_RATINGS_PER_UTTERANCE]
    if odd:
        warnings.warn(f"{len(odd)} utterances have a rating count other than "
                      f"{EXPECTED_RATINGS_PER_UTTERANCE} (e.g. {odd[0]})", stacklevel=2)
    return {u: (systems[u], float(np.mean(s)), len(s)) for u, s in scores.items()}


def load_manifest(path: str | os.PathLike) -> dict[str, str]:
    """``utterance_id -> audio path``; relative paths resolve against the manifest."""
    base = Path(path).parent
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames[:2]) != list(MANIFEST_COLUMNS):
            raise RatingsFormatError(f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}")
        for row in reader:
            p = Path(row["audio_path"])
            out[row["utterance_id"]] = str(p if p.is_absolute() else base / p)
    return out


def save_manifest(mapping: dict[str, str], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for uid, p in mapping.items():
            w.writerow([uid, p])


def build_samples(records, manifest: dict[str, str] | None = None,
                  exclude_natural=False) -> list[UtteranceSample]:
    truth = ground_truth(records, "mos", exclude_natural)
    manifest = manifest or {}
    return [UtteranceSample(u, sys_id, manifest.get(u), mean, n_ratings=n)
            for u, (sys_id, mean, n) in sorted(truth.items())]


def proportional_counts(total: int, reference=REFERENCE_SPLIT) -> tuple[int, ...]:
    """Scale ``reference`` split sizes to ``total`` items (largest remainder)."""
    ref = np.asarray(reference, dtype=np.float64)
    exact = ref / ref.sum() * total
    counts = np.floor(exact).astype(int)
    for k in np.argsort(-(exact - counts), kind="stable")[: total - counts.sum()]:
        counts[k] += 1
    return tuple(int(c) for c in counts)


def split_dataset(n_items: int, counts, seed=0) -> dict[str, np.ndarray]:
    """Uniform random disjoint index sets of the requested sizes."""
    counts = tuple(int(c) for c in counts)
    if len(counts) != len(SPLITS) or min(counts) < 0:
        raise ValueError("counts must be three non-negative integers")
    if sum(counts) > n_items:
        raise ValueError(f"requested {sum(counts)} items from {n_items}")
    order = make_rng(seed, "split").permutation(n_items)
    out, start = {}, 0
    for name, c in zip(SPLITS, counts):
        out[name] = np.sort(order[start:start + c])
        start += c
    return out


def assign_splits(samples, counts, seed=0) -> list[UtteranceSample]:
    """Return the samples that received a split, tagged with it."""
    idx = split_dataset(len(samples), counts, seed)
    tagged = []
    for name in SPLITS:
        tagged += [replace(samples[k], split=name) for k in idx[name]]
    return tagged


def merge_label(score) -> int:
    """Four-level similarity score to same-speaker label: 1,2 -> 1; 3,4 -> 0."""
    if score not in (1, 2, 3, 4):
        raise ValueError(f"similarity score must be one of 1-4, got {score}")
    return 1 if score <= 2 else 0


def merge_similarity_labels(records, pair_paths: dict[str, tuple[str, str]],
                            test_fraction=0.2, seed=0) -> list[SimilarityPair]:
    """One labelled pair per similarity rating, split 80/20 into train/test.

    ``pair_paths`` maps each rated utterance id to its (converted, reference)
    audio paths.
    """
    sims = [r for r in records if r.kind == "similarity"]
    n_test = int(round(test_fraction * len(sims)))
    test = set(make_rng(seed, "similarity-split").permutation(len(sims))[:n_test].tolist())
    pairs = []
    for k, r in enumerate(sims):
        a, b = pair_paths[r.utterance_id]
        pairs.append(SimilarityPair(a, b, merge_label(r.score), "test" if k in test else "train",
                                    f"{r.utterance_id}:{r.listener_id}", r.system_id))
    return pairs


def load_pairs(path: str | os.PathLike) -> list[SimilarityPair]:
    """Pairs manifest: ``pair_id,path_a,path_b,label`` plus optional
    ``split`` and ``system_id``; a ``score`` column (1-4) may replace ``label``.
    """
    base = Path(path).parent

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else base / p)

    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if not {"pair_id", "path_a", "path_b"} <= set(cols) or not ({"label", "score"} & set(cols)):
            raise RatingsFormatError(f"{path}: pairs manifest needs pair_id,path_a,path_b,label")
        for row in reader:
            if "label" in cols and row["label"] != "":
                label = int(row["label"])
            else:
                label = merge_label(_parse_score(row["score"]))
            pairs.append(SimilarityPair(resolve(row["path_a"]), resolve(row["path_b"]), label,
                                        row.get("split") or "train", row["pair_id"],
                                        row.get("system_id") or None))
    if not pairs:
        raise RatingsFormatError(f"{path} has no pairs")
    return pairs


def save_pairs(pairs, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PAIRS_COLUMNS + ("split", "system_id"))
        for p in pairs:
            w.writerow([p.pair_id, p.path_a, p.path_b, p.label, p.split, p.system_id or ""])
