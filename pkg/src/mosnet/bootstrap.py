"""Inherent predictability of listening-test scores by listener resampling.

Each replication draws half of the listeners without replacement, averages
only their ratings per utterance (MOS_sub) and compares the result with the
average over the full panel (MOS_all). Utterances that none of the sampled
listeners rated are dropped for that replication. System-level scores are
means over the same surviving utterances on both sides.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import ConstantInputError, mse, pearson_lcc, spearman_srcc
from .rng import make_rng

METRICS = ("lcc", "srcc", "mse")


@dataclass
class ListenerPanel:
    """Ratings as parallel integer-coded arrays."""

    listener: np.ndarray
    utterance: np.ndarray
    system: np.ndarray
    score: np.ndarray
    is_natural: np.ndarray
    listener_ids: list
    utterance_ids: list
    system_ids: list

    def __post_init__(self):
        self.score = np.asarray(self.score, dtype=np.float64)
        if np.any(self.score < 1) or np.any(self.score > 5):
            raise ValueError("scores must lie in [1, 5]")
        rated = np.bincount(self.utterance, minlength=len(self.utterance_ids))
        if np.any(rated == 0):
            raise ValueError("every utterance needs at least one rating")

    @property
    def n_listeners(self) -> int:
        return len(self.listener_ids)

    @property
    def n_utterances(self) -> int:
        return len(self.utterance_ids)

    @classmethod
    def from_records(cls, records, kind="mos") -> "ListenerPanel":
        rows = [r for r in records if r.kind == kind]
        if not rows:
            raise ValueError(f"no {kind} ratings")
        l_ids = sorted({r.listener_id for r in rows})
        u_ids = sorted({r.utterance_id for r in rows})
        s_ids = sorted({r.system_id for r in rows})
        lk = {v: k for k, v in enumerate(l_ids)}
        uk = {v: k for k, v in enumerate(u_ids)}
        sk = {v: k for k, v in enumerate(s_ids)}
        utt_system = np.zeros(len(u_ids), dtype=np.int64)
        for r in rows:
            utt_system[uk[r.utterance_id]] = sk[r.system_id]
        utt = np.array([uk[r.utterance_id] for r in rows])
        return cls(np.array([lk[r.listener_id] for r in rows]), utt, utt_system,
                   np.array([r.score for r in rows], dtype=np.float64),
                   np.array([r.is_natural for r in rows], dtype=bool), l_ids, u_ids, s_ids)

    def without_natural(self) -> "ListenerPanel":
        """Drop natural-speech ratings and any utterance left unrated."""
        keep = ~self.is_natural
        u_used = np.unique(self.utterance[keep])
        remap = -np.ones(self.n_utterances, dtype=np.int64)
        remap[u_used] = np.arange(u_used.size)
        return ListenerPanel(self.listener[keep], remap[self.utterance[keep]],
                             self.system[u_used], self.score[keep], self.is_natural[keep],
                             self.listener_ids, [self.utterance_ids[k] for k in u_used],
                             self.system_ids)

    def utterance_means(self, select=None):
        """Per-utterance mean over the selected ratings and the rating counts."""
        u, s = self.utterance, self.score
        if select is not None:
            u, s = u[select], s[select]
        counts = np.bincount(u, minlength=self.n_utterances)
        sums = np.bincount(u, weights=s, minlength=self.n_utterances)
        with np.errstate(invalid="ignore", divide="ignore"):
            return sums / counts, counts


@dataclass
class BootstrapReport:
    replications: int
    subset_size: int
    utterance: dict
    system: dict
    raw_utterance: np.ndarray = field(repr=False)
    raw_system: np.ndarray = field(repr=False)

    def rows(self):
        return [{"level": lvl, **vals} for lvl, vals in
                (("utterance", self.utterance), ("system", self.system))]

    def to_csv(self, path, raw=False):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if raw:
                w.writerow(["replication"] + [f"utterance_{m}" for m in METRICS]
                           + [f"system_{m}" for m in METRICS])
                for k, (a, b) in enumerate(zip(self.raw_utterance, self.raw_system)):
                    w.writerow([k] + [repr(float(v)) for v in a] + [repr(float(v)) for v in b])
            else:
                w.writerow(("level",) + METRICS)
                for row in self.rows():
                    w.writerow([row["level"]] + [repr(row[m]) for m in METRICS])


def _metrics(a, b):
    try:
        return pearson_lcc(a, b), spearman_srcc(a, b), mse(a, b)
    except ConstantInputError:
        return np.nan, np.nan, mse(a, b)


def _replicate(panel, mos_all, subset_size, seed, rep):
    rng = make_rng(seed, "bootstrap", rep)
    chosen = rng.choice(panel.n_listeners, subset_size, replace=False)
    mos_sub, counts = panel.utterance_means(np.isin(panel.listener, chosen))
    covered = counts > 0
    if covered.sum() < 2:
        raise ValueError(f"replication {rep}: fewer than two utterances rated by the subset")
    utt = _metrics(mos_sub[covered], mos_all[covered])
    systems = panel.system[covered]
    n_sys = len(panel.system_ids)
    per_sys = np.bincount(systems, minlength=n_sys)
    present = per_sys > 0
    if present.sum() < 2:
        sys_vals = (np.nan, np.nan, np.nan)
    else:
        sub = np.bincount(systems, weights=mos_sub[covered], minlength=n_sys)[present]
        full = np.bincount(systems, weights=mos_all[covered], minlength=n_sys)[present]
        sys_vals = _metrics(sub / per_sys[present], full / per_sys[present])
    return utt, sys_vals


def default_subset_size(n_listeners: int) -> int:
    return (n_listeners + 1) // 2


def inherent_predictability(panel: ListenerPanel, replications=1000, subset_size=None,
                            seed=0, threads=1) -> BootstrapReport:
    """Mean LCC / SRCC / MSE between subset and full-panel MOS.

    Every replication derives its own random stream from ``(seed, index)``,
    so results do not depend on ``threads``.
    """
    if subset_size is None:
        subset_size = default_subset_size(panel.n_listeners)
    if not 1 <= subset_size <= panel.n_listeners:
        raise ValueError(f"subset size {subset_size} not in [1, {panel.n_listeners}]")
    mos_all, _ = panel.utterance_means()

    def run(rep):
        return _replicate(panel, mos_all, subset_size, seed, rep)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(replications)))
    else:
        results = [run(k) for k in range(replications)]
    raw_u = np.array([r[0] for r in results], dtype=np.float64)
    raw_s = np.array([r[1] for r in results], dtype=np.float64)
    mean_u = dict(zip(METRICS, (float(v) for v in raw_u.mean(axis=0))))
    mean_s = dict(zip(METRICS, (float(v) for v in raw_s.mean(axis=0))))
    return BootstrapReport(replications, subset_size, mean_u, mean_s, raw_u, raw_s)


def synth_panel(n_utterances: int, n_systems: int, n_listeners: int, ratings_per_utterance=4,
                noise_sigma=0.7, seed=0, utterance_sigma=0.5) -> ListenerPanel:
    """Synthetic listening test with real-valued ratings clamped to [1, 5].

    System means are uniform on [1, 5]; utterance true scores scatter around
    them with ``utterance_sigma``; every rating adds independent
    ``N(0, noise_sigma^2)`` listener noise. Truth and listener assignment use
    a stream separate from the rating noise, so panels that differ only in
    ``noise_sigma`` share their ground truth.
    """
    if ratings_per_utterance > n_listeners:
        raise ValueError("more ratings per utterance than listeners")
    if n_systems < 1 or n_utterances < 1:
        raise ValueError("need at least one system and one utterance")
    truth_rng = make_rng(seed, "panel-truth")
    noise_rng = make_rng(seed, "panel-noise")
    sys_mean = truth_rng.uniform(1, 5, n_systems)
    utt_system = np.arange(n_utterances) % n_systems
    true = np.clip(sys_mean[utt_system] + truth_rng.normal(0, utterance_sigma, n_utterances), 1, 5)
    listeners = np.concatenate([truth_rng.choice(n_listeners, ratings_per_utterance, replace=False)
                                for _ in range(n_utterances)])
    utt = np.repeat(np.arange(n_utterances), ratings_per_utterance)
    noise = noise_rng.normal(0, 1, utt.size) * noise_sigma
    scores = np.clip(true[utt] + noise, 1, 5)
    panel = ListenerPanel(listeners, utt, utt_system, scores, np.zeros(utt.size, bool),
                          [f"L{k:03d}" for k in range(n_listeners)],
                          [f"U{k:04d}" for k in range(n_utterances)],
                          [f"S{k:02d}" for k in range(n_systems)])
    panel.true_scores = true
    return panel
