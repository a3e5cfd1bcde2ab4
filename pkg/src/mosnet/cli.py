"""Command-line front end: ``mosnet <command> [options]``.

Every command accepts ``--config FILE`` (``key=value`` lines, ``#`` comments,
keys named like the long flags), and explicit flags override the file.
Outputs go to ``--out``; relative paths resolve against ``$MOSNET_OUTPUT_ROOT``
when it is set. Exit codes: 0 success, 1 invalid input or configuration,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import ListenerPanel, inherent_predictability, synth_panel
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (SPLITS, RatingRecord, assign_splits, build_samples, ground_truth,
                   load_manifest, load_pairs, load_ratings, proportional_counts, save_ratings)
from .dsp import load_waveform, stft_magnitude
from .metrics import (ConstantInputError, binary_accuracy, mse, pearson_lcc,
                      rating_distribution, spearman_srcc, system_aggregate, EvalReport)
from .models import MOS_ARCHITECTURES, ModelConfig, build_model, predict_many
from .reporting import (format_reports, format_table, histogram_svg, line_svg, scatter_svg,
                        write_csv, write_reports_csv, write_text)
from .synth import synth_corpus, synth_pairs
from .training import (Dataset, TrainingConfig, TrainingDivergedError, predict_similarity, train,
                       train_similarity)

OUTPUT_ROOT_ENV = "MOSNET_OUTPUT_ROOT"
EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2
PREDICTION_COLUMNS = ("utterance_id", "predicted_mos", "trace_path", "error")


class UsageError(ValueError):
    """Bad flags, config keys or values."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- config ---

def read_config(path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _apply_config(parser: argparse.ArgumentParser, config: dict[str, str]) -> None:
    """Install config values as parser defaults so explicit flags still win."""
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, value in config.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for {parser.prog}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = _parse_bool(value)
            defaults[key] = flag
        elif action.type is not None:
            try:
                defaults[key] = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key}: {exc}") from exc
        else:
            defaults[key] = value
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config key {key}: {value!r} not one of {list(action.choices)}")
    parser.set_defaults(**defaults)


def resolve_output(path, command: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if path is None:
        return Path(root or "runs") / command
    p = Path(path)
    return p if p.is_absolute() or not root else Path(root) / p


def prepare_output(out: Path, overwrite: bool) -> Path:
    if out.exists() and (not out.is_dir() or any(out.iterdir())) and not overwrite:
        raise UsageError(f"output directory {out} exists and is not empty; pass --overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def echo_config(args, out: Path) -> None:
    lines = []
    for key, value in sorted(vars(args).items()):
        if key.startswith("_"):
            continue
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={'' if value is None else value}")
    write_text(out / "config.txt", "\n".join(lines) + "\n")


# --------------------------------------------------------------- helpers ---

def _features(paths, threads=1):
    """Spectrogram per path; failures are returned as exception objects."""
    def one(path):
        try:
            return stft_magnitude(load_waveform(path)).frames.astype(np.float32)
        except (OSError, ValueError) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, paths))
    return [one(p) for p in paths]


def _require_features(ids, feats):
    bad = [f"{u}: {f}" for u, f in zip(ids, feats) if isinstance(f, Exception)]
    if bad:
        raise UsageError("could not read audio:\n  " + "\n  ".join(bad[:20]))
    return feats


def _safe_metric(fn, a, b):
    try:
        return fn(a, b)
    except (ConstantInputError, ValueError):
        return float("nan")


def level_reports(system_ids, preds, truth) -> tuple[EvalReport, EvalReport]:
    """Both report levels; correlations are NaN where a level is degenerate."""
    def one(p, t, level):
        return EvalReport(level, _safe_metric(pearson_lcc, p, t), _safe_metric(spearman_srcc, p, t),
                          mse(p, t), len(p))

    agg = system_aggregate(zip(system_ids, preds, truth))
    return (one(preds, truth, "utterance"),
            one([a[1] for a in agg], [a[2] for a in agg], "system"))


def _model_config(args, n_bins=257) -> ModelConfig:
    return ModelConfig(args.architecture, tuple(args.channels), args.blstm_hidden,
                       args.fc_hidden, args.dropout, args.scale, n_bins)


def _training_config(args) -> TrainingConfig:
    return TrainingConfig(alpha=getattr(args, "alpha", 1.0), batch_size=args.batch_size,
                          learning_rate=args.learning_rate, patience_epochs=args.patience,
                          max_epochs=args.max_epochs, seed=args.seed,
                          mask_padding=not getattr(args, "no_mask_padding", False))


# -------------------------------------------------------------- commands ---

def cmd_train(args, out: Path) -> int:
    records = load_ratings(args.ratings)
    manifest = load_manifest(args.manifest or Path(args.ratings).with_name("manifest.csv"))
    samples = build_samples(records, manifest, exclude_natural=args.exclude_natural)
    missing = [s.utterance_id for s in samples if s.audio_path is None]
    if missing:
        raise UsageError(f"{len(missing)} rated utterances absent from the manifest: "
                         + ", ".join(missing[:10]))
    counts = args.split or proportional_counts(len(samples))
    if len(counts) != 3:
        raise UsageError("--split needs three counts: train,val,test")
    cfg = _model_config(args)
    tcfg = _training_config(args)
    tagged = assign_splits(samples, counts, seed=args.seed)
    write_csv(out / "splits.csv", ("utterance_id", "system_id", "split", "ground_truth"),
              [(s.utterance_id, s.system_id, s.split, s.ground_truth) for s in tagged])
    feats = _require_features([s.utterance_id for s in tagged],
                              _features([s.audio_path for s in tagged], args.threads))
    sets = {}
    for name in SPLITS:
        idx = [k for k, s in enumerate(tagged) if s.split == name]
        sets[name] = Dataset([feats[k] for k in idx], [tagged[k].ground_truth for k in idx],
                             [tagged[k].utterance_id for k in idx],
                             [tagged[k].system_id for k in idx])
    if len(sets["train"]) == 0:
        raise UsageError("training split is empty")
    val = sets["val"] if len(sets["val"]) else sets["train"]
    model = build_model(cfg, seed=args.seed)
    model, history = train(model, sets["train"], val, tcfg)
    save_checkpoint(model, out / "model.ckpt")
    history.to_csv(out / "history.csv")
    text = (f"epochs run: {len(history.records)}\nbest epoch: {history.best_epoch}\n"
            f"stop reason: {history.stop_reason}\n")
    test = sets["test"]
    if len(test):
        preds = [p.utterance_score for p in predict_many(model, test.specs)]
        reports = level_reports(test.system_ids, preds, test.targets)
        write_reports_csv(out / "test_report.csv", reports)
        text += "\n" + format_reports(reports)
    write_text(out / "summary.txt", text)
    print(text, end="")
    return EXIT_OK


def cmd_predict(args, out: Path) -> int:
    model = load_checkpoint(args.checkpoint)
    if model.config.architecture not in MOS_ARCHITECTURES:
        raise UsageError(f"{args.checkpoint} holds a {model.config.architecture} model, not a MOS model")
    manifest = load_manifest(args.manifest)
    ids = list(manifest)
    feats = _features([manifest[u] for u in ids], args.threads)
    ok = [k for k, f in enumerate(feats) if not isinstance(f, Exception)]
    preds = dict(zip(ok, predict_many(model, [feats[k] for k in ok], args.batch_size)))
    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    rows, n_failed = [], 0
    for k, uid in enumerate(ids):
        if k not in preds:
            n_failed += 1
            rows.append((uid, "", "", str(feats[k]).replace("\n", " ")))
            continue
        p = preds[k]
        trace = trace_dir / f"{uid}.csv"
        write_csv(trace, ("frame", "score"), [(t, float(v)) for t, v in enumerate(p.frame_scores)])
        rows.append((uid, float(p.utterance_score), f"traces/{uid}.csv", ""))
    write_csv(out / "predictions.csv", PREDICTION_COLUMNS, rows)
    print(f"predicted {len(ok)} of {len(ids)} utterances -> {out / 'predictions.csv'}")
    if n_failed:
        print(f"{n_failed} utterances failed; see the error column", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def read_predictions(path) -> dict[str, float]:
    preds = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"utterance_id", "predicted_mos"} <= set(reader.fieldnames):
            raise UsageError(f"{path}: needs utterance_id and predicted_mos columns")
        for row in reader:
            if row.get("error"):
                raise UsageError(f"{path}: utterance {row['utterance_id']} has an error entry")
            preds[row["utterance_id"]] = float(row["predicted_mos"])
    return preds


def read_truth(path, exclude_natural=False) -> dict[str, tuple[str, float]]:
    """Ground truth from a ratings CSV or a ``utterance_id,system_id,mos`` table."""
    with open(path, newline="", encoding="utf-8") as fh:
        cols = set(csv.DictReader(fh).fieldnames or [])
    if "listener_id" in cols:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            truth = ground_truth(load_ratings(path), "mos", exclude_natural)
        return {u: (s, m) for u, (s, m, _) in truth.items()}
    if not {"utterance_id", "system_id", "mos"} <= cols:
        raise UsageError(f"{path}: expected a ratings CSV or utterance_id,system_id,mos")
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["utterance_id"]: (r["system_id"], float(r["mos"])) for r in csv.DictReader(fh)}


def match_ids(preds: dict, truth: dict) -> list[str]:
    only_pred = sorted(set(preds) - set(truth))
    only_truth = sorted(set(truth) - set(preds))
    if only_pred or only_truth:
        msg = []
        if only_pred:
            msg.append(f"{len(only_pred)} predicted ids without ground truth: " + ", ".join(only_pred[:20]))
        if only_truth:
            msg.append(f"{len(only_truth)} ground-truth ids without prediction: " + ", ".join(only_truth[:20]))
        raise UsageError("; ".join(msg))
    return sorted(preds)


def cmd_evaluate(args, out: Path) -> int:
    preds = read_predictions(args.predictions)
    truth = read_truth(args.ground_truth, args.exclude_natural)
    ids = match_ids(preds, truth)
    systems = [truth[u][0] for u in ids]
    p = [preds[u] for u in ids]
    g = [truth[u][1] for u in ids]
    utt, sys_rep = level_reports(systems, p, g)
    write_reports_csv(out / "report.csv", (utt, sys_rep))
    text = format_reports((utt, sys_rep))
    write_text(out / "report.txt", text)
    write_csv(out / "scatter_utterance.csv", ("utterance_id", "system_id", "true_mos", "predicted_mos"),
              [(u, s, t, q) for u, s, t, q in zip(ids, systems, g, p)])
    by_sys = {}
    for s, t, q in zip(systems, g, p):
        by_sys.setdefault(s, []).append((t, q))
    sys_rows = [(s, float(np.mean([v[0] for v in vals])), float(np.mean([v[1] for v in vals])))
                for s, vals in sorted(by_sys.items())]
    write_csv(out / "scatter_system.csv", ("system_id", "true_mos", "predicted_mos"), sys_rows)
    limits = (1.0, 5.0)
    write_text(out / "scatter_utterance.svg",
               scatter_svg(g, p, "Utterance-level MOS", limits=limits))
    write_text(out / "scatter_system.svg",
               scatter_svg([r[1] for r in sys_rows], [r[2] for r in sys_rows],
                           "System-level MOS", limits=limits))
    print(text, end="")
    return EXIT_OK


def _bootstrap_subset(fraction: float, n_listeners: int) -> int:
    if not 0 < fraction <= 1:
        raise UsageError(f"--subset-fraction must lie in (0, 1], got {fraction}")
    return max(1, math.ceil(fraction * n_listeners - 1e-9))


def _write_histograms(records, out: Path, kind="mos") -> None:
    dist = rating_distribution(records, kind)
    for name, counts, edges, label in (("mean", dist.mean_counts, dist.mean_edges, "mean rating"),
                                       ("std", dist.std_counts, dist.std_edges, "rating std")):
        write_csv(out / f"hist_{name}.csv", ("bin_low", "bin_high", "count"),
                  [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)])
        write_text(out / f"hist_{name}.svg", histogram_svg(counts, edges, f"Utterance {label}", label))


def cmd_bootstrap(args, out: Path) -> int:
    records = load_ratings(args.ratings)
    panel = ListenerPanel.from_records(records)
    if args.exclude_natural:
        panel = panel.without_natural()
    size = _bootstrap_subset(args.subset_fraction, panel.n_listeners)
    rep = inherent_predictability(panel, args.replications, size, seed=args.seed,
                                  threads=args.threads)
    rep.to_csv(out / "bootstrap.csv")
    rep.to_csv(out / "bootstrap_raw.csv", raw=True)
    text = (f"replications={rep.replications} subset_size={rep.subset_size} "
            f"listeners={panel.n_listeners} utterances={panel.n_utterances}\n"
            + format_table(rep.rows(), ("level", "lcc", "srcc", "mse")))
    write_text(out / "bootstrap.txt", text)
    _write_histograms([r for r in records if not (args.exclude_natural and r.is_natural)], out)
    print(text, end="")
    return EXIT_OK


def _pair_features(pairs, threads):
    paths = [p.path_a for p in pairs] + [p.path_b for p in pairs]
    feats = _require_features([p.pair_id for p in pairs] * 2, _features(paths, threads))
    n = len(pairs)
    return feats[:n], feats[n:]


def similarity_report(scores, labels, head) -> EvalReport:
    """Accuracy plus LCC/SRCC/MSE of P(same) against the merged label."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if head == "2class":
        acc = binary_accuracy(np.column_stack([1 - scores, scores]), labels)
    else:
        acc = binary_accuracy(scores, labels)
    return EvalReport("pair", _safe_metric(pearson_lcc, scores, labels),
                      _safe_metric(spearman_srcc, scores, labels), mse(scores, labels),
                      int(scores.size), acc)


def cmd_similarity(args, out: Path) -> int:
    pairs = load_pairs(args.pairs)
    if args.mode == "train":
        chosen = [p for p in pairs if p.split == "train"]
        if not chosen:
            raise UsageError(f"{args.pairs} has no pairs with split=train")
        a, b = _pair_features(chosen, args.threads)
        cfg = ModelConfig(f"similarity-{args.head}", tuple(args.channels), fc_hidden=args.fc_hidden,
                          dropout_rate=args.dropout, scale=args.scale, n_bins=a[0].shape[1])
        model = build_model(cfg, seed=args.seed)
        model, history = train_similarity(model, a, b, [p.label for p in chosen],
                                          _training_config(args))
        save_checkpoint(model, out / "model.ckpt")
        history.to_csv(out / "history.csv")
        scores = predict_similarity(model, a, b)
        name = "train_report"
    else:
        if not args.checkpoint:
            raise UsageError("similarity eval needs --checkpoint")
        model = load_checkpoint(args.checkpoint)
        if model.config.architecture not in ("similarity-scalar", "similarity-2class"):
            raise UsageError(f"{args.checkpoint} does not hold a similarity model")
        chosen = [p for p in pairs if args.split == "all" or p.split == args.split]
        if not chosen:
            raise UsageError(f"{args.pairs} has no pairs with split={args.split}")
        a, b = _pair_features(chosen, args.threads)
        scores = predict_similarity(model, a, b)
        name = "report"
    head = model.head_kind
    labels = [p.label for p in chosen]
    write_csv(out / "pair_scores.csv", ("pair_id", "label", "p_same", "predicted_label"),
              [(p.pair_id, p.label, float(s), int(s >= 0.5)) for p, s in zip(chosen, scores)])
    rep = similarity_report(scores, labels, head)
    write_reports_csv(out / f"{name}.csv", [rep])
    text = f"head={head}\n" + format_reports([rep])
    write_text(out / f"{name}.txt", text)
    print(text, end="")
    return EXIT_OK


def cmd_synth(args, out: Path) -> int:
    if args.kind == "mos":
        corpus = synth_corpus(args.systems, args.utterances, seed=args.seed, out_dir=out)
        print(f"wrote {len(corpus.waveforms)} utterances from {args.systems} systems to {out}")
    elif args.kind == "similarity":
        corpus = synth_pairs(args.pairs, n_speakers=args.speakers, seed=args.seed, out_dir=out)
        print(f"wrote {len(corpus.pairs)} pairs to {out / 'pairs.csv'}")
    else:
        panel = synth_panel(args.utterances * args.systems, args.systems, args.listeners,
                            args.ratings_per_utterance, args.noise_sigma, seed=args.seed)
        records = [RatingRecord(panel.utterance_ids[u], panel.system_ids[panel.system[u]],
                                panel.listener_ids[l], float(s))
                   for l, u, s in zip(panel.listener, panel.utterance, panel.score)]
        save_ratings(records, out / "ratings.csv")
        print(f"wrote {len(records)} ratings to {out / 'ratings.csv'}")
    return EXIT_OK


def cmd_report(args, out: Path) -> int:
    if not (args.ratings or args.history or args.predictions):
        raise UsageError("report needs at least one of --ratings, --history, --predictions")
    made = []
    if args.ratings:
        _write_histograms(load_ratings(args.ratings), out)
        made += ["hist_mean.csv", "hist_std.csv"]
    if args.history:
        with open(args.history, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise UsageError(f"{args.history} has no epochs")
        series = [[float(r["train_objective"]) for r in rows],
                  [float(r["val_mse"]) for r in rows]]
        write_text(out / "learning_curve.svg",
                   line_svg(series, "Learning curve", xlabel="epoch", ylabel="loss"))
        made.append("learning_curve.svg")
    if args.predictions:
        base = Path(args.predictions).parent
        with open(args.predictions, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.DictReader(fh) if r.get("trace_path")]
        series = []
        for r in rows[: args.max_traces]:
            with open(base / r["trace_path"], newline="", encoding="utf-8") as fh:
                series.append([float(t["score"]) for t in csv.DictReader(fh)])
        if series:
            write_text(out / "frame_traces.svg", line_svg(series, "Frame-wise MOS"))
            made.append("frame_traces.svg")
    print("wrote " + ", ".join(made))
    return EXIT_OK


# ---------------------------------------------------------------- parser ---

def _add_model_flags(p, similarity=False):
    p.add_argument("--channels", type=_int_list, default=(16, 32, 64, 128),
                   help="CNN channels per block (comma-separated)")
    p.add_argument("--fc-hidden", type=_positive_int, default=None)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--scale", type=float, default=1.0, help="width multiplier")
    p.add_argument("--batch-size", type=_positive_int, default=16 if similarity else 64)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--patience", type=_positive_int, default=5)
    p.add_argument("--max-epochs", type=_positive_int, default=50 if similarity else 100)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file supplying defaults for any flag")
    common.add_argument("--out", help=f"output directory (relative to ${OUTPUT_ROOT_ENV} if set)")
    common.add_argument("--overwrite", action="store_true", help="allow a non-empty output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive_int, default=1, help="worker cap")

    parser = _Parser(prog="mosnet", description="MOS prediction toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train a MOS model")
    p.add_argument("--ratings", required=True)
    p.add_argument("--manifest", help="default: manifest.csv beside the ratings")
    p.add_argument("--architecture", choices=MOS_ARCHITECTURES, default="cnn-blstm")
    p.add_argument("--blstm-hidden", type=_positive_int, default=128)
    p.add_argument("--alpha", type=float, default=1.0, help="frame-level loss weight")
    p.add_argument("--no-mask-padding", action="store_true")
    p.add_argument("--split", type=_int_list, default=None, help="train,val,test counts")
    p.add_argument("--exclude-natural", action="store_true")
    _add_model_flags(p)
    p.set_defaults(_run=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score utterances with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.set_defaults(_run=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="utterance and system level metrics")
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--exclude-natural", action="store_true")
    p.set_defaults(_run=cmd_evaluate)

    p = sub.add_parser("bootstrap", parents=[common], help="listener-subset predictability")
    p.add_argument("--ratings", required=True)
    p.add_argument("--replications", type=_positive_int, default=1000)
    p.add_argument("--subset-fraction", type=float, default=0.5)
    p.add_argument("--exclude-natural", action="store_true")
    p.set_defaults(_run=cmd_bootstrap)

    p = sub.add_parser("similarity", parents=[common], help="train or evaluate a similarity model")
    p.add_argument("mode", choices=("train", "eval"))
    p.add_argument("--pairs", required=True)
    p.add_argument("--head", choices=("scalar", "2class"), default="scalar")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    _add_model_flags(p, similarity=True)
    p.set_defaults(_run=cmd_similarity)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic data")
    p.add_argument("kind", choices=("mos", "similarity", "panel"))
    p.add_argument("--systems", type=_positive_int, default=20)
    p.add_argument("--utterances", type=_positive_int, default=30, help="per system")
    p.add_argument("--pairs", type=_positive_int, default=200)
    p.add_argument("--speakers", type=_positive_int, default=5)
    p.add_argument("--listeners", type=_positive_int, default=20)
    p.add_argument("--ratings-per-utterance", type=_positive_int, default=4)
    p.add_argument("--noise-sigma", type=float, default=0.7)
    p.set_defaults(_run=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="figures from existing outputs")
    p.add_argument("--ratings")
    p.add_argument("--history")
    p.add_argument("--predictions")
    p.add_argument("--max-traces", type=_positive_int, default=4)
    p.set_defaults(_run=cmd_report)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(subparser, read_config(args.config))
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        out = prepare_output(resolve_output(args.out, args.command), args.overwrite)
        echo_config(args, out)
        return args._run(args, out)
    except (UsageError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingDivergedError, OSError, RuntimeError, ArithmeticError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
