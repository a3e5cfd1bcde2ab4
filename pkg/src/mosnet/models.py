"""MOS and similarity networks assembled from :mod:`mosnet.nn` layers.

Three MOS architectures share one head shape: features per frame, then
FC + ReLU + dropout, then FC-1 giving a score per frame, then a masked mean
over time giving the utterance score.

* ``blstm``: BLSTM-128 on the raw 257-bin frames, FC-64 head.
* ``cnn``: four blocks of three 3x3 convolutions (the third one strided by 3
  along frequency), flattened per frame, FC-64 head.
* ``cnn-blstm``: the convolution stack followed by BLSTM-128, FC-128 head.

The similarity network runs one shared convolution stack over both inputs,
averages each over time, concatenates the two vectors and maps them through
two FC layers to a logistic scalar or a two-way softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .dsp import N_BINS
from .nn import (
    BLSTM,
    Context,
    Conv2D,
    Dense,
    Dropout,
    FlattenFreq,
    Layer,
    MeanPoolTime,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
    TimeMask,
)
from .rng import make_rng

MOS_ARCHITECTURES = ("blstm", "cnn", "cnn-blstm")
SIMILARITY_ARCHITECTURES = ("similarity-scalar", "similarity-2class")
ARCHITECTURES = MOS_ARCHITECTURES + SIMILARITY_ARCHITECTURES

DEFAULT_FC_HIDDEN = {"blstm": 64, "cnn": 64, "cnn-blstm": 128,
                     "similarity-scalar": 64, "similarity-2class": 64}
# (stride_time, stride_freq) of the three layers in each block
BLOCK_STRIDES = ((1, 1), (1, 1), (1, 3))
KERNEL = 3


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "cnn-blstm"
    channels: tuple = (16, 32, 64, 128)
    blstm_hidden: int = 128
    fc_hidden: int | None = None
    dropout_rate: float = 0.3
    scale: float = 1.0
    n_bins: int = N_BINS

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}; "
                             f"choose from {', '.join(ARCHITECTURES)}")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.channels or min(self.channels) < 1:
            raise ValueError("channel schedule must be nonempty and positive")
        if self.blstm_hidden < 1 or (self.fc_hidden is not None and self.fc_hidden < 1):
            raise ValueError("layer widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.scale <= 0 or self.n_bins < 1:
            raise ValueError("scale and n_bins must be positive")

    def _scaled(self, width):
        return max(1, int(round(width * self.scale)))

    @property
    def effective_channels(self) -> tuple:
        return tuple(self._scaled(c) for c in self.channels)

    @property
    def effective_blstm_hidden(self) -> int:
        return self._scaled(self.blstm_hidden)

    @property
    def effective_fc_hidden(self) -> int:
        base = self.fc_hidden if self.fc_hidden is not None else DEFAULT_FC_HIDDEN[self.architecture]
        return self._scaled(base)

    @property
    def uses_cnn(self) -> bool:
        return self.architecture != "blstm"

    def to_text(self) -> str:
        """Canonical ``key=value`` lines, sorted by key."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(c) for c in v)
            elif v is None:
                v = "none"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        raw = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        return cls(
            architecture=raw["architecture"],
            channels=tuple(int(c) for c in raw["channels"].split(",")),
            blstm_hidden=int(raw["blstm_hidden"]),
            fc_hidden=None if raw["fc_hidden"] == "none" else int(raw["fc_hidden"]),
            dropout_rate=float(raw["dropout_rate"]),
            scale=float(raw["scale"]),
            n_bins=int(raw["n_bins"]),
        )


def frequency_trace(n_bins: int, channels=(16, 32, 64, 128)) -> list[int]:
    """Frequency extent after the input and after each block."""
    trace = [n_bins]
    for _ in channels:
        for _, sf in BLOCK_STRIDES:
            n_bins = -(-n_bins // sf)
        trace.append(n_bins)
    return trace


def receptive_field_time(n_blocks: int = 4) -> int:
    """Frames seen by one unit of the last conv layer."""
    rf, jump = 1, 1
    for _ in range(n_blocks):
        for st, _ in BLOCK_STRIDES:
            rf += (KERNEL - 1) * jump
            jump *= st
    return rf


def cnn_stack(channels, rng, dtype=np.float32) -> Sequential:
    layers = []
    c_in = 1
    for c in channels:
        for st, sf in BLOCK_STRIDES:
            layers += [Conv2D(c_in, c, st, sf, rng=rng, dtype=dtype), ReLU(), TimeMask(time_axis=2)]
            c_in = c
    return Sequential(layers)


class _AddChannel(Layer):
    """(B, T, F) -> (B, 1, T, F)."""

    kind = "add-channel"

    def forward(self, x, ctx=None):
        return x[:, None]

    def backward(self, grad):
        return grad[:, 0]


@dataclass
class MosPrediction:
    frame_scores: np.ndarray
    utterance_score: float
    valid_len: int

    def __post_init__(self):
        self.frame_scores = np.asarray(self.frame_scores)


class _Network:
    config: ModelConfig

    def parameters(self):
        raise NotImplementedError

    @property
    def dtype(self):
        return next(iter(self.parameters().values())).value.dtype

    def astype(self, dtype):
        for p in self.parameters().values():
            p.astype(dtype)
        return self

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def n_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ValueError(f"parameter names differ (missing {missing}, unexpected {extra})")
        for k, p in params.items():
            if state[k].shape != p.value.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {p.value.shape}")
            p.value = np.array(state[k], dtype=p.value.dtype)

    def _prepare(self, x, lengths):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.shape[-1] != self.config.n_bins:
            raise ValueError(f"expected {self.config.n_bins} frequency bins, got {x.shape[-1]}")
        if lengths is None:
            lengths = np.full(x.shape[0], x.shape[1])
        lengths = np.asarray(lengths, dtype=np.int64).reshape(-1)
        if lengths.size != x.shape[0] or np.any(lengths < 1) or np.any(lengths > x.shape[1]):
            raise ValueError("valid lengths must lie in [1, n_frames] for every item")
        return x, lengths


class MOSNet(_Network):
    """Frame-wise MOS regressor with masked average pooling."""

    def __init__(self, config: ModelConfig, seed: int | None = 0):
        if config.architecture not in MOS_ARCHITECTURES:
            raise ValueError(f"{config.architecture!r} is not a MOS architecture")
        self.config = config
        rng = make_rng(seed, "init")
        layers = []
        if config.uses_cnn:
            channels = config.effective_channels
            layers += [_AddChannel(), *cnn_stack(channels, rng), FlattenFreq()]
            width = frequency_trace(config.n_bins, channels)[-1] * channels[-1]
        else:
            width = config.n_bins
        if config.architecture in ("blstm", "cnn-blstm"):
            hidden = config.effective_blstm_hidden
            layers.append(BLSTM(width, hidden, rng=rng))
            width = 2 * hidden
        fc = config.effective_fc_hidden
        layers += [Dense(width, fc, rng=rng), ReLU(), Dropout(config.dropout_rate),
                   Dense(fc, 1, rng=rng)]
        self.body = Sequential(layers)
        self.pool = MeanPoolTime()

    def parameters(self):
        return {f"body.{k}": p for k, p in self.body.parameters().items()}

    @property
    def conv_layers(self) -> list[Conv2D]:
        return [layer for layer in self.body if isinstance(layer, Conv2D)]

    @property
    def feature_width(self) -> int:
        """Per-frame width entering the FC head."""
        dense = [layer for layer in self.body if isinstance(layer, Dense)]
        return dense[0].in_features

    def forward(self, x, lengths=None, mode="eval", rng=None):
        """Return ``(frame_scores (B, T), utterance_scores (B,))``."""
        x, lengths = self._prepare(x, lengths)
        ctx = Context(lengths, mode=mode, rng=rng)
        frames = self.body.forward(x, ctx)[..., 0]
        return frames, self.pool.forward(frames, ctx)

    def backward(self, d_frames):
        """Backpropagate a gradient on the frame scores."""
        return self.body.backward(d_frames[..., None])


class SimilarityNet(_Network):
    """Shared-CNN pair model producing a same-speaker score."""

    def __init__(self, config: ModelConfig, seed: int | None = 0):
        if config.architecture not in SIMILARITY_ARCHITECTURES:
            raise ValueError(f"{config.architecture!r} is not a similarity architecture")
        self.config = config
        rng = make_rng(seed, "init")
        channels = config.effective_channels
        self.encoder = Sequential([_AddChannel(), *cnn_stack(channels, rng), FlattenFreq()])
        self.latent_width = frequency_trace(config.n_bins, channels)[-1] * channels[-1]
        self.pool = MeanPoolTime()
        fc = config.effective_fc_hidden
        n_out = 1 if self.head_kind == "scalar" else 2
        self.head = Sequential([
            Dense(2 * self.latent_width, fc, rng=rng), ReLU(), Dropout(config.dropout_rate),
            Dense(fc, n_out, rng=rng),
            Sigmoid() if n_out == 1 else Softmax(),
        ])

    @property
    def head_kind(self) -> str:
        return "scalar" if self.config.architecture == "similarity-scalar" else "2class"

    def parameters(self):
        out = {f"encoder.{k}": p for k, p in self.encoder.parameters().items()}
        out.update({f"head.{k}": p for k, p in self.head.parameters().items()})
        return out

    def encode(self, x, lengths=None, mode="eval", rng=None):
        """Time-averaged latent vectors, shape ``(B, latent_width)``."""
        x, lengths = self._prepare(x, lengths)
        ctx = Context(lengths, mode=mode, rng=rng)
        return self.pool.forward(self.encoder.forward(x, ctx), ctx)

    def forward(self, xa, la, xb, lb, mode="eval", rng=None):
        """Scores ``(B,)`` for the scalar head or probabilities ``(B, 2)``."""
        xa, la = self._prepare(xa, la)
        xb, lb = self._prepare(xb, lb)
        B = xa.shape[0]
        if xb.shape[0] != B:
            raise ValueError("pair batches differ in size")
        T = max(xa.shape[1], xb.shape[1])
        both = np.zeros((2 * B, T, xa.shape[2]), dtype=xa.dtype)
        both[:B, :xa.shape[1]] = xa
        both[B:, :xb.shape[1]] = xb
        lengths = np.concatenate([la, lb])
        latent = self.encode(both, lengths, mode=mode, rng=rng)
        self._batch = (B, T, xa.shape[1], xb.shape[1])
        self.last_pair_features = np.concatenate([latent[:B], latent[B:]], axis=1)
        out = self.head.forward(self.last_pair_features, Context(la, mode=mode, rng=rng))
        return out[:, 0] if self.head_kind == "scalar" else out

    def backward(self, d_out):
        B, T, Ta, Tb = self._batch
        if self.head_kind == "scalar":
            d_out = d_out[:, None]
        d_pair = self.head.backward(d_out)
        d_latent = np.concatenate([d_pair[:, :self.latent_width], d_pair[:, self.latent_width:]])
        d_both = self.encoder.backward(self.pool.backward(d_latent))
        return d_both[:B, :Ta], d_both[B:, :Tb]


def build_model(cfg: ModelConfig, seed: int | None = 0):
    """Instantiate the network described by ``cfg``."""
    if cfg.architecture in MOS_ARCHITECTURES:
        return MOSNet(cfg, seed)
    return SimilarityNet(cfg, seed)


def forward_mos(model: MOSNet, spec, valid_len=None, mode="eval", rng=None) -> MosPrediction:
    """Score one utterance spectrogram ``(N, n_bins)``."""
    x = np.asarray(spec)
    if x.ndim != 2:
        raise ValueError("expected a single (n_frames, n_bins) spectrogram")
    valid_len = x.shape[0] if valid_len is None else int(valid_len)
    frames, pooled = model.forward(x[None], [valid_len], mode=mode, rng=rng)
    return MosPrediction(frames[0], float(pooled[0]), valid_len)


def forward_similarity(model: SimilarityNet, spec_a, spec_b, mode="eval", rng=None):
    """Scalar in (0, 1) or a length-2 probability vector for one pair."""
    a, b = np.asarray(spec_a), np.asarray(spec_b)
    out = model.forward(a[None], None, b[None], None, mode=mode, rng=rng)
    return float(out[0]) if model.head_kind == "scalar" else out[0]


def pad_batch(specs, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad spectrograms in time to the longest one."""
    arrays = [np.asarray(s) for s in specs]
    lengths = np.array([a.shape[0] for a in arrays], dtype=np.int64)
    out = np.zeros((len(arrays), lengths.max(), arrays[0].shape[1]), dtype=dtype)
    for k, a in enumerate(arrays):
        out[k, :a.shape[0]] = a
    return out, lengths


def predict_many(model: MOSNet, specs, batch_size=16) -> list[MosPrediction]:
    """Eval-mode predictions, batching utterances of similar length."""
    specs = [np.asarray(s) for s in specs]
    order = np.argsort([s.shape[0] for s in specs], kind="stable")
    out: list[MosPrediction | None] = [None] * len(specs)
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        x, lengths = pad_batch([specs[k] for k in idx], model.dtype)
        frames, pooled = model.forward(x, lengths, mode="eval")
        for j, k in enumerate(idx):
            out[k] = MosPrediction(frames[j, :lengths[j]].copy(), float(pooled[j]),
                                   int(lengths[j]))
    return out
