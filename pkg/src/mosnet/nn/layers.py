"""Layers with explicit forward and backward passes.

Activations are laid out ``(batch, time, ...)``. Every layer caches what its
backward pass needs during ``forward``; calling ``backward`` accumulates
parameter gradients into ``Parameter.grad`` and returns the gradient with
respect to the layer input. One forward must precede each backward.

Variable-length batches are handled through ``Context.lengths``: frames at
index ``>= lengths[b]`` are padding. Layers that mix information across time
(the BLSTM, pooling, the time mask after each convolution) honour these
lengths so padded frames never influence valid ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Parameter:
    """Trainable tensor plus its gradient and Adam moment estimates."""

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.step_count = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0)

    def astype(self, dtype):
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)
        self.adam_m = self.adam_m.astype(dtype)
        self.adam_v = self.adam_v.astype(dtype)

    def __repr__(self):
        return f"Parameter(shape={self.shape}, dtype={self.value.dtype})"


@dataclass
class Context:
    """Per-forward settings shared by all layers of a network."""

    lengths: np.ndarray
    mode: str = "eval"
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {self.mode!r}")
        self.lengths = np.asarray(self.lengths, dtype=np.int64)

    @property
    def training(self) -> bool:
        return self.mode == "train"

    def time_mask(self, n_time: int) -> np.ndarray:
        """Boolean ``(batch, time)`` array, True on valid frames."""
        return np.arange(n_time)[None, :] < self.lengths[:, None]

    @classmethod
    def full(cls, batch: int, n_time: int, **kwargs) -> "Context":
        return cls(np.full(batch, n_time), **kwargs)


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = "layer"

    def parameters(self) -> dict[str, Parameter]:
        return {}

    def forward(self, x: np.ndarray, ctx: Context) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}

    def astype(self, dtype):
        for p in self.parameters().values():
            p.astype(dtype)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.spec().items() if k != "kind")
        return f"{type(self).__name__}({args})"


def _same_padding(n: int, k: int, s: int) -> tuple[int, int, int]:
    n_out = -(-n // s)
    total = max((n_out - 1) * s + k - n, 0)
    return n_out, total // 2, total - total // 2


class Conv2D(Layer):
    """3x3 (time x frequency) cross-correlation with zero 'same' padding.

    Activations are channel-first: input ``(B, C_in, T, F)``, output
    ``(B, C_out, ceil(T/st), ceil(F/sf))``. The kernel is stored as
    ``(kt, kf, C_in, C_out)``.
    """

    kind = "conv2d"
    # im2col buffer per chunk, and the most we keep alive for backward
    chunk_bytes = 64 * 2**20
    cache_bytes = 256 * 2**20

    def __init__(self, in_channels, out_channels, stride_time=1, stride_freq=1,
                 kernel_size=(3, 3), rng=None, dtype=np.float32):
        if min(in_channels, out_channels, stride_time, stride_freq) < 1:
            raise ValueError("channels and strides must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = (stride_time, stride_freq)
        self.kernel_size = tuple(kernel_size)
        kt, kf = self.kernel_size
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = kt * kf * in_channels
        fan_out = kt * kf * out_channels
        self.W = Parameter(glorot_uniform(rng, (kt, kf, in_channels, out_channels),
                                          fan_in, fan_out, dtype))
        self.b = Parameter(np.zeros(out_channels, dtype=dtype))

    def parameters(self):
        return {"W": self.W, "b": self.b}

    def spec(self):
        return {"kind": self.kind, "in_channels": self.in_channels,
                "out_channels": self.out_channels, "stride_time": self.stride[0],
                "stride_freq": self.stride[1]}

    def output_shape(self, n_time: int, n_freq: int) -> tuple[int, int]:
        return (-(-n_time // self.stride[0]), -(-n_freq // self.stride[1]))

    def _geometry(self, T, F):
        kt, kf = self.kernel_size
        To, t0, t1 = _same_padding(T, kt, self.stride[0])
        Fo, f0, f1 = _same_padding(F, kf, self.stride[1])
        return To, Fo, ((0, 0), (0, 0), (t0, t1), (f0, f1))

    def _windows(self, i, j, To, Fo):
        st, sf = self.stride
        return (slice(None), slice(None), slice(i, i + st * (To - 1) + 1, st),
                slice(j, j + sf * (Fo - 1) + 1, sf))

    def _cols(self, xp, To, Fo):
        kt, kf = self.kernel_size
        B, C = xp.shape[:2]
        cols = np.empty((B, C, kt, kf, To, Fo), dtype=xp.dtype)
        for i in range(kt):
            for j in range(kf):
                cols[:, :, i, j] = xp[self._windows(i, j, To, Fo)]
        return cols.reshape(B, C * kt * kf, To * Fo)

    def _matrix(self):
        # (C_out, C_in * kt * kf), matching the column order of _cols
        return self.W.value.transpose(3, 2, 0, 1).reshape(self.out_channels, -1)

    def _chunk(self, To, Fo, itemsize):
        per_item = To * Fo * self.in_channels * self.kernel_size[0] * self.kernel_size[1] * itemsize
        return max(1, int(self.chunk_bytes // max(per_item, 1))), per_item

    def forward(self, x, ctx=None):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"conv2d expects (B, {self.in_channels}, T, F) input, "
                             f"got {x.shape}")
        B, _, T, F = x.shape
        To, Fo, pads = self._geometry(T, F)
        xp = np.pad(x, pads)
        Wm = self._matrix()
        y = np.empty((B, self.out_channels, To * Fo), dtype=np.result_type(x, Wm))
        step, per_item = self._chunk(To, Fo, xp.itemsize)
        keep = per_item * B <= self.cache_bytes
        cached = []
        for s in range(0, B, step):
            cols = self._cols(xp[s:s + step], To, Fo)
            np.matmul(Wm, cols, out=y[s:s + step])
            if keep:
                cached.append(cols)
        y += self.b.value[:, None]
        self._cache = (xp, x.shape, pads, cached if keep else None)
        return y.reshape(B, self.out_channels, To, Fo)

    def backward(self, grad):
        xp, xshape, pads, cached = self._cache
        B, C, T, F = xshape
        To, Fo = grad.shape[2:]
        kt, kf = self.kernel_size
        Wm = self._matrix()
        g = grad.reshape(B, self.out_channels, To * Fo)
        self.b.grad += g.sum(axis=(0, 2))
        dW = np.zeros_like(Wm)
        dxp = np.zeros_like(xp)
        step, _ = self._chunk(To, Fo, xp.itemsize)
        for n, s in enumerate(range(0, B, step)):
            cols = cached[n] if cached is not None else self._cols(xp[s:s + step], To, Fo)
            gs = g[s:s + step]
            dW += np.matmul(gs, cols.transpose(0, 2, 1)).sum(axis=0)
            dcols = np.matmul(Wm.T, gs).reshape(-1, C, kt, kf, To, Fo)
            sub = dxp[s:s + step]
            for i in range(kt):
                for j in range(kf):
                    sub[self._windows(i, j, To, Fo)] += dcols[:, :, i, j]
        self.W.grad += dW.reshape(self.out_channels, C, kt, kf).transpose(2, 3, 1, 0)
        t0, f0 = pads[2][0], pads[3][0]
        return dxp[:, :, t0:t0 + T, f0:f0 + F]


def conv2d(x, kernel, bias=None, stride_time=1, stride_freq=1):
    """Functional convolution on a single ``(T, F, C_in)`` input.

    ``kernel`` has shape ``(3, 3, C_in, C_out)``; returns ``(T_out, F_out, C_out)``.
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.shape[-1] != kernel.shape[2]:
        raise ValueError(f"input has {x.shape[-1]} channels, kernel expects {kernel.shape[2]}")
    layer = Conv2D(kernel.shape[2], kernel.shape[3], stride_time, stride_freq,
                   kernel_size=kernel.shape[:2], dtype=kernel.dtype)
    layer.W.value = kernel
    if bias is not None:
        layer.b.value = np.asarray(bias, dtype=kernel.dtype)
    y = layer.forward(np.moveaxis(x, -1, 0)[None])
    return np.moveaxis(y[0], 0, -1)


class Dense(Layer):
    """Affine map over the last axis: ``x @ W + b``."""

    kind = "fc"

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        if min(in_features, out_features) < 1:
            raise ValueError("feature sizes must be positive")
        self.in_features = in_features
        self.out_features = out_features
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = Parameter(glorot_uniform(rng, (in_features, out_features),
                                          in_features, out_features, dtype))
        self.b = Parameter(np.zeros(out_features, dtype=dtype))

    def parameters(self):
        return {"W": self.W, "b": self.b}

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features,
                "out_features": self.out_features}

    def forward(self, x, ctx=None):
        if x.shape[-1] != self.in_features:
            raise ValueError(f"fc expects last dim {self.in_features}, got {x.shape}")
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, grad):
        x2 = self._x.reshape(-1, self.in_features)
        g2 = grad.reshape(-1, self.out_features)
        self.W.grad += x2.T @ g2
        self.b.grad += g2.sum(axis=0)
        return grad @ self.W.value.T


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, ctx=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return grad * self._mask


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    kind = "dropout"

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = float(rate)

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, ctx):
        if not ctx.training or self.rate == 0.0:
            self._scale = None
            return x
        if ctx.rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = ctx.rng.random(x.shape) >= self.rate
        self._scale = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        return x * self._scale

    def backward(self, grad):
        if self._scale is None:
            return grad
        return grad * self._scale


class TimeMask(Layer):
    """Zero every frame at or beyond the valid length.

    ``time_axis`` is 1 for ``(B, T, ...)`` and 2 for channel-first maps.
    """

    kind = "time-mask"

    def __init__(self, time_axis=1):
        self.time_axis = time_axis

    def forward(self, x, ctx):
        mask = ctx.time_mask(x.shape[self.time_axis])
        if mask.all():
            self._mask = None
            return x
        shape = [1] * x.ndim
        shape[0], shape[self.time_axis] = mask.shape
        self._mask = mask.reshape(shape)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class FlattenFreq(Layer):
    """Channel-first ``(B, C, T, F)`` to per-frame ``(B, T, F*C)``, frequency-major."""

    kind = "flatten-freq"

    def forward(self, x, ctx=None):
        self._shape = x.shape
        B, C, T, F = x.shape
        return x.transpose(0, 2, 3, 1).reshape(B, T, F * C)

    def backward(self, grad):
        B, C, T, F = self._shape
        return grad.reshape(B, T, F, C).transpose(0, 3, 1, 2)


class MeanPoolTime(Layer):
    """Average over the first ``lengths[b]`` frames of each sequence.

    Accepts ``(B, T)`` or ``(B, T, ...)`` and drops the time axis.
    """

    kind = "mean-pool-time"

    def forward(self, x, ctx):
        lengths = ctx.lengths
        if np.any(lengths < 1) or np.any(lengths > x.shape[1]):
            raise ValueError("valid lengths must lie in [1, n_frames]")
        B, T = x.shape[:2]
        mask = ctx.time_mask(T).reshape((B, T) + (1,) * (x.ndim - 2))
        denom = lengths.reshape((B,) + (1,) * (x.ndim - 2)).astype(x.dtype)
        self._weights = mask / denom[:, None]
        # np.where keeps poisoned padding (inf/nan) out of the sum
        return np.where(mask, x, 0).sum(axis=1) / denom

    def backward(self, grad):
        return grad[:, None] * self._weights


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, ctx=None):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad):
        return grad * self._y * (1 - self._y)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, ctx=None):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._y = e / e.sum(axis=-1, keepdims=True)
        return self._y

    def backward(self, grad):
        y = self._y
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


def sigmoid(x):
    # tanh form is overflow-free for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x):
    return np.maximum(x, 0)


def dropout(x, rate, mode="train", rng=None):
    """Functional inverted dropout."""
    layer = Dropout(rate)
    return layer.forward(np.asarray(x), Context.full(1, 1, mode=mode, rng=rng))


def mean_pool_time(frame_scores, valid_len):
    """Mean of the first ``valid_len`` entries of a single score sequence."""
    scores = np.asarray(frame_scores).reshape(1, -1)
    return float(MeanPoolTime().forward(scores, Context(np.array([valid_len])))[0])


@dataclass
class _LSTMCache:
    x: np.ndarray
    gates: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray = field(repr=False)


def _lstm_forward(x, Wx, Wh, b):
    B, T, _ = x.shape
    H = Wh.shape[0]
    Z = x @ Wx + b
    gates = np.empty((B, T, 4 * H), dtype=Z.dtype)
    cs = np.empty((B, T, H), dtype=Z.dtype)
    tcs = np.empty_like(cs)
    hs = np.empty_like(cs)
    h = np.zeros((B, H), dtype=Z.dtype)
    c = np.zeros((B, H), dtype=Z.dtype)
    for t in range(T):
        z = Z[:, t] + h @ Wh
        ifo = sigmoid(np.concatenate([z[:, :2 * H], z[:, 3 * H:]], axis=1))
        i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
        g = np.tanh(z[:, 2 * H:3 * H])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[:, t, :H] = i
        gates[:, t, H:2 * H] = f
        gates[:, t, 2 * H:3 * H] = g
        gates[:, t, 3 * H:] = o
        cs[:, t] = c
        tcs[:, t] = tc
        hs[:, t] = h
    return hs, _LSTMCache(x, gates, cs, tcs, hs)


def _lstm_backward(dh_seq, cache, Wx, Wh):
    x, gates, cs, tcs, hs = cache.x, cache.gates, cache.c, cache.tanh_c, cache.h
    B, T, H = hs.shape
    dZ = np.empty_like(gates)
    dh_next = np.zeros((B, H), dtype=hs.dtype)
    dc_next = np.zeros((B, H), dtype=hs.dtype)
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :H]
        f = gates[:, t, H:2 * H]
        g = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        dh = dh_seq[:, t] + dh_next
        dc = dc_next + dh * o * (1 - tcs[:, t] ** 2)
        c_prev = cs[:, t - 1] if t > 0 else 0
        dZ[:, t, :H] = dc * g * i * (1 - i)
        dZ[:, t, H:2 * H] = dc * c_prev * f * (1 - f)
        dZ[:, t, 2 * H:3 * H] = dc * i * (1 - g ** 2)
        dZ[:, t, 3 * H:] = dh * tcs[:, t] * o * (1 - o)
        dc_next = dc * f
        dh_next = dZ[:, t] @ Wh.T
    h_prev = np.concatenate([np.zeros((B, 1, H), dtype=hs.dtype), hs[:, :-1]], axis=1)
    dZ2 = dZ.reshape(-1, 4 * H)
    dWx = x.reshape(-1, x.shape[2]).T @ dZ2
    dWh = h_prev.reshape(-1, H).T @ dZ2
    db = dZ2.sum(axis=0)
    dx = dZ @ Wx.T
    return dx, dWx, dWh, db


def _reverse_index(lengths, T):
    t = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


class LSTMParams:
    """Weights of one LSTM direction; gate column order is i, f, g, o."""

    def __init__(self, in_features, hidden, rng, dtype=np.float32, forget_bias=1.0):
        limit = np.sqrt(1.0 / hidden)
        self.Wx = Parameter(rng.uniform(-limit, limit, (in_features, 4 * hidden)).astype(dtype))
        self.Wh = Parameter(rng.uniform(-limit, limit, (hidden, 4 * hidden)).astype(dtype))
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = forget_bias
        self.b = Parameter(b)

    def parameters(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}


class BLSTM(Layer):
    """Bidirectional LSTM; output is ``[forward | backward]`` per frame.

    The backward direction starts at each sequence's last valid frame, so
    trailing padding never leaks into valid outputs.
    """

    kind = "blstm"

    def __init__(self, in_features, hidden=128, rng=None, dtype=np.float32):
        if min(in_features, hidden) < 1:
            raise ValueError("sizes must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.hidden = hidden
        self.fw = LSTMParams(in_features, hidden, rng, dtype)
        self.bw = LSTMParams(in_features, hidden, rng, dtype)

    def parameters(self):
        out = {f"fw.{k}": v for k, v in self.fw.parameters().items()}
        out.update({f"bw.{k}": v for k, v in self.bw.parameters().items()})
        return out

    def spec(self):
        return {"kind": self.kind, "in_features": self.in_features, "hidden": self.hidden}

    def forward(self, x, ctx):
        if x.ndim != 3 or x.shape[2] != self.in_features:
            raise ValueError(f"blstm expects (B, T, {self.in_features}), got {x.shape}")
        B, T, _ = x.shape
        idx = _reverse_index(ctx.lengths, T)
        x_rev = np.take_along_axis(x, idx[:, :, None], axis=1)
        hf, self._cf = _lstm_forward(x, self.fw.Wx.value, self.fw.Wh.value, self.fw.b.value)
        hb_rev, self._cb = _lstm_forward(x_rev, self.bw.Wx.value, self.bw.Wh.value,
                                         self.bw.b.value)
        self._idx = idx
        hb = np.take_along_axis(hb_rev, idx[:, :, None], axis=1)
        return np.concatenate([hf, hb], axis=2)

    def backward(self, grad):
        H = self.hidden
        idx = self._idx[:, :, None]
        dxf, dWx, dWh, db = _lstm_backward(grad[:, :, :H], self._cf,
                                           self.fw.Wx.value, self.fw.Wh.value)
        self.fw.Wx.grad += dWx
        self.fw.Wh.grad += dWh
        self.fw.b.grad += db
        dhb_rev = np.take_along_axis(grad[:, :, H:], idx, axis=1)
        dxb_rev, dWx, dWh, db = _lstm_backward(dhb_rev, self._cb,
                                               self.bw.Wx.value, self.bw.Wh.value)
        self.bw.Wx.grad += dWx
        self.bw.Wh.grad += dWh
        self.bw.b.grad += db
        return dxf + np.take_along_axis(dxb_rev, idx, axis=1)


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self):
        out = {}
        for n, layer in enumerate(self.layers):
            for k, p in layer.parameters().items():
                out[f"{n}.{k}"] = p
        return out

    def spec(self):
        return {"kind": self.kind, "layers": [layer.spec() for layer in self.layers]}

    def forward(self, x, ctx):
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)
