"""Dense tensor helpers and the reference convolution kernels.

Tensors are plain ``numpy`` arrays of shape ``(channels, height, width)`` and
dtype ``float32``, stored C-contiguous, so the flat index of element
``(c, y, x)`` is ``c*H*W + y*W + x``.

All kernels accumulate in float64 and round to float32 once, on store.  The
accumulation order is fixed (kernel taps in row-major order, bias last), which
makes results bit-reproducible and lets the depthwise and pointwise kernels
match ``conv2d_direct`` exactly in their degenerate cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GeometryError, UsageError

CONVENTIONAL = "conventional"
DEPTHWISE = "depthwise"
POINTWISE = "pointwise"
CONV_KINDS = (CONVENTIONAL, DEPTHWISE, POINTWISE)


def as_tensor(data) -> np.ndarray:
    """Return ``data`` as a C-contiguous float32 ``(C, H, W)`` array."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise UsageError(f"expected a non-empty (C, H, W) tensor, got shape {arr.shape}")
    return arr


def zeros(channels: int, height: int, width: int) -> np.ndarray:
    return np.zeros((channels, height, width), dtype=np.float32)


@dataclass
class MacCounter:
    """Mutable multiply-accumulate tally threaded through the kernels."""

    macs: int = 0


@dataclass(frozen=True)
class ConvWeights:
    """Filter bank for one convolution layer.

    ``values`` shapes by kind:

    * conventional: ``(N, M, Dk, Dk)``
    * depthwise:    ``(M, Dk, Dk)``; output channel count is ``M``
    * pointwise:    ``(N, M)``; kernel size is 1

    ``bias`` has one entry per output channel; ``None`` means zeros.
    """

    kind: str
    values: np.ndarray
    bias: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in CONV_KINDS:
            raise ConfigurationError(f"unknown convolution kind {self.kind!r}")
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        rank = {CONVENTIONAL: 4, DEPTHWISE: 3, POINTWISE: 2}[self.kind]
        if values.ndim != rank or min(values.shape) < 1:
            raise ConfigurationError(
                f"{self.kind} weights must have rank {rank}, got shape {values.shape}"
            )
        if self.kind == CONVENTIONAL and values.shape[2] != values.shape[3]:
            raise ConfigurationError("only square kernels are supported")
        if self.kind == DEPTHWISE and values.shape[1] != values.shape[2]:
            raise ConfigurationError("only square kernels are supported")
        object.__setattr__(self, "values", values)
        n = self.out_channels
        if self.bias is None:
            bias = np.zeros(n, dtype=np.float32)
        else:
            bias = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        if bias.shape != (n,):
            raise ConfigurationError(f"bias must have length {n}, got {bias.shape[0]}")
        object.__setattr__(self, "bias", bias)
        values.flags.writeable = False
        bias.flags.writeable = False

    @property
    def in_channels(self) -> int:
        return self.values.shape[0] if self.kind == DEPTHWISE else self.values.shape[1]

    @property
    def out_channels(self) -> int:
        return self.values.shape[0]

    @property
    def kernel(self) -> int:
        if self.kind == POINTWISE:
            return 1
        return self.values.shape[-1]


def output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    """Spatial output extent: ``floor((size + 2*pad - kernel) / stride) + 1``."""
    if stride < 1:
        raise UsageError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise UsageError(f"padding must be >= 0, got {pad}")
    span = size + 2 * pad - kernel
    if span < 0:
        return 0
    return span // stride + 1


def _check(x: np.ndarray, w: ConvWeights, kind: str) -> np.ndarray:
    if w.kind != kind:
        raise ConfigurationError(f"expected {kind} weights, got {w.kind}")
    x = as_tensor(x)
    if x.shape[0] != w.in_channels:
        raise ConfigurationError(
            f"input has {x.shape[0]} channels but weights expect {w.in_channels}"
        )
    return x


def _padded_taps(x, kernel, stride, pad):
    """Yield ``(i, j, view)`` for every kernel tap over the zero-padded input."""
    c, h, w = x.shape
    ho = output_size(h, kernel, stride, pad)
    wo = output_size(w, kernel, stride, pad)
    if ho < 1 or wo < 1:
        raise GeometryError(
            f"{kernel}x{kernel} kernel with stride {stride}, pad {pad} "
            f"does not fit a {h}x{w} input"
        )
    if pad:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
        xp[:, pad:pad + h, pad:pad + w] = x
    else:
        xp = x.astype(np.float64)
    taps = []
    for i in range(kernel):
        for j in range(kernel):
            view = xp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
            taps.append((i, j, view))
    return ho, wo, taps


def conv2d_direct(x, w: ConvWeights, stride: int = 1, zero_pad: int = 0,
                  counter: MacCounter | None = None) -> np.ndarray:
    """Conventional convolution mixing all ``M`` input channels into ``N`` outputs."""
    x = _check(x, w, CONVENTIONAL)
    n, m, k, _ = w.values.shape
    ho, wo, taps = _padded_taps(x, k, stride, zero_pad)
    acc = np.zeros((n, ho * wo), dtype=np.float64)
    kern = w.values.astype(np.float64)
    for i, j, view in taps:
        acc += kern[:, :, i, j] @ view.reshape(m, ho * wo)
        if counter is not None:
            counter.macs += n * m * ho * wo
    acc += w.bias.astype(np.float64)[:, None]
    return acc.reshape(n, ho, wo).astype(np.float32)


def depthwise_conv2d(x, w: ConvWeights, stride: int = 1, zero_pad: int = 0,
                     counter: MacCounter | None = None) -> np.ndarray:
    """Per-channel spatial filtering: output channel ``m`` sees only input channel ``m``."""
    x = _check(x, w, DEPTHWISE)
    m, k, _ = w.values.shape
    ho, wo, taps = _padded_taps(x, k, stride, zero_pad)
    acc = np.zeros((m, ho, wo), dtype=np.float64)
    kern = w.values.astype(np.float64)
    for i, j, view in taps:
        acc += kern[:, i, j, None, None] * view
        if counter is not None:
            counter.macs += m * ho * wo
    acc += w.bias.astype(np.float64)[:, None, None]
    return acc.astype(np.float32)


def pointwise_conv2d(x, w: ConvWeights, counter: MacCounter | None = None) -> np.ndarray:
    """1x1 convolution; shares the exact arithmetic path of ``conv2d_direct``."""
    x = _check(x, w, POINTWISE)
    as_direct = ConvWeights(CONVENTIONAL, w.values[:, :, None, None], w.bias)
    return conv2d_direct(x, as_direct, stride=1, zero_pad=0, counter=counter)


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x), np.float32(0.0))


def global_avg_pool(x) -> np.ndarray:
    """Mean over each ``H x W`` plane, giving a ``(C, 1, 1)`` tensor."""
    x = as_tensor(x)
    c = x.shape[0]
    means = x.reshape(c, -1).astype(np.float64).mean(axis=1)
    return means.astype(np.float32).reshape(c, 1, 1)


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-shifted) along ``axis``."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[axis] == 0:
        raise UsageError("softmax of an empty vector")
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=axis, keepdims=True)).astype(np.float32)
