"""Network configuration, the default L-CNN schedule and the forward pass."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import nn
from .errors import ConfigurationError, GeometryError, WeightLoadError

GLOBAL_POOL = "global_pool"
LAYER_KINDS = nn.CONV_KINDS + (GLOBAL_POOL,)
ACTIVATIONS = ("relu", "none")

# (out_channels, depthwise stride) for each depthwise-separable block.
# Editing this table is the only change needed for a different schedule.
LCNN_FIRST_CONV = (32, 3, 2)  # out_channels, kernel, stride
LCNN_BLOCKS = (
    (64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2),
    (512, 1), (512, 1), (512, 1), (1024, 2), (1024, 1), (1024, 1),
)
LCNN_TAPS = (11, 13, 15, 17)
LCNN_INPUT_SIZE = 224
LCNN_NUM_CLASSES = 21
LCNN_PRIORS_PER_LOCATION = 6


@dataclass(frozen=True)
class LayerSpec:
    """One entry of the layer schedule.

    ``padding=None`` means "same" padding, ``(kernel - 1) // 2``.
    ``out_channels`` is ignored for depthwise and pooling layers.
    """

    index: int
    kind: str
    out_channels: int = 0
    kernel: int = 1
    stride: int = 1
    activation: str = "relu"
    padding: int | None = None

    @property
    def pad(self) -> int:
        if self.kind in (nn.POINTWISE, GLOBAL_POOL):
            return 0
        return (self.kernel - 1) // 2 if self.padding is None else self.padding

    @property
    def is_conv(self) -> bool:
        return self.kind in nn.CONV_KINDS


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple[LayerSpec, ...]
    input_size: int = LCNN_INPUT_SIZE
    input_channels: int = 3
    tap_indices: tuple[int, ...] = LCNN_TAPS
    num_classes: int = LCNN_NUM_CLASSES
    priors_per_location: int = LCNN_PRIORS_PER_LOCATION

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "tap_indices", tuple(sorted(set(self.tap_indices))))

    def layer(self, index: int) -> LayerSpec:
        return self.layers[index - 1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(layer) for layer in self.layers]
        d["tap_indices"] = list(self.tap_indices)
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkConfig":
        try:
            layers = tuple(LayerSpec(**layer) for layer in d["layers"])
            kwargs = {k: d[k] for k in ("input_size", "input_channels", "num_classes",
                                        "priors_per_location") if k in d}
            if "tap_indices" in d:
                kwargs["tap_indices"] = tuple(d["tap_indices"])
            return cls(layers=layers, **kwargs)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed network config document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"network config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "NetworkConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def build_lcnn_default() -> NetworkConfig:
    """The 26-layer schedule: one 3x3 convolution, 12 dw/pw pairs, one final pool."""
    out, k, s = LCNN_FIRST_CONV
    layers = [LayerSpec(1, nn.CONVENTIONAL, out, k, s)]
    for out, stride in LCNN_BLOCKS:
        layers.append(LayerSpec(len(layers) + 1, nn.DEPTHWISE, 0, 3, stride))
        layers.append(LayerSpec(len(layers) + 1, nn.POINTWISE, out, 1, 1))
    layers.append(LayerSpec(len(layers) + 1, GLOBAL_POOL, 0, 1, 1, "none"))
    return NetworkConfig(tuple(layers))


@dataclass(frozen=True)
class LayerShape:
    index: int
    kind: str
    in_shape: tuple[int, int, int]
    out_shape: tuple[int, int, int]


def validate_config(config: NetworkConfig) -> list[LayerShape]:
    """Propagate shapes through the schedule, rejecting inconsistent layers.

    Returns one :class:`LayerShape` per layer.  Errors name the offending
    1-based layer index.
    """
    if config.input_size < 1 or config.input_channels < 1:
        raise ConfigurationError("input size and channel count must be positive")
    if config.num_classes < 2:
        raise ConfigurationError("num_classes must include background plus one class")
    if config.priors_per_location < 1:
        raise ConfigurationError("priors_per_location must be positive")
    if not config.layers:
        raise ConfigurationError("network has no layers")

    shape = (config.input_channels, config.input_size, config.input_size)
    table = []
    last = len(config.layers)
    for pos, layer in enumerate(config.layers, start=1):
        where = f"layer {pos}"
        if layer.index != pos:
            raise ConfigurationError(f"{where}: index field is {layer.index}, expected {pos}")
        if layer.kind not in LAYER_KINDS:
            raise ConfigurationError(f"{where}: unknown kind {layer.kind!r}")
        if layer.activation not in ACTIVATIONS:
            raise ConfigurationError(f"{where}: unknown activation {layer.activation!r}")
        c, h, w = shape
        if layer.kind == GLOBAL_POOL:
            if pos != last:
                raise ConfigurationError(
                    f"{where}: global pooling is allowed only once, as the final layer"
                )
            out = (c, 1, 1)
        else:
            if layer.kernel < 1 or layer.kernel % 2 == 0:
                raise ConfigurationError(f"{where}: kernel must be a positive odd integer")
            if layer.stride < 1:
                raise ConfigurationError(f"{where}: stride must be >= 1")
            if layer.kind == nn.POINTWISE and (layer.kernel != 1 or layer.stride != 1):
                raise ConfigurationError(f"{where}: pointwise layers use a 1x1 kernel, stride 1")
            if layer.padding is not None and layer.padding < 0:
                raise ConfigurationError(f"{where}: padding must be >= 0")
            if layer.kind == nn.DEPTHWISE:
                n = c
            else:
                n = layer.out_channels
                if n < 1:
                    raise ConfigurationError(f"{where}: out_channels must be positive")
            ho = nn.output_size(h, layer.kernel, layer.stride, layer.pad)
            wo = nn.output_size(w, layer.kernel, layer.stride, layer.pad)
            if ho < 1 or wo < 1:
                raise GeometryError(
                    f"{where}: {layer.kernel}x{layer.kernel} kernel (stride {layer.stride}, "
                    f"pad {layer.pad}) leaves no output from a {h}x{w} input"
                )
            out = (n, ho, wo)
        table.append(LayerShape(pos, layer.kind, shape, out))
        shape = out

    for t in config.tap_indices:
        if not 1 <= t <= last or not config.layer(t).is_conv:
            raise ConfigurationError(f"tap index {t} does not reference a convolution layer")
    return table


def conv_weight_shape(layer: LayerSpec, in_channels: int) -> tuple[int, ...]:
    if layer.kind == nn.CONVENTIONAL:
        return (layer.out_channels, in_channels, layer.kernel, layer.kernel)
    if layer.kind == nn.DEPTHWISE:
        return (in_channels, layer.kernel, layer.kernel)
    return (layer.out_channels, in_channels)


def weight_name(index: int, part: str) -> str:
    return f"layer{index}.{part}"


def parameter_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    """Ordered ``name -> shape`` for every backbone parameter array."""
    shapes = {}
    for row in validate_config(config):
        layer = config.layer(row.index)
        if not layer.is_conv:
            continue
        shapes[weight_name(row.index, "weight")] = conv_weight_shape(layer, row.in_shape[0])
        shapes[weight_name(row.index, "bias")] = (row.out_shape[0],)
    return shapes


def fetch_array(weights: Mapping[str, np.ndarray], name: str, shape, owner: str) -> np.ndarray:
    if name not in weights:
        raise WeightLoadError(f"{owner}: missing weight array {name!r}")
    arr = np.asarray(weights[name])
    if tuple(arr.shape) != tuple(shape):
        raise WeightLoadError(
            f"{owner}: array {name!r} has shape {tuple(arr.shape)}, expected {tuple(shape)}"
        )
    return arr


def load_layer_weights(config: NetworkConfig, weights: Mapping[str, np.ndarray]) -> dict[int, nn.ConvWeights]:
    """Check every backbone array against the config and wrap it as ConvWeights."""
    table = validate_config(config)
    out = {}
    for row in table:
        layer = config.layer(row.index)
        if not layer.is_conv:
            continue
        owner = f"layer {row.index} ({layer.kind})"
        w = fetch_array(weights, weight_name(row.index, "weight"),
                        conv_weight_shape(layer, row.in_shape[0]), owner)
        b = fetch_array(weights, weight_name(row.index, "bias"), (row.out_shape[0],), owner)
        out[row.index] = nn.ConvWeights(layer.kind, w, b)
    return out


@dataclass
class ForwardResult:
    taps: list[tuple[int, np.ndarray]] = field(default_factory=list)
    final: np.ndarray | None = None

    def tap(self, index: int) -> np.ndarray:
        for i, t in self.taps:
            if i == index:
                return t
        raise KeyError(index)


def apply_layer(layer: LayerSpec, w: nn.ConvWeights | None, x: np.ndarray,
                counter: nn.MacCounter | None = None) -> np.ndarray:
    if layer.kind == nn.CONVENTIONAL:
        y = nn.conv2d_direct(x, w, layer.stride, layer.pad, counter)
    elif layer.kind == nn.DEPTHWISE:
        y = nn.depthwise_conv2d(x, w, layer.stride, layer.pad, counter)
    elif layer.kind == nn.POINTWISE:
        y = nn.pointwise_conv2d(x, w, counter)
    else:
        y = nn.global_avg_pool(x)
    if layer.activation == "relu":
        y = nn.relu(y)
    return y


def forward(config: NetworkConfig, weights: Mapping[str, np.ndarray], x,
            counter: nn.MacCounter | None = None,
            prepared: dict[int, nn.ConvWeights] | None = None) -> ForwardResult:
    """Run the backbone on one ``(C, H, W)`` frame, snapshotting the tap layers.

    ``prepared`` may carry the output of :func:`load_layer_weights` to skip
    re-validating the weights on every frame.
    """
    x = nn.as_tensor(x)
    expected = (config.input_channels, config.input_size, config.input_size)
    if x.shape != expected:
        raise ConfigurationError(f"input shape {x.shape} does not match config {expected}")
    layer_w = prepared if prepared is not None else load_layer_weights(config, weights)
    taps = set(config.tap_indices)
    result = ForwardResult()
    for layer in config.layers:
        x = apply_layer(layer, layer_w.get(layer.index), x, counter)
        if layer.index in taps:
            result.taps.append((layer.index, x))
    result.final = x
    return result
