"""Exact multiply-accumulate and parameter accounting.

Costs are counted in MACs (one multiply plus one add) with Python integers,
so nothing here is ever rounded.  ``Df`` always denotes the *output* spatial
extent of a layer; for strided layers this is the propagated size.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

from . import nn
from .errors import UsageError
from .graph import NetworkConfig, validate_config

BYTES_PER_VALUE = 4
CSV_FIELDS = ("layer", "kind", "Dk", "M", "N", "Df", "macs", "params")


@dataclass(frozen=True)
class LayerCost:
    layer_label: str
    macs: int
    params: int
    bias: int = 0
    kind: str = ""
    Dk: int = 0
    M: int = 0
    N: int = 0
    Df: int = 0


def _positive(**kwargs):
    for name, value in kwargs.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise UsageError(f"{name} must be a positive integer, got {value!r}")


def cost_conventional(Dk: int, M: int, N: int, Df: int, label: str = "conventional") -> LayerCost:
    """``Dk*Dk*M*N*Df*Df`` MACs; ``N*M*Dk*Dk`` weights plus ``N`` biases."""
    _positive(Dk=Dk, M=M, N=N, Df=Df)
    return LayerCost(label, Dk * Dk * M * N * Df * Df, N * M * Dk * Dk, N,
                     nn.CONVENTIONAL, Dk, M, N, Df)


def cost_depthwise(Dk: int, M: int, Df: int, label: str = "depthwise") -> LayerCost:
    _positive(Dk=Dk, M=M, Df=Df)
    return LayerCost(label, Dk * Dk * M * Df * Df, M * Dk * Dk, M, nn.DEPTHWISE, Dk, M, M, Df)


def cost_pointwise(M: int, N: int, Df: int, label: str = "pointwise") -> LayerCost:
    _positive(M=M, N=N, Df=Df)
    return LayerCost(label, N * M * Df * Df, N * M, N, nn.POINTWISE, 1, M, N, Df)


def cost_separable(Dk: int, M: int, N: int, Df: int, label: str = "separable") -> LayerCost:
    """Depthwise stage plus pointwise stage: ``Dk*Dk*M*Df*Df + N*M*Df*Df``."""
    _positive(Dk=Dk, M=M, N=N, Df=Df)
    macs = Dk * Dk * M * Df * Df + N * M * Df * Df
    params = M * Dk * Dk + N * M
    return LayerCost(label, macs, params, M + N, "separable", Dk, M, N, Df)


def reduction_ratio(Dk: int, N: int) -> Fraction:
    """Separable-to-conventional cost ratio ``1/N + 1/Dk**2``, as an exact fraction."""
    _positive(Dk=Dk, N=N)
    return Fraction(1, N) + Fraction(1, Dk * Dk)


@dataclass(frozen=True)
class SeparablePair:
    depthwise: LayerCost
    pointwise: LayerCost

    @property
    def separable_macs(self) -> int:
        return self.depthwise.macs + self.pointwise.macs

    @property
    def conventional(self) -> LayerCost:
        dw, pw = self.depthwise, self.pointwise
        return cost_conventional(dw.Dk, dw.M, pw.N, pw.Df, f"{dw.layer_label}+{pw.layer_label}")

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.separable_macs, self.conventional.macs)


@dataclass
class NetworkProfile:
    rows: list[LayerCost] = field(default_factory=list)
    peak_activation_values: int = 0

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def total_weights(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_bias(self) -> int:
        return sum(r.bias for r in self.rows)

    @property
    def total_params(self) -> int:
        return self.total_weights + self.total_bias

    @property
    def param_bytes(self) -> int:
        return BYTES_PER_VALUE * self.total_params

    @property
    def peak_activation_bytes(self) -> int:
        return BYTES_PER_VALUE * self.peak_activation_values

    def separable_pairs(self) -> list[SeparablePair]:
        """Adjacent depthwise -> pointwise rows of the backbone."""
        pairs = []
        for a, b in zip(self.rows, self.rows[1:]):
            if a.kind == nn.DEPTHWISE and b.kind == nn.POINTWISE and a.Df == b.Df:
                pairs.append(SeparablePair(a, b))
        return pairs

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in self.rows:
            writer.writerow([r.layer_label, r.kind, r.Dk, r.M, r.N, r.Df, r.macs, r.params])
        return buf.getvalue()


def _layer_cost(kind: str, label: str, Dk: int, M: int, N: int, Df: int) -> LayerCost:
    if kind == nn.CONVENTIONAL:
        return cost_conventional(Dk, M, N, Df, label)
    if kind == nn.DEPTHWISE:
        return cost_depthwise(Dk, M, Df, label)
    return cost_pointwise(M, N, Df, label)


def profile_network(config: NetworkConfig, head=None) -> NetworkProfile:
    """One :class:`LayerCost` per convolution layer, plus detection heads if given.

    ``head`` is an :class:`lcnn.ssd.HeadSpec`; each tap then contributes a
    ``loc`` and a ``conf`` 1x1 predictor row labelled ``head<tap>.loc`` /
    ``head<tap>.conf``.
    """
    table = validate_config(config)
    profile = NetworkProfile()
    peak = 0
    for row in table:
        peak = max(peak, _numel(row.in_shape) + _numel(row.out_shape))
        layer = config.layer(row.index)
        if not layer.is_conv:
            continue
        m, h, w = row.in_shape
        n, ho, wo = row.out_shape
        if ho != wo:
            raise UsageError(f"layer {row.index}: non-square output {ho}x{wo}")
        profile.rows.append(_layer_cost(layer.kind, str(row.index), layer.kernel, m, n, ho))
    if head is not None:
        ppl = config.priors_per_location
        for t in config.tap_indices:
            c, h, w = table[t - 1].out_shape
            for part, n in (("loc", ppl * 4), ("conf", ppl * config.num_classes)):
                profile.rows.append(cost_pointwise(c, n, h, f"head{t}.{part}"))
                peak = max(peak, c * h * w + n * h * w)
    profile.peak_activation_values = peak
    return profile


def _numel(shape) -> int:
    c, h, w = shape
    return c * h * w
