"""SSD-style detection: default boxes, box decoding, NMS and the detect pipeline.

Boxes travel as ``numpy`` rows.  Priors are center form ``(cx, cy, w, h)``;
decoded boxes and detections are corner form ``(xmin, ymin, xmax, ymax)``.
All coordinates are normalized to the unit square.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import nn
from .errors import ConfigurationError, UsageError
from .graph import NetworkConfig, fetch_array, forward, load_layer_weights, validate_config

BACKGROUND = 0
# Class indices of the 20-class VOC label set, background at 0.
VOC_CLASSES = (
    "background", "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car",
    "cat", "chair", "cow", "diningtable", "dog", "horse", "motorbike", "person",
    "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)
PERSON = VOC_CLASSES.index("person")

DEFAULT_ASPECT_RATIOS = (1.0, 2.0, 0.5, 3.0, 1.0 / 3.0)
DEFAULT_VARIANCES = (0.1, 0.1, 0.2, 0.2)


def linear_scales(n: int, s_min: float = 0.2, s_max: float = 0.9) -> tuple[float, ...]:
    if n == 1:
        return (s_min,)
    return tuple(s_min * (1 - k / (n - 1)) + s_max * (k / (n - 1)) for k in range(n))


@dataclass(frozen=True)
class HeadSpec:
    """Detection-head hyperparameters.

    Each tap gets ``len(aspect_ratios) + 1`` priors per cell: one per ratio at
    scale ``s_k`` and an extra square box at ``sqrt(s_k * s_{k+1})``.
    """

    scales: tuple[float, ...] = field(default_factory=lambda: linear_scales(4))
    aspect_ratios: tuple[float, ...] = DEFAULT_ASPECT_RATIOS
    variances: tuple[float, float, float, float] = DEFAULT_VARIANCES
    confidence_threshold: float = 0.5
    nms_iou_threshold: float = 0.45
    top_k: int = 100

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "aspect_ratios", tuple(float(a) for a in self.aspect_ratios))
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        if not self.scales or any(not 0 < s <= 1 for s in self.scales):
            raise ConfigurationError("scales must lie in (0, 1]")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ConfigurationError("scales must be strictly increasing across taps")
        if not self.aspect_ratios or any(a <= 0 for a in self.aspect_ratios):
            raise ConfigurationError("aspect ratios must be positive")
        if len(self.variances) != 4 or any(v <= 0 for v in self.variances):
            raise ConfigurationError("need four positive variances")
        if self.top_k < 1:
            raise ConfigurationError("top_k must be positive")

    @property
    def priors_per_location(self) -> int:
        return len(self.aspect_ratios) + 1

    @classmethod
    def for_config(cls, config: NetworkConfig, **overrides) -> "HeadSpec":
        overrides.setdefault("scales", linear_scales(len(config.tap_indices)))
        return cls(**overrides)

    def check(self, config: NetworkConfig):
        if len(self.scales) != len(config.tap_indices):
            raise ConfigurationError(
                f"{len(self.scales)} scales for {len(config.tap_indices)} taps"
            )
        if self.priors_per_location != config.priors_per_location:
            raise ConfigurationError(
                f"head yields {self.priors_per_location} priors per location, "
                f"config expects {config.priors_per_location}"
            )


@dataclass(frozen=True)
class Detection:
    class_id: int
    score: float
    box: tuple[float, float, float, float]
    prior_index: int = -1

    def to_json(self, frame: str) -> str:
        """One JSON record; floats are written with exactly six decimals."""
        xmin, ymin, xmax, ymax = self.box
        return (
            f'{{"frame": {json.dumps(frame)}, "class": {int(self.class_id)}, '
            f'"score": {self.score:.6f}, "xmin": {xmin:.6f}, "ymin": {ymin:.6f}, '
            f'"xmax": {xmax:.6f}, "ymax": {ymax:.6f}}}'
        )


def generate_priors(tap_shapes: Sequence[tuple[int, int]], head: HeadSpec) -> np.ndarray:
    """Default boxes for every tap cell as an ``(P, 4)`` center-form array.

    Order: taps in the given order, cells row-major, then the aspect ratios in
    declared order followed by the extra square box.
    """
    if len(tap_shapes) != len(head.scales):
        raise ConfigurationError(f"{len(tap_shapes)} taps but {len(head.scales)} scales")
    out = []
    for k, (h, w) in enumerate(tap_shapes):
        s = head.scales[k]
        s_next = head.scales[k + 1] if k + 1 < len(head.scales) else 1.0
        sizes = [(s * math.sqrt(a), s / math.sqrt(a)) for a in head.aspect_ratios]
        extra = math.sqrt(s * s_next)
        sizes.append((extra, extra))
        sizes = np.clip(np.array(sizes), 0.0, 1.0)
        cy, cx = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
        centers = np.stack([cx.ravel(), cy.ravel()], axis=1)
        boxes = np.empty((h * w, len(sizes), 4))
        boxes[:, :, :2] = centers[:, None, :]
        boxes[:, :, 2:] = sizes[None, :, :]
        out.append(boxes.reshape(-1, 4))
    return np.concatenate(out, axis=0)


def center_to_corner(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64)
    return np.concatenate([b[..., :2] - b[..., 2:] / 2, b[..., :2] + b[..., 2:] / 2], axis=-1)


def corner_to_center(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=np.float64)
    return np.concatenate([(b[..., :2] + b[..., 2:]) / 2, b[..., 2:] - b[..., :2]], axis=-1)


def decode_boxes(loc, priors, variances=DEFAULT_VARIANCES, clip: bool = True) -> np.ndarray:
    """Apply regression offsets ``(tx, ty, tw, th)`` to center-form priors."""
    loc = np.asarray(loc, dtype=np.float64).reshape(-1, 4)
    priors = np.asarray(priors, dtype=np.float64).reshape(-1, 4)
    if loc.shape[0] != priors.shape[0]:
        raise UsageError(f"{loc.shape[0]} offsets for {priors.shape[0]} priors")
    v = np.asarray(variances, dtype=np.float64)
    cxcy = priors[:, :2] + loc[:, :2] * v[:2] * priors[:, 2:]
    wh = priors[:, 2:] * np.exp(loc[:, 2:] * v[2:])
    boxes = center_to_corner(np.concatenate([cxcy, wh], axis=1))
    return np.clip(boxes, 0.0, 1.0) if clip else boxes


def encode_boxes(boxes, priors, variances=DEFAULT_VARIANCES) -> np.ndarray:
    """Inverse of :func:`decode_boxes` (without clipping) for corner-form boxes."""
    c = corner_to_center(np.asarray(boxes, dtype=np.float64).reshape(-1, 4))
    priors = np.asarray(priors, dtype=np.float64).reshape(-1, 4)
    v = np.asarray(variances, dtype=np.float64)
    txy = (c[:, :2] - priors[:, :2]) / (v[:2] * priors[:, 2:])
    twh = np.log(c[:, 2:] / priors[:, 2:]) / v[2:]
    return np.concatenate([txy, twh], axis=1)


def iou(a, b) -> float:
    """Intersection over union of two corner-form boxes."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def nms(candidates: Sequence[Detection], iou_threshold: float = 0.45,
        top_k: int | None = None) -> list[Detection]:
    """Greedy per-class suppression.

    Candidates are visited by descending score (ties: lower prior index
    first); a box is kept when its IoU with every kept box of the same class
    is below ``iou_threshold``.  The survivors, best first, are cut to
    ``top_k``.
    """
    order = sorted(candidates, key=lambda d: (-d.score, d.prior_index))
    kept: list[Detection] = []
    by_class: dict[int, list[Detection]] = {}
    for det in order:
        if top_k is not None and len(kept) >= top_k:
            break  # everything left ranks below the cut
        same = by_class.setdefault(det.class_id, [])
        if all(iou(det.box, k.box) < iou_threshold for k in same):
            same.append(det)
            kept.append(det)
    return kept


def head_weight_names(tap: int) -> dict[str, str]:
    return {
        "loc.weight": f"head{tap}.loc.weight", "loc.bias": f"head{tap}.loc.bias",
        "conf.weight": f"head{tap}.conf.weight", "conf.bias": f"head{tap}.conf.bias",
    }


def head_parameter_shapes(config: NetworkConfig, head: HeadSpec) -> dict[str, tuple[int, ...]]:
    """Ordered ``name -> shape`` for the per-tap loc/conf 1x1 predictors."""
    head.check(config)
    table = validate_config(config)
    ppl = config.priors_per_location
    shapes = {}
    for t in config.tap_indices:
        c = table[t - 1].out_shape[0]
        names = head_weight_names(t)
        shapes[names["loc.weight"]] = (ppl * 4, c)
        shapes[names["loc.bias"]] = (ppl * 4,)
        shapes[names["conf.weight"]] = (ppl * config.num_classes, c)
        shapes[names["conf.bias"]] = (ppl * config.num_classes,)
    return shapes


class Detector:
    """A config + weights + head bundle with weights validated once.

    Reusing one instance across frames avoids re-checking array shapes; it
    holds no mutable state, so ``detect`` is safe to call concurrently.
    """

    def __init__(self, config: NetworkConfig, weights: Mapping[str, np.ndarray],
                 head: HeadSpec | None = None):
        self.config = config
        self.head = head if head is not None else HeadSpec.for_config(config)
        self.head.check(config)
        table = validate_config(config)
        self.layer_weights = load_layer_weights(config, weights)
        shapes = head_parameter_shapes(config, self.head)
        self.heads = {}
        for t in config.tap_indices:
            names = head_weight_names(t)
            owner = f"head for tap {t}"
            arrays = {k: fetch_array(weights, n, shapes[n], owner) for k, n in names.items()}
            self.heads[t] = (
                nn.ConvWeights(nn.POINTWISE, arrays["loc.weight"], arrays["loc.bias"]),
                nn.ConvWeights(nn.POINTWISE, arrays["conf.weight"], arrays["conf.bias"]),
            )
        tap_shapes = [table[t - 1].out_shape[1:] for t in config.tap_indices]
        self.priors = generate_priors(tap_shapes, self.head)

    def raw_outputs(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-prior regression offsets ``(P, 4)`` and class probabilities ``(P, C)``."""
        result = forward(self.config, None, x, prepared=self.layer_weights)
        ppl, ncls = self.config.priors_per_location, self.config.num_classes
        locs, confs = [], []
        for t, fmap in result.taps:
            loc_w, conf_w = self.heads[t]
            _, h, w = fmap.shape
            loc = nn.pointwise_conv2d(fmap, loc_w).reshape(ppl, 4, h, w)
            conf = nn.pointwise_conv2d(fmap, conf_w).reshape(ppl, ncls, h, w)
            locs.append(loc.transpose(2, 3, 0, 1).reshape(-1, 4))
            confs.append(conf.transpose(2, 3, 0, 1).reshape(-1, ncls))
        loc = np.concatenate(locs)
        probs = nn.softmax(np.concatenate(confs), axis=1)
        return loc, probs

    def detect(self, x, all_classes: bool = False) -> list[Detection]:
        loc, probs = self.raw_outputs(x)
        head = self.head
        classes = range(1, self.config.num_classes) if all_classes else [PERSON]
        cands = []
        for c in classes:
            idx = np.flatnonzero(probs[:, c] >= head.confidence_threshold)
            if idx.size == 0:
                continue
            boxes = decode_boxes(loc[idx], self.priors[idx], head.variances)
            for i, box in zip(idx, boxes):
                if box[2] > box[0] and box[3] > box[1]:
                    cands.append(Detection(c, float(probs[i, c]), tuple(float(v) for v in box), int(i)))
        return nms(cands, head.nms_iou_threshold, head.top_k)


def detect(config: NetworkConfig, weights: Mapping[str, np.ndarray], head: HeadSpec | None,
           x, all_classes: bool = False) -> list[Detection]:
    """One-shot detection on a normalized ``(3, H, W)`` frame."""
    return Detector(config, weights, head).detect(x, all_classes=all_classes)


def write_jsonl(detections_by_frame, fh):
    """Write ``(frame, detections)`` pairs as one JSON object per detection."""
    for frame, dets in detections_by_frame:
        for d in dets:
            fh.write(d.to_json(frame) + "\n")
