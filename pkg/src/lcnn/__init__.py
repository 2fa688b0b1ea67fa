"""Lightweight depthwise-separable CNN human detector for edge devices.

Inference only: convolution kernels, the 26-layer detection backbone with
SSD-style heads, exact MAC accounting, and an FPS / false-positive harness.
"""

from .complexity import (
    LayerCost,
    cost_conventional,
    cost_depthwise,
    cost_pointwise,
    cost_separable,
    profile_network,
    reduction_ratio,
)
from .errors import (
    ConfigurationError,
    FormatError,
    GeometryError,
    LCNNError,
    UsageError,
    WeightLoadError,
)
from .evaluate import BenchReport, GroundTruth, bench_fps, false_positive_rate, memory_report
from .graph import LayerSpec, NetworkConfig, build_lcnn_default, forward, validate_config
from .media import ImageRGB, load_image, normalize_to_tensor, resize_bilinear
from .nn import (
    ConvWeights,
    conv2d_direct,
    depthwise_conv2d,
    global_avg_pool,
    pointwise_conv2d,
    relu,
    softmax,
)
from .ssd import Detection, Detector, HeadSpec, decode_boxes, detect, generate_priors, iou, nms
from .weights import WeightStore, load_weights, random_init, save_weights

__version__ = "0.1.0"
