"""
How much a depthwise-separable layer saves
==========================================

Count multiply-accumulates for one conventional 3x3 convolution and for
the depthwise + pointwise pair that replaces it.
"""

from fractions import Fraction

from lcnn import complexity
from lcnn.graph import build_lcnn_default

# One layer: 3x3 kernel, 128 -> 256 channels on a 28x28 map
conv = complexity.cost_conventional(3, 128, 256, 28)
sep = complexity.cost_separable(3, 128, 256, 28)
print(f"conventional MACs: {conv.macs:,}")
print(f"separable MACs:    {sep.macs:,}")
print(f"ratio: {Fraction(sep.macs, conv.macs)} = 1/256 + 1/9 = {complexity.reduction_ratio(3, 256)}")

# The same ratio for every block of the default network
profile = complexity.profile_network(build_lcnn_default())
for pair in profile.separable_pairs():
    print(pair.depthwise.layer_label, pair.pointwise.layer_label,
          f"{pair.separable_macs:>12,}", f"{float(pair.ratio):.4f}")

print(f"total MACs {profile.total_macs:,}, parameters {profile.total_params:,}, "
      f"{profile.param_bytes / 2**20:.1f} MiB of float32 weights")
