"""
A forward pass and its feature taps
===================================

Build the default 26-layer network, give it seeded random weights and
look at the intermediate maps that feed the detection heads.
"""

import time

import numpy as np

from lcnn import nn
from lcnn.graph import build_lcnn_default, forward, validate_config
from lcnn.weights import random_init

config = build_lcnn_default()

# Shape propagation needs no weights at all
for row in validate_config(config):
    print(f"layer {row.index:2d} {row.kind:12s} {row.in_shape} -> {row.out_shape}")

store = random_init(config, seed=0)
x = np.random.default_rng(0).uniform(-1, 1, (3, 224, 224)).astype(np.float32)

counter = nn.MacCounter()
start = time.perf_counter()
result = forward(config, store, x, counter)
print(f"forward pass: {time.perf_counter() - start:.3f} s, {counter.macs:,} MACs")

for index in config.tap_indices:
    fmap = result.tap(index)
    print(f"tap {index}: shape {fmap.shape}, mean activation {fmap.mean():.4f}")
print("pooled feature vector:", result.final.shape)
