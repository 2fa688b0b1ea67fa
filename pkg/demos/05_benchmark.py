"""
Frames per second and memory
============================

Time the detector on a fixed frame for a couple of seconds, then repeat
with a fake clock that advances half a second per read so the report is
exactly predictable.
"""

import numpy as np

from lcnn import evaluate
from lcnn.graph import build_lcnn_default
from lcnn.ssd import HeadSpec
from lcnn.weights import random_init

config = build_lcnn_default()
head = HeadSpec()
store = random_init(config, head, seed=0)
frame = np.zeros((3, 224, 224), np.float32)

report = evaluate.bench_fps(config, store, head, [frame], duration_s=2.0)
print(report.to_csv())
print(f"median latency {np.median(report.per_frame_ms):.1f} ms")

fake = evaluate.bench_fps(config, store, head, [frame], duration_s=2.0,
                          clock=evaluate.SteppingClock(0.5))
print(fake.to_csv())  # 4 frames in 2 s: fps_avg = fps_peak = 2

param_bytes, activation_bytes = evaluate.memory_report(config, head)
print(f"weights {param_bytes / 2**20:.2f} MiB, peak activations {activation_bytes / 2**20:.2f} MiB")
