"""
Detection on PPM frames
=======================

Write a couple of synthetic frames to a temporary directory, then run the
full pipeline: decode, resize to 224x224, normalize, forward, decode
boxes and suppress.  Random weights produce meaningless boxes, so the
confidence threshold is lowered to get some output.
"""

import io
import tempfile
from pathlib import Path

import numpy as np

from lcnn import media, ssd
from lcnn.graph import build_lcnn_default
from lcnn.ssd import HeadSpec
from lcnn.weights import random_init

tmp = Path(tempfile.mkdtemp())
rng = np.random.default_rng(1)
for i, (w, h) in enumerate([(320, 240), (160, 200)]):
    pixels = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    media.save_ppm(media.ImageRGB(pixels), tmp / f"frame_{i:03d}.ppm")

config = build_lcnn_default()
head = HeadSpec(confidence_threshold=0.05, top_k=5)
detector = ssd.Detector(config, random_init(config, head, seed=42), head)

results = []
for path in sorted(tmp.glob("*.ppm")):
    x = media.preprocess(media.load_image(path), config.input_size)
    results.append((path.stem, detector.detect(x, all_classes=True)))

buf = io.StringIO()
ssd.write_jsonl(results, buf)
print(buf.getvalue())

# The same thing from the shell:
#   lcnn init --seed 42 --out w.lcnw
#   lcnn detect --weights w.lcnw --frames <dir> --all-classes --threshold 0.05
