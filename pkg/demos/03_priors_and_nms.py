"""
Prior boxes, decoding and suppression
=====================================

Generate the default boxes over the four tap grids, decode a few offsets
and watch greedy NMS collapse a cluster of overlapping detections.
"""

import numpy as np

from lcnn import ssd
from lcnn.ssd import Detection, HeadSpec

head = HeadSpec()
priors = ssd.generate_priors([(28, 28), (14, 14), (14, 14), (14, 14)], head)
print("scales:", [round(s, 3) for s in head.scales])
print("priors:", priors.shape)  # 6 boxes per cell
print("first cell, center form:\n", priors[:6].round(4))

# Zero offsets decode to the priors themselves (in corner form)
corners = ssd.decode_boxes(np.zeros((6, 4)), priors[:6])
print("decoded corners:\n", corners.round(4))

# Encoding is the inverse of decoding
box = np.array([[0.10, 0.20, 0.40, 0.70]])
offsets = ssd.encode_boxes(box, priors[:1])
print("offsets:", offsets.round(3), "back:", ssd.decode_boxes(offsets, priors[:1]).round(6))

# Three near-duplicates and one separate box
cands = [
    Detection(15, 0.92, (0.10, 0.10, 0.50, 0.60), 0),
    Detection(15, 0.85, (0.12, 0.11, 0.52, 0.62), 1),
    Detection(15, 0.60, (0.09, 0.08, 0.48, 0.58), 2),
    Detection(15, 0.70, (0.60, 0.20, 0.90, 0.80), 3),
]
for d in ssd.nms(cands, iou_threshold=0.45):
    print(f"kept prior {d.prior_index} score {d.score}")
