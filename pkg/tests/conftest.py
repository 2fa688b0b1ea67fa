import numpy as np
import pytest

from lcnn import evaluate, media, ssd
from lcnn.graph import LayerSpec, NetworkConfig
from lcnn.ssd import PERSON, Detection

ACCEPTANCE_LINES = []


def naive_conv(x, w, bias, stride, pad):
    """Loop-per-output-element reference convolution in float64.

    ``w`` is ``(N, M, k, k)``.  Written without any of the engine's tap
    decomposition so it can serve as an independent oracle.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    m, h, wd = x.shape
    n, _, k, _ = w.shape
    xp = np.zeros((m, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, ho, wo))
    for o in range(n):
        for y in range(ho):
            for xx in range(wo):
                total = 0.0
                for c in range(m):
                    for i in range(k):
                        for j in range(k):
                            total += xp[c, y * stride + i, xx * stride + j] * w[o, c, i, j]
                out[o, y, xx] = total + (0.0 if bias is None else float(bias[o]))
    return out


def exhaustive_nms(cands, thr):
    """Reference NMS: search every subset for the unique self-consistent keep set.

    A set S is consistent when, for each candidate c in rank order, c is in S
    exactly when no higher-ranked same-class member of S overlaps it at >= thr.
    """
    ranked = sorted(cands, key=lambda d: (-d.score, d.prior_index))
    found = []
    for mask in range(1 << len(ranked)):
        chosen = [ranked[i] for i in range(len(ranked)) if mask >> i & 1]
        ok = True
        for i, c in enumerate(ranked):
            blocked = any(
                o.class_id == c.class_id and ssd.iou(c.box, o.box) >= thr
                for o in ranked[:i] if o in chosen
            )
            if (c in chosen) == blocked:
                ok = False
                break
        if ok:
            found.append(chosen)
    assert len(found) == 1
    return found[0]


def random_candidates(rng, n):
    out = []
    for i in range(n):
        x0, y0 = rng.randint(0, 4) / 8, rng.randint(0, 4) / 8
        w, h = rng.randint(1, 4) / 8, rng.randint(1, 4) / 8
        score = rng.choice([0.5, 0.6, 0.7, 0.8, 0.9, rng.random()])
        out.append(Detection(rng.randint(1, 2), score, (x0, y0, x0 + w, y0 + h), i))
    return out


CAR = 7
A = (0.1, 0.1, 0.5, 0.5)
B = (0.0, 0.0, 0.2, 0.2)
C = (0.6, 0.6, 0.9, 0.9)
D = (0.3, 0.3, 0.5, 0.5)


def det(box, score, cls=PERSON):
    return Detection(cls, score, box)


def fixture_frames():
    """Three frames, six detections, two false positives.

    f1: d(0.9) overlaps A at IoU 0.875 and claims it; the exact copy of A at
        0.8 comes second, finds A claimed -> unmatched.
    f2: exact B, C at IoU 0.075/0.09 = 0.833, car exact D -> all matched.
    f3: no ground truth -> unmatched.
    """
    dets = {
        "f1": [det(A, 0.8), det((0.1, 0.1, 0.5, 0.45), 0.9)],
        "f2": [det(B, 0.7), det((0.6, 0.6, 0.9, 0.85), 0.6), det(D, 0.95, CAR)],
        "f3": [det((0.4, 0.4, 0.6, 0.6), 0.99)],
    }
    gts = evaluate.parse_ground_truth([
        f"f1 {PERSON} 0.1 0.1 0.5 0.5",
        f"f2 {PERSON} 0.0 0.0 0.2 0.2",
        f"f2 {PERSON} 0.6 0.6 0.9 0.9",
        f"f2 {CAR} 0.3 0.3 0.5 0.5",
        "f3",
    ])
    return dets, gts


def tiny_config(**kw):
    """4x4 input -> 1x1 tap at layer 3; handy for constructed detection fixtures."""
    layers = (
        LayerSpec(1, "conventional", 4, 3, 2),
        LayerSpec(2, "depthwise", 0, 3, 2),
        LayerSpec(3, "pointwise", 8, 1, 1),
    )
    kw.setdefault("tap_indices", (3,))
    return NetworkConfig(layers, input_size=4, **kw)


def synthetic_image(width, height, seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = np.stack([xx * 255 // max(width - 1, 1), yy * 255 // max(height - 1, 1),
                     (xx + yy) % 256], axis=2)
    noise = rng.integers(0, 32, size=(height, width, 3))
    return media.ImageRGB(np.clip(base + noise, 0, 255).astype(np.uint8))


@pytest.fixture
def frames_dir(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    for i, (w, h) in enumerate([(320, 240), (224, 224), (160, 200)]):
        media.save_ppm(synthetic_image(w, h, i), d / f"frame_{i:03d}.ppm")
    return d


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
