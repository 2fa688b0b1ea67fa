import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import exhaustive_nms, random_candidates, tiny_config
from lcnn import ssd
from lcnn.errors import ConfigurationError, UsageError, WeightLoadError
from lcnn.graph import build_lcnn_default
from lcnn.ssd import Detection, HeadSpec
from lcnn.weights import WeightStore, random_init, zero_init


class TestPriors:
    def test_centered_box(self):
        p = ssd.generate_priors([(1, 1)], HeadSpec(scales=(0.5,), aspect_ratios=(1.0,)))
        np.testing.assert_allclose(p[0], [0.5, 0.5, 0.5, 0.5])

    def test_clipping(self):
        p = ssd.generate_priors([(1, 1)], HeadSpec(scales=(0.9,), aspect_ratios=(2.0,)))
        assert p[0, 2] == 1.0
        assert p[0, 3] == pytest.approx(0.9 / math.sqrt(2), abs=1e-12)
        assert p[0, 3] == pytest.approx(0.6364, abs=1e-4)

    def test_extra_box_uses_next_scale(self):
        p = ssd.generate_priors([(1, 1), (1, 1)], HeadSpec(scales=(0.2, 0.8), aspect_ratios=(1.0,)))
        assert p[1, 2] == pytest.approx(0.4)  # sqrt(0.2 * 0.8)
        assert p[3, 2] == pytest.approx(math.sqrt(0.8))  # last tap pairs with 1.0

    def test_default_count(self):
        p = ssd.generate_priors([(28, 28), (14, 14), (14, 14), (14, 14)], HeadSpec())
        assert p.shape == (8232, 4)
        assert np.all((p >= 0) & (p <= 1)) and np.all(p[:, 2:] > 0)

    def test_order_row_major(self):
        p = ssd.generate_priors([(2, 3)], HeadSpec(scales=(0.5,), aspect_ratios=(1.0, 2.0)))
        assert p.shape == (18, 4)
        # cell (row 0, col 1) starts at index 3
        np.testing.assert_allclose(p[3, :2], [1.5 / 3, 0.5 / 2])
        np.testing.assert_allclose(p[9, :2], [0.5 / 3, 1.5 / 2])

    def test_mismatch(self):
        with pytest.raises(ConfigurationError):
            ssd.generate_priors([(1, 1)], HeadSpec())

    def test_head_validation(self):
        with pytest.raises(ConfigurationError):
            HeadSpec(scales=(0.5, 0.4))
        with pytest.raises(ConfigurationError):
            HeadSpec(aspect_ratios=(1.0,)).check(build_lcnn_default())

    def test_default_scales(self):
        np.testing.assert_allclose(HeadSpec().scales, [0.2, 0.2 + 0.7 / 3, 0.2 + 1.4 / 3, 0.9])


class TestDecode:
    def test_zero_offset(self):
        prior = np.array([[0.4, 0.5, 0.2, 0.3]])
        box = ssd.decode_boxes(np.zeros((1, 4)), prior)
        np.testing.assert_allclose(box[0], [0.3, 0.35, 0.5, 0.65])

    def test_center_shift(self):
        prior = np.array([[0.4, 0.5, 0.2, 0.3]])
        box = ssd.decode_boxes([[1 / 0.1, 0, 0, 0]], prior)
        cx = (box[0, 0] + box[0, 2]) / 2
        assert cx == pytest.approx(0.6, abs=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c = rng.uniform(0.3, 0.7, 2)
            wh = rng.uniform(0.05, 0.5, 2)
            box = np.concatenate([c - wh / 2, c + wh / 2])[None]
            prior = np.concatenate([rng.uniform(0.1, 0.9, 2), rng.uniform(0.05, 0.9, 2)])[None]
            back = ssd.decode_boxes(ssd.encode_boxes(box, prior), prior)
            np.testing.assert_allclose(back, box, atol=1e-5)

    def test_count_mismatch(self):
        with pytest.raises(UsageError):
            ssd.decode_boxes(np.zeros((2, 4)), np.zeros((3, 4)))

    @given(tw=st.floats(-3, 3), delta=st.floats(0.01, 1))
    def test_width_monotone(self, tw, delta):
        prior = np.array([[0.5, 0.5, 0.1, 0.1]])
        w1 = ssd.decode_boxes([[0, 0, tw, 0]], prior, clip=False)
        w2 = ssd.decode_boxes([[0, 0, tw + delta, 0]], prior, clip=False)
        assert w2[0, 2] - w2[0, 0] > w1[0, 2] - w1[0, 0]


class TestIoU:
    def test_identical(self):
        assert ssd.iou((0, 0, 1, 1), (0, 0, 1, 1)) == 1.0

    def test_disjoint(self):
        assert ssd.iou((0, 0, 1, 1), (2, 2, 3, 3)) == 0.0
        assert ssd.iou((0, 0, 1, 1), (1, 0, 2, 1)) == 0.0

    def test_partial(self):
        assert ssd.iou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(1 / 7)


class TestNMS:
    def test_duplicate_suppressed(self):
        a = Detection(15, 0.9, (0.1, 0.1, 0.5, 0.5), 0)
        b = Detection(15, 0.8, (0.1, 0.1, 0.5, 0.5), 1)
        assert ssd.nms([b, a]) == [a]

    def test_disjoint_survive(self):
        ds = [Detection(15, 0.5 + i / 10, (i / 3, 0, i / 3 + 0.2, 0.2), i) for i in range(3)]
        assert set(ssd.nms(ds)) == set(ds)

    def test_classes_independent(self):
        a = Detection(15, 0.9, (0.1, 0.1, 0.5, 0.5), 0)
        b = Detection(7, 0.8, (0.1, 0.1, 0.5, 0.5), 1)
        assert ssd.nms([a, b]) == [a, b]

    def test_tie_break_by_prior_index(self):
        a = Detection(15, 0.7, (0.1, 0.1, 0.5, 0.5), 5)
        b = Detection(15, 0.7, (0.1, 0.1, 0.5, 0.5), 2)
        assert ssd.nms([a, b]) == [b]

    def test_top_k(self):
        ds = [Detection(15, 0.9 - i / 100, (i / 10, 0, i / 10 + 0.05, 0.05), i) for i in range(10)]
        kept = ssd.nms(ds, top_k=4)
        assert kept == ds[:4]

    def test_brute_force(self):
        rng = random.Random(1)
        for _ in range(300):
            cands = random_candidates(rng, rng.randint(0, 6))
            assert set(ssd.nms(cands, 0.45)) == set(exhaustive_nms(cands, 0.45))

    def test_order_invariant(self):
        rng = random.Random(2)
        for _ in range(100):
            cands = random_candidates(rng, 6)
            base = ssd.nms(cands, 0.45)
            for perm in itertools.islice(itertools.permutations(cands), 0, 720, 97):
                assert ssd.nms(list(perm), 0.45) == base

    @settings(max_examples=50)
    @given(st.integers(0, 2**32))
    def test_output_pairwise_below_threshold(self, seed):
        rng = random.Random(seed)
        cands = random_candidates(rng, rng.randint(0, 10))
        out = ssd.nms(cands, 0.45)
        assert set(out) <= set(cands)
        for a, b in itertools.combinations(out, 2):
            if a.class_id == b.class_id:
                assert ssd.iou(a.box, b.box) < 0.45


def tiny_weights(head, logit_prior=None, cls=ssd.PERSON, logit=10.0):
    config = tiny_config()
    store = zero_init(config, head)
    if logit_prior is not None:
        bias = np.zeros(6 * 21, np.float32)
        bias[logit_prior * 21 + cls] = logit
        store["head3.conf.bias"] = bias
    return config, store


class TestDetect:
    def test_zero_weights_emit_nothing(self):
        config = build_lcnn_default()
        head = HeadSpec()
        x = np.zeros((3, 224, 224), np.float32)
        assert ssd.detect(config, zero_init(config, head), head, x, all_classes=True) == []

    def test_constructed_single_detection(self):
        head = HeadSpec(scales=(0.5,))
        config, store = tiny_weights(head, logit_prior=2)
        dets = ssd.detect(config, store, head, np.zeros((3, 4, 4), np.float32))
        assert len(dets) == 1
        d = dets[0]
        assert d.class_id == ssd.PERSON and d.prior_index == 2
        # softmax of one logit at 10 against twenty at 0
        assert d.score == pytest.approx(math.exp(10) / (math.exp(10) + 20), rel=1e-6)
        prior = ssd.generate_priors([(1, 1)], head)[2]
        expected = ssd.center_to_corner(prior)
        np.testing.assert_allclose(d.box, np.clip(expected, 0, 1), atol=1e-7)
        # ratio 1/2 at scale 0.5: w = 0.5/sqrt(2), h = 0.5*sqrt(2)
        w = 0.5 / math.sqrt(2)
        np.testing.assert_allclose(d.box, [0.5 - w / 2, 0.5 - w, 0.5 + w / 2, 0.5 + w], atol=1e-7)

    def test_person_only_by_default(self):
        head = HeadSpec(scales=(0.5,))
        config, store = tiny_weights(head, logit_prior=0, cls=7)
        x = np.zeros((3, 4, 4), np.float32)
        assert ssd.detect(config, store, head, x) == []
        dets = ssd.detect(config, store, head, x, all_classes=True)
        assert [d.class_id for d in dets] == [7]

    def test_below_threshold(self):
        head = HeadSpec(scales=(0.5,), confidence_threshold=0.99)
        config, store = tiny_weights(head, logit_prior=0, logit=3.0)
        assert ssd.detect(config, store, head, np.zeros((3, 4, 4), np.float32)) == []

    def test_missing_head_weights(self):
        config = build_lcnn_default()
        head = HeadSpec()
        store = WeightStore((k, v) for k, v in random_init(config, head).items()
                            if not k.startswith("head13.conf"))
        with pytest.raises(WeightLoadError, match="tap 13"):
            ssd.Detector(config, store, head)

    def test_deterministic_and_bounded(self):
        config = build_lcnn_default()
        head = HeadSpec(confidence_threshold=0.05, top_k=50)
        store = random_init(config, head, seed=3)
        x = np.random.default_rng(0).uniform(-1, 1, (3, 224, 224)).astype(np.float32)
        det = ssd.Detector(config, store, head)
        first = det.detect(x, all_classes=True)
        assert 0 < len(first) <= 50
        assert det.detect(x, all_classes=True) == first
        scores = [d.score for d in first]
        assert scores == sorted(scores, reverse=True)
        for d in first:
            assert 0 <= d.box[0] < d.box[2] <= 1 and 0 <= d.box[1] < d.box[3] <= 1
            assert d.score >= 0.05

    def test_jsonl_record(self):
        d = Detection(15, 0.5, (0.1, 0.2, 0.3, 0.4), 0)
        assert d.to_json("f1") == ('{"frame": "f1", "class": 15, "score": 0.500000, "xmin": 0.100000, '
                                   '"ymin": 0.200000, "xmax": 0.300000, "ymax": 0.400000}')
