"""Command-line entry point: ``lcnn {detect,bench,analyze,init}``.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import complexity, evaluate, media, ssd, weights
from .errors import LCNNError, UsageError
from .graph import NetworkConfig, build_lcnn_default, validate_config

FRAME_SUFFIXES = (".ppm", ".pgm")
DEFAULT_SEED = 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def load_config(args) -> NetworkConfig:
    config = NetworkConfig.load(args.config) if args.config else build_lcnn_default()
    if getattr(args, "taps", None):
        config = dataclasses.replace(config, tap_indices=args.taps)
    validate_config(config)
    return config


def build_head(args, config: NetworkConfig) -> ssd.HeadSpec:
    overrides = {}
    for flag, field in (("threshold", "confidence_threshold"), ("nms_iou", "nms_iou_threshold"),
                        ("top_k", "top_k"), ("scales", "scales")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    head = ssd.HeadSpec.for_config(config, **overrides)
    head.check(config)
    return head


def list_frames(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"frames directory {d} does not exist")
    frames = sorted(p for p in d.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not frames:
        raise UsageError(f"no .ppm/.pgm frames found in {d}")
    return frames


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def run_detect(args) -> int:
    config = load_config(args)
    head = build_head(args, config)
    store = weights.load_weights(args.weights)
    detector = ssd.Detector(config, store, head)
    frames = list_frames(args.frames)
    results = {}
    out, close = _open_out(args.out)
    try:
        for path in frames:
            x = media.preprocess(media.load_image(path), config.input_size)
            dets = detector.detect(x, all_classes=args.all_classes)
            results[path.stem] = dets
            ssd.write_jsonl([(path.stem, dets)], out)
    finally:
        if close:
            out.close()
    if args.ground_truth:
        gts = evaluate.load_ground_truth(args.ground_truth)
        fpr = evaluate.false_positive_rate(results, gts, args.iou_min)
        print(f"fpr_percent,{fpr:.3f}", file=sys.stderr)
    return 0


def run_bench(args) -> int:
    config = load_config(args)
    head = build_head(args, config)
    store = weights.load_weights(args.weights)
    frames = [media.preprocess(media.load_image(p), config.input_size)
              for p in list_frames(args.frames)]
    kwargs = {}
    if args.fake_clock is not None:
        kwargs["clock"] = evaluate.SteppingClock(args.fake_clock)
    report = evaluate.bench_fps(config, store, head, frames, args.duration, **kwargs)
    out, close = _open_out(args.out)
    try:
        out.write(report.to_csv())
    finally:
        if close:
            out.close()
    return 0


def run_analyze(args) -> int:
    config = load_config(args)
    head = build_head(args, config) if args.with_heads else None
    prof = complexity.profile_network(config, head)
    out, close = _open_out(args.out)
    try:
        out.write(prof.to_csv())
        out.write(f"total,,,,,,{prof.total_macs},{prof.total_weights}\n")
        out.write(f"bias,,,,,,,{prof.total_bias}\n")
        out.write(f"param_bytes,,,,,,,{prof.param_bytes}\n")
        out.write(f"peak_activation_bytes,,,,,,,{prof.peak_activation_bytes}\n")
        out.write("\npair,Dk,M,N,Df,separable_macs,conventional_macs,ratio,inv_N_plus_inv_Dk2\n")
        for pair in prof.separable_pairs():
            dw, pw = pair.depthwise, pair.pointwise
            expected = complexity.reduction_ratio(dw.Dk, pw.N)
            out.write(f"{dw.layer_label}-{pw.layer_label},{dw.Dk},{dw.M},{pw.N},{pw.Df},"
                      f"{pair.separable_macs},{pair.conventional.macs},{pair.ratio},{expected}\n")
    finally:
        if close:
            out.close()
    return 0


def run_init(args) -> int:
    config = load_config(args)
    head = build_head(args, config)
    store = weights.random_init(config, head, args.seed)
    weights.save_weights(store, args.out)
    print(f"wrote {len(store)} arrays ({store.num_values()} values) to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lcnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def network_flags(p):
        p.add_argument("--config", help="network config JSON (default: built-in L-CNN schedule)")
        p.add_argument("--taps", type=_int_list, help="comma-separated tap layer indices")
        p.add_argument("--scales", type=_float_list, help="comma-separated prior scale per tap")
        p.add_argument("--threshold", type=float, help="confidence threshold (default 0.5)")
        p.add_argument("--nms-iou", type=float, help="NMS IoU threshold (default 0.45)")
        p.add_argument("--top-k", type=int, help="max detections per frame (default 100)")

    p = sub.add_parser("detect", help="run detection over a directory of frames")
    network_flags(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--frames", required=True, help="directory of .ppm/.pgm frames")
    p.add_argument("--out", help="JSON-lines output (default stdout)")
    p.add_argument("--all-classes", action="store_true", help="emit every class, not only person")
    p.add_argument("--ground-truth", help="ground-truth file; prints the false-positive rate")
    p.add_argument("--iou-min", type=float, default=0.5)
    p.set_defaults(func=run_detect)

    p = sub.add_parser("bench", help="measure frames per second")
    network_flags(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--duration", type=float, default=30.0, help="seconds (default 30)")
    p.add_argument("--fake-clock", type=float, metavar="STEP",
                   help="test mode: simulated clock advancing STEP seconds per frame")
    p.add_argument("--out", help="CSV output (default stdout)")
    p.set_defaults(func=run_bench)

    p = sub.add_parser("analyze", help="per-layer MAC and parameter profile")
    network_flags(p)
    p.add_argument("--with-heads", action="store_true", help="include the detection heads")
    p.add_argument("--out", help="CSV output (default stdout)")
    p.set_defaults(func=run_analyze)

    p = sub.add_parser("init", help="write seeded random weights")
    network_flags(p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=run_init)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (LCNNError, OSError) as exc:
        print(f"lcnn: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"lcnn: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
