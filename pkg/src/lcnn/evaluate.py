"""Detection-quality scoring and the throughput/memory benchmark harness."""

from __future__ import annotations

import bisect
import csv
import io
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .complexity import profile_network
from .errors import FormatError, UsageError
from .graph import NetworkConfig
from .ssd import Detection, Detector, HeadSpec, iou

BENCH_FIELDS = ("frames", "seconds", "fps_avg", "fps_peak", "param_bytes", "peak_activation_bytes")


@dataclass(frozen=True)
class GroundTruth:
    frame_id: str
    boxes: tuple[tuple[int, tuple[float, float, float, float]], ...] = ()


def parse_ground_truth(lines: Iterable[str]) -> dict[str, GroundTruth]:
    """Parse ``frame_id class_id xmin ymin xmax ymax`` lines.

    Blank lines and ``#`` comments are skipped.  A frame listed with no boxes
    can be declared by a line holding only its id.
    """
    boxes: dict[str, list] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        frame = parts[0]
        boxes.setdefault(frame, [])
        if len(parts) == 1:
            continue
        if len(parts) != 6:
            raise FormatError(f"ground truth line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            cls = int(parts[1])
            box = tuple(float(v) for v in parts[2:])
        except ValueError:
            raise FormatError(f"ground truth line {lineno}: non-numeric field") from None
        if not (box[0] < box[2] and box[1] < box[3]):
            raise FormatError(f"ground truth line {lineno}: box is not valid corner form")
        boxes[frame].append((cls, box))
    return {f: GroundTruth(f, tuple(b)) for f, b in boxes.items()}


def load_ground_truth(path) -> dict[str, GroundTruth]:
    with open(path, encoding="utf-8") as fh:
        return parse_ground_truth(fh)


def match_frame(dets: Sequence[Detection], gt: GroundTruth | None, iou_min: float = 0.5) -> list[bool]:
    """Greedy one-to-one matching; returns ``matched`` flags aligned with ``dets``.

    Detections are visited by descending score and each claims the unclaimed
    same-class ground-truth box of highest IoU, if that IoU is ``>= iou_min``.
    """
    gts = list(gt.boxes) if gt is not None else []
    claimed = [False] * len(gts)
    matched = [False] * len(dets)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    for i in order:
        d = dets[i]
        best, best_iou = -1, -1.0
        for g, (cls, box) in enumerate(gts):
            if claimed[g] or cls != d.class_id:
                continue
            v = iou(d.box, box)
            if v >= iou_min and v > best_iou:
                best, best_iou = g, v
        if best >= 0:
            claimed[best] = True
            matched[i] = True
    return matched


def false_positive_rate(dets: Mapping[str, Sequence[Detection]],
                        gts: Mapping[str, GroundTruth], iou_min: float = 0.5) -> float:
    """Percentage of detections that match no ground-truth box (0 if none emitted)."""
    unknown = sorted(set(dets) - set(gts))
    if unknown:
        raise UsageError(f"detections for frames without ground truth: {unknown}")
    total = unmatched = 0
    for frame, frame_dets in dets.items():
        flags = match_frame(frame_dets, gts[frame], iou_min)
        total += len(flags)
        unmatched += flags.count(False)
    return 0.0 if total == 0 else 100.0 * unmatched / total


@dataclass
class BenchReport:
    frames_processed: int
    wall_seconds: float
    fps_avg: float
    fps_peak: float
    per_frame_ms: list[float] = field(default_factory=list)
    param_bytes: int = 0
    peak_activation_bytes: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(BENCH_FIELDS)
        w.writerow([self.frames_processed, f"{self.wall_seconds:.6f}", f"{self.fps_avg:.6f}",
                    f"{self.fps_peak:.6f}", self.param_bytes, self.peak_activation_bytes])
        return buf.getvalue()


class SteppingClock:
    """Fake monotonic clock advancing by ``step`` seconds on every read after the first."""

    def __init__(self, step: float, start: float = 0.0):
        self.step = step
        self.now = start
        self._started = False

    def __call__(self) -> float:
        if self._started:
            self.now += self.step
        self._started = True
        return self.now


def peak_window_fps(starts: Sequence[float], ends: Sequence[float], window: float = 1.0) -> float:
    """Most frames fully inside any ``window``-second span, per second.

    Frames are assumed back-to-back and ordered.
    """
    best = 0
    for i, s in enumerate(starts):
        j = bisect.bisect_right(ends, s + window + 1e-12)
        best = max(best, j - i)
    return best / window


def bench_fps(config: NetworkConfig, weights, head: HeadSpec | None, frames: Sequence,
              duration_s: float = 30.0, clock: Callable[[], float] = time.perf_counter,
              detect_fn: Callable | None = None) -> BenchReport:
    """Run detection back-to-back over ``frames`` (cycled) for ``duration_s`` seconds.

    ``fps_avg`` is frames over elapsed wall time.  ``fps_peak`` is the best
    one-second window, never reported below ``fps_avg`` (a run with frames
    slower than a second has no full window).
    """
    frames = list(frames)
    if not frames:
        raise UsageError("benchmark needs at least one frame")
    if duration_s <= 0:
        raise UsageError("duration must be positive")
    if head is None:
        head = HeadSpec.for_config(config)
    if detect_fn is None:
        detect_fn = Detector(config, weights, head).detect
    param_bytes, act_bytes = memory_report(config, head)

    t0 = clock()
    last = t0
    starts, ends, per_frame = [], [], []
    for x in itertools.cycle(frames):
        detect_fn(x)
        now = clock()
        starts.append(last)
        ends.append(now)
        per_frame.append((now - last) * 1000.0)
        last = now
        if now - t0 >= duration_s:
            break
    wall = last - t0
    n = len(ends)
    fps_avg = n / wall if wall > 0 else float("inf")
    fps_peak = max(fps_avg, peak_window_fps(starts, ends))
    return BenchReport(n, wall, fps_avg, fps_peak, per_frame, param_bytes, act_bytes)


def memory_report(config: NetworkConfig, head: HeadSpec | None = None,
                  include_bias: bool = True) -> tuple[int, int]:
    """``(param_bytes, peak_activation_bytes)`` at 4 bytes per value.

    Activation peak is the largest input+output element count of any single
    layer during a one-frame forward pass.
    """
    prof = profile_network(config, head)
    count = prof.total_params if include_bias else prof.total_weights
    return 4 * count, prof.peak_activation_bytes
