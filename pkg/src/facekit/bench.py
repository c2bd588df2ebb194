"""Detection timing and accuracy reports."""
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

from .dataset import match_detections
from .detector import detect_multi_scale
from .imgcore import Rect


class TimingSample(NamedTuple):
    t1: float
    t2: float

    @property
    def dt1(self):
        return self.t2 - self.t1


def time_detection(model, img, params=None, runs=1, clock=time.perf_counter, jobs=1):
    """Time ``runs`` calls of :func:`detect_multi_scale`.

    Only the detection call sits between the two clock readings; cascade
    and image loading happen before. Every run must produce the same
    detections.

    Returns
    -------
    samples : list of TimingSample
    detections : list of Detection from the last run
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    samples, first, dets = [], None, None
    for _ in range(runs):
        t1 = clock()
        dets = detect_multi_scale(model, img, params, jobs=jobs)
        t2 = clock()
        samples.append(TimingSample(t1, t2))
        if first is None:
            first = dets
        elif dets != first:
            raise RuntimeError("detections differ between runs")
    return samples, dets


@dataclass
class DetectionReport:
    label: str
    image: str
    faces_found: int
    median_seconds: float
    runs: list = field(default_factory=list)
    detections: list = field(default_factory=list)   # Rects
    accuracy: dict = None                             # {"tp", "fp", "fn"} when scored

    def to_dict(self):
        d = asdict(self)
        d["detections"] = [{"x": r[0], "y": r[1], "w": r[2], "h": r[3]} for r in self.detections]
        if d["accuracy"] is None:
            del d["accuracy"]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["label"], d["image"], d["faces_found"], d["median_seconds"], list(d["runs"]),
                   [Rect(r["x"], r["y"], r["w"], r["h"]) for r in d["detections"]],
                   d.get("accuracy"))


def make_report(label, image, samples, detections, truths=None, iou_min=0.5):
    rects = [Rect(*d.rect) for d in detections]
    acc = None
    if truths is not None:
        m = match_detections(rects, truths, iou_min)
        acc = {"tp": m.tp, "fp": m.fp, "fn": m.fn}
    runs = [s.dt1 for s in samples]
    return DetectionReport(label, image, len(rects), statistics.median(runs), runs, rects, acc)


def dumps_reports(reports):
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"


def loads_reports(text):
    return [DetectionReport.from_dict(d) for d in json.loads(text)]


def summary_table(reports):
    """Plain-text table: label, image, faces, median seconds and accuracy."""
    rows = [("classifier", "image", "faces", "median_s", "tp/fp/fn")]
    for r in reports:
        acc = "-" if r.accuracy is None else "{tp}/{fp}/{fn}".format(**r.accuracy)
        rows.append((r.label, r.image, str(r.faces_found), f"{r.median_seconds:.6f}", acc))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows) + "\n"
