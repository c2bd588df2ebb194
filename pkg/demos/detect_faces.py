"""HAAR vs LBP cascades on the bundled photos.

Runs both stock frontal-face cascades over every annotated image and
reports hits and timings. Copies of the images with the detections drawn
in white go to the output directory.

    python3 demos/detect_faces.py [out_dir]
"""
import os
import statistics
import sys

from facekit import data
from facekit.bench import time_detection
from facekit.cascade import load_cascade
from facekit.dataset import load_annotations, match_detections
from facekit.detector import DetectParams
from facekit.imgcore import draw_rectangle, load_pgm, save_pgm

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out_dir, exist_ok=True)

cascades = {
    "HAAR": load_cascade(data.path(data.HAAR_FRONTALFACE)),
    "LBP": load_cascade(data.path(data.LBP_FRONTALFACE)),
}
for name, m in cascades.items():
    print(f"{name}: {len(m.stages)} stages, {m.n_weak} weak classifiers, "
          f"{m.window_w}x{m.window_h} window")

# the settings most face-detection tutorials use
params = DetectParams(scale_factor=1.3, min_neighbors=5)

print()
print(f"{'image':<15}{'cascade':<8}{'faces':>6}{'tp/fp/fn':>10}{'median s':>10}")
for ann in load_annotations(data.path("images/annotations.txt")):
    img = load_pgm(ann.path)
    base = os.path.splitext(os.path.basename(ann.path))[0]
    for name, model in cascades.items():
        samples, dets = time_detection(model, img, params, runs=3)
        m = match_detections(dets, ann.rects)
        med = statistics.median(s.dt1 for s in samples)
        print(f"{base:<15}{name:<8}{len(dets):>6}{f'{m.tp}/{m.fp}/{m.fn}':>10}{med:>10.3f}")

        drawn = img
        for d in dets:
            drawn = draw_rectangle(drawn, d.rect, 255)
        save_pgm(drawn, os.path.join(out_dir, f"{base}_{name.lower()}.pgm"))

# LBP compares cell sums instead of weighting them, which is why it tends to
# win on time; the group photo shows where HAAR still finds more faces.
print(f"\nannotated images written to {out_dir}/")
