"""Boost a small cascade from synthetic faces and run it on a scene.

The toy "faces" are 19x19 windows with two dark eye blocks and a mouth bar.
AdaBoost picks stumps over every upright rectangle feature in the window.
The second stage's negatives are bootstrapped from scenes full of
look-alike distractors.

    python3 demos/train_cascade.py [out_dir]
"""
import os
import sys
import time

import numpy as np

from facekit.cascade import serialize_cascade_xml
from facekit.dataset import match_detections
from facekit.detector import DetectParams, detect_multi_scale
from facekit.imgcore import draw_rectangle, save_pgm
from facekit.trainer import (TrainConfig, enumerate_specs, make_negative_scenes,
                             make_synthetic_corpus, make_synthetic_scene, train_cascade)

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out_dir, exist_ok=True)

pos, neg = make_synthetic_corpus(42, 300, 600, pattern="face")
pool = make_negative_scenes(7, 40, pattern="face")
print(f"{len(pos)} positives, {len(neg)} negatives, {len(pool)} bootstrap scenes")
print(f"{len(enumerate_specs(19, 19))} candidate features in a 19x19 window")

# a mean face is a quick sanity check that the pattern is what we think
mean_face = pos.mean(axis=0)
print("mean positive, rows 6-9 vs the rest:",
      round(mean_face[6:10].mean(), 1), round(np.delete(mean_face, range(6, 10), axis=0).mean(), 1))

log = []
t0 = time.perf_counter()
model = train_cascade(pos, neg, TrainConfig(max_stages=2, seed=1), neg_pool=pool, log=log)
print(f"\ntrained in {time.perf_counter() - t0:.1f}s")
for entry in log:
    print("  stage {stage}: {weak} weak, detection {detection_rate:.3f}, "
          "false positives {false_positive_rate:.3f} on {negatives} negatives".format(**entry))

xml_path = os.path.join(out_dir, "synthetic_cascade.xml")
with open(xml_path, "w") as fh:
    fh.write(serialize_cascade_xml(model))

# the trained cascade is an ordinary cascade file, so the detector runs it as-is
img, truths = make_synthetic_scene(100, 12, pattern="face")
dets = detect_multi_scale(model, img, DetectParams(scale_factor=1.1, min_neighbors=1))
m = match_detections(dets, truths)
print(f"\nscene: {len(truths)} planted, {len(dets)} found, tp={m.tp} fp={m.fp} fn={m.fn}")

for d in dets:
    img = draw_rectangle(img, d.rect, 0)
save_pgm(img, os.path.join(out_dir, "synthetic_scene.pgm"))
print(f"cascade and scene written to {out_dir}/")
