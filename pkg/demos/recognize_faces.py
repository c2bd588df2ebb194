"""Eigenfaces, Fisherfaces and LBPH on the bundled two-person corpus.

Faces are cut out of the training photos with the HAAR cascade, each
recognizer is trained on them, and the held-out photos are identified.

    python3 demos/recognize_faces.py
"""
import os

import numpy as np

from facekit import data
from facekit.cascade import load_cascade
from facekit.dataset import crop, largest_face, prepare_training_data
from facekit.detector import detect_multi_scale
from facekit.imgcore import load_pgm, resize_bilinear
from facekit.recognizers import (eigen_train, fisher_train, lbph_train, predict,
                                 reconstruct)

detector = load_cascade(data.path(data.HAAR_FRONTALFACE))
names = {1: "astronaut", 2: "hopper"}

# Eigen/Fisher need one common size; LBPH takes the crops as they come
faces, labels = prepare_training_data(data.path("recognition/train"), detector, target_size=(64, 64))
raw_faces, _ = prepare_training_data(data.path("recognition/train"), detector)
print(f"Total faces: {len(faces)}")
print(f"Total labels: {len(labels)}")
print("crop sizes:", sorted({f.shape for f in raw_faces}))

samples = list(zip(faces, labels))
models = {
    "eigen": eigen_train(samples),
    "fisher": fisher_train(samples),
    "lbph": lbph_train(list(zip(raw_faces, labels))),
}
print(f"eigen keeps {models['eigen'].k} components, fisher {models['fisher'].k}")

# how much of a training face survives the round trip through face space
eig = models["eigen"]
x = faces[0].reshape(-1).astype(float)
rec = reconstruct(eig, (x - eig.mean) @ eig.basis.T)
print(f"reconstruction error of a training face: {np.linalg.norm(rec - x) / np.linalg.norm(x):.2e}")

print()
test_dir = data.path("recognition/test")
for fname in sorted(os.listdir(test_dir)):
    img = load_pgm(os.path.join(test_dir, fname))
    r = largest_face(detect_multi_scale(detector, img))
    face = crop(img, r)
    for kind, model in models.items():
        probe = face if kind == "lbph" else resize_bilinear(face, 64, 64)
        p = predict(model, probe)
        print(f"{fname:<15}{kind:<8}-> {names.get(p.label, 'unknown'):<10} distance {p.distance:.4g}")

# LBPH histograms only see which neighbour is brighter, so dimming keeps the
# answer; the distance moves a little because rounding creates ties
lbph = models["lbph"]
img = load_pgm(os.path.join(test_dir, "hopper.pgm"))
face = crop(img, largest_face(detect_multi_scale(detector, img)))
darker = (face * 0.6).astype(np.uint8)
print("\nLBPH under 40% dimming:", predict(lbph, face), "vs", predict(lbph, darker))
