"""Regenerate the bundled test images, annotations and recognition corpus.

Sources are two public-domain photographs shipped with scikit-image and
matplotlib. Everything else is derived from them deterministically, so the
output is reproducible byte for byte. Needs scikit-image, matplotlib and
Pillow, none of which the package itself depends on.

    python3 scripts/make_bundled_data.py
"""
import os

import matplotlib
import numpy as np
from PIL import Image
from skimage import data as skdata

from facekit.imgcore import Rect, resize_bilinear, rotate_about, save_pgm, to_gray

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "facekit", "data")

# hand-drawn face boxes on the source photographs
ASTRO_FACE = Rect(180, 78, 90, 100)
HOPPER_FACE = Rect(165, 135, 200, 200)

# (source, face width in the scene, x, y, brightness gain, offset, mirrored,
#  head tilt in degrees, grain sigma)
GROUP_LAYOUT = [
    ("astro", 120, 30, 40, 1.00, 0, False, 0, 0),
    ("hopper", 104, 250, 60, 0.95, 10, False, 0, 0),
    ("astro", 92, 450, 30, 0.85, 20, True, 10, 12),
    ("hopper", 84, 620, 70, 1.05, -10, True, 0, 0),
    ("hopper", 112, 60, 300, 0.90, 5, True, 0, 0),
    ("astro", 100, 300, 320, 1.10, -15, False, 0, 0),
    ("hopper", 78, 520, 330, 0.80, 25, False, 8, 0),
]
GROUP_SIZE = (768, 576)
CONTEXT = 1.6


def sources():
    astro = to_gray(skdata.astronaut())
    jpg = os.path.join(matplotlib.get_data_path(), "sample_data", "grace_hopper.jpg")
    hopper = to_gray(np.asarray(Image.open(jpg).convert("RGB")))
    return {"astro": (astro, ASTRO_FACE), "hopper": (hopper, HOPPER_FACE)}


def context_patch(img, face, scale):
    """Face plus surrounding context resized by ``scale``; returns patch and face box in it."""
    cx, cy = face.x + face.w / 2, face.y + face.h / 2
    half_w, half_h = CONTEXT * face.w / 2, CONTEXT * face.h / 2
    x0, y0 = max(0, int(cx - half_w)), max(0, int(cy - half_h))
    x1 = min(img.shape[1], int(cx + half_w))
    y1 = min(img.shape[0], int(cy + half_h))
    sub = img[y0:y1, x0:x1]
    w, h = round(sub.shape[1] * scale), round(sub.shape[0] * scale)
    patch = resize_bilinear(sub, w, h)
    box = Rect(round((face.x - x0) * scale), round((face.y - y0) * scale),
               round(face.w * scale), round(face.h * scale))
    return patch, box


def feather(h, w, ramp=14):
    yy = np.minimum(np.arange(h), np.arange(h)[::-1])[:, None]
    xx = np.minimum(np.arange(w), np.arange(w)[::-1])[None, :]
    return np.clip(np.minimum(yy, xx) / ramp, 0.0, 1.0)


def background(w, h, seed=3):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    base = 110 + 30 * np.sin(xx / 140.0) * np.cos(yy / 170.0) + 0.03 * (xx - yy)
    return base + rng.normal(0, 3, size=(h, w))


def group_scene(src):
    w, h = GROUP_SIZE
    canvas = background(w, h)
    rng = np.random.default_rng(11)
    truths = []
    for name, face_w, x, y, gain, offset, mirror, tilt, grain in GROUP_LAYOUT:
        img, face = src[name]
        if tilt:
            img = rotate_about(img, face.x + face.w / 2, face.y + face.h / 2, tilt)
        patch, box = context_patch(img, face, face_w / face.w)
        patch = patch * gain + offset + (rng.normal(0, grain, patch.shape) if grain else 0)
        patch = np.clip(patch, 0, 255)
        if mirror:
            patch = patch[:, ::-1]
            box = Rect(patch.shape[1] - box.x - box.w, box.y, box.w, box.h)
        ph, pw = patch.shape
        a = feather(ph, pw)
        region = canvas[y:y + ph, x:x + pw]
        canvas[y:y + ph, x:x + pw] = a * patch + (1 - a) * region
        truths.append(Rect(x + box.x, y + box.y, box.w, box.h))
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8), truths


def subject_views(img, face):
    """Three training views and one held-out view of a single subject."""
    views = []
    for scale, gain, offset, angle in [(0.9, 1.0, 0, 0.0), (0.75, 0.9, 15, 0.0),
                                       (1.05, 1.1, -10, 0.0), (0.85, 0.95, 8, 4.0)]:
        src = img if not angle else rotate_about(img, face.x + face.w / 2, face.y + face.h / 2, angle)
        patch, _ = context_patch(src, face, scale * 100.0 / face.w)
        views.append(np.clip(np.rint(patch * gain + offset), 0, 255).astype(np.uint8))
    return views[:3], views[3]


def main():
    src = sources()
    img_dir = os.path.join(OUT, "images")
    os.makedirs(img_dir, exist_ok=True)
    save_pgm(src["astro"][0], os.path.join(img_dir, "astronaut.pgm"))
    save_pgm(src["hopper"][0], os.path.join(img_dir, "hopper.pgm"))
    group, truths = group_scene(src)
    save_pgm(group, os.path.join(img_dir, "group.pgm"))
    lines = [f"astronaut.pgm {ASTRO_FACE.x} {ASTRO_FACE.y} {ASTRO_FACE.w} {ASTRO_FACE.h}",
             f"hopper.pgm {HOPPER_FACE.x} {HOPPER_FACE.y} {HOPPER_FACE.w} {HOPPER_FACE.h}"]
    lines += [f"group.pgm {r.x} {r.y} {r.w} {r.h}" for r in truths]
    with open(os.path.join(img_dir, "annotations.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    rec_dir = os.path.join(OUT, "recognition")
    names = []
    for label, key, person in [(1, "astro", "astronaut"), (2, "hopper", "hopper")]:
        train, held = subject_views(*src[key])
        d = os.path.join(rec_dir, "train", f"s{label}")
        os.makedirs(d, exist_ok=True)
        for i, v in enumerate(train, 1):
            save_pgm(v, os.path.join(d, f"{i}.pgm"))
        test_dir = os.path.join(rec_dir, "test")
        os.makedirs(test_dir, exist_ok=True)
        save_pgm(held, os.path.join(test_dir, f"{person}.pgm"))
        names.append(f"{label} {person}")
    with open(os.path.join(rec_dir, "names.txt"), "w") as fh:
        fh.write("\n".join(names) + "\n")


if __name__ == "__main__":
    main()
