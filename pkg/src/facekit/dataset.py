"""Training folders, face extraction, alignment and annotation scoring.

Training data lives in one folder per person, named ``s<id>``::

    training-data/
        s1/ img1.pgm img2.pgm ...
        s2/ ...

The folder name supplies the integer label of every image inside it.
"""
import math
import os
import re
import warnings
from typing import NamedTuple

import numpy as np

from .detector import DetectParams, detect_multi_scale
from .errors import AnnotationParseError, MissingRoot, NoFacesAnywhere
from .imgcore import (IMAGE_EXTENSIONS, Rect, as_gray, load_image, normalize_brightness,
                      resize_bilinear, rotate_about)

_SUBJECT = re.compile(r"s(\d+)")

BRIGHTNESS_GATE = (40.0, 220.0)
EYE_REGION = 0.6  # eyes are searched in this upper fraction of the face
ALIGN_MEAN = 128


class SubjectDir(NamedTuple):
    label: int
    path: str
    images: tuple


def list_images(folder):
    """Image files directly inside ``folder``, lexicographically sorted."""
    return tuple(os.path.join(folder, f) for f in sorted(os.listdir(folder))
                 if f.lower().endswith(IMAGE_EXTENSIONS)
                 and os.path.isfile(os.path.join(folder, f)))


def scan_training_dirs(root):
    """Subject folders ``s<int>`` under ``root`` in sorted name order.

    Other entries are skipped with a warning. Labels must be >= 1.
    """
    if not os.path.isdir(root):
        raise MissingRoot(f"training root not found: {root}")
    out = []
    for name in sorted(os.listdir(root)):
        full = os.path.join(root, name)
        if not os.path.isdir(full):
            continue
        m = _SUBJECT.fullmatch(name)
        if not m or int(m.group(1)) < 1:
            warnings.warn(f"skipping folder {name!r}: not of the form s<id> with id >= 1", stacklevel=2)
            continue
        out.append(SubjectDir(int(m.group(1)), full, list_images(full)))
    return out


def largest_face(detections):
    """Largest rect by area; ties go to the topmost, then leftmost."""
    rects = [d.rect if hasattr(d, "rect") else Rect(*d) for d in detections]
    if not rects:
        return None
    return min(rects, key=lambda r: (-r.w * r.h, r.y, r.x))


def crop(img, r):
    return img[r.y:r.y + r.h, r.x:r.x + r.w]


def prepare_training_data(root, model, target_size=None, params=None, rejected=None, jobs=1):
    """Detect, crop and optionally resize one face per training image.

    Parameters
    ----------
    root : str
        Folder of ``s<id>`` subject folders.
    model : CascadeModel
        Face detector.
    target_size : (w, h) or None
        Resize every crop to this size (needed by Eigenfaces/Fisherfaces).
    params : DetectParams, optional
    rejected : list, optional
        Receives ``(path, reason)`` for every skipped image.

    Returns
    -------
    faces : list of uint8 arrays
    labels : list of int
    """
    params = params or DetectParams()
    faces, labels = [], []
    subjects = scan_training_dirs(root)
    for subj in subjects:
        for path in subj.images:
            img = as_gray(load_image(path))
            r = None
            if img.shape[0] >= model.window_h and img.shape[1] >= model.window_w:
                r = largest_face(detect_multi_scale(model, img, params, jobs=jobs))
            if r is None:
                warnings.warn(f"no face found in {path}; skipped", stacklevel=2)
                if rejected is not None:
                    rejected.append((path, "NoFace"))
                continue
            face = crop(img, r)
            if target_size is not None:
                face = resize_bilinear(face, *target_size)
            faces.append(face)
            labels.append(subj.label)
    if not faces:
        raise NoFacesAnywhere(f"no faces detected in any image under {root}")
    return faces, labels


def write_rejections(path, rejected):
    with open(path, "w") as fh:
        for p, reason in rejected:
            fh.write(f"{p} {reason}\n")


# -- quality gate and alignment ------------------------------------------------

class Alignment(NamedTuple):
    face: np.ndarray      # aligned, brightness-normalised crop; None when rejected
    reason: str           # "" when accepted
    tilt: float           # degrees, positive when the right eye sits lower
    eyes: tuple           # eye rects in image coordinates


def _centre(r):
    return (r.x + r.w / 2.0, r.y + r.h / 2.0)


def find_eyes(img, face, eye_model, params=None):
    """Eye rects (image coordinates) inside the upper part of ``face``."""
    params = params or DetectParams(scale_factor=1.1, min_neighbors=3)
    band = Rect(face.x, face.y, face.w, max(1, int(EYE_REGION * face.h)))
    roi = crop(img, band)
    if roi.shape[0] < eye_model.window_h or roi.shape[1] < eye_model.window_w:
        return []
    return [Rect(d.rect.x + band.x, d.rect.y + band.y, d.rect.w, d.rect.h)
            for d in detect_multi_scale(eye_model, roi, params)]


def qa_and_align(img, face, eye_model, params=None, gate=BRIGHTNESS_GATE):
    """Brightness gate, eye-based tilt correction and re-crop of one face.

    The face is rejected as ``TooDark``/``TooBright`` when its mean lies
    outside ``gate``, and as ``EyesNotFound``/``TooManyEyes`` unless exactly
    two eyes with distinct centres are found. Accepted faces are rotated
    about the eye midpoint so the eyes are level, re-cropped and shifted to
    mean brightness 128.
    """
    img = as_gray(img)
    face = Rect(*face)
    mean = float(crop(img, face).mean())
    if mean < gate[0]:
        return Alignment(None, "TooDark", 0.0, ())
    if mean > gate[1]:
        return Alignment(None, "TooBright", 0.0, ())
    eyes = find_eyes(img, face, eye_model, params)
    centres = {_centre(e) for e in eyes}
    if len(eyes) < 2 or len(centres) < 2:
        return Alignment(None, "EyesNotFound", 0.0, tuple(eyes))
    if len(eyes) > 2:
        return Alignment(None, "TooManyEyes", 0.0, tuple(eyes))
    (lx, ly), (rx, ry) = sorted(centres)
    tilt = math.degrees(math.atan2(ry - ly, rx - lx))
    rotated = rotate_about(img, (lx + rx) / 2.0, (ly + ry) / 2.0, tilt) if tilt else img
    return Alignment(normalize_brightness(crop(rotated, face), ALIGN_MEAN), "", tilt, tuple(eyes))


# -- annotations and scoring ------------------------------------------------------

class Annotation(NamedTuple):
    path: str
    rects: tuple


class MatchResult(NamedTuple):
    tp: int
    fp: int
    fn: int
    pairs: tuple  # (detection index, truth index, iou) for every true positive

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0


def parse_annotations(text):
    """Records ``<image-path> <x> <y> <w> <h>``; repeated paths collect rects."""
    order, rects = [], {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tok = s.split()
        if len(tok) != 5:
            raise AnnotationParseError(n)
        try:
            x, y, w, h = (int(t) for t in tok[1:])
        except ValueError:
            raise AnnotationParseError(n, "coordinates must be integers") from None
        if x < 0 or y < 0 or w < 1 or h < 1:
            raise AnnotationParseError(n, "need x, y >= 0 and w, h >= 1")
        if tok[0] not in rects:
            order.append(tok[0])
            rects[tok[0]] = []
        rects[tok[0]].append(Rect(x, y, w, h))
    return [Annotation(p, tuple(rects[p])) for p in order]


def load_annotations(path):
    """Annotations from ``path``; relative image paths resolve against its folder."""
    with open(path) as fh:
        anns = parse_annotations(fh.read())
    base = os.path.dirname(os.path.abspath(path))
    return [Annotation(a.path if os.path.isabs(a.path) else os.path.join(base, a.path), a.rects)
            for a in anns]


def iou(a, b):
    a, b = Rect(*a), Rect(*b)
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def match_detections(dets, truths, iou_min=0.5):
    """Greedy one-to-one matching by descending IoU.

    Pairs below ``iou_min`` never match. Equal IoUs resolve by detection
    index, then truth index.
    """
    dets = [d.rect if hasattr(d, "rect") else Rect(*d) for d in dets]
    truths = [Rect(*t) for t in truths]
    cand = sorted(((iou(d, t), i, j) for i, d in enumerate(dets) for j, t in enumerate(truths)),
                  key=lambda c: (-c[0], c[1], c[2]))
    used_d, used_t, pairs = set(), set(), []
    for v, i, j in cand:
        if v < iou_min or v == 0.0:
            break
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        pairs.append((i, j, v))
    tp = len(pairs)
    return MatchResult(tp, len(dets) - tp, len(truths) - tp, tuple(pairs))
