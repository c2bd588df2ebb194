"""Independent oracles and generators shared by the tests."""
import re

import numpy as np

from facekit import data
from facekit.cascade import (CascadeModel, Stage, WeakClassifier, load_cascade, parse_cascade_xml,
                             serialize_cascade_xml, validate)
from facekit.errors import CascadeError


def brute_sum(img, x, y, w, h):
    return int(np.asarray(img, dtype=np.int64)[y:y + h, x:x + w].sum())


def tilted_mask(shape, x, y, w, h):
    """Pixels whose centres fall inside the 45-degree rect with top corner (x - 0.5, y).

    Sides run ``w`` steps down-right and ``h`` steps down-left. Centres never
    sit on an edge, so membership is unambiguous.
    """
    py, px = np.mgrid[0:shape[0], 0:shape[1]]
    rx = px + 0.5 - (x - 0.5)
    ry = py + 0.5 - y
    a = (rx + ry) / 2.0
    b = (ry - rx) / 2.0
    return (a > 0) & (a < w) & (b > 0) & (b < h)


def trim_cascade(model, n_stages):
    """First ``n_stages`` stages with the feature table reduced to what they use."""
    stages = model.stages[:n_stages]
    remap = {}
    for s in stages:
        for wc in s.weak:
            remap.setdefault(wc.feature_index, len(remap))
    new = tuple(Stage(s.threshold, tuple(WeakClassifier(remap[wc.feature_index], wc.left, wc.right,
                                                        wc.threshold, wc.subset) for wc in s.weak))
                for s in stages)
    return CascadeModel(model.feature_type, model.window_w, model.window_h, new,
                        tuple(model.features[i] for i in remap), model.var_norm)


_NUMBER = re.compile(rb"-?\d+(?:\.\d+)?(?:e[-+]?\d+)?")
_TAG = re.compile(rb"</?([A-Za-z_]+)")
_NASTY = [b"-1", b"0", b"1e308", b"-1e308", b"nan", b"inf", b"-inf", b"99999", b"2147483648",
          b"-2147483649", b"4097", b"x", b"", b"1.5", b"3 4", b"-0"]


def mutate(doc, rng):
    """One random structural or lexical mutation of an XML document (bytes)."""
    op = int(rng.integers(0, 8))
    if not doc:
        return bytes([int(rng.integers(256))])
    if op in (0, 7) and not _NUMBER.search(doc) or op == 5 and not _TAG.search(doc):
        op = 4
    if op == 0:    # replace a number
        nums = list(_NUMBER.finditer(doc))
        m = nums[int(rng.integers(len(nums)))]
        new = _NASTY[int(rng.integers(len(_NASTY)))] if rng.random() < 0.5 else \
            str(int(rng.integers(-50, 50))).encode()
        return doc[:m.start()] + new + doc[m.end():]
    if op == 1:    # delete a line
        lines = doc.split(b"\n")
        del lines[int(rng.integers(len(lines)))]
        return b"\n".join(lines)
    if op == 2:    # duplicate a line
        lines = doc.split(b"\n")
        i = int(rng.integers(len(lines)))
        lines.insert(i, lines[i])
        return b"\n".join(lines)
    if op == 3:    # truncate
        return doc[:int(rng.integers(len(doc)))]
    if op == 4:    # flip a byte
        i = int(rng.integers(len(doc)))
        return doc[:i] + bytes([int(rng.integers(256))]) + doc[i + 1:]
    if op == 5:    # rename a tag
        tags = list(_TAG.finditer(doc))
        m = tags[int(rng.integers(len(tags)))]
        return doc[:m.start(1)] + b"bogus" + doc[m.end(1):]
    if op == 6:    # swap two lines
        lines = doc.split(b"\n")
        i, j = rng.integers(len(lines), size=2)
        lines[i], lines[j] = lines[j], lines[i]
        return b"\n".join(lines)
    # insert a number into a numeric list
    nums = list(_NUMBER.finditer(doc))
    m = nums[int(rng.integers(len(nums)))]
    return doc[:m.end()] + b" " + str(int(rng.integers(-5, 30))).encode() + doc[m.end():]


def rayleigh(w, s_b, s_w):
    w = np.asarray(w, dtype=np.float64).ravel()
    return float(w @ s_b @ w) / float(w @ s_w @ w)


def shared_noise_classes(rng, n_per=20, d=12, noise=6.0):
    """Two classes that differ along one fixed axis and share a dominant noise axis.

    PCA's top component follows the heavy noise; the class signal lives
    elsewhere. Returns samples (N, d) and labels.
    """
    signal = np.zeros(d)
    signal[0] = 1.0
    heavy = np.zeros(d)
    heavy[1] = 1.0
    X, y = [], []
    for label, sign in ((1, -1.0), (2, 1.0)):
        for _ in range(n_per):
            X.append(sign * 1.0 * signal + noise * rng.normal() * heavy + 0.3 * rng.normal(size=d))
            y.append(label)
    return np.array(X), np.array(y)


MINIMAL_CASCADE = """<?xml version="1.0"?>
<opencv_storage>
<cascade type_id="opencv-cascade-classifier">
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>4</height>
  <width>4</width>
  <stages>
    <_>
      <maxWeakCount>1</maxWeakCount>
      <stageThreshold>-0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 0.25</internalNodes>
          <leafValues>-1. 1.</leafValues></_></weakClassifiers></_></stages>
  <features>
    <_>
      <rects>
        <_>0 0 4 4 -1.</_>
        <_>0 0 4 2 2.</_></rects></_></features></cascade>
</opencv_storage>
"""


def fuzz_cascades(n, seed):
    """Mutate small serialized cascades ``n`` times; returns (accepted, rejected)."""
    seeds = []
    for name, k in ((data.HAAR_FRONTALFACE, 2), (data.LBP_FRONTALFACE, 2), (data.HAAR_EYE, 1)):
        seeds.append(serialize_cascade_xml(trim_cascade(load_cascade(data.path(name)), k)).encode())
    seeds.append(MINIMAL_CASCADE.encode())
    rng = np.random.default_rng(seed)
    accepted = rejected = 0
    for _ in range(n):
        doc = seeds[int(rng.integers(len(seeds)))]
        for _ in range(int(rng.integers(1, 4))):
            doc = mutate(doc, rng)
        try:
            m = parse_cascade_xml(doc)
        except CascadeError:
            rejected += 1
            continue
        errors = [i for i in validate(m) if i.is_error]
        assert not errors, (doc[:200], errors)
        accepted += 1
    return accepted, rejected
