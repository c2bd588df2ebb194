"""Small-scale boosted cascade training on upright HAAR features.

The pipeline is the classic one: enumerate every upright feature in the
training window, pick decision stumps with discrete AdaBoost, close each
stage with a threshold that keeps the detection-rate target, then bootstrap
the next stage's negatives from windows the cascade still accepts.

Feature values follow the detector's convention for trainer-made cascades:
raw weighted sum times the normalisation-window ``inv_area``, without
variance normalisation.
"""
import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .cascade import CascadeModel, HaarFeature, Stage, WeakClassifier, WeightedRect
from .detector import STAGE_EPS, norm_rect, scan_windows
from .errors import (DegenerateLabels, EmptyNegatives, EmptyPositives, NegativePoolExhausted,
                     TargetsUnreachable)
from .imgcore import Rect, as_gray

PROTOTYPES = ("x2", "y2", "x3", "y3", "x2y2")
ALPHA_EPS = 1e-10
_CHUNK = 4096


@dataclass(frozen=True)
class TrainConfig:
    train_w: int = 19
    train_h: int = 19
    stage_d_min: float = 0.995
    stage_f_max: float = 0.5
    max_stages: int = 10
    max_weak_per_stage: int = 50
    seed: int = 0
    n_neg: int = None  # negatives per bootstrapped stage; None keeps the initial count

    def __post_init__(self):
        if not 0.0 < self.stage_f_max < 1.0:
            raise ValueError("stage_f_max must lie in (0, 1)")
        if not 0.0 < self.stage_d_min <= 1.0:
            raise ValueError("stage_d_min must lie in (0, 1]")
        if self.train_w < 4 or self.train_h < 4:
            raise ValueError("training window must be at least 4x4")
        if self.max_stages < 1 or self.max_weak_per_stage < 1:
            raise ValueError("max_stages and max_weak_per_stage must be >= 1")


# -- features -------------------------------------------------------------------

class FeatureSpec(NamedTuple):
    """Upright prototype ``kind`` with unit cell ``dx`` x ``dy`` at (x, y)."""
    kind: int
    x: int
    y: int
    dx: int
    dy: int

    @property
    def extent(self):
        return _EXTENT[self.kind](self.dx, self.dy)


_EXTENT = (
    lambda dx, dy: (2 * dx, dy),
    lambda dx, dy: (dx, 2 * dy),
    lambda dx, dy: (3 * dx, dy),
    lambda dx, dy: (dx, 3 * dy),
    lambda dx, dy: (2 * dx, 2 * dy),
)


def _rects(kind, dx, dy):
    """(x, y, w, h, weight) rectangles relative to the feature origin.

    The whole feature area enters with weight -1 and the "white" part with a
    positive weight chosen so that the weighted areas cancel.
    """
    fw, fh = _EXTENT[kind](dx, dy)
    whole = (0, 0, fw, fh, -1.0)
    if kind == 0:
        return (whole, (dx, 0, dx, dy, 2.0))
    if kind == 1:
        return (whole, (0, dy, dx, dy, 2.0))
    if kind == 2:
        return (whole, (dx, 0, dx, dy, 3.0))
    if kind == 3:
        return (whole, (0, dy, dx, dy, 3.0))
    return (whole, (0, 0, dx, dy, 2.0), (dx, dy, dx, dy, 2.0))


def to_haar_feature(spec):
    return HaarFeature(tuple(WeightedRect(spec.x + rx, spec.y + ry, rw, rh, wt)
                             for rx, ry, rw, rh, wt in _rects(spec.kind, spec.dx, spec.dy)))


def enumerate_specs(w, h):
    """Every upright feature fitting a ``w`` x ``h`` window.

    Ordered by prototype, then y, then x, then cell width, then cell height.
    """
    if w < 4 or h < 4:
        raise ValueError("window must be at least 4x4")
    out = []
    for kind in range(len(PROTOTYPES)):
        for y in range(h):
            for x in range(w):
                for dx in range(1, w + 1):
                    for dy in range(1, h + 1):
                        fw, fh = _EXTENT[kind](dx, dy)
                        if fh > h - y:
                            break
                        if fw > w - x:
                            continue
                        out.append(FeatureSpec(kind, x, y, dx, dy))
    return out


def enumerate_features(w, h):
    """All upright two-, three- and four-rectangle features as HaarFeatures."""
    return [to_haar_feature(s) for s in enumerate_specs(w, h)]


def _window_integrals(windows):
    W = np.asarray(windows, dtype=np.int64)
    ii = np.zeros((W.shape[0], W.shape[1] + 1, W.shape[2] + 1), dtype=np.int64)
    ii[:, 1:, 1:] = W.cumsum(axis=1).cumsum(axis=2)
    return ii


def feature_values(windows, specs, w, h):
    """Raw weighted sums, shape (n_features, n_windows), int32.

    Features sharing a prototype and cell size are evaluated for all their
    positions at once from slices of the stacked integral images.
    """
    windows = np.asarray(windows)
    if windows.ndim != 3 or windows.shape[1:] != (h, w):
        raise ValueError(f"windows must have shape (n, {h}, {w}), got {windows.shape}")
    ii = _window_integrals(windows)
    n = len(windows)
    out = np.zeros((len(specs), n), dtype=np.int32)
    groups = {}
    for i, s in enumerate(specs):
        groups.setdefault((s.kind, s.dx, s.dy), []).append(i)
    for (kind, dx, dy), idx in groups.items():
        fw, fh = _EXTENT[kind](dx, dy)
        ny, nx = h - fh + 1, w - fw + 1
        vals = np.zeros((n, ny, nx), dtype=np.int64)
        for rx, ry, rw, rh, wt in _rects(kind, dx, dy):
            box = (ii[:, ry + rh:ry + rh + ny, rx + rw:rx + rw + nx]
                   - ii[:, ry:ry + ny, rx + rw:rx + rw + nx]
                   - ii[:, ry + rh:ry + rh + ny, rx:rx + nx]
                   + ii[:, ry:ry + ny, rx:rx + nx])
            vals += int(wt) * box
        idx = np.asarray(idx)
        pos = vals.reshape(n, -1)
        # group members are listed in (y, x) order, matching the reshape
        ys = np.array([specs[i].y for i in idx])
        xs = np.array([specs[i].x for i in idx])
        out[idx] = pos[:, ys * nx + xs].T
    return out


def value_scale(w, h):
    """Multiplier from raw sums to the feature values the detector computes."""
    nr = norm_rect(w, h)
    return 1.0 / (nr.w * nr.h)


# -- stumps and boosting -----------------------------------------------------------

class Stump(NamedTuple):
    """Predict face iff ``polarity * (value - threshold) < 0``."""
    threshold: float
    polarity: int
    error: float


class BoostRound(NamedTuple):
    feature_index: int
    stump: Stump
    alpha: float


def _sorted_tables(values):
    """Per-feature sort order and a mask of positions where a threshold may sit."""
    n = values.shape[1]
    itype = np.int16 if n < 2 ** 15 else np.int32
    order = np.empty(values.shape, dtype=itype)
    open_at = np.empty(values.shape, dtype=bool)
    for a in range(0, len(values), _CHUNK):
        v = values[a:a + _CHUNK]
        o = np.argsort(v, axis=1, kind="stable")
        sv = np.take_along_axis(v, o, axis=1)
        order[a:a + _CHUNK] = o
        open_at[a:a + _CHUNK, 0] = True
        open_at[a:a + _CHUNK, 1:] = sv[:, 1:] > sv[:, :-1]
    return order, open_at


def _best_stumps(order, open_at, is_pos, weights):
    """Best (error, k, polarity) per feature for the given sample weights.

    ``k`` is the number of samples below the threshold in sorted order.
    Errors are compared exactly; ties go to the smallest ``k`` and then to
    polarity +1.
    """
    wp = np.where(is_pos, weights, 0.0)
    wn = np.where(is_pos, 0.0, weights)
    tp, tn = wp.sum(), wn.sum()
    best_err = np.empty(len(order))
    best_flat = np.empty(len(order), dtype=np.intp)
    for a in range(0, len(order), _CHUNK):
        o = order[a:a + _CHUNK]
        cp = np.cumsum(wp[o], axis=1) - wp[o]
        cn = np.cumsum(wn[o], axis=1) - wn[o]
        err = np.empty(o.shape + (2,))
        err[..., 0] = cn + (tp - cp)   # polarity +1: below threshold means face
        err[..., 1] = cp + (tn - cn)   # polarity -1: at or above threshold means face
        err[~open_at[a:a + _CHUNK]] = np.inf
        flat = err.reshape(len(o), -1)
        j = np.argmin(flat, axis=1)
        best_flat[a:a + _CHUNK] = j
        best_err[a:a + _CHUNK] = flat[np.arange(len(o)), j]
    return best_err, best_flat // 2, best_flat % 2


def _threshold_at(raw_sorted_row, k):
    if k == 0:
        return float(raw_sorted_row[0]) - 1.0
    return 0.5 * (float(raw_sorted_row[k - 1]) + float(raw_sorted_row[k]))


def _labels(labels):
    y = np.asarray(labels)
    if y.ndim != 1 or len(y) < 2:
        raise DegenerateLabels("need at least 2 samples")
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be +1 or -1")
    if np.all(y == 1) or np.all(y == -1):
        raise DegenerateLabels("both labels must be present")
    return y == 1


def train_stump(feature_values, labels, weights):
    """Optimal single-feature decision stump.

    Parameters
    ----------
    feature_values : (n,) array
    labels : (n,) array of +1 / -1
    weights : (n,) array of positive weights

    Returns
    -------
    Stump
        Threshold halfway between neighbouring distinct values (or one below
        the minimum), polarity, and weighted error. Ties go to the smallest
        threshold.
    """
    v = np.asarray(feature_values, dtype=np.float64).reshape(1, -1)
    is_pos = _labels(labels)
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != v.shape[1] or len(is_pos) != v.shape[1]:
        raise ValueError("values, labels and weights must have equal length")
    order, open_at = _sorted_tables(v)
    err, k, pol = _best_stumps(order, open_at, is_pos, w / w.sum())
    sv = v[0, order[0]]
    return Stump(_threshold_at(sv, int(k[0])), 1 if pol[0] == 0 else -1, float(err[0]))


def stump_predict(stump, values):
    """Boolean face decisions of ``stump`` on feature ``values``."""
    values = np.asarray(values, dtype=np.float64)
    return values < stump.threshold if stump.polarity == 1 else values >= stump.threshold


def initial_weights(is_pos):
    """Half the mass on each class, spread evenly within the class."""
    is_pos = np.asarray(is_pos, dtype=bool)
    n_pos = is_pos.sum()
    return np.where(is_pos, 0.5 / n_pos, 0.5 / (len(is_pos) - n_pos))


def _boost_round(values, is_pos, w, tables):
    """One AdaBoost round: best stump, its vote, and the reweighted samples."""
    order, open_at = tables
    err, k, pol = _best_stumps(order, open_at, is_pos, w)
    f = int(np.argmin(err))
    row = values[f].astype(np.float64)
    stump = Stump(_threshold_at(row[order[f]], int(k[f])), 1 if pol[f] == 0 else -1, float(err[f]))
    eps = min(max(stump.error, ALPHA_EPS), 1.0 - ALPHA_EPS)
    beta = eps / (1.0 - eps)
    w = np.where(stump_predict(stump, row) == is_pos, w * beta, w)
    return BoostRound(f, stump, math.log(1.0 / beta)), w / w.sum()


def adaboost_select(values, labels, rounds, weights=None, trace=None, tables=None):
    """Discrete AdaBoost over precomputed feature values.

    Parameters
    ----------
    values : (n_features, n_samples) array
        One row per candidate feature.
    labels : (n_samples,) array of +1 / -1
    rounds : int
    weights : optional initial weights (default: half the mass per class)
    trace : optional list receiving the normalised weights after each round

    Returns
    -------
    list of BoostRound
        Each round's feature row index, its stump and its vote ``alpha``.
        Equal errors resolve to the lowest feature index.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    values = np.asarray(values)
    is_pos = _labels(labels)
    w = initial_weights(is_pos) if weights is None else np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    tables = tables if tables is not None else _sorted_tables(values)
    out = []
    for _ in range(rounds):
        r, w = _boost_round(values, is_pos, w, tables)
        if trace is not None:
            trace.append(w.copy())
        out.append(r)
    return out


def strong_scores(boost_rounds, values):
    """Sum of alphas of the stumps voting face, per sample."""
    values = np.asarray(values)
    total = np.zeros(values.shape[1])
    for r in boost_rounds:
        total += r.alpha * stump_predict(r.stump, values[r.feature_index])
    return total


def strong_classify(boost_rounds, values):
    """Classic strong classifier: score >= half the total vote."""
    return strong_scores(boost_rounds, values) >= 0.5 * sum(r.alpha for r in boost_rounds)


# -- stages and cascades -----------------------------------------------------------

class StageStats(NamedTuple):
    weak: int
    threshold: float
    detection_rate: float
    false_positive_rate: float


def pass_rate(sums, threshold):
    return float(np.mean(np.asarray(sums) >= threshold - STAGE_EPS)) if len(sums) else 0.0


def stage_threshold(pos_sums, d_min):
    """Step down from the best positive sum in 1e-3 * range steps until d_min holds."""
    hi, lo = float(np.max(pos_sums)), float(np.min(pos_sums))
    step = 1e-3 * (hi - lo)
    for j in range(1001):
        t = hi - j * step
        if pass_rate(pos_sums, t) >= d_min:
            return t
    return lo


def _leaves(stump, alpha):
    # detector rule: value < threshold -> left leaf
    return (alpha, 0.0) if stump.polarity == 1 else (0.0, alpha)


def train_stage(pos_values, neg_values, cfg, scale=1.0, tables=None):
    """Boost one stage over precomputed raw feature values.

    Parameters
    ----------
    pos_values, neg_values : (n_features, n) arrays of raw sums
    cfg : TrainConfig
    scale : float
        Raw-to-value multiplier written into stump thresholds.

    Returns
    -------
    Stage
        Weak classifiers carry feature-row indices into ``pos_values``.
    StageStats
    """
    if pos_values.shape[1] == 0:
        raise EmptyPositives("no positive windows")
    if neg_values.shape[1] == 0:
        raise EmptyNegatives("no negative windows")
    values = np.concatenate([pos_values, neg_values], axis=1)
    n_pos = pos_values.shape[1]
    is_pos = np.arange(values.shape[1]) < n_pos
    tables = tables if tables is not None else _sorted_tables(values)
    w = initial_weights(is_pos)
    weak, sums = [], np.zeros(values.shape[1])
    while True:
        r, w = _boost_round(values, is_pos, w, tables)
        row = values[r.feature_index].astype(np.float64)
        left, right = _leaves(r.stump, r.alpha)
        weak.append(WeakClassifier(r.feature_index, left, right, r.stump.threshold * scale))
        sums = sums + np.where(row < r.stump.threshold, left, right)
        t = stage_threshold(sums[:n_pos], cfg.stage_d_min)
        d = pass_rate(sums[:n_pos], t)
        f = pass_rate(sums[n_pos:], t)
        if f <= cfg.stage_f_max:
            break
        if len(weak) >= cfg.max_weak_per_stage:
            warnings.warn(TargetsUnreachable(
                f"stage stopped at {len(weak)} weak classifiers with false-positive rate {f:.3f}"),
                stacklevel=2)
            break
    return Stage(t, tuple(weak)), StageStats(len(weak), t, d, f)


def _compact(stages, specs, w, h):
    """Cascade with only the features the stages use, renumbered in first-use order."""
    remap = {}
    for s in stages:
        for wc in s.weak:
            remap.setdefault(wc.feature_index, len(remap))
    new_stages = tuple(Stage(s.threshold, tuple(WeakClassifier(remap[wc.feature_index], wc.left, wc.right,
                                                               wc.threshold) for wc in s.weak))
                       for s in stages)
    features = tuple(to_haar_feature(specs[i]) for i in remap)
    return CascadeModel("HAAR", w, h, new_stages, features, var_norm=False)


def _harvest(model, pool, limit, rng):
    """Windows of the pool images that ``model`` accepts, in seeded random order."""
    found = []
    for img in pool:
        img = as_gray(img)
        if img.shape[0] < model.window_h or img.shape[1] < model.window_w:
            continue
        xs, ys, _ = scan_windows(model, img, step=1)
        for x, y in zip(xs.tolist(), ys.tolist()):
            found.append(img[y:y + model.window_h, x:x + model.window_w])
    if not found:
        return np.zeros((0, model.window_h, model.window_w), dtype=np.uint8)
    pick = rng.permutation(len(found))[:limit]
    return np.stack([found[i] for i in pick])


def sample_windows(images, n, w, h, seed=0):
    """``n`` random ``w`` x ``h`` windows drawn uniformly from ``images`` (seeded)."""
    imgs = [as_gray(i) for i in images if i.shape[0] >= h and i.shape[1] >= w]
    if not imgs or n < 1:
        return np.zeros((0, h, w), dtype=np.uint8)
    rng = np.random.default_rng(seed)
    out = np.empty((n, h, w), dtype=np.uint8)
    for k in range(n):
        img = imgs[int(rng.integers(len(imgs)))]
        y = int(rng.integers(img.shape[0] - h + 1))
        x = int(rng.integers(img.shape[1] - w + 1))
        out[k] = img[y:y + h, x:x + w]
    return out


def train_cascade(pos, neg, cfg, neg_pool=None, log=None):
    """Train a cascade of boosted stages with bootstrapped negatives.

    Parameters
    ----------
    pos : (n, train_h, train_w) uint8 array or list of windows
    neg : (m, train_h, train_w) windows for the first stage
    cfg : TrainConfig
    neg_pool : optional list of images (any size >= the window)
        Scanned after each stage for windows the cascade still accepts; these
        become the next stage's negatives. ``neg`` is always part of the pool.
    log : optional list receiving one dict per stage

    Returns
    -------
    CascadeModel
        HAAR cascade with variance normalisation off.
    """
    w, h = cfg.train_w, cfg.train_h
    pos = np.asarray(pos, dtype=np.uint8).reshape(-1, h, w) if len(pos) else np.zeros((0, h, w), np.uint8)
    neg = np.asarray(neg, dtype=np.uint8).reshape(-1, h, w) if len(neg) else np.zeros((0, h, w), np.uint8)
    if len(pos) == 0:
        raise EmptyPositives("no positive windows")
    if len(neg) == 0:
        raise EmptyNegatives("no negative windows")
    rng = np.random.default_rng(cfg.seed)
    n_neg = cfg.n_neg or len(neg)
    pool = list(neg) + list(neg_pool or [])
    specs = enumerate_specs(w, h)
    scale = value_scale(w, h)
    pos_values = feature_values(pos, specs, w, h)
    stages, current = [], neg
    for si in range(cfg.max_stages):
        stage, stats = train_stage(pos_values, feature_values(current, specs, w, h), cfg, scale)
        stages.append(stage)
        if log is not None:
            log.append({"stage": si, "weak": stats.weak, "threshold": stats.threshold,
                        "detection_rate": stats.detection_rate,
                        "false_positive_rate": stats.false_positive_rate,
                        "negatives": int(len(current))})
        if si + 1 == cfg.max_stages:
            break
        current = _harvest(_compact(stages, specs, w, h), pool, n_neg, rng)
        if len(current) == 0:
            warnings.warn(NegativePoolExhausted(
                f"no false positives left after {len(stages)} stage(s); stopping"), stacklevel=2)
            break
    return _compact(stages, specs, w, h)


def write_training_log(path, cfg, log):
    with open(path, "w") as fh:
        json.dump({"config": asdict(cfg), "stages": log}, fh, indent=2)
        fh.write("\n")


# -- synthetic data ---------------------------------------------------------------
#
# Two toy patterns. "band": a dark band on rows 6-9 across a bright window,
# the darker eye region in its crudest form. "face": two dark eye blocks and
# a mouth bar, shifted by up to one pixel to mimic alignment jitter; unlike
# the band it can be localised horizontally, which scene-level tests need.

BAND_ROWS = (6, 10)  # dark rows [6, 10) of a band window
FACE_MARKS = ((6, 10, 3, 8), (6, 10, 11, 16), (13, 15, 6, 13))  # (y0, y1, x0, x1) on 19x19
PATTERNS = ("band", "face")
DARK, BRIGHT, NOISE = 40, 200, 20


def _noise(rng, shape, level):
    return level + rng.integers(-NOISE, NOISE + 1, size=shape)


def _marks(pattern, w, h):
    if pattern == "band":
        return ((BAND_ROWS[0], BAND_ROWS[1], 0, w),)
    if pattern == "face":
        sx, sy = w / 19, h / 19
        return tuple((round(y0 * sy), round(y1 * sy), round(x0 * sx), round(x1 * sx))
                     for y0, y1, x0, x1 in FACE_MARKS)
    raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")


def _paint(img, x, y, rng, marks):
    for y0, y1, x0, x1 in marks:
        img[y + y0:y + y1, x + x0:x + x1] = _noise(rng, (y1 - y0, x1 - x0), DARK)


def make_synthetic_corpus(seed, n_pos, n_neg, w=19, h=19, pattern="band"):
    """Seeded toy faces and non-faces.

    Faces are a bright noisy window (about 200) carrying the dark marks of
    ``pattern`` (about 40). Non-faces are uniform noise.

    Returns
    -------
    pos : (n_pos, h, w) uint8
    neg : (n_neg, h, w) uint8
    """
    if n_pos < 1 or n_neg < 1:
        raise ValueError("corpus counts must be >= 1")
    if h < BAND_ROWS[1] or (pattern == "face" and w < 10):
        raise ValueError("window too small for the pattern")
    marks = _marks(pattern, w, h)
    rng = np.random.default_rng(seed)
    if pattern == "band":
        pos = _noise(rng, (n_pos, h, w), BRIGHT)
        pos[:, BAND_ROWS[0]:BAND_ROWS[1], :] = _noise(rng, (n_pos, BAND_ROWS[1] - BAND_ROWS[0], w), DARK)
    else:
        pos = np.empty((n_pos, h, w), dtype=np.int64)
        for i in range(n_pos):
            canvas = _noise(rng, (h + 2, w + 2), BRIGHT)
            _paint(canvas, 1, 1, rng, marks)
            dy, dx = rng.integers(-1, 2, size=2)
            pos[i] = canvas[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    neg = rng.integers(0, 256, size=(n_neg, h, w))
    return pos.astype(np.uint8), neg.astype(np.uint8)


def _band_distractor(img, rng, kind, y, x):
    if kind == 0:    # band of the wrong thickness
        t = int(rng.choice([1, 2, 7, 8, 10]))
        img[y:y + t, :] = _noise(rng, img[y:y + t, :].shape, DARK)
    elif kind == 1:  # full-width but only mid-dark
        img[y:y + 4, :] = 130 + rng.integers(-10, 11, size=img[y:y + 4, :].shape)
    elif kind == 2:  # short dark dash
        n = int(rng.integers(3, 9))
        img[y:y + 4, x:x + n] = _noise(rng, img[y:y + 4, x:x + n].shape, DARK)
    elif kind == 3:  # vertical bar
        t = int(rng.integers(2, 6))
        img[:, x:x + t] = _noise(rng, img[:, x:x + t].shape, DARK)
    else:            # dark block
        s = int(rng.integers(6, 16))
        img[y:y + s, x:x + s] = _noise(rng, img[y:y + s, x:x + s].shape, DARK)


def _face_distractor(img, rng, kind, y, x):
    if kind == 0:    # full-width band
        t = int(rng.choice([2, 4, 8]))
        img[y:y + t, :] = _noise(rng, img[y:y + t, :].shape, DARK)
    elif kind == 1:  # eye pair at the wrong spacing
        gap = int(rng.choice([0, 1, 6, 9]))
        for xx in (x, x + 5 + gap):
            img[y:y + 4, xx:xx + 5] = _noise(rng, img[y:y + 4, xx:xx + 5].shape, DARK)
    elif kind == 2:  # dark block
        s = int(rng.integers(6, 16))
        img[y:y + s, x:x + s] = _noise(rng, img[y:y + s, x:x + s].shape, DARK)
    elif kind == 3:  # vertical bar
        t = int(rng.integers(2, 6))
        img[:, x:x + t] = _noise(rng, img[:, x:x + t].shape, DARK)
    else:            # lone eye
        img[y:y + 4, x:x + 5] = _noise(rng, img[y:y + 4, x:x + 5].shape, DARK)


def make_negative_scenes(seed, n, w=64, h=64, pattern="band"):
    """Bright noisy scenes full of face-like distractors that are not faces.

    For "band": bands of the wrong thickness or contrast, short dashes,
    vertical bars and dark blocks (a face band is exactly 4 rows at full
    contrast across the window). For "face": full-width bands, lone eyes,
    eye pairs at the wrong spacing, bars and blocks.
    """
    _marks(pattern, 19, 19)
    draw = _band_distractor if pattern == "band" else _face_distractor
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        img = _noise(rng, (h, w), BRIGHT)
        for _ in range(rng.integers(2, 6)):
            kind = rng.integers(0, 5)
            draw(img, rng, kind, int(rng.integers(0, h - 2)), int(rng.integers(0, w - 2)))
        out.append(np.clip(img, 0, 255).astype(np.uint8))
    return out


def make_synthetic_scene(seed, n_targets, w=160, h=120, face=19, pattern="band"):
    """Scene on the corpus background with ``n_targets`` planted faces.

    Faces sit on a non-overlapping grid of cells so the count is exact.

    Returns
    -------
    img : (h, w) uint8
    rects : list of Rect, each face x face
    """
    marks = _marks(pattern, face, face)
    rng = np.random.default_rng(seed)
    img = _noise(rng, (h, w), BRIGHT)
    cell = 2 * face
    slots = [(cx, cy) for cy in range(0, h - cell + 1, cell) for cx in range(0, w - cell + 1, cell)]
    if n_targets > len(slots):
        raise ValueError(f"at most {len(slots)} targets fit a {w}x{h} scene")
    rects = []
    for i in sorted(rng.permutation(len(slots))[:n_targets].tolist()):
        cx, cy = slots[i]
        x = cx + int(rng.integers(0, cell - face + 1))
        y = cy + int(rng.integers(0, cell - face + 1))
        _paint(img, x, y, rng, marks)
        rects.append(Rect(x, y, face, face))
    return np.clip(img, 0, 255).astype(np.uint8), rects
