"""Multi-scale sliding-window detection with boosted cascades.

Two evaluation paths share one set of conventions:

* ``eval_haar_feature`` / ``mblbp_code`` / ``eval_stage`` / ``eval_window``
  score a single window through a :class:`WindowContext`. They are short and
  direct and serve as the reference.
* ``detect_multi_scale`` sweeps an image pyramid and evaluates every stage
  over all surviving windows of a level at once with numpy gathers.

Tests check that both paths accept exactly the same windows.
"""
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cascade import HaarFeature, LbpFeature
from .errors import ImageTooSmall
from .imgcore import (Rect, as_gray, integral, integral_rotated, integral_squared,
                      rect_sum, resize_bilinear)

# The variance of a HAAR window is measured over the window shrunk by this many
# pixels on every side (matches how the stock cascades were trained).
NORM_INSET = 1
WINDOW_STEP = 2
# Beyond this pyramid scale the window moves 1 pixel at a time, otherwise 2.
FINE_STEP_SCALE = 2.0
# Stage sums are compared with this much slack so exact ties survive rounding.
STAGE_EPS = 1e-5

# neighbour cells of the 3x3 MB-LBP grid, clockwise from top-left: bit 7 .. bit 0
_LBP_NEIGHBOURS = ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0))
_LBP_RING = np.array([3 * r + c for r, c in _LBP_NEIGHBOURS])


@dataclass(frozen=True)
class DetectParams:
    scale_factor: float = 1.3
    min_neighbors: int = 5
    min_size: int = None  # smallest reported window width; None means the cascade window
    max_size: int = None
    eps: float = 0.2

    def __post_init__(self):
        if not self.scale_factor > 1.0:
            raise ValueError("scale_factor must be > 1")
        if self.min_neighbors < 0:
            raise ValueError("min_neighbors must be >= 0")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")


@dataclass(frozen=True)
class Detection:
    rect: Rect
    level: int
    score: float


@dataclass(frozen=True)
class WindowContext:
    plain: object
    squared: object
    rotated: object
    x: int
    y: int
    window_w: int
    window_h: int
    inv_area: float
    sigma: float
    var_norm: bool = True


def norm_rect(window_w, window_h):
    inset = NORM_INSET if min(window_w, window_h) > 2 * NORM_INSET else 0
    return Rect(inset, inset, window_w - 2 * inset, window_h - 2 * inset)


def build_tables(img, need_rotated=True):
    img = as_gray(img)
    return integral(img), integral_squared(img), integral_rotated(img) if need_rotated else None


def make_context(model, tables, x, y):
    """Window context at (x, y) for ``model`` over precomputed integral ``tables``."""
    plain, squared, rotated = tables
    nr = norm_rect(model.window_w, model.window_h)
    r = Rect(x + nr.x, y + nr.y, nr.w, nr.h)
    area = nr.w * nr.h
    mean = rect_sum(plain, r) / area
    var = rect_sum(squared, r) / area - mean * mean
    return WindowContext(plain, squared, rotated, x, y, model.window_w, model.window_h,
                         1.0 / area, math.sqrt(max(0.0, var)), model.var_norm)


def eval_haar_feature(f, ctx):
    """Weighted rectangle sum, scaled by 1/area and (optionally) 1/max(sigma, 1)."""
    table = ctx.rotated if f.tilted else ctx.plain
    raw = 0.0
    for r in f.rects:
        raw += r.weight * rect_sum(table, Rect(ctx.x + r.x, ctx.y + r.y, r.w, r.h))
    value = raw * ctx.inv_area
    if ctx.var_norm:
        value /= max(ctx.sigma, 1.0)
    return value


def mblbp_code(f, ctx):
    """8-bit multi-block LBP code: bit set where a neighbour cell sum >= the centre sum."""
    sums = [[rect_sum(ctx.plain, Rect(ctx.x + f.x + c * f.w, ctx.y + f.y + r * f.h, f.w, f.h))
             for c in range(3)] for r in range(3)]
    centre = sums[1][1]
    code = 0
    for p, (r, c) in enumerate(_LBP_NEIGHBOURS):
        if sums[r][c] >= centre:
            code |= 1 << (7 - p)
    return code


def eval_stage(stage, model, ctx):
    total = 0.0
    for wc in stage.weak:
        f = model.features[wc.feature_index]
        if isinstance(f, LbpFeature):
            total += wc.left if wc.subset_has(mblbp_code(f, ctx)) else wc.right
        else:
            total += wc.left if eval_haar_feature(f, ctx) < wc.threshold else wc.right
    return total >= stage.threshold - STAGE_EPS, total


def eval_window(model, ctx, trace=None):
    """True iff every stage passes; stops at the first failing stage.

    If ``trace`` is a list, the index of every evaluated stage is appended.
    """
    for si, stage in enumerate(model.stages):
        if trace is not None:
            trace.append(si)
        if not eval_stage(stage, model, ctx)[0]:
            return False
    return True


# -- vectorised evaluation ----------------------------------------------------------

@dataclass
class _StagePlan:
    threshold: float
    left: np.ndarray
    right: np.ndarray
    # HAAR: unique corner points per table and coefficients mapping them to features
    plain_pts: np.ndarray = None
    tilt_pts: np.ndarray = None
    plain_coef: np.ndarray = None
    tilt_coef: np.ndarray = None
    thresholds: np.ndarray = None
    # LBP: 4x4 grid points per weak classifier and the subset bit table
    grid_pts: np.ndarray = None
    bit_table: np.ndarray = None
    bit_offsets: np.ndarray = None


def _corners(x, y, w, h):
    return [(y, x, 1.0), (y, x + w, -1.0), (y + h, x, -1.0), (y + h, x + w, 1.0)]


def _tilted_corners(x, y, w, h):
    return [(y, x, 1.0), (y + h, x - h, -1.0), (y + w, x + w, -1.0), (y + w + h, x + w - h, 1.0)]


def _haar_plan(stage, model):
    n = len(stage.weak)
    plain, tilt = {}, {}
    plain_terms, tilt_terms = [], []
    for j, wc in enumerate(stage.weak):
        f = model.features[wc.feature_index]
        for r in f.rects:
            pts = (_tilted_corners if f.tilted else _corners)(r.x, r.y, r.w, r.h)
            index, terms = (tilt, tilt_terms) if f.tilted else (plain, plain_terms)
            for py, px, sign in pts:
                k = index.setdefault((py, px), len(index))
                terms.append((k, j, sign * r.weight))

    def coef(index, terms):
        c = np.zeros((len(index), n))
        for k, j, v in terms:
            c[k, j] += v
        pts = np.array(list(index), dtype=np.intp).reshape(-1, 2)
        return pts, c

    plain_pts, plain_coef = coef(plain, plain_terms)
    tilt_pts, tilt_coef = coef(tilt, tilt_terms)
    return _StagePlan(stage.threshold,
                      np.array([w.left for w in stage.weak]),
                      np.array([w.right for w in stage.weak]),
                      plain_pts=plain_pts, tilt_pts=tilt_pts,
                      plain_coef=plain_coef, tilt_coef=tilt_coef,
                      thresholds=np.array([w.threshold for w in stage.weak]))


def _lbp_plan(stage, model):
    grid = []
    bits = np.zeros((len(stage.weak), 256), dtype=bool)
    codes = np.arange(256)
    for j, wc in enumerate(stage.weak):
        f = model.features[wc.feature_index]
        grid.append([(f.y + r * f.h, f.x + c * f.w) for r in range(4) for c in range(4)])
        words = np.array([v & 0xFFFFFFFF for v in wc.subset], dtype=np.uint64)
        bits[j] = ((words[codes >> 5] >> (codes & 31).astype(np.uint64)) & 1).astype(bool)
    return _StagePlan(stage.threshold,
                      np.array([w.left for w in stage.weak]),
                      np.array([w.right for w in stage.weak]),
                      grid_pts=np.array(grid, dtype=np.intp).reshape(-1, 2),
                      bit_table=bits,
                      bit_offsets=np.arange(len(stage.weak)) * 256)


def compile_cascade(model):
    plan = _haar_plan if model.feature_type == "HAAR" else _lbp_plan
    return [plan(s, model) for s in model.stages]


def _needs_rotated(model):
    return model.feature_type == "HAAR" and any(
        isinstance(f, HaarFeature) and f.tilted for f in model.features)


def _gather(table, base, pts, stride):
    offs = pts[:, 0] * stride + pts[:, 1]
    return table.ravel()[base[:, None] + offs[None, :]]


def _stage_sums(plan, model, tables, base, scale, flat32=None):
    """Stage sums for the windows whose top-left table offsets are ``base``."""
    plain = tables[0].sums
    stride = plain.shape[1]
    if model.feature_type == "LBP":
        # int32 wraps, but cell sums are differences so the wrap cancels out
        if flat32 is None:
            flat32 = plain.astype(np.int32).ravel()
        offs = plan.grid_pts[:, 0] * stride + plan.grid_pts[:, 1]
        g = flat32[base[:, None] + offs[None, :]].reshape(len(base), -1, 4, 4)
        cells = g[:, :, :3, :3] - g[:, :, :3, 1:] - g[:, :, 1:, :3] + g[:, :, 1:, 1:]
        cells = cells.reshape(len(base), -1, 9)
        ring = cells[:, :, _LBP_RING] >= cells[:, :, 4:5]
        code = np.packbits(ring, axis=-1, bitorder="big")[..., 0]
        hit = plan.bit_table.ravel()[plan.bit_offsets + code]
        return np.where(hit, plan.left, plan.right).sum(axis=1)

    raw = np.zeros((len(base), len(plan.left)))
    if len(plan.plain_pts):
        raw += _gather(plain, base, plan.plain_pts, stride).astype(np.float64) @ plan.plain_coef
    if len(plan.tilt_pts):
        raw += _gather(tables[2].sums, base, plan.tilt_pts, stride).astype(np.float64) @ plan.tilt_coef
    values = raw * scale[:, None]
    return np.where(values < plan.thresholds, plan.left, plan.right).sum(axis=1)


def _window_scale(model, tables, base):
    """Per-window multiplier turning raw HAAR sums into feature values."""
    nr = norm_rect(model.window_w, model.window_h)
    inv_area = 1.0 / (nr.w * nr.h)
    if not model.var_norm:
        return np.full(len(base), inv_area)
    stride = tables[0].sums.shape[1]
    pts = np.array([(c[0], c[1]) for c in _corners(nr.x, nr.y, nr.w, nr.h)], dtype=np.intp)
    sign = np.array([1.0, -1.0, -1.0, 1.0])
    s = _gather(tables[0].sums, base, pts, stride).astype(np.float64) @ sign
    sq = _gather(tables[1].sums, base, pts, stride).astype(np.float64) @ sign
    mean = s * inv_area
    sigma = np.sqrt(np.maximum(0.0, sq * inv_area - mean * mean))
    return inv_area / np.maximum(sigma, 1.0)


# While at least this fraction of a level's windows is alive, stages run on
# strided slices of the tables instead of per-window gathers.
DENSE_FRACTION = 0.25


def _grid_slice(table, py, px, ny, nx, step):
    return table[py:py + (ny - 1) * step + 1:step, px:px + (nx - 1) * step + 1:step]


def _dense_scale(model, tables, ny, nx, step):
    nr = norm_rect(model.window_w, model.window_h)
    inv_area = 1.0 / (nr.w * nr.h)
    if not model.var_norm:
        return np.full((ny, nx), inv_area)

    def box(t):
        c = [_grid_slice(t, py, px, ny, nx, step) for py, px, _ in _corners(nr.x, nr.y, nr.w, nr.h)]
        return (c[0] - c[1] - c[2] + c[3]).astype(np.float64)

    mean = box(tables[0].sums) * inv_area
    sigma = np.sqrt(np.maximum(0.0, box(tables[1].sums) * inv_area - mean * mean))
    return inv_area / np.maximum(sigma, 1.0)


def _dense_stage_sums(stage, plan, model, tables, ny, nx, step, scale, t32):
    total = np.zeros((ny, nx))
    for j, wc in enumerate(stage.weak):
        f = model.features[wc.feature_index]
        if model.feature_type == "LBP":
            g = [[_grid_slice(t32, f.y + r * f.h, f.x + c * f.w, ny, nx, step) for c in range(4)]
                 for r in range(4)]
            cell = [[g[r][c] - g[r][c + 1] - g[r + 1][c] + g[r + 1][c + 1] for c in range(3)]
                    for r in range(3)]
            code = np.zeros((ny, nx), dtype=np.intp)
            for p, (r, c) in enumerate(_LBP_NEIGHBOURS):
                code |= (cell[r][c] >= cell[1][1]).astype(np.intp) << (7 - p)
            hit = plan.bit_table[j][code]
        else:
            table = tables[2].sums if f.tilted else tables[0].sums
            raw = np.zeros((ny, nx))
            for r in f.rects:
                pts = (_tilted_corners if f.tilted else _corners)(r.x, r.y, r.w, r.h)
                for py, px, sign in pts:
                    raw += (sign * r.weight) * _grid_slice(table, py, px, ny, nx, step)
            hit = raw * scale < wc.threshold
        total += np.where(hit, wc.left, wc.right)
    return total


def scan_windows(model, img, step=WINDOW_STEP, tables=None):
    """Evaluate the cascade on every window of one image (no pyramid).

    Returns ``(xs, ys, scores)`` for the windows that pass all stages, in
    row-major window order.
    """
    img = as_gray(img)
    h, w = img.shape
    if tables is None:
        tables = build_tables(img, _needs_rotated(model))
    ny = (h - model.window_h) // step + 1
    nx = (w - model.window_w) // step + 1
    empty = np.zeros(0, dtype=np.intp)
    if ny <= 0 or nx <= 0:
        return empty, empty, np.zeros(0)
    lbp = model.feature_type == "LBP"
    # int32 wraps, but cell sums are differences so the wrap cancels out
    t32 = tables[0].sums.astype(np.int32) if lbp else None
    scale = None if lbp else _dense_scale(model, tables, ny, nx, step)
    stages = list(zip(model.stages, model.compiled))

    alive = np.ones((ny, nx), dtype=bool)
    sums = np.zeros((ny, nx))
    k = 0
    while k < len(stages) and alive.mean() >= DENSE_FRACTION:
        sums = _dense_stage_sums(*stages[k], model, tables, ny, nx, step, scale, t32)
        alive &= sums >= stages[k][1].threshold - STAGE_EPS
        k += 1

    iy, ix = np.nonzero(alive)
    ys, xs = iy * step, ix * step
    sums = sums[iy, ix]
    base = ys * (w + 1) + xs
    if scale is not None:
        scale = scale[iy, ix]
    flat32 = t32.ravel() if lbp else None
    for _, plan in stages[k:]:
        if not len(base):
            break
        sums = _stage_sums(plan, model, tables, base, scale, flat32)
        keep = sums >= plan.threshold - STAGE_EPS
        base, xs, ys, sums = base[keep], xs[keep], ys[keep], sums[keep]
        if scale is not None:
            scale = scale[keep]
    return xs, ys, sums


def pyramid_levels(img_w, img_h, model, params):
    """(level, scale, level_w, level_h) for every pyramid level that gets scanned."""
    min_w = max(model.window_w, params.min_size or 0)
    levels = []
    i = 0
    while True:
        s = params.scale_factor ** i
        lw, lh = int(math.floor(img_w / s + 0.5)), int(math.floor(img_h / s + 0.5))
        if lw < model.window_w or lh < model.window_h:
            break
        win_w = int(math.floor(model.window_w * s + 0.5))
        if params.max_size is not None and win_w > params.max_size:
            break
        if win_w >= min_w:
            levels.append((i, s, lw, lh))
        i += 1
    return levels


def _detect_level(model, img, level):
    i, s, lw, lh = level
    scaled = img if i == 0 else resize_bilinear(img, lw, lh)
    step = 1 if s > FINE_STEP_SCALE else WINDOW_STEP
    xs, ys, scores = scan_windows(model, scaled, step=step)
    H, W = img.shape
    out = []
    ww = int(math.floor(model.window_w * s + 0.5))
    wh = int(math.floor(model.window_h * s + 0.5))
    for x, y, sc in zip(xs.tolist(), ys.tolist(), scores.tolist()):
        rx = min(int(math.floor(x * s + 0.5)), W - 1)
        ry = min(int(math.floor(y * s + 0.5)), H - 1)
        out.append(Detection(Rect(rx, ry, min(ww, W - rx), min(wh, H - ry)), i, float(sc)))
    return out


def detect_raw(model, img, params, jobs=1):
    """All accepted windows across the pyramid, mapped to image coordinates."""
    img = as_gray(img)
    H, W = img.shape
    if W < model.window_w or H < model.window_h:
        raise ImageTooSmall(f"{W}x{H} image is smaller than the {model.window_w}x"
                            f"{model.window_h} cascade window")
    model.compiled  # build shared tables once, before any worker threads start
    levels = pyramid_levels(W, H, model, params)
    if jobs and jobs > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_level = list(pool.map(lambda lv: _detect_level(model, img, lv), levels))
    else:
        per_level = [_detect_level(model, img, lv) for lv in levels]
    return [d for dets in per_level for d in dets]


def detect_multi_scale(model, img, params=None, jobs=1, **kwargs):
    """Detect objects at every scale and group overlapping hits.

    Parameters
    ----------
    model : CascadeModel
    img : 2-D uint8 array
    params : DetectParams, optional
        Keyword arguments are accepted instead (``scale_factor``,
        ``min_neighbors``, ``min_size``, ``max_size``, ``eps``).
    jobs : int
        Worker threads used across pyramid levels; results do not depend on it.

    Returns
    -------
    list of Detection sorted by (y, x, w).
    """
    if params is None:
        params = DetectParams(**kwargs)
    raw = detect_raw(model, img, params, jobs=jobs)
    if params.min_neighbors == 0:
        return sorted(raw, key=lambda d: (d.rect.y, d.rect.x, d.rect.w, d.rect.h))
    clusters = cluster_rectangles([d.rect for d in raw], params.eps)
    out = []
    for members in clusters:
        if len(members) < max(1, params.min_neighbors):
            continue
        rect = _mean_rect([raw[k].rect for k in members])
        level = Counter(raw[k].level for k in members).most_common()
        best = max(c for _, c in level)
        out.append(Detection(rect, min(lv for lv, c in level if c == best),
                             max(raw[k].score for k in members)))
    return sorted(out, key=lambda d: (d.rect.y, d.rect.x, d.rect.w, d.rect.h))


# -- grouping -------------------------------------------------------------------------

def _similar_matrix(rects, eps):
    a = np.asarray(rects, dtype=np.float64).reshape(-1, 4)
    x, y, w, h = (a[:, i] for i in range(4))
    delta = eps * 0.5 * (np.minimum(w[:, None], w[None, :]) + np.minimum(h[:, None], h[None, :]))

    def close(v):
        return np.abs(v[:, None] - v[None, :]) <= delta

    return close(x) & close(y) & close(x + w) & close(y + h)


def cluster_rectangles(rects, eps=0.2):
    """Union-find clusters of mutually similar rects, as lists of indices.

    Two rects are similar when each of their four edges moves by at most
    ``eps * (min(w1, w2) + min(h1, h2)) / 2``. Clusters come back ordered by first member.
    """
    n = len(rects)
    if n == 0:
        return []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    ii, jj = np.nonzero(np.triu(_similar_matrix(rects, eps), k=1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)]


def _mean_rect(rects):
    a = np.asarray(rects, dtype=np.float64).reshape(-1, 4).mean(axis=0)
    return Rect(*(int(v) for v in np.floor(a + 0.5)))


def group_rectangles(raw, min_neighbors, eps=0.2):
    """Merge clusters of similar rects into their rounded mean.

    ``min_neighbors == 0`` returns the input unchanged; otherwise only clusters
    with at least ``min_neighbors`` members survive. Output is sorted by (y, x, w).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    raw = [Rect(*r) for r in raw]
    if min_neighbors == 0:
        return raw
    out = [_mean_rect([raw[k] for k in members])
           for members in cluster_rectangles(raw, eps) if len(members) >= min_neighbors]
    return sorted(out, key=lambda r: (r.y, r.x, r.w, r.h))
