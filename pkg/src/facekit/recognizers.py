"""Eigenfaces, Fisherfaces and LBPH face recognizers.

All three share one contract: ``predict`` returns the label of the nearest
stored training sample together with its distance, or label -1 when that
distance exceeds the model threshold (``inf`` by default, so never).
"""
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import (CorruptModel, EmptyTrainingSet, EqualSizeRequired, FormatVersionMismatch,
                     ImageTooSmall, InsufficientSamples, LengthMismatch,
                     OutOfBounds, SingleClass)
from .imgcore import as_gray
from .linalg import RANK_CUTOFF, jacobi_eigen_symmetric, lda_directions

UNKNOWN = -1
DEFAULT_COMPONENTS = 80
FORMAT_VERSION = 1


class FaceSample(NamedTuple):
    image: np.ndarray
    label: int


class Prediction(NamedTuple):
    label: int
    distance: float


@dataclass(frozen=True, eq=False)
class EigenModel:
    face_w: int
    face_h: int
    mean: np.ndarray         # (d,)
    basis: np.ndarray        # (k, d), orthonormal rows
    projections: np.ndarray  # (N, k)
    labels: np.ndarray       # (N,)
    threshold: float = math.inf
    kind = "eigen"

    @property
    def k(self):
        return self.basis.shape[0]


@dataclass(frozen=True, eq=False)
class FisherModel(EigenModel):
    """Same layout as :class:`EigenModel`; ``basis`` is the PCA->LDA projection."""
    kind = "fisher"


@dataclass(frozen=True, eq=False)
class LBPHModel:
    radius: int
    neighbors: int
    grid_x: int
    grid_y: int
    histograms: np.ndarray   # (N, grid_x * grid_y * 2**neighbors)
    labels: np.ndarray
    threshold: float = math.inf
    interpolate: bool = False
    kind = "lbph"


def with_threshold(model, threshold):
    """Copy of ``model`` with a new rejection threshold."""
    return replace(model, threshold=float(threshold))


def _samples(samples):
    out = []
    for s in samples:
        img, label = s
        label = int(label)
        if label < 1:
            raise ValueError(f"labels must be >= 1 (got {label}); -1 is reserved for unknown faces")
        out.append(FaceSample(as_gray(img), label))
    return out


def _stack(samples, method):
    """Row-vectorize equally sized images (first image fixes the expected size)."""
    shape = samples[0].image.shape
    for s in samples[1:]:
        if s.image.shape != shape:
            raise EqualSizeRequired(shape[0] * shape[1], s.image.size, method)
    return shape, np.stack([s.image.reshape(-1) for s in samples]).astype(np.float64)


def _decide(distances, labels, threshold):
    if not len(distances):
        return Prediction(UNKNOWN, math.inf)
    i = int(np.argmin(distances))
    d = float(distances[i])
    return Prediction(UNKNOWN if d > threshold else int(labels[i]), d)


# -- eigenfaces -----------------------------------------------------------------

def _pca(X, k):
    """Mean and top-k orthonormal principal axes of the rows of X (Gram-matrix trick)."""
    mean = X.mean(axis=0)
    A = X - mean
    lam, U = jacobi_eigen_symmetric(A @ A.T)
    lam_max = lam.max(initial=0.0)
    nonzero = int(np.sum(lam > RANK_CUTOFF * lam_max)) if lam_max > 0 else 0
    k = max(0, min(k, X.shape[0] - 1, nonzero))
    basis = (A.T @ U[:, :k]) / np.sqrt(lam[:k])
    if k:
        # one QR pass cleans up the orthogonality lost on the smallest kept modes
        q, r = np.linalg.qr(basis)
        basis = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return mean, basis.T, lam[:k]


def eigen_train(samples, k=DEFAULT_COMPONENTS, threshold=math.inf):
    """Train an Eigenfaces model.

    Parameters
    ----------
    samples : sequence of (image, label)
        Images must all share one size; the first image sets the expected size.
    k : int
        Components to keep, clamped to N-1 and to the number of non-zero modes.
    threshold : float
        Distances above this predict -1.
    """
    samples = _samples(samples)
    if len(samples) < 2:
        raise InsufficientSamples("Eigenfaces needs at least 2 training images")
    (h, w), X = _stack(samples, "Eigenfaces")
    mean, basis, _ = _pca(X, int(k))
    # C order keeps matrix products bit-identical to a model read back from disk
    basis = np.ascontiguousarray(basis)
    return EigenModel(w, h, mean, basis, (X - mean) @ basis.T,
                      np.array([s.label for s in samples]), float(threshold))


def _project(model, face, method):
    face = as_gray(face)
    if face.shape != (model.face_h, model.face_w):
        raise EqualSizeRequired(model.face_w * model.face_h, face.size, method)
    return (face.reshape(-1).astype(np.float64) - model.mean) @ model.basis.T


def eigen_predict(model, face):
    q = _project(model, face, "Eigenfaces")
    return _decide(np.linalg.norm(model.projections - q, axis=1), model.labels, model.threshold)


def reconstruct(model, projection):
    """Image vector (length d) rebuilt from a projection onto ``model.basis``."""
    return model.mean + np.asarray(projection) @ model.basis


# -- fisherfaces ----------------------------------------------------------------

def scatter_matrices(P, labels):
    """Within- and between-class scatter of the rows of P."""
    labels = np.asarray(labels)
    mu = P.mean(axis=0)
    s_w = np.zeros((P.shape[1], P.shape[1]))
    s_b = np.zeros_like(s_w)
    for c in np.unique(labels):
        Pc = P[labels == c]
        mc = Pc.mean(axis=0)
        D = Pc - mc
        s_w += D.T @ D
        s_b += len(Pc) * np.outer(mc - mu, mc - mu)
    return s_w, s_b


def fisher_train(samples, threshold=math.inf):
    """Train a Fisherfaces model: PCA to N-c dimensions, then LDA to c-1."""
    samples = _samples(samples)
    if not samples:
        raise InsufficientSamples("Fisherfaces needs training images")
    labels = np.array([s.label for s in samples])
    c = len(np.unique(labels))
    if c < 2:
        raise SingleClass("Fisherfaces needs at least 2 distinct labels")
    (h, w), X = _stack(samples, "Fisherfaces")
    n = len(samples)
    if n - c < 1:
        raise InsufficientSamples("Fisherfaces needs more training images than classes")
    mean, pca, _ = _pca(X, n - c)
    P = (X - mean) @ pca.T
    s_w, s_b = scatter_matrices(P, labels)
    W = lda_directions(s_w, s_b, c - 1)
    basis = np.ascontiguousarray((pca.T @ W).T)
    return FisherModel(w, h, mean, basis, (X - mean) @ basis.T, labels, float(threshold))


def fisher_predict(model, face):
    q = _project(model, face, "Fisherfaces")
    return _decide(np.linalg.norm(model.projections - q, axis=1), model.labels, model.threshold)


# -- LBPH -----------------------------------------------------------------------

def _check_lbp_params(radius, neighbors):
    if int(radius) < 1:
        raise ValueError("radius must be >= 1")
    if not 1 <= int(neighbors) <= 16:
        raise ValueError("neighbors must lie in [1, 16]")


def _offsets(radius, neighbors):
    a = 2.0 * np.pi * np.arange(neighbors) / neighbors
    dx = radius * np.cos(a)
    dy = -radius * np.sin(a)
    # snap float noise such as cos(pi/2) = 6e-17 onto the grid
    return np.round(dx, 9), np.round(dy, 9)


def _nearest(v):
    return np.floor(v + 0.5).astype(int)


def lbp_code_at(img, x, y, radius=1, neighbors=8, interpolate=False):
    """LBP code of pixel (x, y): bit p is set iff sample p >= the centre.

    Sample p sits at angle 2*pi*p/neighbors on a circle of ``radius``
    (counter-clockwise, starting to the right of the centre). By default
    each sample is the nearest pixel, so for radius 1 and 8 neighbours
    the samples are exactly the 3x3 ring. ``interpolate=True`` reads
    bilinear values at the exact circle positions instead.
    """
    img = as_gray(img)
    _check_lbp_params(radius, neighbors)
    h, w = img.shape
    if not (radius <= x < w - radius and radius <= y < h - radius):
        raise OutOfBounds(f"sample circle of radius {radius} around ({x}, {y}) leaves the image")
    dx, dy = _offsets(radius, neighbors)
    centre = float(img[y, x])
    code = 0
    for p in range(neighbors):
        if interpolate:
            sx, sy = x + dx[p], y + dy[p]
            x0, y0 = int(math.floor(sx)), int(math.floor(sy))
            fx, fy = sx - x0, sy - y0
            x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
            v = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
                 + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))
        else:
            v = float(img[y + _nearest(dy[p]), x + _nearest(dx[p])])
        if v >= centre:
            code |= 1 << p
    return code


def lbp_code_map(img, radius=1, neighbors=8, interpolate=False):
    """Codes of every pixel whose full sample circle lies inside the image.

    Returns an array of shape (h - 2*radius, w - 2*radius).
    """
    img = as_gray(img)
    _check_lbp_params(radius, neighbors)
    h, w = img.shape
    r = int(radius)
    oh, ow = h - 2 * r, w - 2 * r
    if oh < 1 or ow < 1:
        raise ImageTooSmall(f"{w}x{h} image has no pixel with a full radius-{r} circle")
    f = img.astype(np.float64)
    centre = f[r:r + oh, r:r + ow]
    dx, dy = _offsets(r, neighbors)
    codes = np.zeros((oh, ow), dtype=np.int64)

    def shifted(ox, oy):
        return f[r + oy:r + oy + oh, r + ox:r + ox + ow]

    for p in range(neighbors):
        if interpolate:
            x0, y0 = int(math.floor(dx[p])), int(math.floor(dy[p]))
            fx, fy = dx[p] - x0, dy[p] - y0
            x1 = x0 + 1 if fx > 0 else x0
            y1 = y0 + 1 if fy > 0 else y0
            v = ((1 - fy) * ((1 - fx) * shifted(x0, y0) + fx * shifted(x1, y0))
                 + fy * ((1 - fx) * shifted(x0, y1) + fx * shifted(x1, y1)))
        else:
            v = shifted(_nearest(dx[p]), _nearest(dy[p]))
        codes |= (v >= centre).astype(np.int64) << p
    return codes


def _cell_edges(n, cells):
    step = n // cells
    edges = [i * step for i in range(cells)] + [n]
    return np.asarray(edges)


def lbph_histogram(img, radius=1, neighbors=8, grid_x=8, grid_y=8, interpolate=False):
    """Concatenated per-cell LBP histograms, each normalized to sum 1.

    The code map is split into ``grid_y`` rows and ``grid_x`` columns of
    cells by floor division; leftover pixels join the last row/column.
    Cells are concatenated row by row.
    """
    codes = lbp_code_map(img, radius, neighbors, interpolate)
    oh, ow = codes.shape
    if oh < grid_y or ow < grid_x:
        raise ImageTooSmall(f"code map {ow}x{oh} is smaller than the {grid_x}x{grid_y} grid")
    bins = 1 << neighbors
    ry = np.searchsorted(_cell_edges(oh, grid_y), np.arange(oh), side="right") - 1
    rx = np.searchsorted(_cell_edges(ow, grid_x), np.arange(ow), side="right") - 1
    cell = ry[:, None] * grid_x + rx[None, :]
    hist = np.bincount((cell * bins + codes).ravel(), minlength=grid_x * grid_y * bins)
    hist = hist.reshape(grid_x * grid_y, bins).astype(np.float64)
    hist /= hist.sum(axis=1, keepdims=True)
    return hist.ravel()


def chi_square(h1, h2):
    """Symmetric chi-square distance; bins empty in both inputs are skipped."""
    a = np.asarray(h1, dtype=np.float64)
    b = np.asarray(h2, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"histogram lengths differ: {a.size} vs {b.size}")
    s = a + b
    nz = s != 0
    return float(np.sum((a[nz] - b[nz]) ** 2 / s[nz]))


def _chi_square_rows(H, q):
    S = H + q
    D = (H - q) ** 2
    return np.where(S != 0, D / np.where(S != 0, S, 1.0), 0.0).sum(axis=1)


def lbph_train(samples, radius=1, neighbors=8, grid_x=8, grid_y=8,
               threshold=math.inf, interpolate=False):
    """One histogram per sample; images may differ in size."""
    samples = _samples(samples)
    if not samples:
        raise EmptyTrainingSet("LBPH needs at least 1 training image")
    H = np.stack([lbph_histogram(s.image, radius, neighbors, grid_x, grid_y, interpolate)
                  for s in samples])
    return LBPHModel(int(radius), int(neighbors), int(grid_x), int(grid_y), H,
                     np.array([s.label for s in samples]), float(threshold), bool(interpolate))


def lbph_predict(model, face):
    q = lbph_histogram(face, model.radius, model.neighbors, model.grid_x, model.grid_y,
                       model.interpolate)
    return _decide(_chi_square_rows(model.histograms, q), model.labels, model.threshold)


# -- dispatch -------------------------------------------------------------------

ALGORITHMS = ("eigen", "fisher", "lbph")


def train(algo, samples, threshold=math.inf, components=DEFAULT_COMPONENTS, **lbph_params):
    if algo == "eigen":
        return eigen_train(samples, components, threshold)
    if algo == "fisher":
        return fisher_train(samples, threshold)
    if algo == "lbph":
        return lbph_train(samples, threshold=threshold, **lbph_params)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")


def predict(model, face):
    return {"eigen": eigen_predict, "fisher": fisher_predict, "lbph": lbph_predict}[model.kind](model, face)


# -- persistence ----------------------------------------------------------------

def _real(v):
    return repr(float(v))


def _row(values):
    return " ".join(_real(v) for v in np.ravel(values))


def dumps_model(model):
    """Text form of a model; see :func:`save_model`."""
    out = [f"FACEREC {FORMAT_VERSION} {model.kind}"]
    if model.kind == "lbph":
        out += [f"radius {model.radius}", f"neighbors {model.neighbors}",
                f"grid_x {model.grid_x}", f"grid_y {model.grid_y}",
                f"interpolate {int(model.interpolate)}", f"threshold {_real(model.threshold)}",
                f"samples {len(model.labels)} {model.histograms.shape[1]}", "histograms"]
        out += [f"{int(l)} {_row(h)}" for l, h in zip(model.labels, model.histograms)]
    else:
        out += [f"face_w {model.face_w}", f"face_h {model.face_h}",
                f"threshold {_real(model.threshold)}",
                f"samples {len(model.labels)} {model.k}", "mean", _row(model.mean), "basis"]
        out += [_row(b) for b in model.basis]
        out.append("projections")
        out += [f"{int(l)} {_row(p)}".rstrip() for l, p in zip(model.labels, model.projections)]
    out.append("end")
    return "\n".join(out) + "\n"


def save_model(model, path):
    """Write ``model`` as versioned line-oriented text.

    Header ``FACEREC 1 <kind>``, then named scalar fields, then numeric
    blocks. Reals use the shortest repr that reads back bit-exactly.
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_model(model))


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.i = 0

    def next(self, what):
        if self.i >= len(self.lines):
            raise CorruptModel(self.i + 1, f"file ends before {what}")
        self.i += 1
        return self.lines[self.i - 1].split()

    def field(self, name, conv, n=1):
        tok = self.next(name)
        if len(tok) != n + 1 or tok[0] != name:
            raise CorruptModel(self.i, f"expected '{name}' field")
        try:
            vals = [conv(t) for t in tok[1:]]
        except ValueError:
            raise CorruptModel(self.i, f"bad value for '{name}'") from None
        return vals[0] if n == 1 else vals

    def marker(self, name):
        tok = self.next(name)
        if tok != [name]:
            raise CorruptModel(self.i, f"expected '{name}'")

    def reals(self, what, n, labelled=False):
        tok = self.next(what)
        if len(tok) != n + labelled:
            raise CorruptModel(self.i, f"expected {n + labelled} numbers in {what}, got {len(tok)}")
        try:
            vals = [float(t) for t in tok[labelled:]]
            label = int(tok[0]) if labelled else None
        except ValueError:
            raise CorruptModel(self.i, f"non-numeric entry in {what}") from None
        if not all(math.isfinite(v) for v in vals):
            raise CorruptModel(self.i, f"non-finite entry in {what}")
        return (label, vals) if labelled else vals


def _threshold(t):
    v = float(t)
    if math.isnan(v) or v < 0:
        raise ValueError(t)
    return v


def loads_model(text):
    """Inverse of :func:`dumps_model`."""
    rd = _Lines(text)
    head = rd.next("header")
    if len(head) != 3 or head[0] != "FACEREC":
        raise CorruptModel(1, "missing 'FACEREC <version> <kind>' header")
    if head[1] != str(FORMAT_VERSION):
        raise FormatVersionMismatch(f"model format version {head[1]!r}; this reader understands {FORMAT_VERSION}")
    kind = head[2]
    if kind not in ALGORITHMS:
        raise CorruptModel(1, f"unknown model kind {kind!r}")
    if kind == "lbph":
        radius = rd.field("radius", int)
        neighbors = rd.field("neighbors", int)
        gx, gy = rd.field("grid_x", int), rd.field("grid_y", int)
        interp = rd.field("interpolate", int)
        threshold = rd.field("threshold", _threshold)
        n, length = rd.field("samples", int, 2)
        if radius < 1 or not 1 <= neighbors <= 16 or gx < 1 or gy < 1 or n < 1 \
                or length != gx * gy * (1 << neighbors) or interp not in (0, 1):
            raise CorruptModel(rd.i, "inconsistent LBPH parameters")
        rd.marker("histograms")
        rows = [rd.reals("histograms", length, labelled=True) for _ in range(n)]
        rd.marker("end")
        return LBPHModel(radius, neighbors, gx, gy, np.array([r for _, r in rows]).reshape(n, length),
                         np.array([l for l, _ in rows]), threshold, bool(interp))
    w, h = rd.field("face_w", int), rd.field("face_h", int)
    threshold = rd.field("threshold", _threshold)
    n, k = rd.field("samples", int, 2)
    if w < 1 or h < 1 or n < 1 or k < 0:
        raise CorruptModel(rd.i, "inconsistent model dimensions")
    rd.marker("mean")
    mean = np.array(rd.reals("mean", w * h))
    rd.marker("basis")
    basis = np.array([rd.reals("basis", w * h) for _ in range(k)]).reshape(k, w * h)
    rd.marker("projections")
    rows = [rd.reals("projections", k, labelled=True) for _ in range(n)]
    rd.marker("end")
    cls = EigenModel if kind == "eigen" else FisherModel
    return cls(w, h, mean, basis, np.array([r for _, r in rows]).reshape(n, k),
               np.array([l for l, _ in rows]), threshold)


def load_model(path):
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        return loads_model(fh.read())
