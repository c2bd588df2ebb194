"""Grayscale rasters, PGM I/O, resampling and summed-area tables.

Images are plain numpy arrays: a gray image is ``uint8`` with shape
``(height, width)``, an RGB image is ``uint8`` with shape ``(height, width, 3)``.
Every function here returns a new array and never modifies its input.
"""
import math
import os
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import MalformedPgm, OutOfBounds, ZeroDimension

try:  # optional decoder for PNG/JPEG input
    from PIL import Image as _PILImage
    HAVE_PIL = True
except ImportError:  # pragma: no cover - depends on the environment
    _PILImage = None
    HAVE_PIL = False


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self):
        return self.w * self.h

    def scaled(self, s):
        return Rect(*(int(math.floor(v * s + 0.5)) for v in self))


def as_gray(img):
    """Validate and return ``img`` as a 2-D uint8 array."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D gray image, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ZeroDimension("image must be at least 1x1")
    if a.dtype != np.uint8:
        if a.size and (a.min() < 0 or a.max() > 255):
            raise ValueError("gray intensities must lie in [0, 255]")
        a = a.astype(np.uint8)
    return a


def _round_half_up(a):
    return np.floor(np.asarray(a, dtype=np.float64) + 0.5)


def _to_u8(a):
    return np.clip(_round_half_up(a), 0, 255).astype(np.uint8)


# -- PGM ------------------------------------------------------------------------

_WS = b" \t\r\n\v\f"


def parse_pgm(data):
    """Decode a P2 (ASCII) or P5 (binary) PGM from bytes."""
    data = bytes(data)
    if len(data) < 2:
        raise MalformedPgm("file too short for a magic number", 0)
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise MalformedPgm(f"bad magic {magic!r}, expected P2 or P5", 0)

    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise MalformedPgm("truncated header", start)
        token = data[start:pos]
        if not token.isdigit():
            raise MalformedPgm(f"non-numeric header field {token[:16]!r}", start)
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedPgm(f"bad dimensions {width}x{height}", pos)
    if not 1 <= maxval <= 255:
        raise MalformedPgm(f"maxval {maxval} outside 1..255", pos)

    n = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WS:
            raise MalformedPgm("missing whitespace after header", pos)
        pos += 1
        raster = data[pos:pos + n]
        if len(raster) < n:
            raise MalformedPgm(f"raster truncated: {len(raster)} of {n} bytes", pos + len(raster))
        pixels = np.frombuffer(raster, dtype=np.uint8)
    else:
        body = data[pos:]
        if b"#" in body:
            body = re.sub(rb"#[^\r\n]*", b" ", body)
        tokens = body.split()
        if len(tokens) < n:
            raise MalformedPgm(f"raster truncated: {len(tokens)} of {n} samples", len(data))
        try:
            pixels = np.array([int(t) for t in tokens[:n]], dtype=np.int64)
        except ValueError:
            raise MalformedPgm("non-numeric sample in ASCII raster", pos) from None
    if pixels.size and pixels.max() > maxval:
        raise MalformedPgm(f"sample exceeds maxval {maxval}", pos)
    return pixels.astype(np.uint8).reshape(height, width)


def load_pgm(path):
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(img):
    img = as_gray(img)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def save_pgm(img, path):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


IMAGE_EXTENSIONS = (".pgm", ".png", ".jpg", ".jpeg", ".bmp") if HAVE_PIL else (".pgm",)


def load_image(path):
    """Load any supported image as gray. PGM always works; others need Pillow."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        return load_pgm(path)
    if not HAVE_PIL:
        raise MalformedPgm(f"cannot decode {ext!r} without Pillow; convert to PGM", 0)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with _PILImage.open(path) as im:
        return to_gray(np.asarray(im.convert("RGB")))


# -- photometric / geometric --------------------------------------------------

def to_gray(img):
    """Luma 0.299 R + 0.587 G + 0.114 B, rounded half up."""
    rgb = np.asarray(img)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB image, got shape {rgb.shape}")
    c = rgb.astype(np.int64)
    # integer weights keep the rounding exact
    y = (299 * c[..., 0] + 587 * c[..., 1] + 114 * c[..., 2] + 500) // 1000
    return np.clip(y, 0, 255).astype(np.uint8)


def _bilinear_sample(img, sx, sy):
    """Sample ``img`` (float array) at clamped source coordinates."""
    h, w = img.shape
    sx = np.clip(sx, 0.0, w - 1)
    sy = np.clip(sy, 0.0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_bilinear(img, new_w, new_h):
    """Bilinear resize with half-pixel-centre source mapping."""
    img = as_gray(img)
    if new_w < 1 or new_h < 1:
        raise ZeroDimension(f"target size {new_w}x{new_h} must be at least 1x1")
    h, w = img.shape
    if (new_w, new_h) == (w, h):
        return img.copy()
    sx = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    sy = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    out = _bilinear_sample(img.astype(np.float64), sx[None, :], sy[:, None])
    return _to_u8(out)


def normalize_brightness(img, target_mean):
    """Shift every pixel so the mean moves to ``target_mean`` (clamped to [0, 255])."""
    if not 0 <= target_mean <= 255:
        raise ValueError("target_mean must lie in [0, 255]")
    img = as_gray(img)
    offset = int(_round_half_up(target_mean - img.mean()))
    return np.clip(img.astype(np.int64) + offset, 0, 255).astype(np.uint8)


def rotate_about(img, cx, cy, angle):
    """Rotate counter-clockwise (as displayed) by ``angle`` degrees about (cx, cy).

    Output keeps the input dimensions. Each output pixel is inverse-mapped into
    the source and bilinearly sampled; samples falling outside the source are 0.
    """
    if not math.isfinite(angle):
        raise ValueError("angle must be finite")
    img = as_gray(img)
    h, w = img.shape
    t = math.radians(angle)
    c, s = math.cos(t), math.sin(t)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    sx = cx + dx * c - dy * s
    sy = cy + dx * s + dy * c
    tol = 1e-9  # keeps exact border hits (e.g. quarter turns) inside despite cos/sin noise
    inside = (sx >= -tol) & (sx <= w - 1 + tol) & (sy >= -tol) & (sy <= h - 1 + tol)
    out = _bilinear_sample(img.astype(np.float64), sx, sy)
    return np.where(inside, _to_u8(out), 0).astype(np.uint8)


def _check_rect(r, w, h):
    if r.w < 1 or r.h < 1 or r.x < 0 or r.y < 0 or r.x + r.w > w or r.y + r.h > h:
        raise OutOfBounds(f"{tuple(r)} outside a {w}x{h} image")


def draw_rectangle(img, r, value=255):
    """Return a copy of ``img`` with the 1-pixel border of ``r`` set to ``value``."""
    img = as_gray(img)
    r = Rect(*r)
    _check_rect(r, img.shape[1], img.shape[0])
    out = img.copy()
    x2, y2 = r.x + r.w - 1, r.y + r.h - 1
    out[r.y, r.x:x2 + 1] = value
    out[y2, r.x:x2 + 1] = value
    out[r.y:y2 + 1, r.x] = value
    out[r.y:y2 + 1, x2] = value
    return out


# -- summed-area tables -------------------------------------------------------

@dataclass(frozen=True)
class IntegralImage:
    """Summed-area table with a zero border: ``sums`` has shape (h + 1, w + 1)."""

    sums: np.ndarray
    kind: str  # "plain" | "squared" | "rotated"

    @property
    def width(self):
        return self.sums.shape[1]

    @property
    def height(self):
        return self.sums.shape[0]

    @property
    def image_size(self):
        return self.sums.shape[1] - 1, self.sums.shape[0] - 1


def _prefix_table(values):
    h, w = values.shape
    sums = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(values, axis=0, dtype=np.int64), axis=1, out=sums[1:, 1:])
    return sums


def integral(img):
    """sums[y, x] = sum of pixels in columns [0, x) and rows [0, y)."""
    return IntegralImage(_prefix_table(as_gray(img).astype(np.int64)), "plain")


def integral_squared(img):
    v = as_gray(img).astype(np.int64)
    return IntegralImage(_prefix_table(v * v), "squared")


def integral_rotated(img):
    """45-degree summed-area table.

    ``sums[Y, X]`` holds the sum of pixels (px, py) with py < Y and
    ``|px - X + 1| <= Y - py - 1``: the upward-opening triangle whose apex sits
    at pixel (X - 1, Y - 1). In diagonal coordinates u = px + py, v = py - px
    that region is the quadrant ``u <= X + Y - 2, v <= Y - X``, so the table is
    a 2-D prefix sum taken along the diagonals.
    """
    img = as_gray(img).astype(np.int64)
    h, w = img.shape
    n = w + h - 1
    diag = np.zeros((n, n), dtype=np.int64)
    py, px = np.mgrid[0:h, 0:w]
    diag[(px + py).ravel(), (py - px + w - 1).ravel()] = img.ravel()
    np.cumsum(diag, axis=0, out=diag)
    np.cumsum(diag, axis=1, out=diag)

    Y, X = np.mgrid[0:h + 1, 0:w + 1]
    u = X + Y - 2
    v = Y - X + w - 1
    valid = (u >= 0) & (v >= 0)
    sums = np.where(valid, diag[np.clip(u, 0, n - 1), np.clip(v, 0, n - 1)], 0)
    return IntegralImage(sums.astype(np.int64), "rotated")


def tilted_in_bounds(r, w, h):
    """Whether tilted rect ``r`` (top corner x, y; extents w down-right, h down-left) fits."""
    return (r.w >= 1 and r.h >= 1 and r.y >= 0 and r.x - r.h >= 0
            and r.x + r.w <= w and r.y + r.w + r.h <= h)


def rect_sum(ii, r):
    """Exact pixel sum of ``r`` from four table lookups.

    For ``kind == "rotated"`` the rect is a 45-degree rotated rectangle whose
    top corner is (x, y), extending ``w`` pixels down-right and ``h`` down-left.
    """
    r = Rect(*r)
    s = ii.sums
    w, h = ii.image_size
    if ii.kind == "rotated":
        if not tilted_in_bounds(r, w, h):
            raise OutOfBounds(f"tilted rect {tuple(r)} outside a {w}x{h} image")
        return int(s[r.y, r.x] - s[r.y + r.h, r.x - r.h] - s[r.y + r.w, r.x + r.w]
                   + s[r.y + r.w + r.h, r.x + r.w - r.h])
    _check_rect(r, w, h)
    return int(s[r.y + r.h, r.x + r.w] - s[r.y, r.x + r.w] - s[r.y + r.h, r.x] + s[r.y, r.x])
