"""Boosted cascade models and the cascade XML format.

Only the "new" storage schema is understood: an ``<opencv_storage>`` root
holding a ``<cascade>`` with ``stageType`` BOOST, ``featureType`` HAAR or
LBP, window ``height``/``width``, ``stages`` of depth-1 weak classifiers and a
``features`` table. Parsing validates everything the detector relies on, so a
returned model can be evaluated without further checks.
"""
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple
from xml.parsers import expat

from .errors import BoundsViolation, UnsupportedCascade, XmlMalformed
from .imgcore import Rect, tilted_in_bounds

MAX_WEIGHT = 4096.0
ZERO_MEAN_TOL = 1e-6


@dataclass(frozen=True)
class WeightedRect:
    x: int
    y: int
    w: int
    h: int
    weight: float

    @property
    def rect(self):
        return Rect(self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple
    tilted: bool = False

    def weighted_area(self):
        return sum(r.weight * r.w * r.h for r in self.rects)


@dataclass(frozen=True)
class LbpFeature:
    """A 3x3 grid of ``w`` x ``h`` cells whose top-left cell sits at (x, y)."""

    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class WeakClassifier:
    """Decision stump.

    HAAR: ``left`` if feature value < ``threshold`` else ``right``.
    LBP: ``left`` if the code's bit is set in ``subset`` else ``right``.
    """

    feature_index: int
    left: float
    right: float
    threshold: float = 0.0
    subset: tuple = None  # 8 signed 32-bit words for LBP, None for HAAR

    # names used by the HAAR/LBP descriptions of the leaves
    leaf_lt = property(lambda self: self.left)
    leaf_ge = property(lambda self: self.right)
    leaf_in = property(lambda self: self.left)
    leaf_out = property(lambda self: self.right)

    def subset_has(self, code):
        word = self.subset[code >> 5] & 0xFFFFFFFF
        return bool((word >> (code & 31)) & 1)


@dataclass(frozen=True)
class Stage:
    threshold: float
    weak: tuple


@dataclass(frozen=True)
class CascadeModel:
    feature_type: str  # "HAAR" | "LBP"
    window_w: int
    window_h: int
    stages: tuple
    features: tuple
    # variance normalisation of HAAR values; trainer-made cascades switch it off
    var_norm: bool = True

    @property
    def n_weak(self):
        return sum(len(s.weak) for s in self.stages)

    @cached_property
    def compiled(self):
        """Flattened lookup tables used by the vectorised detector (built lazily)."""
        from .detector import compile_cascade
        return compile_cascade(self)


class Issue(NamedTuple):
    severity: str  # "error" | "warning"
    code: str
    message: str
    index: int = -1

    @property
    def is_error(self):
        return self.severity == "error"


# -- validation -------------------------------------------------------------------

def _finite(*vals):
    return all(math.isfinite(v) for v in vals)


def _feature_issues(i, f, model):
    W, H = model.window_w, model.window_h
    if model.feature_type == "HAAR":
        if not isinstance(f, HaarFeature):
            return [Issue("error", "FeatureType", f"feature {i} is not a HAAR feature", i)]
        out = []
        if not 2 <= len(f.rects) <= 3:
            out.append(Issue("error", "RectCount", f"feature {i} has {len(f.rects)} rects", i))
        for r in f.rects:
            if not _finite(r.weight) or abs(r.weight) > MAX_WEIGHT:
                out.append(Issue("error", "Weight", f"feature {i} weight {r.weight} out of range", i))
            if f.tilted:
                ok = tilted_in_bounds(r.rect, W, H)
            else:
                ok = (r.w >= 1 and r.h >= 1 and r.x >= 0 and r.y >= 0
                      and r.x + r.w <= W and r.y + r.h <= H)
            if not ok:
                out.append(Issue("error", "BoundsViolation",
                                 f"feature {i} rect {tuple(r.rect)} escapes the {W}x{H} window", i))
        if not out and abs(f.weighted_area()) > ZERO_MEAN_TOL:
            out.append(Issue("warning", "ZeroMean",
                             f"feature {i} weighted area {f.weighted_area():g} is not zero", i))
        return out
    if not isinstance(f, LbpFeature):
        return [Issue("error", "FeatureType", f"feature {i} is not an LBP feature", i)]
    if f.w < 1 or f.h < 1 or f.x < 0 or f.y < 0 or f.x + 3 * f.w > W or f.y + 3 * f.h > H:
        return [Issue("error", "BoundsViolation",
                      f"feature {i} cell grid {(f.x, f.y, f.w, f.h)} escapes the {W}x{H} window", i)]
    return []


def validate(model):
    """Check a model against every cascade invariant; never mutates it.

    Returns a list of :class:`Issue`. Entries with severity ``"error"`` mean
    the model must not be evaluated; warnings flag oddities such as non-zero-mean
    features, unreferenced features and stages that can never (or always) pass.
    """
    issues = []
    if model.feature_type not in ("HAAR", "LBP"):
        return [Issue("error", "FeatureType", f"unknown feature type {model.feature_type!r}")]
    if model.window_w < 1 or model.window_h < 1:
        issues.append(Issue("error", "Window", f"bad window {model.window_w}x{model.window_h}"))
    if not model.stages:
        issues.append(Issue("error", "NoStages", "cascade has no stages"))
    for i, f in enumerate(model.features):
        issues.extend(_feature_issues(i, f, model))

    used = set()
    n_feat = len(model.features)
    for si, stage in enumerate(model.stages):
        if not stage.weak:
            issues.append(Issue("error", "EmptyStage", f"stage {si} has no weak classifiers", si))
            continue
        if not _finite(stage.threshold):
            issues.append(Issue("error", "NonFinite", f"stage {si} threshold is not finite", si))
        lo = hi = 0.0
        for wc in stage.weak:
            if not 0 <= wc.feature_index < n_feat:
                issues.append(Issue("error", "FeatureIndex",
                                    f"stage {si} references missing feature {wc.feature_index}", si))
            else:
                used.add(wc.feature_index)
            if not _finite(wc.left, wc.right, wc.threshold):
                issues.append(Issue("error", "NonFinite", f"stage {si} has a non-finite leaf", si))
            is_lbp = wc.subset is not None
            if is_lbp != (model.feature_type == "LBP"):
                issues.append(Issue("error", "Payload",
                                    f"stage {si} weak classifier payload does not match "
                                    f"{model.feature_type}", si))
            elif is_lbp and (len(wc.subset) != 8
                             or any(not -2**31 <= v < 2**32 for v in wc.subset)):
                issues.append(Issue("error", "Subset", f"stage {si} has a malformed subset mask", si))
            lo += min(wc.left, wc.right)
            hi += max(wc.left, wc.right)
        if _finite(lo, hi, stage.threshold):
            if stage.threshold > hi:
                issues.append(Issue("warning", "NeverPasses",
                                    f"stage {si} threshold {stage.threshold:g} exceeds its "
                                    f"maximum sum {hi:g}", si))
            elif stage.threshold <= lo:
                issues.append(Issue("warning", "AlwaysPasses",
                                    f"stage {si} threshold {stage.threshold:g} is below its "
                                    f"minimum sum {lo:g}", si))
    for i in range(n_feat):
        if i not in used:
            issues.append(Issue("warning", "Unreferenced", f"feature {i} is never used", i))
    return issues


# -- parsing ----------------------------------------------------------------------

class _Node:
    __slots__ = ("tag", "attrs", "line", "children", "chunks")

    def __init__(self, tag, attrs, line):
        self.tag = tag
        self.attrs = attrs
        self.line = line
        self.children = []
        self.chunks = []

    @property
    def text(self):
        return "".join(self.chunks).strip()

    def child(self, tag, required=True):
        for c in self.children:
            if c.tag == tag:
                return c
        if required:
            raise XmlMalformed(self.line, f"<{self.tag}> is missing <{tag}>")
        return None

    def items(self):
        return [c for c in self.children if c.tag == "_"]


def _build_tree(data):
    parser = expat.ParserCreate()
    root = _Node("#document", {}, 1)
    stack = [root]

    def start(tag, attrs):
        node = _Node(tag, attrs, parser.CurrentLineNumber)
        stack[-1].children.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(text):
        stack[-1].chunks.append(text)

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise XmlMalformed(exc.lineno, expat.ErrorString(exc.code)) from None
    if not root.children:
        raise XmlMalformed(1, "document has no root element")
    return root.children[0]


def _numbers(node, kind, count=None):
    parts = node.text.split()
    if count is not None and len(parts) != count:
        raise XmlMalformed(node.line, f"<{node.tag}> needs {count} numbers, found {len(parts)}")
    out = []
    for p in parts:
        try:
            if kind is int:
                out.append(int(p))
            else:
                v = float(p)
                if not math.isfinite(v):
                    raise ValueError(p)
                out.append(v)
        except ValueError:
            raise XmlMalformed(node.line, f"<{node.tag}> has a bad number {p[:20]!r}") from None
    return out


def _scalar(node, kind):
    return _numbers(node, kind, 1)[0]


def _find_cascade(root):
    if root.attrs.get("type_id") == "opencv-cascade-classifier" or root.tag == "cascade":
        return root
    for c in root.children:
        tid = c.attrs.get("type_id", "")
        if tid == "opencv-haar-classifier":
            raise UnsupportedCascade("legacy tree-structured cascade schema is not supported")
        if tid == "opencv-cascade-classifier" or c.tag == "cascade":
            return c
    if any(c.child("stages", required=False) is not None and
           c.child("stageType", required=False) is None for c in root.children):
        raise UnsupportedCascade("legacy tree-structured cascade schema is not supported")
    raise XmlMalformed(root.line, "no <cascade> element found")


def _signed32(v, line):
    if not -2**31 <= v < 2**32:
        raise XmlMalformed(line, f"subset word {v} does not fit in 32 bits")
    return v - 2**32 if v >= 2**31 else v


def _parse_weak(node, ftype):
    inner = node.child("internalNodes")
    raw = inner.text.split()
    per_node = 4 if ftype == "HAAR" else 11
    if len(raw) != per_node:
        if len(raw) > per_node and len(raw) % per_node == 0:
            raise UnsupportedCascade(f"line {inner.line}: weak trees deeper than one node")
        raise XmlMalformed(inner.line, f"<internalNodes> needs {per_node} numbers, found {len(raw)}")
    if ftype == "HAAR":
        try:
            left, right, fidx = (int(v) for v in raw[:3])
        except ValueError:
            raise XmlMalformed(inner.line, "bad integer in <internalNodes>") from None
        threshold = float(raw[3]) if _is_float(raw[3]) else None
        if threshold is None:
            raise XmlMalformed(inner.line, f"bad threshold {raw[3][:20]!r}")
        subset = None
    else:
        try:
            ints = [int(v) for v in raw]
        except ValueError:
            raise XmlMalformed(inner.line, "bad integer in <internalNodes>") from None
        left, right, fidx = ints[:3]
        threshold = 0.0
        subset = tuple(_signed32(v, inner.line) for v in ints[3:])
    if (left, right) != (0, -1):
        raise UnsupportedCascade(f"line {inner.line}: only single-split stumps are supported")
    leaves = _numbers(node.child("leafValues"), float, 2)
    return WeakClassifier(fidx, leaves[0], leaves[1], threshold, subset)


def _is_float(s):
    try:
        return math.isfinite(float(s))
    except ValueError:
        return False


def _parse_feature(node, ftype):
    if ftype == "LBP":
        x, y, w, h = _numbers(node.child("rect"), int, 4)
        return LbpFeature(x, y, w, h)
    rects_node = node.child("rects")
    rects = []
    for item in rects_node.items():
        parts = item.text.split()
        if len(parts) != 5:
            raise XmlMalformed(item.line, f"a HAAR rect needs 5 numbers, found {len(parts)}")
        x, y, w, h = (_int_token(p, item.line) for p in parts[:4])
        if not _is_float(parts[4]):
            raise XmlMalformed(item.line, f"bad rect weight {parts[4][:20]!r}")
        weight = float(parts[4])
        rects.append(WeightedRect(x, y, w, h, weight))
    tilted_node = node.child("tilted", required=False)
    tilted = bool(_scalar(tilted_node, int)) if tilted_node is not None else False
    return HaarFeature(tuple(rects), tilted)


def _int_token(p, line):
    try:
        return int(p)
    except ValueError:
        pass
    if _is_float(p) and float(p).is_integer():
        return int(float(p))
    raise XmlMalformed(line, f"rect coordinate {p[:20]!r} is not an integer")


def parse_cascade_xml(text):
    """Parse a cascade document (``str`` or ``bytes``) into a validated model."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    root = _build_tree(text)
    node = _find_cascade(root)

    stage_type = node.child("stageType").text
    if stage_type != "BOOST":
        raise UnsupportedCascade(f"stageType {stage_type!r} is not BOOST")
    ftype = node.child("featureType").text
    if ftype not in ("HAAR", "LBP"):
        raise UnsupportedCascade(f"featureType {ftype!r} is not HAAR or LBP")
    height = _scalar(node.child("height"), int)
    width = _scalar(node.child("width"), int)
    if width < 1 or height < 1:
        raise XmlMalformed(node.line, f"bad window {width}x{height}")

    stages = []
    stages_node = node.child("stages")
    for item in stages_node.items():
        weak_nodes = item.child("weakClassifiers").items()
        weak = tuple(_parse_weak(w, ftype) for w in weak_nodes)
        if not weak:
            raise XmlMalformed(item.line, "stage has no weak classifiers")
        mwc = item.child("maxWeakCount", required=False)
        if mwc is not None and _scalar(mwc, int) != len(weak):
            raise XmlMalformed(mwc.line, f"maxWeakCount {mwc.text} but {len(weak)} weak classifiers")
        stages.append(Stage(_scalar(item.child("stageThreshold"), float), weak))
    if not stages:
        raise XmlMalformed(stages_node.line, "cascade has no stages")
    snum = node.child("stageNum", required=False)
    if snum is not None and _scalar(snum, int) != len(stages):
        raise XmlMalformed(snum.line, f"stageNum {snum.text} but {len(stages)} stages")

    features = tuple(_parse_feature(f, ftype) for f in node.child("features").items())
    vn = node.child("varNorm", required=False)
    var_norm = True if vn is None else bool(_scalar(vn, int))

    model = CascadeModel(ftype, width, height, tuple(stages), features, var_norm)
    for issue in validate(model):
        if not issue.is_error:
            continue
        if issue.code == "BoundsViolation":
            raise BoundsViolation(issue.index, issue.message)
        raise XmlMalformed(node.line, issue.message)
    return model


def load_cascade(path):
    with open(path, "rb") as fh:
        return parse_cascade_xml(fh.read())


# -- serialisation ----------------------------------------------------------------

def _f(v):
    return repr(float(v))


def serialize_cascade_xml(model):
    """Write ``model`` in the cascade storage schema; parsing it back is lossless."""
    out = ['<?xml version="1.0"?>', "<opencv_storage>",
           '<cascade type_id="opencv-cascade-classifier">',
           "  <stageType>BOOST</stageType>",
           f"  <featureType>{model.feature_type}</featureType>",
           f"  <height>{model.window_h}</height>",
           f"  <width>{model.window_w}</width>",
           "  <stageParams>",
           f"    <maxWeakCount>{max(len(s.weak) for s in model.stages)}</maxWeakCount></stageParams>",
           "  <featureParams>",
           f"    <maxCatCount>{256 if model.feature_type == 'LBP' else 0}</maxCatCount></featureParams>"]
    if not model.var_norm:
        out.append("  <varNorm>0</varNorm>")
    out.append(f"  <stageNum>{len(model.stages)}</stageNum>")
    out.append("  <stages>")
    for si, stage in enumerate(model.stages):
        out.append(f"    <!-- stage {si} -->")
        out.append("    <_>")
        out.append(f"      <maxWeakCount>{len(stage.weak)}</maxWeakCount>")
        out.append(f"      <stageThreshold>{_f(stage.threshold)}</stageThreshold>")
        out.append("      <weakClassifiers>")
        for wc in stage.weak:
            if wc.subset is None:
                nodes = f"0 -1 {wc.feature_index} {_f(wc.threshold)}"
            else:
                nodes = f"0 -1 {wc.feature_index} " + " ".join(str(v) for v in wc.subset)
            out.append("        <_>")
            out.append(f"          <internalNodes>{nodes}</internalNodes>")
            out.append(f"          <leafValues>{_f(wc.left)} {_f(wc.right)}</leafValues></_>")
        out.append("      </weakClassifiers></_>")
    out.append("  </stages>")
    out.append("  <features>")
    for f in model.features:
        out.append("    <_>")
        if isinstance(f, LbpFeature):
            out.append(f"      <rect>{f.x} {f.y} {f.w} {f.h}</rect></_>")
            continue
        out.append("      <rects>")
        for r in f.rects:
            out.append(f"        <_>{r.x} {r.y} {r.w} {r.h} {_f(r.weight)}</_>")
        out.append("      </rects>")
        out.append(f"      <tilted>{int(f.tilted)}</tilted></_>")
    out.append("  </features>")
    out.append("</cascade>")
    out.append("</opencv_storage>")
    return "\n".join(out) + "\n"
