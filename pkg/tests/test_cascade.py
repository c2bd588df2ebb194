import math
import xml.etree.ElementTree as ET

import pytest

from facekit import data
from facekit.cascade import (CascadeModel, HaarFeature, Stage, WeakClassifier, WeightedRect,
                             parse_cascade_xml, serialize_cascade_xml, validate)
from facekit.errors import BoundsViolation, UnsupportedCascade, XmlMalformed

from helpers import MINIMAL_CASCADE as MINIMAL, fuzz_cascades


def _file_oracle(name):
    """Counts read straight from the XML tree, independent of our parser."""
    root = ET.parse(data.path(name)).getroot()
    c = root.find("cascade")
    stages = c.find("stages").findall("_")
    return {
        "type": c.findtext("featureType").strip(),
        "w": int(c.findtext("width")), "h": int(c.findtext("height")),
        "stages": len(stages),
        "weak": sum(len(s.find("weakClassifiers").findall("_")) for s in stages),
        "features": len(c.find("features").findall("_")),
        "thresholds": [float(s.findtext("stageThreshold")) for s in stages],
    }


@pytest.mark.parametrize("name", [data.HAAR_FRONTALFACE, data.LBP_FRONTALFACE, data.HAAR_EYE])
def test_stock_cascades_match_file_counts(name):
    from facekit.cascade import load_cascade
    m = load_cascade(data.path(name))
    o = _file_oracle(name)
    assert (m.feature_type, m.window_w, m.window_h) == (o["type"], o["w"], o["h"])
    assert len(m.stages) == o["stages"] and m.n_weak == o["weak"] and len(m.features) == o["features"]
    assert [s.threshold for s in m.stages] == o["thresholds"]
    assert not [i for i in validate(m) if i.is_error]


def test_stock_windows(haar, lbp):
    assert (haar.window_w, haar.window_h) == (24, 24)
    assert (lbp.window_w, lbp.window_h) == (24, 24)
    for f in lbp.features:
        assert 3 * f.w + f.x <= 24 and 3 * f.h + f.y <= 24


def test_minimal_document():
    m = parse_cascade_xml(MINIMAL)
    assert len(m.stages) == 1 and m.n_weak == 1
    wc = m.stages[0].weak[0]
    assert (wc.feature_index, wc.threshold, wc.left, wc.right) == (0, 0.25, -1.0, 1.0)
    assert m.features[0].rects[1] == WeightedRect(0, 0, 4, 2, 2.0)
    assert m.var_norm


def _same(a, b):
    assert (a.feature_type, a.window_w, a.window_h, a.var_norm) == \
        (b.feature_type, b.window_w, b.window_h, b.var_norm)
    assert a.features == b.features
    assert len(a.stages) == len(b.stages)
    for sa, sb in zip(a.stages, b.stages):
        assert math.isclose(sa.threshold, sb.threshold, rel_tol=1e-9)
        for wa, wb in zip(sa.weak, sb.weak):
            assert wa.feature_index == wb.feature_index and wa.subset == wb.subset
            for u, v in ((wa.left, wb.left), (wa.right, wb.right), (wa.threshold, wb.threshold)):
                assert math.isclose(u, v, rel_tol=1e-9, abs_tol=1e-300)


@pytest.mark.parametrize("fixture", ["haar", "lbp", "eye"])
def test_roundtrip_stock(fixture, request):
    m = request.getfixturevalue(fixture)
    text = serialize_cascade_xml(m)
    again = parse_cascade_xml(text)
    _same(m, again)
    assert serialize_cascade_xml(again) == text


def test_roundtrip_minimal_and_varnorm_flag():
    m = parse_cascade_xml(MINIMAL)
    _same(m, parse_cascade_xml(serialize_cascade_xml(m)))
    off = CascadeModel("HAAR", m.window_w, m.window_h, m.stages, m.features, var_norm=False)
    assert "<varNorm>0</varNorm>" in serialize_cascade_xml(off)
    assert parse_cascade_xml(serialize_cascade_xml(off)).var_norm is False


def test_tilted_feature_roundtrip():
    doc = MINIMAL.replace("<height>4</height>", "<height>8</height>").replace(
        "<width>4</width>", "<width>8</width>").replace(
        "0 0 4 4 -1.</_>\n        <_>0 0 4 2 2.</_></rects>",
        "4 0 2 2 -1.</_>\n        <_>4 0 1 2 2.</_></rects>\n      <tilted>1</tilted>")
    m = parse_cascade_xml(doc)
    assert m.features[0].tilted
    assert parse_cascade_xml(serialize_cascade_xml(m)) == m
    with pytest.raises(BoundsViolation):
        parse_cascade_xml(doc.replace("4 0 2 2 -1.", "1 0 2 2 -1."))


@pytest.mark.parametrize("old,new,exc", [
    ("<stageType>BOOST", "<stageType>GAB", UnsupportedCascade),
    ("<featureType>HAAR", "<featureType>HOG", UnsupportedCascade),
    ("0 -1 0 0.25", "1 -1 0 0.25", UnsupportedCascade),  # a second node: depth > 1
    ("0 0 4 2 2.", "0 0 4 5 2.", BoundsViolation),
    ("<leafValues>-1. 1.", "<leafValues>-1.", XmlMalformed),
    ("</opencv_storage>", "", XmlMalformed),
    ("0 -1 0 0.25", "0 -1 3 0.25", XmlMalformed),
])
def test_parse_errors(old, new, exc):
    with pytest.raises(exc):
        parse_cascade_xml(MINIMAL.replace(old, new))


def test_xml_error_carries_line():
    with pytest.raises(XmlMalformed) as ei:
        parse_cascade_xml(MINIMAL.replace("<leafValues>-1. 1.", "<leafValues>-1."))
    assert ei.value.line > 1


def test_legacy_schema_rejected():
    doc = '<?xml version="1.0"?><opencv_storage><haar type_id="opencv-haar-classifier">' \
          '<size>24 24</size><stages></stages></haar></opencv_storage>'
    with pytest.raises(UnsupportedCascade):
        parse_cascade_xml(doc)


def test_validate_reports_problems():
    stage = Stage(0.0, (WeakClassifier(0, -1.0, 1.0, 0.0),))
    out = CascadeModel("HAAR", 4, 4, (stage,), (
        HaarFeature((WeightedRect(0, 0, 5, 4, -1.0), WeightedRect(0, 0, 2, 4, 2.0))),))
    assert any(i.code == "BoundsViolation" and i.index == 0 for i in validate(out))

    extra = HaarFeature((WeightedRect(0, 0, 4, 4, -1.0), WeightedRect(0, 0, 2, 4, 2.0)))
    model = CascadeModel("HAAR", 4, 4, (stage,), (extra, extra))
    issues = validate(model)
    assert not [i for i in issues if i.is_error]
    assert [i.index for i in issues if i.code == "Unreferenced"] == [1]

    skewed = HaarFeature((WeightedRect(0, 0, 4, 4, -1.0), WeightedRect(0, 0, 2, 4, 3.0)))
    codes = {i.code for i in validate(CascadeModel("HAAR", 4, 4, (stage,), (skewed,)))}
    assert "ZeroMean" in codes


def test_validate_never_mutates(haar):
    before = serialize_cascade_xml(haar)
    validate(haar)
    assert serialize_cascade_xml(haar) == before


def test_lbp_subset_bits():
    wc = WeakClassifier(0, 1.0, -1.0, subset=(1, 0, 0, 0, 0, 0, 0, -2**31))
    assert wc.subset_has(0) and not wc.subset_has(1) and wc.subset_has(255)


def test_fuzz_small():
    accepted, rejected = fuzz_cascades(1500, seed=1)
    assert accepted > 0 and rejected > 0
