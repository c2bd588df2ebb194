import shutil
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from facekit import data
from facekit.dataset import (crop, find_eyes, iou, largest_face, load_annotations,
                             match_detections, parse_annotations, prepare_training_data,
                             qa_and_align, scan_training_dirs)
from facekit.errors import AnnotationParseError, MissingRoot, NoFacesAnywhere
from facekit.imgcore import Rect, rotate_about, save_pgm

ASTRO_FACE = Rect(176, 66, 95, 95)


def _eye_dy(face, eye):
    eyes = find_eyes(face, Rect(0, 0, face.shape[1], face.shape[0]), eye)
    assert len(eyes) == 2
    (_, y1), (_, y2) = [(e.x + e.w / 2, e.y + e.h / 2) for e in eyes]
    return abs(y1 - y2)


# -- training folders --------------------------------------------------------------------------

def test_scan_training_dirs(tmp_path):
    for name in ("s2", "s1", "s007", "misc", "s0", "sx1"):
        (tmp_path / name).mkdir()
    save_pgm(np.zeros((4, 4), np.uint8), str(tmp_path / "s1" / "b.pgm"))
    save_pgm(np.zeros((4, 4), np.uint8), str(tmp_path / "s1" / "a.pgm"))
    (tmp_path / "s1" / "notes.txt").write_text("x")
    (tmp_path / "loose.pgm").write_bytes(b"")
    with pytest.warns(UserWarning) as rec:
        subjects = scan_training_dirs(str(tmp_path))
    assert [s.label for s in subjects] == [7, 1, 2]
    assert [p.rsplit("/", 1)[-1] for p in subjects[1].images] == ["a.pgm", "b.pgm"]
    assert len(rec) == 3
    with pytest.raises(MissingRoot):
        scan_training_dirs(str(tmp_path / "nope"))


def test_prepare_bundled_corpus(haar):
    faces, labels = prepare_training_data(data.path("recognition/train"), haar, target_size=(64, 64))
    assert len(faces) == len(labels) == 6
    assert labels == [1, 1, 1, 2, 2, 2]
    assert all(f.shape == (64, 64) for f in faces)


def test_prepare_skips_faceless_images(haar, tmp_path):
    root = tmp_path / "train"
    shutil.copytree(data.path("recognition/train"), root)
    save_pgm(np.full((80, 80), 128, np.uint8), str(root / "s2" / "0.pgm"))
    rejected = []
    with pytest.warns(UserWarning, match="no face"):
        faces, labels = prepare_training_data(str(root), haar, rejected=rejected)
    assert len(faces) == len(labels) == 6
    assert [r for _, r in rejected] == ["NoFace"]


def test_prepare_with_no_faces(lbp, tmp_path):
    (tmp_path / "s1").mkdir()
    save_pgm(np.zeros((30, 30), np.uint8), str(tmp_path / "s1" / "a.pgm"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(NoFacesAnywhere):
            prepare_training_data(str(tmp_path), lbp)


def test_largest_face_ties():
    assert largest_face([]) is None
    assert largest_face([(5, 9, 10, 10), (7, 2, 10, 10), (1, 2, 10, 10), (0, 0, 3, 3)]) == \
        Rect(1, 2, 10, 10)


# -- quality gate and alignment ----------------------------------------------------------------

def test_brightness_gate(eye):
    face = Rect(0, 0, 60, 60)
    assert qa_and_align(np.zeros((60, 60), np.uint8), face, eye).reason == "TooDark"
    assert qa_and_align(np.full((60, 60), 250, np.uint8), face, eye).reason == "TooBright"
    assert qa_and_align(np.full((60, 60), 128, np.uint8), face, eye).reason == "EyesNotFound"


def test_tilted_face_is_levelled(astronaut, eye):
    f = ASTRO_FACE
    tilted = rotate_about(astronaut, f.x + f.w / 2, f.y + f.h / 2, 10.0)
    al = qa_and_align(tilted, f, eye)
    assert al.reason == "" and abs(al.tilt) > 3
    assert al.face.shape == (f.h, f.w)
    assert al.face.mean() == pytest.approx(128, abs=0.5)
    assert _eye_dy(al.face, eye) <= 1.0


def test_alignment_is_nearly_idempotent(astronaut, eye):
    f = ASTRO_FACE
    first = qa_and_align(rotate_about(astronaut, f.x + f.w / 2, f.y + f.h / 2, 10.0), f, eye).face
    second = qa_and_align(first, Rect(0, 0, f.w, f.h), eye)
    assert second.reason == ""
    assert abs(_eye_dy(second.face, eye) - _eye_dy(first, eye)) <= 1.0


# -- annotations and scoring -------------------------------------------------------------------

def test_parse_annotations():
    anns = parse_annotations("# header\n\na.pgm 1 2 3 4\nb.pgm 0 0 5 5\na.pgm 5 6 7 8\n")
    assert [a.path for a in anns] == ["a.pgm", "b.pgm"]
    assert anns[0].rects == (Rect(1, 2, 3, 4), Rect(5, 6, 7, 8))


@pytest.mark.parametrize("text,line", [("a.pgm 1 2 3", 1), ("a.pgm 1 2 3 4\nb 1 2 x 4", 2),
                                       ("\n\na.pgm 1 2 0 4", 3), ("a.pgm -1 2 3 4", 1)])
def test_annotation_errors(text, line):
    with pytest.raises(AnnotationParseError) as ei:
        parse_annotations(text)
    assert ei.value.line == line


def test_bundled_annotations_resolve():
    anns = load_annotations(data.path("images/annotations.txt"))
    assert [len(a.rects) for a in anns] == [1, 1, 7]
    assert all(a.path.endswith(".pgm") and a.path.startswith("/") for a in anns)


def test_iou_examples():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(50 / 150)
    assert iou((0, 0, 10, 10), (10, 0, 10, 10)) == 0.0


def test_match_examples():
    truths = [Rect(100 * i, 0, 50, 50) for i in range(7)]
    assert match_detections(truths, truths)[:3] == (7, 0, 0)
    dets = truths[:5] + [Rect(0, 500, 40, 40), Rect(900, 900, 10, 10)]
    assert match_detections(dets, truths)[:3] == (5, 2, 2)
    assert match_detections([], truths)[:3] == (0, 0, 7)


def test_match_is_one_to_one():
    # two detections on one face: only the better one counts
    r = match_detections([(0, 0, 10, 10), (1, 0, 10, 10)], [(1, 0, 10, 10)])
    assert (r.tp, r.fp, r.fn) == (1, 1, 0) and r.pairs[0][0] == 1
    assert match_detections([(0, 0, 10, 10)], [(6, 0, 10, 10)], iou_min=0.5).tp == 0
    assert match_detections([(0, 0, 10, 10)], [(6, 0, 10, 10)], iou_min=0.2).tp == 1


boxes = st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 20),
                           st.integers(1, 20)), max_size=12)


@given(boxes, boxes, st.floats(0.1, 0.9))
def test_match_conserves_counts(dets, truths, t):
    r = match_detections(dets, truths, t)
    assert r.tp + r.fp == len(dets) and r.tp + r.fn == len(truths)
    assert all(v >= t for _, _, v in r.pairs)
    assert len({i for i, _, _ in r.pairs}) == len({j for _, j, _ in r.pairs}) == r.tp


def test_crop():
    img = np.arange(20).reshape(4, 5)
    np.testing.assert_array_equal(crop(img, Rect(1, 2, 3, 2)), [[11, 12, 13], [16, 17, 18]])
