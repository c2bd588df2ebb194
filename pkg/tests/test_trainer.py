import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facekit.cascade import parse_cascade_xml, serialize_cascade_xml, validate
from facekit.detector import build_tables, eval_window, make_context, scan_windows
from facekit.errors import DegenerateLabels, EmptyNegatives, EmptyPositives, TargetsUnreachable
from facekit.trainer import (FeatureSpec, TrainConfig, adaboost_select, enumerate_features,
                             enumerate_specs, feature_values, make_negative_scenes,
                             make_synthetic_corpus, make_synthetic_scene, stage_threshold,
                             strong_classify, train_cascade, train_stage, train_stump,
                             value_scale)

# y2 feature over rows 2..9: the band rows minus the rows above them
BAND_FEATURE = FeatureSpec(1, 0, 2, 19, 4)


@pytest.fixture(scope="module")
def small_cascade():
    pos, neg = make_synthetic_corpus(5, 80, 160)
    cfg = TrainConfig(max_stages=2, seed=3)
    log = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train_cascade(pos, neg, cfg, neg_pool=make_negative_scenes(7, 10), log=log)
    return model, log, (pos, neg, cfg)


# -- features ----------------------------------------------------------------------------------

def _count_oracle(w, h):
    # each prototype tiles a base block of (bw, bh) cells; count every scaled placement
    total = 0
    for bw, bh in ((2, 1), (1, 2), (3, 1), (1, 3), (2, 2)):
        for fw in range(bw, w + 1, bw):
            for fh in range(bh, h + 1, bh):
                total += (w - fw + 1) * (h - fh + 1)
    return total


@pytest.mark.parametrize("w,h,n", [(19, 19, 63960), (24, 24, 162336), (4, 4, 136), (7, 5, None)])
def test_feature_counts(w, h, n):
    got = len(enumerate_specs(w, h))
    assert got == _count_oracle(w, h)
    if n is not None:
        assert got == n


def test_features_are_zero_mean_and_inside():
    for f in enumerate_features(6, 5):
        assert sum(r.weight * r.w * r.h for r in f.rects) == 0
        assert all(r.x + r.w <= 6 and r.y + r.h <= 5 for r in f.rects)


def test_feature_values_match_brute_force(rng):
    windows = rng.integers(0, 256, (7, 6, 8)).astype(np.uint8)
    specs = enumerate_specs(8, 6)
    vals = feature_values(windows, specs, 8, 6)
    for i in rng.choice(len(specs), 60, replace=False):
        f = enumerate_features(8, 6)[i]
        for k, win in enumerate(windows.astype(np.int64)):
            want = sum(r.weight * win[r.y:r.y + r.h, r.x:r.x + r.w].sum() for r in f.rects)
            assert vals[i, k] == want


def test_small_window_rejected():
    with pytest.raises(ValueError):
        enumerate_specs(3, 8)
    with pytest.raises(ValueError):
        TrainConfig(train_w=3)
    with pytest.raises(ValueError):
        TrainConfig(stage_f_max=1.0)


# -- stumps and boosting -----------------------------------------------------------------------

def test_stump_examples():
    s = train_stump([1, 2, 3, 4], [-1, -1, 1, 1], np.ones(4))
    assert s.error == 0.0 and 2 < s.threshold <= 3 and s.polarity == -1
    assert train_stump([1, 2, 3, 4], [1, -1, 1, -1], np.ones(4)).error == pytest.approx(0.25)
    w = np.array([0.1, 0.2, 0.3, 0.4])
    assert train_stump([5, 5, 5, 5], [1, -1, -1, 1], w).error == pytest.approx(0.5)
    assert train_stump([5, 5, 5, 5], [1, -1, -1, -1], w).error == pytest.approx(0.1)
    with pytest.raises(DegenerateLabels):
        train_stump([1, 2], [1, 1], np.ones(2))


@settings(max_examples=60)
@given(st.lists(st.integers(-5, 5), min_size=2, max_size=12), st.data())
def test_stump_is_optimal(values, data):
    n = len(values)
    labels = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    if len(set(labels)) < 2:
        labels[0] = -labels[1]
    w = np.array(data.draw(st.lists(st.integers(1, 9), min_size=n, max_size=n)), float)
    w /= w.sum()
    v, y = np.array(values, float), np.array(labels)
    best = min(min(w[(v < t) != (y == 1)].sum(), w[(v >= t) != (y == 1)].sum())
               for t in np.concatenate([v, [v.max() + 1]]))
    s = train_stump(v, y, w)
    assert s.error == pytest.approx(best, abs=1e-12)
    assert 0.0 <= s.error <= 0.5 + 1e-12


def test_boosting_fixes_what_one_stump_cannot():
    values, labels = np.array([[1, 2, 3, 4]]), np.array([1, -1, -1, 1])
    assert train_stump(values[0], labels, np.ones(4)).error > 0
    rounds = adaboost_select(values, labels, 3)
    assert np.array_equal(strong_classify(rounds, values), labels == 1)


def test_separable_in_one_round():
    values = np.array([[3, 1, 4, 1], [0, 0, 9, 9]])
    rounds = adaboost_select(values, [-1, -1, 1, 1], 1)
    assert rounds[0].feature_index == 1
    assert np.array_equal(strong_classify(rounds, values), [False, False, True, True])


def _random_problem(seed, n_feat=8, n=30):
    r = np.random.default_rng(seed)
    values = r.integers(-20, 20, (n_feat, n))
    labels = np.where(r.random(n) < 0.5, 1, -1)
    labels[:2] = [1, -1]
    return values, labels


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 15))
def test_weights_stay_normalised(seed, rounds):
    values, labels = _random_problem(seed)
    trace = []
    adaboost_select(values, labels, rounds, trace=trace)
    assert len(trace) == rounds
    for w in trace:
        assert abs(w.sum() - 1.0) <= 1e-12 and np.all(w > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_training_error_within_boosting_bound(seed):
    # weighted training error of the strong classifier never exceeds the
    # product of the per-round normalisers 2*sqrt(eps*(1-eps))
    values, labels = _random_problem(seed)
    is_pos = labels == 1
    d0 = np.where(is_pos, 0.5 / is_pos.sum(), 0.5 / (~is_pos).sum())
    rounds = adaboost_select(values, labels, 12)
    bound = 1.0
    for k, r in enumerate(rounds, 1):
        eps = min(max(r.stump.error, 1e-10), 1 - 1e-10)
        bound *= 2 * math.sqrt(eps * (1 - eps))
        err = d0[strong_classify(rounds[:k], values) != is_pos].sum()
        assert err <= bound + 1e-12


def test_boosting_is_deterministic():
    values, labels = _random_problem(9)
    a = adaboost_select(values, labels, 6)
    assert a == adaboost_select(values, labels, 6)
    with pytest.raises(ValueError):
        adaboost_select(values, labels, 0)


def test_ties_go_to_lowest_feature():
    row = np.array([1, 2, 3, 4])
    rounds = adaboost_select(np.stack([row, row, row]), [-1, -1, 1, 1], 1)
    assert rounds[0].feature_index == 0


# -- stages --------------------------------------------------------------------------------------

def test_stage_threshold_keeps_detection_rate(rng):
    sums = rng.normal(size=200)
    for d in (0.5, 0.9, 0.995, 1.0):
        t = stage_threshold(sums, d)
        assert np.mean(sums >= t - 1e-5) >= d


def test_stage_on_one_feature_problem():
    pos, neg = make_synthetic_corpus(1, 60, 120)
    specs = [BAND_FEATURE, FeatureSpec(0, 0, 0, 2, 2)]
    stage, stats = train_stage(feature_values(pos, specs, 19, 19),
                               feature_values(neg, specs, 19, 19), TrainConfig())
    assert stats.weak == 1 and stage.weak[0].feature_index == 0
    assert stats.false_positive_rate == 0.0 and stats.detection_rate == 1.0


def test_stage_targets_on_corpus():
    pos, neg = make_synthetic_corpus(2, 150, 300)
    specs = enumerate_specs(19, 19)[::7]
    stage, stats = train_stage(feature_values(pos, specs, 19, 19),
                               feature_values(neg, specs, 19, 19), TrainConfig())
    assert stats.false_positive_rate <= 0.5 and stats.detection_rate >= 0.995


def test_stage_gives_up_with_warning():
    pos, _ = make_synthetic_corpus(3, 40, 1)
    specs = [BAND_FEATURE]
    vals = feature_values(pos, specs, 19, 19)
    cfg = TrainConfig(max_weak_per_stage=2)
    with pytest.warns(TargetsUnreachable):
        _, stats = train_stage(vals, vals.copy(), cfg)
    assert stats.weak == 2
    with pytest.raises(EmptyNegatives):
        train_stage(vals, vals[:, :0], cfg)


# -- synthetic data ------------------------------------------------------------------------------

def test_corpus_is_deterministic_and_banded():
    a = make_synthetic_corpus(42, 30, 40)
    b = make_synthetic_corpus(42, 30, 40)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    pos = a[0].astype(float)
    band = pos[:, 6:10].mean(axis=(1, 2))
    rest = np.concatenate([pos[:, :6], pos[:, 10:]], axis=1).mean(axis=(1, 2))
    assert np.all(band < rest)


def test_one_feature_separates_corpus():
    pos, neg = make_synthetic_corpus(42, 300, 600)
    v = feature_values(np.concatenate([pos, neg]), [BAND_FEATURE], 19, 19)[0]
    correct = np.concatenate([v[:300] < -5000, v[300:] >= -5000])
    assert correct.mean() >= 0.99


def test_face_pattern_and_scenes():
    pos, neg = make_synthetic_corpus(4, 20, 20, pattern="face")
    assert pos.shape == (20, 19, 19) and neg.shape == (20, 19, 19)
    img, truths = make_synthetic_scene(5, 6, pattern="face")
    assert img.shape == (120, 160) and len(truths) == 6
    for t in truths:
        assert t.w == t.h == 19 and t.x + t.w <= 160 and t.y + t.h <= 120
    with pytest.raises(ValueError):
        make_synthetic_corpus(1, 2, 2, pattern="zebra")


# -- cascades ------------------------------------------------------------------------------------

def test_cascade_structure(small_cascade):
    model, log, _ = small_cascade
    assert 1 <= len(model.stages) <= 2 and not model.var_norm
    assert not [i for i in validate(model) if i.is_error]
    for entry in log:
        assert entry["false_positive_rate"] <= 0.5 and entry["detection_rate"] >= 0.995


def test_cascade_is_bit_reproducible(small_cascade):
    model, _, (pos, neg, cfg) = small_cascade
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        again = train_cascade(pos, neg, cfg, neg_pool=make_negative_scenes(7, 10))
    assert serialize_cascade_xml(again) == serialize_cascade_xml(model)


def test_serialized_cascade_detects_the_same(small_cascade, rng):
    model, _, (pos, neg, _) = small_cascade
    back = parse_cascade_xml(serialize_cascade_xml(model))
    windows = np.concatenate([pos[:10], neg[:10]])
    for win in windows:
        a = eval_window(model, make_context(model, build_tables(win), 0, 0))
        b = eval_window(back, make_context(back, build_tables(win), 0, 0))
        assert a == b
    scene = make_negative_scenes(99, 1)[0]
    assert [x.tolist() for x in scan_windows(model, scene, 1)[:2]] == \
        [x.tolist() for x in scan_windows(back, scene, 1)[:2]]


def test_single_stage_and_errors():
    pos, neg = make_synthetic_corpus(6, 40, 80)
    m = train_cascade(pos, neg, TrainConfig(max_stages=1))
    assert len(m.stages) == 1
    with pytest.raises(EmptyPositives):
        train_cascade([], neg, TrainConfig())
    with pytest.raises(EmptyNegatives):
        train_cascade(pos, [], TrainConfig())


def test_thresholds_follow_detector_scale():
    # stump thresholds are written in detector units: raw sums times 1/area of the inset window
    assert value_scale(19, 19) == pytest.approx(1 / 17 ** 2)
