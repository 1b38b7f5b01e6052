from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geofm_bench.errors import EmptyEvaluationError, MissingBaselineError, RatioDomainError, ShapeError
from geofm_bench.metrics import (
    ConfusionMatrix,
    accumulate,
    efficiency_report,
    segmentation_metrics,
    transfer_report,
)
from oracles import confusion_by_loop, metrics_by_loop

masks = st.integers(1, 12).flatmap(
    lambda n: st.tuples(arrays(np.uint8, (n, n), elements=st.integers(0, 1)),
                        arrays(np.uint8, (n, n), elements=st.integers(0, 1))))


def test_confusion_counts_match_loop():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h, w = rng.integers(1, 20, size=2)
        p, t = rng.integers(0, 2, (h, w)), rng.integers(0, 2, (h, w))
        assert ConfusionMatrix.from_masks(p, t).as_tuple() == confusion_by_loop(p, t)


@given(masks)
def test_metrics_match_oracle(pair):
    pred, true = pair
    got = segmentation_metrics(ConfusionMatrix.from_masks(pred, true)).to_dict()
    want = metrics_by_loop(pred, true)
    for key, value in want.items():
        assert got[key] == pytest.approx(value, abs=1e-12), key


@settings(max_examples=50)
@given(st.lists(masks, min_size=1, max_size=5))
def test_global_matrix_is_sum_of_tiles(pairs):
    total = ConfusionMatrix()
    for p, t in pairs:
        total = accumulate(total, p, t)
    flat_p = np.concatenate([p.ravel() for p, _ in pairs])
    flat_t = np.concatenate([t.ravel() for _, t in pairs])
    assert total == ConfusionMatrix.from_masks(flat_p, flat_t)


@given(masks)
def test_metric_ranges(pair):
    m = segmentation_metrics(ConfusionMatrix.from_masks(*pair))
    for v in m.to_dict().values():
        assert 0.0 <= v <= 1.0


def test_perfect_prediction():
    t = np.array([[0, 1], [1, 0]])
    m = segmentation_metrics(ConfusionMatrix.from_masks(t, t))
    assert m.miou == m.f1 == m.precision == m.recall == m.macc == 1.0


def test_all_background_prediction_zero_division_rules():
    t = np.array([[0, 1], [0, 0]])
    m = segmentation_metrics(ConfusionMatrix.from_masks(np.zeros_like(t), t))
    assert (m.precision, m.recall, m.f1, m.iou_ls) == (0.0, 0.0, 0.0, 0.0)
    assert m.iou_bg == pytest.approx(3 / 4)
    assert m.macc == pytest.approx(3 / 4)


def test_absent_class_never_predicted_scores_full_iou():
    t = np.zeros((3, 3), dtype=np.uint8)
    m = segmentation_metrics(ConfusionMatrix.from_masks(t, t))
    assert m.iou_ls == 1.0 and m.miou == 1.0
    assert m.f1 == 0.0


def test_shape_and_value_errors():
    with pytest.raises(ShapeError):
        ConfusionMatrix.from_masks(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        ConfusionMatrix.from_masks(np.full((2, 2), 2), np.zeros((2, 2)))
    with pytest.raises(EmptyEvaluationError):
        segmentation_metrics(ConfusionMatrix())


def test_macc_is_overall_pixel_accuracy():
    # 90 background correct, 10 landslide pixels with 5 found: pixel accuracy 0.95, class-mean 0.75
    t = np.zeros(100, dtype=np.uint8)
    t[:10] = 1
    p = np.zeros(100, dtype=np.uint8)
    p[:5] = 1
    m = segmentation_metrics(ConfusionMatrix.from_masks(p, t))
    assert m.macc == pytest.approx(0.95)
    assert m.mean_class_acc == pytest.approx(0.75)


# -- label efficiency ----------------------------------------------------------

def test_rpd_reproduces_reported_drop():
    rep = efficiency_report({100: 0.7041, 1.25: 0.6696})
    assert rep.rpd[1.25] == pytest.approx(0.0490, abs=1e-3)
    assert rep.rpd[100.0] == 0.0


def test_de_is_mean_retention_over_scarce_fractions():
    scores = {100: 0.80, 10: 0.76, 2.5: 0.72, 1.25: 0.64}
    rep = efficiency_report(scores)
    assert rep.de == pytest.approx((0.95 + 0.90 + 0.80) / 3)
    assert rep.de == pytest.approx(1 - np.mean([rep.rpd[k] for k in (10.0, 2.5, 1.25)]))


def test_de_from_quoted_retentions():
    rep = efficiency_report({100: 1.0, 10: 0.9787, 2.5: 0.9524, 1.25: 0.9510})
    assert rep.de == pytest.approx(0.9607, abs=1e-4)


def test_de_uses_available_scarce_fractions():
    rep = efficiency_report({100: 0.5, 10: 0.4})
    assert rep.de == pytest.approx(0.8)
    assert efficiency_report({100: 0.5}).de is None


def test_efficiency_errors():
    with pytest.raises(MissingBaselineError):
        efficiency_report({10: 0.5})
    with pytest.raises(RatioDomainError):
        efficiency_report({100: 0.0, 10: 0.1})


@given(st.floats(0.01, 1.0), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=3))
def test_rpd_in_unit_interval_when_scores_do_not_exceed_full_data(base, fracs):
    scores = {100.0: base}
    for k, v in zip((10.0, 2.5, 1.25), fracs):
        scores[k] = min(v, base)
    rep = efficiency_report(scores)
    assert all(0.0 <= r <= 1.0 for r in rep.rpd.values())
    assert 0.0 <= rep.de <= 1.0


# -- transfer --------------------------------------------------------------------

def test_site_ratio_reproduces_reported_value():
    rep = transfer_report(0.7118, 0.8603, 0.7075)
    assert rep.r_site == pytest.approx(1.2086, abs=1e-3)
    assert rep.r_ext == pytest.approx(0.7075 / 0.8603)
    assert rep.r_2hop == pytest.approx(0.7075 / 0.7118)


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0, 1))
def test_two_hop_ratio_factorizes(p_in, p_gen, p_ext):
    rep = transfer_report(p_in, p_gen, p_ext)
    assert rep.r_2hop == pytest.approx(rep.r_site * rep.r_ext, rel=1e-9, abs=1e-12)


def test_transfer_domain_errors():
    with pytest.raises(RatioDomainError):
        transfer_report(0.0, 0.5, 0.5)
    assert math.isnan(transfer_report(0.5, 0.0, 0.1).r_ext)
