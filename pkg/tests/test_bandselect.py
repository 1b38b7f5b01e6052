from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geofm_bench.bandselect import (
    MIReport,
    MISample,
    estimate_mi,
    mi_continuous_discrete,
    sample_pixels,
    select_band_configs,
    top_k_config,
)
from geofm_bench.errors import DegenerateLabelError, SampleSizeError
from oracles import plugin_mi


def test_exhaustive_sampling_visits_every_pixel_once(tiny_corpus):
    sample = sample_pixels(tiny_corpus, per_image=32 * 32, seed=0, max_images=2)
    assert len(sample) == 2 * 32 * 32
    for i, pid in enumerate(tiny_corpus.split("train")[:2]):
        rows = sample.features[i * 1024:(i + 1) * 1024]
        pixels = tiny_corpus.get(pid).image.reshape(-1, 14).astype(np.float64)
        np.testing.assert_array_equal(np.unique(rows, axis=0), np.unique(pixels, axis=0))


def test_sampling_size_determinism_and_bounds(tiny_corpus):
    a = sample_pixels(tiny_corpus, per_image=100, seed=5)
    b = sample_pixels(tiny_corpus, per_image=100, seed=5)
    assert len(a) == 100 * len(tiny_corpus.split("train"))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(sample_pixels(tiny_corpus, per_image=100, seed=6).features, a.features)
    with pytest.raises(SampleSizeError):
        sample_pixels(tiny_corpus, per_image=32 * 32 + 1)


def _sample(columns, labels, names=None):
    feats = np.column_stack(columns)
    return MISample(feats, labels, tuple(names or (f"c{i}" for i in range(feats.shape[1]))))


def test_independent_channel_scores_near_zero():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 20_000)
    rep = estimate_mi(_sample([rng.standard_normal(20_000)], y))
    assert 0.0 <= rep.scores["c0"] <= 0.01


def test_label_copy_scores_entropy_of_balanced_label():
    y = np.repeat([0, 1], 5000)
    rep = estimate_mi(_sample([y.astype(float)], y), seed=0)
    assert rep.scores["c0"] == pytest.approx(np.log(2), abs=0.02)


def test_planted_channel_ranks_first_and_matches_plugin():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 20_000)
    planted = y + rng.normal(0, 0.05, 20_000)
    noise = rng.standard_normal(20_000)
    rep = estimate_mi(_sample([noise, planted], y, ("noise", "planted")), seed=1)
    assert rep.ranking == ["planted", "noise"]
    assert abs(rep.scores["planted"] - plugin_mi(planted, y)) <= 0.05
    assert top_k_config(rep, 1).channels == ("planted",)


def test_partial_signal_agrees_with_plugin():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 2, 20_000)
    x = 0.8 * y + rng.standard_normal(20_000)
    assert abs(mi_continuous_discrete(x, y, 3) - plugin_mi(x, y)) <= 0.05


def test_single_class_is_rejected():
    with pytest.raises(DegenerateLabelError):
        estimate_mi(_sample([np.arange(10.0)], np.zeros(10, int)))


def test_ties_rank_in_manifest_order():
    y = np.repeat([0, 1], 50)
    const = np.zeros(100)
    rep = estimate_mi(_sample([const, const, const], y, ("b", "a", "c")))
    assert rep.ranking == ["b", "a", "c"]


def test_permuting_rows_keeps_scores():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 2, 3000)
    x = np.column_stack([y + rng.normal(0, 1, 3000), rng.standard_normal(3000)])
    perm = rng.permutation(3000)
    a = estimate_mi(MISample(x, y, ("s", "n")), seed=0)
    b = estimate_mi(MISample(x[perm], y[perm], ("s", "n")), seed=0)
    for k in a.scores:
        assert a.scores[k] == pytest.approx(b.scores[k], abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_scores_are_nonnegative(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 400)
    rep = estimate_mi(_sample([rng.standard_normal(400), rng.uniform(size=400)], y), seed=seed)
    assert all(v >= 0 for v in rep.scores.values())
    assert sorted(rep.ranking) == ["c0", "c1"]


def test_top_k_full_and_report_roundtrip(tmp_path):
    rep = MIReport({"a": 0.1, "b": 0.3, "c": 0.2}, ["b", "c", "a"], 3, 7)
    assert top_k_config(rep, 3).channels == ("b", "c", "a")
    with pytest.raises(ValueError):
        top_k_config(rep, 4)
    path = rep.save(tmp_path / "mi.json")
    assert set(json.loads(path.read_text())) == {"scores", "ranking", "k_neighbors", "seed"}


def test_select_band_configs_prefers_signal_channels(tiny_corpus):
    out = select_band_configs(tiny_corpus, seeds=(0, 1), per_image=400)
    (rep_a, cfg_a), (_, cfg_b) = out
    assert cfg_a.name == "MI-6a" and cfg_b.name == "MI-6b"
    assert {"B4", "B8", "slope"} <= set(cfg_a.channels)
    assert rep_a.seed == 0
