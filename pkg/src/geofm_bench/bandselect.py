"""Rank spectral channels by mutual information with the landslide label."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.feature_selection import mutual_info_classif

from .datasets import BandConfig, Corpus
from .errors import DegenerateLabelError, SampleSizeError


@dataclass
class MISample:
    features: np.ndarray          # (N, B) raw channel values
    labels: np.ndarray            # (N,) in {0, 1}
    band_names: tuple[str, ...]
    seed: int = 0
    per_image: int = 0
    image_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.int64).ravel()
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (N, B) with one label per row")
        if self.features.shape[1] != len(self.band_names):
            raise ValueError("one band name per feature column is required")

    def __len__(self):
        return len(self.labels)


@dataclass
class MIReport:
    scores: dict[str, float]
    ranking: list[str]
    k_neighbors: int = 3
    seed: int = 0

    def to_json(self) -> dict:
        return {"scores": dict(self.scores), "ranking": list(self.ranking),
                "k_neighbors": self.k_neighbors, "seed": self.seed}

    @classmethod
    def from_json(cls, d) -> "MIReport":
        return cls(dict(d["scores"]), list(d["ranking"]), int(d["k_neighbors"]), int(d["seed"]))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return path


def sample_pixels(corpus: Corpus, split: str = "train", per_image: int = 4000, seed: int = 0,
                  max_images: int | None = None) -> MISample:
    """Uniform without-replacement pixel draws from every image of *split*, rows concatenated."""
    ids = corpus.split(split)
    if max_images is not None:
        ids = ids[:max_images]
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for patch in corpus.patches(ids):
        h, w, b = patch.image.shape
        if per_image > h * w:
            raise SampleSizeError(f"cannot draw {per_image} pixels from a {h}x{w} image")
        flat = rng.choice(h * w, size=per_image, replace=False)
        feats.append(patch.image.reshape(-1, b)[flat])
        labels.append(patch.mask.reshape(-1)[flat])
    return MISample(np.concatenate(feats), np.concatenate(labels), corpus.band_names, seed,
                    per_image, list(ids))


def mi_continuous_discrete(x: np.ndarray, y: np.ndarray, k: int = 3, seed: int = 0) -> float:
    """kNN estimate (nats) of I(X; Y) for a 1-D continuous X and discrete Y, clamped at 0."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    return float(mutual_info_classif(x, np.asarray(y).ravel(), discrete_features=False,
                                     n_neighbors=k, random_state=seed)[0])


def estimate_mi(sample: MISample, k_neighbors: int = 3, seed: int | None = None) -> MIReport:
    """Per-channel MI with the label; ranking by descending score, ties in manifest order."""
    labels = sample.labels
    if len(np.unique(labels)) < 2:
        raise DegenerateLabelError("mutual information needs both classes in the sample")
    seed = sample.seed if seed is None else seed
    # per-column std scaling plus 1e-10 tie-breaking jitter happen inside the estimator
    mi = mutual_info_classif(sample.features, labels, discrete_features=False,
                             n_neighbors=k_neighbors, random_state=seed)
    scores = {name: float(v) for name, v in zip(sample.band_names, mi)}
    order = sorted(range(len(sample.band_names)), key=lambda i: (-scores[sample.band_names[i]], i))
    return MIReport(scores, [sample.band_names[i] for i in order], k_neighbors, seed)


def top_k_config(report: MIReport, k: int = 6, name: str | None = None) -> BandConfig:
    if not 1 <= k <= len(report.ranking):
        raise ValueError(f"k must be in [1, {len(report.ranking)}], got {k}")
    return BandConfig(name or f"MI-{k}", tuple(report.ranking[:k]))


def select_band_configs(corpus: Corpus, seeds: Sequence[int] = (0, 1), k: int = 6, per_image: int = 4000,
                        k_neighbors: int = 3, max_images: int | None = None):
    """One MI ranking per seed; returns [(report, config)] named MI-6a, MI-6b, ..."""
    out = []
    for i, seed in enumerate(seeds):
        sample = sample_pixels(corpus, "train", per_image, seed, max_images)
        report = estimate_mi(sample, k_neighbors, seed)
        out.append((report, top_k_config(report, k, f"MI-{k}{chr(ord('a') + i)}")))
    return out
