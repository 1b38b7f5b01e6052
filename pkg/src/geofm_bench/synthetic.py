"""Synthetic landslide-like corpora for desk-scale runs and tests.

Masks are unions of random ellipses (rare positive class, some empty tiles).
Channels are spatially smooth random fields sharing a common latent component;
only the configured *signal* channels are shifted inside landslide pixels, so
every other channel is independent of the label.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .datasets import (
    LANDSLIDE4SENSE_BANDS,
    BandManifest,
    Patch,
    SplitManifest,
    load_corpus,
    write_patch,
)

# rough per-channel (offset, scale); DEM in metres, slope in degrees
_CHANNEL_SCALE = {"slope": (20.0, 8.0), "DEM": (1500.0, 300.0)}


@dataclass
class SyntheticSpec:
    size: int = 128
    signal_bands: tuple[str, ...] = ("B4", "B8", "slope")
    signal_strength: float = 1.5     # in units of the channel's texture std
    noise: float = 0.35
    smoothness: float = 3.0
    empty_fraction: float = 0.2
    max_blobs: int = 3
    blob_radius: tuple[float, float] = (0.06, 0.16)   # fraction of tile size
    domain_shift: float = 0.0        # additive offset in texture-std units

    @classmethod
    def pretraining(cls, **kw) -> "SyntheticSpec":
        """Scenes with structure at the token scale, so masked tokens are predictable from context."""
        return cls(**{"smoothness": 16.0, "noise": 0.05, **kw})


def blob_mask(rng: np.random.Generator, size: int, spec: SyntheticSpec) -> np.ndarray:
    mask = np.zeros((size, size), dtype=np.uint8)
    if rng.random() < spec.empty_fraction:
        return mask
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(rng.integers(1, spec.max_blobs + 1)):
        cy, cx = rng.uniform(0, size, size=2)
        ry, rx = rng.uniform(*spec.blob_radius, size=2) * size
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        mask[(u / rx) ** 2 + (v / ry) ** 2 <= 1.0] = 1
    return mask


def synthetic_patch(rng: np.random.Generator, band_names, spec: SyntheticSpec, pid="p"):
    size = spec.size
    mask = blob_mask(rng, size, spec)
    latent = gaussian_filter(rng.standard_normal((size, size)), spec.smoothness, mode="wrap")
    latent /= latent.std() + 1e-12
    image = np.empty((size, size, len(band_names)), dtype=np.float32)
    soft = gaussian_filter(mask.astype(np.float64), 1.0)
    for b, name in enumerate(band_names):
        own = gaussian_filter(rng.standard_normal((size, size)), spec.smoothness, mode="wrap")
        own /= own.std() + 1e-12
        field = 0.6 * latent + 0.8 * own + spec.noise * rng.standard_normal((size, size))
        field += spec.domain_shift
        if name in spec.signal_bands:
            sign = -1.0 if name == "B8" else 1.0   # vegetation loss lowers NIR
            field += sign * spec.signal_strength * soft
        offset, scale = _CHANNEL_SCALE.get(name, (0.1 + 0.02 * b, 0.03))
        image[..., b] = offset + scale * field
    return Patch(image, mask, pid, bands=tuple(band_names))


def synthetic_arrays(n: int, seed: int = 0, spec: SyntheticSpec | None = None,
                     band_names=None):
    """Return (images N x H x W x B, masks N x H x W) without touching disk."""
    spec = spec or SyntheticSpec()
    band_names = tuple(band_names or (n for n, _, _ in LANDSLIDE4SENSE_BANDS))
    rng = np.random.default_rng(seed)
    patches = [synthetic_patch(rng, band_names, spec) for _ in range(n)]
    return np.stack([p.image for p in patches]), np.stack([p.mask for p in patches])


def make_synthetic_corpus(root, splits: dict[str, int] | None = None, seed: int = 0,
                          spec: SyntheticSpec | None = None, corpus_id: str | None = None,
                          split_specs: dict[str, SyntheticSpec] | None = None, fmt: str = "h5"):
    """Write a 14-channel Landslide4Sense-shaped corpus to *root* and open it.

    *split_specs* lets a split use different generator settings (e.g. a
    ``domain_shift`` for generalizability targets).
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    spec = spec or SyntheticSpec()
    splits = splits or {"train": 32, "val": 8, "test": 8}
    manifest = BandManifest.landslide4sense()
    rng = np.random.default_rng(seed)
    ids: dict[str, list[str]] = {}
    for split, count in splits.items():
        s = (split_specs or {}).get(split, spec)
        ids[split] = []
        for i in range(count):
            pid = f"{split}_{i:05d}"
            patch = synthetic_patch(rng, manifest.names, s, pid)
            patch.site = f"site{i % 4}"
            write_patch(root, patch, fmt)
            ids[split].append(pid)
    manifest.save(root / "bands.json")
    sm = SplitManifest(ids, corpus_id or root.name)
    sm.save(root / "splits.json")
    return load_corpus(root)
