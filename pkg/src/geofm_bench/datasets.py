"""Patch corpora: manifests, containers, standardization, augmentation and D_k subsets.

A corpus is a directory holding one container per patch plus two JSON manifests:
a band manifest (ordered channel descriptors) and a split manifest (patch ids per
split).  Images are stored H x W x B (channel last), masks H x W with values in {0, 1}.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import h5py
import numpy as np

from .errors import (
    BandManifestError,
    ChannelCountError,
    ChannelNotFound,
    CorpusSchemaError,
    EmptySplitError,
    FractionError,
    LabelDomainError,
    LeakageError,
    MissingPatch,
)

STD_EPSILON = 1e-6

# Landslide4Sense channel order: 12 Sentinel-2 bands, then ALOS PALSAR slope and DEM.
LANDSLIDE4SENSE_BANDS = (
    ("B1", 60, "coastal aerosol"),
    ("B2", 10, "blue"),
    ("B3", 10, "green"),
    ("B4", 10, "red"),
    ("B5", 20, "red edge 1"),
    ("B6", 20, "red edge 2"),
    ("B7", 20, "red edge 3"),
    ("B8", 10, "nir broad"),
    ("B9", 60, "water vapour"),
    ("B10", 60, "cirrus"),
    ("B11", 20, "swir 1"),
    ("B12", 20, "swir 2"),
    ("slope", 10, "terrain slope"),
    ("DEM", 10, "elevation"),
)

# Six-band interface of the pretrained encoder; B8 stands in for B8A.
HLS_BANDS = ("B2", "B3", "B4", "B8", "B11", "B12")


@dataclass(frozen=True)
class BandSpec:
    name: str
    resolution_m: float = 10.0
    role: str = ""


@dataclass(frozen=True)
class BandManifest:
    bands: tuple[BandSpec, ...]

    def __post_init__(self):
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise BandManifestError(f"duplicate band names in manifest: {names}")
        if not names:
            raise BandManifestError("band manifest is empty")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.bands)

    def __len__(self):
        return len(self.bands)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ChannelNotFound(f"channel {name!r} not in band manifest {list(self.names)}") from None

    @classmethod
    def landslide4sense(cls) -> "BandManifest":
        return cls(tuple(BandSpec(n, r, role) for n, r, role in LANDSLIDE4SENSE_BANDS))

    @classmethod
    def from_json(cls, data) -> "BandManifest":
        bands = []
        for entry in data:
            if isinstance(entry, str):
                bands.append(BandSpec(entry))
            else:
                bands.append(BandSpec(entry["name"], float(entry.get("resolution_m", 10.0)),
                                      entry.get("role", "")))
        return cls(tuple(bands))

    def to_json(self) -> list[dict]:
        return [{"name": b.name, "resolution_m": b.resolution_m, "role": b.role} for b in self.bands]

    @classmethod
    def load(cls, path) -> "BandManifest":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


@dataclass(frozen=True)
class BandConfig:
    """Named, ordered channel selection. Order is semantic."""

    name: str
    channels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise ChannelCountError(f"band config {self.name!r} selects no channels")
        if len(set(self.channels)) != len(self.channels):
            raise ChannelCountError(f"band config {self.name!r} repeats a channel")

    @property
    def b_in(self) -> int:
        return len(self.channels)

    @property
    def label(self) -> str:
        return f"{self.b_in}B"

    def validate(self, manifest: BandManifest) -> None:
        for c in self.channels:
            manifest.index(c)

    def to_json(self) -> dict:
        return {"name": self.name, "channels": list(self.channels)}

    @classmethod
    def from_json(cls, data) -> "BandConfig":
        return cls(data["name"], tuple(data["channels"]))


BAND_CONFIGS: dict[str, BandConfig] = {
    c.name: c
    for c in (
        BandConfig("Full-14B", tuple(n for n, _, _ in LANDSLIDE4SENSE_BANDS)),
        BandConfig("9B", HLS_BANDS + ("B5", "B6", "B7")),
        BandConfig("HLS-6B", HLS_BANDS),
        # a fixed permutation that moves every band off its usual position
        BandConfig("HLS-shuffled", ("B11", "B4", "B12", "B2", "B8", "B3")),
        BandConfig("MI-6a", ("B2", "B3", "B5", "B7", "B8", "B9")),
        BandConfig("MI-6b", ("B1", "B2", "B3", "B4", "B9", "DEM")),
        BandConfig("RGBN-4B", ("B2", "B3", "B4", "B8")),
    )
}


def resolve_band_config(spec: str, manifest: BandManifest | None = None) -> BandConfig:
    """Look up a preset by name, load a BandConfig JSON file, or parse a comma-separated channel list."""
    if spec in BAND_CONFIGS:
        cfg = BAND_CONFIGS[spec]
    elif spec.endswith(".json") and Path(spec).exists():
        cfg = BandConfig.from_json(json.loads(Path(spec).read_text()))
    else:
        channels = tuple(c.strip() for c in spec.split(",") if c.strip())
        cfg = BandConfig(f"custom-{len(channels)}B", channels)
    if manifest is not None:
        cfg.validate(manifest)
    return cfg


@dataclass
class SplitManifest:
    splits: dict[str, list[str]]
    corpus_id: str = ""

    def __post_init__(self):
        seen: dict[str, str] = {}
        for split, ids in self.splits.items():
            if len(set(ids)) != len(ids):
                raise CorpusSchemaError(f"split {split!r} lists an id twice")
            for pid in ids:
                if pid in seen:
                    raise CorpusSchemaError(
                        f"patch {pid!r} appears in both {seen[pid]!r} and {split!r}")
                seen[pid] = split

    def __getitem__(self, split: str) -> list[str]:
        return self.splits.get(split, [])

    def all_ids(self) -> list[str]:
        return sorted(pid for ids in self.splits.values() for pid in ids)

    def to_json(self) -> dict:
        out: dict = dict(self.splits)
        if self.corpus_id:
            out["corpus"] = self.corpus_id
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "SplitManifest":
        data = dict(data)
        corpus_id = data.pop("corpus", "")
        return cls({k: [str(i) for i in v] for k, v in data.items()}, corpus_id)

    @classmethod
    def load(cls, path) -> "SplitManifest":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


@dataclass
class Patch:
    image: np.ndarray          # H x W x B
    mask: np.ndarray           # H x W, {0, 1}
    id: str
    bands: tuple[str, ...] = ()
    site: str | None = None
    timestamp: str | None = None

    @property
    def shape(self):
        return self.image.shape


# -- containers ---------------------------------------------------------------

def write_patch(root, patch: Patch, fmt: str = "h5") -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if fmt == "h5":
        path = root / f"{patch.id}.h5"
        with h5py.File(path, "w") as f:
            f.create_dataset("img", data=np.asarray(patch.image, dtype=np.float32))
            f.create_dataset("mask", data=np.asarray(patch.mask, dtype=np.uint8))
            if patch.site is not None:
                f.attrs["site"] = patch.site
            if patch.timestamp is not None:
                f.attrs["timestamp"] = patch.timestamp
        return path
    if fmt == "bin":
        h, w, b = patch.image.shape
        sidecar = {"height": h, "width": w, "bands": b, "img_dtype": "float32", "mask_dtype": "uint8",
                   "site": patch.site, "timestamp": patch.timestamp}
        np.asarray(patch.image, dtype=np.float32).tofile(root / f"{patch.id}.img.bin")
        np.asarray(patch.mask, dtype=np.uint8).tofile(root / f"{patch.id}.mask.bin")
        path = root / f"{patch.id}.json"
        path.write_text(json.dumps(sidecar, indent=2) + "\n")
        return path
    raise ValueError(f"unknown container format {fmt!r}")


def _patch_path(root: Path, pid: str) -> Path | None:
    for candidate in (root / f"{pid}.h5", root / f"{pid}.json"):
        if candidate.exists():
            return candidate
    return None


def read_patch(path: Path, pid: str) -> Patch:
    if path.suffix == ".h5":
        with h5py.File(path, "r") as f:
            if "img" not in f or "mask" not in f:
                raise CorpusSchemaError(f"{path}: container must hold 'img' and 'mask'")
            image = np.asarray(f["img"], dtype=np.float32)
            mask = np.asarray(f["mask"])
            site = f.attrs.get("site")
            ts = f.attrs.get("timestamp")
        return Patch(image, mask, pid, site=_attr_str(site), timestamp=_attr_str(ts))
    meta = json.loads(path.read_text())
    h, w, b = meta["height"], meta["width"], meta["bands"]
    image = np.fromfile(path.with_name(f"{pid}.img.bin"), dtype=meta.get("img_dtype", "float32"))
    mask = np.fromfile(path.with_name(f"{pid}.mask.bin"), dtype=meta.get("mask_dtype", "uint8"))
    if image.size != h * w * b or mask.size != h * w:
        raise CorpusSchemaError(f"{path}: binary payload does not match sidecar shape {(h, w, b)}")
    return Patch(image.reshape(h, w, b).astype(np.float32), mask.reshape(h, w), pid,
                 site=meta.get("site"), timestamp=meta.get("timestamp"))


def _attr_str(v):
    if v is None:
        return None
    return v.decode() if isinstance(v, bytes) else str(v)


def check_patch(patch: Patch, n_bands: int) -> None:
    img, mask = patch.image, patch.mask
    if img.ndim != 3 or img.shape[2] != n_bands:
        raise CorpusSchemaError(
            f"patch {patch.id!r}: image shape {img.shape} does not match {n_bands}-band manifest")
    if mask.shape != img.shape[:2]:
        raise CorpusSchemaError(f"patch {patch.id!r}: mask shape {mask.shape} != image {img.shape[:2]}")
    values = np.unique(mask)
    if not np.isin(values, (0, 1)).all():
        raise LabelDomainError(patch.id, values.tolist())


class Corpus:
    """Handle on a patch directory; patches load lazily and are validated on read."""

    def __init__(self, root, band_manifest: BandManifest, split_manifest: SplitManifest,
                 corpus_id: str | None = None):
        self.root = Path(root)
        self.band_manifest = band_manifest
        self.split_manifest = split_manifest
        self.id = corpus_id or split_manifest.corpus_id or self.root.name
        self._paths: dict[str, Path] = {}

    def __repr__(self):
        sizes = {k: len(v) for k, v in self.split_manifest.splits.items()}
        return f"Corpus({self.id!r}, bands={len(self.band_manifest)}, splits={sizes})"

    @property
    def band_names(self) -> tuple[str, ...]:
        return self.band_manifest.names

    def split(self, name: str) -> list[str]:
        return list(self.split_manifest[name])

    def path(self, pid: str) -> Path:
        if pid not in self._paths:
            p = _patch_path(self.root, pid)
            if p is None:
                raise MissingPatch(pid, self.root / f"{pid}.h5")
            self._paths[pid] = p
        return self._paths[pid]

    def get(self, pid: str) -> Patch:
        patch = read_patch(self.path(pid), pid)
        patch.bands = self.band_names
        check_patch(patch, len(self.band_manifest))
        return patch

    def patches(self, ids: Iterable[str]):
        for pid in ids:
            yield self.get(pid)

    def load_arrays(self, ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Stack patches into (N, H, W, B) float32 images and (N, H, W) uint8 masks."""
        if not ids:
            raise EmptySplitError("no patch ids to load")
        patches = [self.get(pid) for pid in ids]
        images = np.stack([p.image for p in patches]).astype(np.float32, copy=False)
        masks = np.stack([p.mask for p in patches]).astype(np.uint8, copy=False)
        return images, masks

    def coverage(self, ids: Sequence[str]) -> np.ndarray:
        """Per-patch landslide pixel fraction."""
        return np.array([float(self.get(pid).mask.mean()) for pid in ids])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.band_manifest.to_json(), sort_keys=True).encode())
        h.update(json.dumps(self.split_manifest.splits, sort_keys=True).encode())
        for pid in self.split_manifest.all_ids():
            p = self.path(pid)
            h.update(f"{pid}:{p.name}:{p.stat().st_size}".encode())
        return h.hexdigest()[:16]


def load_corpus(root, band_manifest=None, split_manifest=None, n_validate: int = 32,
                corpus_id: str | None = None) -> Corpus:
    """Open a corpus directory and validate its manifests.

    Manifests default to ``bands.json`` and ``splits.json`` inside *root*.  Every id
    must resolve to a container; a deterministic sample of at least *n_validate*
    patches (or all of them) is read and checked for shape and label domain.
    """
    root = Path(root)
    if band_manifest is None:
        band_manifest = root / "bands.json"
    if split_manifest is None:
        split_manifest = root / "splits.json"
    if not isinstance(band_manifest, BandManifest):
        band_manifest = BandManifest.load(band_manifest)
    if not isinstance(split_manifest, SplitManifest):
        split_manifest = SplitManifest.load(split_manifest)

    corpus = Corpus(root, band_manifest, split_manifest, corpus_id)
    ids = split_manifest.all_ids()
    for pid in ids:
        corpus.path(pid)
    if ids:
        n = min(len(ids), max(n_validate, 0))
        picks = np.unique(np.linspace(0, len(ids) - 1, num=n).round().astype(int)) if n else []
        shapes = set()
        for i in picks:
            patch = corpus.get(ids[i])
            shapes.add(patch.image.shape)
        if len(shapes) > 1:
            raise CorpusSchemaError(f"inconsistent patch shapes in corpus: {sorted(shapes)}")
    return corpus


# -- standardization ----------------------------------------------------------

@dataclass
class ChannelStats:
    """Mergeable (count, sum, sum of squares) accumulator per channel."""

    count: int
    total: np.ndarray
    total_sq: np.ndarray

    @classmethod
    def empty(cls, n_channels: int) -> "ChannelStats":
        return cls(0, np.zeros(n_channels), np.zeros(n_channels))

    @classmethod
    def of(cls, images: np.ndarray) -> "ChannelStats":
        flat = np.asarray(images, dtype=np.float64).reshape(-1, images.shape[-1])
        return cls(flat.shape[0], flat.sum(axis=0), np.square(flat).sum(axis=0))

    def merge(self, other: "ChannelStats") -> "ChannelStats":
        return ChannelStats(self.count + other.count, self.total + other.total,
                            self.total_sq + other.total_sq)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    names: tuple[str, ...] = ()
    epsilon: float = STD_EPSILON
    fitted_on: tuple[str, str] = ("", "train")   # (corpus id, split)

    def __len__(self):
        return len(self.mean)

    @classmethod
    def from_stats(cls, stats: ChannelStats, epsilon=STD_EPSILON, **kw) -> "Standardizer":
        mean = stats.total / stats.count
        var = np.maximum(stats.total_sq / stats.count - mean ** 2, 0.0)
        std = np.sqrt(var)
        std = np.where(std < epsilon, epsilon, std)
        return cls(mean, std, epsilon=epsilon, **kw)

    def subset(self, names: Sequence[str]) -> "Standardizer":
        idx = [self._index(n) for n in names]
        return replace(self, mean=self.mean[idx], std=self.std[idx], names=tuple(names))

    def _index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ChannelNotFound(f"standardizer has no statistics for channel {name!r}") from None

    def apply(self, images: np.ndarray) -> np.ndarray:
        """Standardize a channel-last array of any leading shape."""
        if images.shape[-1] != len(self):
            raise ChannelCountError(
                f"array has {images.shape[-1]} channels, standardizer has {len(self)}")
        return ((images - self.mean) / self.std).astype(np.float32)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "names": list(self.names),
                "epsilon": self.epsilon, "fitted_on": list(self.fitted_on)}

    @classmethod
    def from_json(cls, d) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
                   tuple(d.get("names", ())), d.get("epsilon", STD_EPSILON),
                   tuple(d.get("fitted_on", ("", "train"))))


def fit_standardizer(corpus: Corpus, split: str = "train", *, allow_non_train: bool = False,
                     epsilon: float = STD_EPSILON, chunk: int = 64) -> Standardizer:
    """Per-channel mean/std over every pixel of *split*.

    Fitting on anything but the training split is refused unless
    *allow_non_train* is set explicitly.
    """
    if split != "train" and not allow_non_train:
        raise LeakageError(f"refusing to fit standardizer on split {split!r}; only 'train' is allowed")
    ids = corpus.split(split)
    if not ids:
        raise EmptySplitError(f"split {split!r} of corpus {corpus.id!r} is empty")
    stats = ChannelStats.empty(len(corpus.band_manifest))
    for start in range(0, len(ids), chunk):
        images, _ = corpus.load_arrays(ids[start:start + chunk])
        stats = stats.merge(ChannelStats.of(images))
    return Standardizer.from_stats(stats, epsilon, names=corpus.band_names,
                                   fitted_on=(corpus.id, split))


def standardize(patch: Patch, standardizer: Standardizer) -> Patch:
    if patch.image.shape[-1] != len(standardizer):
        raise ChannelCountError(
            f"patch {patch.id!r} has {patch.image.shape[-1]} channels, standardizer has {len(standardizer)}")
    if patch.bands and standardizer.names and tuple(patch.bands) != tuple(standardizer.names):
        raise ChannelCountError(
            f"patch channel order {patch.bands} differs from standardizer order {standardizer.names}")
    return replace(patch, image=standardizer.apply(patch.image))


# -- augmentation -------------------------------------------------------------

def augment(patch: Patch, rng: np.random.Generator) -> Patch:
    """Independent horizontal and vertical flips, each with probability 0.5."""
    image, mask = patch.image, patch.mask
    if rng.random() < 0.5:
        image, mask = image[:, ::-1], mask[:, ::-1]
    if rng.random() < 0.5:
        image, mask = image[::-1], mask[::-1]
    return replace(patch, image=np.ascontiguousarray(image), mask=np.ascontiguousarray(mask))


def augment_batch(images: np.ndarray, masks: np.ndarray, rng: np.random.Generator):
    """Flip a channel-first batch (N, C, H, W) / (N, H, W) per sample."""
    images = images.copy()
    masks = masks.copy()
    for i in range(len(images)):
        if rng.random() < 0.5:
            images[i] = images[i][..., ::-1]
            masks[i] = masks[i][..., ::-1]
        if rng.random() < 0.5:
            images[i] = images[i][..., ::-1, :]
            masks[i] = masks[i][::-1, :]
    return images, masks


# -- band selection -----------------------------------------------------------

def select_bands(patch: Patch, band_config: BandConfig, manifest: BandManifest | None = None) -> Patch:
    names = tuple(patch.bands) if patch.bands else (manifest.names if manifest else ())
    if not names:
        raise ChannelNotFound("patch carries no channel names and no manifest was given")
    idx = []
    for c in band_config.channels:
        try:
            idx.append(names.index(c))
        except ValueError:
            raise ChannelNotFound(f"channel {c!r} of config {band_config.name!r} not in {list(names)}") from None
    return replace(patch, image=np.ascontiguousarray(patch.image[..., idx]), bands=band_config.channels)


def band_indices(names: Sequence[str], band_config: BandConfig) -> list[int]:
    names = tuple(names)
    out = []
    for c in band_config.channels:
        if c not in names:
            raise ChannelNotFound(f"channel {c!r} of config {band_config.name!r} not in {list(names)}")
        out.append(names.index(c))
    return out


# -- stratified label-fraction subsets ----------------------------------------

@dataclass
class SubsetSelection:
    k: float
    ids: list[str]
    seed: int
    n_strata: int = 4
    strata_sizes: list[int] = field(default_factory=list)
    strata_draws: list[int] = field(default_factory=list)

    def manifest_bytes(self) -> bytes:
        return (json.dumps({"k": self.k, "seed": self.seed, "ids": self.ids}, indent=2) + "\n").encode()

    def digest(self) -> str:
        return hashlib.sha256(self.manifest_bytes()).hexdigest()[:16]

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.manifest_bytes())
        return path

    @classmethod
    def load(cls, path) -> "SubsetSelection":
        d = json.loads(Path(path).read_text())
        return cls(float(d["k"]), list(d["ids"]), int(d["seed"]))


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def apportion(sizes: Sequence[int], k: float) -> list[int]:
    """Per-stratum draw counts summing to round_half_up(k*N/100), at least 1 overall.

    Largest-remainder apportionment of the exact quotas k*n/100; each non-empty
    stratum gets at least one draw when the total allows it.
    """
    kf = Fraction(str(k))
    n = sum(sizes)
    if n == 0:
        return [0] * len(sizes)
    total = min(max(_round_half_up(kf * n / 100), 1), n)
    quotas = [kf * s / 100 for s in sizes]
    draws = [min(math.floor(q), s) for q, s in zip(quotas, sizes)]
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - math.floor(quotas[i])), i))
    remaining = total - sum(draws)
    while remaining > 0:
        progressed = False
        for i in order:
            if remaining and draws[i] < sizes[i]:
                draws[i] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break
    nonempty = [i for i, s in enumerate(sizes) if s > 0]
    if total >= len(nonempty):
        for i in nonempty:
            if draws[i] == 0:
                donor = max(range(len(sizes)), key=lambda j: (draws[j], -j))
                draws[donor] -= 1
                draws[i] += 1
    return draws


def stratified_subset_from_coverage(ids: Sequence[str], coverage: Sequence[float], k: float,
                                    seed: int, n_strata: int = 4) -> SubsetSelection:
    if not 0 < k <= 100:
        raise FractionError(f"label fraction k must be in (0, 100], got {k}")
    if len(ids) != len(coverage):
        raise ValueError("ids and coverage differ in length")
    if not ids:
        raise EmptySplitError("cannot draw a subset from an empty split")
    order = sorted(range(len(ids)), key=lambda i: (coverage[i], ids[i]))
    strata = [list(chunk) for chunk in np.array_split(np.asarray(order, dtype=int), n_strata)]
    sizes = [len(s) for s in strata]
    draws = apportion(sizes, k)
    rng = np.random.default_rng(seed)
    chosen = []
    for members, d in zip(strata, draws):
        if d:
            picks = rng.choice(len(members), size=d, replace=False)
            chosen.extend(ids[members[j]] for j in picks)
    return SubsetSelection(float(k), sorted(chosen), int(seed), n_strata, sizes, draws)


def stratified_subset(corpus: Corpus, k: float, seed: int, n_strata: int = 4,
                      split: str = "train") -> SubsetSelection:
    """Deterministic k% draw of *split*, stratified by landslide coverage quantiles."""
    if not 0 < k <= 100:
        raise FractionError(f"label fraction k must be in (0, 100], got {k}")
    ids = sorted(corpus.split(split))
    return stratified_subset_from_coverage(ids, corpus.coverage(ids), k, seed, n_strata)


def import_landslide4sense(src, dst, split_dirs: Mapping[str, str] | None = None) -> Corpus:
    """Convert the public ``img/image_N.h5`` + ``mask/mask_N.h5`` layout into per-patch containers."""
    src, dst = Path(src), Path(dst)
    split_dirs = split_dirs or {"train": "TrainData", "val": "ValidData", "test": "TestData"}
    splits: dict[str, list[str]] = {}
    for split, sub in split_dirs.items():
        img_dir = src / sub / "img"
        if not img_dir.exists():
            splits[split] = []
            continue
        ids = []
        for img_path in sorted(img_dir.glob("image_*.h5")):
            n = img_path.stem.split("_", 1)[1]
            pid = f"{split}_{n}"
            mask_path = src / sub / "mask" / f"mask_{n}.h5"
            with h5py.File(img_path, "r") as f:
                image = np.asarray(f["img"], dtype=np.float32)
            if mask_path.exists():
                with h5py.File(mask_path, "r") as f:
                    mask = np.asarray(f["mask"], dtype=np.uint8)
            else:
                raise MissingPatch(pid, mask_path)
            write_patch(dst, Patch(image, mask, pid))
            ids.append(pid)
        splits[split] = ids
    manifest = BandManifest.landslide4sense()
    manifest.save(dst / "bands.json")
    sm = SplitManifest(splits, dst.name)
    sm.save(dst / "splits.json")
    return load_corpus(dst)
