"""Adapter -> encoder -> decoder segmentation network and its declarative spec."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..datasets import HLS_BANDS, BandConfig, Patch
from ..errors import BaselineTuningError, ChannelCountError
from .adapters import AdapterSpec, build_adapter
from .baseline import UNetBaseline
from .decoder import DecoderSpec, SegDecoder
from .encoder import EncoderSpec, build_encoder

TUNING_MODES = ("frozen", "full")
ARCHS = ("vit", "unet")


@dataclass(frozen=True)
class ModelSpec:
    arch: str = "vit"
    channels: tuple[str, ...] = HLS_BANDS
    band_config: str = "HLS-6B"
    adapter: AdapterSpec = field(default_factory=AdapterSpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    decoder: DecoderSpec = field(default_factory=DecoderSpec)
    tuning: str = "full"
    baseline_widths: tuple[int, ...] = (16, 32, 64)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.tuning not in TUNING_MODES:
            raise ValueError(f"tuning must be one of {TUNING_MODES}, got {self.tuning!r}")
        if self.arch == "vit" and self.adapter.b_in != len(self.channels):
            raise ChannelCountError(
                f"adapter expects {self.adapter.b_in} channels, band config has {len(self.channels)}")

    @property
    def b_in(self) -> int:
        return len(self.channels)

    @property
    def display_name(self) -> str:
        return self.name or ("ToyViT" if self.arch == "vit" else "U-Net")

    @classmethod
    def for_bands(cls, band_config: BandConfig, adapter: str = "auto", tuning: str = "full",
                  arch: str = "vit", encoder: EncoderSpec | None = None,
                  decoder: DecoderSpec | None = None, **kw) -> "ModelSpec":
        if adapter == "auto":
            adapter = "none" if band_config.b_in == 6 else "conv_head"
        if adapter == "conv":
            adapter = "conv_head"
        a = AdapterSpec(adapter, band_config.b_in) if arch == "vit" else AdapterSpec("none", 6)
        return cls(arch, band_config.channels, band_config.name, a, encoder or EncoderSpec(),
                   decoder or DecoderSpec(), tuning, **kw)

    def to_json(self) -> dict:
        return {"arch": self.arch, "channels": list(self.channels), "band_config": self.band_config,
                "adapter": self.adapter.to_json(), "encoder": self.encoder.to_json(),
                "decoder": self.decoder.to_json(), "tuning": self.tuning,
                "baseline_widths": list(self.baseline_widths), "name": self.name}

    @classmethod
    def from_json(cls, d) -> "ModelSpec":
        dec = dict(d.get("decoder", {}))
        if dec.get("widths"):
            dec["widths"] = tuple(dec["widths"])
        return cls(d.get("arch", "vit"), tuple(d["channels"]), d.get("band_config", ""),
                   AdapterSpec(**d.get("adapter", {})), EncoderSpec(**d.get("encoder", {})),
                   DecoderSpec(**dec), d.get("tuning", "full"),
                   tuple(d.get("baseline_widths", (16, 32, 64))), d.get("name", ""))

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


class SegModel(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        # backbone first: the same seed then yields the same encoder/decoder for any adapter
        self.encoder = build_encoder(spec.encoder)
        self.decoder = SegDecoder(spec.encoder.embed_dim, spec.encoder.patch_size, spec.decoder)
        self.adapter = build_adapter(spec.adapter, spec.channels)
        self.set_tuning(spec.tuning)

    @property
    def tuning(self) -> str:
        return self._tuning

    def set_tuning(self, mode: str):
        if mode not in TUNING_MODES:
            raise ValueError(f"tuning must be one of {TUNING_MODES}")
        self._tuning = mode
        for p in self.encoder.parameters():
            p.requires_grad_(mode == "full")
        return self

    def train(self, mode: bool = True):
        super().train(mode)
        if self._tuning == "frozen":
            self.encoder.eval()
        return self

    def encoder_parameters(self):
        return list(self.encoder.parameters())

    def forward(self, x, timestamp: int = 1):
        x = self.adapter(x)
        z = self.encoder(x, timestamp)
        grid = self.encoder.grid(*x.shape[-2:])
        return self.decoder(z, grid)


class BaselineModel(UNetBaseline):
    tuning = "full"

    def __init__(self, spec: ModelSpec):
        super().__init__(spec.b_in, spec.baseline_widths)
        self.spec = spec

    def encoder_parameters(self):
        return [p for block in self.down for p in block.parameters()]


def build_reference_baseline(spec: ModelSpec) -> BaselineModel:
    if spec.tuning == "frozen":
        raise BaselineTuningError("the CNN baseline has no pretrained backbone to freeze")
    return BaselineModel(replace(spec, arch="unet"))


def build_model(spec: ModelSpec, seed: int | None = None) -> nn.Module:
    if seed is not None:
        torch.manual_seed(seed)
    if spec.arch == "unet":
        return build_reference_baseline(spec)
    return SegModel(spec)


def param_count(model: nn.Module, trainable_only: bool = False) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad or not trainable_only)


@torch.no_grad()
def predict_proba(model: nn.Module, x: torch.Tensor) -> torch.Tensor:
    was_training = model.training
    model.eval()
    probs = F.softmax(model(x), dim=1)
    model.train(was_training)
    return probs


def probs_to_mask(landslide_prob, threshold: float = 0.5):
    """Landslide where probability >= threshold (ties count as landslide)."""
    if isinstance(landslide_prob, torch.Tensor):
        return (landslide_prob >= threshold).to(torch.uint8)
    return (np.asarray(landslide_prob) >= threshold).astype(np.uint8)


def predict_mask(model: nn.Module, patch, threshold: float = 0.5):
    """Binary mask for a standardized Patch (H x W x B) or a batch tensor (N, B, H, W)."""
    if isinstance(patch, Patch):
        x = torch.from_numpy(np.ascontiguousarray(patch.image.transpose(2, 0, 1))).unsqueeze(0)
        return probs_to_mask(predict_proba(model, x.float())[0, 1], threshold).numpy()
    return probs_to_mask(predict_proba(model, patch)[:, 1], threshold)
