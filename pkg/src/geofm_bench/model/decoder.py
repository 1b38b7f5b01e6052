"""Lightweight convolutional decoder: token grid -> per-pixel logits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from ..errors import UpsampleConfigError


@dataclass(frozen=True)
class DecoderSpec:
    stages: int | None = None               # default: log2(patch_size)
    widths: tuple[int, ...] | None = None   # default: embed_dim halved per stage
    num_classes: int = 2

    def to_json(self):
        d = asdict(self)
        d["widths"] = list(self.widths) if self.widths else None
        return d

    def resolve(self, embed_dim: int, patch_size: int) -> tuple[int, tuple[int, ...]]:
        stages = self.stages
        if stages is None:
            stages = int(round(math.log2(patch_size)))
        if 2 ** stages != patch_size:
            raise UpsampleConfigError(
                f"{stages} 2x upsampling stages give {2 ** stages}x, patch size is {patch_size}")
        widths = tuple(self.widths) if self.widths else tuple(
            max(embed_dim // 2 ** (i + 1), 1) for i in range(stages))
        if len(widths) != stages:
            raise UpsampleConfigError(f"need {stages} hidden widths, got {len(widths)}")
        return stages, widths


class SegDecoder(nn.Module):
    def __init__(self, embed_dim: int, patch_size: int, spec: DecoderSpec = DecoderSpec()):
        super().__init__()
        self.stages, widths = spec.resolve(embed_dim, patch_size)
        layers, c = [], embed_dim
        for w in widths:
            layers += [nn.ConvTranspose2d(c, w, 2, stride=2), nn.ReLU(inplace=True),
                       nn.Conv2d(w, w, 3, padding=1), nn.ReLU(inplace=True)]
            c = w
        self.up = nn.Sequential(*layers)
        self.head = nn.Conv2d(c, spec.num_classes, 1)
        for m in self.up:
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)

    def forward(self, z: torch.Tensor, grid: tuple[int, int] | None = None) -> torch.Tensor:
        n, length, d = z.shape
        if grid is None:
            side = math.isqrt(length)
            if side * side != length:
                raise UpsampleConfigError(f"{length} tokens do not form a square grid")
            grid = (side, side)
        x = z.transpose(1, 2).reshape(n, d, *grid)
        return self.head(self.up(x))


def decode(decoder: SegDecoder, z: torch.Tensor, grid=None) -> torch.Tensor:
    return decoder(z, grid)
