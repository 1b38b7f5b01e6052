"""Band adapters mapping B_in input channels onto the six-band encoder interface."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import torch
from torch import nn

from ..datasets import HLS_BANDS
from ..errors import AdapterBypassError, ChannelCountError

B_PRE = 6
ADAPTER_KINDS = ("none", "linear", "conv_head")


@dataclass(frozen=True)
class AdapterSpec:
    kind: str = "none"
    b_in: int = 6
    b_pre: int = B_PRE
    width: int = 32
    depth: int = 2

    def __post_init__(self):
        if self.kind not in ADAPTER_KINDS:
            raise ValueError(f"unknown adapter kind {self.kind!r}; expected one of {ADAPTER_KINDS}")
        if self.b_in < 1:
            raise ChannelCountError("adapter needs at least one input channel")
        if self.kind == "none" and self.b_in != self.b_pre:
            raise AdapterBypassError(
                f"bypassing the adapter needs exactly {self.b_pre} input channels, got {self.b_in}")

    def to_json(self):
        return asdict(self)


class _Adapter(nn.Module):
    b_in: int

    def _check(self, x):
        if x.shape[1] != self.b_in:
            raise ChannelCountError(f"adapter expects {self.b_in} channels, got {x.shape[1]}")


class IdentityAdapter(_Adapter):
    def __init__(self, b_in=B_PRE):
        super().__init__()
        self.b_in = b_in

    def forward(self, x):
        self._check(x)
        return x


class LinearAdapter(_Adapter):
    """Per-pixel affine map x' = x W + b, implemented as a 1x1 convolution."""

    def __init__(self, b_in, b_pre=B_PRE):
        super().__init__()
        self.b_in = b_in
        self.proj = nn.Conv2d(b_in, b_pre, kernel_size=1)

    @property
    def weight_matrix(self) -> torch.Tensor:
        """W with shape (B_in, B_pre)."""
        return self.proj.weight[:, :, 0, 0].T

    @torch.no_grad()
    def set_affine(self, w, b=None):
        w = torch.as_tensor(w, dtype=self.proj.weight.dtype)
        self.proj.weight.copy_(w.T[:, :, None, None])
        if b is None:
            self.proj.bias.zero_()
        else:
            self.proj.bias.copy_(torch.as_tensor(b, dtype=self.proj.bias.dtype))

    @torch.no_grad()
    def init_from_bands(self, channels: Sequence[str], target=HLS_BANDS, scale=0.01):
        """Partial identity on channels shared with *target*; small random elsewhere."""
        b_pre = self.proj.out_channels
        w = torch.randn(self.b_in, b_pre) * scale
        matched = set()
        for j, name in enumerate(target[:b_pre]):
            if name in channels:
                i = list(channels).index(name)
                w[:, j] = 0.0
                w[i, j] = 1.0
                matched.add(j)
        self.set_affine(w)
        return matched

    def forward(self, x):
        self._check(x)
        return self.proj(x)


class ConvHeadAdapter(_Adapter):
    """Shallow convolutional head: 3x3 convs with ReLU, then a pointwise projection."""

    def __init__(self, b_in, b_pre=B_PRE, width=32, depth=2):
        super().__init__()
        self.b_in = b_in
        layers, c = [], b_in
        for _ in range(depth):
            layers += [nn.Conv2d(c, width, 3, padding=1), nn.ReLU(inplace=True)]
            c = width
        layers.append(nn.Conv2d(c, b_pre, 1))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        self._check(x)
        return self.body(x)


def build_adapter(spec: AdapterSpec, channels: Sequence[str] | None = None) -> nn.Module:
    if spec.kind == "none":
        return IdentityAdapter(spec.b_in)
    if spec.kind == "linear":
        adapter = LinearAdapter(spec.b_in, spec.b_pre)
        if channels is not None:
            adapter.init_from_bands(channels)
        return adapter
    return ConvHeadAdapter(spec.b_in, spec.b_pre, spec.width, spec.depth)


def apply_adapter(adapter: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """Project (N, B_in, H, W) to (N, 6, H, W)."""
    return adapter(x)
