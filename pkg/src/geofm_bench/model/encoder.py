"""Toy ViT encoder with the same token interface as a pretrained GeoFM backbone."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import PatchGridError

ENCODER_KINDS = ("toy_vit", "external_checkpoint")


@dataclass(frozen=True)
class EncoderSpec:
    kind: str = "toy_vit"
    patch_size: int = 16
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    in_chans: int = 6
    num_frames: int = 1
    checkpoint: str | None = None

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")

    def to_json(self):
        return asdict(self)


@lru_cache(maxsize=32)
def sincos_pos_embed(dim: int, gh: int, gw: int) -> np.ndarray:
    """Fixed 2-D sine-cosine position table, shape (gh*gw, dim)."""
    assert dim % 4 == 0
    gy, gx = np.meshgrid(np.arange(gh, dtype=np.float64), np.arange(gw, dtype=np.float64),
                         indexing="ij")

    def one_axis(d, pos):
        omega = 1.0 / 10000 ** (np.arange(d // 2, dtype=np.float64) / (d / 2.0))
        out = np.einsum("m,d->md", pos.reshape(-1), omega)
        return np.concatenate([np.sin(out), np.cos(out)], axis=1)

    return np.concatenate([one_axis(dim // 2, gy), one_axis(dim // 2, gx)], axis=1).astype(np.float32)


class Attention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * (q.shape[-1] ** -0.5)
        out = attn.softmax(dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(b, n, d))


class Mlp(nn.Module):
    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class Block(nn.Module):
    # parameter names follow the timm layout so published ViT weights map directly
    def __init__(self, dim, heads, mlp_ratio=4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class ToyViT(nn.Module):
    def __init__(self, spec: EncoderSpec = EncoderSpec()):
        super().__init__()
        self.spec = spec
        self.patch_size = spec.patch_size
        self.embed_dim = spec.embed_dim
        self.patch_embed = nn.Conv2d(spec.in_chans, spec.embed_dim, spec.patch_size, spec.patch_size)
        self.temporal_embed = nn.Embedding(spec.num_frames, spec.embed_dim)
        nn.init.normal_(self.temporal_embed.weight, std=0.02)
        self.blocks = nn.ModuleList(
            [Block(spec.embed_dim, spec.heads, spec.mlp_ratio) for _ in range(spec.depth)])
        self.norm = nn.LayerNorm(spec.embed_dim)
        self.apply(_init_weights)

    def grid(self, h, w):
        p = self.patch_size
        if h % p or w % p:
            raise PatchGridError(f"input {h}x{w} is not divisible by patch size {p}")
        return h // p, w // p

    def embed(self, x, timestamp: int = 1):
        """Patch tokens plus position and single-step temporal embedding: (N, L, D)."""
        gh, gw = self.grid(*x.shape[-2:])
        tokens = self.patch_embed(x).flatten(2).transpose(1, 2)
        pos = torch.from_numpy(sincos_pos_embed(self.embed_dim, gh, gw)).to(tokens)
        t = torch.as_tensor([timestamp - 1], device=x.device)
        return tokens + pos.unsqueeze(0) + self.temporal_embed(t).unsqueeze(0)

    def forward(self, x, timestamp: int = 1, ids_keep: torch.Tensor | None = None):
        tokens = self.embed(x, timestamp)
        if ids_keep is not None:
            idx = ids_keep.unsqueeze(-1).expand(-1, -1, tokens.shape[-1])
            tokens = tokens.gather(1, idx)
        for blk in self.blocks:
            tokens = blk(tokens)
        return self.norm(tokens)


def _init_weights(m):
    if isinstance(m, nn.Linear):
        nn.init.xavier_uniform_(m.weight)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.LayerNorm):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)


def encode(encoder: ToyViT, x: torch.Tensor, timestamp: int = 1) -> torch.Tensor:
    return encoder(x, timestamp)


_PREFIXES = ("model.encoder.", "encoder.", "backbone.", "module.")
_SKIP = ("pos_embed", "cls_token", "mask_token", "decoder", "temporal_embed_enc", "location_embed")


def map_external_state(state: dict, spec: EncoderSpec) -> dict:
    """Rename a published ViT/MAE encoder state dict onto :class:`ToyViT` keys."""
    out = {}
    for key, value in state.items():
        for pre in _PREFIXES:
            if key.startswith(pre):
                key = key[len(pre):]
        if any(key.startswith(s) for s in _SKIP):
            continue
        if key == "patch_embed.proj.weight":
            key = "patch_embed.weight"
            if value.ndim == 5:          # (D, C, T, p, p) spatio-temporal kernel, T=1 here
                value = value[:, :, 0]
        elif key == "patch_embed.proj.bias":
            key = "patch_embed.bias"
        elif key.startswith("fc_norm."):
            key = "norm." + key[len("fc_norm."):]
        out[key] = value
    return out


def load_external_encoder(spec: EncoderSpec) -> ToyViT:
    if not spec.checkpoint:
        raise ValueError("external_checkpoint encoder needs a checkpoint path")
    state = torch.load(spec.checkpoint, map_location="cpu", weights_only=True)
    if "model" in state and isinstance(state["model"], dict):
        state = state["model"]
    model = ToyViT(spec)
    mapped = map_external_state(state, spec)
    missing, unexpected = model.load_state_dict(mapped, strict=False)
    if unexpected:
        raise ValueError(f"checkpoint keys not understood: {sorted(unexpected)[:8]}")
    model.load_report = {"missing": list(missing)}
    return model


def build_encoder(spec: EncoderSpec) -> ToyViT:
    if spec.kind == "external_checkpoint":
        return load_external_encoder(spec)
    if spec.checkpoint:
        model = ToyViT(spec)
        model.load_state_dict(torch.load(spec.checkpoint, map_location="cpu", weights_only=True))
        return model
    return ToyViT(spec)
