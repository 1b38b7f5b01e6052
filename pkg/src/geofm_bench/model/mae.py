"""Toy masked-autoencoder pretraining for the ViT encoder."""

from __future__ import annotations

import math

import torch
from torch import nn

from ..errors import MaskRatioError
from .encoder import Block, ToyViT, sincos_pos_embed


def patchify(x: torch.Tensor, p: int) -> torch.Tensor:
    """(N, C, H, W) -> (N, L, p*p*C)."""
    n, c, h, w = x.shape
    x = x.reshape(n, c, h // p, p, w // p, p)
    return torch.einsum("nchpwq->nhwpqc", x).reshape(n, (h // p) * (w // p), p * p * c)


def unpatchify(tokens: torch.Tensor, p: int, c: int, gh: int, gw: int) -> torch.Tensor:
    n = tokens.shape[0]
    x = tokens.reshape(n, gh, gw, p, p, c)
    return torch.einsum("nhwpqc->nchpwq", x).reshape(n, c, gh * p, gw * p)


def n_masked(n_tokens: int, mask_ratio: float) -> int:
    if not 0 < mask_ratio < 1:
        raise MaskRatioError(f"mask_ratio must lie in (0, 1), got {mask_ratio}")
    return min(max(math.ceil(round(mask_ratio * n_tokens, 9)), 1), n_tokens - 1)


def random_masking(n: int, length: int, mask_ratio: float, generator=None):
    """Return (ids_keep, mask) with mask 1 on masked tokens, shape (n, length)."""
    n_mask = n_masked(length, mask_ratio)
    noise = torch.rand(n, length, generator=generator)
    ids_shuffle = noise.argsort(dim=1)
    ids_keep = ids_shuffle[:, : length - n_mask].sort(dim=1).values
    mask = torch.ones(n, length)
    mask.scatter_(1, ids_keep, 0.0)
    return ids_keep, mask


class MAEDecoder(nn.Module):
    def __init__(self, embed_dim, patch_size, in_chans, dim=32, depth=1, heads=2):
        super().__init__()
        self.dim = dim
        self.embed = nn.Linear(embed_dim, dim)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, dim))
        nn.init.normal_(self.mask_token, std=0.02)
        self.blocks = nn.ModuleList([Block(dim, heads) for _ in range(depth)])
        self.norm = nn.LayerNorm(dim)
        self.pred = nn.Linear(dim, patch_size * patch_size * in_chans)

    def forward(self, latent, ids_keep, length, grid):
        x = self.embed(latent)
        n = x.shape[0]
        full = self.mask_token.expand(n, length, -1).clone()
        full.scatter_(1, ids_keep.unsqueeze(-1).expand(-1, -1, self.dim), x)
        pos = torch.from_numpy(sincos_pos_embed(self.dim, *grid)).to(full)
        full = full + pos.unsqueeze(0)
        for blk in self.blocks:
            full = blk(full)
        return self.pred(self.norm(full))


class MaskedAutoencoder(nn.Module):
    def __init__(self, encoder: ToyViT, decoder_dim: int = 64, decoder_depth: int = 1):
        super().__init__()
        if not isinstance(encoder, ToyViT):
            raise TypeError("MAE pretraining needs a toy_vit encoder")
        self.encoder = encoder
        self.decoder = MAEDecoder(encoder.embed_dim, encoder.patch_size, encoder.spec.in_chans,
                                  decoder_dim, decoder_depth)

    def forward(self, x, mask_ratio=0.75, generator=None):
        """Return (loss, pred, mask, target); loss is MSE over masked patches only."""
        p = self.encoder.patch_size
        grid = self.encoder.grid(*x.shape[-2:])
        length = grid[0] * grid[1]
        ids_keep, mask = random_masking(x.shape[0], length, mask_ratio, generator)
        latent = self.encoder(x, ids_keep=ids_keep.to(x.device))
        pred = self.decoder(latent, ids_keep.to(x.device), length, grid)
        target = patchify(x, p)
        loss = masked_mse(pred, target, mask.to(x))
        return loss, pred, mask, target


def masked_mse(pred, target, mask):
    per_token = ((pred - target) ** 2).mean(dim=-1)
    return (per_token * mask).sum() / mask.sum()


def mae_pretrain_step(mae: MaskedAutoencoder, x: torch.Tensor, mask_ratio: float = 0.75,
                      generator=None, optimizer: torch.optim.Optimizer | None = None) -> float:
    loss, *_ = mae(x, mask_ratio, generator)
    if optimizer is not None:
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
    return float(loss.detach())


def pretrain(mae: MaskedAutoencoder, images: torch.Tensor, steps: int = 500, batch_size: int = 8,
             lr: float = 1e-3, mask_ratio: float = 0.75, seed: int = 0) -> list[float]:
    """Run *steps* optimizer steps over (N, 6, H, W) images; return the loss curve."""
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.AdamW(mae.parameters(), lr=lr, weight_decay=0.0)
    mae.train()
    curve = []
    n = images.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (batch_size,), generator=gen)
        curve.append(mae_pretrain_step(mae, images[idx], mask_ratio, gen, opt))
    return curve
