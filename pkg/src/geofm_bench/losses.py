"""Imbalance-aware segmentation losses: weighted CE, Lovasz-Softmax and focal loss.

All losses take logits shaped (B, C, H, W) (Lovasz takes probabilities) and an
integer mask (B, H, W); reduction is the mean over pixels, then over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import torch
import torch.nn.functional as F

from .errors import ProbabilityError, WeightError


def wce_loss(logits: torch.Tensor, mask: torch.Tensor, weights=(2.0, 8.0)) -> torch.Tensor:
    w = torch.as_tensor(weights, dtype=logits.dtype, device=logits.device)
    if (w <= 0).any():
        raise WeightError(f"class weights must be positive, got {tuple(weights)}")
    logp = F.log_softmax(logits, dim=1)
    target = mask.long().unsqueeze(1)
    nll = -logp.gather(1, target).squeeze(1)
    return (w[mask.long()] * nll).mean()


def focal_loss(logits: torch.Tensor, mask: torch.Tensor, gamma: float = 2.0,
               alpha: Sequence[float] | None = None) -> torch.Tensor:
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    logp = F.log_softmax(logits, dim=1)
    target = mask.long().unsqueeze(1)
    logpt = logp.gather(1, target).squeeze(1)
    pt = logpt.exp()
    # (1 - pt) ** 0 is 1 even at pt == 1; keep gamma == 0 an exact CE
    mod = (1.0 - pt) ** gamma if gamma else torch.ones_like(pt)
    loss = -mod * logpt
    if alpha is not None:
        a = torch.as_tensor(alpha, dtype=logits.dtype, device=logits.device)
        loss = a[mask.long()] * loss
    return loss.mean()


def lovasz_grad(gt_sorted: torch.Tensor) -> torch.Tensor:
    """Discrete gradient of the Jaccard extension along sorted errors (last dim)."""
    gts = gt_sorted.sum(-1, keepdim=True)
    intersection = gts - gt_sorted.cumsum(-1)
    union = gts + (1.0 - gt_sorted).cumsum(-1)
    jaccard = 1.0 - intersection / union
    if gt_sorted.shape[-1] > 1:
        jaccard = torch.cat([jaccard[..., :1], jaccard[..., 1:] - jaccard[..., :-1]], dim=-1)
    return jaccard


def lovasz_softmax(probs: torch.Tensor, mask: torch.Tensor, classes="present",
                   per_image: bool = True, reduction: str = "mean") -> torch.Tensor:
    """Lovasz-Softmax surrogate of the Jaccard loss.

    Args:
        probs: class probabilities (B, C, H, W); rows must sum to 1 within 1e-4.
        mask: ground truth (B, H, W).
        classes: "present" averages over classes found in the mask, "all" over every
            class, or an explicit list of class ids.
        per_image: compute per image and average over the batch; otherwise treat
            the batch as one flattened image.
        reduction: "mean" or "none" (per-image values).
    """
    total = probs.sum(1)
    if (total - 1).abs().max() > 1e-4:
        raise ProbabilityError("probabilities do not sum to 1 over the class dimension")
    n, c = probs.shape[:2]
    p = probs.reshape(n, c, -1)
    y = mask.reshape(n, -1).long()
    if not per_image:
        p = p.permute(1, 0, 2).reshape(1, c, -1)
        y = y.reshape(1, -1)
    fg = (y.unsqueeze(1) == torch.arange(c, device=y.device).view(1, c, 1)).to(p.dtype)
    errors = (fg - p).abs()
    errors_sorted, perm = torch.sort(errors, dim=-1, descending=True)
    fg_sorted = fg.gather(-1, perm)
    per_class = (errors_sorted * lovasz_grad(fg_sorted)).sum(-1)       # (n, c)

    if classes == "present":
        weight = (fg.sum(-1) > 0).to(p.dtype)
    elif classes == "all":
        weight = torch.ones_like(per_class)
    else:
        weight = torch.zeros_like(per_class)
        weight[:, list(classes)] = 1.0
    per_item = (per_class * weight).sum(-1) / weight.sum(-1).clamp_min(1.0)
    if reduction == "none":
        return per_item
    return per_item.mean()


def lovasz_softmax_loss(logits: torch.Tensor, mask: torch.Tensor, classes="present",
                        per_image: bool = True) -> torch.Tensor:
    return lovasz_softmax(F.softmax(logits, dim=1), mask, classes, per_image)


@dataclass(frozen=True)
class LossSpec:
    kind: str = "wce"                       # wce | lovasz | focal
    weights: tuple[float, float] = (2.0, 8.0)
    gamma: float = 2.0
    classes: str = "present"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if any(w <= 0 for w in self.weights):
            raise WeightError(f"class weights must be positive, got {self.weights}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    def __call__(self, logits, mask):
        if self.kind == "wce":
            return wce_loss(logits, mask, self.weights)
        if self.kind == "focal":
            return focal_loss(logits, mask, self.gamma)
        return lovasz_softmax_loss(logits, mask, self.classes)

    def to_json(self) -> dict:
        return {"kind": self.kind, "w": list(self.weights), "gamma": self.gamma, "classes": self.classes}

    @classmethod
    def from_json(cls, d) -> "LossSpec":
        if isinstance(d, str):
            return cls(d)
        return cls(d.get("kind", "wce"), tuple(d.get("w", (2.0, 8.0))), float(d.get("gamma", 2.0)),
                   d.get("classes", "present"))


LOSS_KINDS = ("wce", "lovasz", "focal")


@dataclass
class LossSelection:
    winner: str | None
    checkpoint_epoch: int | None
    rows: list[dict] = field(default_factory=list)
    diverged: list[str] = field(default_factory=list)


def select_loss_by_validation(runs: Mapping[str, object]) -> LossSelection:
    """Pick the checkpoint per loss, then the loss whose checkpoint scores best.

    Each run exposes ``val_loss`` (per-epoch validation value of its own training
    loss) and ``val_miou`` (per-epoch validation mIoU); epochs count from 1.  The
    checkpoint of a run is its lowest validation-loss epoch; the winner is the run
    with the highest mIoU at that checkpoint.  Runs with a non-finite validation
    loss, or flagged ``diverged``, are excluded.
    """
    rows, diverged = [], []
    for name, run in runs.items():
        curve = list(getattr(run, "val_loss"))
        if getattr(run, "diverged", False) or not curve or any(not math.isfinite(v) for v in curve):
            diverged.append(name)
            rows.append({"loss": name, "checkpoint_epoch": None, "val_miou": None, "diverged": True})
            continue
        best = min(range(len(curve)), key=lambda i: curve[i])
        miou = list(getattr(run, "val_miou"))[best]
        rows.append({"loss": name, "checkpoint_epoch": best + 1, "val_miou": miou, "diverged": False})
    ok = [r for r in rows if not r["diverged"]]
    if not ok:
        return LossSelection(None, None, rows, diverged)
    win = max(ok, key=lambda r: r["val_miou"])
    return LossSelection(win["loss"], win["checkpoint_epoch"], rows, diverged)
