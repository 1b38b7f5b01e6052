"""Reference implementations written independently of the package, used as test oracles.

They favour obviousness over speed: explicit loops, textbook definitions.
"""

from __future__ import annotations

import math

import numpy as np


def confusion_by_loop(pred, true):
    tp = fp = fn = tn = 0
    for p, t in zip(np.ravel(pred).tolist(), np.ravel(true).tolist()):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def metrics_by_loop(pred, true):
    """Per-class IoU from set operations, precision/recall/F1 from pixel lists."""
    pred = np.ravel(pred).tolist()
    true = np.ravel(true).tolist()
    n = len(pred)

    def iou(cls):
        inter = sum(1 for p, t in zip(pred, true) if p == cls and t == cls)
        union = sum(1 for p, t in zip(pred, true) if p == cls or t == cls)
        return inter / union if union else 1.0

    tp, fp, fn, tn = confusion_by_loop(pred, true)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    correct = sum(1 for p, t in zip(pred, true) if p == t)
    return {"miou": (iou(1) + iou(0)) / 2, "iou_ls": iou(1), "iou_bg": iou(0), "precision": precision,
            "recall": recall, "f1": f1, "macc": correct / n}


def jaccard_loss_present(pred, true, n_classes=2):
    """Mean over classes present in *true* of 1 - IoU(pred == c, true == c)."""
    pred = np.ravel(pred)
    true = np.ravel(true)
    losses = []
    for c in range(n_classes):
        t = true == c
        if not t.any():
            continue
        p = pred == c
        losses.append(1.0 - (p & t).sum() / (p | t).sum())
    return float(np.mean(losses))


def lovasz_extension_by_definition(errors, fg):
    """Lovasz extension of the Jaccard set loss, summed over the sorted chain of level sets.

    For errors sorted decreasingly, the extension is sum_i e_(i) * (J(S_i) - J(S_{i-1}))
    with S_i the i largest-error pixels and J(S) the Jaccard loss when exactly S is
    mispredicted.  Computed from the set function directly.
    """
    errors = np.asarray(errors, dtype=np.float64)
    fg = np.asarray(fg, dtype=bool)
    order = np.argsort(-errors, kind="stable")

    def jaccard_of_set(mis):
        # mispredicted foreground pixels leave the intersection; mispredicted background joins the union
        gt = fg.sum()
        inter = gt - sum(1 for i in mis if fg[i])
        union = gt + sum(1 for i in mis if not fg[i])
        return 1.0 - inter / union if union else 0.0

    total, prev, chosen = 0.0, 0.0, []
    for i in order:
        chosen.append(i)
        cur = jaccard_of_set(chosen)
        total += errors[i] * (cur - prev)
        prev = cur
    return total


def softmax_np(logits, axis=1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy_np(logits, mask, weights=(1.0, 1.0)):
    """Per-pixel weighted negative log-likelihood averaged over all pixels."""
    b, c, h, w = logits.shape
    total = 0.0
    for n in range(b):
        for i in range(h):
            for j in range(w):
                z = logits[n, :, i, j]
                lse = z.max() + math.log(np.exp(z - z.max()).sum())
                y = int(mask[n, i, j])
                total += weights[y] * (lse - z[y])
    return total / (b * h * w)


def focal_np(logits, mask, gamma):
    p = softmax_np(logits)
    b, c, h, w = logits.shape
    total = 0.0
    for n in range(b):
        for i in range(h):
            for j in range(w):
                pt = p[n, int(mask[n, i, j]), i, j]
                total += -((1 - pt) ** gamma) * math.log(pt)
    return total / (b * h * w)


def plugin_mi(x, y, bins=32):
    """Histogram plug-in estimate of I(X; Y) in nats with equal-width bins on X."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    edges = np.linspace(x.min(), x.max(), bins + 1)
    xb = np.clip(np.digitize(x, edges[1:-1]), 0, bins - 1)
    mi = 0.0
    n = len(x)
    for cls in np.unique(y):
        py = np.mean(y == cls)
        for b in range(bins):
            pxy = np.count_nonzero((xb == b) & (y == cls)) / n
            if pxy == 0:
                continue
            px = np.count_nonzero(xb == b) / n
            mi += pxy * math.log(pxy / (px * py))
    return mi


def central_difference_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = fn(x)
        flat[i] = old - eps
        down = fn(x)
        flat[i] = old
        g[i] = (up - down) / (2 * eps)
    return grad
