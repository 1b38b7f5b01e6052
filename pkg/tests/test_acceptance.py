"""Primary acceptance criteria, one test each.

Every test prints a single PASS/FAIL line (also collected in the terminal summary)
and asserts the criterion at its stated tolerance and time budget.
"""

from __future__ import annotations

import itertools
import math
import time
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from geofm_bench.bandselect import MISample, estimate_mi, select_band_configs
from geofm_bench.cli import main as cli_main
from geofm_bench.datasets import BAND_CONFIGS, HLS_BANDS, BandConfig
from geofm_bench.harness import TrainConfig, train
from geofm_bench.losses import focal_loss, lovasz_softmax, lovasz_softmax_loss, wce_loss
from geofm_bench.metrics import ConfusionMatrix, efficiency_report, segmentation_metrics, transfer_report
from geofm_bench.model import EncoderSpec, MaskedAutoencoder, ModelSpec, ToyViT, build_model
from geofm_bench.model.mae import pretrain
from geofm_bench.synthetic import SyntheticSpec, make_synthetic_corpus, synthetic_arrays
from oracles import central_difference_grad, metrics_by_loop, plugin_mi


def test_metrics_match_brute_force(verdict):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        h, w = rng.integers(1, 33, 2)
        true = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        pred = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        got = segmentation_metrics(ConfusionMatrix.from_masks(pred, true)).to_dict()
        for key, want in metrics_by_loop(pred, true).items():
            worst = max(worst, abs(got[key] - want))
    elapsed = time.perf_counter() - t0
    verdict("metrics oracle", worst <= 1e-12 and elapsed < 10,
            f"max |diff| {worst:.2e} over 1000 pairs, {elapsed:.1f} s")


def test_lovasz_equals_jaccard_on_all_hard_3x3_cases(verdict):
    t0 = time.perf_counter()
    masks = torch.tensor(list(itertools.product((0, 1), repeat=9))).view(512, 3, 3)
    probs = F.one_hot(masks, 2).permute(0, 3, 1, 2).double()
    flat = masks.view(512, 9).numpy().astype(bool)
    worst = 0.0
    for gt_index in range(512):
        gt = masks[gt_index].expand(512, 3, 3)
        got = lovasz_softmax(probs, gt, reduction="none").numpy()
        # 1 - IoU per present class, counted directly on the pixel sets
        t1 = flat[gt_index]
        losses = []
        for t, p in ((t1, flat), (~t1, ~flat)):
            if t.any():
                inter = (p & t).sum(1)
                union = (p | t).sum(1)
                losses.append(1.0 - inter / union)
        want = np.mean(losses, axis=0)
        worst = max(worst, float(np.abs(got - want).max()))
    elapsed = time.perf_counter() - t0
    verdict("Lovasz-Jaccard identity", worst <= 1e-9 and elapsed < 60,
            f"max |diff| {worst:.2e} over 262144 cases, {elapsed:.1f} s")


def _separated_instance(rng):
    """8x8 binary problem whose pixel errors are pairwise far apart, so sorting is stable under eps."""
    fg = rng.integers(0, 2, 64)
    err = rng.permutation(np.linspace(0.02, 0.98, 64))
    p1 = np.where(fg == 1, 1 - err, err)
    logits = np.stack([np.zeros(64), np.log(p1 / (1 - p1))]).reshape(1, 2, 8, 8)
    return logits, torch.tensor(fg.reshape(1, 8, 8))


def _grad_error(fn, logits, mask):
    x = torch.tensor(logits, requires_grad=True)
    fn(x, mask).backward()
    analytic = x.grad.numpy()
    numeric = central_difference_grad(lambda a: float(fn(torch.from_numpy(a), mask)), logits.copy(),
                                     eps=1e-4)
    return float(np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1e-12))


def test_gradients_match_finite_differences(verdict):
    rng = np.random.default_rng(0)
    losses = {
        "wce": lambda x, m: wce_loss(x, m),
        "focal0": lambda x, m: focal_loss(x, m, 0.0),
        "focal2": lambda x, m: focal_loss(x, m, 2.0),
        "lovasz": lambda x, m: lovasz_softmax_loss(x, m),
    }
    t0 = time.perf_counter()
    worst = {k: 0.0 for k in losses}
    for _ in range(50):
        logits = rng.normal(0, 2, (1, 2, 8, 8))
        mask = torch.tensor(rng.integers(0, 2, (1, 8, 8)))
        for name in ("wce", "focal0", "focal2"):
            worst[name] = max(worst[name], _grad_error(losses[name], logits, mask))
        logits, mask = _separated_instance(rng)
        worst["lovasz"] = max(worst["lovasz"], _grad_error(losses["lovasz"], logits, mask))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    verdict("gradient checks", ok,
            ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" over 50 instances, {elapsed:.1f} s")


def test_loss_reductions(verdict):
    g = torch.Generator().manual_seed(0)
    worst = 0.0
    for _ in range(20):
        logits = torch.randn(2, 2, 16, 16, generator=g, dtype=torch.float64) * 3
        mask = torch.randint(0, 2, (2, 16, 16), generator=g)
        ce = F.cross_entropy(logits, mask)
        worst = max(worst, float((focal_loss(logits, mask, 0.0) - ce).abs()),
                    float((wce_loss(logits, mask, (1.0, 1.0)) - ce).abs()))
    verdict("loss reductions", worst <= 1e-7, f"max |diff| to CE {worst:.2e}")


def _mi(columns, y, seed=0):
    feats = np.column_stack(columns)
    return estimate_mi(MISample(feats, y, tuple(f"c{i}" for i in range(feats.shape[1]))), seed=seed)


def test_mi_estimator(verdict):
    t0 = time.perf_counter()
    n = 20_000
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, n)
    noise = rng.standard_normal(n)
    a = _mi([noise], y).scores["c0"]
    balanced = np.repeat([0, 1], n // 2)
    b = _mi([balanced.astype(float)], balanced).scores["c0"]
    wins = 0
    for seed in range(20):
        r = np.random.default_rng(100 + seed)
        ys = r.integers(0, 2, n)
        planted = ys + r.normal(0, 0.05, n)
        rep = _mi([r.standard_normal(n), planted, r.standard_normal(n)], ys, seed)
        wins += rep.ranking[0] == "c1"
    gaps = []
    for col in (y + rng.normal(0, 0.05, n), 0.8 * y + rng.standard_normal(n), noise):
        gaps.append(abs(_mi([col], y).scores["c0"] - plugin_mi(col, y)))
    elapsed = time.perf_counter() - t0
    ok = a <= 0.01 and abs(b - math.log(2)) <= 0.02 and wins >= 19 and max(gaps) <= 0.05 and elapsed < 180
    verdict("MI estimator", ok,
            f"(a) {a:.4f} nats, (b) {b:.4f} vs ln2, (c) {wins}/20 wins, (d) max gap {max(gaps):.4f}, "
            f"{elapsed:.1f} s")


def test_reported_formulas(verdict):
    rpd = efficiency_report({100: 70.41, 1.25: 66.96}).rpd[1.25]
    r_site = transfer_report(71.18, 86.03, 1.0).r_site
    ok = abs(rpd - 0.0490) <= 1e-3 and abs(r_site - 1.2086) <= 1e-3
    verdict("formula reproduction", ok, f"RPD(1.25) {rpd:.4f}, r_site {r_site:.4f}")


def test_adapter_and_bypass_contracts(verdict):
    x14 = torch.randn(2, 14, 32, 32, generator=torch.Generator().manual_seed(0))
    full_names = BAND_CONFIGS["Full-14B"].channels
    worst_norm, shapes_ok = 0.0, True
    for cfg in BAND_CONFIGS.values():
        x = x14[:, [full_names.index(c) for c in cfg.channels]]
        for adapter in ("linear", "conv_head"):
            for tuning in ("frozen", "full"):
                model = build_model(ModelSpec.for_bands(cfg, adapter, tuning), seed=0).eval()
                with torch.no_grad():
                    p = model(x).softmax(1)
                shapes_ok &= tuple(p.shape) == (2, 2, 32, 32)
                worst_norm = max(worst_norm, float((p.sum(1) - 1).abs().max()))

    model = build_model(ModelSpec.for_bands(BAND_CONFIGS["9B"], "linear", "frozen"), seed=0)
    before = {k: v.clone() for k, v in model.encoder.state_dict().items()}
    opt = torch.optim.AdamW(model.parameters(), lr=1e-2, weight_decay=0.1)
    x9 = x14[:, [full_names.index(c) for c in BAND_CONFIGS["9B"].channels]]
    model.train()
    wce_loss(model(x9), torch.ones(2, 32, 32, dtype=torch.long)).backward()
    opt.step()
    frozen_ok = all(torch.equal(before[k], v) for k, v in model.encoder.state_dict().items())

    hls = BAND_CONFIGS["HLS-6B"]
    x6 = x14[:, [full_names.index(c) for c in hls.channels]]
    bypass = build_model(ModelSpec.for_bands(hls, "none"), seed=5).eval()
    linear = build_model(ModelSpec.for_bands(hls, "linear"), seed=5).eval()
    with torch.no_grad():
        gap = float((bypass(x6) - linear(x6)).abs().max())
    ok = shapes_ok and worst_norm <= 1e-5 and frozen_ok and gap <= 1e-6
    verdict("adapter/bypass contracts", ok,
            f"{len(BAND_CONFIGS) * 4} configs, max |sum-1| {worst_norm:.1e}, frozen unchanged {frozen_ok}, "
            f"bypass gap {gap:.1e}")


def test_mae_pretraining(verdict):
    torch.manual_seed(0)
    mae = MaskedAutoencoder(ToyViT(EncoderSpec()))
    x = torch.randn(2, 6, 64, 64, generator=torch.Generator().manual_seed(1))
    loss, pred, mask, _ = mae(x, 0.75, torch.Generator().manual_seed(2))
    pred.retain_grad()
    loss.backward()
    visible = mask == 0
    exclusive = int(torch.count_nonzero(pred.grad[visible])) == 0 and int(torch.count_nonzero(pred.grad[~visible])) > 0

    t0 = time.perf_counter()
    imgs, _ = synthetic_arrays(64, 0, SyntheticSpec.pretraining(), HLS_BANDS)
    imgs = (imgs - imgs.mean(axis=(0, 1, 2))) / imgs.std(axis=(0, 1, 2))
    images = torch.from_numpy(np.ascontiguousarray(imgs.transpose(0, 3, 1, 2))).float()
    torch.manual_seed(0)
    curve = pretrain(MaskedAutoencoder(ToyViT(EncoderSpec())), images, steps=500, batch_size=8, lr=1e-3)
    elapsed = time.perf_counter() - t0
    start, end = float(np.mean(curve[:5])), float(np.mean(curve[-20:]))
    ok = exclusive and end <= 0.5 * start and elapsed < 300
    verdict("MAE toy pretraining", ok,
            f"gradient exclusive {exclusive}, loss {start:.4f} -> {end:.4f} ({1 - end / start:.0%} drop), "
            f"{elapsed:.1f} s")


def test_end_to_end_overfit(verdict, tmp_path):
    corpus = make_synthetic_corpus(tmp_path / "c", {"train": 8}, seed=0, spec=SyntheticSpec(size=64),
                                   corpus_id="overfit")
    t0 = time.perf_counter()
    config = TrainConfig(epochs=200, batch_size=2, lr=1e-3, seed=0, augment=False)
    model = build_model(ModelSpec.for_bands(BAND_CONFIGS["HLS-6B"], "none"), seed=0)
    record = train(model, corpus, config, val_split="train", eval_splits=())
    elapsed = time.perf_counter() - t0
    best = max(record.val_miou)
    first = next(i + 1 for i, v in enumerate(record.val_miou + [1.0]) if v >= 0.95)
    verdict("end-to-end overfit", best >= 0.95 and elapsed < 600,
            f"best train mIoU {best:.4f}, first >= 0.95 at epoch {first}, {elapsed:.1f} s")


def _label_axis(corpus, out: Path) -> int:
    return cli_main(["axis-label", "--corpus", str(corpus), "--out", str(out), "--seed", "3",
                     "--epochs", "1", "--batch-size", "4", "--lr", "1e-3", "--models", "vit,unet",
                     "--encoder", '{"patch_size": 8, "embed_dim": 32, "depth": 1, "heads": 2}'])


def test_label_axis_is_deterministic(verdict, tmp_path):
    corpus = tmp_path / "c"
    make_synthetic_corpus(corpus, {"train": 80, "val": 4, "test": 4}, seed=1, spec=SyntheticSpec(size=32),
                          corpus_id="det")
    a, b = tmp_path / "a", tmp_path / "b"
    codes = (_label_axis(corpus, a), _label_axis(corpus, b))
    compared = sorted(p.relative_to(a) for p in (a / "subsets").iterdir())
    compared += [Path("efficiency.json"), Path("label_runs.json")]
    differing = [str(p) for p in compared if (a / p).read_bytes() != (b / p).read_bytes()]
    ok = codes == (0, 0) and not differing and len(compared) == 6
    verdict("determinism", ok, f"{len(compared)} files compared byte-for-byte, differing: {differing or 'none'}")


def test_mi_selected_bands_beat_signal_free_bands(verdict, tmp_path):
    t0 = time.perf_counter()
    corpus = make_synthetic_corpus(tmp_path / "c", {"train": 32, "val": 8, "test": 16}, seed=0,
                                   spec=SyntheticSpec(size=64), corpus_id="qual")
    (_, selected), _ = select_band_configs(corpus, seeds=(0, 1), per_image=1000)
    excluded = BandConfig("signal-free", ("B2", "B3", "B5", "B11", "B12", "DEM"))
    config = TrainConfig(epochs=20, batch_size=4, lr=1e-3, seed=0)
    scores = {}
    for cfg in (selected, excluded):
        model = build_model(ModelSpec.for_bands(cfg, "linear"), seed=0)
        scores[cfg.name] = train(model, corpus, config).metrics["test"]["miou"]
    elapsed = time.perf_counter() - t0
    ok = scores[selected.name] > scores[excluded.name] and elapsed < 1800
    verdict("qualitative band direction", ok,
            f"{selected.name} {list(selected.channels)} mIoU {scores[selected.name]:.4f} vs "
            f"signal-free {scores[excluded.name]:.4f}, {elapsed:.1f} s")
