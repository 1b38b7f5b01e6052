"""Training loop, tile-wise evaluation and the sensor / label / domain experiment axes."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch

from .datasets import (
    BAND_CONFIGS,
    BandConfig,
    Corpus,
    Standardizer,
    SubsetSelection,
    augment_batch,
    band_indices,
    fit_standardizer,
    stratified_subset,
)
from .errors import (
    BandManifestError,
    DivergenceError,
    EmptySplitError,
    LeakageError,
    SharedSubsetError,
)
from .losses import LossSpec
from .metrics import (
    ConfusionMatrix,
    EfficiencyReport,
    MetricReport,
    TransferReport,
    efficiency_report,
    segmentation_metrics,
    transfer_report,
)
from .model import ModelSpec, build_model, save_checkpoint
from .model.segmodel import probs_to_mask

log = logging.getLogger(__name__)

ADAPTER_LABELS = {"none": "--", "linear": "Linear", "conv_head": "U-Net"}


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-5
    weight_decay: float = 0.0
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    augment: bool = True
    threshold: float = 0.5
    eval_batch_size: int = 16

    def to_json(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_json()
        return d

    @classmethod
    def from_json(cls, d) -> "TrainConfig":
        d = dict(d)
        if "loss" in d:
            d["loss"] = LossSpec.from_json(d["loss"])
        return cls(**d)

    def fingerprint(self) -> str:
        return _digest(self.to_json())


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    run_id: str
    model: str
    band_config: str
    n_bands: int
    adapter: str
    tuning: str
    loss: str
    seed: int
    k: float
    config: dict
    model_spec: dict
    fingerprint: str
    corpus_id: str
    corpus_hash: str
    standardizer_fitted_on: list
    subset: dict | None
    checkpoint: dict | None
    train_loss: list[float]
    val_loss: list[float]
    val_miou: list[float]
    selected_epoch: int
    epochs_run: int
    steps: int
    metrics: dict[str, dict]
    wall_clock_s: float = 0.0
    diverged: bool = False

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d) -> "RunRecord":
        return cls(**d)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_json(json.loads(Path(path).read_text()))


# -- data ---------------------------------------------------------------------

@dataclass
class SplitTensors:
    ids: list[str]
    x: torch.Tensor      # (N, C, H, W) float32, standardized
    y: torch.Tensor      # (N, H, W) int64


def prepare_split(corpus: Corpus, ids: Sequence[str], band_config: BandConfig,
                  standardizer: Standardizer) -> SplitTensors:
    if not ids:
        raise EmptySplitError(f"no patches to load from corpus {corpus.id!r}")
    idx = band_indices(corpus.band_names, band_config)
    std = standardizer.subset(band_config.channels)
    xs, ys = [], []
    for patch in corpus.patches(ids):
        xs.append(std.apply(patch.image[..., idx]).transpose(2, 0, 1))
        ys.append(patch.mask.astype(np.int64))
    return SplitTensors(list(ids), torch.from_numpy(np.ascontiguousarray(np.stack(xs))),
                        torch.from_numpy(np.stack(ys)))


def check_standardizer(standardizer: Standardizer, corpus: Corpus) -> None:
    cid, split = standardizer.fitted_on
    if split != "train":
        raise LeakageError(f"standardizer was fitted on split {split!r}, not 'train'")
    if cid and cid != corpus.id:
        raise LeakageError(
            f"standardizer was fitted on corpus {cid!r}; refusing to reuse it as training statistics for {corpus.id!r}")


# -- evaluation ---------------------------------------------------------------

@torch.no_grad()
def evaluate_tensors(model, data: SplitTensors, loss: LossSpec | None = None, threshold=0.5,
                     batch_size=16) -> tuple[ConfusionMatrix, float | None]:
    """Tile-by-tile inference; returns the global confusion matrix and mean loss."""
    model.eval()
    cm = ConfusionMatrix()
    total_loss, count = 0.0, 0
    for start in range(0, len(data.ids), batch_size):
        x = data.x[start:start + batch_size]
        y = data.y[start:start + batch_size]
        logits = model(x)
        if loss is not None:
            total_loss += float(loss(logits, y)) * len(x)
            count += len(x)
        pred = probs_to_mask(torch.softmax(logits, dim=1)[:, 1], threshold)
        cm = cm + ConfusionMatrix.from_masks(pred.numpy(), y.numpy())
    return cm, (total_loss / count if count else None)


def evaluate(model, corpus: Corpus, split: str, band_config: BandConfig, standardizer: Standardizer,
             threshold=0.5, batch_size=16) -> MetricReport:
    data = prepare_split(corpus, corpus.split(split), band_config, standardizer)
    cm, _ = evaluate_tensors(model, data, None, threshold, batch_size)
    return segmentation_metrics(cm)


# -- training -----------------------------------------------------------------

def _run_id(spec: ModelSpec, config: TrainConfig, k: float, fingerprint: str) -> str:
    name = spec.display_name.replace(" ", "").replace("/", "-")
    return (f"{name}-{spec.band_config}-{spec.adapter.kind}-{spec.tuning}-{config.loss.kind}"
            f"-k{k:g}-s{config.seed}-{fingerprint[:8]}")


def train(model, corpus: Corpus, config: TrainConfig, *, standardizer: Standardizer | None = None,
          subset: SubsetSelection | None = None, subset_path=None, val_split: str = "val",
          eval_splits: Iterable[str] = ("test",), out_dir=None) -> RunRecord:
    """Fine-tune *model* for exactly ``config.epochs`` epochs and keep the best checkpoint.

    The checkpoint is the epoch with the lowest validation value of the training
    loss.  Metrics for *val_split* and every split in *eval_splits* are computed
    with that checkpoint.  Raises DivergenceError on a non-finite training loss.
    """
    spec: ModelSpec = model.spec
    band_config = BandConfig(spec.band_config or "custom", spec.channels)
    if standardizer is None:
        standardizer = fit_standardizer(corpus, "train")
    check_standardizer(standardizer, corpus)

    train_ids = sorted(subset.ids) if subset is not None else corpus.split("train")
    k = subset.k if subset is not None else 100.0
    tr = prepare_split(corpus, train_ids, band_config, standardizer)
    va = prepare_split(corpus, corpus.split(val_split), band_config, standardizer)

    subset_ref = None
    if subset is not None:
        subset_ref = {"k": subset.k, "digest": subset.digest(),
                      "path": str(Path(subset_path).resolve()) if subset_path else None}
    fingerprint = _digest({"config": config.to_json(), "model": spec.to_json(), "corpus": corpus.id,
                           "subset": subset_ref["digest"] if subset_ref else None})
    run_id = _run_id(spec, config, k, fingerprint)

    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    loss_fn = config.loss
    torch.manual_seed(config.seed)

    train_curve, val_curve, miou_curve = [], [], []
    best_loss, best_epoch, best_state = math.inf, 0, None
    steps = 0
    t0 = time.perf_counter()
    n = len(train_ids)
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(n)
        model.train()
        running, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            b = order[start:start + config.batch_size]
            x, y = tr.x[b], tr.y[b]
            if config.augment:
                xa, ya = augment_batch(x.numpy(), y.numpy(), rng)
                x, y = torch.from_numpy(xa), torch.from_numpy(ya)
            loss = loss_fn(model(x), y)
            if not torch.isfinite(loss):
                raise DivergenceError(epoch)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            steps += 1
            running += float(loss.detach()) * len(b)
            seen += len(b)
        train_curve.append(running / seen)

        cm, vloss = evaluate_tensors(model, va, loss_fn, config.threshold, config.eval_batch_size)
        if not math.isfinite(vloss):
            raise DivergenceError(epoch, f"non-finite validation loss at epoch {epoch}")
        val_curve.append(vloss)
        miou_curve.append(segmentation_metrics(cm).miou)
        if vloss < best_loss:
            best_loss, best_epoch = vloss, epoch
            best_state = copy.deepcopy(model.state_dict())
        log.debug("%s epoch %d train %.5f val %.5f", run_id, epoch, train_curve[-1], vloss)

    if best_state is not None:
        model.load_state_dict(best_state)
    metrics = {val_split: segmentation_metrics(evaluate_tensors(model, va, None, config.threshold,
                                                                config.eval_batch_size)[0]).to_dict()}
    for split in eval_splits:
        if split == val_split or not corpus.split(split):
            continue
        data = prepare_split(corpus, corpus.split(split), band_config, standardizer)
        cm, _ = evaluate_tensors(model, data, None, config.threshold, config.eval_batch_size)
        metrics[split] = segmentation_metrics(cm).to_dict()
    wall = time.perf_counter() - t0

    checkpoint = None
    if out_dir is not None:
        run_dir = Path(out_dir) / run_id
        hashes = save_checkpoint(model, run_dir / "checkpoint", {"run_id": run_id, "fingerprint": fingerprint})
        (run_dir / "standardizer.json").write_text(json.dumps(standardizer.to_json(), indent=2) + "\n")
        checkpoint = {"dir": str((run_dir / "checkpoint").resolve()), "hashes": hashes}

    record = RunRecord(
        run_id=run_id, model=spec.display_name, band_config=spec.band_config, n_bands=spec.b_in,
        adapter=spec.adapter.kind if spec.arch == "vit" else "none", tuning=spec.tuning,
        loss=config.loss.kind, seed=config.seed, k=float(k), config=config.to_json(),
        model_spec=spec.to_json(), fingerprint=fingerprint, corpus_id=corpus.id,
        corpus_hash=corpus.fingerprint(), standardizer_fitted_on=list(standardizer.fitted_on),
        subset=subset_ref, checkpoint=checkpoint, train_loss=train_curve, val_loss=val_curve,
        val_miou=miou_curve, selected_epoch=best_epoch, epochs_run=len(train_curve), steps=steps,
        metrics=metrics, wall_clock_s=wall,
    )
    if out_dir is not None:
        record.save(Path(out_dir) / run_id / "record.json")
    return record


def train_losses(spec: ModelSpec, corpus: Corpus, config: TrainConfig, kinds=("wce", "lovasz", "focal"),
                 **kw):
    """One independent run per loss from the same initialization; see select_loss_by_validation."""
    from .losses import select_loss_by_validation

    runs = {}
    for kind in kinds:
        model = build_model(spec, seed=config.seed)
        cfg = replace(config, loss=replace(config.loss, kind=kind))
        try:
            runs[kind] = train(model, corpus, cfg, **kw)
        except DivergenceError as exc:
            log.warning("loss %s diverged at epoch %d", kind, exc.epoch)
            runs[kind] = _DivergedRun()
    return runs, select_loss_by_validation(runs)


class _DivergedRun:
    diverged = True
    val_loss: list = []
    val_miou: list = []


# -- axis: sensor -------------------------------------------------------------

@dataclass(frozen=True)
class SensorCell:
    band_config: BandConfig
    adapter: str = "none"
    tuning: str = "full"
    arch: str = "vit"

    def invalid_reason(self) -> str | None:
        if self.arch == "unet":
            if self.tuning == "frozen":
                return "CNN baseline has no pretrained backbone to freeze"
            return None
        if self.adapter == "none" and self.band_config.b_in != 6:
            return f"adapter bypass needs 6 bands, config has {self.band_config.b_in}"
        return None


def sensor_grid(band_configs: Sequence[BandConfig], adapters: Sequence[str],
                tunings: Sequence[str]) -> list[SensorCell]:
    return [SensorCell(b, a, t) for b in band_configs for a in adapters for t in tunings]


def result_row(record: RunRecord, split: str = "test") -> dict:
    m = record.metrics.get(split, {})
    return {"model": record.model, "bands": f"{record.n_bands}B", "band_config": record.band_config,
            "adapter": ADAPTER_LABELS.get(record.adapter, record.adapter), "tuning": record.tuning.capitalize(),
            "loss": record.loss, "k": record.k, "miou": m.get("miou"), "f1": m.get("f1"),
            "precision": m.get("precision"), "recall": m.get("recall"), "macc": m.get("macc"),
            "run_id": record.run_id}


def run_axis_sensor(corpus: Corpus, cells: Sequence[SensorCell], config: TrainConfig, *,
                    encoder=None, encoder_state: dict | None = None, out_dir=None):
    """Train and test one model per grid cell.

    Returns (records, skipped) where skipped lists (cell, reason) for invalid cells.
    """
    from .model import EncoderSpec

    standardizer = fit_standardizer(corpus, "train")
    records, skipped = [], []
    for cell in cells:
        reason = cell.invalid_reason()
        if reason:
            skipped.append((cell, reason))
            log.info("skipping %s/%s/%s: %s", cell.band_config.name, cell.adapter, cell.tuning, reason)
            continue
        spec = ModelSpec.for_bands(cell.band_config, cell.adapter, cell.tuning, cell.arch,
                                   encoder=encoder or EncoderSpec())
        model = build_model(spec, seed=config.seed)
        if encoder_state is not None and cell.arch == "vit":
            model.encoder.load_state_dict(encoder_state)
        records.append(train(model, corpus, config, standardizer=standardizer, out_dir=out_dir))
    if out_dir is not None:
        from .report import render_tables
        render_tables(records, Path(out_dir), stem="sensor")
    return records, skipped


# -- axis: label --------------------------------------------------------------

def check_shared_subsets(records: Iterable[RunRecord]) -> None:
    by_k: dict[float, set] = {}
    for r in records:
        if r.subset is not None:
            by_k.setdefault(r.k, set()).add(r.subset["digest"])
    for k, digests in by_k.items():
        if len(digests) > 1:
            raise SharedSubsetError(f"models trained on different D_k manifests at k={k:g}: {sorted(digests)}")


def make_subsets(corpus: Corpus, fractions: Sequence[float], seed: int, out_dir=None):
    subsets = {}
    for k in fractions:
        sel = stratified_subset(corpus, float(k), seed)
        path = None
        if out_dir is not None:
            path = sel.save(Path(out_dir) / "subsets" / f"subset_k{float(k):g}_s{seed}.json")
        subsets[float(k)] = (sel, path)
    return subsets


def run_axis_label(corpus: Corpus, models: Mapping[str, ModelSpec], config: TrainConfig,
                   fractions=(100.0, 10.0, 2.5, 1.25), *, seed: int | None = None,
                   subsets: Mapping[str, Mapping[float, SubsetSelection]] | None = None,
                   encoder_state: dict | None = None, out_dir=None):
    """Fine-tune every model on every shared D_k and score it on the full test split.

    *subsets* may override the D_k per model; overrides that disagree across models
    raise SharedSubsetError before any training starts.
    """
    seed = config.seed if seed is None else seed
    shared = make_subsets(corpus, fractions, seed, out_dir)
    per_model = {}
    for name in models:
        override = (subsets or {}).get(name, {})
        per_model[name] = {k: (override.get(k), None) if k in override else shared[k] for k in shared}
    for k in shared:
        digests = {name: per_model[name][k][0].digest() for name in models}
        if len(set(digests.values())) > 1:
            raise SharedSubsetError(f"D_k manifests differ across models at k={k:g}: {digests}")

    standardizer = fit_standardizer(corpus, "train")
    records, reports = [], {}
    for name, spec in models.items():
        spec = replace(spec, name=spec.name or name)
        scores = {}
        for k, (sel, path) in per_model[name].items():
            model = build_model(spec, seed=config.seed)
            if encoder_state is not None and spec.arch == "vit":
                model.encoder.load_state_dict(encoder_state)
            rec = train(model, corpus, config, standardizer=standardizer, subset=sel, subset_path=path,
                        out_dir=out_dir)
            records.append(rec)
            scores[k] = rec.metrics["test"]["miou"]
        reports[name] = efficiency_report(scores, model=name)
    check_shared_subsets(records)
    if out_dir is not None:
        from .report import render_efficiency, render_tables
        render_tables(records, Path(out_dir), stem="label_runs")
        render_efficiency(list(reports.values()), Path(out_dir))
    return reports, records


# -- axis: domain -------------------------------------------------------------

def check_band_manifest(reference: Corpus, other: Corpus) -> None:
    if reference.band_names != other.band_names:
        raise BandManifestError(
            f"corpus {other.id!r} band manifest {list(other.band_names)} does not match "
            f"training corpus {reference.id!r} {list(reference.band_names)}")


def evaluate_transfer(model, standardizer: Standardizer, band_config: BandConfig,
                      targets: Mapping[str, tuple[Corpus, str]], threshold=0.5,
                      name: str = "") -> tuple[TransferReport, dict]:
    """Score a trained model *as is* on the in / gen / ext targets."""
    scores, metrics = {}, {}
    for key in ("in", "gen", "ext"):
        corpus, split = targets[key]
        m = evaluate(model, corpus, split, band_config, standardizer, threshold)
        metrics[key] = m.to_dict()
        scores[key] = m.miou
    return transfer_report(scores["in"], scores["gen"], scores["ext"], model=name), metrics


def run_axis_domain(spec: ModelSpec, train_corpus: Corpus, targets: Mapping[str, tuple[Corpus, str]],
                    config: TrainConfig, *, standardizer: Standardizer | None = None,
                    encoder_state: dict | None = None, out_dir=None):
    """Train on *train_corpus* only, then evaluate on T_in, T_gen and T_ext without adaptation.

    *targets* maps "in", "gen", "ext" to (corpus, split).  Each target corpus must
    share the training band manifest.  A supplied standardizer must come from the
    training corpus' train split.
    """
    for key in ("in", "gen", "ext"):
        if key not in targets:
            raise KeyError(f"missing transfer target {key!r}")
        check_band_manifest(train_corpus, targets[key][0])
    if standardizer is None:
        standardizer = fit_standardizer(train_corpus, "train")
    else:
        check_standardizer(standardizer, train_corpus)
        if standardizer.fitted_on[0] != train_corpus.id:
            raise LeakageError("standardizer must be fitted on the training corpus")

    model = build_model(spec, seed=config.seed)
    if encoder_state is not None and spec.arch == "vit":
        model.encoder.load_state_dict(encoder_state)
    record = train(model, train_corpus, config, standardizer=standardizer, out_dir=out_dir)
    band_config = BandConfig(spec.band_config or "custom", spec.channels)
    report, metrics = evaluate_transfer(model, standardizer, band_config, targets, config.threshold,
                                        spec.display_name)
    record.metrics.update({f"T_{k}": v for k, v in metrics.items()})
    if out_dir is not None:
        record.save(Path(out_dir) / record.run_id / "record.json")
        from .report import render_transfer
        render_transfer([report], Path(out_dir))
    return report, record


def default_band_config(name: str) -> BandConfig:
    return BAND_CONFIGS[name]
