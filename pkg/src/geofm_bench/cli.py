"""Command-line entry point: ``geofm-bench <subcommand> ...``.

Exit codes: 0 success, 2 usage / configuration / data-contract errors (including
dangling report references), 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .errors import ConfigError, DivergenceError, GeoFMBenchError

log = logging.getLogger("geofm_bench")

OUT_ENV = "GEOFM_BENCH_OUT"
ADAPTER_CHOICES = ("none", "linear", "conv")
EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3


# -- argument helpers ---------------------------------------------------------

def parse_fractions(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def _adapter_kind(name: str) -> str:
    return "conv_head" if name == "conv" else name


def _out_dir(args) -> Path:
    out = os.environ.get(OUT_ENV) or args.out
    return Path(out)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML run configuration; explicit flags win over its values")
    p.add_argument("--out", default="runs", help=f"output directory (env {OUT_ENV} overrides)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_training(p: argparse.ArgumentParser, multi: bool = False):
    p.add_argument("--corpus", required=False, help="corpus root (bands.json + splits.json + patches)")
    nargs = "+" if multi else None
    p.add_argument("--bands", nargs=nargs, default=["HLS-6B"] if multi else "HLS-6B",
                   help="band preset name, BandConfig .json file, or comma-separated channel list")
    p.add_argument("--adapter", nargs=nargs, choices=ADAPTER_CHOICES, default=["none"] if multi else None,
                   help="band adapter; defaults to none for 6 bands and conv otherwise")
    p.add_argument("--tuning", nargs=nargs, choices=("frozen", "full"), default=["full"] if multi else "full")
    p.add_argument("--loss", choices=("wce", "lovasz", "focal"), default="wce")
    p.add_argument("--arch", choices=("vit", "unet"), default="vit")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--encoder-checkpoint", help="encoder state dict (e.g. from `pretrain`)")
    p.add_argument("--encoder", type=json.loads, default=None,
                   help='encoder overrides as JSON, e.g. \'{"embed_dim": 64, "depth": 4}\'')


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="geofm-bench",
                                     description="Sensor / label / domain robustness benchmark for landslide segmentation.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    subs = {}

    p = subs["prepare"] = sub.add_parser("prepare", help="validate a corpus, write manifests and train statistics")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="corpus root to validate or create")
    p.add_argument("--from-landslide4sense", metavar="SRC", help="convert the public img/mask layout from SRC")
    p.add_argument("--synthetic", metavar="TRAIN,VAL,TEST", help="write a synthetic corpus with these split sizes")
    p.add_argument("--size", type=int, default=128, help="synthetic tile size")
    p.add_argument("--domain-shift", type=float, default=0.0, help="synthetic texture offset")
    p.add_argument("--extra-split", action="append", default=[], metavar="NAME:COUNT",
                   help="additional synthetic split, generated with --domain-shift")

    p = subs["select-bands"] = sub.add_parser("select-bands", help="rank channels by mutual information")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--per-image", type=int, default=4000)
    p.add_argument("--k", type=int, default=6, help="number of channels to keep")
    p.add_argument("--k-neighbors", type=int, default=3)
    p.add_argument("--max-images", type=int, default=None)
    p.add_argument("--name", default=None, help="name of the emitted band configuration")

    p = subs["train"] = sub.add_parser("train", help="fine-tune one model configuration")
    _add_common(p)
    _add_training(p)
    p.add_argument("--fraction", type=float, default=100.0, help="labelled training fraction k in percent")

    p = subs["evaluate"] = sub.add_parser("evaluate", help="score a saved run on a corpus split")
    _add_common(p)
    p.add_argument("--run-dir", required=True, help="directory holding checkpoint/ and standardizer.json")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, default=0.5)

    p = subs["axis-sensor"] = sub.add_parser("axis-sensor", help="band configuration x adapter x tuning grid")
    _add_common(p)
    _add_training(p, multi=True)

    p = subs["axis-label"] = sub.add_parser("axis-label", help="label-efficiency sweep over fractions k")
    _add_common(p)
    _add_training(p)
    p.add_argument("--fractions", type=parse_fractions, default=[100.0, 10.0, 2.5, 1.25])
    p.add_argument("--models", default="vit,unet", help="comma-separated architectures to compare")

    p = subs["axis-domain"] = sub.add_parser("axis-domain", help="zero-shot cross-domain transfer")
    _add_common(p)
    _add_training(p)
    p.add_argument("--in-split", default="test")
    p.add_argument("--gen", required=False, metavar="CORPUS[:SPLIT]", help="generalizability target")
    p.add_argument("--ext", required=False, metavar="CORPUS[:SPLIT]", help="external target")

    p = subs["report"] = sub.add_parser("report", help="render tables and figures from saved runs")
    _add_common(p)
    p.add_argument("--runs", default=None, help="directory of run records (default: --out)")
    p.add_argument("--run", action="append", default=[], help="restrict to these run ids")
    p.add_argument("--split", default="test")
    p.add_argument("--report-dir", default=None, help="where to write the report (default: <out>/report)")

    p = subs["pretrain"] = sub.add_parser("pretrain", help="toy masked-autoencoder pretraining of the encoder")
    _add_common(p)
    p.add_argument("--corpus", default=None, help="corpus whose train split is used (default: synthetic)")
    p.add_argument("--n-synthetic", type=int, default=64)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--mask-ratio", type=float, default=0.75)
    p.add_argument("--encoder", type=json.loads, default=None)
    return parser, subs


def load_config(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    flat = {}
    for key, value in data.items():
        if key == "train" and isinstance(value, dict):
            flat.update({k.replace("-", "_"): v for k, v in value.items()})
        else:
            flat[key.replace("-", "_")] = value
    return flat


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        if "fractions" in cfg:
            cfg["fractions"] = parse_fractions(cfg["fractions"])
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# -- shared builders ----------------------------------------------------------

def _corpus(path):
    from .datasets import load_corpus

    if not path:
        raise ConfigError("--corpus is required")
    return load_corpus(path)


def _target(text: str, default_split: str):
    from .datasets import load_corpus

    root, _, split = text.partition(":")
    return load_corpus(root), split or default_split


def _train_config(args):
    from .harness import TrainConfig
    from .losses import LossSpec

    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       weight_decay=args.weight_decay, seed=args.seed, loss=LossSpec(args.loss),
                       augment=not args.no_augment, threshold=args.threshold)


def _encoder_spec(args):
    from .model import EncoderSpec

    overrides = dict(getattr(args, "encoder", None) or {})
    if getattr(args, "encoder_checkpoint", None):
        overrides["checkpoint"] = args.encoder_checkpoint
    return EncoderSpec(**overrides)


def _model_spec(args, band_config, adapter, tuning, arch=None):
    from .model import ModelSpec

    adapter = "auto" if adapter is None else _adapter_kind(adapter)
    return ModelSpec.for_bands(band_config, adapter, tuning, arch or args.arch, encoder=_encoder_spec(args))


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- subcommands --------------------------------------------------------------

def cmd_prepare(args) -> int:
    from .datasets import fit_standardizer, import_landslide4sense, load_corpus
    from .synthetic import SyntheticSpec, make_synthetic_corpus

    root = Path(args.corpus)
    if args.synthetic:
        try:
            n_train, n_val, n_test = (int(v) for v in args.synthetic.split(","))
        except ValueError:
            raise ConfigError("--synthetic takes TRAIN,VAL,TEST counts") from None
        splits = {"train": n_train, "val": n_val, "test": n_test}
        base = SyntheticSpec(size=args.size)
        split_specs = {}
        for item in args.extra_split:
            name, _, count = item.partition(":")
            splits[name] = int(count)
            split_specs[name] = replace(base, domain_shift=args.domain_shift)
        corpus = make_synthetic_corpus(root, splits, args.seed, base, split_specs=split_specs)
    elif args.from_landslide4sense:
        corpus = import_landslide4sense(args.from_landslide4sense, root)
    else:
        corpus = load_corpus(root)
    summary = {"corpus": corpus.id, "root": str(root), "bands": list(corpus.band_names),
               "splits": {k: len(v) for k, v in corpus.split_manifest.splits.items()},
               "fingerprint": corpus.fingerprint()}
    if corpus.split("train"):
        st = fit_standardizer(corpus, "train")
        path = root / "standardizer.json"
        path.write_text(json.dumps(st.to_json(), indent=2) + "\n")
        summary["standardizer"] = str(path)
    _print_json(summary)
    return EXIT_OK


def cmd_select_bands(args) -> int:
    from .bandselect import estimate_mi, sample_pixels, top_k_config

    corpus = _corpus(args.corpus)
    out = _out_dir(args)
    sample = sample_pixels(corpus, "train", args.per_image, args.seed, args.max_images)
    report = estimate_mi(sample, args.k_neighbors, args.seed)
    cfg = top_k_config(report, args.k, args.name or f"MI-{args.k}-s{args.seed}")
    report.save(out / f"mi_report_s{args.seed}.json")
    cfg_path = out / f"bandconfig_{cfg.name}.json"
    cfg_path.parent.mkdir(parents=True, exist_ok=True)
    cfg_path.write_text(json.dumps(cfg.to_json(), indent=2) + "\n")
    _print_json({"mi": report.to_json(), "band_config": cfg.to_json(), "band_config_file": str(cfg_path)})
    return EXIT_OK


def cmd_train(args) -> int:
    from .datasets import resolve_band_config, stratified_subset
    from .harness import train
    from .model import build_model

    corpus = _corpus(args.corpus)
    out = _out_dir(args)
    band_config = resolve_band_config(args.bands, corpus.band_manifest)
    spec = _model_spec(args, band_config, args.adapter, args.tuning)
    config = _train_config(args)
    subset = path = None
    if args.fraction != 100.0:
        subset = stratified_subset(corpus, args.fraction, args.seed)
        path = subset.save(out / "subsets" / f"subset_k{args.fraction:g}_s{args.seed}.json")
    record = train(build_model(spec, seed=args.seed), corpus, config, subset=subset, subset_path=path,
                   out_dir=out)
    _print_json({"run_id": record.run_id, "selected_epoch": record.selected_epoch, "metrics": record.metrics})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .datasets import BandConfig, Standardizer
    from .errors import BandManifestError
    from .harness import evaluate
    from .model import load_checkpoint

    run_dir = Path(args.run_dir)
    model = load_checkpoint(run_dir / "checkpoint")
    standardizer = Standardizer.from_json(json.loads((run_dir / "standardizer.json").read_text()))
    corpus = _corpus(args.corpus)
    if tuple(corpus.band_names) != tuple(standardizer.names):
        raise BandManifestError(f"corpus {corpus.id!r} band manifest does not match the training corpus")
    spec = model.spec
    metrics = evaluate(model, corpus, args.split, BandConfig(spec.band_config, spec.channels), standardizer,
                       args.threshold)
    out = _out_dir(args) / "evaluations" / f"{run_dir.name}__{corpus.id}__{args.split}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    _print_json({"corpus": corpus.id, "split": args.split, "metrics": metrics.to_dict()})
    return EXIT_OK


def cmd_axis_sensor(args) -> int:
    from .datasets import resolve_band_config
    from .harness import SensorCell, run_axis_sensor

    corpus = _corpus(args.corpus)
    configs = [resolve_band_config(b, corpus.band_manifest) for b in args.bands]
    cells = [SensorCell(b, _adapter_kind(a), t, args.arch)
             for b in configs for a in args.adapter for t in args.tuning]
    records, skipped = run_axis_sensor(corpus, cells, _train_config(args), encoder=_encoder_spec(args),
                                       out_dir=_out_dir(args))
    _print_json({"runs": [r.run_id for r in records],
                 "skipped": [{"bands": c.band_config.name, "adapter": c.adapter, "tuning": c.tuning,
                              "reason": why} for c, why in skipped]})
    return EXIT_OK


def cmd_axis_label(args) -> int:
    from .datasets import resolve_band_config
    from .harness import run_axis_label

    corpus = _corpus(args.corpus)
    band_config = resolve_band_config(args.bands, corpus.band_manifest)
    models = {}
    for arch in (a.strip() for a in args.models.split(",") if a.strip()):
        spec = _model_spec(args, band_config, args.adapter, args.tuning if arch == "vit" else "full", arch)
        models[spec.display_name] = spec
    reports, records = run_axis_label(corpus, models, _train_config(args), args.fractions,
                                      out_dir=_out_dir(args))
    _print_json({name: rep.to_dict() for name, rep in reports.items()})
    return EXIT_OK


def cmd_axis_domain(args) -> int:
    from .datasets import resolve_band_config
    from .harness import run_axis_domain

    corpus = _corpus(args.corpus)
    if not args.gen or not args.ext:
        raise ConfigError("axis-domain needs --gen and --ext targets")
    targets = {"in": (corpus, args.in_split), "gen": _target(args.gen, "test"),
               "ext": _target(args.ext, "test")}
    band_config = resolve_band_config(args.bands, corpus.band_manifest)
    spec = _model_spec(args, band_config, args.adapter, args.tuning)
    report, record = run_axis_domain(spec, corpus, targets, _train_config(args), out_dir=_out_dir(args))
    _print_json({"run_id": record.run_id, "transfer": report.to_dict()})
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report

    out = _out_dir(args)
    runs = Path(args.runs) if args.runs else out
    report_dir = Path(args.report_dir) if args.report_dir else out / "report"
    paths = build_report(runs, report_dir, args.run or None, args.split)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_pretrain(args) -> int:
    import numpy as np
    import torch

    from .datasets import HLS_BANDS, BandConfig, fit_standardizer
    from .harness import prepare_split
    from .model.encoder import build_encoder
    from .model.mae import MaskedAutoencoder, pretrain
    from .report import _write_csv
    from .synthetic import SyntheticSpec, synthetic_arrays

    enc_spec = _encoder_spec(args)
    if args.corpus:
        corpus = _corpus(args.corpus)
        images = prepare_split(corpus, corpus.split("train"), BandConfig("HLS-6B", HLS_BANDS),
                               fit_standardizer(corpus)).x
    else:
        imgs, _ = synthetic_arrays(args.n_synthetic, args.seed, SyntheticSpec.pretraining(), HLS_BANDS)
        imgs = (imgs - imgs.mean(axis=(0, 1, 2))) / imgs.std(axis=(0, 1, 2))
        images = torch.from_numpy(np.ascontiguousarray(imgs.transpose(0, 3, 1, 2))).float()
    torch.manual_seed(args.seed)
    mae = MaskedAutoencoder(build_encoder(enc_spec))
    curve = pretrain(mae, images, args.steps, args.batch_size, args.lr, args.mask_ratio, args.seed)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(mae.encoder.state_dict(), out / "encoder_pretrained.pt")
    _write_csv(out / "pretrain_loss.csv", ("step", "loss"), [[i + 1, f"{v:.6f}"] for i, v in enumerate(curve)])
    _print_json({"encoder": str(out / "encoder_pretrained.pt"), "first_loss": curve[0], "last_loss": curve[-1]})
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare, "select-bands": cmd_select_bands, "train": cmd_train,
    "evaluate": cmd_evaluate, "axis-sensor": cmd_axis_sensor, "axis-label": cmd_axis_label,
    "axis-domain": cmd_axis_domain, "report": cmd_report, "pretrain": cmd_pretrain,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:            # argparse usage errors
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (GeoFMBenchError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
