"""Tables and figures from run records.

Every figure is drawn from the numbers written to its companion CSV (parsed
back from the formatted cells), so a plotted point always equals a table cell.
Percentages are printed x100 with 2 decimals, ratios with 4; JSON keeps full
precision.  Output depends only on the inputs, so regenerating a report gives
identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DanglingReferenceError
from .harness import RunRecord, result_row
from .metrics import EfficiencyReport, TransferReport
from .model.checkpoint import sha256_file
from .plotting import plot_grouped_bars, plot_row_bars, plot_score_curves

TABLE_COLUMNS = ("model", "bands", "band_config", "adapter", "tuning", "loss", "k",
                 "miou", "f1", "precision", "recall", "macc", "run_id")
PERCENT_COLUMNS = ("miou", "f1", "precision", "recall", "macc")


def pct(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{100.0 * v:.2f}"


def ratio(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def sort_key(record: RunRecord):
    return (-record.n_bands, record.band_config, record.adapter, record.tuning, record.model,
            record.loss, -record.k, record.run_id)


def render_tables(records: Sequence[RunRecord], out_dir, stem: str = "results", split: str = "test",
                  figure: bool = True) -> list[Path]:
    """Write ``<stem>.csv`` / ``<stem>.json`` (one row per record) and a per-config mIoU bar chart."""
    out_dir = Path(out_dir)
    ordered = sorted(records, key=sort_key)
    rows = [result_row(r, split) for r in ordered]
    cells = [[pct(row[c]) if c in PERCENT_COLUMNS else (f"{row[c]:g}" if c == "k" else row[c])
              for c in TABLE_COLUMNS] for row in rows]
    paths = [_write_csv(out_dir / f"{stem}.csv", TABLE_COLUMNS, cells),
             _write_json(out_dir / f"{stem}.json", {"split": split, "rows": rows})]
    if figure and rows:
        labels = [f"{row['model']} | {row['band_config']} | {row['adapter']}/{row['tuning']} | "
                  f"{row['loss']} | k={row['k']:g}" for row in rows]
        values = [float(c[TABLE_COLUMNS.index("miou")] or "nan") for c in cells]
        paths.append(plot_row_bars(labels, values, out_dir / f"{stem}_miou.png", "mIoU (%)",
                                   title=f"{split} mIoU per configuration"))
    return paths


def render_efficiency(reports: Sequence[EfficiencyReport], out_dir) -> list[Path]:
    """Score-vs-fraction curve, RPD bars and DE bars, each with its table."""
    out_dir = Path(out_dir)
    curve_rows, de_rows = [], []
    for rep in reports:
        for k in sorted(rep.scores, reverse=True):
            curve_rows.append([rep.model, f"{k:g}", pct(rep.scores[k]), ratio(rep.rpd[k])])
        de_rows.append([rep.model, ratio(rep.de)])
    paths = [_write_csv(out_dir / "efficiency.csv", ("model", "k", "miou", "rpd"), curve_rows),
             _write_csv(out_dir / "efficiency_de.csv", ("model", "de"), de_rows),
             _write_json(out_dir / "efficiency.json", [r.to_dict() for r in reports])]

    curves: dict[str, dict[float, float]] = {}
    rpd: dict[str, dict[float, float]] = {}
    for model, k, miou, r in curve_rows:
        curves.setdefault(model, {})[float(k)] = float(miou)
        if float(k) != 100.0:
            rpd.setdefault(model, {})[float(k)] = float(r)
    paths.append(plot_score_curves(curves, out_dir / "score_vs_fraction.png",
                                   title="test mIoU versus labelled fraction"))
    ks = sorted({k for c in rpd.values() for k in c}, reverse=True)
    if ks:
        series = {m: [c.get(k, float("nan")) for k in ks] for m, c in rpd.items()}
        paths.append(plot_grouped_bars([f"{k:g}%" for k in ks], series, out_dir / "rpd_bars.png",
                                       "RPD", title="relative performance drop", fmt="{:.4f}"))
    de = {m: float(v) for m, v in de_rows if v != ""}
    if de:
        paths.append(plot_grouped_bars(list(de), {"DE": list(de.values())}, out_dir / "de_bars.png",
                                       "DE", title="aggregated data efficiency", fmt="{:.4f}"))
    return paths


def render_transfer(reports: Sequence[TransferReport], out_dir) -> list[Path]:
    """Retention-ratio table and grouped bars (r_site, r_ext, r_2hop per model)."""
    out_dir = Path(out_dir)
    rows = [[r.model, pct(r.p_in), pct(r.p_gen), pct(r.p_ext), ratio(r.r_site), ratio(r.r_ext),
             ratio(r.r_2hop)] for r in reports]
    paths = [_write_csv(out_dir / "transfer.csv",
                        ("model", "p_in", "p_gen", "p_ext", "r_site", "r_ext", "r_2hop"), rows),
             _write_json(out_dir / "transfer.json", [r.to_dict() for r in reports])]
    if rows:
        models = [row[0] for row in rows]
        series = {name: [float(row[i] or "nan") for row in rows]
                  for i, name in ((4, "gen / in"), (5, "ext / gen"), (6, "ext / in"))}
        paths.append(plot_grouped_bars(models, series, out_dir / "retention_bars.png", "retention ratio",
                                       title="cross-domain retention", reference=1.0, fmt="{:.4f}"))
    return paths


# -- provenance ---------------------------------------------------------------

def verify_provenance(record: RunRecord) -> None:
    """Every manifest and checkpoint a record points to must exist with the recorded hash."""
    if record.subset and record.subset.get("path"):
        path = Path(record.subset["path"])
        if not path.exists():
            raise DanglingReferenceError(f"run {record.run_id}: subset manifest {path} is missing")
        from .datasets import SubsetSelection
        if SubsetSelection.load(path).digest() != record.subset["digest"]:
            raise DanglingReferenceError(f"run {record.run_id}: subset manifest {path} changed since training")
    if record.checkpoint:
        ckpt = Path(record.checkpoint["dir"])
        for name, digest in record.checkpoint["hashes"].items():
            f = ckpt / name
            if not f.exists():
                raise DanglingReferenceError(f"run {record.run_id}: checkpoint file {f} is missing")
            if sha256_file(f) != digest:
                raise DanglingReferenceError(f"run {record.run_id}: checkpoint file {f} hash mismatch")


def find_records(runs_dir) -> dict[str, Path]:
    return {p.parent.name: p for p in sorted(Path(runs_dir).glob("*/record.json"))}


def load_records(runs_dir, run_ids: Sequence[str] | None = None) -> list[RunRecord]:
    available = find_records(runs_dir)
    if run_ids:
        missing = [r for r in run_ids if r not in available]
        if missing:
            raise DanglingReferenceError(f"no run record for {', '.join(missing)} under {runs_dir}")
        paths = [available[r] for r in run_ids]
    else:
        paths = list(available.values())
    return [RunRecord.load(p) for p in paths]


def build_report(runs_dir, out_dir, run_ids: Sequence[str] | None = None, split: str = "test") -> list[Path]:
    """Re-render tables and figures from saved records and axis summaries under *runs_dir*."""
    runs_dir, out_dir = Path(runs_dir), Path(out_dir)
    records = load_records(runs_dir, run_ids)
    for r in records:
        verify_provenance(r)
    paths = render_tables(records, out_dir, "results", split)
    eff = runs_dir / "efficiency.json"
    if eff.exists():
        reports = [EfficiencyReport({float(k): v for k, v in d["scores"].items()},
                                    {float(k): v for k, v in d["rpd"].items()}, d["de"],
                                    tuple(d["scarce_fractions"]), d["model"])
                   for d in json.loads(eff.read_text())]
        paths += render_efficiency(reports, out_dir)
    tr = runs_dir / "transfer.json"
    if tr.exists():
        paths += render_transfer([TransferReport(d["p_in"], d["p_gen"], d["p_ext"], model=d["model"])
                                  for d in json.loads(tr.read_text())], out_dir)
    return paths
