"""Overlap metrics and per-image averaged dataset evaluation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raster import PathLike, RasterError, as_mask, read_raster

RASTER_SUFFIXES = (".png", ".pgm")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(pred, gt) -> ConfusionCounts:
    p = as_mask(pred).astype(bool)
    g = as_mask(gt).astype(bool)
    if p.shape != g.shape:
        raise ValueError(f"dimension mismatch: pred {p.shape} vs gt {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def iou(c: ConfusionCounts) -> float:
    """TP / (TP + FN + FP); 1.0 when both masks are empty."""
    denom = c.tp + c.fn + c.fp
    return 1.0 if denom == 0 else c.tp / denom


def dice(c: ConfusionCounts) -> float:
    """2TP / (2TP + FN + FP); 1.0 when both masks are empty."""
    denom = 2 * c.tp + c.fn + c.fp
    return 1.0 if denom == 0 else 2 * c.tp / denom


def mask_iou(pred, gt) -> float:
    return iou(confusion_counts(pred, gt))


@dataclass
class EvalRow:
    id: str
    iou: float
    dice: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def mean_iou(self) -> float:
        return float(np.mean([r.iou for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_dice(self) -> float:
        return float(np.mean([r.dice for r in self.rows])) if self.rows else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "iou", "dice"])
        for r in self.rows:
            w.writerow([r.id, f"{r.iou:.6f}", f"{r.dice:.6f}"])
        w.writerow(["MEAN", f"{self.mean_iou:.6f}", f"{self.mean_dice:.6f}"])
        return buf.getvalue()


def _raster_files(d: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(d.iterdir()) if p.is_file() and p.suffix.lower() in RASTER_SUFFIXES}


def evaluate_dataset(pred_dir: PathLike, gt_dir: PathLike) -> EvalReport:
    """Per-image IoU/Dice for files paired by stem, then unweighted means.

    Unpaired files and unreadable or mismatched pairs are listed in
    ``report.failures`` and left out of the means.
    """
    preds = _raster_files(Path(pred_dir))
    gts = _raster_files(Path(gt_dir))
    common = sorted(preds.keys() & gts.keys())
    if not common:
        raise ValueError(f"no pairs: no common file names between {pred_dir} and {gt_dir}")
    report = EvalReport()
    for name in sorted(preds.keys() ^ gts.keys()):
        side = "ground truth" if name in preds else "prediction"
        report.failures[name] = f"missing {side} counterpart"
    for name in common:
        try:
            c = confusion_counts(read_raster(preds[name], "mask"), read_raster(gts[name], "mask"))
        except (RasterError, ValueError) as exc:
            report.failures[name] = str(exc)
            continue
        report.rows.append(EvalRow(name, iou(c), dice(c)))
    return report
