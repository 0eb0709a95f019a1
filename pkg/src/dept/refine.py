"""Periodic pseudo-label refinement driven by an external trainer.

Directory protocol (all epochs zero padded to four digits)::

    features/epoch_0050/<id>.f32r   written by the trainer (or the surrogate)
    labels/epoch_0050/<id>.png      written here, atomically
    labels/manifest.jsonl           one LabelRecord per line, append-only

Epoch 0 labels come from the raw images (with CLAHE); later epochs read the
trainer's single-channel feature maps and never apply CLAHE.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .atomic import atomic_write_bytes
from .fgpem import ExtremePoints, FgpemOptions, fgpem_generate, initial_pseudo_label, load_points
from .metrics import mask_iou
from .raster import (
    PathLike,
    RasterError,
    as_mask,
    encode_u8,
    read_f32_raster,
    read_raster,
    write_f32_raster,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
IMAGE_SUFFIXES = (".png", ".pgm")
DEFAULT_SHARPNESS = (4.0, 2.0, 1.0)


class SessionError(RuntimeError):
    """Session-level failure; aborts a refinement run."""


def epoch_dir(root: Path, epoch: int) -> Path:
    return Path(root) / f"epoch_{epoch:04d}"


# ---------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class RefineSchedule:
    total_epochs: int
    interval: int
    update_epochs: tuple[int, ...]


def plan_schedule(total_epochs: int, interval: int) -> RefineSchedule:
    """Update epochs ``0, n, 2n, ...`` strictly below *total_epochs*."""
    if total_epochs < 1 or interval < 1:
        raise ValueError(f"total_epochs and interval must be >= 1, got N={total_epochs}, n={interval}")
    return RefineSchedule(total_epochs, interval, tuple(range(0, total_epochs, interval)))


# ---------------------------------------------------------------------
# Session state
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class LabelRecord:
    image_id: str
    version: int
    epoch: int
    label_path: str  # relative to the labels dir
    source: str  # "image" or "feature"
    sha256: str

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True) + "\n"


@dataclass
class RefineSession:
    image_ids: list[str]
    images: dict[str, Path]
    features_dir: Path
    labels_dir: Path
    options: FgpemOptions
    points: dict[str, ExtremePoints]
    gt: dict[str, Path] = field(default_factory=dict)
    current_version: int = 0
    current_labels: dict[str, Path] = field(default_factory=dict)

    def __post_init__(self):
        missing = [i for i in self.image_ids if i not in self.points]
        if missing:
            raise SessionError(f"no extreme points for image ids: {', '.join(missing)}")
        self.features_dir = Path(self.features_dir)
        self.labels_dir = Path(self.labels_dir)

    @property
    def manifest_path(self) -> Path:
        return self.labels_dir / MANIFEST_NAME

    def append_record(self, rec: LabelRecord) -> None:
        self.labels_dir.mkdir(parents=True, exist_ok=True)
        with open(self.manifest_path, "a", encoding="utf-8") as fh:
            fh.write(rec.to_json_line())
            fh.flush()
            os.fsync(fh.fileno())


def read_manifest(path: PathLike) -> list[LabelRecord]:
    """Parse a manifest; a torn final line from a killed writer is skipped."""
    path = Path(path)
    if not path.exists():
        return []
    lines = path.read_text(encoding="utf-8").splitlines()
    out = []
    for i, line in enumerate(lines):
        try:
            out.append(LabelRecord(**json.loads(line)))
        except (json.JSONDecodeError, TypeError):
            if i == len(lines) - 1:
                logger.warning("%s: ignoring incomplete trailing line", path)
                continue
            raise SessionError(f"{path}: corrupt manifest line {i + 1}")
    return out


def _index_dir(d: Path, suffixes: Iterable[str]) -> dict[str, Path]:
    if not d.is_dir():
        raise SessionError(f"not a directory: {d}")
    return {p.stem: p for p in sorted(d.iterdir()) if p.is_file() and p.suffix.lower() in suffixes}


@dataclass
class SessionConfig:
    images_dir: Path
    points_dir: Path
    features_dir: Path
    labels_dir: Path
    total_epochs: int
    interval: int
    options: FgpemOptions
    gt_dir: Optional[Path] = None


def load_config(path: PathLike) -> SessionConfig:
    """Read a session config JSON; relative paths resolve against its folder."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SessionError(f"{path}: cannot read config ({exc})") from exc
    base = path.parent

    def p(key: str, required: bool = True) -> Optional[Path]:
        if key not in doc:
            if required:
                raise SessionError(f"{path}: missing key {key!r}")
            return None
        return (base / doc[key]).resolve()

    opt_fields = {k: doc[k] for k in ("scale", "epsilon", "normalize", "use_straight_baseline", "clip_limit") if k in doc}
    if "tiles" in doc:
        opt_fields["tiles"] = tuple(int(t) for t in doc["tiles"])
    try:
        options = FgpemOptions(**opt_fields)
        return SessionConfig(
            images_dir=p("images_dir"),
            points_dir=p("points_dir"),
            features_dir=p("features_dir"),
            labels_dir=p("labels_dir"),
            total_epochs=int(doc.get("total_epochs", 400)),
            interval=int(doc.get("interval", 50)),
            options=options,
            gt_dir=p("gt_dir", required=False),
        )
    except (TypeError, ValueError) as exc:
        raise SessionError(f"{path}: invalid config ({exc})") from exc


def open_session(cfg: SessionConfig) -> RefineSession:
    images = _index_dir(cfg.images_dir, IMAGE_SUFFIXES)
    if not images:
        raise SessionError(f"no images found in {cfg.images_dir}")
    point_files = _index_dir(cfg.points_dir, (".json",))
    points = {}
    for image_id in images:
        if image_id in point_files:
            try:
                points[image_id] = load_points(point_files[image_id])
            except (OSError, ValueError) as exc:
                raise SessionError(f"{point_files[image_id]}: {exc}") from exc
    gt = _index_dir(cfg.gt_dir, IMAGE_SUFFIXES) if cfg.gt_dir else {}
    session = RefineSession(
        image_ids=sorted(images),
        images=images,
        features_dir=cfg.features_dir,
        labels_dir=cfg.labels_dir,
        options=cfg.options,
        points=points,
        gt={k: v for k, v in gt.items() if k in images},
    )
    # resume version counter and current labels from an existing manifest
    for rec in read_manifest(session.manifest_path):
        session.current_version = max(session.current_version, rec.version)
        session.current_labels[rec.image_id] = session.labels_dir / rec.label_path
    return session


# ---------------------------------------------------------------------
# Label updates
# ---------------------------------------------------------------------
@dataclass
class EventResult:
    epoch: int
    version: int
    records: list[LabelRecord] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)
    mean_iou: Optional[float] = None

    @property
    def fully_failed(self) -> bool:
        return not self.records and bool(self.failures)


def _generate(session: RefineSession, image_id: str, epoch: int) -> tuple[np.ndarray, str]:
    pts = session.points[image_id]
    image = read_raster(session.images[image_id], "image")
    if epoch == 0:
        return initial_pseudo_label(image, pts, session.options), "image"
    feat_path = epoch_dir(session.features_dir, epoch) / f"{image_id}.f32r"
    if not feat_path.is_file():
        raise FileNotFoundError(f"missing feature file {feat_path}")
    feature = read_f32_raster(feat_path)
    if feature.shape != image.shape:
        raise ValueError(f"dimension mismatch: feature {feature.shape} vs image {image.shape}")
    return fgpem_generate(feature, pts, session.options, apply_clahe=False), "feature"


def update_labels(session: RefineSession, epoch: int) -> EventResult:
    """Regenerate every image's label for one update event.

    Per-image failures are collected in the result and do not stop the event;
    the session version increments once regardless.
    """
    version = session.current_version + 1
    result = EventResult(epoch=epoch, version=version)
    out_dir = epoch_dir(session.labels_dir, epoch)
    for image_id in session.image_ids:
        try:
            label, source = _generate(session, image_id, epoch)
        except (OSError, RasterError, ValueError, IndexError) as exc:
            logger.error("epoch %d, %s: %s", epoch, image_id, exc)
            result.failures[image_id] = str(exc)
            continue
        path = out_dir / f"{image_id}.png"
        payload = encode_u8(as_mask(label) * np.uint8(255), path)
        try:
            atomic_write_bytes(path, payload)
        except OSError as exc:
            raise SessionError(f"cannot write {path}: {exc}") from exc
        rec = LabelRecord(
            image_id=image_id,
            version=version,
            epoch=epoch,
            label_path=path.relative_to(session.labels_dir).as_posix(),
            source=source,
            sha256=hashlib.sha256(payload).hexdigest(),
        )
        session.append_record(rec)
        session.current_labels[image_id] = path
        result.records.append(rec)
    session.current_version = version
    return result


# ---------------------------------------------------------------------
# Surrogate trainer and the refinement loop
# ---------------------------------------------------------------------
def surrogate_feature_provider(label, sharpness: float) -> np.ndarray:
    """Gaussian-blurred label (std = *sharpness*) standing in for a network feature map."""
    if not sharpness > 0:
        raise ValueError(f"sharpness must be > 0, got {sharpness}")
    m = as_mask(label).astype(np.float64)
    return ndimage.gaussian_filter(m, sigma=sharpness, mode="nearest")


def write_surrogate_features(session: RefineSession, epoch: int, sharpness: float) -> None:
    out = epoch_dir(session.features_dir, epoch)
    for image_id in session.image_ids:
        label_path = session.current_labels.get(image_id)
        if label_path is None:
            continue
        feature = surrogate_feature_provider(read_raster(label_path, "mask"), sharpness)
        write_f32_raster(feature, out / f"{image_id}.f32r")


def current_mean_iou(session: RefineSession) -> Optional[float]:
    scores = []
    for image_id, gt_path in sorted(session.gt.items()):
        label_path = session.current_labels.get(image_id)
        if label_path is None:
            continue
        scores.append(mask_iou(read_raster(label_path, "mask"), read_raster(gt_path, "mask")))
    return float(np.mean(scores)) if scores else None


@dataclass
class RefineReport:
    events: list[EventResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(not e.failures for e in self.events)

    def lines(self) -> list[str]:
        out = []
        for e in self.events:
            status = "FAILED" if e.fully_failed else ("partial" if e.failures else "ok")
            line = f"epoch {e.epoch:4d}  version {e.version}  labels {len(e.records)}  failures {len(e.failures)}  {status}"
            if e.mean_iou is not None:
                line += f"  mean_iou {e.mean_iou:.6f}"
            out.append(line)
            for image_id, msg in sorted(e.failures.items()):
                out.append(f"    {image_id}: {msg}")
        return out


def run_refinement(
    session: RefineSession,
    schedule: RefineSchedule,
    provider: str = "files",
    sharpness: Sequence[float] = DEFAULT_SHARPNESS,
) -> RefineReport:
    """Run every scheduled update event in order.

    ``provider="files"`` expects the trainer to have written feature maps for
    each epoch > 0. ``provider="surrogate"`` writes them itself by blurring the
    current labels, with the k-th feature-sourced event using
    ``sharpness[min(k - 1, len - 1)]``.
    """
    if provider not in ("files", "surrogate"):
        raise ValueError(f"unknown provider {provider!r}")
    if provider == "surrogate" and not sharpness:
        raise ValueError("surrogate provider needs at least one sharpness value")
    report = RefineReport()
    feature_events = 0
    for epoch in schedule.update_epochs:
        if epoch > 0 and provider == "surrogate":
            feature_events += 1
            sigma = sharpness[min(feature_events - 1, len(sharpness) - 1)]
            try:
                write_surrogate_features(session, epoch, sigma)
            except (OSError, RasterError) as exc:
                raise SessionError(f"surrogate features for epoch {epoch}: {exc}") from exc
        result = update_labels(session, epoch)
        if session.gt:
            result.mean_iou = current_mean_iou(session)
        logger.info(
            "epoch %d: %d labels, %d failures", epoch, len(result.records), len(result.failures)
        )
        report.events.append(result)
    return report
