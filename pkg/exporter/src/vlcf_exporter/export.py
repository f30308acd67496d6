"""Export jobs: images or caption text to VLCF feature files."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import IMAGE_BACKBONES, ClipTextEncoder, build_image_model
from .vlcf import write_vlcf

log = logging.getLogger("vlcf_exporter")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class JobError(RuntimeError):
    pass


@dataclass
class ExportJob:
    source: Path  # image directory, or caption CSV for text jobs
    backbone: str
    output: Path
    weights: str = "pinned"  # pinned | none (seeded random init)
    seed: int = 0
    batch_size: int = 8
    caption_column: str = "caption"  # text jobs only


def _stem(path: Path) -> str:
    return path.stem


def load_pixels(path: Path, spec) -> np.ndarray | None:
    """Decode, resize and normalize one image; None if undecodable."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((spec.resize, spec.resize), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0  # [0, 1] range
    except Exception as exc:  # decoding failures are per-file, not fatal
        log.warning("skipping undecodable image %s (%s)", path.name, exc)
        return None
    if spec.mean is not None:
        arr = (arr - np.array(spec.mean, dtype=np.float32)) / np.array(
            spec.std, dtype=np.float32
        )
    return arr.transpose(2, 0, 1)  # CHW


@torch.no_grad()
def export_image_features(job: ExportJob) -> Path:
    """One VLCF record per decodable image; ids are filename stems."""
    spec = IMAGE_BACKBONES.get(job.backbone)
    if spec is None:
        raise JobError(f"unknown image backbone {job.backbone!r}")
    paths = sorted(
        p for p in Path(job.source).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise JobError(f"no images found under {job.source}")
    model = build_image_model(job.backbone, job.weights, job.seed)

    records: list[tuple[str, np.ndarray]] = []
    pending: list[tuple[str, np.ndarray]] = []

    def flush() -> None:
        if not pending:
            return
        batch = torch.from_numpy(np.stack([arr for _, arr in pending]))
        features = model(batch).numpy().astype(np.float32)
        for (record_id, _), vec in zip(pending, features):
            records.append((record_id, vec))
        pending.clear()

    for path in paths:
        arr = load_pixels(path, spec)
        if arr is None:
            continue
        pending.append((_stem(path), arr))
        if len(pending) >= job.batch_size:
            flush()
    flush()
    if not records:
        raise JobError(f"no image under {job.source} could be exported")
    write_vlcf(job.output, spec.dim, records)
    log.info("wrote %d x %d-d features to %s", len(records), spec.dim, job.output)
    return Path(job.output)


def export_text_features(job: ExportJob) -> Path:
    """One VLCF record per non-empty caption; ids are the image ids, so
    the consumer joins image and text vectors by id."""
    if job.backbone != "clip-text":
        raise JobError(f"text export supports clip-text, got {job.backbone!r}")
    encoder = ClipTextEncoder(job.weights, job.seed)
    records: list[tuple[str, np.ndarray]] = []
    with Path(job.source).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "image" not in reader.fieldnames:
            raise JobError(f"{job.source}: caption CSV needs an 'image' column")
        if job.caption_column not in reader.fieldnames:
            raise JobError(f"{job.source}: missing caption column {job.caption_column!r}")
        for row in reader:
            record_id = _stem(Path(row["image"]))
            text = (row[job.caption_column] or "").strip()
            if not text:
                log.warning("skipping %s: empty caption", record_id)
                continue
            records.append((record_id, encoder.encode(text)))
    if not records:
        raise JobError(f"no caption in {job.source} could be exported")
    write_vlcf(job.output, encoder.dim, records)
    log.info("wrote %d x %d-d text features to %s", len(records), encoder.dim, job.output)
    return Path(job.output)
