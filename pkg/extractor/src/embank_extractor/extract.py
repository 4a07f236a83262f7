"""Extraction pipeline: images grouped by class folder -> bank file.

The dataset layout is ``root[/split]/class_name/*.{png,jpg,...}``.  Images
are decoded with Pillow, resized, scaled to [0, 1], optionally normalized
with the usual ImageNet statistics, and pushed through the backbone in
batches.  The pipeline aborts (rather than writing a corrupt bank) when the
backbone's output width disagrees with its declared feature dimension or
when any feature is negative, which indicates the checkpoint was not tapped
after a ReLU.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backbones import build_backbone
from .bankfile import write_binary_bank, write_csv_bank

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp", ".img")

_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass
class ExtractionJob:
    """One export: which backbone, which images, where the bank goes."""

    backbone: str
    checkpoint: str | None
    data_root: str
    out_path: str
    split: str | None = None
    batch_size: int = 32
    device: str = "cpu"
    image_size: int = 84
    normalize: bool = True
    out_format: str = "binary"

    def dataset_dir(self) -> Path:
        root = Path(self.data_root)
        return root / self.split if self.split else root


def _load_image(path: Path, size: int, normalize: bool) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    if normalize:
        arr = (arr - _IMAGENET_MEAN) / _IMAGENET_STD
    return arr.transpose(2, 0, 1)  # HWC -> CHW


def _class_folders(dataset: Path) -> list[tuple[str, list[Path]]]:
    if not dataset.is_dir():
        raise FileNotFoundError(f"dataset directory '{dataset}' does not exist")
    folders = sorted(p for p in dataset.iterdir() if p.is_dir())
    classes = []
    for folder in folders:
        images = sorted(
            p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if images:
            classes.append((folder.name, images))
    if not classes:
        raise FileNotFoundError(
            f"no class folders with images under '{dataset}' "
            f"(expected root/class_name/*{IMAGE_SUFFIXES[0]} etc.)"
        )
    return classes


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_extraction(job: ExtractionJob, backbone=None) -> dict:
    """Extract every image and write the bank; returns a small summary.

    ``backbone`` can be injected for tests; by default it is built from
    ``job.backbone`` and, for torch backbones, loaded from
    ``job.checkpoint``.
    """
    if backbone is None:
        backbone = build_backbone(job.backbone, device=job.device)
        checkpoint_digest = "none"
        if job.backbone != "stub":
            if not job.checkpoint:
                raise ValueError(
                    f"backbone '{job.backbone}' needs --checkpoint with "
                    "pretrained weights"
                )
            backbone.load_checkpoint(job.checkpoint)
            checkpoint_digest = f"sha256:{_sha256_file(job.checkpoint)}"
    else:
        checkpoint_digest = "injected"

    classes = _class_folders(job.dataset_dir())
    class_names: list[str] = []
    vectors_by_class: list[np.ndarray] = []
    total = 0
    for name, images in classes:
        feats = []
        for start in range(0, len(images), job.batch_size):
            chunk = images[start : start + job.batch_size]
            batch = np.stack(
                [_load_image(p, job.image_size, job.normalize) for p in chunk]
            )
            out = np.asarray(backbone.embed(batch), dtype=np.float64)
            if out.ndim != 2 or out.shape[0] != len(chunk):
                raise RuntimeError(
                    f"backbone returned shape {out.shape} for a batch of "
                    f"{len(chunk)} images"
                )
            if out.shape[1] != backbone.feature_dim:
                raise RuntimeError(
                    f"feature width {out.shape[1]} does not match the "
                    f"declared {backbone.feature_dim} for '{job.backbone}'; "
                    "wrong checkpoint or feature tap"
                )
            if (out < 0.0).any():
                worst = float(out.min())
                raise RuntimeError(
                    f"negative feature values (min {worst:.4g}) in class "
                    f"'{name}': the tap point is not the output of a ReLU, "
                    "so the bank contract would be violated; aborting"
                )
            feats.append(out)
        vectors = np.concatenate(feats, axis=0)
        class_names.append(name)
        vectors_by_class.append(vectors)
        total += vectors.shape[0]

    provenance = (
        f"backbone={job.backbone} checkpoint={checkpoint_digest} "
        f"data_root={Path(job.data_root).name} split={job.split or 'all'} "
        f"images={total} image_size={job.image_size} "
        f"normalize={job.normalize}"
    )
    if job.out_format == "csv":
        write_csv_bank(job.out_path, class_names, vectors_by_class)
    else:
        write_binary_bank(job.out_path, class_names, vectors_by_class, provenance)
    return {
        "classes": len(class_names),
        "vectors": total,
        "dim": backbone.feature_dim,
        "out_path": str(job.out_path),
        "provenance": provenance,
    }
