"""Penultimate-layer feature export over a class-per-folder image tree.

The folder layout is one subdirectory per class; subdirectory names in
sorted order define label ids 0..L-1, and files are processed in sorted
path order, so repeated exports of the same tree are byte-identical.
Inference runs in eval mode on a single thread with no augmentation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .writer import write_impd

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".gif", ".tiff"}

# ImageNet statistics, the preprocessing the supported backbones expect
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass
class ExportManifest:
    image_dir: str
    output_path: str
    model: str = "squeezenet1_1"       # squeezenet1_1 | resnet18
    weights: str = "pretrained"        # pretrained | random
    resize_edge: int = 256
    crop: str = "none"                 # none | center
    crop_size: int = 224
    batch_size: int = 32
    init_seed: int = 0                 # weight seed for weights="random"
    skipped_report: str | None = None  # defaults to <output>.skipped.txt

    def __post_init__(self):
        if self.model not in ("squeezenet1_1", "resnet18"):
            raise ValueError(f"unsupported model {self.model!r}")
        if self.weights not in ("pretrained", "random"):
            raise ValueError(f"weights must be 'pretrained' or 'random'")
        if self.crop not in ("none", "center"):
            raise ValueError(f"unknown crop mode {self.crop!r}")
        if self.resize_edge < 8 or self.crop_size < 8:
            raise ValueError("degenerate image size")
        if self.crop == "center" and self.crop_size > self.resize_edge:
            raise ValueError("crop size exceeds resize edge")


class FeatureExtractor:
    """Backbone with the classifier removed; emits pooled features."""

    def __init__(self, manifest: ExportManifest):
        import torchvision.models as models

        torch.set_num_threads(1)
        if manifest.weights == "random":
            torch.manual_seed(manifest.init_seed)
            weights = None
        else:
            weights = "IMAGENET1K_V1"
        if manifest.model == "squeezenet1_1":
            net = models.squeezenet1_1(weights=weights)
            self._body = net.features
            self.dim = 512
        else:
            net = models.resnet18(weights=weights)
            self._body = torch.nn.Sequential(
                *list(net.children())[:-1])
            self.dim = 512
        self._body.eval()

    @torch.no_grad()
    def __call__(self, batch: torch.Tensor) -> np.ndarray:
        out = self._body(batch)
        if out.ndim == 4:
            out = torch.nn.functional.adaptive_avg_pool2d(out, 1)
        return out.flatten(1).numpy().astype(np.float32)


def _list_classes(root: Path) -> list[Path]:
    classes = sorted(p for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ValueError(f"{root}: no class subdirectories")
    return classes


def _list_images(class_dir: Path) -> list[Path]:
    return sorted(p for p in class_dir.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _load_image(path: Path, manifest: ExportManifest) -> np.ndarray:
    with Image.open(path) as img:
        img = img.convert("RGB").resize(
            (manifest.resize_edge, manifest.resize_edge), Image.BILINEAR)
        if manifest.crop == "center":
            lo = (manifest.resize_edge - manifest.crop_size) // 2
            img = img.crop((lo, lo, lo + manifest.crop_size,
                            lo + manifest.crop_size))
        arr = np.asarray(img, dtype=np.float32) / 255.0
    return ((arr - _MEAN) / _STD).transpose(2, 0, 1)


@dataclass
class ExportResult:
    count: int
    dim: int
    n_classes: int
    class_names: list[str]
    skipped: list[str] = field(default_factory=list)


def export(manifest: ExportManifest) -> ExportResult:
    """Run the backbone over the tree and write the dataset file."""
    root = Path(manifest.image_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    classes = _list_classes(root)
    extractor = FeatureExtractor(manifest)

    arrays, labels, skipped = [], [], []
    for label, class_dir in enumerate(classes):
        loaded = []
        for path in _list_images(class_dir):
            try:
                loaded.append(_load_image(path, manifest))
            except (OSError, UnidentifiedImageError) as exc:
                warnings.warn(f"skipping unreadable image {path}: {exc}")
                skipped.append(str(path))
        if not loaded:
            raise ValueError(f"class folder {class_dir} has no readable "
                             "images")
        for start in range(0, len(loaded), manifest.batch_size):
            batch = torch.from_numpy(
                np.stack(loaded[start:start + manifest.batch_size]))
            arrays.append(extractor(batch))
        labels.extend([label] * len(loaded))

    vectors = np.concatenate(arrays)
    write_impd(manifest.output_path, vectors,
               np.asarray(labels, dtype=np.int64), len(classes))

    report_path = manifest.skipped_report \
        or f"{manifest.output_path}.skipped.txt"
    if skipped:
        Path(report_path).write_text("\n".join(skipped) + "\n")
    return ExportResult(count=vectors.shape[0], dim=vectors.shape[1],
                        n_classes=len(classes),
                        class_names=[c.name for c in classes],
                        skipped=skipped)
