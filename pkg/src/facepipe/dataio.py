"""Image loading, dataset manifests, and deterministic train/test splits.

A grayscale image is a numpy array of shape (height, width) with float64
intensities in [0, 1]. Manifests are plain text files with one
`relative_path,label,subject` record per line; labels must form a
contiguous range starting at 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, InsufficientSamplesError, ValidationError

GrayImage = np.ndarray

# BT.601 luma weights scaled by 1000 so that equal channels reduce exactly.
_LUMA = (299.0, 587.0, 114.0)


def load_image(path: str | Path) -> GrayImage:
    """Load an 8-bit grayscale or RGB raster file as intensities in [0, 1].

    RGB is reduced with BT.601 luma. Unreadable files raise OSError;
    unsupported or corrupt content raises FormatError.
    """
    path = Path(path)
    try:
        img = Image.open(path)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a supported raster file") from exc
    # OSError from Image.open (missing file, permissions) propagates as-is.
    try:
        with img:
            img.load()
            if img.mode in ("P", "RGBA"):
                img = img.convert("RGB")
            elif img.mode == "LA":
                img = img.convert("L")
            if img.mode == "L":
                arr = np.asarray(img, dtype=np.float64) / 255.0
            elif img.mode == "RGB":
                rgb = np.asarray(img, dtype=np.float64)
                r, g, b = _LUMA
                arr = (r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]) / 255000.0
            else:
                raise FormatError(f"{path}: unsupported image mode {img.mode!r}")
    except FormatError:
        raise
    except OSError as exc:
        raise FormatError(f"{path}: truncated or corrupt image data") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise FormatError(f"{path}: expected a non-empty 2-D image")
    return arr


def save_image(img: GrayImage, path: str | Path) -> None:
    """Write intensities in [0, 1] as an 8-bit grayscale file (format by suffix)."""
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(Path(path))


def resize(img: GrayImage, w: int, h: int) -> GrayImage:
    """Bilinear resample to h rows by w columns, sampling at pixel centers.

    Same-size calls reproduce the input exactly; outputs stay in the convex
    hull of the inputs.
    """
    if w < 1 or h < 1:
        raise ValidationError(f"target size must be at least 1x1, got {w}x{h}")
    img = np.asarray(img, dtype=np.float64)
    src_h, src_w = img.shape

    xs = np.clip((np.arange(w) + 0.5) * (src_w / w) - 0.5, 0.0, src_w - 1.0)
    ys = np.clip((np.arange(h) + 0.5) * (src_h / h) - 0.5, 0.0, src_h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = xs - x0
    fy = (ys - y0)[:, None]

    top = (1.0 - fx) * img[np.ix_(y0, x0)] + fx * img[np.ix_(y0, x1)]
    bot = (1.0 - fx) * img[np.ix_(y1, x0)] + fx * img[np.ix_(y1, x1)]
    return (1.0 - fy) * top + fy * bot


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    subject: str


@dataclass
class DatasetManifest:
    """List of (path, label, subject) records rooted at a directory."""

    entries: list[ManifestEntry]
    class_count: int
    root: Path

    def __len__(self) -> int:
        return len(self.entries)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def image_path(self, index: int) -> Path:
        return self.root / self.entries[index].path


def _validate_entries(entries: list[ManifestEntry], source: str) -> int:
    if not entries:
        raise ValidationError(f"{source}: manifest has no records")
    paths = [e.path for e in entries]
    if len(set(paths)) != len(paths):
        dup = sorted({p for p in paths if paths.count(p) > 1})[0]
        raise ValidationError(f"{source}: duplicate path {dup!r}")
    labels = sorted({e.label for e in entries})
    if labels[0] != 0 or labels != list(range(len(labels))):
        raise ValidationError(
            f"{source}: labels must form a contiguous range starting at 0, got {labels}"
        )
    return len(labels)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a `relative_path,label,subject` manifest. Blank lines and lines
    starting with '#' are ignored."""
    path = Path(path)
    entries: list[ManifestEntry] = []
    with open(path, encoding="utf-8") as fh:
        kept = [(i + 1, ln) for i, ln in enumerate(fh) if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(io.StringIO("".join(ln for _, ln in kept)))
    for (lineno, _), row in zip(kept, reader):
        if len(row) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        rel, label_s, subject = (field.strip() for field in row)
        try:
            label = int(label_s)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: label {label_s!r} is not an integer") from exc
        entries.append(ManifestEntry(rel, label, subject))
    class_count = _validate_entries(entries, str(path))
    return DatasetManifest(entries, class_count, path.parent)


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    _validate_entries(list(entries), str(path))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for e in entries:
            writer.writerow([e.path, e.label, e.subject])


@dataclass(frozen=True)
class SplitSpec:
    """Per-class sampling sizes. test_per_class=None assigns the rest to test."""

    seed: int
    train_per_class: int
    test_per_class: int | None = None


def make_split(manifest: DatasetManifest, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw a deterministic per-class train/test split of manifest indices."""
    if spec.train_per_class < 1:
        raise ValidationError("train_per_class must be at least 1")
    if spec.test_per_class is not None and spec.test_per_class < 0:
        raise ValidationError("test_per_class must be nonnegative")
    labels = manifest.labels()
    rng = np.random.default_rng(spec.seed)
    train: list[np.ndarray] = []
    test: list[np.ndarray] = []
    for c in range(manifest.class_count):
        idx = np.flatnonzero(labels == c)
        need = spec.train_per_class + (spec.test_per_class or 0)
        if idx.size < need:
            raise InsufficientSamplesError(
                f"class {c}: has {idx.size} samples, split needs {need}"
            )
        perm = idx[rng.permutation(idx.size)]
        train.append(perm[: spec.train_per_class])
        if spec.test_per_class is None:
            test.append(perm[spec.train_per_class :])
        else:
            test.append(perm[spec.train_per_class : spec.train_per_class + spec.test_per_class])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
