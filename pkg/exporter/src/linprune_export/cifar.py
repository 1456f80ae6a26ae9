"""CIFAR-10 archive loading and LNDS batch export.

Reads the standard ``cifar-10-batches-py`` pickle archive (the extracted
python-version tarball); images are normalized per channel and the
constants are recorded in the manifest so the emitted files stay
self-contained.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np

from .convert import ExportError, ExportManifest, sha256_of
from .lndp_writer import write_batch

# the de-facto standard per-channel statistics for CIFAR-10 training
CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2023, 0.1994, 0.2010)

TRAIN_FILES = [f"data_batch_{i}" for i in range(1, 6)]
TEST_FILES = ["test_batch"]


def _load_pickle(path: Path) -> dict:
    if not path.exists():
        raise ExportError(f"CIFAR archive file missing: {path}")
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_cifar10(data_dir, split: str = "test") -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Raw uint8 images (N, 3, 32, 32), labels (N,), and label names."""
    data_dir = Path(data_dir)
    files = {"train": TRAIN_FILES, "test": TEST_FILES}.get(split)
    if files is None:
        raise ExportError(f"split must be 'train' or 'test', got {split!r}")
    images, labels = [], []
    for name in files:
        entry = _load_pickle(data_dir / name)
        images.append(np.asarray(entry["data"], dtype=np.uint8).reshape(-1, 3, 32, 32))
        labels.extend(entry["labels"])
    meta = _load_pickle(data_dir / "batches.meta")
    names = [str(n) for n in meta.get("label_names", [])]
    return np.concatenate(images), np.asarray(labels, dtype=np.int64), names


def normalize_images(raw: np.ndarray,
                     mean=CIFAR10_MEAN, std=CIFAR10_STD) -> np.ndarray:
    x = raw.astype(np.float32) / np.float32(255.0)
    mean_arr = np.asarray(mean, dtype=np.float32)[None, :, None, None]
    std_arr = np.asarray(std, dtype=np.float32)[None, :, None, None]
    return (x - mean_arr) / std_arr


def export_batch(data_dir, out_path, count: int | None = None, indices=None,
                 split: str = "test", seed: int = 0, manifest_path=None,
                 mean=CIFAR10_MEAN, std=CIFAR10_STD) -> ExportManifest:
    """Emit a normalized, labelled LNDS batch from a CIFAR-10 archive.

    Selection is either an explicit index list or a seeded sample of
    ``count`` images, so a re-export with the same seed is byte-identical.
    """
    raw, labels, names = load_cifar10(data_dir, split)
    if indices is not None:
        selection = np.asarray(list(indices), dtype=np.int64)
    else:
        if count is None:
            raise ExportError("provide either indices or a count")
        if count > raw.shape[0]:
            raise ExportError(f"requested {count} images, split has {raw.shape[0]}")
        rng = np.random.default_rng(seed)
        selection = np.sort(rng.choice(raw.shape[0], size=count, replace=False))
    if selection.size == 0:
        raise ExportError("empty selection")
    if selection.min() < 0 or selection.max() >= raw.shape[0]:
        raise ExportError(f"indices out of range for split of {raw.shape[0]} images")

    images = normalize_images(raw[selection], mean, std)
    write_batch(out_path, images, labels=labels[selection], num_classes=10)
    manifest = ExportManifest(
        source=str(Path(data_dir) / split),
        input_shape=[3, 32, 32],
        normalization={"mean": list(mean), "std": list(std), "scale": "1/255"},
        class_labels=names or None,
    )
    manifest.layer_map = []
    manifest.checksums[str(out_path)] = sha256_of(out_path)
    if manifest_path is not None:
        manifest.save(manifest_path)
    return manifest
