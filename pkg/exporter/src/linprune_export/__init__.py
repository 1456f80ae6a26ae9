"""Bridge from the torch ecosystem to linprune's LNDP/LNDS file formats."""

from .cifar import (
    CIFAR10_MEAN,
    CIFAR10_STD,
    export_batch,
    load_cifar10,
    normalize_images,
)
from .convert import ExportError, ExportManifest, export_model, sha256_of, verify_parity
from .lndp_writer import write_batch, write_model_from_descriptors
from .vgg import VGG_CFGS, CifarVGG, build_cifar_vgg, load_checkpoint, make_features

__all__ = [
    "CIFAR10_MEAN",
    "CIFAR10_STD",
    "CifarVGG",
    "ExportError",
    "ExportManifest",
    "VGG_CFGS",
    "build_cifar_vgg",
    "export_batch",
    "export_model",
    "load_checkpoint",
    "load_cifar10",
    "make_features",
    "normalize_images",
    "sha256_of",
    "verify_parity",
    "write_batch",
    "write_model_from_descriptors",
]
