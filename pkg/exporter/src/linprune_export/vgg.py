"""CIFAR-style VGG construction and checkpoint loading.

Covers the layout used by the common CIFAR training recipes: a cfg-driven
feature stack of 3x3 convolutions (optionally with BatchNorm) and a small
linear classifier on the final 512 x 1 x 1 activation.
"""

from __future__ import annotations

import torch
from torch import nn

from .convert import ExportError

VGG_CFGS = {
    "vgg11": [64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"],
    "vgg13": [64, 64, "M", 128, 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"],
    "vgg16": [64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
              512, 512, 512, "M", 512, 512, 512, "M"],
    "vgg19": [64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
              512, 512, 512, 512, "M", 512, 512, 512, 512, "M"],
}


def make_features(cfg, batch_norm: bool) -> nn.Sequential:
    layers: list[nn.Module] = []
    c_in = 3
    for item in cfg:
        if item == "M":
            layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
            continue
        layers.append(nn.Conv2d(c_in, item, kernel_size=3, padding=1))
        if batch_norm:
            layers.append(nn.BatchNorm2d(item))
        layers.append(nn.ReLU(inplace=True))
        c_in = item
    return nn.Sequential(*layers)


def _classifier_from_state_dict(state_dict) -> nn.Module:
    """Rebuild the classifier MLP from its Linear shapes.

    ReLU (and Dropout, which exports as identity) is assumed between
    consecutive Linear layers; the parity check catches any checkpoint
    that deviates.
    """
    linear_keys = sorted(
        int(parts[1])
        for parts in (key.split(".") for key in state_dict)
        if len(parts) == 3 and parts[0] == "classifier"
        and parts[2] == "weight" and parts[1].isdigit()
    )
    if not linear_keys:
        if "classifier.weight" in state_dict:
            out_f, in_f = state_dict["classifier.weight"].shape
            return nn.Linear(in_f, out_f, bias="classifier.bias" in state_dict)
        raise ExportError("state dict has no classifier.* linear weights")
    modules: dict[int, nn.Module] = {}
    for pos, idx in enumerate(linear_keys):
        out_f, in_f = state_dict[f"classifier.{idx}.weight"].shape
        modules[idx] = nn.Linear(in_f, out_f,
                                 bias=f"classifier.{idx}.bias" in state_dict)
        if pos < len(linear_keys) - 1:
            modules.setdefault(idx + 1, nn.ReLU(inplace=True))
    top = max(modules)
    return nn.Sequential(*(modules.get(i, nn.Identity()) for i in range(top + 1)))


class CifarVGG(nn.Module):
    # submodule registration order matches execution order; the export
    # walker relies on that
    def __init__(self, features: nn.Sequential, classifier: nn.Module):
        super().__init__()
        self.features = features
        self.flatten = nn.Flatten()
        self.classifier = classifier

    def forward(self, x):
        return self.classifier(self.flatten(self.features(x)))


def build_cifar_vgg(arch: str = "vgg16", batch_norm: bool = True,
                    num_classes: int = 10) -> CifarVGG:
    if arch not in VGG_CFGS:
        raise ExportError(f"unknown VGG variant {arch!r}; choose from {sorted(VGG_CFGS)}")
    features = make_features(VGG_CFGS[arch], batch_norm)
    classifier = nn.Sequential(nn.Linear(512, num_classes))
    return CifarVGG(features, classifier)


def load_checkpoint(path, arch: str = "vgg16") -> nn.Module:
    """Load a checkpoint holding either a full module or a state dict."""
    obj = torch.load(path, map_location="cpu", weights_only=False)
    if isinstance(obj, nn.Module):
        return obj.eval()
    if isinstance(obj, dict):
        state_dict = obj.get("state_dict", obj.get("model", obj))
        if not isinstance(state_dict, dict):
            raise ExportError(f"{path}: unrecognized checkpoint structure")
        state_dict = {k.removeprefix("module."): v for k, v in state_dict.items()}
        batch_norm = any("features" in k and "running_mean" in k for k in state_dict)
        if arch not in VGG_CFGS:
            raise ExportError(f"unknown VGG variant {arch!r}")
        model = CifarVGG(make_features(VGG_CFGS[arch], batch_norm),
                         _classifier_from_state_dict(state_dict))
        missing, unexpected = model.load_state_dict(state_dict, strict=False)
        real_missing = [k for k in missing if "num_batches_tracked" not in k]
        if real_missing or unexpected:
            raise ExportError(
                f"{path}: state dict does not match a CIFAR {arch} layout "
                f"(missing {real_missing[:4]}, unexpected {list(unexpected)[:4]})"
            )
        return model.eval()
    raise ExportError(f"{path}: unrecognized checkpoint object {type(obj).__name__}")
