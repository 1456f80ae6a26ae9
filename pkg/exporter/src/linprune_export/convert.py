"""Convert sequential torch classifiers into LNDP files.

The walker flattens the module tree in execution order, accepts only the
layer set the target format supports, tracks activation shapes so
adaptive pooling can be lowered and the features->classifier flatten can
be inserted, and records a manifest mapping every emitted layer back to
its source module.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .lndp_writer import write_model_from_descriptors


class ExportError(ValueError):
    """Checkpoint cannot be represented in the target format."""


@dataclass
class ExportManifest:
    source: str
    input_shape: list[int]
    layer_map: list[dict] = field(default_factory=list)
    normalization: dict | None = None
    class_labels: list[str] | None = None
    checksums: dict = field(default_factory=dict)
    skipped_modules: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "input_shape": self.input_shape,
            "layer_map": self.layer_map,
            "normalization": self.normalization,
            "class_labels": self.class_labels,
            "checksums": self.checksums,
            "skipped_modules": self.skipped_modules,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _tensor(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().contiguous().numpy().astype(np.float32, copy=False)


def _pair(value, name: str, qualname: str) -> int:
    if isinstance(value, (tuple, list)):
        if len(value) != 2 or value[0] != value[1]:
            raise ExportError(f"{qualname}: only square {name} supported, got {value}")
        return int(value[0])
    return int(value)


def _iter_leaves(module: nn.Module, prefix: str = ""):
    children = list(module.named_children())
    if not children:
        yield prefix or type(module).__name__.lower(), module
        return
    for name, child in children:
        yield from _iter_leaves(child, f"{prefix}.{name}" if prefix else name)


def module_to_descriptors(model: nn.Module, input_shape) -> tuple[list, list[dict], list[dict]]:
    """Walk a torch module into (kind, fields) descriptors.

    Returns the descriptors, the layer map for the manifest, and the list
    of skipped inference-identity modules. Raises :class:`ExportError` on
    anything the format cannot hold.
    """
    model = model.eval()
    shape = tuple(int(d) for d in input_shape)
    descriptors: list = []
    layer_map: list[dict] = []
    skipped: list[dict] = []

    def emit(kind: str, fields: dict, qualname: str):
        descriptors.append((kind, fields))
        layer_map.append({"index": len(descriptors) - 1, "kind": kind, "source": qualname})

    for qualname, mod in _iter_leaves(model):
        if isinstance(mod, nn.Conv2d):
            if mod.groups != 1:
                raise ExportError(f"{qualname}: grouped convolutions not supported")
            if _pair(mod.dilation, "dilation", qualname) != 1:
                raise ExportError(f"{qualname}: dilation not supported")
            k = _pair(mod.kernel_size, "kernel", qualname)
            stride = _pair(mod.stride, "stride", qualname)
            padding = _pair(mod.padding, "padding", qualname)
            if len(shape) != 3 or shape[0] != mod.in_channels:
                raise ExportError(f"{qualname}: expects {mod.in_channels} channels, input is {shape}")
            fields = {
                "stride": stride,
                "padding": padding,
                "weights": _tensor(mod.weight),
                "bias": _tensor(mod.bias) if mod.bias is not None else None,
            }
            emit("conv2d", fields, qualname)
            out = (shape[1] + 2 * padding - k) // stride + 1
            shape = (mod.out_channels, out, out)
        elif isinstance(mod, nn.BatchNorm2d):
            if mod.running_mean is None or mod.running_var is None:
                raise ExportError(f"{qualname}: batchnorm has no running statistics")
            c = mod.num_features
            weight = mod.weight if mod.weight is not None else torch.ones(c)
            bias = mod.bias if mod.bias is not None else torch.zeros(c)
            emit("batchnorm", {
                "epsilon": float(mod.eps),
                "gamma": _tensor(weight),
                "beta": _tensor(bias),
                "running_mean": _tensor(mod.running_mean),
                "running_var": _tensor(mod.running_var),
            }, qualname)
        elif isinstance(mod, nn.ReLU):
            emit("activation", {"op": "relu"}, qualname)
        elif isinstance(mod, (nn.MaxPool2d, nn.AvgPool2d)):
            window = _pair(mod.kernel_size, "window", qualname)
            stride = _pair(mod.stride if mod.stride is not None else mod.kernel_size,
                           "stride", qualname)
            if _pair(mod.padding, "padding", qualname) != 0:
                raise ExportError(f"{qualname}: padded pooling not supported")
            if getattr(mod, "ceil_mode", False):
                raise ExportError(f"{qualname}: ceil_mode pooling not supported")
            op = "max" if isinstance(mod, nn.MaxPool2d) else "avg"
            emit("pool", {"op": op, "window": window, "stride": stride}, qualname)
            shape = (shape[0], (shape[1] - window) // stride + 1,
                     (shape[2] - window) // stride + 1)
        elif isinstance(mod, nn.AdaptiveAvgPool2d):
            target = mod.output_size
            target = (target, target) if isinstance(target, int) else tuple(target)
            if len(shape) != 3:
                raise ExportError(f"{qualname}: adaptive pool on non-spatial input {shape}")
            if shape[1] % target[0] or shape[2] % target[1] or target[0] != target[1]:
                raise ExportError(
                    f"{qualname}: adaptive pool {shape[1:]} -> {target} not lowerable"
                )
            window = shape[1] // target[0]
            if window == 1:
                skipped.append({"source": qualname, "reason": "identity adaptive pool"})
                continue
            emit("pool", {"op": "avg", "window": window, "stride": window}, qualname)
            shape = (shape[0], target[0], target[1])
        elif isinstance(mod, nn.Flatten):
            if len(shape) == 3:
                emit("flatten", {}, qualname)
                shape = (shape[0] * shape[1] * shape[2],)
            else:
                skipped.append({"source": qualname, "reason": "flatten of flat input"})
        elif isinstance(mod, nn.Linear):
            if len(shape) == 3:
                # implicit features->classifier transition
                descriptors.append(("flatten", {}))
                layer_map.append({"index": len(descriptors) - 1, "kind": "flatten",
                                  "source": f"{qualname} (implicit flatten)"})
                shape = (shape[0] * shape[1] * shape[2],)
            if shape[0] != mod.in_features:
                raise ExportError(
                    f"{qualname}: expects {mod.in_features} inputs, input is {shape}"
                )
            emit("dense", {
                "weights": _tensor(mod.weight),
                "bias": _tensor(mod.bias) if mod.bias is not None else None,
            }, qualname)
            shape = (mod.out_features,)
        elif isinstance(mod, (nn.Dropout, nn.Dropout2d, nn.Identity)):
            skipped.append({"source": qualname, "reason": "identity at inference"})
        else:
            raise ExportError(f"unsupported module type {type(mod).__name__} at {qualname}")

    return descriptors, layer_map, skipped


def export_model(model: nn.Module, input_shape, out_path, manifest_path=None,
                 source: str = "<module>", class_labels=None) -> ExportManifest:
    """Emit a torch module as an LNDP file plus its manifest."""
    descriptors, layer_map, skipped = module_to_descriptors(model, input_shape)
    write_model_from_descriptors(out_path, input_shape, descriptors,
                                 metadata={"source": source})
    manifest = ExportManifest(
        source=source,
        input_shape=[int(d) for d in input_shape],
        layer_map=layer_map,
        class_labels=list(class_labels) if class_labels else None,
        skipped_modules=skipped,
    )
    manifest.checksums[str(out_path)] = sha256_of(out_path)
    if manifest_path is not None:
        manifest.save(manifest_path)
    return manifest


def verify_parity(model: nn.Module, lndp_path, probe_images: np.ndarray) -> float:
    """Max-abs logit difference between torch and the exported file.

    The exported model is read back through the linprune loader and run
    with its engine, so the check crosses the file-format contract.
    """
    from linprune import forward, load_model

    model = model.eval()
    with torch.no_grad():
        torch_logits = model(torch.from_numpy(probe_images)).numpy()
    kit_logits = forward(load_model(lndp_path), probe_images)
    return float(np.max(np.abs(torch_logits - kit_logits)))
