"""Bit-exact on-disk formats for models (LNDP) and calibration batches (LNDS).

Layout of both formats::

    magic (4 bytes) | version (u32 LE) | header length (u64 LE)
    | UTF-8 JSON header | payload of raw little-endian float32

The header describes each layer (or the image tensor) and addresses weight
blobs by byte offset and length inside the payload. Weights round-trip
bitwise; integer labels and scalar hyperparameters live in the JSON header.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    HeaderPayloadMismatchError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .layers import (
    Activation,
    BatchNorm,
    CalibrationBatch,
    Conv2D,
    Dense,
    Flatten,
    Model,
    Pool,
    validate,
)

MODEL_MAGIC = b"LNDP"
BATCH_MAGIC = b"LNDS"
FORMAT_VERSION = 1


class _PayloadWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def add(self, array: np.ndarray) -> dict:
        data = np.ascontiguousarray(array, dtype="<f4").tobytes()
        ref = {"shape": list(array.shape), "offset": self.offset, "length": len(data)}
        self.chunks.append(data)
        self.offset += len(data)
        return ref

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


def _layer_header(layer, payload: _PayloadWriter) -> dict:
    if isinstance(layer, Conv2D):
        return {
            "kind": "conv2d",
            "stride": layer.stride,
            "padding": layer.padding,
            "weights": payload.add(layer.weights),
            "bias": payload.add(layer.bias) if layer.bias is not None else None,
        }
    if isinstance(layer, BatchNorm):
        return {
            "kind": "batchnorm",
            "epsilon": layer.epsilon,
            "gamma": payload.add(layer.gamma),
            "beta": payload.add(layer.beta),
            "running_mean": payload.add(layer.running_mean),
            "running_var": payload.add(layer.running_var),
        }
    if isinstance(layer, Activation):
        return {"kind": "activation", "op": layer.kind}
    if isinstance(layer, Pool):
        return {"kind": "pool", "op": layer.kind, "window": layer.window, "stride": layer.stride}
    if isinstance(layer, Flatten):
        return {"kind": "flatten"}
    if isinstance(layer, Dense):
        return {
            "kind": "dense",
            "weights": payload.add(layer.weights),
            "bias": payload.add(layer.bias) if layer.bias is not None else None,
        }
    raise FormatError(f"cannot serialize layer type {type(layer).__name__}")


def _write_file(path, magic: bytes, header: dict, payload: bytes) -> None:
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def _read_file(path, magic: bytes) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != magic:
        raise BadMagicError(
            f"{path}: expected magic {magic!r}, found {bytes(raw[:4])!r}"
        )
    if len(raw) < 16:
        raise TruncatedPayloadError(f"{path}: file too short for the fixed header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
        )
    (header_len,) = struct.unpack_from("<Q", raw, 8)
    header_end = 16 + header_len
    if header_end > len(raw):
        raise TruncatedPayloadError(
            f"{path}: declared header length {header_len} extends past end of file"
        )
    try:
        header = json.loads(raw[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: header is not valid JSON ({exc})") from exc
    return header, raw[header_end:]


class _PayloadReader:
    def __init__(self, payload: bytes, path):
        self.payload = payload
        self.path = path
        self.max_end = 0

    def get(self, ref: dict, name: str) -> np.ndarray:
        try:
            shape = tuple(int(d) for d in ref["shape"])
            offset, length = int(ref["offset"]), int(ref["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{self.path}: malformed blob reference for {name}") from exc
        end = offset + length
        if offset < 0 or end > len(self.payload):
            raise TruncatedPayloadError(
                f"{self.path}: blob {name} [{offset}, {end}) extends past payload "
                f"of {len(self.payload)} bytes"
            )
        count = int(np.prod(shape)) if shape else 1
        if length != 4 * count:
            raise HeaderPayloadMismatchError(
                f"{self.path}: blob {name} declares {length} bytes for shape {shape} "
                f"({4 * count} expected)"
            )
        self.max_end = max(self.max_end, end)
        arr = np.frombuffer(self.payload, dtype="<f4", count=count, offset=offset)
        return arr.reshape(shape).astype(np.float32, copy=True)

    def finish(self) -> None:
        if self.max_end != len(self.payload):
            raise HeaderPayloadMismatchError(
                f"{self.path}: payload holds {len(self.payload)} bytes but the header "
                f"addresses only {self.max_end}"
            )


def save_model(model: Model, path) -> None:
    """Serialize a structurally valid model to an LNDP file."""
    validate(model)
    payload = _PayloadWriter()
    header = {
        "input_shape": list(model.input_shape),
        "metadata": model.metadata,
        "layers": [_layer_header(layer, payload) for layer in model.layers],
    }
    _write_file(path, MODEL_MAGIC, header, payload.bytes())


def load_model(path) -> Model:
    """Load an LNDP file, reproducing every weight bit of the saved model."""
    header, payload = _read_file(path, MODEL_MAGIC)
    reader = _PayloadReader(payload, path)
    try:
        input_shape = tuple(header["input_shape"])
        metadata = header.get("metadata", {})
        layer_headers = header["layers"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: header missing required model fields") from exc

    layers = []
    for i, lh in enumerate(layer_headers):
        kind = lh.get("kind")
        name = f"layer {i} ({kind})"
        if kind == "conv2d":
            bias = reader.get(lh["bias"], name) if lh.get("bias") is not None else None
            layers.append(
                Conv2D(
                    weights=reader.get(lh["weights"], name),
                    bias=bias,
                    stride=int(lh["stride"]),
                    padding=int(lh["padding"]),
                )
            )
        elif kind == "batchnorm":
            layers.append(
                BatchNorm(
                    gamma=reader.get(lh["gamma"], name),
                    beta=reader.get(lh["beta"], name),
                    running_mean=reader.get(lh["running_mean"], name),
                    running_var=reader.get(lh["running_var"], name),
                    epsilon=float(lh["epsilon"]),
                )
            )
        elif kind == "activation":
            layers.append(Activation(kind=lh["op"]))
        elif kind == "pool":
            layers.append(Pool(kind=lh["op"], window=int(lh["window"]), stride=int(lh["stride"])))
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "dense":
            bias = reader.get(lh["bias"], name) if lh.get("bias") is not None else None
            layers.append(Dense(weights=reader.get(lh["weights"], name), bias=bias))
        else:
            raise FormatError(f"{path}: layer {i} has unknown kind {kind!r}")
    reader.finish()
    return Model(input_shape=input_shape, layers=layers, metadata=metadata)


def save_batch(batch: CalibrationBatch, path) -> None:
    """Serialize a calibration batch to an LNDS file."""
    payload = _PayloadWriter()
    header = {
        "images": payload.add(batch.images),
        "labels": batch.labels.tolist() if batch.labels is not None else None,
        "num_classes": batch.num_classes,
    }
    _write_file(path, BATCH_MAGIC, header, payload.bytes())


def load_batch(path) -> CalibrationBatch:
    """Load an LNDS file, reproducing the image tensor bitwise."""
    header, payload = _read_file(path, BATCH_MAGIC)
    reader = _PayloadReader(payload, path)
    try:
        images_ref = header["images"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: header missing the image tensor") from exc
    images = reader.get(images_ref, "images")
    reader.finish()
    labels = header.get("labels")
    num_classes = header.get("num_classes")
    return CalibrationBatch(
        images=images,
        labels=np.asarray(labels, dtype=np.int64) if labels is not None else None,
        num_classes=int(num_classes) if num_classes is not None else None,
    )
