"""Standalone writers for the LNDP/LNDS file formats.

This module is deliberately independent of the linprune package: the byte
layout is the contract between the two sides, and the round-trip tests
read these files back with the other implementation.

Layout: magic (4 bytes) | version u32 LE | header length u64 LE |
UTF-8 JSON header | payload of raw little-endian float32.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MODEL_MAGIC = b"LNDP"
BATCH_MAGIC = b"LNDS"
FORMAT_VERSION = 1


class PayloadBuilder:
    def __init__(self):
        self._chunks: list[bytes] = []
        self._offset = 0

    def add(self, array) -> dict:
        arr = np.ascontiguousarray(array, dtype="<f4")
        data = arr.tobytes()
        ref = {"shape": list(arr.shape), "offset": self._offset, "length": len(data)}
        self._chunks.append(data)
        self._offset += len(data)
        return ref

    def bytes(self) -> bytes:
        return b"".join(self._chunks)


def write_container(path, magic: bytes, header: dict, payload: bytes) -> None:
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def write_model_from_descriptors(path, input_shape, descriptors, metadata=None) -> None:
    """Write an LNDP file from (kind, fields) descriptors.

    Array-valued fields are moved into the payload; scalars stay in the
    JSON header.
    """
    payload = PayloadBuilder()
    layers = []
    for kind, fields in descriptors:
        entry = {"kind": kind}
        for name, value in fields.items():
            if isinstance(value, np.ndarray):
                entry[name] = payload.add(value)
            else:
                entry[name] = value
        layers.append(entry)
    header = {
        "input_shape": [int(d) for d in input_shape],
        "metadata": {str(k): str(v) for k, v in (metadata or {}).items()},
        "layers": layers,
    }
    write_container(path, MODEL_MAGIC, header, payload.bytes())


def write_batch(path, images, labels=None, num_classes=None) -> None:
    """Write an LNDS file with a B x C x H x W float32 image tensor."""
    images = np.ascontiguousarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[0] < 1:
        raise ValueError(f"images must be a non-empty B x C x H x W tensor, got {images.shape}")
    if labels is not None:
        labels = [int(l) for l in labels]
        if len(labels) != images.shape[0]:
            raise ValueError(f"{len(labels)} labels for {images.shape[0]} images")
    payload = PayloadBuilder()
    header = {
        "images": payload.add(images),
        "labels": labels,
        "num_classes": int(num_classes) if num_classes is not None else None,
    }
    write_container(path, BATCH_MAGIC, header, payload.bytes())
