"""On-disk formats shared across the pipeline.

Three little-endian binary layouts live here:

* ``EVS1`` event streams: header ``b"EVS1"``, uint16 W, uint16 H, then one
  13-byte record per event (uint16 x, uint16 y, float64 t, int8 p).
* ``DPT1`` depth maps: header ``b"DPT1"``, uint16 W, uint16 H, uint32
  reserved (zero), then H*W float32 values in row-major order.
* ``EVNP`` parameter containers: header ``b"EVNP"``, uint8 version, then
  named tensors until EOF. Each tensor is uint16 name length, UTF-8 name,
  uint8 rank, ``rank`` uint32 dims, float32 data.

RGB images are plain 8-bit PNG files.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

EVENT_MAGIC = b"EVS1"
DEPTH_MAGIC = b"DPT1"
PARAM_MAGIC = b"EVNP"
PARAM_VERSION = 1

EVENT_RECORD = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<f8"), ("p", "i1")])


class FormatError(ValueError):
    """Raised when a file does not match the expected binary layout."""


class MissingArtifactError(RuntimeError):
    """An upstream pipeline stage has not produced what a later stage needs."""


def write_event_file(path, x, y, t, p, resolution) -> None:
    width, height = resolution
    records = np.empty(len(x), dtype=EVENT_RECORD)
    records["x"] = x
    records["y"] = y
    records["t"] = t
    records["p"] = p
    with open(path, "wb") as fh:
        fh.write(EVENT_MAGIC + struct.pack("<HH", width, height))
        fh.write(records.tobytes())


def read_event_file(path):
    """Return ``(records, (W, H))`` where records is a structured array."""
    raw = Path(path).read_bytes()
    if raw[:4] != EVENT_MAGIC or len(raw) < 8:
        raise FormatError(f"{path}: not an EVS1 event file")
    width, height = struct.unpack_from("<HH", raw, 4)
    body = raw[8:]
    if len(body) % EVENT_RECORD.itemsize:
        raise FormatError(f"{path}: truncated event record")
    records = np.frombuffer(body, dtype=EVENT_RECORD)
    return records, (width, height)


def write_depth_file(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype="<f4")
    if depth.ndim != 2:
        raise ValueError(f"depth map must be 2-D, got shape {depth.shape}")
    height, width = depth.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC + struct.pack("<HHI", width, height, 0))
        fh.write(np.ascontiguousarray(depth).tobytes())


def read_depth_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != DEPTH_MAGIC or len(raw) < 12:
        raise FormatError(f"{path}: not a DPT1 depth file")
    width, height, _ = struct.unpack_from("<HHI", raw, 4)
    if len(raw) - 12 != 4 * width * height:
        raise FormatError(f"{path}: expected {width}x{height} float32 payload")
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(height, width).copy()


def write_png(path, rgb: np.ndarray) -> None:
    """Quantize an H×W×3 image in [0, 1] to 8 bits and save it."""
    data = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(data * 255.0).astype(np.uint8), mode="RGB").save(path)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def write_params(path, tensors: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(PARAM_MAGIC + struct.pack("<B", PARAM_VERSION))
        for name, value in tensors.items():
            arr = np.ascontiguousarray(np.asarray(value, dtype="<f4"))
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)) + encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_params(path) -> "OrderedDict[str, np.ndarray]":
    raw = Path(path).read_bytes()
    if raw[:4] != PARAM_MAGIC:
        raise FormatError(f"{path}: not an EVNP parameter file")
    (version,) = struct.unpack_from("<B", raw, 4)
    if version != PARAM_VERSION:
        raise FormatError(f"{path}: unsupported EVNP version {version}")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    pos = 5
    try:
        while pos < len(raw):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            out[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
            pos += 4 * count
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated parameter container") from exc
    return out
