"""Named-tensor container files and pretrained weight adaptation.

The container is a single file: magic ``NTC1``, an 8-byte little-endian
length, a JSON index (metadata plus per-tensor name/dtype/shape in order),
then the raw little-endian tensor payloads concatenated. Everything about
the layout is explicit so files round-trip bit-for-bit across platforms.

``load_pretrained`` maps weights trained on 3-channel images onto a
backbone whose first convolution takes one channel per volume slice: the
source filters are averaged over their 3 input channels and replicated
across the new depth axis, interior tensors are copied by name and shape,
and the final 2-class layer keeps its seeded initialization.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .backbones import Backbone

__all__ = ["save_tensors", "load_tensors", "backbone_state", "load_pretrained",
           "save_backbone_weights", "WeightFormatError"]

_MAGIC = b"NTC1"

_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


class WeightFormatError(ValueError):
    """Raised when a container file cannot be parsed or does not fit."""


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays plus a JSON metadata block to one file."""
    path = Path(path)
    index = []
    payloads = []
    for name, array in tensors.items():
        array = np.asarray(array)
        if array.dtype.name not in _DTYPES:
            raise WeightFormatError(f"unsupported dtype {array.dtype.name} for tensor {name!r}")
        index.append({"name": name, "dtype": array.dtype.name, "shape": list(array.shape)})
        payloads.append(np.ascontiguousarray(array, dtype=_DTYPES[array.dtype.name]).tobytes())
    header = json.dumps({"meta": meta or {}, "tensors": index},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container file back into named arrays and its metadata."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise WeightFormatError(f"{path}: not a named-tensor container")
    (header_len,) = struct.unpack("<Q", raw[4:12])
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
        index = header["tensors"]
        meta = header["meta"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise WeightFormatError(f"{path}: corrupt container header") from exc
    tensors: dict[str, np.ndarray] = {}
    offset = 12 + header_len
    for entry in index:
        shape = tuple(int(s) for s in entry["shape"])
        if entry["dtype"] not in _DTYPES:
            raise WeightFormatError(f"{path}: unsupported dtype {entry['dtype']!r} in header")
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(shape, dtype=np.int64))
        block = raw[offset:offset + count * dtype.itemsize]
        if len(block) != count * dtype.itemsize:
            raise WeightFormatError(f"{path}: truncated payload for tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(block, dtype=dtype).reshape(shape).copy()
        offset += count * dtype.itemsize
    return tensors, meta


def backbone_state(model: Backbone) -> dict[str, np.ndarray]:
    """Parameters and batch-norm statistics as named arrays.

    Step counters are bookkeeping, not weights, and are left out.
    """
    state = {}
    for name, tensor in model.state_dict().items():
        if name.endswith("num_batches_tracked"):
            continue
        state[name] = tensor.detach().cpu().numpy()
    return state


def _adapt_first_conv(source: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    """Average 3-channel filters and replicate across the new depth axis."""
    if source.shape == target_shape:
        return source
    if source.shape[0] != target_shape[0] or source.shape[2:] != target_shape[2:]:
        raise WeightFormatError(
            f"first-conv filters do not match: source {source.shape}, target {target_shape}"
        )
    if source.shape[1] != 3:
        raise WeightFormatError(
            f"first-conv adaptation expects 3 source channels, got {source.shape[1]}"
        )
    mean_filter = source.mean(axis=1, keepdims=True)
    return np.repeat(mean_filter, target_shape[1], axis=1)


def load_pretrained(model: Backbone, source_path) -> Backbone:
    """Copy container weights into a backbone, adapting the boundary layers.

    The first convolution is channel-adapted, the final classifier layer is
    skipped (it keeps its seeded 2-class initialization), and every other
    tensor must match by name and shape. Returns the same model object.
    """
    tensors, meta = load_tensors(source_path)
    source_family = meta.get("family")
    if source_family is not None and source_family != model.spec.family.value:
        raise WeightFormatError(
            f"pretrained weights are for family {source_family}, "
            f"model is {model.spec.family.value}"
        )
    first_conv_key = f"{model.first_conv_name}.weight"
    final_prefix = f"{model.final_layer_name}."
    with torch.no_grad():
        for name, tensor in model.state_dict().items():
            if name.endswith("num_batches_tracked") or name.startswith(final_prefix):
                continue
            if name not in tensors:
                raise WeightFormatError(f"topology mismatch: source has no tensor {name!r}")
            source = tensors[name]
            if name == first_conv_key:
                source = _adapt_first_conv(source, tuple(tensor.shape))
            elif tuple(source.shape) != tuple(tensor.shape):
                raise WeightFormatError(
                    f"topology mismatch: tensor {name!r} has shape {source.shape}, "
                    f"expected {tuple(tensor.shape)}"
                )
            tensor.copy_(torch.from_numpy(np.ascontiguousarray(source)).to(tensor.dtype))
    return model


def save_backbone_weights(model: Backbone, path, extra_meta: dict | None = None) -> None:
    """Store a backbone's state in a container with its family recorded."""
    meta = {"family": model.spec.family.value,
            "in_channels": model.spec.in_channels,
            "width_scale": model.spec.width_scale,
            "stage_depths": list(model.spec.depths)}
    if extra_meta:
        meta.update(extra_meta)
    save_tensors(path, backbone_state(model), meta)
