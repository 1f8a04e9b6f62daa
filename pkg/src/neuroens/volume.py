"""Volumetric data container and on-disk formats.

Centralizes all volume file handling so other modules never touch raw
bytes directly. Two formats are supported:

* the tool's native format: a JSON header (``*.json``) next to a raw
  little-endian binary file, C-order with the W axis fastest, and
* single-file NIfTI-1 images (``.nii`` / ``.nii.gz``), little-endian,
  uint8 / int16 / float32 data only.

Volumes are held in memory as float64 arrays indexed ``[d, h, w]``.
NIfTI's (x, y, z) disk axes map to (W, H, D).
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Volume", "VolumeFormatError", "load_volume", "save_volume"]


class VolumeFormatError(ValueError):
    """Raised when a volume file cannot be parsed."""


@dataclass
class Volume:
    """3D scalar grid with voxel geometry.

    Attributes:
        data: float64 array of shape (D, H, W).
        voxel_size_mm: physical voxel edge lengths along (D, H, W).
        space_tag: free-form coordinate-space label, e.g. "MNI152".
    """

    data: np.ndarray
    voxel_size_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    space_tag: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got {self.data.ndim}D")
        if any(s < 1 for s in self.data.shape):
            raise ValueError(f"all dimensions must be >= 1, got {self.data.shape}")
        self.voxel_size_mm = tuple(float(v) for v in self.voxel_size_mm)
        if len(self.voxel_size_mm) != 3 or any(v <= 0 for v in self.voxel_size_mm):
            raise ValueError(f"voxel sizes must be 3 positive reals, got {self.voxel_size_mm}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    def with_data(self, data: np.ndarray) -> "Volume":
        """New Volume with the same geometry tags and different data."""
        return Volume(data=data, voxel_size_mm=self.voxel_size_mm, space_tag=self.space_tag)

    def require_finite(self) -> "Volume":
        if not np.isfinite(self.data).all():
            raise ValueError("volume contains NaN/Inf values")
        return self


# ---------------------------------------------------------------------------
# Native format: <stem>.json header + <stem>.raw payload
# ---------------------------------------------------------------------------

_NATIVE_FORMAT_NAME = "neuroens-volume"
_NATIVE_DTYPES = {"float64": "<f8", "float32": "<f4"}


def _save_native(vol: Volume, path: Path) -> None:
    raw_path = path.with_suffix(".raw")
    header = {
        "format": _NATIVE_FORMAT_NAME,
        "version": 1,
        "dims": list(vol.dims),
        "voxel_size_mm": list(vol.voxel_size_mm),
        "space_tag": vol.space_tag,
        "dtype": "float64",
        "raw_file": raw_path.name,
    }
    path.write_text(json.dumps(header, indent=2) + "\n")
    raw_path.write_bytes(np.ascontiguousarray(vol.data, dtype="<f8").tobytes())


def _load_native(path: Path) -> Volume:
    try:
        header = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"unrecognized format: {path} is not a valid volume header") from exc
    if not isinstance(header, dict) or header.get("format") != _NATIVE_FORMAT_NAME:
        raise VolumeFormatError(f"unrecognized format: {path} has no '{_NATIVE_FORMAT_NAME}' marker")
    for key in ("dims", "voxel_size_mm", "dtype", "raw_file"):
        if key not in header:
            raise VolumeFormatError(f"volume header {path} missing field '{key}'")
    dtype = header["dtype"]
    if dtype not in _NATIVE_DTYPES:
        raise VolumeFormatError(f"unsupported datatype '{dtype}' in {path}")
    dims = tuple(int(d) for d in header["dims"])
    if len(dims) != 3:
        raise VolumeFormatError(f"dimension count != 3 in {path}: {dims}")
    raw_path = path.parent / header["raw_file"]
    if not raw_path.exists():
        raise FileNotFoundError(f"raw payload {raw_path} referenced by {path} does not exist")
    expected = int(np.prod(dims)) * np.dtype(_NATIVE_DTYPES[dtype]).itemsize
    payload = raw_path.read_bytes()
    if len(payload) != expected:
        raise VolumeFormatError(
            f"raw payload {raw_path} has {len(payload)} bytes, expected {expected} for dims {dims}"
        )
    data = np.frombuffer(payload, dtype=_NATIVE_DTYPES[dtype]).reshape(dims)
    return Volume(
        data=data.astype(np.float64),
        voxel_size_mm=tuple(header["voxel_size_mm"]),
        space_tag=header.get("space_tag", ""),
    )


# ---------------------------------------------------------------------------
# Minimal NIfTI-1 reader / writer
# ---------------------------------------------------------------------------

_NIFTI_HDR_SIZE = 348
_NIFTI_MAGIC_SINGLE = b"n+1\x00"
# datatype code -> numpy dtype (little-endian only)
_NIFTI_DTYPES = {2: "<u1", 4: "<i2", 16: "<f4"}


def _load_nifti(blob: bytes, path: Path) -> Volume:
    if len(blob) < _NIFTI_HDR_SIZE:
        raise VolumeFormatError(f"unrecognized format: {path} shorter than a NIfTI-1 header")
    sizeof_hdr = struct.unpack_from("<i", blob, 0)[0]
    magic = blob[344:348]
    if sizeof_hdr != _NIFTI_HDR_SIZE or magic != _NIFTI_MAGIC_SINGLE:
        raise VolumeFormatError(f"unrecognized format: {path} has bad NIfTI-1 magic bytes")
    dim = struct.unpack_from("<8h", blob, 40)
    datatype = struct.unpack_from("<h", blob, 70)[0]
    pixdim = struct.unpack_from("<8f", blob, 76)
    vox_offset = int(struct.unpack_from("<f", blob, 108)[0])
    scl_slope, scl_inter = struct.unpack_from("<2f", blob, 112)

    ndim = dim[0]
    if ndim < 3 or ndim > 7:
        raise VolumeFormatError(f"dimension count != 3 in {path}: dim[0]={ndim}")
    shape = [max(1, dim[i]) for i in range(1, ndim + 1)]
    while len(shape) > 3 and shape[-1] == 1:  # squeeze singleton trailing dims
        shape.pop()
    if len(shape) != 3:
        raise VolumeFormatError(f"dimension count != 3 in {path}: dims {shape}")
    if datatype not in _NIFTI_DTYPES:
        raise VolumeFormatError(f"unsupported datatype code {datatype} in {path}")

    nx, ny, nz = shape
    np_dtype = np.dtype(_NIFTI_DTYPES[datatype])
    nbytes = nx * ny * nz * np_dtype.itemsize
    if len(blob) < vox_offset + nbytes:
        raise VolumeFormatError(f"{path} truncated: expected {nbytes} data bytes")
    flat = np.frombuffer(blob, dtype=np_dtype, count=nx * ny * nz, offset=vox_offset)
    # x varies fastest on disk -> index as [z, y, x] = [D, H, W]
    data = flat.reshape((nz, ny, nx)).astype(np.float64)
    if scl_slope != 0.0 and (scl_slope, scl_inter) != (1.0, 0.0):
        data = data * scl_slope + scl_inter
    voxels = (abs(pixdim[3]) or 1.0, abs(pixdim[2]) or 1.0, abs(pixdim[1]) or 1.0)
    return Volume(data=data, voxel_size_mm=voxels, space_tag="")


def _save_nifti(vol: Volume, path: Path) -> None:
    hdr = bytearray(_NIFTI_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _NIFTI_HDR_SIZE)
    d, h, w = vol.dims
    struct.pack_into("<8h", hdr, 40, 3, w, h, d, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, 16)  # float32
    struct.pack_into("<h", hdr, 72, 32)  # bitpix
    vz, vy, vx = vol.voxel_size_mm
    struct.pack_into("<8f", hdr, 76, 1.0, vx, vy, vz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope / scl_inter
    hdr[344:348] = _NIFTI_MAGIC_SINGLE
    payload = np.ascontiguousarray(vol.data, dtype="<f4").tobytes()
    blob = bytes(hdr) + b"\x00" * 4 + payload
    if path.name.endswith(".gz"):
        path.write_bytes(gzip.compress(blob, mtime=0))
    else:
        path.write_bytes(blob)


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def load_volume(path) -> Volume:
    """Load a volume from the native format or a single-file NIfTI-1 image.

    Format is detected from the file contents, not the extension. Data is
    widened to float64. Raises VolumeFormatError for unknown magic bytes,
    unsupported datatype codes or non-3D shapes, and ValueError if the
    stored values contain NaN/Inf.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"volume file {path} does not exist")
    blob = path.read_bytes()
    if blob[:2] == b"\x1f\x8b":  # gzip
        blob = gzip.decompress(blob)
    if len(blob) >= 348 and blob[344:348] == _NIFTI_MAGIC_SINGLE:
        vol = _load_nifti(blob, path)
    elif blob[:1] in (b"{", b" ", b"\n"):
        vol = _load_native(path)
    else:
        raise VolumeFormatError(f"unrecognized format: {path}")
    return vol.require_finite()


def save_volume(vol: Volume, path) -> None:
    """Write a volume to disk.

    ``*.json`` paths use the native header+raw pair (lossless float64);
    ``*.nii`` / ``*.nii.gz`` paths write a little-endian float32 NIfTI-1
    image. The parent directory must already exist.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"parent directory {path.parent} does not exist")
    vol.require_finite()
    if path.name.endswith(".nii") or path.name.endswith(".nii.gz"):
        _save_nifti(vol, path)
    elif path.suffix == ".json":
        _save_native(vol, path)
    else:
        raise ValueError(f"unsupported volume extension for {path}; use .json, .nii or .nii.gz")
