"""In-scope preprocessing stages for brain volumes.

Intensity normalization to [0,1], artifact clamping, trilinear resampling
and FWHM-parameterized Gaussian smoothing. Bias field correction, brain
extraction, registration and real tissue segmentation happen upstream in
external tools; this module consumes their outputs. A synthetic tissue
splitter stands in for real GM/WM segmentation in tests and demos.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Volume

__all__ = [
    "SmoothingSpec",
    "normalize_intensity",
    "clamp_artifacts",
    "resample_to_shape",
    "smooth_gaussian",
    "split_tissues_synthetic",
]

# FWHM = 2*sqrt(2*ln 2) * sigma for a Gaussian
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class SmoothingSpec:
    """Isotropic Gaussian smoothing kernel, specified by FWHM in mm."""

    fwhm_mm: float = 8.0
    truncation_radius_sigmas: float = 4.0

    def __post_init__(self):
        if self.fwhm_mm <= 0:
            raise ValueError(f"fwhm_mm must be > 0, got {self.fwhm_mm}")
        if self.truncation_radius_sigmas <= 0:
            raise ValueError(f"truncation_radius_sigmas must be > 0, got {self.truncation_radius_sigmas}")

    @property
    def sigma_mm(self) -> float:
        return self.fwhm_mm / FWHM_PER_SIGMA

    def sigma_voxels(self, voxel_size_mm) -> tuple[float, float, float]:
        """Per-axis kernel sigma in voxel units for the given geometry."""
        return tuple(self.sigma_mm / float(v) for v in voxel_size_mm)


def normalize_intensity(vol: Volume) -> Volume:
    """Linearly map intensities so min -> 0 and max -> 1.

    A constant volume maps to all zeros rather than dividing by zero.
    """
    vol.require_finite()
    lo = float(vol.data.min())
    hi = float(vol.data.max())
    if hi == lo:
        return vol.with_data(np.zeros_like(vol.data))
    return vol.with_data((vol.data - lo) / (hi - lo))


def clamp_artifacts(vol: Volume) -> Volume:
    """Clamp every voxel into [0, 1]; geometry unchanged."""
    return vol.with_data(np.clip(vol.data, 0.0, 1.0))


def resample_to_shape(vol: Volume, target_dims) -> Volume:
    """Trilinear resample onto a new grid, preserving physical extent.

    Grid endpoints are aligned, so resampling to the source dims is the
    identity and outputs never overshoot the input value range.
    """
    target_dims = tuple(int(d) for d in target_dims)
    if len(target_dims) != 3 or any(d < 1 for d in target_dims):
        raise ValueError(f"target dims must be 3 positive ints, got {target_dims}")
    src = vol.dims
    if target_dims == src:
        return vol.with_data(vol.data.copy())
    axes = [
        np.linspace(0.0, s - 1.0, t) if t > 1 else np.array([(s - 1.0) / 2.0])
        for s, t in zip(src, target_dims)
    ]
    coords = np.meshgrid(*axes, indexing="ij")
    resampled = ndimage.map_coordinates(vol.data, np.stack(coords), order=1, mode="nearest")
    new_voxels = tuple(v * s / t for v, s, t in zip(vol.voxel_size_mm, src, target_dims))
    return Volume(data=resampled, voxel_size_mm=new_voxels, space_tag=vol.space_tag)


def _gaussian_kernel(sigma_voxels: float, truncate_sigmas: float) -> np.ndarray:
    """Sampled Gaussian, truncated and renormalized to sum exactly 1."""
    radius = int(truncate_sigmas * sigma_voxels + 0.5)
    if radius < 1:
        return np.ones(1)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma_voxels) ** 2)
    return kernel / kernel.sum()


def smooth_gaussian(vol: Volume, spec: SmoothingSpec = SmoothingSpec()) -> Volume:
    """Separable Gaussian smoothing with reflect boundary handling.

    The per-axis sigma in voxels is sigma_mm / voxel_size_mm[axis]; each
    1D kernel is truncated at ``truncation_radius_sigmas`` and renormalized,
    which makes the operator doubly stochastic: the volume mean is preserved
    and the variance can only shrink.
    """
    data = vol.data
    for axis, sigma in enumerate(spec.sigma_voxels(vol.voxel_size_mm)):
        kernel = _gaussian_kernel(sigma, spec.truncation_radius_sigmas)
        if kernel.size == 1:
            continue
        data = ndimage.correlate1d(data, kernel, axis=axis, mode="reflect")
    return vol.with_data(data)


def split_tissues_synthetic(vol: Volume, seed: int) -> tuple[Volume, Volume]:
    """Split a normalized volume into synthetic GM / WM components.

    A smooth random field assigns each voxel a GM fraction; the WM part
    takes 90% of the remainder, so gm + wm <= input holds voxelwise and
    both components inherit any intensity structure of the input.
    Deterministic given the seed.
    """
    data = vol.data
    if data.min() < 0.0 or data.max() > 1.0:
        raise ValueError("tissue splitter expects a volume normalized to [0, 1]")
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.standard_normal(data.shape), sigma=2.0, mode="reflect")
    scale = field.std()
    if scale > 0:
        field = field / scale
    gm_fraction = np.clip(0.5 + 0.15 * field, 0.05, 0.95)
    gm = data * gm_fraction
    wm = data * (1.0 - gm_fraction) * 0.9
    return vol.with_data(gm), vol.with_data(wm)
