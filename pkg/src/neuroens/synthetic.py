"""Synthetic phantom cohorts for desk-scale end-to-end runs.

Real PD/HC scan archives are access-gated, so verification uses phantoms:
smooth background noise in [0,1] plus, for the PD class, an intensity
bump inside a fixed centered ellipsoid covering ~5% of the voxels. The
bump height (``class_effect``) tunes how separable the cohort is, and the
known lesion location gives occlusion analysis a ground truth.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .manifest import Label, Manifest, Modality, Sex, Source, SubjectRecord, save_manifest
from .preprocess import split_tissues_synthetic
from .seeding import derive_seed
from .volume import Volume, save_volume

__all__ = ["lesion_mask", "make_phantom", "generate_synthetic_cohort"]

# Ellipsoid semi-axes as a fraction of each dimension; (pi/6)*(2f)^3 = 5%
# of the volume.
LESION_VOLUME_FRACTION = 0.05
_SEMI_AXIS_FRACTION = 0.5 * (6.0 * LESION_VOLUME_FRACTION / np.pi) ** (1.0 / 3.0)

MIN_DIM = 8


def lesion_mask(dims) -> np.ndarray:
    """Boolean mask of the fixed centered lesion ellipsoid for these dims."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < MIN_DIM for d in dims):
        raise ValueError(f"dims too small to contain the lesion blob (each >= {MIN_DIM}): {dims}")
    grids = np.meshgrid(*[np.arange(d, dtype=np.float64) for d in dims], indexing="ij")
    value = np.zeros(dims)
    for grid, d in zip(grids, dims):
        center = (d - 1) / 2.0
        semi_axis = _SEMI_AXIS_FRACTION * d
        value += ((grid - center) / semi_axis) ** 2
    return value <= 1.0


def make_phantom(dims, is_pd: bool, class_effect: float, seed: int) -> Volume:
    """One phantom volume: clipped smooth noise, plus a lesion bump for PD."""
    if not 0.0 < class_effect <= 1.0:
        raise ValueError(f"class_effect must be in (0, 1], got {class_effect}")
    mask = lesion_mask(dims)
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.standard_normal(tuple(dims)), sigma=2.0, mode="reflect")
    noise = (noise - noise.mean()) / noise.std()
    background = np.clip(0.45 + 0.12 * noise, 0.0, 1.0)
    if is_pd:
        background = np.clip(background + class_effect * mask, 0.0, 1.0)
    return Volume(data=background, voxel_size_mm=(1.0, 1.0, 1.0), space_tag="SYNTH")


def _synthetic_age(rng: np.random.Generator, is_pd: bool) -> float:
    mean, std = (62.0, 9.5) if is_pd else (49.0, 17.0)
    return round(float(np.clip(rng.normal(mean, std), 18.0, 95.0)), 1)


def generate_synthetic_cohort(
    n_subjects: int,
    dims,
    class_effect: float,
    seed: int,
    out_dir,
) -> Manifest:
    """Write a balanced phantom cohort and its manifest under ``out_dir``.

    Each subject gets WHOLE, GM and WM volumes (native format, unsmoothed);
    the GM/WM pair comes from the synthetic tissue splitter. The whole
    cohort is a pure function of (n_subjects, dims, class_effect, seed).

    Returns the manifest, which is also saved as ``out_dir/manifest.csv``
    with relative paths.
    """
    if n_subjects <= 0 or n_subjects % 2 != 0:
        raise ValueError(f"n_subjects must be a positive even int (balanced classes), got {n_subjects}")
    dims = tuple(int(d) for d in dims)
    lesion_mask(dims)  # validates dims before any file is written

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n_subjects):
        is_pd = i < n_subjects // 2
        label = Label.PD if is_pd else Label.HC
        subject_id = f"SYN{i:04d}"
        subject_seed = derive_seed(seed, "subject", i)
        whole = make_phantom(dims, is_pd, class_effect, subject_seed)
        gm, wm = split_tissues_synthetic(whole, derive_seed(subject_seed, "tissues"))
        demo_rng = np.random.default_rng(derive_seed(subject_seed, "demographics"))
        age = _synthetic_age(demo_rng, is_pd)
        sex = Sex.M if demo_rng.random() < 0.6 else Sex.F
        for modality, vol in ((Modality.WHOLE, whole), (Modality.GM, gm), (Modality.WM, wm)):
            filename = f"{subject_id}_{modality.value.lower()}.json"
            save_volume(vol, out_dir / filename)
            records.append(
                SubjectRecord(
                    subject_id=subject_id,
                    label=label,
                    modality=modality,
                    smoothed=False,
                    source=Source.SYNTH,
                    age_years=age,
                    sex=sex,
                    path=str(out_dir / filename),
                )
            )
    manifest = Manifest(records)
    save_manifest(manifest, out_dir / "manifest.csv", relative_to=out_dir)
    return manifest
