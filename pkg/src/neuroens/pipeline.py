"""Cohort-level plumbing between manifests and model-ready arrays.

``load_cohort`` materializes every volume a model variant needs into
stacked float32 arrays, ordered by sorted subject id so downstream splits
depend only on seeds, not on manifest row order. ``smooth_cohort`` writes
the smoothed grey/white-matter variants next to a cohort and returns the
manifest extended with the new records.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .manifest import Label, Manifest, Modality, SubjectRecord
from .preprocess import SmoothingSpec, smooth_gaussian
from .volume import load_volume, save_volume

__all__ = ["CohortData", "load_cohort", "smooth_cohort"]


@dataclass(frozen=True)
class CohortData:
    """Model-ready arrays for one cohort.

    ``arrays`` has one entry per model input: (WHOLE,) for model 1,
    (GM, WM) for model 2. Each is (n_subjects, D, H, W) float32, indexed
    like ``subject_ids`` and ``labels`` (PD=1, HC=0).
    """

    subject_ids: tuple[str, ...]
    labels: np.ndarray
    arrays: tuple[np.ndarray, ...]
    dims: tuple[int, int, int]
    modalities: tuple[Modality, ...]

    def __post_init__(self):
        n = len(self.subject_ids)
        if self.labels.shape != (n,):
            raise ValueError("labels do not match subject_ids")
        for a in self.arrays:
            if a.shape[0] != n or a.shape[1:] != tuple(self.dims):
                raise ValueError("array stack does not match subjects/dims")


def _modalities_for(model: int, use_smoothed: bool) -> tuple[tuple[Modality, bool], ...]:
    if model == 1:
        return ((Modality.WHOLE, False),)
    if model == 2:
        return ((Modality.GM, use_smoothed), (Modality.WM, use_smoothed))
    raise ValueError(f"model must be 1 or 2, got {model}")


def load_cohort(manifest: Manifest, model: int, use_smoothed: bool = False) -> CohortData:
    """Load every volume the given model variant consumes.

    Model 1 reads the unsmoothed whole-brain volume; model 2 reads the GM
    and WM volumes, smoothed or not per ``use_smoothed``. Raises if any
    subject lacks a required record or if volume dims disagree.
    """
    needed = _modalities_for(model, use_smoothed)
    subject_ids = tuple(sorted(manifest.subject_ids()))
    labels = np.array([1 if manifest.label_of(sid) == Label.PD else 0 for sid in subject_ids],
                      dtype=np.int64)
    stacks = []
    dims: tuple[int, int, int] | None = None
    for modality, smoothed in needed:
        records = {r.subject_id: r for r in manifest.filter(modality=modality, smoothed=smoothed).records}
        missing = [sid for sid in subject_ids if sid not in records]
        if missing:
            raise ValueError(
                f"manifest lacks {modality.value} (smoothed={int(smoothed)}) records for: "
                + ", ".join(missing[:5]) + ("..." if len(missing) > 5 else "")
            )
        volumes = []
        for sid in subject_ids:
            vol = load_volume(records[sid].path)
            if dims is None:
                dims = vol.dims
            elif vol.dims != dims:
                raise ValueError(
                    f"volume dims differ across the cohort: {records[sid].path} has "
                    f"{vol.dims}, expected {dims}"
                )
            volumes.append(vol.data.astype(np.float32))
        stacks.append(np.stack(volumes))
    assert dims is not None
    return CohortData(subject_ids=subject_ids, labels=labels, arrays=tuple(stacks),
                      dims=dims, modalities=tuple(m for m, _ in needed))


def smooth_cohort(manifest: Manifest, out_dir, smoothing: SmoothingSpec | None = None) -> Manifest:
    """Write smoothed GM/WM volumes and return the extended manifest.

    Only tissue volumes are smoothed (the whole-brain model consumes the
    original scan). Records that already have a smoothed counterpart are
    left alone, so running this twice is a no-op for existing files.
    """
    smoothing = smoothing or SmoothingSpec()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    existing = {(r.subject_id, r.modality, r.smoothed) for r in manifest.records}
    new_records = []
    for rec in manifest.records:
        if rec.modality not in (Modality.GM, Modality.WM) or rec.smoothed:
            continue
        if (rec.subject_id, rec.modality, True) in existing:
            continue
        vol = load_volume(rec.path)
        smoothed = smooth_gaussian(vol, smoothing)
        path = out_dir / f"{rec.subject_id}_{rec.modality.value.lower()}_smoothed.json"
        save_volume(smoothed, path)
        new_records.append(SubjectRecord(
            subject_id=rec.subject_id, label=rec.label, modality=rec.modality,
            smoothed=True, source=rec.source, age_years=rec.age_years, sex=rec.sex,
            path=str(path),
        ))
    return Manifest(records=list(manifest.records) + new_records)
