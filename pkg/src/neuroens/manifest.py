"""Subject manifests: the tabular index driving splits and demographics.

A manifest is a comma-delimited file with the exact header

    subject_id,label,modality,smoothed,source,age_years,sex,path

one row per stored volume. Paths are kept relative to the manifest file
so cohort directories stay relocatable; they are resolved against the
manifest's directory on load.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

__all__ = [
    "Label",
    "Modality",
    "Source",
    "Sex",
    "SubjectRecord",
    "Manifest",
    "DemographicTable",
    "load_manifest",
    "save_manifest",
    "summarize_demographics",
    "render_demographics",
]

MANIFEST_COLUMNS = ["subject_id", "label", "modality", "smoothed", "source", "age_years", "sex", "path"]


class Label(str, Enum):
    PD = "PD"
    HC = "HC"


class Modality(str, Enum):
    WHOLE = "WHOLE"
    GM = "GM"
    WM = "WM"


class Source(str, Enum):
    PPMI = "PPMI"
    IXI = "IXI"
    SYNTH = "SYNTH"


class Sex(str, Enum):
    M = "M"
    F = "F"


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    label: Label
    modality: Modality
    smoothed: bool
    source: Source
    age_years: float
    sex: Sex
    path: str

    def __post_init__(self):
        if self.age_years < 0:
            raise ValueError(f"age_years must be >= 0, got {self.age_years} for {self.subject_id}")


@dataclass
class Manifest:
    """Ordered collection of subject records.

    (subject_id, modality, smoothed) triples are unique; all records of
    one subject travel together through any split.
    """

    records: list[SubjectRecord]

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            key = (rec.subject_id, rec.modality, rec.smoothed)
            if key in seen:
                raise ValueError(
                    f"duplicate (subject_id, modality, smoothed) triple for subject "
                    f"'{rec.subject_id}' ({rec.modality.value}, smoothed={int(rec.smoothed)})"
                )
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    def subject_ids(self) -> list[str]:
        """Distinct subject ids in first-appearance order."""
        out, seen = [], set()
        for rec in self.records:
            if rec.subject_id not in seen:
                seen.add(rec.subject_id)
                out.append(rec.subject_id)
        return out

    def subset(self, subject_ids: Iterable[str]) -> "Manifest":
        wanted = set(subject_ids)
        return Manifest([r for r in self.records if r.subject_id in wanted])

    def filter(self, modality: Modality | None = None, smoothed: bool | None = None) -> "Manifest":
        recs = self.records
        if modality is not None:
            recs = [r for r in recs if r.modality == modality]
        if smoothed is not None:
            recs = [r for r in recs if r.smoothed == smoothed]
        return Manifest(list(recs))

    def label_of(self, subject_id: str) -> Label:
        for rec in self.records:
            if rec.subject_id == subject_id:
                return rec.label
        raise KeyError(f"subject '{subject_id}' not in manifest")

    def verify_files(self) -> None:
        """Raise FileNotFoundError listing every referenced file that is missing."""
        missing = [r.path for r in self.records if not Path(r.path).exists()]
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {missing[:5]}"
                                    + (f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""))


def _parse_enum(cls, token: str, what: str, row: int):
    try:
        return cls(token)
    except ValueError:
        raise ValueError(f"unknown {what} '{token}' in manifest row {row}") from None


def load_manifest(path) -> Manifest:
    """Read a manifest CSV, validating header, enums and triple uniqueness.

    Relative volume paths are resolved against the manifest's directory.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_COLUMNS:
            raise ValueError(
                f"manifest {path} has columns {reader.fieldnames}, expected {MANIFEST_COLUMNS}"
            )
        records = []
        for i, row in enumerate(reader, start=2):
            if any(row[c] is None for c in MANIFEST_COLUMNS):
                raise ValueError(f"manifest {path} row {i} has missing columns")
            smoothed_token = row["smoothed"].strip()
            if smoothed_token not in ("0", "1"):
                raise ValueError(f"smoothed must be 0 or 1, got '{smoothed_token}' in row {i}")
            rec_path = Path(row["path"])
            if not rec_path.is_absolute():
                rec_path = path.parent / rec_path
            records.append(
                SubjectRecord(
                    subject_id=row["subject_id"].strip(),
                    label=_parse_enum(Label, row["label"].strip(), "label", i),
                    modality=_parse_enum(Modality, row["modality"].strip(), "modality", i),
                    smoothed=smoothed_token == "1",
                    source=_parse_enum(Source, row["source"].strip(), "source", i),
                    age_years=float(row["age_years"]),
                    sex=_parse_enum(Sex, row["sex"].strip(), "sex", i),
                    path=str(rec_path),
                )
            )
    return Manifest(records)


def save_manifest(manifest: Manifest, path, relative_to=None) -> None:
    """Write a manifest CSV. With ``relative_to`` set, paths under that
    directory are stored relative so the cohort stays relocatable."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in manifest.records:
            rec_path = Path(rec.path)
            if relative_to is not None:
                try:
                    rec_path = rec_path.relative_to(Path(relative_to))
                except ValueError:
                    pass
            writer.writerow([
                rec.subject_id,
                rec.label.value,
                rec.modality.value,
                int(rec.smoothed),
                rec.source.value,
                repr(rec.age_years),
                rec.sex.value,
                str(rec_path),
            ])


# ---------------------------------------------------------------------------
# Demographics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DemographicColumn:
    n_subjects: int
    age_mean: float
    age_std: float
    n_male: int
    n_female: int


@dataclass(frozen=True)
class DemographicTable:
    """Per-class and pooled age statistics and sex counts."""

    pd: DemographicColumn
    hc: DemographicColumn
    overall: DemographicColumn


def _column(ages: list[float], sexes: list[Sex]) -> DemographicColumn:
    n = len(ages)
    mean = sum(ages) / n
    # sample (n-1) std; a single subject has no spread to estimate, report 0
    std = math.sqrt(sum((a - mean) ** 2 for a in ages) / (n - 1)) if n > 1 else 0.0
    males = sum(1 for s in sexes if s == Sex.M)
    return DemographicColumn(n_subjects=n, age_mean=mean, age_std=std,
                             n_male=males, n_female=n - males)


def summarize_demographics(manifest: Manifest) -> DemographicTable:
    """Age mean +/- sample std and sex counts per class and pooled.

    Each subject is counted once regardless of how many modalities or
    smoothed variants the manifest stores for it.
    """
    if not manifest.records:
        raise ValueError("cannot summarize an empty manifest")
    per_subject: dict[str, SubjectRecord] = {}
    for rec in manifest.records:
        per_subject.setdefault(rec.subject_id, rec)
    groups: dict[Label, tuple[list[float], list[Sex]]] = {Label.PD: ([], []), Label.HC: ([], [])}
    for rec in per_subject.values():
        ages, sexes = groups[rec.label]
        ages.append(rec.age_years)
        sexes.append(rec.sex)
    all_ages = groups[Label.PD][0] + groups[Label.HC][0]
    all_sexes = groups[Label.PD][1] + groups[Label.HC][1]

    def column_or_empty(label: Label) -> DemographicColumn:
        ages, sexes = groups[label]
        if not ages:
            return DemographicColumn(0, float("nan"), 0.0, 0, 0)
        return _column(ages, sexes)

    return DemographicTable(
        pd=column_or_empty(Label.PD),
        hc=column_or_empty(Label.HC),
        overall=_column(all_ages, all_sexes),
    )


def render_demographics(table: DemographicTable) -> str:
    """Plain-text demographic table: one column per class plus the pool."""
    def fmt(col: DemographicColumn) -> tuple[str, str, str]:
        age = "-" if col.n_subjects == 0 else f"{col.age_mean:.1f} ± {col.age_std:.2f}"
        return (age, f"{col.n_male} / {col.n_female}", str(col.n_subjects))

    cols = {"PD": fmt(table.pd), "HC": fmt(table.hc), "Average": fmt(table.overall)}
    rows = [
        [""] + list(cols.keys()),
        ["Age(Years)"] + [cols[k][0] for k in cols],
        ["Sex (Male / Female)"] + [cols[k][1] for k in cols],
        ["Subjects"] + [cols[k][2] for k in cols],
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                     for row in rows)
