"""Occlusion relevance maps and atlas aggregation.

A cube of the input volume is replaced by a constant and the drop in the
model's target-class probability is credited to every voxel the cube
covered. Cubes slide on a stride grid, with one extra clamped position per
axis so the far border is always covered; each voxel's relevance is the
average drop over all cubes that covered it. Positive relevance marks
voxels whose content supported the prediction.

For the tissue ensemble one modality is occluded at a time while the other
stays intact, giving separate GM and WM maps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .ensemble import EnsembleModel1, EnsembleModel2, predict_proba
from .manifest import Modality

__all__ = [
    "OcclusionConfig", "occlusion_positions", "occlusion_heatmap", "occlusion_for_model",
    "mean_heatmap", "region_relevance", "RegionRelevance",
    "save_region_relevance", "load_region_relevance", "render_regions",
    "load_atlas_labels", "save_atlas_labels", "export_heatmap",
]


@dataclass(frozen=True)
class OcclusionConfig:
    patch_size: tuple[int, int, int] = (10, 10, 10)
    stride: tuple[int, int, int] = (5, 5, 5)
    occlusion_value: float = 0.0
    target_class: int = 1
    target_modality: Modality = Modality.WHOLE

    def __post_init__(self):
        object.__setattr__(self, "patch_size", tuple(int(p) for p in self.patch_size))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        if len(self.patch_size) != 3 or len(self.stride) != 3:
            raise ValueError("patch_size and stride must have 3 entries")
        for p, s in zip(self.patch_size, self.stride):
            if not 1 <= s <= p:
                raise ValueError(f"stride must satisfy 1 <= stride <= patch_size, "
                                 f"got stride {self.stride}, patch {self.patch_size}")
        if self.target_class not in (0, 1):
            raise ValueError(f"target_class must be 0 or 1, got {self.target_class}")


def occlusion_positions(dim: int, patch: int, stride: int) -> list[int]:
    """Start offsets along one axis: the stride grid plus a clamped final one."""
    if patch > dim:
        raise ValueError(f"patch size {patch} exceeds volume dim {dim}")
    positions = list(range(0, dim - patch + 1, stride))
    final = dim - patch
    if positions[-1] != final:
        positions.append(final)
    return positions


def occlusion_heatmap(predict, volumes: tuple[np.ndarray, ...], cfg: OcclusionConfig,
                      occlude_input: int = 0) -> np.ndarray:
    """Relevance map for one input of a prediction function.

    ``predict`` maps a tuple of volumes to a probability vector; the map
    entry for a voxel is the mean of (p_original - p_occluded) over every
    cube that covered it.
    """
    volumes = tuple(np.asarray(v, dtype=np.float64) for v in volumes)
    target = volumes[occlude_input]
    if target.ndim != 3:
        raise ValueError(f"expected a 3D volume, got shape {target.shape}")
    base = float(np.asarray(predict(volumes))[cfg.target_class])
    grids = [occlusion_positions(d, p, s)
             for d, p, s in zip(target.shape, cfg.patch_size, cfg.stride)]
    relevance_sum = np.zeros(target.shape, dtype=np.float64)
    coverage = np.zeros(target.shape, dtype=np.int64)
    work = target.copy()
    pd, ph, pw = cfg.patch_size
    for z in grids[0]:
        for y in grids[1]:
            for x in grids[2]:
                window = (slice(z, z + pd), slice(y, y + ph), slice(x, x + pw))
                saved = work[window].copy()
                work[window] = cfg.occlusion_value
                probed = volumes[:occlude_input] + (work,) + volumes[occlude_input + 1:]
                p = float(np.asarray(predict(probed))[cfg.target_class])
                work[window] = saved
                relevance_sum[window] += base - p
                coverage[window] += 1
    return relevance_sum / coverage


def occlusion_for_model(model, volumes: tuple[np.ndarray, ...], cfg: OcclusionConfig) -> np.ndarray:
    """Heatmap for an ensemble; cfg.target_modality picks the occluded input.

    Model 1 occludes its whole-brain input; model 2 occludes the GM or WM
    volume while the other tissue stays intact.
    """
    if isinstance(model, EnsembleModel1):
        if cfg.target_modality != Modality.WHOLE:
            raise ValueError("model 1 has only the WHOLE input")
        index = 0
        expected = 1
    elif isinstance(model, EnsembleModel2):
        if cfg.target_modality == Modality.GM:
            index = 0
        elif cfg.target_modality == Modality.WM:
            index = 1
        else:
            raise ValueError("model 2 occlusion needs target_modality GM or WM")
        expected = 2
    else:
        raise TypeError(f"not an ensemble model: {type(model).__name__}")
    if len(volumes) != expected:
        raise ValueError(f"expected {expected} input volume(s), got {len(volumes)}")

    def predict(vols):
        return predict_proba(model, *vols)[0]

    return occlusion_heatmap(predict, tuple(volumes), cfg, occlude_input=index)


def mean_heatmap(heatmaps) -> np.ndarray:
    """Voxelwise mean across subjects' relevance maps."""
    maps = [np.asarray(h, dtype=np.float64) for h in heatmaps]
    if not maps:
        raise ValueError("no heatmaps to average")
    if any(m.shape != maps[0].shape for m in maps):
        raise ValueError("heatmaps have mismatched shapes")
    return np.mean(np.stack(maps), axis=0)


# ---------------------------------------------------------------------------
# Atlas aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionRelevance:
    label: int
    region_name: str
    mean_relevance: float
    voxel_count: int


def load_atlas_labels(path) -> dict[int, str]:
    """Read a ``label,region_name`` table; label 0 is implicit background."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["label", "region_name"]:
            raise ValueError(f"{path}: bad atlas header {header!r}")
        names: dict[int, str] = {}
        for line_no, rec in enumerate(reader, start=2):
            if len(rec) != 2:
                raise ValueError(f"{path}:{line_no}: expected 2 fields")
            label = int(rec[0])
            if label in names:
                raise ValueError(f"{path}:{line_no}: duplicate label {label}")
            names[label] = rec[1]
    return names


def save_atlas_labels(names: dict[int, str], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "region_name"])
        for label in sorted(names):
            writer.writerow([label, names[label]])


def region_relevance(heatmap: np.ndarray, atlas: np.ndarray,
                     names: dict[int, str]) -> list[RegionRelevance]:
    """Mean relevance per atlas region, most relevant first.

    ``atlas`` holds integer region labels per voxel; 0 is background and is
    skipped. Every nonzero label present must have a name.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    atlas = np.asarray(atlas)
    if atlas.shape != heatmap.shape:
        raise ValueError(f"atlas shape {atlas.shape} does not match heatmap {heatmap.shape}")
    if not np.all(np.equal(np.mod(atlas, 1), 0)):
        raise ValueError("atlas voxels must be integer labels")
    atlas = atlas.astype(np.int64)
    out = []
    for label in np.unique(atlas):
        if label == 0:
            continue
        if int(label) not in names:
            raise ValueError(f"atlas label {int(label)} has no region name")
        mask = atlas == label
        out.append(RegionRelevance(label=int(label), region_name=names[int(label)],
                                   mean_relevance=float(heatmap[mask].mean()),
                                   voxel_count=int(mask.sum())))
    if not out:
        raise ValueError("atlas has no nonzero labels")
    out.sort(key=lambda r: (-r.mean_relevance, r.label))
    return out


def save_region_relevance(regions, path) -> None:
    """``label,region_name,mean_relevance,voxel_count`` rows, ranked."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "region_name", "mean_relevance", "voxel_count"])
        for r in regions:
            writer.writerow([r.label, r.region_name, repr(r.mean_relevance), r.voxel_count])


def load_region_relevance(path) -> list[RegionRelevance]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["label", "region_name", "mean_relevance", "voxel_count"]:
            raise ValueError(f"{path}: bad region table header {header!r}")
        return [RegionRelevance(label=int(rec[0]), region_name=rec[1],
                                mean_relevance=float(rec[2]), voxel_count=int(rec[3]))
                for rec in reader]


def render_regions(regions, top: int | None = None) -> str:
    """Ranked text table of region relevances."""
    if not regions:
        raise ValueError("no regions to render")
    shown = regions if top is None else regions[:top]
    head = ("Rank", "Region", "Mean Relevance", "Voxels")
    body = [(str(i + 1), r.region_name, f"{r.mean_relevance:+.6f}", str(r.voxel_count))
            for i, r in enumerate(shown)]
    widths = [max(len(head[i]), *(len(row[i]) for row in body)) for i in range(len(head))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in body]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _diverging_rgb(slice2d: np.ndarray, vmax: float) -> np.ndarray:
    """Signed values to red-white-blue; white is zero, full red is +vmax."""
    t = np.clip(slice2d / vmax, -1.0, 1.0)
    rgb = np.empty((*slice2d.shape, 3), dtype=np.float64)
    pos = np.maximum(t, 0.0)
    neg = np.maximum(-t, 0.0)
    rgb[..., 0] = 1.0 - neg
    rgb[..., 1] = 1.0 - np.maximum(pos, neg)
    rgb[..., 2] = 1.0 - pos
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def export_heatmap(heatmap: np.ndarray, out_dir, axis: int = 0,
                   write_png: bool = True) -> list[Path]:
    """Write one CSV (and optionally one PNG) per slice along ``axis``.

    CSV cells carry full precision (%.17g); PNGs use a diverging palette
    scaled to the map's largest magnitude. Returns the paths written.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim != 3:
        raise ValueError(f"expected a 3D heatmap, got shape {heatmap.shape}")
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1, or 2, got {axis}")
    stack = np.moveaxis(heatmap, axis, 0)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vmax = float(np.max(np.abs(heatmap)))
    if vmax == 0.0:
        vmax = 1.0
    written = []
    for z in range(stack.shape[0]):
        csv_path = out_dir / f"slice_{z:03d}.csv"
        np.savetxt(csv_path, stack[z], fmt="%.17g", delimiter=",")
        written.append(csv_path)
        if write_png:
            png_path = out_dir / f"slice_{z:03d}.png"
            Image.fromarray(_diverging_rgb(stack[z], vmax), mode="RGB").save(
                png_path, format="PNG", optimize=False)
            written.append(png_path)
    return written
