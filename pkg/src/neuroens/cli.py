"""Command line entry points.

Subcommands mirror the pipeline stages: ``synth`` writes a synthetic
cohort, ``preprocess`` adds smoothed tissue volumes, ``split-tissues``
derives GM/WM volumes for whole-brain-only cohorts, ``train`` runs the
full protocol and keeps the best repetition's model, ``evaluate`` scores a
checkpoint on a manifest, ``occlude`` computes relevance maps, and
``report`` renders the text summary.

Every command is deterministic for a fixed invocation: seeds come from
``--seed``/config, worker threads default to one, and all floats are
written with round-trip precision. ``NEUROENS_CACHE_DIR`` supplies the
output root when ``--out`` is omitted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import torch

from .ensemble import EnsembleModel1, load_checkpoint, save_checkpoint
from .manifest import (Manifest, Modality, SubjectRecord, load_manifest, save_manifest,
                       render_demographics, summarize_demographics)
from .occlusion import (OcclusionConfig, load_atlas_labels, load_region_relevance,
                        mean_heatmap, occlusion_for_model, region_relevance,
                        render_regions, save_region_relevance, export_heatmap)
from .pipeline import load_cohort, smooth_cohort
from .preprocess import SmoothingSpec, split_tissues_synthetic
from .results import load_results, render_results, save_results
from .seeding import derive_seed
from .synthetic import generate_synthetic_cohort
from .training import ExperimentConfig, evaluate, run_experiment
from .volume import load_volume, save_volume

__all__ = ["main", "build_parser"]


def _resolve_out(arg_out, command: str) -> Path:
    if arg_out:
        return Path(arg_out)
    cache = os.environ.get("NEUROENS_CACHE_DIR")
    if cache:
        return Path(cache) / command
    raise ValueError(f"{command}: pass --out or set NEUROENS_CACHE_DIR")


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"dims must be D,H,W, got {text!r}")
    return tuple(int(p) for p in parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroens",
        description="Volumetric ensemble classification and occlusion relevance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled cohort")
    p.add_argument("--out", help="output directory (default: $NEUROENS_CACHE_DIR/synth)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=20, help="cohort size (even, half PD)")
    p.add_argument("--dims", default="16,16,16", help="volume dims D,H,W")
    p.add_argument("--class-effect", type=float, default=0.5,
                   help="intensity added inside the class blob, in (0, 1]")

    p = sub.add_parser("preprocess", help="write smoothed GM/WM volumes and manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--fwhm", type=float, default=8.0, help="smoothing kernel FWHM in mm")

    p = sub.add_parser("split-tissues", help="derive GM/WM volumes for whole-brain cohorts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="run the training protocol, write results and checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON experiment config; flags below override it")
    p.add_argument("--out")
    p.add_argument("--model", type=int, choices=(1, 2))
    p.add_argument("--smoothed", type=int, choices=(0, 1))
    p.add_argument("--pretrained", type=int, choices=(0, 1))
    p.add_argument("--lr", type=float, help="single learning rate instead of the default pair")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--jobs", type=int, default=1, help="torch worker threads")

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--smoothed", type=int, choices=(0, 1), default=0,
                   help="read smoothed tissue volumes (model 2)")
    p.add_argument("--out", help="optional JSON metrics file")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("occlude", help="occlusion relevance maps for a checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.add_argument("--smoothed", type=int, choices=(0, 1), default=0)
    p.add_argument("--modality", choices=("WHOLE", "GM", "WM"),
                   help="input to occlude (default: WHOLE for model 1, GM for model 2)")
    p.add_argument("--patch", type=int, default=10, help="cubic patch edge")
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--value", type=float, default=0.0, help="occlusion fill value")
    p.add_argument("--target-class", type=int, choices=(0, 1), default=1)
    p.add_argument("--max-subjects", type=int, help="limit to the first N subjects (sorted)")
    p.add_argument("--axis", type=int, choices=(0, 1, 2), default=0,
                   help="slice axis for the exported heatmap")
    p.add_argument("--atlas", help="atlas label volume")
    p.add_argument("--atlas-labels", help="label,region_name CSV")
    p.add_argument("--no-png", action="store_true", help="write CSV slices only")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("report", help="text report: demographics, results, regions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--regions", help="optional regions.csv from occlude")
    p.add_argument("--out", help="write the report to this file as well as stdout")

    return parser


def _cmd_synth(args) -> int:
    out = _resolve_out(args.out, "synth")
    man = generate_synthetic_cohort(n_subjects=args.subjects, dims=_parse_dims(args.dims),
                                    class_effect=args.class_effect, seed=args.seed, out_dir=out)
    print(f"wrote {len(man.records)} records for {args.subjects} subjects to {out}")
    return 0


def _cmd_preprocess(args) -> int:
    out = _resolve_out(args.out, "preprocess")
    man = load_manifest(args.manifest)
    before = len(man.records)
    extended = smooth_cohort(man, out, SmoothingSpec(fwhm_mm=args.fwhm))
    save_manifest(extended, Path(out) / "manifest.csv", relative_to=out)
    print(f"smoothed {len(extended.records) - before} volumes; manifest at {out}/manifest.csv")
    return 0


def _cmd_split_tissues(args) -> int:
    out = _resolve_out(args.out, "split-tissues")
    out.mkdir(parents=True, exist_ok=True)
    man = load_manifest(args.manifest)
    have = {(r.subject_id, r.modality) for r in man.records}
    new_records = []
    for rec in man.records:
        if rec.modality != Modality.WHOLE or rec.smoothed:
            continue
        if (rec.subject_id, Modality.GM) in have and (rec.subject_id, Modality.WM) in have:
            continue
        gm, wm = split_tissues_synthetic(load_volume(rec.path),
                                         derive_seed(args.seed, "tissues", rec.subject_id))
        for modality, vol in ((Modality.GM, gm), (Modality.WM, wm)):
            path = out / f"{rec.subject_id}_{modality.value.lower()}.json"
            save_volume(vol, path)
            new_records.append(SubjectRecord(
                subject_id=rec.subject_id, label=rec.label, modality=modality,
                smoothed=False, source=rec.source, age_years=rec.age_years,
                sex=rec.sex, path=str(path)))
    extended = Manifest(records=list(man.records) + new_records)
    save_manifest(extended, out / "manifest.csv", relative_to=out)
    print(f"split {len(new_records) // 2} subjects; manifest at {out}/manifest.csv")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    if args.model is not None:
        base["model"] = args.model
    if args.smoothed is not None:
        base["use_smoothed"] = bool(args.smoothed)
    if args.pretrained is not None:
        base["use_pretrained"] = bool(args.pretrained)
    if args.lr is not None:
        base["learning_rates"] = [args.lr]
    if args.seed is not None:
        base["master_seed"] = args.seed
    return ExperimentConfig.from_dict(base)


def _cmd_train(args) -> int:
    torch.set_num_threads(max(1, args.jobs))
    out = _resolve_out(args.out, "train")
    cfg = _experiment_config(args)
    man = load_manifest(args.manifest)
    data = load_cohort(man, cfg.model, cfg.use_smoothed)
    result = run_experiment(data, cfg, keep_best_model=True)
    out.mkdir(parents=True, exist_ok=True)
    save_results(result.table, out / "results.csv")
    save_checkpoint(result.best_model, out / "checkpoint.ntc")
    with open(out / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    best = result.best_repetition
    print(render_results(result.table), end="")
    print(f"best repetition: lr={best.learning_rate!r} rep={best.repetition} "
          f"accuracy={best.test_accuracy:.4f}")
    print(f"wrote results.csv, checkpoint.ntc, config.json to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    torch.set_num_threads(max(1, args.jobs))
    model = load_checkpoint(args.checkpoint)
    man = load_manifest(args.manifest)
    model_no = 1 if isinstance(model, EnsembleModel1) else 2
    data = load_cohort(man, model_no, bool(args.smoothed))
    accuracy = evaluate(model, data.arrays, data.labels, range(len(data.subject_ids)))
    print(f"accuracy {accuracy:.4f} over {len(data.subject_ids)} subjects")
    if args.out:
        metrics = {"accuracy": accuracy, "n_subjects": len(data.subject_ids), "model": model_no}
        with open(args.out, "w") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_occlude(args) -> int:
    torch.set_num_threads(max(1, args.jobs))
    out = _resolve_out(args.out, "occlude")
    model = load_checkpoint(args.checkpoint)
    model_no = 1 if isinstance(model, EnsembleModel1) else 2
    modality = Modality(args.modality) if args.modality else (
        Modality.WHOLE if model_no == 1 else Modality.GM)
    cfg = OcclusionConfig(patch_size=(args.patch,) * 3, stride=(args.stride,) * 3,
                          occlusion_value=args.value, target_class=args.target_class,
                          target_modality=modality)
    man = load_manifest(args.manifest)
    data = load_cohort(man, model_no, bool(args.smoothed))
    count = len(data.subject_ids) if args.max_subjects is None else min(
        args.max_subjects, len(data.subject_ids))
    if count < 1:
        raise ValueError("no subjects to occlude")
    heatmaps = []
    for idx in range(count):
        volumes = tuple(a[idx].astype("float64") for a in data.arrays)
        heatmaps.append(occlusion_for_model(model, volumes, cfg))
    mean_map = mean_heatmap(heatmaps)
    out.mkdir(parents=True, exist_ok=True)
    written = export_heatmap(mean_map, out / "heatmap", axis=args.axis,
                             write_png=not args.no_png)
    print(f"averaged {count} subjects; wrote {len(written)} files to {out}/heatmap")
    if args.atlas or args.atlas_labels:
        if not (args.atlas and args.atlas_labels):
            raise ValueError("--atlas and --atlas-labels go together")
        atlas_vol = load_volume(args.atlas)
        names = load_atlas_labels(args.atlas_labels)
        regions = region_relevance(mean_map, atlas_vol.data, names)
        save_region_relevance(regions, out / "regions.csv")
        print(render_regions(regions, top=10), end="")
        print(f"wrote {len(regions)} regions to {out}/regions.csv")
    return 0


def _cmd_report(args) -> int:
    man = load_manifest(args.manifest)
    table = load_results(args.results)
    blocks = [
        ("Cohort demographics", render_demographics(summarize_demographics(man))),
        ("Classification results", render_results(table)),
    ]
    if args.regions:
        regions = load_region_relevance(args.regions)
        blocks.append(("Region relevance (top 10)", render_regions(regions, top=10)))
    lines = []
    for title, body in blocks:
        lines += [title, "-" * len(title), body.rstrip("\n"), ""]
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "split-tissues": _cmd_split_tissues,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "occlude": _cmd_occlude,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
