"""End-to-end acceptance checks.

Each class pins one externally visible guarantee of the pipeline at desk
scale: protocol shape, learnability on phantoms, gradient correctness,
smoothing math, occlusion fidelity, split hygiene, aggregation exactness,
byte-level CLI determinism, and full-scale shape contracts.
"""

import math
import re
import subprocess
import sys
import time

import numpy as np
import pytest
import torch

from fdcheck import check_gradients, jitter_batchnorm_
from test_occlusion import brute_force_heatmap, linear_predictor

from neuroens.backbones import BackboneFamily, BackboneSpec, build_backbone
from neuroens.ensemble import (FusionHead, build_model1, build_model2,
                               default_model1_specs, default_model2_specs,
                               volumes_to_tensor)
from neuroens.manifest import Modality
from neuroens.occlusion import OcclusionConfig, occlusion_heatmap
from neuroens.pipeline import CohortData, load_cohort
from neuroens.preprocess import SmoothingSpec, smooth_gaussian
from neuroens.results import render_results
from neuroens.synthetic import generate_synthetic_cohort, lesion_mask, make_phantom
from neuroens.training import (ExperimentConfig, holdout_count, run_experiment,
                               split_train_test, split_validation)
from neuroens.volume import Volume

TOY_SCALE = {"width_scale": 0.125, "stage_depths": (1,)}


def toy_cohort_data(n_subjects: int, dims, seed: int) -> CohortData:
    rng = np.random.default_rng(seed)
    arrays = rng.uniform(size=(n_subjects, *dims)).astype(np.float32)
    labels = np.asarray([i % 2 for i in range(n_subjects)], dtype=np.int64)
    return CohortData(subject_ids=tuple(f"sub-{i:03d}" for i in range(n_subjects)),
                      labels=labels, arrays=(arrays,), dims=tuple(dims),
                      modalities=(Modality.WHOLE,))


@pytest.fixture(scope="module")
def default_protocol_run():
    """One run_experiment with protocol defaults at toy model/cohort scale."""
    data = toy_cohort_data(12, (6, 12, 12), seed=4)
    cfg = ExperimentConfig(**TOY_SCALE)
    start = time.monotonic()
    result = run_experiment(data, cfg)
    return cfg, result, time.monotonic() - start


@pytest.fixture(scope="module")
def phantom_cohort(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantoms")
    return generate_synthetic_cohort(n_subjects=100, dims=(16, 16, 16),
                                     class_effect=0.5, seed=11, out_dir=out)


class TestProtocolShape:
    def test_defaults_run_full_grid(self, default_protocol_run):
        cfg, result, elapsed = default_protocol_run
        assert cfg.epochs == 25
        assert cfg.repetitions == 5
        assert cfg.learning_rates == (1e-3, 1e-4)
        assert len(result.table.rows) == 2
        for row, lr in zip(result.table.rows, cfg.learning_rates):
            assert row.learning_rate == lr
            assert len(row.rep_accuracies) == 5
        assert len(result.repetitions) == 10
        for rep in result.repetitions:
            assert len(rep.history.train_loss) == 25
            assert len(rep.history.val_accuracy) == 25
        assert elapsed < 15 * 60


class TestSyntheticEndToEnd:
    def _run(self, manifest, model: int):
        cfg = ExperimentConfig(model=model, learning_rates=(1e-3,), epochs=10,
                               repetitions=5, master_seed=0, **TOY_SCALE)
        data = load_cohort(manifest, model)
        start = time.monotonic()
        result = run_experiment(data, cfg)
        elapsed = time.monotonic() - start
        assert elapsed < 10 * 60
        (row,) = result.table.rows
        assert len(row.rep_accuracies) == 5
        return row

    def test_model2_learns_phantom_cohort(self, phantom_cohort):
        assert self._run(phantom_cohort, model=2).acc_mean >= 0.90

    def test_model1_learns_phantom_cohort(self, phantom_cohort):
        assert self._run(phantom_cohort, model=1).acc_mean >= 0.80


class TestGradientCorrectness:
    REL_TOL = 1e-4

    def test_every_backbone_family(self):
        start = time.monotonic()
        rng = np.random.default_rng(12)
        for family in BackboneFamily:
            spec = BackboneSpec(family=family, in_channels=4, width_scale=0.125,
                                stage_depths=(1, 1), init_seed=9)
            model = build_backbone(spec)
            jitter_batchnorm_(model, seed=int(rng.integers(1 << 31)))
            x = torch.from_numpy(rng.uniform(-1.0, 1.0, size=(2, 4, 12, 12)))
            check_gradients(model, (x,), rel_tol=self.REL_TOL, sample_per_tensor=6)
        assert time.monotonic() - start < 2 * 60

    def test_both_fusion_heads(self):
        rng = np.random.default_rng(13)
        for in_features in (12, 8):
            head = FusionHead(in_features, seed=5)
            z = torch.from_numpy(rng.normal(size=(3, in_features)))
            check_gradients(head, (z,), rel_tol=self.REL_TOL)


class TestSmoothingMath:
    def test_sigma_for_8mm_fwhm_at_2mm_voxels(self):
        sigma = SmoothingSpec(fwhm_mm=8.0).sigma_voxels((2.0, 2.0, 2.0))
        for s in sigma:
            assert abs(s - 1.69864) < 1e-5

    def test_mean_preserved_and_variance_never_grows(self):
        rng = np.random.default_rng(14)
        spec = SmoothingSpec(fwhm_mm=8.0)
        for trial in range(50):
            dims = tuple(int(d) for d in rng.integers(9, 18, size=3))
            voxel = tuple(float(v) for v in rng.uniform(1.0, 3.0, size=3))
            vol = Volume(data=rng.uniform(size=dims), voxel_size_mm=voxel,
                         space_tag="SYNTH")
            out = smooth_gaussian(vol, spec)
            assert abs(out.data.mean() - vol.data.mean()) <= 1e-6 * abs(vol.data.mean())
            assert out.data.var() <= vol.data.var() + 1e-12


class TestOcclusionOracle:
    def test_strided_equals_brute_force_on_16_cubed(self):
        rng = np.random.default_rng(15)
        vol = rng.uniform(size=(16, 16, 16))
        predict = linear_predictor(rng.normal(scale=0.2, size=(16, 16, 16)))
        cfg = OcclusionConfig(patch_size=(10, 10, 10), stride=(5, 5, 5))
        got = occlusion_heatmap(predict, (vol,), cfg)
        want = brute_force_heatmap(predict, (vol,), cfg)
        np.testing.assert_array_equal(got, want)

    def test_argmax_falls_inside_signal_ellipsoid(self):
        # analytic model: class probability reads only the lesion interior,
        # so the most relevant voxels must sit inside it
        dims = (16, 16, 16)
        mask = lesion_mask(dims)
        cfg = OcclusionConfig(patch_size=(4, 4, 4), stride=(2, 2, 2))

        def predict(volumes):
            p1 = 1.0 / (1.0 + np.exp(-8.0 * (float(volumes[0][mask].mean()) - 0.5)))
            return np.array([1.0 - p1, p1])

        hits = 0
        for seed in range(20):
            vol = make_phantom(dims, is_pd=True, class_effect=0.5, seed=seed).data
            heat = occlusion_heatmap(predict, (vol,), cfg)
            hits += bool(mask[np.unravel_index(np.argmax(heat), heat.shape)])
        assert hits >= 19  # at least 95% of 20 trials


class TestSplitHygiene:
    def test_100_seeded_runs_no_leakage_exact_sizes(self):
        ids = [f"sub-{i:04d}" for i in range(598)]
        for seed in range(100):
            train, test = split_train_test(ids, 0.2, seed)
            assert len(test) == holdout_count(598, 0.2) == 120
            assert not set(train) & set(test)
            assert sorted(train + test) == ids
            fit, val = split_validation(train, 0.2, seed + 1)
            assert len(val) == holdout_count(len(train), 0.2)
            assert not set(fit) & set(val)
            assert sorted(fit + val) == sorted(train)

    def test_other_cohort_sizes_round_half_up(self):
        for n, want in ((598, 120), (478, 96), (5, 1), (4, 1), (13, 3)):
            ids = list(range(n))
            _, test = split_train_test(ids, 0.2, seed=0)
            assert len(test) == want == holdout_count(n, 0.2)


class TestAggregationExactness:
    def test_table_stats_match_recomputation(self, default_protocol_run):
        _, result, _ = default_protocol_run
        for row in result.table.rows:
            accs = list(row.rep_accuracies)
            mean = sum(accs) / len(accs)
            std = math.sqrt(sum((a - mean) ** 2 for a in accs) / (len(accs) - 1))
            assert row.acc_mean == mean
            assert row.acc_std == std

    def test_rendered_as_mean_plus_minus_std_4_decimals(self, default_protocol_run):
        _, result, _ = default_protocol_run
        text = render_results(result.table)
        cells = re.findall(r"(\d\.\d{4}) ± (\d\.\d{4})", text)
        assert len(cells) == len(result.table.rows)
        for (mean_text, std_text), row in zip(cells, result.table.rows):
            assert mean_text == f"{row.acc_mean:.4f}"
            assert std_text == f"{row.acc_std:.4f}"


class TestCliDeterminism:
    def _chain(self, root):
        def cli(*argv):
            proc = subprocess.run([sys.executable, "-m", "neuroens.cli", *argv],
                                  capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            return proc

        cfg = root / "cfg.json"
        cfg.write_text('{"epochs": 2, "repetitions": 2, "batch_size": 4, '
                       '"width_scale": 0.125, "stage_depths": [1]}')
        cli("synth", "--out", str(root / "synth"), "--seed", "3",
            "--subjects", "8", "--dims", "10,12,12")
        cli("train", "--manifest", str(root / "synth" / "manifest.csv"),
            "--out", str(root / "run"), "--config", str(cfg),
            "--model", "1", "--lr", "0.001", "--seed", "7")
        cli("occlude", "--manifest", str(root / "synth" / "manifest.csv"),
            "--checkpoint", str(root / "run" / "checkpoint.ntc"),
            "--out", str(root / "occ"), "--patch", "6", "--stride", "6",
            "--max-subjects", "2")

    def test_identical_seeds_give_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        self._chain(a)
        self._chain(b)
        for rel in ("run/results.csv", "run/checkpoint.ntc", "run/config.json"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
        heat_a = sorted(p.name for p in (a / "occ" / "heatmap").iterdir())
        heat_b = sorted(p.name for p in (b / "occ" / "heatmap").iterdir())
        assert heat_a == heat_b and heat_a
        for name in heat_a:
            assert (a / "occ" / "heatmap" / name).read_bytes() == \
                   (b / "occ" / "heatmap" / name).read_bytes(), name


class TestFullScaleShapes:
    def test_model1_full_scale_forward(self):
        dims = (91, 109, 91)
        model = build_model1(default_model1_specs(dims), dims, fusion_seed=0)
        assert model.fusion.linear.in_features == 12
        assert len(model.backbones) == 6
        model.eval()
        vol = np.random.default_rng(16).uniform(size=dims)
        with torch.no_grad():
            out = model(volumes_to_tensor(vol))
        assert tuple(out.shape) == (1, 2)
        assert torch.isfinite(out).all()

    def test_model2_full_scale_forward(self):
        dims = (121, 145, 121)
        gm_specs, wm_specs = default_model2_specs(dims)
        model = build_model2(gm_specs, wm_specs, dims, fusion_seed=0)
        assert model.fusion.linear.in_features == 8
        assert len(model.gm_backbones) == len(model.wm_backbones) == 2
        model.eval()
        rng = np.random.default_rng(17)
        gm, wm = rng.uniform(size=dims), rng.uniform(size=dims)
        with torch.no_grad():
            out = model(volumes_to_tensor(gm), volumes_to_tensor(wm))
        assert tuple(out.shape) == (1, 2)
        assert torch.isfinite(out).all()
