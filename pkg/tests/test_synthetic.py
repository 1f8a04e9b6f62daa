import numpy as np
import pytest

from neuroens.manifest import Label, Modality
from neuroens.synthetic import generate_synthetic_cohort, lesion_mask, make_phantom
from neuroens.volume import load_volume


class TestLesionMask:
    def test_covers_about_five_percent(self):
        for dims in ((16, 16, 16), (24, 20, 18), (32, 32, 32)):
            mask = lesion_mask(dims)
            frac = mask.sum() / mask.size
            assert 0.03 < frac < 0.07

    def test_centered(self):
        mask = lesion_mask((17, 17, 17))
        assert mask[8, 8, 8]
        assert not mask[0, 0, 0]

    def test_rejects_small_dims(self):
        with pytest.raises(ValueError, match="too small"):
            lesion_mask((4, 16, 16))


class TestPhantom:
    def test_values_in_unit_range(self):
        v = make_phantom((12, 12, 12), is_pd=True, class_effect=1.0, seed=0)
        assert v.data.min() >= 0.0 and v.data.max() <= 1.0

    def test_pd_brighter_inside_lesion(self):
        mask = lesion_mask((16, 16, 16))
        pd = make_phantom((16, 16, 16), True, 0.5, seed=3)
        hc = make_phantom((16, 16, 16), False, 0.5, seed=3)
        assert pd.data[mask].mean() > hc.data[mask].mean() + 0.3
        np.testing.assert_array_equal(pd.data[~mask], hc.data[~mask])

    def test_rejects_bad_effect(self):
        with pytest.raises(ValueError):
            make_phantom((12, 12, 12), True, 0.0, seed=0)


class TestCohort:
    def test_balance(self, tmp_path):
        man = generate_synthetic_cohort(20, (8, 8, 8), 0.5, seed=7, out_dir=tmp_path)
        whole = man.filter(modality=Modality.WHOLE)
        labels = [r.label for r in whole.records]
        assert labels.count(Label.PD) == 10 and labels.count(Label.HC) == 10
        assert len(man) == 60  # three modalities per subject
        man.verify_files()

    def test_odd_n_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="even"):
            generate_synthetic_cohort(7, (8, 8, 8), 0.5, seed=0, out_dir=tmp_path)

    def test_small_dims_rejected_before_writing(self, tmp_path):
        out = tmp_path / "cohort"
        with pytest.raises(ValueError, match="too small"):
            generate_synthetic_cohort(4, (4, 4, 4), 0.5, seed=0, out_dir=out)
        assert not out.exists()

    def test_same_seed_identical_voxels(self, tmp_path):
        man_a = generate_synthetic_cohort(4, (9, 9, 9), 0.4, seed=11, out_dir=tmp_path / "a")
        man_b = generate_synthetic_cohort(4, (9, 9, 9), 0.4, seed=11, out_dir=tmp_path / "b")
        for ra, rb in zip(man_a.records, man_b.records):
            va, vb = load_volume(ra.path), load_volume(rb.path)
            np.testing.assert_array_equal(va.data, vb.data)

    def test_different_seeds_differ(self, tmp_path):
        man_a = generate_synthetic_cohort(2, (9, 9, 9), 0.4, seed=1, out_dir=tmp_path / "a")
        man_b = generate_synthetic_cohort(2, (9, 9, 9), 0.4, seed=2, out_dir=tmp_path / "b")
        assert not np.array_equal(load_volume(man_a.records[0].path).data,
                                  load_volume(man_b.records[0].path).data)

    def test_gm_wm_bounded_by_whole(self, tmp_path):
        man = generate_synthetic_cohort(2, (10, 10, 10), 0.5, seed=5, out_dir=tmp_path)
        for sid in man.subject_ids():
            recs = {r.modality: r for r in man.subset([sid]).records}
            whole = load_volume(recs[Modality.WHOLE].path).data
            gm = load_volume(recs[Modality.GM].path).data
            wm = load_volume(recs[Modality.WM].path).data
            assert (gm + wm <= whole + 1e-12).all()


class TestThresholdOracle:
    def test_lesion_mean_separates_classes(self, tmp_path):
        """A mean-intensity threshold inside the lesion region classifies a
        100-subject cohort at class_effect 0.5 with accuracy >= 0.95."""
        man = generate_synthetic_cohort(100, (16, 16, 16), 0.5, seed=42, out_dir=tmp_path)
        mask = lesion_mask((16, 16, 16))
        means, labels = [], []
        for rec in man.filter(modality=Modality.WHOLE).records:
            means.append(load_volume(rec.path).data[mask].mean())
            labels.append(rec.label == Label.PD)
        means = np.array(means)
        labels = np.array(labels)
        best = max(
            max(((means >= t) == labels).mean(), ((means < t) == labels).mean())
            for t in means
        )
        assert best >= 0.95
