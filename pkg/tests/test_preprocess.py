import numpy as np
import pytest

from neuroens.preprocess import (
    SmoothingSpec,
    clamp_artifacts,
    normalize_intensity,
    resample_to_shape,
    smooth_gaussian,
    split_tissues_synthetic,
)
from neuroens.volume import Volume


def vol_from(values, voxel=(1.0, 1.0, 1.0)):
    return Volume(data=np.asarray(values, dtype=np.float64), voxel_size_mm=voxel)


class TestNormalizeIntensity:
    def test_linear_endpoint_map(self):
        v = vol_from(np.array([10.0, 60.0, 110.0]).reshape(1, 1, 3))
        out = normalize_intensity(v)
        np.testing.assert_allclose(out.data.ravel(), [0.0, 0.5, 1.0])

    def test_constant_volume_maps_to_zero(self):
        out = normalize_intensity(vol_from(np.full((3, 3, 3), 7.0)))
        assert (out.data == 0.0).all()

    def test_identity_when_already_spanning(self):
        rng = np.random.default_rng(0)
        data = rng.random((4, 4, 4))
        data.ravel()[0] = 0.0
        data.ravel()[1] = 1.0
        out = normalize_intensity(vol_from(data))
        np.testing.assert_allclose(out.data, data)

    def test_range_and_idempotence(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            v = vol_from(rng.normal(0, 100, (5, 4, 3)))
            once = normalize_intensity(v)
            assert once.data.min() >= 0.0 and once.data.max() <= 1.0
            twice = normalize_intensity(once)
            np.testing.assert_allclose(twice.data, once.data)


class TestClampArtifacts:
    def test_clamps_above_one(self):
        out = clamp_artifacts(vol_from(np.full((2, 2, 2), 1.2)))
        assert (out.data == 1.0).all()

    def test_in_range_identity(self):
        out = clamp_artifacts(vol_from(np.full((2, 2, 2), 0.5)))
        assert (out.data == 0.5).all()

    def test_clamps_below_zero(self):
        out = clamp_artifacts(vol_from(np.full((2, 2, 2), -0.1)))
        assert (out.data == 0.0).all()

    def test_idempotent_and_monotone(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0.5, 1.0, (4, 4, 4))
        b = a + rng.random((4, 4, 4))  # b >= a everywhere
        ca = clamp_artifacts(vol_from(a))
        cb = clamp_artifacts(vol_from(b))
        np.testing.assert_array_equal(clamp_artifacts(ca).data, ca.data)
        assert (cb.data >= ca.data).all()


class TestResample:
    def test_full_scale_dims(self):
        v = Volume(data=np.zeros((91, 109, 91)), voxel_size_mm=(2.0, 2.0, 2.0))
        out = resample_to_shape(v, (121, 145, 121))
        assert out.dims == (121, 145, 121)
        # physical extent preserved
        for axis in range(3):
            assert out.voxel_size_mm[axis] * out.dims[axis] == pytest.approx(
                v.voxel_size_mm[axis] * v.dims[axis]
            )

    def test_identity_resample(self):
        rng = np.random.default_rng(3)
        v = vol_from(rng.random((6, 5, 4)))
        out = resample_to_shape(v, (6, 5, 4))
        np.testing.assert_array_equal(out.data, v.data)

    def test_constant_stays_constant(self):
        v = vol_from(np.full((5, 5, 5), 3.25))
        out = resample_to_shape(v, (9, 3, 7))
        np.testing.assert_allclose(out.data, 3.25)

    def test_no_overshoot(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            v = vol_from(rng.normal(0, 1, (5, 6, 7)))
            out = resample_to_shape(v, tuple(int(d) for d in rng.integers(1, 14, size=3)))
            assert out.data.min() >= v.data.min() - 1e-12
            assert out.data.max() <= v.data.max() + 1e-12

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            resample_to_shape(vol_from(np.zeros((3, 3, 3))), (0, 3, 3))


class TestSmoothGaussian:
    def test_sigma_in_voxels(self):
        """8 mm FWHM over 2 mm voxels is sigma = 1.69864 voxels per axis."""
        spec = SmoothingSpec(fwhm_mm=8.0)
        sig = spec.sigma_voxels((2.0, 2.0, 2.0))
        for s in sig:
            assert s == pytest.approx(1.69864, abs=1e-5)

    def test_tiny_fwhm_is_identity(self):
        rng = np.random.default_rng(5)
        v = vol_from(rng.random((4, 4, 4)))
        out = smooth_gaussian(v, SmoothingSpec(fwhm_mm=1e-4))
        np.testing.assert_array_equal(out.data, v.data)

    def test_constant_stays_constant(self):
        v = vol_from(np.full((6, 6, 6), 0.7), voxel=(2.0, 2.0, 2.0))
        out = smooth_gaussian(v, SmoothingSpec(fwhm_mm=8.0))
        np.testing.assert_allclose(out.data, 0.7, rtol=1e-12)

    def test_mean_preserved_variance_shrinks(self):
        """Normalized kernel + reflect boundaries keep the mean and can
        only reduce the variance."""
        rng = np.random.default_rng(6)
        for _ in range(50):
            dims = tuple(int(d) for d in rng.integers(6, 14, size=3))
            v = Volume(data=rng.random(dims), voxel_size_mm=(2.0, 2.0, 2.0))
            out = smooth_gaussian(v, SmoothingSpec(fwhm_mm=float(rng.uniform(2, 12))))
            assert out.data.mean() == pytest.approx(v.data.mean(), rel=1e-6)
            assert out.data.var() <= v.data.var() + 1e-15

    def test_commutes_with_axis_permutation(self):
        rng = np.random.default_rng(7)
        data = rng.random((8, 8, 8))
        spec = SmoothingSpec(fwhm_mm=6.0)
        base = smooth_gaussian(Volume(data=data, voxel_size_mm=(2.0, 2.0, 2.0)), spec)
        for perm in ((1, 0, 2), (2, 1, 0), (1, 2, 0)):
            permuted = smooth_gaussian(
                Volume(data=data.transpose(perm), voxel_size_mm=(2.0, 2.0, 2.0)), spec
            )
            inverse = np.argsort(perm)
            np.testing.assert_allclose(permuted.data.transpose(inverse), base.data, atol=1e-10)

    def test_anisotropic_voxels_get_per_axis_sigma(self):
        spec = SmoothingSpec(fwhm_mm=8.0)
        sig = spec.sigma_voxels((1.0, 2.0, 4.0))
        assert sig[0] == pytest.approx(2 * sig[1]) and sig[1] == pytest.approx(2 * sig[2])

    def test_rejects_nonpositive_fwhm(self):
        with pytest.raises(ValueError):
            SmoothingSpec(fwhm_mm=0.0)


class TestSplitTissues:
    def test_zero_volume(self):
        gm, wm = split_tissues_synthetic(vol_from(np.zeros((4, 4, 4))), seed=0)
        assert (gm.data == 0).all() and (wm.data == 0).all()

    def test_partition_bound_holds(self):
        rng = np.random.default_rng(8)
        for seed in range(5):
            v = vol_from(rng.random((6, 6, 6)))
            gm, wm = split_tissues_synthetic(v, seed=seed)
            assert (gm.data + wm.data <= v.data + 1e-12).all()
            assert (gm.data >= 0).all() and (wm.data >= 0).all()

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        v = vol_from(rng.random((5, 5, 5)))
        a = split_tissues_synthetic(v, seed=123)
        b = split_tissues_synthetic(v, seed=123)
        np.testing.assert_array_equal(a[0].data, b[0].data)
        np.testing.assert_array_equal(a[1].data, b[1].data)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            split_tissues_synthetic(vol_from(np.full((4, 4, 4), 1.5)), seed=0)
