import numpy as np
import pytest

from depthboost import estimator, merging, raster


def texture_map(seed=0, size=128):
    rng = np.random.default_rng(seed)
    base = rng.random((size // 8, size // 8))
    return raster.resize_bilinear(base, size, size)


class TestMergeParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            merging.MergeParams(radius=0)
        with pytest.raises(ValueError):
            merging.MergeParams(eps=0.0)

    def test_radius_scales_with_resolution(self):
        p = merging.MergeParams(radius=48, merge_res=1024)
        assert p.radius_at(1024) == 48
        assert p.radius_at(512) == 24
        assert p.radius_at(2048) == 96
        assert p.radius_at(4) == 1  # never collapses to zero


class TestLocalAffineMerge:
    def test_self_merge_identity(self):
        # Window variance must dominate the ridge eps for a ~ 1, b ~ 0.
        d = np.random.default_rng(1).random((128, 128))
        out = merging.local_affine_merge(d, d, radius=8)
        assert np.max(np.abs(out - d)) < 1e-3

    @staticmethod
    def split_fixture():
        # Signal with energy on both sides of the splitter cutoff: a smooth
        # sinusoidal plateau pattern plus fine-grained texture.
        n = 192
        yy, xx = np.mgrid[0:n, 0:n] / n
        g_low = 0.5 + 0.3 * np.sin(2 * np.pi * xx * 2) * np.sin(2 * np.pi * yy * 2)
        rng = np.random.default_rng(3)
        g_high = 0.1 * (raster.resize_bilinear(rng.random((n // 4, n // 4)),
                                               n, n) - 0.5)
        return np.clip(g_low + g_high, 0.0, 1.0)

    def test_detail_passes_with_base_range(self):
        # base is a blurred affine remap of the signal (disjoint value range);
        # the merged output must sit in base's range yet carry the texture.
        g = self.split_fixture()
        base = np.clip(raster.gaussian_blur(0.5 * g + 0.25, 8.0), 0, 1)
        out = merging.local_affine_merge(base, g, radius=12)
        assert abs(out.mean() - base.mean()) < 0.02
        assert out.min() >= base.min() - 0.1 and out.max() <= base.max() + 0.1
        interior = np.s_[16:-16, 16:-16]
        assert np.corrcoef(out[interior].ravel(), g[interior].ravel())[0, 1] > 0.95

    def test_frequency_split_contract(self):
        # base carries the low frequencies of an affine-disjoint signal,
        # detail carries the full signal: output low-pass must follow base,
        # output high-pass must follow detail.
        g = self.split_fixture()
        sigma_big = 8.0
        base = np.clip(raster.gaussian_blur(0.5 * g + 0.25, sigma_big), 0, 1)
        out = merging.local_affine_merge(base, g, radius=12)
        out_low = raster.gaussian_blur(out, sigma_big)
        base_low = raster.gaussian_blur(base, sigma_big)
        rmse_low = float(np.sqrt(np.mean((out_low - base_low) ** 2)))
        assert rmse_low <= 0.02
        out_high = (out - out_low).ravel()
        g_high = (g - raster.gaussian_blur(g, sigma_big)).ravel()
        assert np.corrcoef(out_high, g_high)[0, 1] >= 0.9

    def test_affine_invariance_of_detail(self):
        base = texture_map(4)
        detail = texture_map(5)
        ref = merging.local_affine_merge(base, detail, radius=8)
        for alpha, beta in ((2.0, -0.3), (0.25, 0.5)):
            rescaled = estimator.normalize_unit(alpha * detail + beta)
            out = merging.local_affine_merge(base, rescaled, radius=8)
            assert np.max(np.abs(out - ref)) < 1e-3

    def test_constant_detail_degrades_to_base_mean(self):
        base = texture_map(6)
        detail = np.full_like(base, 0.7)
        out = merging.local_affine_merge(base, detail, radius=8)
        smooth = merging._box_mean(base, 8)
        assert np.max(np.abs(out - merging._box_mean(smooth, 8))) < 1e-6

    def test_output_clamped(self):
        rng = np.random.default_rng(7)
        base = rng.random((64, 64))
        detail = rng.random((64, 64))
        out = merging.local_affine_merge(base, detail, radius=4)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            merging.local_affine_merge(np.zeros((4, 4)), np.zeros((4, 5)))


class TestFeatherMask:
    def test_center_one_border_zero(self):
        m = merging.feather_mask(50, 40)
        assert m[20, 25] == 1.0
        assert np.all(m[0, :] == 0.0) and np.all(m[-1, :] == 0.0)
        assert np.all(m[:, 0] == 0.0) and np.all(m[:, -1] == 0.0)

    def test_ramp_value(self):
        # 100x100, band 0.15 -> 15-px band; 7 px into it -> 7/15
        m = merging.feather_mask(100, 100, 0.15)
        assert m[7, 50] == pytest.approx(7 / 15)

    def test_monotone_toward_center(self):
        m = merging.feather_mask(64, 48)
        assert np.all(np.diff(m[:24, 32]) >= 0)
        assert np.all(np.diff(m[24, :32]) >= 0)

    def test_separable_min_formula(self):
        w, h, band = 40, 30, 0.2
        m = merging.feather_mask(w, h, band)
        band_px = band * min(w, h)
        dx = np.minimum(np.arange(w), np.arange(w)[::-1])
        dy = np.minimum(np.arange(h), np.arange(h)[::-1])
        expected = np.minimum(np.clip(dy / band_px, 0, 1)[:, None],
                              np.clip(dx / band_px, 0, 1)[None, :])
        assert np.array_equal(m, expected)

    def test_band_validation(self):
        for bad in (0.0, 0.5, -0.1):
            with pytest.raises(ValueError):
                merging.feather_mask(10, 10, bad)


class TestCompositePatch:
    def test_zero_mask_unchanged(self):
        canvas = texture_map(8, 64)
        patch = np.ones((16, 16))
        out = merging.composite_patch(canvas, patch, (10, 20, 16, 16),
                                      np.zeros((16, 16)))
        assert np.array_equal(out, canvas)

    def test_identical_patch_idempotent(self):
        canvas = texture_map(9, 64)
        rect = (8, 8, 16, 16)
        patch = canvas[8:24, 8:24].copy()
        out = merging.composite_patch(canvas, patch, rect, np.ones((16, 16)))
        assert np.array_equal(out, canvas)

    def test_blend_equals_mask(self):
        canvas = np.zeros((64, 64))
        mask = merging.feather_mask(32, 32, 0.15)
        out = merging.composite_patch(canvas, np.ones((32, 32)), (16, 16, 32, 32),
                                      mask)
        assert np.array_equal(out[16:48, 16:48], mask)

    def test_outside_rect_untouched_bit_exact(self):
        canvas = texture_map(10, 64)
        out = merging.composite_patch(canvas, np.ones((16, 16)), (4, 4, 16, 16),
                                      np.full((16, 16), 0.5))
        untouched = np.ones((64, 64), bool)
        untouched[4:20, 4:20] = False
        assert np.array_equal(out[untouched], canvas[untouched])

    def test_out_of_bounds_rect(self):
        with pytest.raises(ValueError):
            merging.composite_patch(np.zeros((32, 32)), np.ones((16, 16)),
                                    (20, 20, 16, 16), np.ones((16, 16)))

    def test_mismatched_mask(self):
        with pytest.raises(ValueError):
            merging.composite_patch(np.zeros((32, 32)), np.ones((16, 16)),
                                    (0, 0, 16, 16), np.ones((8, 8)))
