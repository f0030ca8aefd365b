import math

import numpy as np
import pytest
from scipy import stats

from spheroidsim import (
    GridSpec, SnapshotGrid, accumulate, free_green_2d, grid_from_csv,
    grid_to_csv, merge, radial_profile, render_heatmap,
)
from spheroidsim.errors import ConfigError
from spheroidsim.histogram import radial_pixel_counts


def spec200() -> GridSpec:
    return GridSpec(-1000, 1000, -1000, 1000, 10.0)


class TestGridSpec:
    def test_derived_counts(self):
        spec = spec200()
        assert (spec.nx, spec.ny) == (200, 200)
        assert spec.pixel_area_m2() == pytest.approx(1e-10)

    def test_extent_must_divide(self):
        with pytest.raises(ConfigError):
            GridSpec(-1000, 1000, -1000, 1000, 30.0)

    def test_bad_pixel(self):
        with pytest.raises(ConfigError):
            GridSpec(-10, 10, -10, 10, 0.0)

    def test_memory_cap(self):
        with pytest.raises(ConfigError):
            GridSpec(-1e6, 1e6, -1e6, 1e6, 0.1)

    def test_pixel_centers(self):
        spec = GridSpec(0, 30, -30, 0, 10.0)
        xc, yc = spec.pixel_centers()
        assert np.array_equal(xc, [5.0, 15.0, 25.0])
        assert np.array_equal(yc, [-25.0, -15.0, -5.0])


class TestAccumulate:
    def test_single_position_at_origin(self):
        grid = accumulate(np.array([[0.0, 0.0]]), spec200())
        assert grid.counts.sum() == 1
        assert grid.counts[100, 100] == 1  # pixel [0,10) x [0,10)
        assert grid.out_of_extent == 0

    def test_empty(self):
        grid = accumulate(np.empty((0, 2)), spec200())
        assert grid.counts.sum() == 0 and grid.out_of_extent == 0

    def test_count_conservation_with_outliers(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1500, 1500, size=(20000, 2))
        grid = accumulate(pts, spec200())
        assert grid.counts.sum() + grid.out_of_extent == 20000
        expected_out = np.count_nonzero(np.any(np.abs(pts) > 1000, axis=1))
        assert grid.out_of_extent == expected_out

    def test_edge_conventions(self):
        spec = GridSpec(0, 20, 0, 20, 10.0)
        grid = accumulate(np.array([[10.0, 0.0], [20.0, 20.0], [20.0001, 0.0]]), spec)
        assert grid.counts[0, 1] == 1   # interior edge belongs to the right pixel
        assert grid.counts[1, 1] == 1   # closing edge belongs to the last pixel
        assert grid.out_of_extent == 1

    def test_row_zero_is_lowest_y(self):
        grid = accumulate(np.array([[5.0, -995.0]]), spec200())
        assert grid.counts[0, 100] == 1

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1000, 1000, size=(5000, 2))
        a = accumulate(pts, spec200())
        b = accumulate(pts[rng.permutation(5000)], spec200())
        assert np.array_equal(a.counts, b.counts)

    def test_uniform_chi_square(self):
        # 1e4 uniform points, mean 0.25 per 10 um pixel; the chi-square runs
        # on 100x100-pixel super-blocks so expected counts are >= 5.
        rng = np.random.default_rng(4)
        pts = rng.uniform(-1000, 1000, size=(10000, 2))
        grid = accumulate(pts, spec200())
        assert grid.counts.mean() == pytest.approx(0.25, abs=0.01)
        blocks = grid.counts.reshape(20, 10, 20, 10).sum(axis=(1, 3))
        _, p = stats.chisquare(blocks.ravel())
        assert p > 0.01

    def test_merge_shards(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-1200, 1200, size=(9000, 2))
        whole = accumulate(pts, spec200())
        shards = [accumulate(pts[i::3], spec200()) for i in range(3)]
        merged = merge(shards)
        assert np.array_equal(merged.counts, whole.counts)
        assert merged.out_of_extent == whole.out_of_extent


class TestRadialProfile:
    def test_all_zero(self):
        grid = accumulate(np.empty((0, 2)), spec200())
        _, means = radial_profile(grid.counts, spec200(), (0.0, 0.0), 10.0)
        assert np.all(means == 0)

    def test_single_central_count(self):
        grid = accumulate(np.array([[0.0, 0.0]]), spec200())
        radii, means = radial_profile(grid.counts, spec200(), (0.0, 0.0), 10.0)
        assert means[0] > 0
        assert np.all(means[1:] == 0)

    def test_heat_kernel_sampling(self):
        # Positions drawn directly from the free-diffusion law (independent
        # of the stepper); binned means must match the kernel profile.
        n, t, d = 200_000, 100.0, 1e-9
        rng = np.random.default_rng(6)
        sigma_um = math.sqrt(2 * d * t) * 1e6
        pts = rng.normal(0.0, sigma_um, size=(n, 2))
        spec = spec200()
        grid = accumulate(pts, spec)
        radii, prof = radial_profile(grid.counts, spec, (0.0, 0.0), 50.0)

        xc, yc = spec.pixel_centers()
        dist_m = np.hypot(xc[None, :], yc[:, None]) * 1e-6
        kernel_counts = free_green_2d(dist_m, t, n, d) * spec.pixel_area_m2()
        _, prof_ref = radial_profile(kernel_counts, spec, (0.0, 0.0), 50.0)
        _, npix = radial_pixel_counts(spec, (0.0, 0.0), 50.0)

        usable = (radii < 1000) & (prof_ref * npix >= 300)
        rel = np.abs(prof[usable] - prof_ref[usable]) / prof_ref[usable]
        assert rel.max() < 0.05

    def test_bad_bin_width(self):
        with pytest.raises(ValueError):
            radial_profile(np.zeros((4, 4)), GridSpec(0, 40, 0, 40, 10.0), (0, 0), 0.0)


class TestRenderHeatmap:
    def grid_with(self, counts: np.ndarray) -> SnapshotGrid:
        ny, nx = counts.shape
        spec = GridSpec(0, nx * 10.0, 0, ny * 10.0, 10.0)
        return SnapshotGrid(spec=spec, species="A", time_s=96.0,
                            counts=counts.astype(np.int64), out_of_extent=0)

    def test_ppm_layout(self):
        grid = self.grid_with(np.zeros((3, 5), dtype=int))
        ppm, _ = render_heatmap(grid)
        assert ppm.startswith(b"P6\n5 3\n255\n")
        assert len(ppm) == len(b"P6\n5 3\n255\n") + 3 * 5 * 3

    def test_all_zero_uniform_lowest(self):
        ppm, sidecar = render_heatmap(self.grid_with(np.zeros((4, 4), dtype=int)))
        body = ppm[len(b"P6\n4 4\n255\n"):]
        assert body == body[:3] * 16
        assert "max_count=0" in sidecar

    def test_single_peak_with_fixed_max(self):
        counts = np.zeros((4, 4), dtype=int)
        counts[1, 2] = 7
        ppm, _ = render_heatmap(self.grid_with(counts), max_count=7)
        body = ppm[len(b"P6\n4 4\n255\n"):]
        pixels = [body[i:i + 3] for i in range(0, len(body), 3)]
        top = max(set(pixels), key=lambda c: sum(c))
        assert pixels.count(top) == 1
        # Row 1 (lowest-y side) renders third from the top after the flip.
        assert pixels.index(top) == (4 - 1 - 1) * 4 + 2

    def test_deterministic(self):
        counts = np.arange(16).reshape(4, 4)
        a = render_heatmap(self.grid_with(counts))
        b = render_heatmap(self.grid_with(counts))
        assert a == b

    def test_log_scale_differs(self):
        counts = np.arange(16).reshape(4, 4)
        lin, side_lin = render_heatmap(self.grid_with(counts), scale="linear")
        log, side_log = render_heatmap(self.grid_with(counts), scale="log")
        assert lin != log
        assert "scale=linear" in side_lin and "scale=log" in side_log

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            render_heatmap(self.grid_with(np.zeros((2, 2), dtype=int)), scale="sqrt")


class TestCsvFormat:
    def test_golden_format(self):
        counts = np.array([[0, 1, 2], [3, 4, 5]])
        grid = SnapshotGrid(spec=GridSpec(-15, 15, 0, 20, 10.0), species="E",
                            time_s=498.0, counts=counts, out_of_extent=9)
        expected = (
            "# t=498 species=E extent=-15,15,0,20µm pixel=10µm out_of_extent=9\n"
            "0,1,2\n"
            "3,4,5\n"
        )
        assert grid_to_csv(grid) == expected

    def test_roundtrip(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform(-1100, 1100, size=(4000, 2))
        grid = accumulate(pts, spec200(), species="A", time_s=96.0)
        back = grid_from_csv(grid_to_csv(grid))
        assert np.array_equal(back.counts, grid.counts)
        assert back.spec == grid.spec
        assert back.out_of_extent == grid.out_of_extent
        assert back.time_s == grid.time_s and back.species == grid.species

    def test_decimal_grid_roundtrip(self):
        from spheroidsim.histogram import format_grid_csv
        spec = GridSpec(0, 20, 0, 20, 10.0)
        vals = np.array([[0.5, 1.25e9], [3.0, 0.0]])
        text = format_grid_csv(vals, spec, "A", 25.0)
        back = grid_from_csv(text)
        assert back.counts.dtype == np.float64
        assert np.allclose(back.counts, vals)

    def test_reject_corrupt_header(self):
        with pytest.raises(ValueError):
            grid_from_csv("# not a header\n1,2\n")

    def test_reject_shape_mismatch(self):
        grid = accumulate(np.empty((0, 2)), GridSpec(0, 20, 0, 20, 10.0))
        text = grid_to_csv(grid)
        truncated = "\n".join(text.splitlines()[:-1]) + "\n"
        with pytest.raises(ValueError):
            grid_from_csv(truncated)
