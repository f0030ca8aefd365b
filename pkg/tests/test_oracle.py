import math

import numpy as np
import pytest

from spheroidsim import (
    ConcentrationField, GridSpec, Scene, Spheroid, build_scenario,
    compare_fields, fd_solve, free_green_2d, max_stable_dt,
)
from spheroidsim.errors import ConfigError
from spheroidsim.histogram import accumulate, radial_profile


class TestFreeGreen:
    def test_peak_value(self):
        # N/(4 pi D t) at r=0, frozen from independent arithmetic.
        assert free_green_2d(0.0, 100.0, 1e7, 1e-9) == pytest.approx(7.9577e12, rel=1e-4)

    def test_r0_equals_closed_form(self):
        n, d, t = 5e5, 3e-10, 42.0
        assert free_green_2d(0.0, t, n, d) == n / (4 * math.pi * d * t)

    def test_plane_integral_is_n(self):
        n, d, t = 1e6, 1e-9, 250.0
        r = np.linspace(0, 0.05, 400_001)
        c = free_green_2d(r, t, n, d)
        total = np.trapezoid(c * 2 * math.pi * r, r)
        assert total == pytest.approx(n, rel=1e-6)

    def test_monotone_in_r_and_t(self):
        r = np.linspace(0, 1e-3, 50)
        c = free_green_2d(r, 100.0, 1e6, 1e-9)
        assert np.all(np.diff(c) < 0)
        peaks = [free_green_2d(0.0, t, 1e6, 1e-9) for t in (10.0, 20.0, 40.0, 80.0)]
        assert all(a > b for a, b in zip(peaks, peaks[1:]))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            free_green_2d(0.0, 0.0, 1e6, 1e-9)
        with pytest.raises(ValueError):
            free_green_2d(0.0, -5.0, 1e6, 1e-9)
        with pytest.raises(ValueError):
            free_green_2d(0.0, 10.0, 1e6, 0.0)


class TestFdSolve:
    def test_stability_bound_enforced(self):
        scene = build_scenario("transparent")
        spec = GridSpec(-1000, 1000, -1000, 1000, 40.0)
        limit = max_stable_dt(scene, spec)
        assert limit == pytest.approx(0.5 * (40e-6) ** 2 / (4e-9))
        with pytest.raises(ConfigError):
            fd_solve(scene, spec, limit * 1.01, 10.0, [10.0])

    def test_snapshot_alignment_enforced(self):
        scene = build_scenario("transparent")
        spec = GridSpec(-1000, 1000, -1000, 1000, 40.0)
        with pytest.raises(ConfigError):
            fd_solve(scene, spec, 0.2, 10.0, [0.37])

    def test_source_outside_grid(self):
        scene = build_scenario("ring-outside")  # source at (1000, 0) um
        spec = GridSpec(-500, 500, -500, 500, 40.0)
        with pytest.raises(ConfigError):
            fd_solve(scene, spec, 0.2, 10.0, [10.0])

    def test_mass_conserved_without_reaction(self):
        scene = build_scenario("one")
        spec = GridSpec(-1000, 1000, -1000, 1000, 40.0)
        fields = fd_solve(scene, spec, 0.2, 200.0, [100.0, 200.0], n=1e6)
        for t, (fa, fe) in fields.items():
            assert fa.total_mass() == pytest.approx(1e6, rel=1e-9)
            assert fe.total_mass() == 0.0
            assert np.all(fa.values >= 0)

    def test_uniform_decay_closed_form(self):
        # A region engulfing the whole grid turns the PDE into dc/dt = -k c.
        sph = Spheroid((0.0, 0.0), 0.05, 0.5, 0.5**-0.5, 0.5**1.5 * 1e-9, 0.01)
        scene = Scene(d_bulk=1e-9, tx_position=(0.0, 0.0), regions=(sph,))
        spec = GridSpec(-500, 500, -500, 500, 20.0)
        fields = fd_solve(scene, spec, 0.04, 100.0, [100.0], n=1e6)
        fa, fe = fields[100.0]
        assert fa.total_mass() == pytest.approx(1e6 * math.exp(-1.0), rel=1e-3)
        assert fa.total_mass() + fe.total_mass() == pytest.approx(1e6, rel=1e-9)

    def test_transparent_matches_kernel_profile(self):
        # Discrete release sits at its pixel center; compare radial profiles
        # about that point once the kernel is much wider than a pixel.
        n, t, d = 1e6, 25.0, 1e-9
        scene = build_scenario("transparent", d_bulk=d)
        spec = GridSpec(-1000, 1000, -1000, 1000, 10.0)
        fa, _ = fd_solve(scene, spec, 0.0125, t, [t], n=n)[t]
        src = (5.0, 5.0)
        xc, yc = spec.pixel_centers()
        dist_m = np.hypot(xc[None, :] - src[0], yc[:, None] - src[1]) * 1e-6
        kernel = free_green_2d(dist_m, t, n, d)
        radii, prof_fd = radial_profile(fa.values, spec, src, 20.0)
        _, prof_k = radial_profile(kernel, spec, src, 20.0)
        keep = radii < 3 * math.sqrt(2 * d * t) * 1e6
        rel = np.abs(prof_fd[keep] - prof_k[keep]) / prof_k[keep]
        assert rel.max() < 0.02

    def test_one_spheroid_mirror_symmetry(self):
        # Odd pixel count keeps the source pixel centered on the x axis.
        scene = build_scenario("one")
        spec = GridSpec(-1020, 1020, -1020, 1020, 40.0)
        fa, _ = fd_solve(scene, spec, 0.2, 50.0, [50.0], n=1e5)[50.0]
        mirrored = fa.values[::-1, :]
        assert np.abs(fa.values - mirrored).max() <= 1e-12 * fa.values.max()

    def test_deterministic(self):
        scene = build_scenario("one")
        spec = GridSpec(-1000, 1000, -1000, 1000, 40.0)
        a = fd_solve(scene, spec, 0.2, 20.0, [20.0], n=1e5)[20.0][0]
        b = fd_solve(scene, spec, 0.2, 20.0, [20.0], n=1e5)[20.0][0]
        assert np.array_equal(a.values, b.values)

    def test_field_csv_uses_grid_format(self):
        from spheroidsim import grid_from_csv
        scene = build_scenario("transparent")
        spec = GridSpec(-1000, 1000, -1000, 1000, 40.0)
        fa, _ = fd_solve(scene, spec, 0.2, 20.0, [20.0], n=1e5)[20.0]
        text = fa.to_csv()
        assert text.startswith("# t=20 species=A extent=-1000,1000,-1000,1000µm")
        back = grid_from_csv(text)
        assert back.spec == spec
        assert np.allclose(back.counts, fa.values, rtol=1e-9)


class TestCompareFields:
    def field(self, values, spec=None):
        spec = spec or GridSpec(0, 40, 0, 40, 20.0)
        return ConcentrationField(spec=spec, species="A", time_s=1.0,
                                  values=np.asarray(values, dtype=np.float64))

    def test_identical_fields(self):
        f = self.field([[1.0, 2.0], [3.0, 4.0]])
        assert compare_fields(f, f) == 0.0

    def test_doubled_field(self):
        a = self.field([[1.0, 2.0], [3.0, 4.0]])
        b = self.field([[2.0, 4.0], [6.0, 8.0]])
        assert compare_fields(a, b) == pytest.approx(1.0)

    def test_mismatched_specs_rejected(self):
        a = self.field([[1.0, 2.0], [3.0, 4.0]])
        b = self.field([[1.0, 2.0], [3.0, 4.0]], spec=GridSpec(0, 80, 0, 80, 40.0))
        with pytest.raises(ValueError):
            compare_fields(a, b)

    def test_noise_floor_excludes_pixels(self):
        a = self.field([[10.0, 0.1], [10.0, 0.2]])
        b = self.field([[10.0, 5.0], [10.0, 0.0]])
        # Floor above the small entries leaves only the agreeing pixels.
        assert compare_fields(a, b, noise_floor=6.0) == 0.0
        assert compare_fields(a, b) > 0.0

    def test_exclude_mask(self):
        a = self.field([[10.0, 10.0], [10.0, 10.0]])
        b = self.field([[10.0, 10.0], [10.0, 99.0]])
        mask = np.zeros((2, 2), dtype=bool)
        mask[1, 1] = True
        assert compare_fields(a, b, exclude=mask) == 0.0

    def test_max_relative_norm(self):
        a = self.field([[10.0, 4.0], [10.0, 10.0]])
        b = self.field([[10.0, 5.0], [10.0, 10.0]])
        assert compare_fields(a, b, norm="max-relative-over-threshold") == pytest.approx(0.2)

    def test_counts_convert_to_concentration(self):
        spec = GridSpec(0, 40, 0, 40, 20.0)
        counts = accumulate(np.array([[10.0, 10.0], [30.0, 30.0]]), spec)
        field = self.field(counts.counts / spec.pixel_area_m2(), spec=spec)
        assert compare_fields(counts, field) == 0.0

    def test_unknown_norm(self):
        f = self.field([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            compare_fields(f, f, norm="l1")
