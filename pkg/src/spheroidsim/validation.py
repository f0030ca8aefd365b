"""Oracle comparisons and property checks behind ``spheroidsim validate``.

Each check pins its scale and tolerance as constants and returns a
:class:`CheckResult`; the acceptance test suite asserts on these same
implementations so the CLI report and the tests cannot drift apart.
``quick=True`` shrinks particle counts and horizons for smoke testing
and is not acceptance evidence.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SimConfig
from .histogram import GridSpec, accumulate, radial_pixel_counts, radial_profile
from .oracle import compare_fields, fd_solve, free_green_2d
from .scene import Scene, Spheroid, build_scenario, effective_diffusion, porosity, sphere_volume
from .stepper import Engine, Species, run_simulation

D_BULK = 1e-9          # m^2/s
EPS_TABLE = 0.1349
KF_TABLE = 0.01        # 1/s
DT = 0.5               # s
R_S_UM = 275.0
D_UM = 500.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: str
    threshold: str
    details: str = ""
    elapsed_s: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" | {self.details}" if self.details else ""
        return (f"[{status}] {self.name}: measured {self.measured}, "
                f"requires {self.threshold} ({self.elapsed_s:.1f}s){extra}")


def _timed(fn):
    def wrapper(*args, **kwargs) -> CheckResult:
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        result.elapsed_s = time.perf_counter() - t0
        return result
    return wrapper


def _huge_confining_spheroid(k_f: float) -> Scene:
    """Region so large that no particle reaches its boundary in a test run."""
    sph = Spheroid(center=(0.0, 0.0), radius=0.05, porosity=EPS_TABLE,
                   tortuosity=EPS_TABLE**-0.5, d_eff=5e-11, k_f=k_f)
    return Scene(d_bulk=D_BULK, tx_position=(0.0, 0.0), regions=(sph,))


# -- criterion 1 -------------------------------------------------------------

POROSITY_TOL = 1e-3


@_timed
def check_porosity_reproduction(quick: bool = False) -> CheckResult:
    v_s = sphere_volume(R_S_UM * 1e-6)
    eps_a = porosity(v_s, 24000, 3.14e-15)
    eps_b = porosity(v_s, 20000, 3.14e-15)
    err_a = abs(eps_a - 0.1349)
    err_b = abs(eps_b - 0.2791)
    return CheckResult(
        name="porosity-reproduction",
        passed=err_a <= POROSITY_TOL and err_b <= POROSITY_TOL,
        measured=f"eps(24000)={eps_a:.6f}, eps(20000)={eps_b:.6f}",
        threshold=f"0.1349/0.2791 within {POROSITY_TOL}",
    )


# -- criterion 2 -------------------------------------------------------------

D_EFF_TARGET = 5e-11
D_EFF_RTOL = 0.005


@_timed
def check_effective_diffusion_reproduction(quick: bool = False) -> CheckResult:
    d_eff = effective_diffusion(D_BULK, EPS_TABLE)
    rel = abs(d_eff - D_EFF_TARGET) / D_EFF_TARGET
    return CheckResult(
        name="effective-diffusion-reproduction",
        passed=rel <= D_EFF_RTOL,
        measured=f"{d_eff:.6e} m^2/s (rel err {rel:.3%})",
        threshold=f"{D_EFF_TARGET:.1e} within {D_EFF_RTOL:.1%}",
        details="eps^1.5*D with eps=0.1349 lands 0.91% from the 1-significant-digit "
                "target; the formula value is exact",
    )


# -- criterion 3 -------------------------------------------------------------

PROFILE_N = 1_000_000
PROFILE_T = 100.0
PROFILE_RTOL = 0.03
PROFILE_BIN_UM = 50.0
PROFILE_MIN_EXPECTED = 100.0


@_timed
def check_free_diffusion_profile(quick: bool = False) -> CheckResult:
    n = 100_000 if quick else PROFILE_N
    cfg = SimConfig(scenario="transparent", n_particles=n, t_end_s=PROFILE_T,
                    snapshot_times_s=(PROFILE_T,), master_seed=103)
    scene = cfg.build_scene()
    spec = cfg.grid_spec()
    snap = run_simulation(scene, cfg).snapshots[0]
    grid = accumulate(snap.positions * 1e6, spec, "A", snap.time_s)

    xc, yc = spec.pixel_centers()
    dist_m = np.hypot(xc[None, :], yc[:, None]) * 1e-6
    expected_counts = free_green_2d(dist_m, PROFILE_T, n, D_BULK) * spec.pixel_area_m2()

    radii, prof_obs = radial_profile(grid.counts, spec, (0.0, 0.0), PROFILE_BIN_UM)
    _, prof_exp = radial_profile(expected_counts, spec, (0.0, 0.0), PROFILE_BIN_UM)
    _, npix = radial_pixel_counts(spec, (0.0, 0.0), PROFILE_BIN_UM)

    # Annuli beyond the extent half-width are clipped by the grid corners;
    # keep fully contained bins and apply the expected-count filter.
    contained = radii < min(spec.x_max, spec.y_max)
    eligible = contained & (prof_exp * npix >= PROFILE_MIN_EXPECTED)
    rel = np.abs(prof_obs[eligible] - prof_exp[eligible]) / prof_exp[eligible]
    return CheckResult(
        name="free-diffusion-profile",
        passed=bool(rel.max() <= PROFILE_RTOL),
        measured=f"max rel err {rel.max():.3%} over {int(eligible.sum())} bins",
        threshold=f"<= {PROFILE_RTOL:.0%} for bins with expected >= {PROFILE_MIN_EXPECTED:.0f}",
        details=f"N={n}, t={PROFILE_T} s, {PROFILE_BIN_UM} um bins",
    )


# -- criterion 4 -------------------------------------------------------------

MSD_N = 100_000
MSD_TIMES = (10.0, 25.0, 50.0)
MSD_RTOL = 0.03


@_timed
def check_msd_laws(quick: bool = False) -> CheckResult:
    n = 20_000 if quick else MSD_N
    worst = 0.0
    details = []
    for label, scene, d in (
        ("bulk", build_scenario("transparent", d_bulk=D_BULK), D_BULK),
        ("interior", _huge_confining_spheroid(0.0), 5e-11),
    ):
        cfg = SimConfig(scenario="transparent", n_particles=n, t_end_s=MSD_TIMES[-1],
                        snapshot_times_s=MSD_TIMES, master_seed=104)
        label_worst = 0.0
        for snap in run_simulation(scene, cfg).snapshots:
            msd = float(np.mean(np.sum(snap.positions**2, axis=1)))
            label_worst = max(label_worst, abs(msd / (4.0 * d * snap.time_s) - 1.0))
        worst = max(worst, label_worst)
        details.append(f"{label} worst {label_worst:.3%}")
    return CheckResult(
        name="msd-laws",
        passed=worst <= MSD_RTOL,
        measured=f"worst rel err {worst:.3%}",
        threshold=f"4*D*t within {MSD_RTOL:.0%} at N={n}, {len(MSD_TIMES)} times to "
                  f"{MSD_TIMES[-1]:.0f} s",
        details="; ".join(details),
    )


# -- criterion 5 -------------------------------------------------------------

UPTAKE_N = 100_000
UPTAKE_TIMES = (100.0, 500.0, 1000.0)
UPTAKE_SIGMAS = 3.0


@_timed
def check_uptake_decay(quick: bool = False) -> CheckResult:
    n = 20_000 if quick else UPTAKE_N
    scene = _huge_confining_spheroid(KF_TABLE)
    cfg = SimConfig(scenario="one", n_particles=n, t_end_s=UPTAKE_TIMES[-1],
                    snapshot_times_s=UPTAKE_TIMES, conversion_rate_per_s=KF_TABLE,
                    master_seed=105)
    worst_z = 0.0
    parts = []
    for snap in run_simulation(scene, cfg).snapshots:
        p = math.exp(-KF_TABLE * snap.time_s)
        survivors = snap.count(Species.A)
        sigma = math.sqrt(n * p * (1.0 - p))
        z = abs(survivors - n * p) / sigma
        worst_z = max(worst_z, z)
        parts.append(f"t={snap.time_s:.0f}: {survivors} vs {n * p:.1f}")
    return CheckResult(
        name="uptake-decay",
        passed=worst_z <= UPTAKE_SIGMAS,
        measured=f"worst |z| = {worst_z:.2f}",
        threshold=f"survivors within {UPTAKE_SIGMAS:.0f} binomial sigma of N*exp(-k_f*t)",
        details="; ".join(parts),
    )


# -- criterion 6 -------------------------------------------------------------

MASS_N = 20_000
MASS_T_END = 300.0
MASS_SNAPSHOTS = (150.0, 300.0)
ALL_PRESETS = ("transparent", "one", "two", "four", "ring-center", "ring-outside")


@_timed
def check_mass_conservation(quick: bool = False) -> CheckResult:
    n = 5_000 if quick else MASS_N
    failures = []
    conversions_seen = 0
    for preset in ALL_PRESETS:
        for k_f in (0.0, KF_TABLE) if preset in ("one", "four") else (0.0,):
            cfg = SimConfig(scenario=preset, n_particles=n, t_end_s=MASS_T_END,
                            snapshot_times_s=MASS_SNAPSHOTS,
                            conversion_rate_per_s=k_f, master_seed=106)
            for snap in run_simulation(cfg.build_scene(), cfg).snapshots:
                n_a, n_e = snap.count(Species.A), snap.count(Species.E)
                if n_a + n_e != n:
                    failures.append(f"{preset} k_f={k_f} t={snap.time_s}: A+E={n_a + n_e}")
                if k_f == 0.0 and n_e != 0:
                    failures.append(f"{preset} t={snap.time_s}: E={n_e} with k_f=0")
                conversions_seen += n_e
    return CheckResult(
        name="mass-conservation",
        passed=not failures,
        measured="exact on all presets and snapshots" if not failures else "; ".join(failures),
        threshold="#A + #E = N exactly; k_f=0 implies #E = 0",
        details=f"N={n}, snapshots {MASS_SNAPSHOTS}, E particles observed: {conversions_seen}",
    )


# -- criterion 7 -------------------------------------------------------------

SYMMETRY_N = 100_000
SYMMETRY_T = 498.0


def _symmetry_metric(positions_um: np.ndarray, transform, spec: GridSpec) -> tuple[float, float]:
    g = accumulate(positions_um, spec).counts.astype(np.float64)
    m = accumulate(transform(positions_um), spec).counts.astype(np.float64)
    occupied = (g + m) > 0
    mean_count = g[occupied].sum() / occupied.sum()
    bound = 5.0 / math.sqrt(mean_count)
    metric = math.sqrt(np.sum((g[occupied] - m[occupied]) ** 2) / np.sum(g[occupied] ** 2))
    return metric, bound


@_timed
def check_symmetry(quick: bool = False) -> CheckResult:
    n = 20_000 if quick else SYMMETRY_N
    t = 96.0 if quick else SYMMETRY_T
    results = []
    ok = True
    for preset, transform in (
        ("two", lambda p: p * np.array([-1.0, 1.0])),
        ("four", lambda p: np.stack([-p[:, 1], p[:, 0]], axis=1)),
    ):
        cfg = SimConfig(scenario=preset, n_particles=n, t_end_s=t,
                        snapshot_times_s=(t,), master_seed=107)
        snap = run_simulation(cfg.build_scene(), cfg).snapshots[0]
        metric, bound = _symmetry_metric(snap.positions * 1e6, transform, cfg.grid_spec())
        ok &= metric < bound
        results.append(f"{preset}: {metric:.3f} vs bound {bound:.3f}")
    return CheckResult(
        name="symmetry",
        passed=ok,
        measured="; ".join(results),
        threshold="mirror (two) and 90-degree rotation (four) L2 difference below "
                  "5/sqrt(mean occupied count)",
        details=f"N={n}, t={t:.0f} s",
    )


# -- criterion 8 -------------------------------------------------------------

FD_N = 100_000
FD_T = 1500.0
FD_PIXEL_UM = 40.0
FD_L2_MAX = 0.10
FD_BAND_PIXELS = 2.0


@_timed
def check_fd_cross_check(quick: bool = False) -> CheckResult:
    n = 20_000 if quick else FD_N
    t = 500.0 if quick else FD_T
    cfg = SimConfig(scenario="one", n_particles=n, t_end_s=t, snapshot_times_s=(t,),
                    grid_pixel_um=FD_PIXEL_UM, master_seed=108)
    scene = cfg.build_scene()
    spec = cfg.grid_spec()
    snap = run_simulation(scene, cfg).snapshots[0]
    grid = accumulate(snap.positions * 1e6, spec, "A", t)

    dt_fd = 0.2  # below the 0.5 * h^2 / (4 D_max) bound for a 40 um grid
    field = fd_solve(scene, spec, dt_fd, t, [t], n=n)[t][0]

    xc, yc = spec.pixel_centers()
    dist = np.hypot(xc[None, :] - D_UM, yc[:, None])
    band = np.abs(dist - R_S_UM) <= FD_BAND_PIXELS * FD_PIXEL_UM
    floor = 1.0 / spec.pixel_area_m2()  # one count per pixel
    measured = compare_fields(grid, field, "l2-relative", noise_floor=floor, exclude=band)

    # Context for the report: the same metric outside the porous region, and
    # the interior concentration amplification relative to the nearby bulk.
    exterior = compare_fields(grid, field, "l2-relative", noise_floor=floor,
                              exclude=band | (dist < R_S_UM))
    conc = grid.counts / spec.pixel_area_m2()
    deep = dist <= R_S_UM - FD_BAND_PIXELS * FD_PIXEL_UM
    near = (dist >= R_S_UM + FD_BAND_PIXELS * FD_PIXEL_UM) & (dist <= R_S_UM + 160.0)
    amp = conc[deep].mean() / conc[near].mean() if conc[near].mean() > 0 else math.nan
    return CheckResult(
        name="fd-cross-check",
        passed=measured <= FD_L2_MAX,
        measured=f"L2-relative {measured:.3f}",
        threshold=f"<= {FD_L2_MAX:.2f} above noise floor, excluding a "
                  f"{FD_BAND_PIXELS:.0f}-pixel boundary band",
        details=(f"N={n}, t={t:.0f} s, {FD_PIXEL_UM:.0f} um grid; exterior-only "
                 f"L2 {exterior:.3f}; interior/exterior concentration ratio "
                 f"{amp:.2f} (walk equilibrium sqrt(D/D_eff) = "
                 f"{math.sqrt(D_BULK / effective_diffusion(D_BULK, EPS_TABLE)):.2f}; "
                 f"the grid solver models a continuous profile)"),
    )


FD_TRANSPARENT_N = 1_000_000
# Short horizon: the grid solver reflects at the window edge, so the
# comparison is only fair while the plume has negligible mass outside.
FD_TRANSPARENT_T = 50.0


@_timed
def check_fd_transparent_agreement(quick: bool = False) -> CheckResult:
    """Particle-vs-grid agreement where the two models coincide (no regions)."""
    n = 100_000 if quick else FD_TRANSPARENT_N
    t = FD_TRANSPARENT_T
    cfg = SimConfig(scenario="transparent", n_particles=n, t_end_s=t,
                    snapshot_times_s=(t,), grid_pixel_um=FD_PIXEL_UM, master_seed=109)
    scene = cfg.build_scene()
    spec = cfg.grid_spec()
    snap = run_simulation(scene, cfg).snapshots[0]
    grid = accumulate(snap.positions * 1e6, spec, "A", t)
    field = fd_solve(scene, spec, 0.2, t, [t], n=n)[t][0]
    floor = 1.0 / spec.pixel_area_m2()
    measured = compare_fields(grid, field, "l2-relative", noise_floor=floor)
    threshold = 0.25 if quick else FD_L2_MAX
    return CheckResult(
        name="fd-transparent-agreement",
        passed=measured <= threshold,
        measured=f"L2-relative {measured:.3f}",
        threshold=f"<= {threshold:.2f} above a one-count noise floor",
        details=f"N={n}, t={t:.0f} s, {FD_PIXEL_UM:.0f} um grid",
    )


# -- criterion 9 -------------------------------------------------------------

RING_N = 100_000
RING_T = 3000.0
RING_RADIUS_UM = 775.0
RING_SIGMAS = 5.0


@_timed
def check_ring_entrapment(quick: bool = False) -> CheckResult:
    n = 20_000 if quick else RING_N
    t = 600.0 if quick else RING_T
    fractions = {}
    for preset in ("ring-center", "transparent"):
        cfg = SimConfig(scenario=preset, n_particles=n, t_end_s=t,
                        snapshot_times_s=(t,), master_seed=110)
        snap = run_simulation(cfg.build_scene(), cfg).snapshots[0]
        r = np.hypot(snap.positions[:, 0], snap.positions[:, 1]) * 1e6
        fractions[preset] = float(np.mean(r <= RING_RADIUS_UM))
    p_ring, p_free = fractions["ring-center"], fractions["transparent"]
    sigma = math.sqrt(p_ring * (1 - p_ring) / n + p_free * (1 - p_free) / n)
    z = (p_ring - p_free) / sigma if sigma > 0 else math.inf
    return CheckResult(
        name="ring-entrapment",
        passed=p_ring > p_free and z >= RING_SIGMAS,
        measured=f"fractions within {RING_RADIUS_UM:.0f} um: ring-center {p_ring:.4f}, "
                 f"transparent {p_free:.4f} (z = {z:.1f})",
        threshold=f"ring-center fraction larger by >= {RING_SIGMAS:.0f} combined sigma",
        details=f"N={n}, t={t:.0f} s",
    )


# -- criterion 10 ------------------------------------------------------------

GRADIENT_N = 100_000
GRADIENT_T = 3000.0
GRADIENT_SIGMAS = 3.0


@_timed
def check_uptake_gradient(quick: bool = False) -> CheckResult:
    n = 20_000 if quick else GRADIENT_N
    t = 600.0 if quick else GRADIENT_T
    cfg = SimConfig(scenario="two", n_particles=n, t_end_s=t, snapshot_times_s=(t,),
                    conversion_rate_per_s=KF_TABLE, master_seed=111)
    scene = cfg.build_scene()
    snap = run_simulation(scene, cfg).snapshots[0]
    e_pos = snap.positions_of(Species.E) * 1e6

    ok = True
    parts = []
    for region in scene.regions:
        center = np.asarray(region.center) * 1e6
        inside = np.hypot(*(e_pos - center).T) <= R_S_UM
        pts = e_pos[inside]
        toward_tx = -center / np.linalg.norm(center)  # source sits at the origin
        facing = (pts - center) @ toward_tx > 0
        n_near, n_far = int(facing.sum()), int((~facing).sum())
        z = (n_near - n_far) / math.sqrt(n_near + n_far) if n_near + n_far else 0.0
        ok &= z >= GRADIENT_SIGMAS
        parts.append(f"center {center[0]:+.0f} um: near {n_near} vs far {n_far} (z={z:.1f})")
    return CheckResult(
        name="uptake-gradient",
        passed=ok,
        measured="; ".join(parts),
        threshold=f"source-facing half exceeds far half by >= {GRADIENT_SIGMAS:.0f} sigma "
                  "in each spheroid",
        details=f"N={n}, t={t:.0f} s, k_f={KF_TABLE}",
    )


# -- criterion 11 ------------------------------------------------------------

DETERMINISM_N = 20_000
DETERMINISM_T = 50.0


@_timed
def check_determinism_workers(quick: bool = False) -> CheckResult:
    from .cli import run as cli_run

    n = 5_000 if quick else DETERMINISM_N
    outputs = {}
    with tempfile.TemporaryDirectory() as tmp:
        for workers in (1, 8):
            outdir = Path(tmp) / f"w{workers}"
            cfg = SimConfig(scenario="one", n_particles=n, t_end_s=DETERMINISM_T,
                            snapshot_times_s=(25.0, 50.0), workers=workers,
                            output_dir=str(outdir), emit_ppm=False, master_seed=112)
            cli_run(cfg)
            outputs[workers] = {
                p.name: p.read_bytes() for p in sorted((outdir / "one").glob("*.csv"))
            }
    same = outputs[1] == outputs[8]
    return CheckResult(
        name="determinism-workers",
        passed=same and len(outputs[1]) == 2,
        measured="byte-identical CSVs" if same else "CSV outputs differ",
        threshold="1-worker and 8-worker runs byte-identical",
        details=f"N={n}, files: {sorted(outputs[1])}",
    )


SUITES = {
    "analytic": [
        check_porosity_reproduction,
        check_effective_diffusion_reproduction,
        check_free_diffusion_profile,
        check_msd_laws,
        check_uptake_decay,
    ],
    "fd-cross-check": [
        check_fd_transparent_agreement,
        check_fd_cross_check,
    ],
    "properties": [
        check_mass_conservation,
        check_symmetry,
        check_ring_entrapment,
        check_uptake_gradient,
        check_determinism_workers,
    ],
}
SUITES["all"] = SUITES["analytic"] + SUITES["fd-cross-check"] + SUITES["properties"]


def run_suite(suite: str, quick: bool = False) -> list[CheckResult]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    results = []
    for check in SUITES[suite]:
        result = check(quick=quick)
        print(result.line(), flush=True)
        results.append(result)
    n_pass = sum(r.passed for r in results)
    print(f"[validate] {n_pass}/{len(results)} checks passed"
          + (" (quick mode, reduced scale)" if quick else ""), flush=True)
    return results
