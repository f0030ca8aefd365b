"""Independent reference computations used to validate the particle engine.

Two instruments:

* :func:`free_green_2d`, the analytic free-space kernel for an impulsive
  point release of N molecules, C(r, t) = N / (4 pi D t) * exp(-r^2 / (4 D t)).
* :func:`fd_solve`, a deterministic explicit finite-volume solver for the
  mean-field diffusion-reaction system
      dc_A/dt = div(D(x) grad c_A) - k_f(x) c_A
      dc_E/dt = k_f(x) c_A
  with harmonic-mean face diffusivities across region boundaries and
  zero-flux grid edges.

The finite-volume scheme imposes concentration continuity across region
boundaries. The particle engine's displacement-scaling rule instead
produces an equilibrium concentration jump (interior amplified by about
sqrt(D/D_eff)), so particle-grid agreement is meaningful on transparent
scenes and in regions far from porous boundaries; near and inside porous
regions the two models legitimately differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .histogram import GridSpec, SnapshotGrid, format_grid_csv
from .scene import Scene

STABILITY_MARGIN = 0.5  # fraction of the explicit bound h^2/(4 D_max)


def free_green_2d(r, t: float, n: float, d: float):
    """Free-diffusion concentration (molecules/m^2) at radius r (m), time t (s)."""
    if t <= 0:
        raise ValueError(f"time must be positive, got {t}")
    if d <= 0:
        raise ValueError(f"diffusion coefficient must be positive, got {d}")
    r = np.asarray(r, dtype=np.float64)
    four_dt = 4.0 * d * t
    out = n / (math.pi * four_dt) * np.exp(-(r * r) / four_dt)
    return float(out) if out.ndim == 0 else out


def max_stable_dt(scene: Scene, spec: GridSpec, margin: float = STABILITY_MARGIN) -> float:
    """Largest admissible explicit time step for the given grid."""
    h = spec.pixel_um * 1e-6
    d_max = max([scene.d_bulk, *[r.d_eff for r in scene.regions]])
    return margin * h * h / (4.0 * d_max)


@dataclass(frozen=True)
class ConcentrationField:
    """Mean-field concentration on a pixel grid (molecules/m^2)."""

    spec: GridSpec
    species: str
    time_s: float
    values: np.ndarray  # (ny, nx) float64, row 0 = lowest y

    def total_mass(self) -> float:
        return float(self.values.sum()) * self.spec.pixel_area_m2()

    def to_csv(self) -> str:
        return format_grid_csv(self.values, self.spec, self.species, self.time_s)


def fd_solve(scene: Scene, spec: GridSpec, dt_fd: float, t_end: float,
             snapshot_times: list[float], n: float = 1.0,
             ) -> dict[float, tuple[ConcentrationField, ConcentrationField]]:
    """Explicit finite-volume solution of the heterogeneous model.

    The initial condition places ``n`` molecules in the pixel containing
    the scene's source. Returns {snapshot time: (A field, E field)}.

    Raises:
        ConfigError: if ``dt_fd`` violates the stability bound, a snapshot
            time is off the step grid, or the source lies outside the grid.
    """
    limit = max_stable_dt(scene, spec)
    if dt_fd > limit * (1 + 1e-12):
        raise ConfigError(
            f"dt_fd={dt_fd:.4g} s violates the stability bound "
            f"{limit:.4g} s for this grid and scene"
        )
    snap_steps = {}
    for t in snapshot_times:
        steps = t / dt_fd
        if abs(steps - round(steps)) > 1e-6 * max(1.0, abs(steps)):
            raise ConfigError(f"snapshot time {t} s is not a multiple of dt_fd={dt_fd} s")
        if not 0 < t <= t_end:
            raise ConfigError(f"snapshot time {t} s outside (0, {t_end}]")
        snap_steps[round(steps)] = t
    n_steps = round(t_end / dt_fd)

    h = spec.pixel_um * 1e-6
    xc, yc = spec.pixel_centers()
    pts = np.stack(np.meshgrid(xc, yc), axis=-1).reshape(-1, 2) * 1e-6
    reg = scene.region_index(pts).reshape(spec.ny, spec.nx)
    d_pix = np.asarray(scene.diffusion_of(reg.ravel())).reshape(reg.shape)
    kf_pix = np.zeros_like(d_pix)
    inside = reg >= 0
    if inside.any():
        kf_pix[inside] = scene.region_kf[reg[inside]]

    # Harmonic-mean diffusivities on interior faces preserve flux continuity
    # across the coefficient discontinuity.
    dx_face = 2.0 * d_pix[:, 1:] * d_pix[:, :-1] / (d_pix[:, 1:] + d_pix[:, :-1])
    dy_face = 2.0 * d_pix[1:, :] * d_pix[:-1, :] / (d_pix[1:, :] + d_pix[:-1, :])

    tx_um = (scene.tx_position[0] * 1e6, scene.tx_position[1] * 1e6)
    ix = int((tx_um[0] - spec.x_min) // spec.pixel_um)
    iy = int((tx_um[1] - spec.y_min) // spec.pixel_um)
    if not (0 <= ix < spec.nx and 0 <= iy < spec.ny):
        raise ConfigError(f"source at {tx_um} um lies outside the grid extent")

    c_a = np.zeros((spec.ny, spec.nx), dtype=np.float64)
    c_e = np.zeros_like(c_a)
    c_a[iy, ix] = n / spec.pixel_area_m2()

    # Reaction integrated exactly per step; diffusion explicit Euler.
    decay = np.exp(-kf_pix * dt_fd)
    coef = dt_fd / (h * h)
    out: dict[float, tuple[ConcentrationField, ConcentrationField]] = {}
    for step in range(1, n_steps + 1):
        div = np.zeros_like(c_a)
        fx = dx_face * (c_a[:, 1:] - c_a[:, :-1])
        div[:, :-1] += fx
        div[:, 1:] -= fx
        fy = dy_face * (c_a[1:, :] - c_a[:-1, :])
        div[:-1, :] += fy
        div[1:, :] -= fy
        c_a = c_a + coef * div
        converted = c_a * (1.0 - decay)
        c_a = c_a - converted
        c_e = c_e + converted
        if step in snap_steps:
            t = snap_steps[step]
            out[t] = (
                ConcentrationField(spec=spec, species="A", time_s=t, values=c_a.copy()),
                ConcentrationField(spec=spec, species="E", time_s=t, values=c_e.copy()),
            )
    return out


def _as_concentration(f) -> tuple[GridSpec, np.ndarray]:
    if isinstance(f, ConcentrationField):
        return f.spec, np.asarray(f.values, dtype=np.float64)
    if isinstance(f, SnapshotGrid):
        return f.spec, f.counts.astype(np.float64) / f.spec.pixel_area_m2()
    raise TypeError(f"expected ConcentrationField or SnapshotGrid, got {type(f)!r}")


def compare_fields(a, b, norm: str = "l2-relative", noise_floor: float = 0.0,
                   exclude: np.ndarray | None = None) -> float:
    """Discrepancy between two fields on identical grids.

    Counts are converted to concentration (divided by pixel area) before
    comparison. Pixels where both fields are at or below ``noise_floor``
    are ignored, as are pixels masked by ``exclude``.

    norms:
      "l2-relative":  ||a - b|| / ||a|| over included pixels.
      "max-relative-over-threshold": max |a - b| / max(|a|, |b|).
    """
    spec_a, va = _as_concentration(a)
    spec_b, vb = _as_concentration(b)
    if spec_a != spec_b:
        raise ValueError(f"grid specs differ: {spec_a} vs {spec_b}")
    include = (va > noise_floor) | (vb > noise_floor)
    if exclude is not None:
        include &= ~np.asarray(exclude, dtype=bool)
    if norm == "l2-relative":
        num = np.sum((va[include] - vb[include]) ** 2)
        den = np.sum(va[include] ** 2)
        if den == 0.0:
            return 0.0 if num == 0.0 else math.inf
        return math.sqrt(num / den)
    if norm == "max-relative-over-threshold":
        if not include.any():
            return 0.0
        da = np.abs(va[include] - vb[include])
        ref = np.maximum(np.abs(va[include]), np.abs(vb[include]))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ref > 0, da / ref, 0.0)
        return float(ratio.max())
    raise ValueError(f"unknown norm {norm!r}")
