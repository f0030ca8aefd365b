"""Brownian-dynamics engine with porous-region boundary handling.

Motion rules, applied per particle per time step:

1. Sample a displacement whose x and y components are independent
   zero-mean Gaussians with variance 2*D_local*dt, where D_local is the
   diffusion coefficient of the region the particle starts the step in
   (D in the bulk, D_eff inside a porous region).
2. If the displacement segment crosses a region boundary, truncate it at
   the first crossing, scale the remaining length by sqrt(D_dest/D_src)
   keeping the direction, and continue from the crossing point. The
   remainder may cross again; after ``max_crossings`` traversals the
   particle is left at the last crossing point (counted in diagnostics).
3. If the end-of-step position lies in a region with conversion rate
   k_f > 0, the particle converts from diffusing species A to immobile
   species E with probability 1 - exp(-k_f*dt), freezing in place.

Updates within a step are independent across particles, so a step may be
sharded over any number of workers; randomness comes from per-block
counter streams (see :mod:`spheroidsim.rng`), which makes runs
bit-reproducible regardless of worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, NamedTuple, TYPE_CHECKING

import numpy as np

from .errors import ConfigError, CorruptedStateError
from .rng import BLOCK_SIZE, StreamFactory, n_blocks
from .scene import BULK, Scene

if TYPE_CHECKING:
    from .config import SimConfig

# Roots below this path fraction are the re-detected previous crossing
# point, not a new traversal.
_EPS_LAMBDA = 1e-9

_DEBUG_CHECKS = os.environ.get("SPHEROIDSIM_DEBUG", "") not in ("", "0")

DEFAULT_MAX_CROSSINGS = 8


class Species(IntEnum):
    A = 0  # diffusing
    E = 1  # converted, immobile


@dataclass
class Particle:
    """Single-particle record for the scalar stepping API."""

    position: np.ndarray                 # (2,) m
    species: Species = Species.A
    conversion_time: float | None = None  # s, set iff species is E


@dataclass(frozen=True)
class StepOutcome:
    end_position: np.ndarray  # (2,) m
    crossings: int
    converted: bool
    clamped: bool = False


class Circle(NamedTuple):
    center: tuple[float, float]  # m
    radius: float                # m


def sample_displacement(d_local: float, dt: float, rng: np.random.Generator,
                        n: int | None = None) -> np.ndarray:
    """Gaussian step(s) with per-axis variance 2*d_local*dt.

    Returns shape (2,) for ``n is None``, else (n, 2).
    """
    if d_local < 0:
        raise ValueError(f"diffusion coefficient must be >= 0, got {d_local}")
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    sigma = math.sqrt(2.0 * d_local * dt)
    shape = (2,) if n is None else (n, 2)
    return sigma * rng.standard_normal(shape)


def conversion_probability(k_f: float, dt: float) -> float:
    """Per-step conversion probability 1 - exp(-k_f*dt)."""
    if k_f < 0:
        raise ValueError(f"conversion rate must be >= 0, got {k_f}")
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return -math.expm1(-k_f * dt)


def first_crossing(p0, p1, circle: Circle) -> float | None:
    """Smallest fraction lambda in (0, 1] where p0 + lambda*(p1-p0) meets the circle.

    Returns None when the segment does not reach the circle; tangency
    (discriminant below numerical tolerance) counts as no crossing.
    """
    p0 = np.asarray(p0, dtype=np.float64).reshape(1, 2)
    v = np.asarray(p1, dtype=np.float64).reshape(1, 2) - p0
    centers = np.asarray(circle.center, dtype=np.float64).reshape(1, 2)
    radii = np.asarray([circle.radius], dtype=np.float64)
    lam, _ = _first_hit(p0, v, centers, radii)
    return float(lam[0]) if lam[0] <= 1.0 else None


def _first_hit(p: np.ndarray, v: np.ndarray, centers: np.ndarray,
               radii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First circle hit along each segment p -> p+v.

    Solves |p + lambda*v - c|^2 = r^2 per particle and circle with the
    numerically stable quadratic form, keeping the smallest root in
    (_EPS_LAMBDA, 1]. Returns (lam, circle_index); lam is inf for misses.
    """
    d = p[:, None, :] - centers[None, :, :]                  # (n, C, 2)
    a = np.einsum("ik,ik->i", v, v)[:, None]                 # (n, 1)
    b = 2.0 * np.einsum("ik,ick->ic", v, d)                  # (n, C)
    c0 = np.einsum("ick,ick->ic", d, d) - radii[None, :] ** 2

    disc = b * b - 4.0 * a * c0
    valid = (disc > 0.0) & (a > 0.0)
    sq = np.sqrt(np.where(valid, disc, 0.0))
    q = -0.5 * (b + np.copysign(sq, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(valid, q / a, np.inf)
        r2 = np.where(valid & (q != 0.0), c0 / q, np.inf)

    lam12 = np.stack([r1, r2], axis=-1)                      # (n, C, 2)
    lam12 = np.where((lam12 > _EPS_LAMBDA) & (lam12 <= 1.0), lam12, np.inf)
    per_circle = lam12.min(axis=-1)                          # (n, C)
    ci = per_circle.argmin(axis=1)
    lam = per_circle[np.arange(p.shape[0]), ci]
    return lam, ci


def resolve_crossings(p0: np.ndarray, disp: np.ndarray, reg: np.ndarray,
                      scene: Scene, max_crossings: int = DEFAULT_MAX_CROSSINGS,
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Apply the boundary scaling rule to sampled displacements.

    Args:
        p0: (n, 2) start positions, m.
        disp: (n, 2) sampled displacements, m.
        reg: (n,) region index at the start of the step (BULK or >= 0).
        scene: environment.
        max_crossings: traversal cap; capped particles stop at the last
            crossing point.

    Returns:
        (end_positions, end_regions, crossings, clamped) arrays.
    """
    n = p0.shape[0]
    end = p0 + disp
    reg = np.asarray(reg, dtype=np.int64).copy()
    crossings = np.zeros(n, dtype=np.int32)
    clamped = np.zeros(n, dtype=bool)
    if scene.circle_radii.size == 0 or n == 0:
        return end, reg, crossings, clamped

    centers = scene.circle_centers
    radii = scene.circle_radii
    owner = scene.circle_region

    cur_p = p0.astype(np.float64, copy=True)
    cur_v = disp.astype(np.float64, copy=True)
    idx = np.arange(n)
    for k in range(max_crossings):
        lam, ci = _first_hit(cur_p[idx], cur_v[idx], centers, radii)
        hit = lam <= 1.0
        if not hit.any():
            break
        hidx = idx[hit]
        lamh = lam[hit][:, None]
        xc = cur_p[hidx] + lamh * cur_v[hidx]
        crossings[hidx] += 1
        src = reg[hidx]
        # Regions are disjoint, so the first circle hit always belongs to
        # either the current region (leaving) or the one being entered.
        dst = np.where(src == BULK, owner[ci[hit]], BULK)
        reg[hidx] = dst
        if k == max_crossings - 1:
            end[hidx] = xc
            clamped[hidx] = True
            break
        scale = np.sqrt(scene.diffusion_of(dst) / scene.diffusion_of(src))
        rem = (1.0 - lamh) * cur_v[hidx] * scale[:, None]
        cur_p[hidx] = xc
        cur_v[hidx] = rem
        end[hidx] = xc + rem
        idx = hidx
    return end, reg, crossings, clamped


def advance_particle(particle: Particle, scene: Scene, dt: float,
                     rng: np.random.Generator,
                     max_crossings: int = DEFAULT_MAX_CROSSINGS) -> StepOutcome:
    """Advance one diffusing particle by a single time step.

    Pure function: the particle record is not modified. Draws one
    displacement and one conversion uniform from ``rng`` in that order.
    """
    if particle.species is not Species.A:
        raise ValueError("only diffusing (species A) particles can be advanced")
    p0 = np.asarray(particle.position, dtype=np.float64).reshape(1, 2)
    if not np.isfinite(p0).all():
        raise CorruptedStateError(f"non-finite particle position {particle.position}")

    reg0 = scene.region_index(p0)
    d_loc = float(scene.diffusion_of(int(reg0[0])))
    disp = sample_displacement(d_loc, dt, rng).reshape(1, 2)
    u = rng.random()

    end, reg_end, crossings, clamped = resolve_crossings(p0, disp, reg0, scene, max_crossings)
    if not np.isfinite(end).all():
        raise CorruptedStateError("particle position became non-finite during step")

    converted = False
    r = int(reg_end[0])
    if r != BULK and scene.region_kf[r] > 0.0:
        converted = u < conversion_probability(float(scene.region_kf[r]), dt)
    return StepOutcome(end_position=end[0], crossings=int(crossings[0]),
                       converted=bool(converted), clamped=bool(clamped[0]))


@dataclass(frozen=True)
class Snapshot:
    """Complete particle state at one scheduled time."""

    time_s: float
    positions: np.ndarray        # (N, 2) m
    species: np.ndarray          # (N,) uint8, Species codes
    conversion_time: np.ndarray  # (N,) s, NaN where not converted

    def count(self, species: Species) -> int:
        return int(np.count_nonzero(self.species == int(species)))

    def positions_of(self, species: Species) -> np.ndarray:
        return self.positions[self.species == int(species)]


@dataclass
class RunDiagnostics:
    """Structured run summary."""

    n_particles: int
    n_steps: int
    clamp_events: int = 0
    conversions_per_region: list[int] = field(default_factory=list)
    wall_clock_total_s: float = 0.0
    wall_clock_per_step_s: float = 0.0

    def as_dict(self) -> dict:
        return {
            "n_particles": self.n_particles,
            "n_steps": self.n_steps,
            "clamp_events": self.clamp_events,
            "conversions_per_region": list(self.conversions_per_region),
            "wall_clock_total_s": self.wall_clock_total_s,
            "wall_clock_per_step_s": self.wall_clock_per_step_s,
        }


@dataclass(frozen=True)
class SimulationResult:
    snapshots: list[Snapshot]
    diagnostics: RunDiagnostics


class Engine:
    """Lockstep particle evolution over a fixed step grid.

    All N particles start at the source as species A at t = 0 and advance
    in steps of ``dt``; converted particles keep their state but are
    excluded from further stepping. Snapshot times must land exactly on
    the step grid.
    """

    def __init__(self, scene: Scene, n_particles: int, dt: float, n_steps: int,
                 snapshot_steps: list[int], master_seed: int = 1,
                 max_crossings: int = DEFAULT_MAX_CROSSINGS, workers: int = 1,
                 streams=None):
        if n_particles < 1:
            raise ConfigError(f"n_particles must be >= 1, got {n_particles}")
        if dt <= 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        bad = [s for s in snapshot_steps if not 0 <= s <= n_steps]
        if bad:
            raise ConfigError(f"snapshot steps {bad} fall outside [0, {n_steps}]")
        self.scene = scene
        self.n = int(n_particles)
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.snapshot_steps = sorted(set(int(s) for s in snapshot_steps))
        self.max_crossings = int(max_crossings)
        self.workers = max(1, int(workers))
        self.streams = streams if streams is not None else StreamFactory(master_seed)

        self.positions = np.tile(np.asarray(scene.tx_position, dtype=np.float64), (self.n, 1))
        self.species = np.full(self.n, int(Species.A), dtype=np.uint8)
        self.conversion_time = np.full(self.n, np.nan, dtype=np.float64)
        self._p_conv = -np.expm1(-scene.region_kf * self.dt)
        self.diagnostics = RunDiagnostics(
            n_particles=self.n, n_steps=self.n_steps,
            conversions_per_region=[0] * len(scene.regions),
        )

    def snapshots(self) -> Iterator[Snapshot]:
        """Run the simulation, yielding a snapshot at each scheduled step."""
        pending = list(self.snapshot_steps)
        executor = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        t_start = time.perf_counter()
        steps_done = 0
        try:
            if pending and pending[0] == 0:
                pending.pop(0)
                yield self._capture(0.0)
            for step in range(self.n_steps):
                if not pending:
                    break
                self._step(step, executor)
                steps_done += 1
                if pending[0] == step + 1:
                    pending.pop(0)
                    yield self._capture((step + 1) * self.dt)
        finally:
            if executor is not None:
                executor.shutdown(wait=True)
            total = time.perf_counter() - t_start
            self.diagnostics.wall_clock_total_s = total
            self.diagnostics.wall_clock_per_step_s = total / max(1, steps_done)

    def run(self) -> SimulationResult:
        snaps = list(self.snapshots())
        return SimulationResult(snapshots=snaps, diagnostics=self.diagnostics)

    # -- internals ---------------------------------------------------------

    def _step(self, step: int, executor: ThreadPoolExecutor | None) -> None:
        blocks = [(bi, bi * BLOCK_SIZE, min((bi + 1) * BLOCK_SIZE, self.n))
                  for bi in range(n_blocks(self.n))]
        if executor is None:
            results = [self._step_block(step, *blk) for blk in blocks]
        else:
            futures = [executor.submit(self._step_block, step, *blk) for blk in blocks]
            results = [f.result() for f in futures]
        for clamps, conv_counts in results:
            self.diagnostics.clamp_events += clamps
            for r, c in enumerate(conv_counts):
                self.diagnostics.conversions_per_region[r] += int(c)
        if _DEBUG_CHECKS and not np.isfinite(self.positions).all():
            raise CorruptedStateError(f"non-finite positions after step {step}")

    def _step_block(self, step: int, block_index: int, b0: int, b1: int):
        gen = self.streams.generator(step, block_index)
        blen = b1 - b0
        # Fixed draw layout per block: displacements, then conversion
        # uniforms, for every slot whether or not it is still diffusing.
        normals = gen.standard_normal((blen, 2))
        uniforms = gen.random(blen)

        pos = self.positions[b0:b1]
        spc = self.species[b0:b1]
        active = spc == int(Species.A)
        n_regions = len(self.scene.regions)
        if not active.any():
            return 0, np.zeros(n_regions, dtype=np.int64)

        p0 = pos[active]
        reg0 = self.scene.region_index(p0)
        d_loc = self.scene.diffusion_of(reg0)
        disp = normals[active] * np.sqrt(2.0 * d_loc * self.dt)[:, None]
        end, reg_end, _, clamped = resolve_crossings(
            p0, disp, reg0, self.scene, self.max_crossings)
        pos[active] = end

        conv_counts = np.zeros(n_regions, dtype=np.int64)
        if n_regions and self._p_conv.any():
            p = np.zeros(end.shape[0], dtype=np.float64)
            inside = reg_end >= 0
            p[inside] = self._p_conv[reg_end[inside]]
            conv = uniforms[active] < p
            if conv.any():
                a_idx = np.nonzero(active)[0]
                c_idx = a_idx[conv]
                spc[c_idx] = int(Species.E)
                self.conversion_time[b0:b1][c_idx] = (step + 1) * self.dt
                conv_counts = np.bincount(reg_end[conv], minlength=n_regions)
        return int(np.count_nonzero(clamped)), conv_counts

    def _capture(self, time_s: float) -> Snapshot:
        if not np.isfinite(self.positions).all():
            raise CorruptedStateError(f"non-finite particle position at t={time_s} s")
        return Snapshot(
            time_s=time_s,
            positions=self.positions.copy(),
            species=self.species.copy(),
            conversion_time=self.conversion_time.copy(),
        )


def run_simulation(scene: Scene, config: "SimConfig", streams=None) -> SimulationResult:
    """Run a full simulation described by a validated config.

    Returns the ordered snapshots plus run diagnostics. For large runs
    prefer iterating :meth:`Engine.snapshots` to avoid holding every
    snapshot in memory.
    """
    engine = engine_from_config(scene, config, streams=streams)
    return engine.run()


def engine_from_config(scene: Scene, config: "SimConfig", streams=None) -> Engine:
    return Engine(
        scene,
        n_particles=config.n_particles,
        dt=config.time_step_s,
        n_steps=config.n_steps(),
        snapshot_steps=config.snapshot_steps(),
        master_seed=config.master_seed,
        max_crossings=config.max_crossings,
        workers=config.resolved_workers(),
        streams=streams,
    )
