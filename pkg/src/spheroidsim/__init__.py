"""Particle-based simulation of molecule transport through porous spheroid receivers.

An impulsive point source releases N molecules into an unbounded 2-D
fluid containing circular porous regions. Molecules random-walk with the
bulk diffusion coefficient outside regions and a porosity-derived
effective coefficient inside; displacement segments are rescaled when
they cross region boundaries, and regions may irreversibly convert
diffusing molecules into immobile ones. Snapshots of the particle cloud
are binned into pixel grids and rendered as heatmaps, with analytic and
finite-difference oracles for validation.
"""

__version__ = "0.1.0"

from .errors import ConfigError, CorruptedStateError, InvalidGeometryError, SimulationError
from .scene import (
    BULK, RingRegion, ScenarioKind, Scene, Spheroid,
    build_scenario, effective_diffusion, make_ring, make_spheroid,
    porosity, region_at, sphere_volume, tortuosity,
)
from .stepper import (
    Circle, Engine, Particle, RunDiagnostics, SimulationResult, Snapshot,
    Species, StepOutcome, advance_particle, conversion_probability,
    first_crossing, resolve_crossings, run_simulation, sample_displacement,
)
from .histogram import (
    GridSpec, SnapshotGrid, accumulate, grid_from_csv, grid_to_csv,
    merge, radial_profile, render_heatmap,
)
from .oracle import (
    ConcentrationField, compare_fields, fd_solve, free_green_2d, max_stable_dt,
)
from .config import SimConfig, load_config, load_config_file

__all__ = [
    "__version__",
    "BULK", "Circle", "ConcentrationField", "ConfigError", "CorruptedStateError",
    "Engine", "GridSpec", "InvalidGeometryError", "Particle", "RingRegion",
    "RunDiagnostics", "ScenarioKind", "Scene", "SimConfig", "SimulationError",
    "SimulationResult", "Snapshot", "SnapshotGrid", "Species", "Spheroid",
    "StepOutcome", "accumulate", "advance_particle", "build_scenario",
    "compare_fields", "conversion_probability", "effective_diffusion",
    "fd_solve", "first_crossing", "free_green_2d", "grid_from_csv",
    "grid_to_csv", "load_config", "load_config_file", "make_ring",
    "make_spheroid", "max_stable_dt", "merge", "porosity", "radial_profile",
    "region_at", "render_heatmap", "resolve_crossings", "run_simulation",
    "sample_displacement", "sphere_volume", "tortuosity",
]
