"""Run configuration: a flat JSON file with strict key checking.

All keys use the units printed in run manifests: micrometers for
lengths, seconds for times, m^2/s for diffusion coefficients. Exactly
one of ``porosity`` or the (``n_cells``, ``cell_volume_m3``) pair must
be supplied; the pair derives porosity from the 3-D packing of the
spheroid radius. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

from .errors import ConfigError
from .histogram import GridSpec
from .scene import (
    Scene, ScenarioKind, build_scenario, default_ring_radii,
    effective_diffusion, porosity, sphere_volume, tortuosity,
)

DEFAULT_SNAPSHOTS = (96.0, 498.0, 1500.0, 3000.0)
MINUTE_LABELS = {96.0: "1.6 min", 498.0: "8.3 min", 1500.0: "25 min", 3000.0: "50 min"}

DESK_N = 100_000
FULL_N = 10_000_000


@dataclass
class SimConfig:
    """Validated simulation run description."""

    scenario: str = "one"
    n_particles: int = DESK_N
    time_step_s: float = 0.5
    t_end_s: float = 3600.0
    snapshot_times_s: tuple[float, ...] = DEFAULT_SNAPSHOTS
    diffusion_m2_s: float = 1e-9
    porosity: float | None = 0.1349
    n_cells: int | None = None
    cell_volume_m3: float | None = None
    conversion_rate_per_s: float = 0.0
    distance_um: float = 500.0
    spheroid_radius_um: float = 275.0
    ring_inner_radius_um: float | None = None
    ring_outer_radius_um: float | None = None
    master_seed: int = 1
    grid_extent_um: tuple[float, float, float, float] = (-1000.0, 1000.0, -1000.0, 1000.0)
    grid_pixel_um: float = 10.0
    workers: int | str = 1
    output_dir: str = "out"
    emit_csv: bool = True
    emit_ppm: bool = True
    emit_diagnostics: bool = True
    max_crossings: int = 8

    def __post_init__(self) -> None:
        self.snapshot_times_s = tuple(float(t) for t in self.snapshot_times_s)
        self.grid_extent_um = tuple(float(v) for v in self.grid_extent_um)
        self.validate()

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        try:
            ScenarioKind(self.scenario)
        except ValueError:
            names = ", ".join(k.value for k in ScenarioKind)
            raise ConfigError(f"scenario: unknown preset {self.scenario!r}; expected one of {names}")
        _require(self.n_particles >= 1, "n_particles", "must be >= 1")
        _require(self.time_step_s > 0, "time_step_s", "must be positive")
        _require(self.t_end_s >= self.time_step_s, "t_end_s", "must be at least one time step")
        _require(self.diffusion_m2_s > 0, "diffusion_m2_s", "must be positive")
        _require(self.conversion_rate_per_s >= 0, "conversion_rate_per_s", "must be >= 0")
        _require(self.distance_um > 0, "distance_um", "must be positive")
        _require(self.spheroid_radius_um > 0, "spheroid_radius_um", "must be positive")
        _require(self.max_crossings >= 1, "max_crossings", "must be >= 1")
        _require(0 <= self.master_seed < 2**64, "master_seed", "must fit in 64 bits")
        if isinstance(self.workers, str):
            _require(self.workers == "auto", "workers", "must be an integer or 'auto'")
        else:
            _require(self.workers >= 1, "workers", "must be >= 1")

        has_eps = self.porosity is not None
        has_cells = self.n_cells is not None or self.cell_volume_m3 is not None
        if has_eps and has_cells:
            raise ConfigError(
                "porosity: give either 'porosity' or the ('n_cells', 'cell_volume_m3') pair, not both")
        if not has_eps:
            if self.n_cells is None or self.cell_volume_m3 is None:
                raise ConfigError(
                    "porosity: either 'porosity' or both 'n_cells' and 'cell_volume_m3' are required")
            _require(self.n_cells >= 0, "n_cells", "must be >= 0")
            _require(self.cell_volume_m3 >= 0, "cell_volume_m3", "must be >= 0")

        if not _is_multiple(self.t_end_s, self.time_step_s):
            raise ConfigError(
                f"t_end_s: {self.t_end_s} is not a multiple of time_step_s={self.time_step_s}")
        prev = 0.0
        for t in self.snapshot_times_s:
            if not _is_multiple(t, self.time_step_s):
                raise ConfigError(
                    f"snapshot_times_s: {t} is not a multiple of time_step_s={self.time_step_s}")
            if not 0 <= t <= self.t_end_s:
                raise ConfigError(f"snapshot_times_s: {t} outside [0, {self.t_end_s}]")
            if t < prev or (t == prev and t != 0.0):
                raise ConfigError("snapshot_times_s: times must be strictly increasing")
            prev = t
        _require(len(self.snapshot_times_s) > 0, "snapshot_times_s", "must not be empty")

        self.grid_spec()  # raises ConfigError on a bad extent/pixel combination

    # -- derived quantities --------------------------------------------------

    def effective_porosity(self) -> float:
        if self.porosity is not None:
            return self.porosity
        v_s = sphere_volume(self.spheroid_radius_um * 1e-6)
        return porosity(v_s, self.n_cells, self.cell_volume_m3)

    def derived(self) -> dict:
        """Derived physical quantities echoed into the run manifest."""
        eps = self.effective_porosity()
        return {
            "porosity": eps,
            "tortuosity": tortuosity(eps),
            "d_eff_m2_s": effective_diffusion(self.diffusion_m2_s, eps),
            "n_steps": self.n_steps(),
            "snapshot_steps": self.snapshot_steps(),
            "snapshot_labels": {
                _fmt_t(t): MINUTE_LABELS.get(t, f"{t / 60:.3g} min")
                for t in self.snapshot_times_s
            },
        }

    def n_steps(self) -> int:
        return round(self.t_end_s / self.time_step_s)

    def snapshot_steps(self) -> list[int]:
        return [round(t / self.time_step_s) for t in self.snapshot_times_s]

    def grid_spec(self) -> GridSpec:
        x0, x1, y0, y1 = self.grid_extent_um
        return GridSpec(x_min=x0, x_max=x1, y_min=y0, y_max=y1, pixel_um=self.grid_pixel_um)

    def ring_radii_um(self) -> tuple[float, float]:
        default_in, default_out = default_ring_radii(self.distance_um, self.spheroid_radius_um)
        return (
            self.ring_inner_radius_um if self.ring_inner_radius_um is not None else default_in,
            self.ring_outer_radius_um if self.ring_outer_radius_um is not None else default_out,
        )

    def build_scene(self) -> Scene:
        r_in, r_out = self.ring_radii_um()
        return build_scenario(
            self.scenario,
            d_um=self.distance_um,
            r_s_um=self.spheroid_radius_um,
            eps=self.effective_porosity(),
            k_f=self.conversion_rate_per_s,
            d_bulk=self.diffusion_m2_s,
            r_in_um=r_in,
            r_out_um=r_out,
        )

    def resolved_workers(self) -> int:
        if self.workers == "auto":
            return os.cpu_count() or 1
        return int(self.workers)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["snapshot_times_s"] = list(self.snapshot_times_s)
        d["grid_extent_um"] = list(self.grid_extent_um)
        return d


_KEY_TYPES = {
    "scenario": str,
    "n_particles": int,
    "time_step_s": (int, float),
    "t_end_s": (int, float),
    "snapshot_times_s": list,
    "diffusion_m2_s": (int, float),
    "porosity": (int, float),
    "n_cells": int,
    "cell_volume_m3": (int, float),
    "conversion_rate_per_s": (int, float),
    "distance_um": (int, float),
    "spheroid_radius_um": (int, float),
    "ring_inner_radius_um": (int, float),
    "ring_outer_radius_um": (int, float),
    "master_seed": int,
    "grid_extent_um": list,
    "grid_pixel_um": (int, float),
    "workers": (int, str),
    "output_dir": str,
    "emit_csv": bool,
    "emit_ppm": bool,
    "emit_diagnostics": bool,
    "max_crossings": int,
}

_NO_DEFAULT_MODE_KEYS = ("porosity", "n_cells", "cell_volume_m3")


def load_config(data: bytes | str) -> SimConfig:
    """Parse and validate a JSON config document."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object of named keys")

    unknown = sorted(set(raw) - set(_KEY_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in raw.items():
        expected = _KEY_TYPES[key]
        if isinstance(value, bool) and expected is not bool:
            raise ConfigError(f"{key}: expected {_type_name(expected)}, got a boolean")
        if not isinstance(value, expected):
            raise ConfigError(f"{key}: expected {_type_name(expected)}, got {type(value).__name__}")

    # Config files must pick a porosity mode explicitly; the dataclass
    # default exists only for programmatic preset construction.
    if not any(k in raw for k in _NO_DEFAULT_MODE_KEYS):
        raise ConfigError(
            "porosity: either 'porosity' or both 'n_cells' and 'cell_volume_m3' are required")
    kwargs = dict(raw)
    kwargs.setdefault("porosity", None)
    return SimConfig(**kwargs)


def load_config_file(path: str | os.PathLike) -> SimConfig:
    with open(path, "rb") as f:
        return load_config(f.read())


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}")


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


def _type_name(expected) -> str:
    if isinstance(expected, tuple):
        return " or ".join(t.__name__ for t in expected)
    return expected.__name__


def _fmt_t(t: float) -> str:
    return f"{t:.10g}"
