"""Environment geometry and physical parameters.

A scene is an unbounded 2-D fluid with bulk diffusion coefficient D,
a point source, and zero or more non-overlapping porous regions
(circular "spheroids" or one annular ring). A region with porosity
``eps`` slows diffusion through its extracellular space:

    tortuosity   tau   = eps^-0.5
    effective    D_eff = (eps / tau) * D = eps^1.5 * D

Porosity itself derives from a 3-D cell packing: a spheroid of total
volume V_s containing N_c cells of volume V_c has

    eps = (V_s - N_c * V_c) / V_s

The packing is evaluated on the 3-D sphere volume of the region radius
even though the simulation domain is 2-D; the porosity is a material
property, not a planar one.

Units: all lengths in this module are meters, diffusion coefficients
in m^2/s, rates in 1/s. Micrometer conversion happens at the I/O layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidGeometryError

BULK = -1  # region index returned for points outside every region

_UM = 1e-6


def sphere_volume(radius_m: float) -> float:
    """Volume of a 3-D sphere of the given radius, in m^3."""
    return 4.0 / 3.0 * math.pi * radius_m**3


def porosity(v_s: float, n_c: int, v_c: float) -> float:
    """Porosity of a region of volume ``v_s`` packed with ``n_c`` cells.

    Args:
        v_s: total region volume, m^3 (> 0).
        n_c: number of constituent cells (>= 0).
        v_c: volume of one cell, m^3 (>= 0).

    Returns:
        Void fraction (v_s - n_c*v_c) / v_s, in [0, 1].

    Raises:
        InvalidGeometryError: if the cells do not fit in the region.
    """
    if v_s <= 0:
        raise InvalidGeometryError(f"region volume must be positive, got {v_s}")
    if n_c < 0 or v_c < 0:
        raise InvalidGeometryError("cell count and cell volume must be non-negative")
    occupied = n_c * v_c
    if occupied > v_s:
        raise InvalidGeometryError(
            f"cells occupy {occupied:.4e} m^3 but the region holds only {v_s:.4e} m^3"
        )
    return (v_s - occupied) / v_s


def tortuosity(eps: float) -> float:
    """Path-irregularity factor for porosity ``eps``, modeled as eps^-0.5."""
    _check_porosity(eps)
    return eps**-0.5


def effective_diffusion(d: float, eps: float) -> float:
    """Reduced diffusion coefficient inside a porous region.

    Equals (eps / tortuosity) * d = eps^1.5 * d.
    """
    if d <= 0:
        raise ValueError(f"diffusion coefficient must be positive, got {d}")
    _check_porosity(eps)
    return eps**1.5 * d


def _check_porosity(eps: float) -> None:
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"porosity must be in (0, 1], got {eps}")


@dataclass(frozen=True)
class Spheroid:
    """Circular porous region with first-order molecule uptake.

    ``tortuosity`` and ``d_eff`` are derived from the porosity and the
    bulk diffusion coefficient at construction; use :func:`make_spheroid`.
    """

    center: tuple[float, float]  # m
    radius: float                # m
    porosity: float
    tortuosity: float
    d_eff: float                 # m^2/s
    k_f: float                   # 1/s, conversion rate inside the region

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise InvalidGeometryError(f"radius must be positive, got {self.radius}")
        if self.k_f < 0:
            raise InvalidGeometryError(f"conversion rate must be >= 0, got {self.k_f}")
        _check_porosity(self.porosity)


@dataclass(frozen=True)
class RingRegion:
    """Annular porous region (a dense crowd of spheroids around the origin)."""

    center: tuple[float, float]  # m
    r_inner: float               # m
    r_outer: float               # m
    porosity: float
    tortuosity: float
    d_eff: float                 # m^2/s
    k_f: float                   # 1/s

    def __post_init__(self) -> None:
        if not 0 < self.r_inner < self.r_outer:
            raise InvalidGeometryError(
                f"need 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}"
            )
        if self.k_f < 0:
            raise InvalidGeometryError(f"conversion rate must be >= 0, got {self.k_f}")
        _check_porosity(self.porosity)


Region = Spheroid | RingRegion


def make_spheroid(center, radius, eps, k_f, d_bulk) -> Spheroid:
    """Build a spheroid with derived tortuosity and effective diffusion."""
    return Spheroid(
        center=(float(center[0]), float(center[1])),
        radius=float(radius),
        porosity=float(eps),
        tortuosity=tortuosity(eps),
        d_eff=effective_diffusion(d_bulk, eps),
        k_f=float(k_f),
    )


def make_ring(center, r_inner, r_outer, eps, k_f, d_bulk) -> RingRegion:
    """Build a ring region with derived tortuosity and effective diffusion."""
    return RingRegion(
        center=(float(center[0]), float(center[1])),
        r_inner=float(r_inner),
        r_outer=float(r_outer),
        porosity=float(eps),
        tortuosity=tortuosity(eps),
        d_eff=effective_diffusion(d_bulk, eps),
        k_f=float(k_f),
    )


@dataclass(frozen=True)
class Scene:
    """Immutable environment description, safe to share across workers.

    Boundary circles and per-region coefficient tables are precomputed
    as arrays for the vectorized stepping kernels.
    """

    d_bulk: float                      # m^2/s
    tx_position: tuple[float, float]   # m
    regions: tuple[Region, ...]

    # Derived arrays, filled in __post_init__.
    circle_centers: np.ndarray = field(init=False, repr=False, compare=False)
    circle_radii: np.ndarray = field(init=False, repr=False, compare=False)
    circle_region: np.ndarray = field(init=False, repr=False, compare=False)
    region_d: np.ndarray = field(init=False, repr=False, compare=False)
    region_kf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.d_bulk <= 0:
            raise InvalidGeometryError(f"bulk diffusion must be positive, got {self.d_bulk}")
        _check_no_overlap(self.regions)

        centers, radii, owner = [], [], []
        d_eff, kf = [], []
        for i, reg in enumerate(self.regions):
            d_eff.append(reg.d_eff)
            kf.append(reg.k_f)
            if isinstance(reg, Spheroid):
                centers.append(reg.center)
                radii.append(reg.radius)
                owner.append(i)
            else:
                centers.extend([reg.center, reg.center])
                radii.extend([reg.r_inner, reg.r_outer])
                owner.extend([i, i])
        object.__setattr__(self, "circle_centers",
                           np.asarray(centers, dtype=np.float64).reshape(-1, 2))
        object.__setattr__(self, "circle_radii", np.asarray(radii, dtype=np.float64))
        object.__setattr__(self, "circle_region", np.asarray(owner, dtype=np.int64))
        object.__setattr__(self, "region_d", np.asarray(d_eff, dtype=np.float64))
        object.__setattr__(self, "region_kf", np.asarray(kf, dtype=np.float64))

    def diffusion_of(self, region_index: np.ndarray | int) -> np.ndarray | float:
        """Local diffusion coefficient for region indices (BULK allowed)."""
        if np.isscalar(region_index):
            return self.d_bulk if region_index == BULK else float(self.region_d[region_index])
        idx = np.asarray(region_index)
        out = np.full(idx.shape, self.d_bulk, dtype=np.float64)
        inside = idx >= 0
        out[inside] = self.region_d[idx[inside]]
        return out

    def region_index(self, points: np.ndarray) -> np.ndarray:
        """Vectorized region membership for an (n, 2) array of positions (m).

        Returns an (n,) int array: owning region index, or BULK. Points
        exactly on a boundary count as inside the region.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        out = np.full(pts.shape[0], BULK, dtype=np.int64)
        for i, reg in enumerate(self.regions):
            d2 = np.sum((pts - np.asarray(reg.center)) ** 2, axis=1)
            if isinstance(reg, Spheroid):
                mask = d2 <= reg.radius**2
            else:
                mask = (d2 >= reg.r_inner**2) & (d2 <= reg.r_outer**2)
            out[mask] = i
        return out


def region_at(p, scene: Scene) -> int:
    """Region index containing point ``p`` (m), or BULK."""
    return int(scene.region_index(np.asarray(p, dtype=np.float64))[0])


def _check_no_overlap(regions: tuple[Region, ...]) -> None:
    """Reject region sets where membership would be ambiguous."""
    spheroids = [r for r in regions if isinstance(r, Spheroid)]
    rings = [r for r in regions if isinstance(r, RingRegion)]
    if len(rings) > 1:
        raise InvalidGeometryError("at most one ring region is supported")
    for i in range(len(spheroids)):
        for j in range(i + 1, len(spheroids)):
            a, b = spheroids[i], spheroids[j]
            dist = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
            if dist <= a.radius + b.radius:
                raise InvalidGeometryError(
                    f"spheroids at {_um(a.center)} and {_um(b.center)} um overlap: "
                    f"center distance {dist / _UM:.1f} um <= "
                    f"{(a.radius + b.radius) / _UM:.1f} um"
                )
    for ring in rings:
        for s in spheroids:
            dist = math.hypot(s.center[0] - ring.center[0], s.center[1] - ring.center[1])
            # The spheroid disk must avoid the closed annulus entirely.
            inside_hole = dist + s.radius < ring.r_inner
            outside = dist - s.radius > ring.r_outer
            if not (inside_hole or outside):
                raise InvalidGeometryError(
                    f"spheroid at {_um(s.center)} um intersects the ring region"
                )


def _um(center: tuple[float, float]) -> tuple[float, float]:
    return (center[0] / _UM, center[1] / _UM)


class ScenarioKind(str, Enum):
    """Receiver layouts addressable by name."""

    TRANSPARENT = "transparent"
    ONE = "one"
    TWO = "two"
    FOUR = "four"
    RING_CENTER = "ring-center"
    RING_OUTSIDE = "ring-outside"


# Default ring radii: annulus thickness equals one spheroid diameter and its
# mid-circle passes through the single-spheroid center distance.
def default_ring_radii(d_um: float, r_s_um: float) -> tuple[float, float]:
    return d_um - r_s_um, d_um + r_s_um


def build_scenario(
    kind: ScenarioKind | str,
    *,
    d_um: float = 500.0,
    r_s_um: float = 275.0,
    eps: float = 0.1349,
    k_f: float = 0.0,
    d_bulk: float = 1e-9,
    r_in_um: float | None = None,
    r_out_um: float | None = None,
) -> Scene:
    """Construct one of the named receiver scenarios.

    Geometry arguments are micrometers; the returned scene is in meters.

    transparent   no regions, source at the origin
    one           one spheroid at (d, 0)
    two           spheroids at (+-d, 0)
    four          spheroids at (+-d, 0) and (0, +-d)
    ring-center   annulus around the origin, source at the origin
    ring-outside  same annulus, source at (2d, 0)
    """
    kind = ScenarioKind(kind)
    d = d_um * _UM
    r_s = r_s_um * _UM
    tx = (0.0, 0.0)
    regions: list[Region] = []

    if kind is ScenarioKind.TRANSPARENT:
        pass
    elif kind is ScenarioKind.ONE:
        regions = [make_spheroid((d, 0.0), r_s, eps, k_f, d_bulk)]
    elif kind is ScenarioKind.TWO:
        regions = [
            make_spheroid((d, 0.0), r_s, eps, k_f, d_bulk),
            make_spheroid((-d, 0.0), r_s, eps, k_f, d_bulk),
        ]
    elif kind is ScenarioKind.FOUR:
        regions = [
            make_spheroid((d, 0.0), r_s, eps, k_f, d_bulk),
            make_spheroid((-d, 0.0), r_s, eps, k_f, d_bulk),
            make_spheroid((0.0, d), r_s, eps, k_f, d_bulk),
            make_spheroid((0.0, -d), r_s, eps, k_f, d_bulk),
        ]
    else:
        default_in, default_out = default_ring_radii(d_um, r_s_um)
        r_in = (r_in_um if r_in_um is not None else default_in) * _UM
        r_out = (r_out_um if r_out_um is not None else default_out) * _UM
        regions = [make_ring((0.0, 0.0), r_in, r_out, eps, k_f, d_bulk)]
        if kind is ScenarioKind.RING_OUTSIDE:
            tx = (2 * d, 0.0)

    return Scene(d_bulk=d_bulk, tx_position=tx, regions=tuple(regions))
