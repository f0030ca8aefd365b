"""Pixel grids of particle counts and portable heatmap rendering.

Grids use half-open pixel intervals [lo, hi) on each axis with the final
row and column closed, so every in-extent position lands in exactly one
pixel. Positions outside the extent are tallied in a separate counter
rather than dropped, which keeps count-conservation checks exact.

File formats:
  * Grid CSV: one header line
      # t=<s> species=<A|E> extent=<x0,x1,y0,y1>µm pixel=<µm> out_of_extent=<n>
    followed by ny rows of nx comma-separated values, row 0 = lowest y.
  * Image: binary PPM (P6) plus a ``<name>.scale.txt`` sidecar recording
    the count-to-color scale. Top image row = highest y.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigError

MAX_PIXELS = 16_000_000  # memory cap on nx*ny

_COLORMAP_FILE = "colormap256.txt"
_COLORMAP_NAME = "cubehelix-v1"
_colormap_cache: np.ndarray | None = None


@dataclass(frozen=True)
class GridSpec:
    """Pixelization of a rectangular window, micrometer units."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    pixel_um: float

    def __post_init__(self) -> None:
        if self.pixel_um <= 0:
            raise ConfigError(f"pixel size must be positive, got {self.pixel_um}")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ConfigError("grid extent must have positive width on both axes")
        for name, width in (("x", self.x_max - self.x_min), ("y", self.y_max - self.y_min)):
            ratio = width / self.pixel_um
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ConfigError(
                    f"{name} extent width {width} is not an integer multiple "
                    f"of pixel size {self.pixel_um}"
                )
        if self.nx * self.ny > MAX_PIXELS:
            raise ConfigError(f"grid {self.nx}x{self.ny} exceeds the {MAX_PIXELS} pixel cap")

    @property
    def nx(self) -> int:
        return round((self.x_max - self.x_min) / self.pixel_um)

    @property
    def ny(self) -> int:
        return round((self.y_max - self.y_min) / self.pixel_um)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-center coordinates (xc (nx,), yc (ny,)), micrometers."""
        xc = self.x_min + (np.arange(self.nx) + 0.5) * self.pixel_um
        yc = self.y_min + (np.arange(self.ny) + 0.5) * self.pixel_um
        return xc, yc

    def pixel_area_m2(self) -> float:
        return (self.pixel_um * 1e-6) ** 2


@dataclass(frozen=True)
class SnapshotGrid:
    """Per-pixel particle counts for one species at one instant."""

    spec: GridSpec
    species: str           # "A" or "E"
    time_s: float
    counts: np.ndarray     # (ny, nx) int64, row 0 = lowest y
    out_of_extent: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.out_of_extent


def accumulate(positions_um: np.ndarray, spec: GridSpec, species: str = "A",
               time_s: float = 0.0) -> SnapshotGrid:
    """Bin positions (micrometers, shape (n, 2)) into a snapshot grid."""
    pts = np.asarray(positions_um, dtype=np.float64).reshape(-1, 2)
    x_edges = spec.x_min + np.arange(spec.nx + 1) * spec.pixel_um
    y_edges = spec.y_min + np.arange(spec.ny + 1) * spec.pixel_um
    counts, _, _ = np.histogram2d(pts[:, 1], pts[:, 0], bins=(y_edges, x_edges))
    counts = counts.astype(np.int64)
    return SnapshotGrid(
        spec=spec, species=species, time_s=time_s, counts=counts,
        out_of_extent=int(pts.shape[0] - counts.sum()),
    )


def merge(grids: list[SnapshotGrid]) -> SnapshotGrid:
    """Elementwise sum of per-shard grids with identical specs."""
    first = grids[0]
    if any(g.spec != first.spec for g in grids[1:]):
        raise ValueError("cannot merge grids with different specs")
    counts = np.sum([g.counts for g in grids], axis=0)
    return SnapshotGrid(spec=first.spec, species=first.species, time_s=first.time_s,
                        counts=counts, out_of_extent=sum(g.out_of_extent for g in grids))


def _radial_assignment(spec: GridSpec, center_um, bin_width_um: float):
    if bin_width_um <= 0:
        raise ValueError(f"bin width must be positive, got {bin_width_um}")
    xc, yc = spec.pixel_centers()
    dist = np.hypot(xc[None, :] - center_um[0], yc[:, None] - center_um[1])
    nbins = int(math.floor(dist.max() / bin_width_um)) + 1
    which = np.minimum((dist / bin_width_um).astype(np.int64), nbins - 1)
    return nbins, which


def radial_profile(values: np.ndarray, spec: GridSpec, center_um=(0.0, 0.0),
                   bin_width_um: float = 50.0) -> tuple[np.ndarray, np.ndarray]:
    """Mean per-pixel value in annular bins around ``center_um``.

    Pixels join the bin holding their center distance; bins with no
    pixels report 0. Returns (bin_center_radii, mean_values).
    """
    vals = np.asarray(values, dtype=np.float64)
    nbins, which = _radial_assignment(spec, center_um, bin_width_um)
    sums = np.bincount(which.ravel(), weights=vals.ravel(), minlength=nbins)
    npix = np.bincount(which.ravel(), minlength=nbins)
    means = np.divide(sums, npix, out=np.zeros(nbins), where=npix > 0)
    radii = (np.arange(nbins) + 0.5) * bin_width_um
    return radii, means


def radial_pixel_counts(spec: GridSpec, center_um=(0.0, 0.0),
                        bin_width_um: float = 50.0) -> tuple[np.ndarray, np.ndarray]:
    """Number of pixels assigned to each annular bin of a radial profile."""
    nbins, which = _radial_assignment(spec, center_um, bin_width_um)
    npix = np.bincount(which.ravel(), minlength=nbins)
    radii = (np.arange(nbins) + 0.5) * bin_width_um
    return radii, npix


def _colormap() -> np.ndarray:
    global _colormap_cache
    if _colormap_cache is None:
        text = resources.files("spheroidsim").joinpath(f"data/{_COLORMAP_FILE}").read_text()
        rows = [line for line in text.splitlines() if line and not line.startswith("#")]
        table = np.array([[int(v) for v in row.split(",")] for row in rows], dtype=np.uint8)
        if table.shape != (256, 3):
            raise RuntimeError(f"colormap table has shape {table.shape}, expected (256, 3)")
        _colormap_cache = table
    return _colormap_cache


def render_heatmap(grid: SnapshotGrid, scale: str = "linear",
                   max_count: float | None = None) -> tuple[bytes, str]:
    """Render a grid as binary PPM bytes plus a sidecar scale record.

    ``scale`` is "linear" or "log" (log1p mapping); ``max_count`` of None
    autoscales to the grid maximum. The mapping is deterministic: equal
    inputs produce byte-identical output.
    """
    if scale not in ("linear", "log"):
        raise ValueError(f"scale must be 'linear' or 'log', got {scale!r}")
    counts = np.asarray(grid.counts, dtype=np.float64)
    vmax = float(counts.max()) if max_count is None else float(max_count)
    if scale == "linear":
        norm = counts / vmax if vmax > 0 else np.zeros_like(counts)
    else:
        norm = np.log1p(counts) / math.log1p(vmax) if vmax > 0 else np.zeros_like(counts)
    idx = np.clip(np.floor(norm * 255.0 + 0.5), 0, 255).astype(np.uint8)
    rgb = _colormap()[idx[::-1, :]]  # flip so the top image row is max y
    header = f"P6\n{grid.spec.nx} {grid.spec.ny}\n255\n".encode("ascii")
    sidecar = (
        f"species={grid.species}\n"
        f"t={_fmt(grid.time_s)}\n"
        f"scale={scale}\n"
        f"min_count=0\n"
        f"max_count={_fmt(vmax)}\n"
        f"colormap={_COLORMAP_NAME}\n"
    )
    return header + rgb.tobytes(), sidecar


_HEADER_RE = re.compile(
    r"^# t=(?P<t>[^ ]+) species=(?P<species>[AE]) "
    r"extent=(?P<x0>[^,]+),(?P<x1>[^,]+),(?P<y0>[^,]+),(?P<y1>[^,]+)µm "
    r"pixel=(?P<px>[^ ]+)µm out_of_extent=(?P<oob>\d+)$"
)


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def format_grid_csv(values: np.ndarray, spec: GridSpec, species: str, time_s: float,
                    out_of_extent: int = 0) -> str:
    """Serialize a count or concentration grid to the CSV text format."""
    header = (
        f"# t={_fmt(time_s)} species={species} "
        f"extent={_fmt(spec.x_min)},{_fmt(spec.x_max)},{_fmt(spec.y_min)},{_fmt(spec.y_max)}µm "
        f"pixel={_fmt(spec.pixel_um)}µm out_of_extent={out_of_extent}"
    )
    vals = np.asarray(values)
    if np.issubdtype(vals.dtype, np.integer):
        body = "\n".join(",".join(str(int(v)) for v in row) for row in vals)
    else:
        body = "\n".join(",".join(_fmt(float(v)) for v in row) for row in vals)
    return header + "\n" + body + "\n"


def grid_to_csv(grid: SnapshotGrid) -> str:
    return format_grid_csv(grid.counts, grid.spec, grid.species, grid.time_s,
                           grid.out_of_extent)


def grid_from_csv(text: str) -> SnapshotGrid:
    """Parse the CSV grid format back into a SnapshotGrid.

    Decimal-valued grids are accepted; integral values load as counts.
    """
    lines = text.strip().splitlines()
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise ValueError(f"unrecognized grid header: {lines[0]!r}")
    spec = GridSpec(
        x_min=float(m["x0"]), x_max=float(m["x1"]),
        y_min=float(m["y0"]), y_max=float(m["y1"]),
        pixel_um=float(m["px"]),
    )
    values = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    if values.shape != (spec.ny, spec.nx):
        raise ValueError(f"grid body is {values.shape}, header implies {(spec.ny, spec.nx)}")
    counts = values.astype(np.int64) if np.allclose(values, np.round(values)) else values
    return SnapshotGrid(spec=spec, species=m["species"], time_s=float(m["t"]),
                        counts=counts, out_of_extent=int(m["oob"]))
