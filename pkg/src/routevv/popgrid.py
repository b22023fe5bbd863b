"""Day/night population rasters and zonal extraction along route buffers.

Two extraction rules are provided and kept deliberately separate:

* centroid rule: a cell counts in full when its centre is inside the buffer;
* area weighting: a cell counts by the fraction of its k x k sub-cell centres
  inside the buffer.

Densities come in two flavours, one computed over the whole route buffer
(overlaps counted once) and one that pools per-segment figures (overlaps
counted once per segment).
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .geo_core import (
    EARTH_MEAN_RADIUS,
    GeoDomainError,
    GeoPoint,
    RouteLike,
    RoutePolyline,
    buffer_area,
    buffer_bbox,
    buffer_mask,
)

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
DEFAULT_NODATA = -9999.0

WHOLE_ROUTE = "whole-route"
SEGMENT_WEIGHTED = "segment-weighted"


class GridParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source:
            where += f"{source}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


class GridMismatchError(ValueError):
    """Day and night grids disagree on dimensions or georeferencing."""


# ----------------------------------------------------------------------------
# Types
# ----------------------------------------------------------------------------


def average_population(day: float, night: float) -> float:
    """Daily average population, weighting night twice: (day + 2 night) / 3."""
    if day < 0 or night < 0:
        raise GeoDomainError(f"populations must be non-negative, got day={day}, night={night}")
    return (day + 2 * night) / 3


@dataclass(frozen=True)
class PopulationTriplet:
    day: float
    night: float
    average: float
    no_overlap: bool = False

    @classmethod
    def of(cls, day: float, night: float, no_overlap: bool = False) -> PopulationTriplet:
        return cls(float(day), float(night), average_population(day, night), no_overlap)

    def __add__(self, other: PopulationTriplet) -> PopulationTriplet:
        return PopulationTriplet.of(
            self.day + other.day, self.night + other.night, self.no_overlap and other.no_overlap
        )


ZERO_POPULATION = PopulationTriplet(0.0, 0.0, 0.0, True)


@dataclass(frozen=True)
class DensityResult:
    method: str
    density: float  # persons / km2
    population: PopulationTriplet
    area: float  # km2

    def __post_init__(self) -> None:
        if not self.area > 0:
            raise GeoDomainError(f"density needs a positive area, got {self.area} km2")


@dataclass(frozen=True, eq=False)
class PopulationGrid:
    """Geographic raster; row 0 is the northernmost row."""

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    day: np.ndarray
    night: np.ndarray

    def __post_init__(self) -> None:
        if self.ncols <= 0 or self.nrows <= 0:
            raise ValueError("grid dimensions must be positive")
        if not self.cellsize > 0:
            raise ValueError("cellsize must be positive")
        for name in ("day", "night"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (self.nrows, self.ncols):
                raise GridMismatchError(
                    f"{name} layer has shape {arr.shape}, expected {(self.nrows, self.ncols)}"
                )
            valid = arr != self.nodata
            if np.any(arr[valid] < 0) or not np.all(np.isfinite(arr[valid])):
                raise ValueError(f"{name} layer has negative or non-finite population")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            filled = np.where(valid, arr, 0.0)
            filled.setflags(write=False)
            object.__setattr__(self, f"_{name}_filled", filled)
        if self.yll <= -85.0 or self.yll + self.nrows * self.cellsize >= 85.0:
            raise GeoDomainError("grid must lie strictly inside latitude +/-85")

    @property
    def xur(self) -> float:
        return self.xll + self.ncols * self.cellsize

    @property
    def yur(self) -> float:
        return self.yll + self.nrows * self.cellsize

    @property
    def row_lats(self) -> np.ndarray:
        """Centroid latitude of each row, north to south."""
        return self.yll + (self.nrows - 1 - np.arange(self.nrows) + 0.5) * self.cellsize

    def day_values(self) -> np.ndarray:
        """Day layer with nodata cells read as zero (read-only)."""
        return self._day_filled

    def night_values(self) -> np.ndarray:
        return self._night_filled

    def cell_areas_m2(self) -> np.ndarray:
        """Spherical area of the cells in each row (mean Earth radius)."""
        top = np.radians(self.row_lats + self.cellsize / 2)
        bot = np.radians(self.row_lats - self.cellsize / 2)
        return EARTH_MEAN_RADIUS**2 * math.radians(self.cellsize) * (np.sin(top) - np.sin(bot))

    def header(self) -> dict[str, float]:
        return {
            "ncols": self.ncols,
            "nrows": self.nrows,
            "xllcorner": self.xll,
            "yllcorner": self.yll,
            "cellsize": self.cellsize,
            "nodata_value": self.nodata,
        }


def cell_centroid(grid: PopulationGrid, row: int, col: int) -> GeoPoint:
    if not (0 <= row < grid.nrows and 0 <= col < grid.ncols):
        raise IndexError(f"cell ({row}, {col}) outside {grid.nrows}x{grid.ncols} grid")
    return GeoPoint(
        grid.xll + (col + 0.5) * grid.cellsize,
        grid.yll + (grid.nrows - 1 - row + 0.5) * grid.cellsize,
    )


# ----------------------------------------------------------------------------
# ASCII grid I/O
# ----------------------------------------------------------------------------


def _open_text(src) -> tuple[IO[str], str, bool]:
    if isinstance(src, (str, os.PathLike)):
        return open(src, encoding="utf-8"), os.fspath(src), True
    return src, getattr(src, "name", None) or "<stream>", False


def read_ascii_grid(src) -> tuple[dict[str, float], np.ndarray]:
    """Parse one ESRI ASCII grid; returns (header, values[nrows, ncols])."""
    fh, name, owned = _open_text(src)
    try:
        lines = fh.read().splitlines()
    finally:
        if owned:
            fh.close()

    header: dict[str, float] = {}
    lineno = 0
    while lineno < len(lines):
        parts = lines[lineno].split()
        if not parts:
            lineno += 1
            continue
        key = parts[0].lower()
        if key not in HEADER_KEYS:
            break
        if len(parts) != 2:
            raise GridParseError(f"header line must be 'key value', got {lines[lineno]!r}", lineno + 1, name)
        if key in header:
            raise GridParseError(f"duplicate header key {parts[0]}", lineno + 1, name)
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise GridParseError(f"bad value for {parts[0]}: {parts[1]!r}", lineno + 1, name) from None
        lineno += 1

    for key in HEADER_KEYS[:5]:
        if key not in header:
            raise GridParseError(f"missing header key {key}", lineno + 1, name)
    header.setdefault("nodata_value", DEFAULT_NODATA)
    ncols, nrows = header["ncols"], header["nrows"]
    if ncols != int(ncols) or nrows != int(nrows) or ncols <= 0 or nrows <= 0:
        raise GridParseError(f"ncols/nrows must be positive integers, got {ncols}/{nrows}", None, name)
    ncols, nrows = int(ncols), int(nrows)
    header["ncols"], header["nrows"] = ncols, nrows
    if header["cellsize"] <= 0:
        raise GridParseError("cellsize must be positive", None, name)

    values = np.empty((nrows, ncols), dtype=float)
    row = 0
    for i in range(lineno, len(lines)):
        parts = lines[i].split()
        if not parts:
            continue
        if row >= nrows:
            raise GridParseError(f"more than {nrows} data rows", i + 1, name)
        if len(parts) != ncols:
            raise GridParseError(f"data row {row + 1} has {len(parts)} values, expected {ncols}", i + 1, name)
        try:
            values[row] = np.array(parts, dtype=float)
        except ValueError:
            raise GridParseError(f"non-numeric value in data row {row + 1}", i + 1, name) from None
        row += 1
    if row != nrows:
        raise GridParseError(f"found {row} data rows, expected {nrows}", len(lines), name)
    return header, values


def write_ascii_grid(dst, header: dict[str, float], values: np.ndarray, fmt: str = "%.4f") -> None:
    owned = isinstance(dst, (str, os.PathLike))
    fh = open(dst, "w", encoding="utf-8") if owned else dst
    try:
        fh.write(f"ncols {int(header['ncols'])}\n")
        fh.write(f"nrows {int(header['nrows'])}\n")
        fh.write(f"xllcorner {header['xllcorner']!r}\n")
        fh.write(f"yllcorner {header['yllcorner']!r}\n")
        fh.write(f"cellsize {header['cellsize']!r}\n")
        fh.write(f"NODATA_value {header.get('nodata_value', DEFAULT_NODATA)!r}\n")
        buf = io.StringIO()
        np.savetxt(buf, values, fmt=fmt, delimiter=" ")
        fh.write(buf.getvalue())
    finally:
        if owned:
            fh.close()


def load_grid(day_src, night_src) -> PopulationGrid:
    """Read matching day and night ASCII grids into one PopulationGrid."""
    day_header, day = read_ascii_grid(day_src)
    night_header, night = read_ascii_grid(night_src)
    for key in HEADER_KEYS:
        a, b = day_header[key], night_header[key]
        if not (a == b or math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)):
            raise GridMismatchError(f"day/night georeference mismatch on {key}: {a} vs {b}")
    return PopulationGrid(
        ncols=int(day_header["ncols"]),
        nrows=int(day_header["nrows"]),
        xll=day_header["xllcorner"],
        yll=day_header["yllcorner"],
        cellsize=day_header["cellsize"],
        nodata=day_header["nodata_value"],
        day=day,
        night=night,
    )


def save_grid(grid: PopulationGrid, day_dst, night_dst, fmt: str = "%.4f") -> None:
    write_ascii_grid(day_dst, grid.header(), grid.day, fmt)
    write_ascii_grid(night_dst, grid.header(), grid.night, fmt)


# ----------------------------------------------------------------------------
# Zonal extraction
# ----------------------------------------------------------------------------


def _window(grid: PopulationGrid, route: RouteLike, w: float):
    """Row/column slice of cells near the buffer, or None when disjoint."""
    diag_m = math.radians(grid.cellsize) * math.sqrt(2) * EARTH_MEAN_RADIUS
    lon_lo, lat_lo, lon_hi, lat_hi = buffer_bbox(route, w + diag_m)
    if lon_hi < grid.xll or lon_lo > grid.xur or lat_hi < grid.yll or lat_lo > grid.yur:
        return None
    c0 = max(0, int(math.floor((lon_lo - grid.xll) / grid.cellsize)))
    c1 = min(grid.ncols, int(math.ceil((lon_hi - grid.xll) / grid.cellsize)))
    # Rows count from the north edge.
    r0 = max(0, int(math.floor((grid.yur - lat_hi) / grid.cellsize)))
    r1 = min(grid.nrows, int(math.ceil((grid.yur - lat_lo) / grid.cellsize)))
    if c1 <= c0 or r1 <= r0:
        return None
    return slice(r0, r1), slice(c0, c1)


def centroid_mask(grid: PopulationGrid, route: RouteLike, w: float):
    """(window, mask) of cells whose centroid is in the buffer; None if disjoint."""
    win = _window(grid, route, w)
    if win is None:
        return None
    rs, cs = win
    lats = grid.row_lats[rs]
    lon0 = grid.xll + cs.start * grid.cellsize
    mask = buffer_mask(route, w, lats, lon0, grid.cellsize, cs.stop - cs.start)
    return win, mask


def zonal_population_centroid(grid: PopulationGrid, route: RouteLike, w: float) -> PopulationTriplet:
    """Sum of cells whose centroid lies inside the closed buffer of width w."""
    hit = centroid_mask(grid, route, w)
    if hit is None:
        return ZERO_POPULATION
    (rs, cs), mask = hit
    day = grid.day_values()[rs, cs]
    night = grid.night_values()[rs, cs]
    return PopulationTriplet.of(float(day[mask].sum()), float(night[mask].sum()))


def coverage_fractions(grid: PopulationGrid, route: RouteLike, w: float, k: int = 4):
    """(window, fraction) where fraction is the share of k x k sub-centres in the buffer."""
    if int(k) != k or k < 2:
        raise GeoDomainError(f"sub-sample factor must be an integer >= 2, got {k}")
    k = int(k)
    win = _window(grid, route, w)
    if win is None:
        return None
    rs, cs = win
    nr, nc = rs.stop - rs.start, cs.stop - cs.start
    sub = grid.cellsize / k
    # Fine rows north to south, matching the coarse row order.
    top = grid.yur - rs.start * grid.cellsize
    lats = top - (np.arange(nr * k) + 0.5) * sub
    lon0 = grid.xll + cs.start * grid.cellsize
    fine = buffer_mask(route, w, lats, lon0, sub, nc * k)
    frac = fine.reshape(nr, k, nc, k).sum(axis=(1, 3)) / (k * k)
    return win, frac


def area_weighted_extract(grid: PopulationGrid, route: RouteLike, w: float, k: int = 4):
    """Area-weighted population and the raster-covered buffer area in m2."""
    hit = coverage_fractions(grid, route, w, k)
    if hit is None:
        return ZERO_POPULATION, 0.0
    (rs, cs), frac = hit
    day = float((grid.day_values()[rs, cs] * frac).sum())
    night = float((grid.night_values()[rs, cs] * frac).sum())
    area = float((frac * grid.cell_areas_m2()[rs][:, None]).sum())
    return PopulationTriplet.of(day, night), area


def zonal_population_area_weighted(
    grid: PopulationGrid, route: RouteLike, w: float, k: int = 4
) -> PopulationTriplet:
    return area_weighted_extract(grid, route, w, k)[0]


# ----------------------------------------------------------------------------
# Density
# ----------------------------------------------------------------------------


def density_whole_route(
    grid: PopulationGrid, route: RouteLike, w: float, spacing_factor: float = 20
) -> DensityResult:
    """Average population over the buffer of the full route, per km2.

    A multi-part route (sequence of polylines) is measured over the union of
    its part buffers.
    """
    pop = zonal_population_centroid(grid, route, w)
    area_km2 = buffer_area(route, w, w / spacing_factor) / 1e6
    if area_km2 <= 0:
        raise GeoDomainError("buffer area is zero")
    return DensityResult(WHOLE_ROUTE, pop.average / area_km2, pop, area_km2)


def density_segment_weighted(
    grid: PopulationGrid,
    segments: Sequence[RoutePolyline],
    w: float,
    spacing_factor: float = 20,
) -> DensityResult:
    """Pool per-segment populations and areas: sum(pop_i) / sum(area_i).

    Buffer overlap between segments is counted once per segment on both
    sides of the ratio, which is what lets this drift from the whole-route
    figure where buffers overlap over dense areas.
    """
    if not segments:
        raise GeoDomainError("segment-weighted density needs at least one segment")
    pops = [zonal_population_centroid(grid, seg, w) for seg in segments]
    area_km2 = sum(buffer_area(seg, w, w / spacing_factor) for seg in segments) / 1e6
    if area_km2 <= 0:
        raise GeoDomainError("buffer area is zero")
    total = pops[0]
    for p in pops[1:]:
        total = total + p
    return DensityResult(SEGMENT_WEIGHTED, total.average / area_km2, total, area_km2)
