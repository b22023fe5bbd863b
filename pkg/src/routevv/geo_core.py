"""Coordinates, projections, route lengths and buffer geometry.

Routes are stored in geographic WGS84 degrees. Lengths are available three
ways: great-circle on a mean-radius sphere, planar in spherical Web Mercator,
and Mercator corrected back to ground scale per segment. Buffer membership is
decided in a local equirectangular frame centred on each query point, so it
stays accurate at buffer scale for routes of any extent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

WEB_MERCATOR_RADIUS = 6378137.0
EARTH_MEAN_RADIUS = 6371008.8
MERCATOR_MAX_LAT = 85.06

WEB_MERCATOR = "web-mercator"
LOCAL_EQUIRECTANGULAR = "local-equirectangular"

DEFAULT_MODE = "unknown"


class GeoDomainError(ValueError):
    """Input outside the domain of a geometric operation."""


class FrameMismatchError(ValueError):
    """Projected coordinates from different frames were mixed."""


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise GeoDomainError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise GeoDomainError(f"longitude {self.lon} outside [-180, 180]")
        if not -90.0 < self.lat < 90.0:
            raise GeoDomainError(f"latitude {self.lat} outside (-90, 90)")


@dataclass(frozen=True)
class ProjectedPoint:
    x: float
    y: float
    frame: str = WEB_MERCATOR
    origin: GeoPoint | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeoDomainError(f"non-finite projected coordinate ({self.x}, {self.y})")
        if self.frame not in (WEB_MERCATOR, LOCAL_EQUIRECTANGULAR):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.frame == LOCAL_EQUIRECTANGULAR and self.origin is None:
            raise ValueError("local-equirectangular frame needs an origin")

    def same_frame(self, other: ProjectedPoint) -> bool:
        return self.frame == other.frame and self.origin == other.origin

    def distance_to(self, other: ProjectedPoint) -> float:
        if not self.same_frame(other):
            raise FrameMismatchError(
                f"cannot combine {self.frame} point with {other.frame} point"
            )
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class RoutePolyline:
    """Ordered vertices with one transport-mode tag per segment."""

    vertices: tuple[GeoPoint, ...]
    segment_modes: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(self.vertices))
        modes = tuple(self.segment_modes)
        if len(self.vertices) < 2:
            raise GeoDomainError("a route needs at least 2 vertices")
        if not modes:
            modes = (DEFAULT_MODE,) * (len(self.vertices) - 1)
        if len(modes) != len(self.vertices) - 1:
            raise GeoDomainError(
                f"{len(modes)} segment modes for {len(self.vertices)} vertices"
            )
        object.__setattr__(self, "segment_modes", modes)

    @classmethod
    def from_coords(
        cls, coords: Iterable[Sequence[float]], modes: Sequence[str] | str | None = None
    ) -> RoutePolyline:
        vertices = tuple(GeoPoint(float(c[0]), float(c[1])) for c in coords)
        if isinstance(modes, str):
            modes = (modes,) * (len(vertices) - 1)
        return cls(vertices, tuple(modes or ()))

    def __len__(self) -> int:
        return len(self.vertices)

    @cached_property
    def lons(self) -> np.ndarray:
        return np.array([v.lon for v in self.vertices], dtype=float)

    @cached_property
    def lats(self) -> np.ndarray:
        return np.array([v.lat for v in self.vertices], dtype=float)

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1

    def coords(self) -> list[tuple[float, float]]:
        return [(v.lon, v.lat) for v in self.vertices]

    def reversed(self) -> RoutePolyline:
        return RoutePolyline(self.vertices[::-1], self.segment_modes[::-1])

    def segment(self, i: int) -> RoutePolyline:
        return RoutePolyline(self.vertices[i : i + 2], self.segment_modes[i : i + 1])

    def segments(self) -> list[RoutePolyline]:
        return [self.segment(i) for i in range(self.n_segments)]

    def densified(self) -> RoutePolyline:
        """Insert the Web Mercator midpoint of every segment."""
        x, y = mercator_xy(self.lons, self.lats)
        lon_mid, lat_mid = inverse_mercator_xy((x[:-1] + x[1:]) / 2, (y[:-1] + y[1:]) / 2)
        verts: list[GeoPoint] = []
        modes: list[str] = []
        for i, mode in enumerate(self.segment_modes):
            verts.append(self.vertices[i])
            verts.append(GeoPoint(float(lon_mid[i]), float(lat_mid[i])))
            modes.extend((mode, mode))
        verts.append(self.vertices[-1])
        return RoutePolyline(tuple(verts), tuple(modes))

    def concat(self, other: RoutePolyline) -> RoutePolyline:
        """Join two routes; a shared junction vertex is kept once."""
        if self.vertices[-1] == other.vertices[0]:
            return RoutePolyline(
                self.vertices + other.vertices[1:], self.segment_modes + other.segment_modes
            )
        return RoutePolyline(
            self.vertices + other.vertices,
            self.segment_modes + (other.segment_modes[0],) + other.segment_modes,
        )

    def bbox(self) -> tuple[float, float, float, float]:
        """(min_lon, min_lat, max_lon, max_lat)."""
        return (
            float(self.lons.min()),
            float(self.lats.min()),
            float(self.lons.max()),
            float(self.lats.max()),
        )


RouteLike = Union[RoutePolyline, Sequence[RoutePolyline]]


def route_parts(route: RouteLike) -> tuple[RoutePolyline, ...]:
    """A route, or a multi-part route given as a sequence of polylines."""
    if isinstance(route, RoutePolyline):
        return (route,)
    parts = tuple(route)
    if not parts or not all(isinstance(p, RoutePolyline) for p in parts):
        raise GeoDomainError("expected a RoutePolyline or a nonempty sequence of them")
    return parts


def _segment_table(route: RouteLike) -> np.ndarray:
    """(n, 4) array of a_lon, a_lat, b_lon, b_lat over all parts."""
    rows = [
        np.column_stack((p.lons[:-1], p.lats[:-1], p.lons[1:], p.lats[1:])) for p in route_parts(route)
    ]
    return np.vstack(rows)


# ----------------------------------------------------------------------------
# Web Mercator
# ----------------------------------------------------------------------------


def mercator_xy(lons: np.ndarray, lats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised forward Web Mercator; raises on the first vertex past the cutoff."""
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    bad = np.flatnonzero(~(np.abs(lats) < MERCATOR_MAX_LAT))
    if bad.size:
        i = int(bad[0])
        raise GeoDomainError(
            f"vertex {i} latitude {float(lats.flat[i])} outside Web Mercator range "
            f"(|lat| < {MERCATOR_MAX_LAT})"
        )
    x = WEB_MERCATOR_RADIUS * np.radians(lons)
    # atanh(sin phi) == ln tan(pi/4 + phi/2), but exact at the equator.
    y = WEB_MERCATOR_RADIUS * np.arctanh(np.sin(np.radians(lats)))
    return x, y


def inverse_mercator_xy(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lons = np.degrees(np.asarray(x, dtype=float) / WEB_MERCATOR_RADIUS)
    # x = +-pi R lands one ulp past the antimeridian; pull rounding back in.
    edge = (np.abs(lons) > 180.0) & (np.abs(lons) < 180.0 + 1e-9)
    lons = np.where(edge, np.copysign(180.0, lons), lons)
    lats = np.degrees(np.arctan(np.sinh(np.asarray(y, dtype=float) / WEB_MERCATOR_RADIUS)))
    return lons, lats


def to_web_mercator(p: GeoPoint) -> ProjectedPoint:
    x, y = mercator_xy(np.array([p.lon]), np.array([p.lat]))
    return ProjectedPoint(float(x[0]), float(y[0]), WEB_MERCATOR)


def from_web_mercator(p: ProjectedPoint) -> GeoPoint:
    if p.frame != WEB_MERCATOR:
        raise FrameMismatchError(f"expected a {WEB_MERCATOR} point, got {p.frame}")
    lon, lat = inverse_mercator_xy(np.array([p.x]), np.array([p.y]))
    return GeoPoint(float(lon[0]), float(lat[0]))


def to_local(p: GeoPoint, origin: GeoPoint, radius: float = EARTH_MEAN_RADIUS) -> ProjectedPoint:
    """Equirectangular projection centred on ``origin``."""
    x = radius * math.radians(p.lon - origin.lon) * math.cos(math.radians(origin.lat))
    y = radius * math.radians(p.lat - origin.lat)
    return ProjectedPoint(x, y, LOCAL_EQUIRECTANGULAR, origin)


# ----------------------------------------------------------------------------
# Lengths
# ----------------------------------------------------------------------------


def haversine(lon1, lat1, lon2, lat2, radius: float = EARTH_MEAN_RADIUS):
    """Great-circle distance in meters; broadcasts over arrays."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def segment_geodesic_lengths(route: RoutePolyline, radius: float = EARTH_MEAN_RADIUS) -> np.ndarray:
    lo, la = route.lons, route.lats
    return haversine(lo[:-1], la[:-1], lo[1:], la[1:], radius)


def geodesic_length(route: RoutePolyline, radius: float = EARTH_MEAN_RADIUS) -> float:
    """Sum of per-segment haversine distances.

    ``radius`` defaults to the mean Earth radius; pass ``WEB_MERCATOR_RADIUS``
    to measure on the sphere the Mercator projection is generated from.
    """
    return float(np.sum(segment_geodesic_lengths(route, radius)))


def _mercator_segment_lengths(route: RoutePolyline) -> np.ndarray:
    x, y = mercator_xy(route.lons, route.lats)
    return np.hypot(np.diff(x), np.diff(y))


def planar_length_mercator(route: RoutePolyline) -> float:
    """Euclidean length of the route in the Web Mercator plane."""
    return float(np.sum(_mercator_segment_lengths(route)))


def ground_corrected_length(route: RoutePolyline) -> float:
    """Mercator segment lengths scaled by cos(mid-latitude), summed."""
    mid = np.radians((route.lats[:-1] + route.lats[1:]) / 2)
    return float(np.sum(_mercator_segment_lengths(route) * np.cos(mid)))


# ----------------------------------------------------------------------------
# Buffer membership
# ----------------------------------------------------------------------------


_M_PER_DEG = EARTH_MEAN_RADIUS * math.pi / 180.0


def _segment_offsets(plon, plat, alon, alat, blon, blat):
    # Local equirectangular frame centred on each query point p. Terms that
    # depend only on latitude broadcast, which keeps lattice rows cheap.
    cosp = np.cos(np.radians(plat))
    ax = (_M_PER_DEG * (alon - plon)) * cosp
    ay = _M_PER_DEG * (alat - plat)
    dx = (_M_PER_DEG * (blon - alon)) * cosp
    dy = _M_PER_DEG * (blat - alat)
    len2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(len2 > 0, 1.0 / np.where(len2 > 0, len2, 1.0), 0.0)
    t = np.clip(-(ax * dx + ay * dy) * inv, 0.0, 1.0)
    return ax + t * dx, ay + t * dy


def _segment_distance(plon, plat, alon, alat, blon, blat):
    ex, ey = _segment_offsets(plon, plat, alon, alat, blon, blat)
    return np.hypot(ex, ey)


def distances_to_route(lons, lats, route: RouteLike) -> np.ndarray:
    """Distance in meters from every (lon, lat) point to the nearest segment."""
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    best = np.full(np.broadcast(lons, lats).shape, np.inf)
    for a_lon, a_lat, b_lon, b_lat in _segment_table(route):
        np.minimum(best, _segment_distance(lons, lats, a_lon, a_lat, b_lon, b_lat), out=best)
    return best


def distance_point_to_route(p: GeoPoint, route: RouteLike) -> float:
    return float(distances_to_route(p.lon, p.lat, route))


def _check_width(w: float) -> None:
    if not (w > 0 and math.isfinite(w)):
        raise GeoDomainError(f"buffer width must be positive, got {w}")


def in_buffer(p: GeoPoint, route: RouteLike, w: float) -> bool:
    """Closed buffer test: distance to the centreline <= w."""
    _check_width(w)
    return distance_point_to_route(p, route) <= w


_MARGIN_SLACK = 1.0 + 1e-9
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def buffer_mask(
    route: RouteLike,
    w: float,
    row_lats: np.ndarray,
    row_lon0: np.ndarray | float,
    row_dlon: np.ndarray | float,
    ncols: np.ndarray | int,
) -> np.ndarray:
    """In-buffer flags for a lattice of sample points.

    Row ``i`` holds points at latitude ``row_lats[i]`` and longitudes
    ``row_lon0[i] + (j + 0.5) * row_dlon[i]`` for ``j < ncols[i]``. Each segment
    is only evaluated on the lattice window that can lie within ``w`` of it,
    which never changes the outcome. Entries past a row's ``ncols`` are False.
    """
    _check_width(w)
    row_lats = np.asarray(row_lats, dtype=float)
    nrows = row_lats.size
    lon0 = np.broadcast_to(np.asarray(row_lon0, dtype=float), (nrows,))
    dlon = np.broadcast_to(np.asarray(row_dlon, dtype=float), (nrows,))
    nc = np.broadcast_to(np.asarray(ncols, dtype=np.int64), (nrows,))
    width = int(nc.max()) if nrows else 0
    mask = np.zeros((nrows, width), dtype=bool)
    if nrows == 0 or width == 0:
        return mask

    lat_margin = math.degrees(w / EARTH_MEAN_RADIUS) * _MARGIN_SLACK
    cos_rows = np.cos(np.radians(row_lats))
    lon_margin = np.degrees(w / (EARTH_MEAN_RADIUS * np.maximum(cos_rows, 1e-12))) * _MARGIN_SLACK
    cols = np.arange(width)
    w2 = w * w

    for a_lon, a_lat, b_lon, b_lat in _segment_table(route):
        s_lat0, s_lat1 = min(a_lat, b_lat) - lat_margin, max(a_lat, b_lat) + lat_margin
        rows = np.flatnonzero((row_lats >= s_lat0) & (row_lats <= s_lat1))
        if rows.size == 0:
            continue
        west = min(a_lon, b_lon) - lon_margin[rows]
        east = max(a_lon, b_lon) + lon_margin[rows]
        j0 = np.ceil((west - lon0[rows]) / dlon[rows] - 0.5)
        j1 = np.floor((east - lon0[rows]) / dlon[rows] - 0.5)
        j1 = np.minimum(j1, nc[rows] - 1)
        j0 = np.maximum(j0, 0)
        live = j1 >= j0
        if not live.any():
            continue
        rows, j0, j1 = rows[live], j0[live], j1[live]
        c0, c1 = int(j0.min()), int(j1.max())
        r_lo, r_hi = int(rows.min()), int(rows.max())
        block_rows = np.arange(r_lo, r_hi + 1)
        blk_cols = cols[c0 : c1 + 1]
        plat = row_lats[block_rows][:, None]
        plon = lon0[block_rows][:, None] + (blk_cols[None, :] + 0.5) * dlon[block_rows][:, None]
        ex, ey = _segment_offsets(plon, plat, a_lon, a_lat, b_lon, b_lat)
        hit = ex * ex + ey * ey <= w2
        hit &= blk_cols[None, :] < nc[block_rows][:, None]
        mask[r_lo : r_hi + 1, c0 : c1 + 1] |= hit
    return mask


def buffer_bbox(route: RouteLike, margin_m: float) -> tuple[float, float, float, float]:
    """Route bounding box grown by ``margin_m`` on the ground, in degrees."""
    boxes = np.array([p.bbox() for p in route_parts(route)])
    min_lon, min_lat = boxes[:, 0].min(), boxes[:, 1].min()
    max_lon, max_lat = boxes[:, 2].max(), boxes[:, 3].max()
    dlat = math.degrees(margin_m / EARTH_MEAN_RADIUS)
    lat_lo = max(min_lat - dlat, -89.999999)
    lat_hi = min(max_lat + dlat, 89.999999)
    widest = max(abs(lat_lo), abs(lat_hi))
    dlon = math.degrees(margin_m / (EARTH_MEAN_RADIUS * math.cos(math.radians(widest))))
    return (float(min_lon - dlon), float(lat_lo), float(max_lon + dlon), float(lat_hi))


def buffer_area(route: RouteLike, w: float, spacing: float | None = None) -> float:
    """Buffer area in square meters by point-count quadrature.

    Samples sit at the centres of an equal-area lattice: rows are ``spacing``
    meters apart in latitude and each row is divided into ``spacing``-meter
    steps of ground longitude, so every sample stands for ``spacing**2`` m2.
    """
    _check_width(w)
    if spacing is None:
        spacing = w / 20
    if not (spacing > 0 and spacing <= w / 10 * (1 + 1e-12)):
        raise GeoDomainError(f"quadrature spacing {spacing} m must be in (0, w/10 = {w / 10}]")
    lon_lo, lat_lo, lon_hi, lat_hi = buffer_bbox(route, w)
    dlat = math.degrees(spacing / EARTH_MEAN_RADIUS)
    nrows = max(1, math.ceil((lat_hi - lat_lo) / dlat))
    row_lats = lat_lo + (np.arange(nrows) + 0.5) * dlat
    dlon = np.degrees(spacing / (EARTH_MEAN_RADIUS * np.cos(np.radians(row_lats))))
    # Golden-ratio row shifts keep the lattice from resonating with straight
    # buffer edges of rational slope.
    shift = np.mod(np.arange(nrows) * _GOLDEN, 1.0)
    lon0 = lon_lo + (shift - 0.5) * dlon
    ncols = np.ceil((lon_hi - lon_lo) / dlon).astype(np.int64) + 1
    count = 0
    # Bounded memory: lattice processed in horizontal bands.
    band = max(1, int(4_000_000 // max(1, int(ncols.max()))))
    for r0 in range(0, nrows, band):
        r1 = min(nrows, r0 + band)
        m = buffer_mask(route, w, row_lats[r0:r1], lon0[r0:r1], dlon[r0:r1], ncols[r0:r1])
        count += int(m.sum())
    return count * spacing * spacing
