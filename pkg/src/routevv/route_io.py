"""Route interchange: KML LineString documents, network CSVs, geometry checks."""

from __future__ import annotations

import csv
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .geo_core import (
    DEFAULT_MODE,
    EARTH_MEAN_RADIUS,
    GeoDomainError,
    GeoPoint,
    RoutePolyline,
    segment_geodesic_lengths,
)

KML_NS = "http://www.opengis.net/kml/2.2"
NETWORK_MODES = ("rail", "hh_truck", "barge")

DUPLICATE_VERTEX = "duplicate-vertex"
SPIKE = "spike"
DISCONTINUITY = "discontinuity"
SELF_INTERSECTION = "self-intersection"
ABERRATION_KINDS = (DUPLICATE_VERTEX, SPIKE, DISCONTINUITY, SELF_INTERSECTION)


class KmlError(ValueError):
    """Unusable KML input."""


class EmptyRouteError(KmlError):
    pass


class NetworkFileError(ValueError):
    pass


@dataclass(frozen=True)
class RouteDocument:
    id: str
    route: RoutePolyline
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("route document id must be nonempty")


# ----------------------------------------------------------------------------
# KML
# ----------------------------------------------------------------------------


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _children(elem: ET.Element, name: str) -> list[ET.Element]:
    return [c for c in elem if _local(c.tag) == name]


def _child_text(elem: ET.Element, name: str) -> str | None:
    for c in elem:
        if _local(c.tag) == name:
            return (c.text or "").strip()
    return None


def _extended_data(elem: ET.Element) -> dict[str, str] | None:
    blocks = _children(elem, "ExtendedData")
    if not blocks:
        return None
    out: dict[str, str] = {}
    for data in _children(blocks[0], "Data"):
        key = data.get("name")
        if key is None:
            continue
        out[key] = _child_text(data, "value") or ""
    return out


def _parse_coordinates(text: str, path: str) -> list[GeoPoint]:
    points = []
    for n, token in enumerate(text.split()):
        parts = token.split(",")
        if len(parts) not in (2, 3):
            raise KmlError(f"{path}: tuple {n} {token!r} is not lon,lat[,alt]")
        try:
            lon, lat = float(parts[0]), float(parts[1])
            if len(parts) == 3:
                float(parts[2])
        except ValueError:
            raise KmlError(f"{path}: tuple {n} {token!r} is not numeric") from None
        try:
            points.append(GeoPoint(lon, lat))
        except GeoDomainError as exc:
            raise GeoDomainError(f"{path}: tuple {n}: {exc}") from None
    return points


def parse_kml(text: str | bytes) -> RouteDocument:
    """Read every LineString in document order and join them into one route.

    Segment modes come from a ``mode`` ExtendedData entry on the enclosing
    Placemark; LineStrings that continue from the previous end vertex share
    it. Namespaced and bare KML are both accepted.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise KmlError(f"malformed XML: {exc}") from None

    doc_elem = next((e for e in root.iter() if _local(e.tag) == "Document"), root)
    doc_name = _child_text(doc_elem, "name")
    doc_meta = _extended_data(doc_elem)

    pieces: list[tuple[list[GeoPoint], str]] = []
    placemark_names: list[str] = []

    def walk(elem: ET.Element, path: str, mode: str) -> None:
        name = _local(elem.tag)
        here = f"{path}/{name}"
        if name == "Placemark":
            meta = _extended_data(elem) or {}
            mode = meta.get("mode", mode)
            pm_name = _child_text(elem, "name")
            if pm_name:
                placemark_names.append(pm_name)
        if name == "LineString":
            coords = next((c for c in elem if _local(c.tag) == "coordinates"), None)
            if coords is None:
                raise KmlError(f"{here}: LineString without coordinates")
            pieces.append((_parse_coordinates(coords.text or "", f"{here}/coordinates"), mode))
            return
        for i, child in enumerate(elem):
            walk(child, f"{here}[{i}]", mode)

    walk(root, "", DEFAULT_MODE)
    if not pieces:
        raise EmptyRouteError("KML contains no LineString")

    vertices: list[GeoPoint] = []
    modes: list[str] = []
    for pts, mode in pieces:
        if not pts:
            continue
        if vertices and pts[0] == vertices[-1]:
            pts = pts[1:]
        modes.extend([mode] * (len(pts) if vertices else len(pts) - 1))
        vertices.extend(pts)
    if len(vertices) < 2:
        raise EmptyRouteError("KML LineStrings hold fewer than 2 distinct vertices")

    if doc_meta is not None:
        metadata = dict(doc_meta)
    else:
        metadata = {}
        if doc_name:
            metadata["name"] = doc_name
        if placemark_names:
            metadata["placemarks"] = "; ".join(placemark_names)
    return RouteDocument(doc_name or metadata.get("id") or "route", RoutePolyline(tuple(vertices), tuple(modes)), metadata)


def _mode_runs(route: RoutePolyline) -> list[tuple[str, int, int]]:
    """(mode, first vertex, last vertex) for each run of equal segment modes."""
    runs = []
    start = 0
    modes = route.segment_modes
    for i in range(1, len(modes) + 1):
        if i == len(modes) or modes[i] != modes[start]:
            runs.append((modes[start], start, i))
            start = i
    return runs


def serialize_kml(doc: RouteDocument) -> str:
    """One Placemark per contiguous mode run, coordinates to 9 decimals."""
    ET.register_namespace("", KML_NS)
    q = lambda tag: f"{{{KML_NS}}}{tag}"  # noqa: E731
    kml = ET.Element(q("kml"))
    document = ET.SubElement(kml, q("Document"))
    ET.SubElement(document, q("name")).text = doc.id
    ext = ET.SubElement(document, q("ExtendedData"))
    for key in sorted(doc.metadata):
        data = ET.SubElement(ext, q("Data"), name=key)
        ET.SubElement(data, q("value")).text = str(doc.metadata[key])
    for n, (mode, first, last) in enumerate(_mode_runs(doc.route), start=1):
        pm = ET.SubElement(document, q("Placemark"))
        ET.SubElement(pm, q("name")).text = f"{doc.id} run {n} ({mode})"
        pm_ext = ET.SubElement(pm, q("ExtendedData"))
        data = ET.SubElement(pm_ext, q("Data"), name="mode")
        ET.SubElement(data, q("value")).text = mode
        line = ET.SubElement(pm, q("LineString"))
        ET.SubElement(line, q("tessellate")).text = "1"
        ET.SubElement(line, q("coordinates")).text = " ".join(
            f"{v.lon:.9f},{v.lat:.9f}" for v in doc.route.vertices[first : last + 1]
        )
    ET.indent(kml)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(kml, encoding="unicode") + "\n"


def read_kml(path) -> RouteDocument:
    with open(path, "rb") as fh:
        return parse_kml(fh.read())


def write_kml(doc: RouteDocument, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_kml(doc))


# ----------------------------------------------------------------------------
# Geometry validation
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AberrationThresholds:
    duplicate_m: float = 1.0
    spike_turn_deg: float = 170.0
    spike_leg_m: float = 100.0
    jump_m: float = 10_000.0


@dataclass(frozen=True)
class Aberration:
    kind: str
    location: tuple[int, ...]  # vertex index, or (segment i, segment j)
    measure: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "location": list(self.location), "measure": self.measure}


def _planar(route: RoutePolyline) -> tuple[np.ndarray, np.ndarray]:
    lat0 = math.radians((route.lats.min() + route.lats.max()) / 2)
    lon0 = (route.lons.min() + route.lons.max()) / 2
    x = EARTH_MEAN_RADIUS * np.radians(route.lons - lon0) * math.cos(lat0)
    y = EARTH_MEAN_RADIUS * np.radians(route.lats - np.degrees(lat0))
    return x, y


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _crossings(x: np.ndarray, y: np.ndarray) -> list[tuple[int, int]]:
    """Pairs (i, j), j >= i + 2, of touching or crossing segments."""
    n = x.size - 1
    if n < 3:
        return []
    x0, y0, x1, y1 = x[:-1], y[:-1], x[1:], y[1:]
    xmin, xmax = np.minimum(x0, x1), np.maximum(x0, x1)
    ymin, ymax = np.minimum(y0, y1), np.maximum(y0, y1)
    scale = max(float(np.ptp(x)), float(np.ptp(y)), 1.0)
    eps = 1e-9 * scale
    pairs = []
    for i in range(n - 2):
        j = np.arange(i + 2, n)
        near = (xmin[j] <= xmax[i] + eps) & (xmax[j] >= xmin[i] - eps)
        near &= (ymin[j] <= ymax[i] + eps) & (ymax[j] >= ymin[i] - eps)
        j = j[near]
        if j.size == 0:
            continue
        d1 = _orient(x0[i], y0[i], x1[i], y1[i], x0[j], y0[j])
        d2 = _orient(x0[i], y0[i], x1[i], y1[i], x1[j], y1[j])
        d3 = _orient(x0[j], y0[j], x1[j], y1[j], x0[i], y0[i])
        d4 = _orient(x0[j], y0[j], x1[j], y1[j], x1[i], y1[i])
        tol = eps * scale
        proper = (d1 * d2 < 0) & (d3 * d4 < 0)
        # Touching or collinear overlap: an endpoint lies on the other segment.
        touch = (np.abs(d1) <= tol) | (np.abs(d2) <= tol) | (np.abs(d3) <= tol) | (np.abs(d4) <= tol)
        hit = proper | (touch & ((d1 * d2 <= tol * tol) & (d3 * d4 <= tol * tol)))
        pairs.extend((i, int(k)) for k in j[hit])
    return pairs


def validate_geometry(
    route: RoutePolyline, thresholds: AberrationThresholds | None = None
) -> list[Aberration]:
    """List duplicate vertices, spikes, long jumps and self-intersections.

    An empty list means the route is clean. Turn angles and crossings are
    evaluated in one equirectangular frame centred on the route.
    """
    t = thresholds or AberrationThresholds()
    legs = segment_geodesic_lengths(route)
    found: list[Aberration] = []

    for i, d in enumerate(legs):
        if d < t.duplicate_m:
            found.append(Aberration(DUPLICATE_VERTEX, (i + 1,), float(d)))

    x, y = _planar(route)
    dx, dy = np.diff(x), np.diff(y)
    tips: set[int] = set()
    for v in range(1, route.n_segments):
        a, b = legs[v - 1], legs[v]
        if a < t.duplicate_m or b < t.duplicate_m:
            continue
        cross = dx[v - 1] * dy[v] - dy[v - 1] * dx[v]
        dot = dx[v - 1] * dx[v] + dy[v - 1] * dy[v]
        turn = abs(math.degrees(math.atan2(cross, dot)))
        if turn > t.spike_turn_deg and min(a, b) < t.spike_leg_m:
            found.append(Aberration(SPIKE, (v,), turn))
            tips.add(v)

    for i, d in enumerate(legs):
        if d > t.jump_m:
            found.append(Aberration(DISCONTINUITY, (i,), float(d)))

    # Crossings are tested on the route with spike tips and duplicate runs
    # removed, so a retraced spike is not reported a second time as touching
    # segments. Reduced segments map back to the original segment ending at
    # their far vertex.
    kept = [0]
    for v in range(1, len(route.vertices)):
        if v in tips:
            continue
        if math.hypot(x[v] - x[kept[-1]], y[v] - y[kept[-1]]) < t.duplicate_m:
            continue
        kept.append(v)
    kept_idx = np.array(kept)
    for i, j in _crossings(x[kept_idx], y[kept_idx]):
        found.append(Aberration(SELF_INTERSECTION, (kept[i + 1] - 1, kept[j + 1] - 1), 0.0))
    return found


# ----------------------------------------------------------------------------
# Network CSV files
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeRow:
    id: str
    lon: float
    lat: float
    transfer: bool


@dataclass(frozen=True)
class EdgeRow:
    source: str
    target: str
    mode: str


def _read_csv(path, required: tuple[str, ...]) -> list[tuple[int, dict[str, str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise NetworkFileError(f"{os.fspath(path)}: missing columns {missing}")
        rows = []
        for n, row in enumerate(reader, start=2):
            rows.append((n, {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}))
        return rows


def read_nodes_csv(path) -> list[NodeRow]:
    out = []
    seen = set()
    for line, row in _read_csv(path, ("id", "lon", "lat", "transfer")):
        where = f"{os.fspath(path)}:{line}"
        if not row["id"]:
            raise NetworkFileError(f"{where}: empty node id")
        if row["id"] in seen:
            raise NetworkFileError(f"{where}: duplicate node id {row['id']!r}")
        if row["transfer"] not in ("0", "1"):
            raise NetworkFileError(f"{where}: transfer must be 0 or 1, got {row['transfer']!r}")
        try:
            lon, lat = float(row["lon"]), float(row["lat"])
            GeoPoint(lon, lat)
        except (ValueError, GeoDomainError) as exc:
            raise NetworkFileError(f"{where}: bad coordinates: {exc}") from None
        seen.add(row["id"])
        out.append(NodeRow(row["id"], lon, lat, row["transfer"] == "1"))
    return out


def read_edges_csv(path) -> list[EdgeRow]:
    out = []
    for line, row in _read_csv(path, ("from", "to", "mode")):
        if row["mode"] not in NETWORK_MODES:
            raise NetworkFileError(
                f"{os.fspath(path)}:{line}: mode {row['mode']!r} not in {NETWORK_MODES}"
            )
        out.append(EdgeRow(row["from"], row["to"], row["mode"]))
    return out


def write_nodes_csv(path, nodes: Iterable[NodeRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lon", "lat", "transfer"])
        for n in nodes:
            w.writerow([n.id, repr(n.lon), repr(n.lat), int(n.transfer)])


def write_edges_csv(path, edges: Iterable[EdgeRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "mode"])
        for e in edges:
            w.writerow([e.source, e.target, e.mode])
