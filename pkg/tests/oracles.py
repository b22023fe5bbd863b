"""Independent reference computations used by the tests.

Nothing here calls into the package's geometry kernels; each oracle is a
separate, deliberately plain formulation of the same definition.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np

R_MEAN = 6371008.8
R_MERC = 6378137.0


# ----------------------------------------------------------------------------
# Point-to-route distance, complex-number formulation
# ----------------------------------------------------------------------------


def _local(p_lon, p_lat, q_lon, q_lat):
    """Complex coordinate of q in the equirectangular frame centred at p."""
    return R_MEAN * (np.radians(q_lon - p_lon) * np.cos(np.radians(p_lat)) + 1j * np.radians(q_lat - p_lat))


def oracle_distances(p_lon, p_lat, coords) -> np.ndarray:
    """Distance from points p to the polyline through ``coords`` (lon, lat)."""
    p_lon = np.asarray(p_lon, float)
    p_lat = np.asarray(p_lat, float)
    best = np.full(np.broadcast(p_lon, p_lat).shape, np.inf)
    for (alon, alat), (blon, blat) in zip(coords[:-1], coords[1:]):
        a = _local(p_lon, p_lat, alon, alat)
        b = _local(p_lon, p_lat, blon, blat)
        ab = b - a
        # p is the origin; project 0 onto segment a + t(b - a).
        denom = (ab * ab.conjugate()).real
        t = np.where(denom > 0, (-a * ab.conjugate()).real / np.where(denom > 0, denom, 1), 0.0)
        t = np.clip(t, 0.0, 1.0)
        best = np.minimum(best, np.abs(a + t * ab))
    return best


def all_cells_centroid_sum(values: np.ndarray, xll, yll, cellsize, coords, w, nodata=None) -> tuple[float, np.ndarray]:
    """Exhaustive centroid-rule sum over every cell of the grid."""
    nrows, ncols = values.shape
    lons = xll + (np.arange(ncols) + 0.5) * cellsize
    lats = yll + (nrows - 1 - np.arange(nrows) + 0.5) * cellsize
    inside = oracle_distances(lons[None, :], lats[:, None], coords) <= w
    vals = values if nodata is None else np.where(values == nodata, 0.0, values)
    total = 0.0
    for r in range(nrows):
        for c in np.nonzero(inside[r])[0]:
            total += float(vals[r, c])
    return total, inside


# ----------------------------------------------------------------------------
# Buffer area
# ----------------------------------------------------------------------------


def capsule_area(length_m: float, w: float) -> float:
    return 2 * w * length_m + math.pi * w**2


def polygon_buffer_area(coords, w: float, resolution: int = 256) -> float:
    """Area of a route buffer via shapely in one equirectangular frame.

    Only valid for routes a few km across, where a single frame is accurate.
    """
    from shapely.geometry import LineString

    lon0 = sum(c[0] for c in coords) / len(coords)
    lat0 = sum(c[1] for c in coords) / len(coords)
    k = math.cos(math.radians(lat0))
    xy = [(R_MEAN * math.radians(lon - lon0) * k, R_MEAN * math.radians(lat - lat0)) for lon, lat in coords]
    return LineString(xy).buffer(w, quad_segs=resolution).area


def union_polygon_area(parts, w: float, resolution: int = 256) -> float:
    from shapely.geometry import LineString
    from shapely.ops import unary_union

    flat = [c for p in parts for c in p]
    lon0 = sum(c[0] for c in flat) / len(flat)
    lat0 = sum(c[1] for c in flat) / len(flat)
    k = math.cos(math.radians(lat0))

    def xy(cs):
        return [(R_MEAN * math.radians(lon - lon0) * k, R_MEAN * math.radians(lat - lat0)) for lon, lat in cs]

    return unary_union([LineString(xy(p)).buffer(w, quad_segs=resolution) for p in parts]).area


# ----------------------------------------------------------------------------
# Routing by exhaustive enumeration
# ----------------------------------------------------------------------------


def _gc(lon1, lat1, lon2, lat2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    h = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2
    return 2 * R_MEAN * math.asin(math.sqrt(h))


def simple_paths(coords: dict, transfer: dict, edges, origin, dest):
    """Yield (length, nodes, modes) for every node-simple origin-dest walk.

    Parallel edges of different modes give separate mode sequences.
    """
    links: dict = {n: [] for n in coords}
    for a, b, m in set((min(a, b), max(a, b), m) for a, b, m in edges):
        d = _gc(*coords[a], *coords[b])
        links[a].append((b, m, d))
        links[b].append((a, m, d))

    def rec(node, nodes, modes, dists):
        if node == dest:
            total = 0.0
            for d in dists:
                total += d
            yield total, tuple(nodes), tuple(modes)
            return
        for nxt, m, d in links[node]:
            if nxt in nodes:
                continue
            nodes.append(nxt)
            modes.append(m)
            dists.append(d)
            yield from rec(nxt, nodes, modes, dists)
            nodes.pop()
            modes.pop()
            dists.pop()

    yield from rec(origin, [origin], [], [])


def admissible_allowed(nodes, modes, allowed, transfer) -> bool:
    if any(m not in allowed for m in modes):
        return False
    for i in range(1, len(modes)):
        if modes[i] != modes[i - 1] and not transfer[nodes[i]]:
            return False
    return True


def admissible_legs(nodes, modes, legs, transfer) -> bool:
    """Mode sequence is legs[0]+ legs[1]+ ... with changes at transfer nodes."""
    runs = []
    for i, m in enumerate(modes):
        if not runs or runs[-1][0] != m:
            runs.append((m, i))
    if tuple(m for m, _ in runs) != tuple(legs):
        return False
    return all(transfer[nodes[start]] for _, start in runs[1:])


def brute_force_best(coords, transfer, edges, origin, dest, accept):
    """Best (length, nodes, modes) among admissible simple paths, or None."""
    best = None
    for cand in simple_paths(coords, transfer, edges, origin, dest):
        if not accept(cand[1], cand[2]):
            continue
        if best is None or cand < best:
            best = cand
    return best


def all_admissible(coords, transfer, edges, origin, dest, accept):
    return [c for c in simple_paths(coords, transfer, edges, origin, dest) if accept(c[1], c[2])]


def random_graph(rng: np.random.Generator, max_nodes: int = 10):
    """Small random network: coords, transfer flags, edge list."""
    n = int(rng.integers(3, max_nodes + 1))
    ids = [f"n{i}" for i in range(n)]
    coords = {}
    for nid in ids:
        coords[nid] = (float(rng.uniform(-1, 1) * 0.05), float(40 + rng.uniform(-1, 1) * 0.05))
    transfer = {nid: bool(rng.random() < 0.4) for nid in ids}
    modes = ("rail", "hh_truck", "barge")
    edges = []
    for i, j in product(range(n), range(n)):
        if i < j and rng.random() < 0.35:
            k = 1 if rng.random() < 0.8 else 2
            for m in rng.choice(modes, size=k, replace=False, p=(0.45, 0.4, 0.15)):
                edges.append((ids[i], ids[j], str(m)))
    return coords, transfer, edges
