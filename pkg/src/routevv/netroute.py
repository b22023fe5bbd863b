"""Multimodal network, minimum-distance routing and test-suite generation."""

from __future__ import annotations

import heapq
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geo_core import GeoPoint, RoutePolyline, haversine
from .route_io import (
    NETWORK_MODES,
    EdgeRow,
    NodeRow,
    RouteDocument,
    read_edges_csv,
    read_nodes_csv,
    write_edges_csv,
    write_nodes_csv,
)

BUFFER_WIDTHS = (800.0, 2500.0)

# Tried top to bottom; each rung lists its legs in travel order.
MODE_LADDER: tuple[tuple[str, ...], ...] = (
    ("rail",),
    ("hh_truck", "rail"),
    ("hh_truck",),
    ("barge", "rail"),
)


class UnknownNodeError(KeyError):
    pass


class DegenerateRouteError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    point: GeoPoint
    transfer: bool = False


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    mode: str
    length: float


class ModalNetwork:
    """Undirected graph whose edges carry a transport mode.

    Edge lengths are always derived geodesically from node coordinates.
    Parallel edges with different modes are allowed.
    """

    def __init__(self, nodes: Iterable[Node], edges: Iterable[tuple[str, str, str]]):
        self.nodes: dict[str, Node] = {}
        for n in nodes:
            if n.id in self.nodes:
                raise ValueError(f"duplicate node id {n.id!r}")
            self.nodes[n.id] = n
        self.edges: list[Edge] = []
        self.adj: dict[str, list[tuple[str, str, float]]] = {nid: [] for nid in self.nodes}
        seen = set()
        for a, b, mode in edges:
            if a not in self.nodes or b not in self.nodes:
                raise UnknownNodeError(f"edge {a}-{b} references an unknown node")
            if a == b:
                raise ValueError(f"self-loop edge at {a!r}")
            if mode not in NETWORK_MODES:
                raise ValueError(f"unknown mode {mode!r}")
            key = (min(a, b), max(a, b), mode)
            if key in seen:
                continue
            seen.add(key)
            pa, pb = self.nodes[a].point, self.nodes[b].point
            length = float(haversine(pa.lon, pa.lat, pb.lon, pb.lat))
            if not length > 0:
                raise ValueError(f"edge {a}-{b} has zero length")
            self.edges.append(Edge(a, b, mode, length))
            self.adj[a].append((b, mode, length))
            self.adj[b].append((a, mode, length))
        for nbrs in self.adj.values():
            nbrs.sort()

    @classmethod
    def from_csv(cls, nodes_path, edges_path) -> ModalNetwork:
        nodes = [Node(r.id, GeoPoint(r.lon, r.lat), r.transfer) for r in read_nodes_csv(nodes_path)]
        return cls(nodes, [(e.source, e.target, e.mode) for e in read_edges_csv(edges_path)])

    def to_csv(self, nodes_path, edges_path) -> None:
        write_nodes_csv(
            nodes_path,
            (NodeRow(n.id, n.point.lon, n.point.lat, n.transfer) for n in self.nodes.values()),
        )
        write_edges_csv(edges_path, (EdgeRow(e.a, e.b, e.mode) for e in self.edges))

    def _require(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node_id!r}") from None


# ----------------------------------------------------------------------------
# Routing
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    modes: tuple[str, ...]
    length: float

    def polyline(self, net: ModalNetwork) -> RoutePolyline:
        return RoutePolyline(tuple(net.nodes[n].point for n in self.nodes), self.modes)


def _search(net: ModalNetwork, origin: str, dest: str, step, start_state, done) -> Path | None:
    """Shortest node-simple path through (node, automaton state) space.

    ``step(node, state, mode)`` returns the next automaton state, or None when
    the edge is not admissible. The destination is absorbing. Ties go to the
    lexicographically smallest node sequence, then mode sequence.
    """
    path = _dijkstra(net, origin, dest, step, start_state, done)
    if path is None or len(set(path.nodes)) == len(path.nodes):
        return path
    # The unconstrained optimum revisits a node (possible when a mode change
    # is forced to a transfer node off the direct line). Fall back to an exact
    # best-first search over simple paths, bounded by state-space distances.
    return _simple_search(net, origin, dest, step, start_state, done)


def _dijkstra(net, origin, dest, step, start_state, done) -> Path | None:
    start = (origin, start_state)
    heap = [(0.0, (origin,), (), start)]
    settled: set = set()
    best: dict = {start: (0.0, (origin,), ())}
    while heap:
        dist, seq, modes, key = heapq.heappop(heap)
        if key in settled:
            continue
        settled.add(key)
        node, state = key
        if node == dest:
            if done(state):
                return Path(seq, modes, dist)
            continue
        for nbr, mode, length in net.adj[node]:
            nstate = step(node, state, mode)
            if nstate is None:
                continue
            nkey = (nbr, nstate)
            if nkey in settled:
                continue
            cand = (dist + length, seq + (nbr,), modes + (mode,))
            old = best.get(nkey)
            if old is None or cand < old:
                best[nkey] = cand
                heapq.heappush(heap, (*cand, nkey))
    return None


def _simple_search(net, origin, dest, step, start_state, done) -> Path | None:
    start = (origin, start_state)
    # Explicit reachable state graph, then exact distance-to-goal per state.
    reverse: dict = {}
    goals = []
    stack = [start]
    seen = {start}
    while stack:
        key = stack.pop()
        node, state = key
        if node == dest:
            if done(state):
                goals.append(key)
            continue
        for nbr, mode, length in net.adj[node]:
            nstate = step(node, state, mode)
            if nstate is None:
                continue
            nkey = (nbr, nstate)
            reverse.setdefault(nkey, []).append((key, length))
            if nkey not in seen:
                seen.add(nkey)
                stack.append(nkey)
    h = {g: 0.0 for g in goals}
    # A counter keeps states (whose automaton part may be None) out of comparisons.
    tick = itertools.count()
    heap = [(0.0, next(tick), g) for g in goals]
    while heap:
        d, _, key = heapq.heappop(heap)
        if d > h.get(key, math.inf):
            continue
        for prev, length in reverse.get(key, ()):
            nd = d + length
            if nd < h.get(prev, math.inf):
                h[prev] = nd
                heapq.heappush(heap, (nd, next(tick), prev))
    if start not in h:
        return None

    # A* over partial simple paths; h is a lower bound on any completion.
    heap = [(h[start], (origin,), (), 0.0, start)]
    while heap:
        _, seq, modes, g, key = heapq.heappop(heap)
        node, state = key
        if node == dest:
            return Path(seq, modes, g)
        visited = set(seq)
        for nbr, mode, length in net.adj[node]:
            if nbr in visited:
                continue
            nstate = step(node, state, mode)
            if nstate is None:
                continue
            nkey = (nbr, nstate)
            if nkey not in h:
                continue
            ng = g + length
            # Goals carry their exact length so equal-length ties resolve by sequence.
            f = ng if nkey[0] == dest else ng + h[nkey]
            heapq.heappush(heap, (f, seq + (nbr,), modes + (mode,), ng, nkey))
    return None


def _check_pair(net: ModalNetwork, origin: str, dest: str) -> None:
    net._require(origin)
    net._require(dest)
    if origin == dest:
        raise DegenerateRouteError(f"origin and destination are both {origin!r}")


def shortest_path(net: ModalNetwork, origin: str, dest: str, allowed_modes: Iterable[str]) -> Path | None:
    """Minimum-length path over edges of the allowed modes, or None.

    Mode changes happen only at transfer nodes; the origin may start in any
    allowed mode. Equal lengths are broken by the lexicographically smallest
    node-id sequence, then mode sequence.
    """
    _check_pair(net, origin, dest)
    allowed = frozenset(allowed_modes)

    def step(node, arrived, mode):
        if mode not in allowed:
            return None
        if arrived is not None and mode != arrived and not net.nodes[node].transfer:
            return None
        return mode

    return _search(net, origin, dest, step, None, lambda state: True)


def shortest_leg_path(net: ModalNetwork, origin: str, dest: str, legs: Sequence[str]) -> Path | None:
    """Minimum-length path travelling the modes of ``legs`` in order.

    Each leg is a nonempty run of one mode; the hand-over from one leg to
    the next happens at a transfer node. ``("hh_truck", "rail")`` is a
    heavy-haul drayage leg followed by rail to the destination.
    """
    _check_pair(net, origin, dest)
    legs = tuple(legs)
    if not legs:
        raise ValueError("at least one leg is required")

    def step(node, phase, mode):
        if phase >= 0 and mode == legs[phase]:
            return phase
        nxt = phase + 1
        if nxt < len(legs) and mode == legs[nxt] and (phase < 0 or net.nodes[node].transfer):
            return nxt
        return None

    return _search(net, origin, dest, step, -1, lambda phase: phase == len(legs) - 1)


def shortest_route(net: ModalNetwork, origin: str, dest: str, allowed_modes: Iterable[str]) -> RoutePolyline | None:
    path = shortest_path(net, origin, dest, allowed_modes)
    return None if path is None else path.polyline(net)


@dataclass(frozen=True)
class RoutingOutcome:
    origin: str
    dest: str
    mode_set: frozenset[str] | None
    path: Path | None
    route: RoutePolyline | None

    @property
    def failed(self) -> bool:
        return self.route is None


def route_with_mode_priority(
    net: ModalNetwork, origin: str, dest: str, ladder: Sequence[tuple[str, ...]] = MODE_LADDER
) -> RoutingOutcome:
    """First rung of the mode ladder that yields a route wins.

    Multi-mode rungs are ordered legs, each of which must be used, so the
    truck-only rung stays reachable after truck-to-rail fails.
    """
    for rung in ladder:
        path = shortest_leg_path(net, origin, dest, rung)
        if path is not None:
            return RoutingOutcome(origin, dest, frozenset(rung), path, path.polyline(net))
    return RoutingOutcome(origin, dest, None, None, None)


# ----------------------------------------------------------------------------
# Test suites
# ----------------------------------------------------------------------------


def mode_set_label(modes: Iterable[str] | None) -> str | None:
    if modes is None:
        return None
    order = {m: i for i, m in enumerate(NETWORK_MODES)}
    return "+".join(sorted(modes, key=lambda m: order.get(m, 99)))


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    id: str
    origin: str
    destination: str
    width: float
    mode_set: tuple[str, ...] | None = None
    kml: str | None = None
    grid: dict[str, str] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.width not in BUFFER_WIDTHS:
            raise ValueError(f"buffer width {self.width} not in {BUFFER_WIDTHS}")

    @property
    def failed(self) -> bool:
        return self.mode_set is None

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "origin": self.origin,
            "destination": self.destination,
            "width": self.width,
            "mode_set": list(self.mode_set) if self.mode_set is not None else None,
            "status": "failed" if self.failed else "ok",
        }
        if self.kml is not None:
            out["kml"] = self.kml
        if self.grid is not None:
            out["grid"] = dict(self.grid)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> TestCase:
        status = obj.get("status", "ok")
        mode_set = obj.get("mode_set")
        if status == "failed":
            mode_set = None
        elif mode_set is None:
            raise ValueError(f"case {obj.get('id')!r}: ok status without a mode_set")
        return cls(
            id=str(obj["id"]),
            origin=str(obj["origin"]),
            destination=str(obj["destination"]),
            width=float(obj["width"]),
            mode_set=tuple(mode_set) if mode_set is not None else None,
            kml=obj.get("kml"),
            grid=obj.get("grid"),
        )


def case_id(origin: str, width: float) -> str:
    return f"{origin}-{int(width) if float(width).is_integer() else width}"


def generate_test_suite(
    net: ModalNetwork,
    origins: Sequence[str],
    dest: str,
    widths: Sequence[float] = BUFFER_WIDTHS,
) -> list[tuple[TestCase, RouteDocument | None]]:
    """Route each origin once and emit one case per buffer width."""
    if not origins:
        raise ValueError("no origins given")
    net._require(dest)
    out: list[tuple[TestCase, RouteDocument | None]] = []
    seen: set[str] = set()
    for origin in origins:
        outcome = route_with_mode_priority(net, origin, dest)
        modes = None if outcome.failed else tuple(sorted(outcome.mode_set, key=NETWORK_MODES.index))
        for w in widths:
            cid = case_id(origin, w)
            if cid in seen:
                raise ValueError(f"duplicate test case id {cid!r}")
            seen.add(cid)
            case = TestCase(cid, origin, dest, float(w), modes)
            doc = None
            if not outcome.failed:
                doc = RouteDocument(
                    cid,
                    outcome.route,
                    {
                        "origin": origin,
                        "destination": dest,
                        "mode_plan": mode_set_label(modes),
                        "buffer_width_m": repr(float(w)),
                    },
                )
            out.append((case, doc))
    return out


def write_manifest(path, cases: Iterable[TestCase]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cases:
            fh.write(json.dumps(c.to_json(), sort_keys=True) + "\n")


def read_manifest(path) -> list[TestCase]:
    cases = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                cases.append(TestCase.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{os.fspath(path)}:{n}: bad manifest entry: {exc}") from None
    ids = [c.id for c in cases]
    if len(ids) != len(set(ids)):
        raise ValueError(f"{os.fspath(path)}: duplicate case ids")
    return cases


# ----------------------------------------------------------------------------
# Synthetic networks
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkSpec:
    """Parameters of the seeded synthetic network generator."""

    center: tuple[float, float] = (-98.5, 39.0)
    extent_deg: tuple[float, float] = (0.6, 0.45)
    n_nodes: int = 260
    min_separation_m: float = 1500.0
    max_edge_m: float = 8000.0
    rail_share: float = 0.4
    truck_share: float = 0.45
    transfer_share: float = 0.25
    n_isolated: int = 3


def synthetic_network(seed: int, spec: NetworkSpec | None = None) -> ModalNetwork:
    """Random planar network: Delaunay edges, random mode layers, one river."""
    from scipy.spatial import Delaunay

    spec = spec or NetworkSpec()
    rng = np.random.default_rng(seed)
    lon_c, lat_c = spec.center
    half_lon, half_lat = spec.extent_deg[0] / 2, spec.extent_deg[1] / 2

    pts: list[tuple[float, float]] = []
    tries = 0
    while len(pts) < spec.n_nodes and tries < spec.n_nodes * 200:
        tries += 1
        lon = lon_c + rng.uniform(-half_lon, half_lon)
        lat = lat_c + rng.uniform(-half_lat, half_lat)
        if pts:
            arr = np.array(pts)
            if np.min(haversine(arr[:, 0], arr[:, 1], lon, lat)) < spec.min_separation_m:
                continue
        pts.append((round(lon, 6), round(lat, 6)))
    arr = np.array(pts)
    n_connected = len(pts) - spec.n_isolated

    tri = Delaunay(arr[:n_connected])
    pairs = set()
    for simplex in tri.simplices:
        for i in range(3):
            a, b = sorted((int(simplex[i]), int(simplex[(i + 1) % 3])))
            pairs.add((a, b))
    pairs = sorted(
        p for p in pairs if haversine(arr[p[0], 0], arr[p[0], 1], arr[p[1], 0], arr[p[1], 1]) <= spec.max_edge_m
    )

    ids = [f"N{i:03d}" for i in range(len(pts))]
    transfer = rng.random(len(pts)) < spec.transfer_share
    nodes = [Node(ids[i], GeoPoint(*pts[i]), bool(transfer[i])) for i in range(len(pts))]

    edges = []
    for a, b in pairs:
        if rng.random() < spec.rail_share:
            edges.append((ids[a], ids[b], "rail"))
        if rng.random() < spec.truck_share:
            edges.append((ids[a], ids[b], "hh_truck"))

    # A river: a west-east chain of Delaunay edges following a gentle meander.
    adj: dict[int, list[int]] = {}
    for a, b in pairs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    river_lat = lat_c + half_lat * 0.4
    here = int(np.argmin(np.abs(arr[:n_connected, 0] - (lon_c - half_lon)) + np.abs(arr[:n_connected, 1] - river_lat)))
    visited = {here}
    while True:
        ahead = [n for n in adj.get(here, []) if n not in visited and arr[n, 0] > arr[here, 0]]
        if not ahead:
            break
        phase = (arr[here, 0] - lon_c) / half_lon * math.pi
        target = river_lat + 0.15 * half_lat * math.sin(phase)
        nxt = min(ahead, key=lambda n: abs(arr[n, 1] - target) - 0.5 * (arr[n, 0] - arr[here, 0]))
        edges.append((ids[here], ids[nxt], "barge"))
        visited.add(nxt)
        here = nxt
    return ModalNetwork(nodes, edges)


def nearest_node(net: ModalNetwork, lon: float, lat: float, connected: bool = True) -> str:
    ids = [nid for nid in sorted(net.nodes) if not connected or net.adj[nid]]
    lons = np.array([net.nodes[i].point.lon for i in ids])
    lats = np.array([net.nodes[i].point.lat for i in ids])
    return ids[int(np.argmin(haversine(lons, lats, lon, lat)))]
