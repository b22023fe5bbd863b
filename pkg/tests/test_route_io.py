import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import R_MEAN
from routevv.geo_core import GeoDomainError, RoutePolyline
from routevv.route_io import (
    ABERRATION_KINDS,
    DISCONTINUITY,
    DUPLICATE_VERTEX,
    SELF_INTERSECTION,
    SPIKE,
    AberrationThresholds,
    EmptyRouteError,
    KmlError,
    NetworkFileError,
    RouteDocument,
    parse_kml,
    read_edges_csv,
    read_nodes_csv,
    serialize_kml,
    validate_geometry,
)

KML = """<?xml version="1.0" encoding="UTF-8"?>
<kml xmlns="http://www.opengis.net/kml/2.2"><Document><name>case-7</name>
<Placemark><name>leg</name><LineString><coordinates>{}</coordinates></LineString></Placemark>
</Document></kml>"""


def offset(lon, lat, east_m, north_m):
    return (
        lon + math.degrees(east_m / (R_MEAN * math.cos(math.radians(lat)))),
        lat + math.degrees(north_m / R_MEAN),
    )


def walk(rng, n, lon=-100.0, lat=38.0, leg=(300.0, 3000.0), turn=0.6):
    """Clean random route heading roughly east: no spikes, jumps or crossings."""
    pts = [(lon, lat)]
    heading = 0.0
    for _ in range(n - 1):
        heading = float(np.clip(heading + rng.uniform(-turn, turn), -1.0, 1.0))
        d = rng.uniform(*leg)
        pts.append(offset(*pts[-1], d * math.cos(heading), d * math.sin(heading)))
    return pts


def random_route(rng, n=None):
    n = n or int(rng.integers(2, 30))
    pts = walk(rng, n, lon=float(rng.uniform(-170, 170)), lat=float(rng.uniform(-70, 70)))
    modes = [str(m) for m in rng.choice(["rail", "hh_truck", "barge"], size=n - 1)]
    return RoutePolyline.from_coords(pts, modes)


# ----------------------------------------------------------------------------
# KML
# ----------------------------------------------------------------------------


def test_minimal_kml():
    doc = parse_kml(KML.format("-104.5,39.7,0 -104.4,39.8"))
    assert doc.id == "case-7"
    assert [(v.lon, v.lat) for v in doc.route.vertices] == [(-104.5, 39.7), (-104.4, 39.8)]


def test_bare_namespace_and_multiple_linestrings():
    text = """<kml><Document><name>x</name>
    <Placemark><LineString><coordinates>0,0 1,0</coordinates></LineString></Placemark>
    <Placemark><LineString><coordinates>1,0 2,0</coordinates></LineString></Placemark>
    </Document></kml>"""
    doc = parse_kml(text)
    assert [v.lon for v in doc.route.vertices] == [0, 1, 2]


def test_kml_errors():
    with pytest.raises(EmptyRouteError):
        parse_kml("<kml><Document><name>x</name></Document></kml>")
    with pytest.raises(KmlError) as exc:
        parse_kml(KML.format("1,2 3"))
    assert "coordinates" in str(exc.value)
    with pytest.raises(GeoDomainError):
        parse_kml(KML.format("0,0 0,95"))
    with pytest.raises(KmlError):
        parse_kml("<kml><Document>")


def test_two_vertex_route_serializes_to_one_linestring():
    doc = RouteDocument("r1", RoutePolyline.from_coords([(0, 0), (1, 1)]), {})
    text = serialize_kml(doc)
    assert text.count("<LineString>") == 1
    assert "0.000000000,0.000000000" in text


def test_mode_runs_become_placemarks():
    route = RoutePolyline.from_coords([(0, 0), (0.1, 0), (0.2, 0), (0.3, 0)], ["rail", "rail", "hh_truck"])
    text = serialize_kml(RouteDocument("r", route, {}))
    assert text.count("<Placemark>") == 2
    back = parse_kml(text)
    assert back.route.segment_modes == ("rail", "rail", "hh_truck")


def test_round_trip_hundred_routes():
    rng = np.random.default_rng(8)
    for i in range(100):
        route = random_route(rng)
        meta = {"origin": f"o{i}", "destination": "d", "buffer_width_m": "800.0"}
        doc = RouteDocument(f"case-{i}", route, meta)
        back = parse_kml(serialize_kml(doc))
        assert back.id == doc.id
        assert back.metadata == meta
        assert back.route.segment_modes == route.segment_modes
        for a, b in zip(back.route.vertices, route.vertices):
            assert abs(a.lon - b.lon) < 1e-9 and abs(a.lat - b.lat) < 1e-9
        assert len(back.route.vertices) == len(route.vertices)
        assert serialize_kml(back) == serialize_kml(doc)


# ----------------------------------------------------------------------------
# Geometry validation
# ----------------------------------------------------------------------------


def kinds(route, thresholds=None):
    return Counter(a.kind for a in validate_geometry(route, thresholds))


def test_duplicate_vertex():
    r = RoutePolyline.from_coords([(0, 0), (0.01, 0), (0.01, 0), (0.02, 0)])
    found = validate_geometry(r)
    assert [(a.kind, a.location) for a in found] == [(DUPLICATE_VERTEX, (2,))]


def test_zero_length_route_is_reported_not_raised():
    r = RoutePolyline.from_coords([(5, 5), (5, 5)])
    assert kinds(r) == {DUPLICATE_VERTEX: 1}


def test_back_and_forth_spike():
    a = (10.0, 45.0)
    b = offset(*a, 50, 0)
    start = offset(*a, -2000, 0)
    r = RoutePolyline.from_coords([start, a, b, a, offset(*a, 0, 2000)])
    found = [x for x in validate_geometry(r) if x.kind == SPIKE]
    assert [x.location for x in found] == [(2,)]
    assert found[0].measure == pytest.approx(180.0, abs=1e-6)


def test_long_jump():
    r = RoutePolyline.from_coords([(0, 0), (0.01, 0), (0.3, 0)])
    found = validate_geometry(r)
    assert [(a.kind, a.location) for a in found] == [(DISCONTINUITY, (1,))]
    assert found[0].measure > 10_000


def test_figure_eight_names_the_pair():
    p0 = (0.0, 0.0)
    pts = [p0, offset(*p0, 2000, 0), offset(*p0, 2000, 1000), offset(*p0, 1000, 1000), offset(*p0, 1000, -1000)]
    found = validate_geometry(RoutePolyline.from_coords(pts))
    assert [(a.kind, a.location) for a in found] == [(SELF_INTERSECTION, (0, 3))]


def test_thresholds_are_configurable():
    r = RoutePolyline.from_coords([(0, 0), (0.05, 0)])  # ~5.6 km leg
    assert not kinds(r)
    assert kinds(r, AberrationThresholds(jump_m=5000)) == {DISCONTINUITY: 1}


def inject(kind, rng, pts):
    """Insert one aberration of ``kind`` into a clean vertex list."""
    pts = list(pts)
    i = int(rng.integers(1, len(pts) - 1))
    if kind == DUPLICATE_VERTEX:
        pts.insert(i, pts[i])
    elif kind == SPIKE:
        tip = offset(*pts[i], float(rng.uniform(10, 90)), float(rng.uniform(-5, 5)))
        pts[i + 1:i + 1] = [tip, pts[i]]
    elif kind == DISCONTINUITY:
        shift = float(rng.uniform(11_000, 40_000))
        head = pts[: i + 1]
        tail = [offset(lon, lat, shift, 0) for lon, lat in pts[i + 1:]]
        pts = head + tail
    elif kind == SELF_INTERSECTION:
        a = pts[i]
        loop = [offset(*a, 1500, 0), offset(*a, 1500, 800), offset(*a, 700, 800), offset(*a, 700, -800)]
        tail = [offset(lon, lat, 0, -1600) for lon, lat in pts[i + 1:]]
        pts = pts[: i + 1] + loop + [offset(*a, 2500, -800)] + [offset(lon, lat, 2500, 0) for lon, lat in tail]
    return pts


@pytest.mark.parametrize("kind", [DUPLICATE_VERTEX, SPIKE, DISCONTINUITY, SELF_INTERSECTION])
def test_injected_aberrations_detected(kind):
    rng = np.random.default_rng(ABERRATION_KINDS.index(kind))
    for _ in range(25):
        pts = inject(kind, rng, walk(rng, int(rng.integers(4, 15)), leg=(300, 2000)))
        assert kind in kinds(RoutePolyline.from_coords(pts)), pts


def test_clean_routes_have_no_findings():
    rng = np.random.default_rng(4)
    for _ in range(100):
        r = RoutePolyline.from_coords(walk(rng, int(rng.integers(2, 40))))
        assert validate_geometry(r) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([DUPLICATE_VERTEX, SPIKE, DISCONTINUITY, SELF_INTERSECTION, None]))
def test_validation_invariant_under_reversal(seed, kind):
    rng = np.random.default_rng(seed)
    pts = walk(rng, int(rng.integers(4, 12)), leg=(300, 2000))
    if kind is not None:
        pts = inject(kind, rng, pts)
    r = RoutePolyline.from_coords(pts)
    assert kinds(r) == kinds(r.reversed())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_clean_route_stays_clean_after_densification(seed):
    rng = np.random.default_rng(seed)
    r = RoutePolyline.from_coords(walk(rng, int(rng.integers(2, 20)), leg=(300, 3000)))
    assert validate_geometry(r) == []
    assert validate_geometry(r.densified()) == []


# ----------------------------------------------------------------------------
# Network files
# ----------------------------------------------------------------------------


def test_network_csv(tmp_path):
    (tmp_path / "nodes.csv").write_text("id,lon,lat,transfer\nA,0,0,1\nB,0.1,0,0\n")
    (tmp_path / "edges.csv").write_text("from,to,mode\nA,B,rail\n")
    nodes = read_nodes_csv(tmp_path / "nodes.csv")
    assert [(n.id, n.transfer) for n in nodes] == [("A", True), ("B", False)]
    assert read_edges_csv(tmp_path / "edges.csv")[0].mode == "rail"


@pytest.mark.parametrize(
    "nodes,edges",
    [
        ("id,lon,lat\nA,0,0\n", "from,to,mode\n"),
        ("id,lon,lat,transfer\nA,0,0,2\n", "from,to,mode\n"),
        ("id,lon,lat,transfer\nA,x,0,0\n", "from,to,mode\n"),
        ("id,lon,lat,transfer\nA,0,0,0\n", "from,to,mode\nA,B,ship\n"),
    ],
)
def test_bad_network_files(tmp_path, nodes, edges):
    (tmp_path / "nodes.csv").write_text(nodes)
    (tmp_path / "edges.csv").write_text(edges)
    with pytest.raises(NetworkFileError):
        read_nodes_csv(tmp_path / "nodes.csv")
        read_edges_csv(tmp_path / "edges.csv")
