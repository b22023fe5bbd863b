"""Seeded synthetic inputs: a modal network, a smooth day/night grid, origins."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geo_core import EARTH_MEAN_RADIUS
from .netroute import ModalNetwork, NetworkSpec, nearest_node, synthetic_network
from .popgrid import DEFAULT_NODATA, PopulationGrid


@dataclass(frozen=True)
class GridSpec:
    # 0.0007 deg is ~78 m north-south, under w/10 for the 800 m buffer.
    cellsize: float = 0.0007
    margin_deg: float = 0.06
    base_density: float = 40.0  # persons / km2
    n_towns: int = 14
    town_peak: tuple[float, float] = (300.0, 2500.0)  # persons / km2
    town_sigma_m: tuple[float, float] = (3000.0, 9000.0)
    day_shift: float = 0.25


@dataclass(frozen=True)
class DemoSuite:
    network: ModalNetwork
    grid: PopulationGrid
    origins: list[str]
    destination: str
    seed: int
    meta: dict = field(default_factory=dict)


def smooth_field(rng, lons, lats, spec: GridSpec, center) -> np.ndarray:
    """Persons/km2 on a (lat, lon) mesh: flat base + Gaussian towns."""
    lon_c, lat_c = center
    coslat = math.cos(math.radians(lat_c))
    x = EARTH_MEAN_RADIUS * np.radians(lons - lon_c) * coslat
    y = EARTH_MEAN_RADIUS * np.radians(lats - lat_c)
    dens = np.full(np.broadcast(x, y).shape, spec.base_density)
    half_x, half_y = float(np.ptp(x)) / 2, float(np.ptp(y)) / 2
    for _ in range(spec.n_towns):
        tx = rng.uniform(-half_x, half_x)
        ty = rng.uniform(-half_y, half_y)
        peak = rng.uniform(*spec.town_peak)
        sigma = rng.uniform(*spec.town_sigma_m)
        dens = dens + peak * np.exp(-((x - tx) ** 2 + (y - ty) ** 2) / (2 * sigma**2))
    return dens


def synthetic_grid(
    seed: int,
    bbox: tuple[float, float, float, float],
    spec: GridSpec | None = None,
) -> PopulationGrid:
    """Smooth population raster covering ``bbox`` (lon0, lat0, lon1, lat1) plus margin."""
    spec = spec or GridSpec()
    rng = np.random.default_rng(seed)
    lon0, lat0, lon1, lat1 = bbox
    xll = math.floor((lon0 - spec.margin_deg) / spec.cellsize) * spec.cellsize
    yll = math.floor((lat0 - spec.margin_deg) / spec.cellsize) * spec.cellsize
    ncols = int(math.ceil((lon1 + spec.margin_deg - xll) / spec.cellsize))
    nrows = int(math.ceil((lat1 + spec.margin_deg - yll) / spec.cellsize))
    xll, yll = round(xll, 10), round(yll, 10)

    lons = xll + (np.arange(ncols) + 0.5) * spec.cellsize
    lats = yll + (nrows - 1 - np.arange(nrows) + 0.5) * spec.cellsize
    center = ((lon0 + lon1) / 2, (lat0 + lat1) / 2)
    night_d = smooth_field(rng, lons[None, :], lats[:, None], spec, center)
    # Daytime population drifts towards a different set of centres.
    day_d = (1 - spec.day_shift) * night_d + spec.day_shift * smooth_field(
        rng, lons[None, :], lats[:, None], spec, center
    )

    top = np.radians(lats + spec.cellsize / 2)
    bot = np.radians(lats - spec.cellsize / 2)
    cell_km2 = EARTH_MEAN_RADIUS**2 * math.radians(spec.cellsize) * (np.sin(top) - np.sin(bot)) / 1e6
    day = np.round(day_d * cell_km2[:, None], 4)
    night = np.round(night_d * cell_km2[:, None], 4)
    return PopulationGrid(ncols, nrows, xll, yll, spec.cellsize, DEFAULT_NODATA, day, night)


def demo_suite(seed: int = 20200, n_origins: int = 100, net_spec: NetworkSpec | None = None,
               grid_spec: GridSpec | None = None) -> DemoSuite:
    """The bundled synthetic suite.

    ``n_origins`` connected origins are drawn at random, and every isolated
    node is added as well so the suite always carries routing failures.
    """
    net_spec = net_spec or NetworkSpec()
    net = synthetic_network(seed, net_spec)
    dest = nearest_node(net, *net_spec.center)
    rng = np.random.default_rng(seed + 1)
    connected = sorted(n for n in net.nodes if net.adj[n] and n != dest)
    isolated = sorted(n for n in net.nodes if not net.adj[n])
    picks = rng.choice(len(connected), size=min(n_origins, len(connected)), replace=False)
    origins = sorted(connected[i] for i in picks) + isolated

    lons = [n.point.lon for n in net.nodes.values()]
    lats = [n.point.lat for n in net.nodes.values()]
    grid = synthetic_grid(seed + 2, (min(lons), min(lats), max(lons), max(lats)), grid_spec)
    return DemoSuite(net, grid, origins, dest, seed, {"n_isolated": len(isolated)})
