"""Segment-weighted versus whole-route density on a two-leg route.

A dense town sits at the apex where the two legs meet. The leg buffers
always overlap there (at least the end caps), the overlap is counted once
per leg, and the segment-weighted figure drifts above the whole-route one.
A half-angle of 90 degrees is a straight route through the apex.

    python scripts/density_divergence.py --width 800
"""

import argparse
import math
from dataclasses import asdict, dataclass

import numpy as np

from routevv.geo_core import EARTH_MEAN_RADIUS, RoutePolyline
from routevv.popgrid import PopulationGrid, density_segment_weighted, density_whole_route
from routevv.synth import GridSpec, synthetic_grid


@dataclass
class DivergenceConfig:
    width: float = 800.0
    leg_m: float = 4000.0
    town_peak: float = 20_000.0  # persons / km2 at the apex
    seed: int = 1
    angles: str = "5,10,15,20,30,45,60,90"  # half-angle between the legs, degrees


def offset(lon, lat, east_m, north_m):
    return (lon + math.degrees(east_m / (EARTH_MEAN_RADIUS * math.cos(math.radians(lat)))),
            lat + math.degrees(north_m / EARTH_MEAN_RADIUS))


def apex_grid(apex, cfg: DivergenceConfig) -> PopulationGrid:
    cs = math.degrees(cfg.width / 12 / EARTH_MEAN_RADIUS)
    half = math.degrees((cfg.leg_m + 2 * cfg.width) / EARTH_MEAN_RADIUS) * 1.6
    g = synthetic_grid(cfg.seed, (apex[0] - half, apex[1] - half, apex[0] + half, apex[1] + half),
                       GridSpec(cellsize=cs, margin_deg=0.0))
    lons = g.xll + (np.arange(g.ncols) + 0.5) * cs
    dx = np.radians(lons - apex[0])[None, :] * EARTH_MEAN_RADIUS * math.cos(math.radians(apex[1]))
    dy = np.radians(g.row_lats - apex[1])[:, None] * EARTH_MEAN_RADIUS
    town = cfg.town_peak * np.exp(-(dx**2 + dy**2) / (2 * (0.6 * cfg.width) ** 2))
    extra = g.cell_areas_m2()[:, None] / 1e6 * town
    return PopulationGrid(g.ncols, g.nrows, g.xll, g.yll, cs, g.nodata, g.day + extra, g.night + extra)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in asdict(DivergenceConfig()).items():
        ap.add_argument(f"--{name.replace('_', '-')}", type=type(default), default=default)
    cfg = DivergenceConfig(**vars(ap.parse_args()))
    apex = (-95.0, 40.0)
    grid = apex_grid(apex, cfg)

    print(f"w = {cfg.width:.0f} m, legs {cfg.leg_m / 1000:.1f} km, apex town peak {cfg.town_peak:.0f}/km2")
    print(f"{'half-angle':>10} {'whole /km2':>11} {'segment /km2':>13} {'gap':>7}")
    for half in (float(a) for a in cfg.angles.split(",")):
        ends = []
        for sign in (-1, 1):
            h = math.radians(90.0 + sign * half)
            ends.append(offset(*apex, cfg.leg_m * math.sin(h), cfg.leg_m * math.cos(h)))
        legs = [RoutePolyline.from_coords([ends[0], apex]), RoutePolyline.from_coords([apex, ends[1]])]
        whole = density_whole_route(grid, RoutePolyline.from_coords([ends[0], apex, ends[1]]), cfg.width)
        seg = density_segment_weighted(grid, legs, cfg.width)
        print(f"{half:>10.0f} {whole.density:>11.1f} {seg.density:>13.1f} {seg.density / whole.density - 1:>+7.1%}")


if __name__ == "__main__":
    main()
