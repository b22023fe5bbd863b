"""Route buffer population, density and distance, with a differential-verification harness."""

from .geo_core import (
    GeoPoint,
    ProjectedPoint,
    RoutePolyline,
    buffer_area,
    distance_point_to_route,
    from_web_mercator,
    geodesic_length,
    ground_corrected_length,
    in_buffer,
    planar_length_mercator,
    to_web_mercator,
)
from .popgrid import (
    PopulationGrid,
    PopulationTriplet,
    average_population,
    density_segment_weighted,
    density_whole_route,
    load_grid,
    zonal_population_area_weighted,
    zonal_population_centroid,
)

__version__ = "0.1.0"
