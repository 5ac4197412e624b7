from .geo import (
    EARTH_RADIUS_M, haversine, haversine_array, GridCell, LocalFrame, to_cell, to_cells,
    CellIndex, build_cell_index, TractLocator, point_in_tract
)
from .timeutils import resolve_timezone, local_calendar, LocalCalendar
from .parallel import map_ordered, chunked

__all__ = [
    "EARTH_RADIUS_M", "haversine", "haversine_array", "GridCell", "LocalFrame", "to_cell", "to_cells",
    "CellIndex", "build_cell_index", "TractLocator", "point_in_tract",
    "resolve_timezone", "local_calendar", "LocalCalendar",
    "map_ordered", "chunked",
]
