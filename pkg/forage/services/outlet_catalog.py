"""
Catálogo de establecimientos de alimentos y atribución de visitas
"""
import logging
from functools import partial
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from forage.models.outlet import FoodOutlet, FoodVisit, OutletCategory
from forage.models.stay import StayPoint
from forage.utils.geo import CellIndex, build_cell_index
from forage.utils.parallel import chunked, map_ordered

logger = logging.getLogger(__name__)

_DEFAULT_RADII = {
    OutletCategory.LARGE_GROCERY: 150.0,
    OutletCategory.BIG_BOX: 200.0,
    OutletCategory.SMALL_HEALTHY: 50.0,
    OutletCategory.PROCESSED_FOOD: 50.0,
}


def category_defaults(category: OutletCategory) -> float:
    """Radio de atribución por defecto (metros) para una categoría"""
    return _DEFAULT_RADII[OutletCategory(category)]


class OutletCatalog:
    """Catálogo inmutable, ordenado por outlet_id"""

    def __init__(self, outlets: Iterable[FoodOutlet]):
        self.outlets: List[FoodOutlet] = sorted(outlets, key=lambda o: o.outlet_id)
        self.lat = np.array([o.lat for o in self.outlets], dtype=np.float64)
        self.lon = np.array([o.lon for o in self.outlets], dtype=np.float64)
        self.radius = np.array([o.radius_m for o in self.outlets], dtype=np.float64)
        self._pos = {o.outlet_id: i for i, o in enumerate(self.outlets)}
        self._index: Optional[CellIndex] = None

    def __len__(self) -> int:
        return len(self.outlets)

    def __iter__(self):
        return iter(self.outlets)

    def __contains__(self, outlet_id: str) -> bool:
        return outlet_id in self._pos

    def position(self, outlet_id: str) -> int:
        return self._pos[outlet_id]

    def get(self, outlet_id: str) -> FoodOutlet:
        return self.outlets[self._pos[outlet_id]]

    def categories(self) -> List[OutletCategory]:
        """Categorías presentes, en el orden del enum"""
        present = {o.category for o in self.outlets}
        return [c for c in OutletCategory if c in present]

    def of_category(self, category: OutletCategory) -> "OutletCatalog":
        return OutletCatalog(o for o in self.outlets if o.category == category)

    def build_index(self, max_radius_m: float = 1000.0, cell_m: float = 250.0) -> CellIndex:
        if self._index is None or self._index.max_radius_m != max_radius_m:
            self._index = build_cell_index(self.lat, self.lon, cell_m=cell_m, max_radius_m=max_radius_m)
        return self._index

    def with_radii(self, radii: Dict[OutletCategory, float]) -> "OutletCatalog":
        return OutletCatalog(o.model_copy(update={"radius_m": float(radii[o.category])}) for o in self.outlets)


def _nearest_outlet(stay: StayPoint, catalog: OutletCatalog, index: CellIndex,
                    radius_override: Optional[float]) -> Optional[FoodVisit]:
    search_r = radius_override if radius_override is not None else float(catalog.radius.max())
    pos, dist = index.query_within((stay.lat, stay.lon), search_r)
    if pos.size == 0:
        return None
    if radius_override is None:
        ok = dist <= catalog.radius[pos]
        pos, dist = pos[ok], dist[ok]
        if pos.size == 0:
            return None
    # menor distancia; empate -> menor outlet_id (pos ya sigue el orden de outlet_id)
    best = int(np.lexsort((pos, dist))[0])
    outlet = catalog.outlets[int(pos[best])]
    return FoodVisit(
        visit_id=f"v:{stay.stay_id}",
        device_id=stay.device_id,
        outlet_id=outlet.outlet_id,
        stay_id=stay.stay_id,
        start_ts=stay.start_ts,
        end_ts=stay.end_ts,
        distance_m=float(dist[best]),
        category=outlet.category,
        primary_food=outlet.primary_food,
    )


def _attribute_chunk(stays: Sequence[StayPoint], catalog: OutletCatalog, index: CellIndex,
                     radius_override: Optional[float]) -> List[FoodVisit]:
    visits = []
    for stay in stays:
        visit = _nearest_outlet(stay, catalog, index, radius_override)
        if visit is not None:
            visits.append(visit)
    return visits


def attribute_visits(
    stays: Sequence[StayPoint],
    catalog: OutletCatalog,
    index: Optional[CellIndex] = None,
    radius_override: Optional[float] = None,
    workers: int = 1,
) -> List[FoodVisit]:
    """
    Atribuye cada estancia al establecimiento más cercano dentro de su radio.

    Args:
        stays: Estancias candidatas (ya filtradas a <= 120 min)
        catalog: Catálogo de establecimientos
        index: Índice de celdas sobre el catálogo (se construye si es None)
        radius_override: Radio uniforme para todas las categorías
        workers: Procesos para repartir las estancias

    Returns:
        A lo sumo una visita por estancia, ordenadas por stay_id
    """
    if not stays or len(catalog) == 0:
        return []
    if index is None:
        index = catalog.build_index()

    work = partial(_attribute_chunk, catalog=catalog, index=index, radius_override=radius_override)
    parts = map_ordered(work, chunked(list(stays), workers * 4), workers=workers)
    visits = [v for part in parts for v in part]
    visits.sort(key=lambda v: v.stay_id)

    logger.info(f"🛒 {len(visits)} visitas atribuidas de {len(stays)} estancias candidatas")
    return visits


def filter_primary(items: Union[OutletCatalog, Sequence[FoodVisit]], primary_only: bool):
    """Conserva solo establecimientos/visitas de venta primaria de alimentos"""
    if not primary_only:
        return items
    if isinstance(items, OutletCatalog):
        return OutletCatalog(o for o in items if o.primary_food)
    return [v for v in items if v.primary_food]
