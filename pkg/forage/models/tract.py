"""
Modelo para sectores censales
"""
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict


class Tract(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tract_id: str
    # None cuando el GeoJSON no trae la propiedad population
    population: Optional[int] = None
    geometry: Any


class TractAggregate(BaseModel):
    """Promedios por sector censal de una categoría; diff = visitada - más cercana"""
    tract_id: str
    category: str
    n_sampled_homes: int = 0
    population: Optional[int] = None
    sampling_rate: Optional[float] = None
    mean_nearest_euclid_m: Optional[float] = None
    mean_visited_euclid_m: Optional[float] = None
    diff_euclid_m: Optional[float] = None
    mean_nearest_network_m: Optional[float] = None
    mean_visited_network_m: Optional[float] = None
    diff_network_m: Optional[float] = None
