"""
Modelo para métricas individuales de adquisición de alimentos
"""
from typing import Optional

from pydantic import BaseModel


class MetricsRecord(BaseModel):
    device_id: str
    category: str
    n_visits: int = 0
    n_unique_stores: int = 0
    mean_visited_euclid_m: Optional[float] = None
    mean_visited_network_m: Optional[float] = None
    min_visited_euclid_m: Optional[float] = None
    nearest_store_euclid_m: Optional[float] = None
    nearest_store_network_m: Optional[float] = None
    n_known_origin: int = 0
    n_home_based: int = 0
    home_based_share: Optional[float] = None


# Orden de columnas de metrics.csv
METRIC_FIELDS = [
    "n_visits",
    "n_unique_stores",
    "mean_visited_euclid_m",
    "mean_visited_network_m",
    "min_visited_euclid_m",
    "nearest_store_euclid_m",
    "nearest_store_network_m",
    "n_known_origin",
    "n_home_based",
    "home_based_share",
]
