from .ping import DeviceTrack
from .outlet import (
    OutletCategory, CATEGORY_CODES, ALL_CATEGORY, HomeBased, FoodOutlet, FoodVisit
)
from .stay import StayPoint, make_stay_id
from .home import HomeMethod, HomeLocation
from .tract import Tract, TractAggregate
from .metrics import MetricsRecord, METRIC_FIELDS

__all__ = [
    "DeviceTrack",
    "OutletCategory", "CATEGORY_CODES", "ALL_CATEGORY", "HomeBased", "FoodOutlet", "FoodVisit",
    "StayPoint", "make_stay_id",
    "HomeMethod", "HomeLocation",
    "Tract", "TractAggregate",
    "MetricsRecord", "METRIC_FIELDS",
]
