"""
Modelos para establecimientos de alimentos y visitas
"""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field


class OutletCategory(str, Enum):
    LARGE_GROCERY = "LargeGrocery"
    BIG_BOX = "BigBox"
    SMALL_HEALTHY = "SmallHealthy"
    PROCESSED_FOOD = "ProcessedFood"


# Códigos de la columna category_code del catálogo
CATEGORY_CODES = {
    "LG": OutletCategory.LARGE_GROCERY,
    "BB": OutletCategory.BIG_BOX,
    "SH": OutletCategory.SMALL_HEALTHY,
    "PF": OutletCategory.PROCESSED_FOOD,
}

ALL_CATEGORY = "All"


class HomeBased(str, Enum):
    YES = "Yes"
    NO = "No"
    UNKNOWN_ORIGIN = "UnknownOrigin"


class FoodOutlet(BaseModel):
    outlet_id: str
    name: str
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float = Field(ge=-180.0, le=180.0)
    category: OutletCategory
    primary_food: bool
    radius_m: float = Field(gt=0)


class FoodVisit(BaseModel):
    visit_id: str
    device_id: str
    outlet_id: str
    stay_id: str
    start_ts: int
    end_ts: int
    distance_m: float
    category: OutletCategory
    primary_food: bool
    # Se completa después de la atribución (ver metrics.home_based_flag)
    home_based: Optional[HomeBased] = None
