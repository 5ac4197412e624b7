"""
Modelo para la ubicación de residencia inferida
"""
from enum import Enum

from pydantic import BaseModel


class HomeMethod(str, Enum):
    NIGHTTIME = "Nighttime"
    WEEKEND_FALLBACK = "WeekendFallback"


class HomeLocation(BaseModel):
    device_id: str
    ix: int
    iy: int
    lat: float
    lon: float
    method: HomeMethod
    support: int
