"""
Modelo para estancias (stay points)
"""
from typing import Optional

from pydantic import BaseModel


def make_stay_id(device_id: str, start_ts: int) -> str:
    return f"{device_id}:{start_ts}"


class StayPoint(BaseModel):
    stay_id: str
    device_id: str
    lat: float
    lon: float
    start_ts: int
    end_ts: int
    n_pings: int
    origin_stay_id: Optional[str] = None

    @property
    def duration_min(self) -> float:
        return (self.end_ts - self.start_ts) / 60.0
