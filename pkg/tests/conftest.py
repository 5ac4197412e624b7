import os
import sys
from datetime import date

import numpy as np
import pytest

# Agregar el directorio del proyecto al path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from forage.core.config import StudyConfig, SynthParams
from forage.models.outlet import FoodOutlet, OutletCategory
from forage.models.ping import DeviceTrack
from forage.models.stay import StayPoint, make_stay_id
from forage.services.outlet_catalog import category_defaults
from forage.utils.geo import LocalFrame
from forage.utils.timeutils import local_midnight_ts, resolve_timezone

BASE_LAT = 30.30
BASE_LON = -81.60
NEW_YORK = "America/New_York"


@pytest.fixture
def study():
    return StudyConfig()


@pytest.fixture
def frame():
    """Marco local centrado en el punto base de los fixtures"""
    return LocalFrame(BASE_LAT, BASE_LON)


@pytest.fixture
def zone():
    return resolve_timezone(NEW_YORK)


def at(frame: LocalFrame, east_m: float = 0.0, north_m: float = 0.0):
    """Punto (lat, lon) desplazado en metros desde el punto base"""
    return frame.offset(BASE_LAT, BASE_LON, east_m, north_m)


def local_ts(day: date, hour: float, zone) -> int:
    return local_midnight_ts(day, zone) + int(round(hour * 3600))


def make_track(device_id: str, rows) -> DeviceTrack:
    """rows: iterable de (ts, lat, lon) ordenado por ts"""
    rows = list(rows)
    return DeviceTrack(
        device_id=device_id,
        ts=np.array([r[0] for r in rows], dtype=np.int64),
        lat=np.array([r[1] for r in rows], dtype=np.float64),
        lon=np.array([r[2] for r in rows], dtype=np.float64),
    )


def make_outlet(outlet_id: str, point, category=OutletCategory.SMALL_HEALTHY, primary_food=True, radius_m=None):
    return FoodOutlet(
        outlet_id=outlet_id,
        name=f"store {outlet_id}",
        lat=point[0],
        lon=point[1],
        category=category,
        primary_food=primary_food,
        radius_m=radius_m if radius_m is not None else category_defaults(category),
    )


def make_stay(device_id: str, point, start_ts: int, minutes: float = 30.0, origin=None, n_pings=10) -> StayPoint:
    return StayPoint(
        stay_id=make_stay_id(device_id, start_ts),
        device_id=device_id,
        lat=point[0],
        lon=point[1],
        start_ts=start_ts,
        end_ts=start_ts + int(minutes * 60),
        n_pings=n_pings,
        origin_stay_id=origin,
    )


@pytest.fixture
def small_synth():
    """Mundo sintético pequeño y sin ruido"""
    return SynthParams(
        n_devices=6,
        n_outlets_per_category=3,
        grid_extent_m=3000.0,
        n_days=7,
        noise_sigma_m=0.0,
        seed=11,
    )
