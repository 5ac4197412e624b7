"""
Conversión de timestamps UTC a calendario local (zona IANA vía dateutil)
"""
from dataclasses import dataclass
from datetime import date, datetime, tzinfo

import numpy as np
import pandas as pd
from dateutil import tz

from forage.core.errors import ConfigError


def resolve_timezone(name: str) -> tzinfo:
    zone = tz.gettz(name)
    if zone is None:
        raise ConfigError(f"Zona horaria desconocida: {name}", key_path="study.timezone")
    return zone


@dataclass(frozen=True)
class LocalCalendar:
    """Campos de calendario local alineados con un arreglo de timestamps"""
    hour: np.ndarray
    weekday: np.ndarray  # lunes = 0 ... domingo = 6
    date: np.ndarray     # datetime64[D] de la fecha local

    @property
    def is_weekend(self) -> np.ndarray:
        return self.weekday >= 5


def local_calendar(ts, zone: tzinfo) -> LocalCalendar:
    stamps = pd.to_datetime(np.asarray(ts, dtype=np.int64), unit="s", utc=True).tz_convert(zone)
    return LocalCalendar(
        hour=np.asarray(stamps.hour, dtype=np.int64),
        weekday=np.asarray(stamps.dayofweek, dtype=np.int64),
        date=stamps.tz_localize(None).normalize().values.astype("datetime64[D]"),
    )


def local_midnight_ts(day: date, zone: tzinfo) -> int:
    """Epoch UTC de la medianoche local del día indicado"""
    return int(datetime(day.year, day.month, day.day, tzinfo=zone).timestamp())


def local_date(ts: int, zone: tzinfo) -> date:
    return datetime.fromtimestamp(int(ts), tz=zone).date()
