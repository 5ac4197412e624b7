"""
Modelos para pings GPS
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DeviceTrack:
    """Pings de un dispositivo como arreglos paralelos, ordenados por ts estrictamente creciente"""
    device_id: str
    ts: np.ndarray
    lat: np.ndarray
    lon: np.ndarray

    def __len__(self) -> int:
        return int(self.ts.shape[0])
