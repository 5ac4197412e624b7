"""
Utilidades geométricas: distancia haversine, marco local equirectangular,
índice espacial por celdas y localización de puntos en sectores censales
"""
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import Point
from shapely.strtree import STRtree

from forage.core.errors import IndexRadiusError
from forage.models.tract import Tract

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = 111_320.0

# Metros por grado de latitud sobre la esfera de radio EARTH_RADIUS_M;
# la razón contra la constante del marco acota el error de proyección.
_SPHERE_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0
_FRAME_SLACK = METERS_PER_DEG_LAT / _SPHERE_M_PER_DEG * 1.001


def haversine_array(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Distancia haversine vectorizada (metros); admite broadcasting numpy"""
    lat1 = np.radians(lat1)
    lat2 = np.radians(lat2)
    dlat = lat2 - lat1
    dlon = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine(p: Tuple[float, float], q: Tuple[float, float]) -> float:
    """
    Distancia de gran círculo entre dos puntos (lat, lon) en metros.

    Args:
        p: Primer punto (lat, lon) en grados
        q: Segundo punto (lat, lon) en grados

    Returns:
        Distancia en metros (simétrica, cero si p == q)
    """
    return float(haversine_array(p[0], p[1], q[0], q[1]))


class GridCell(NamedTuple):
    ix: int
    iy: int


class LocalFrame:
    """Marco equirectangular anclado en (anchor_lat, anchor_lon)"""

    def __init__(self, anchor_lat: float, anchor_lon: float):
        self.anchor_lat = float(anchor_lat)
        self.anchor_lon = float(anchor_lon)
        self.m_per_deg_lat = METERS_PER_DEG_LAT
        self.m_per_deg_lon = METERS_PER_DEG_LAT * math.cos(math.radians(self.anchor_lat))

    @classmethod
    def from_bbox(cls, bbox: Sequence[float]) -> "LocalFrame":
        # esquina suroeste
        return cls(bbox[0], bbox[1])

    def project(self, lat, lon):
        x = (np.asarray(lon, dtype=np.float64) - self.anchor_lon) * self.m_per_deg_lon
        y = (np.asarray(lat, dtype=np.float64) - self.anchor_lat) * self.m_per_deg_lat
        return x, y

    def unproject(self, x, y):
        lat = self.anchor_lat + np.asarray(y, dtype=np.float64) / self.m_per_deg_lat
        lon = self.anchor_lon + np.asarray(x, dtype=np.float64) / self.m_per_deg_lon
        return lat, lon

    def offset(self, lat: float, lon: float, east_m: float, north_m: float) -> Tuple[float, float]:
        """Desplaza un punto en metros dentro del marco"""
        x, y = self.project(lat, lon)
        new_lat, new_lon = self.unproject(x + east_m, y + north_m)
        return float(new_lat), float(new_lon)


def to_cells(lat, lon, frame: LocalFrame, cell_m: float) -> Tuple[np.ndarray, np.ndarray]:
    x, y = frame.project(lat, lon)
    return np.floor(x / cell_m).astype(np.int64), np.floor(y / cell_m).astype(np.int64)


def to_cell(p: Tuple[float, float], frame: LocalFrame, cell_m: float) -> GridCell:
    ix, iy = to_cells(p[0], p[1], frame, cell_m)
    return GridCell(int(ix), int(iy))


class CellIndex:
    """
    Índice espacial por celdas (hash de celda -> posiciones de registros).

    query_within devuelve exactamente lo que devolvería un barrido por
    fuerza bruta con haversine (bola cerrada, d <= r).
    """

    def __init__(self, lat, lon, cell_m: float = 250.0, max_radius_m: float = 1000.0):
        self.lat = np.asarray(lat, dtype=np.float64)
        self.lon = np.asarray(lon, dtype=np.float64)
        self.cell_m = float(cell_m)
        self.max_radius_m = float(max_radius_m)
        self._cells: Dict[Tuple[int, int], np.ndarray] = {}

        if self.lat.size == 0:
            self.frame = LocalFrame(0.0, 0.0)
            self._max_abs_lat = 0.0
            return

        self.frame = LocalFrame(float(self.lat.min()), float(self.lon.min()))
        self._max_abs_lat = float(np.abs(self.lat).max())
        ix, iy = to_cells(self.lat, self.lon, self.frame, self.cell_m)
        order = np.lexsort((iy, ix))
        keys = np.stack([ix[order], iy[order]], axis=1)
        if keys.shape[0]:
            breaks = np.flatnonzero(np.any(np.diff(keys, axis=0) != 0, axis=1)) + 1
            for chunk in np.split(order, breaks):
                key = (int(ix[chunk[0]]), int(iy[chunk[0]]))
                self._cells[key] = np.sort(chunk)

        logger.debug(f"Índice de celdas: {self.lat.size} registros en {len(self._cells)} celdas")

    def __len__(self) -> int:
        return int(self.lat.size)

    def _rings(self, lat: float, r: float) -> Tuple[int, int]:
        ky = math.ceil(r * _FRAME_SLACK / self.cell_m) + 1
        # el ancho en x de un grado de longitud se encoge con la latitud
        worst_lat = min(89.9, max(abs(lat), self._max_abs_lat) + r / _SPHERE_M_PER_DEG)
        stretch = math.cos(math.radians(self.frame.anchor_lat)) / math.cos(math.radians(worst_lat))
        kx = math.ceil(r * _FRAME_SLACK * stretch / self.cell_m) + 1
        return kx, ky

    def query_within(self, p: Tuple[float, float], r: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Registros a distancia haversine <= r de p.

        Returns:
            Tupla (posiciones ordenadas, distancias en metros)

        Raises:
            IndexRadiusError: Si r excede max_radius_m
        """
        if r > self.max_radius_m:
            raise IndexRadiusError(
                f"Radio {r} m excede el máximo del índice ({self.max_radius_m} m)"
            )
        if not self._cells:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)

        cx, cy = to_cell(p, self.frame, self.cell_m)
        kx, ky = self._rings(p[0], r)
        found: List[np.ndarray] = []
        for dx in range(-kx, kx + 1):
            for dy in range(-ky, ky + 1):
                bucket = self._cells.get((cx + dx, cy + dy))
                if bucket is not None:
                    found.append(bucket)
        if not found:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)

        cand = np.sort(np.concatenate(found))
        dist = haversine_array(p[0], p[1], self.lat[cand], self.lon[cand])
        keep = dist <= r
        return cand[keep], dist[keep]


def build_cell_index(lat, lon, cell_m: float = 250.0, max_radius_m: float = 1000.0) -> CellIndex:
    return CellIndex(lat, lon, cell_m=cell_m, max_radius_m=max_radius_m)


class TractLocator:
    """Asigna puntos a sectores censales; en bordes gana el tract_id menor"""

    def __init__(self, tracts: Sequence[Tract]):
        self.tracts = sorted(tracts, key=lambda t: t.tract_id)
        self._tree = STRtree([t.geometry for t in self.tracts]) if self.tracts else None

    def locate(self, lat: float, lon: float) -> Optional[str]:
        if self._tree is None:
            return None
        hits = self._tree.query(Point(lon, lat), predicate="covered_by")
        if len(hits) == 0:
            return None
        return self.tracts[int(np.min(hits))].tract_id

    def locate_many(self, lat, lon) -> List[Optional[str]]:
        if self._tree is None:
            return [None] * len(lat)
        points = shapely.points(np.asarray(lon, dtype=np.float64), np.asarray(lat, dtype=np.float64))
        point_idx, tract_idx = self._tree.query(points, predicate="covered_by")
        result: List[Optional[str]] = [None] * len(points)
        # tract ordenado por id: el índice menor es el tract_id menor
        best: Dict[int, int] = {}
        for pi, ti in zip(point_idx.tolist(), tract_idx.tolist()):
            if pi not in best or ti < best[pi]:
                best[pi] = ti
        for pi, ti in best.items():
            result[pi] = self.tracts[ti].tract_id
        return result


def point_in_tract(p: Tuple[float, float], tracts: Sequence[Tract]) -> Optional[str]:
    return TractLocator(tracts).locate(p[0], p[1])
