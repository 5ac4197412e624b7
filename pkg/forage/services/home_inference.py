"""
Inferencia de residencia por densidad de pings nocturnos, con respaldo de fin de semana
"""
import logging
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from forage.core.config import HomeParams, StudyConfig
from forage.models.home import HomeLocation, HomeMethod
from forage.models.ping import DeviceTrack
from forage.schemas.reports import HomeCoverageReport
from forage.utils.geo import LocalFrame, to_cells
from forage.utils.parallel import chunked, map_ordered
from forage.utils.timeutils import local_calendar, resolve_timezone

logger = logging.getLogger(__name__)


def _night_mask(hour: np.ndarray, params: HomeParams) -> np.ndarray:
    start, end = params.night_start_hour, params.night_end_hour
    if start > end:
        # la ventana cruza medianoche
        return (hour >= start) | (hour < end)
    return (hour >= start) & (hour < end)


def _best_cell(ix: np.ndarray, iy: np.ndarray, mask: np.ndarray) -> Optional[Tuple[int, int, int]]:
    """
    Celda con más pings calificados.

    Empates: mayor conteo total de pings en la celda, luego (ix, iy) menor.

    Returns:
        (ix, iy, conteo) o None si no hay pings calificados
    """
    if not mask.any():
        return None
    cells, inverse, totals = np.unique(np.stack([ix, iy], axis=1), axis=0,
                                       return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    qualifying = np.bincount(inverse[mask], minlength=len(cells))
    # lexsort: la última clave es la primaria
    order = np.lexsort((cells[:, 1], cells[:, 0], -totals, -qualifying))
    best = int(order[0])
    return int(cells[best, 0]), int(cells[best, 1]), int(qualifying[best])


def infer_home(track: DeviceTrack, study: StudyConfig, params: HomeParams = HomeParams(),
               frame: Optional[LocalFrame] = None, zone=None) -> Optional[HomeLocation]:
    """
    Infiere la ubicación de residencia de un dispositivo.

    Args:
        track: Pings ordenados de un dispositivo
        study: Configuración del estudio (zona horaria, bbox, tamaño de celda)
        params: Umbrales de soporte y ventana nocturna
        frame: Marco local (por defecto anclado en la esquina suroeste del bbox)
        zone: tzinfo ya resuelto (por defecto study.timezone)

    Returns:
        HomeLocation o None si ningún método alcanza el soporte mínimo
    """
    if len(track) == 0:
        return None
    frame = frame or LocalFrame.from_bbox(study.bbox)
    zone = zone or resolve_timezone(study.timezone)

    cal = local_calendar(track.ts, zone)
    ix, iy = to_cells(track.lat, track.lon, frame, study.grid_cell_m)

    night = _night_mask(cal.hour, params)
    candidates = [(HomeMethod.NIGHTTIME, night, params.min_night_pings)]
    weekend_day = cal.is_weekend & (cal.hour >= params.night_end_hour) & (cal.hour < params.night_start_hour)
    candidates.append((HomeMethod.WEEKEND_FALLBACK, weekend_day, params.min_weekend_pings))

    for method, mask, minimum in candidates:
        best = _best_cell(ix, iy, mask)
        if best is None or best[2] < minimum:
            continue
        bx, by, support = best
        members = mask & (ix == bx) & (iy == by)
        return HomeLocation(
            device_id=track.device_id,
            ix=bx,
            iy=by,
            lat=float(track.lat[members].mean()),
            lon=float(track.lon[members].mean()),
            method=method,
            support=support,
        )
    return None


def _infer_chunk(tracks: Sequence[DeviceTrack], study: StudyConfig, params: HomeParams) -> List[Optional[HomeLocation]]:
    frame = LocalFrame.from_bbox(study.bbox)
    zone = resolve_timezone(study.timezone)
    return [infer_home(t, study, params, frame=frame, zone=zone) for t in tracks]


def infer_all_homes(tracks: Sequence[DeviceTrack], study: StudyConfig, params: HomeParams = HomeParams(),
                    workers: int = 1) -> Tuple[Dict[str, HomeLocation], HomeCoverageReport]:
    """
    Infiere residencias para todos los dispositivos.

    Returns:
        Tupla (mapa device_id -> HomeLocation ordenado por device_id, reporte de cobertura)
    """
    ordered = sorted(tracks, key=lambda t: t.device_id)
    work = partial(_infer_chunk, study=study, params=params)
    parts = map_ordered(work, chunked(ordered, workers * 4), workers=workers)

    homes: Dict[str, HomeLocation] = {}
    report = HomeCoverageReport(n_devices=len(ordered))
    for home in (h for part in parts for h in part):
        if home is None:
            report.n_none += 1
            continue
        homes[home.device_id] = home
        if home.method == HomeMethod.NIGHTTIME:
            report.n_nighttime += 1
        else:
            report.n_fallback += 1

    if report.n_devices:
        logger.info(
            f"🏠 Residencias: {len(homes)}/{report.n_devices} "
            f"(nocturna {report.n_nighttime}, fin de semana {report.n_fallback}, sin inferir {report.n_none})"
        )
    else:
        logger.warning("⚠️ No hay dispositivos para inferir residencias")
    return homes, report
