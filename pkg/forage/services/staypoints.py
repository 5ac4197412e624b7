"""
Detección de estancias por ventana deslizante espacio-temporal y
enlace con la estancia de origen del viaje
"""
import logging
from functools import partial
from typing import List, Sequence

import numpy as np

from forage.core.config import StayParams
from forage.models.ping import DeviceTrack
from forage.models.stay import StayPoint, make_stay_id
from forage.utils.geo import haversine_array
from forage.utils.parallel import chunked, map_ordered

logger = logging.getLogger(__name__)

_FIRST_CHUNK = 32


def _window_end(track: DeviceTrack, anchor: int, threshold_m: float) -> int:
    """Primer índice posterior al ancla que queda fuera del radio (o len(track))"""
    n = len(track)
    lat0, lon0 = track.lat[anchor], track.lon[anchor]
    start, size = anchor + 1, _FIRST_CHUNK
    while start < n:
        stop = min(n, start + size)
        d = haversine_array(lat0, lon0, track.lat[start:stop], track.lon[start:stop])
        outside = np.flatnonzero(d > threshold_m)
        if outside.size:
            return start + int(outside[0])
        start, size = stop, size * 2
    return n


def detect_stays(track: DeviceTrack, params: StayParams = StayParams()) -> List[StayPoint]:
    """
    Detecta estancias de un dispositivo.

    Ventana voraz anclada en el primer ping no consumido: se extiende mientras
    cada ping siguiente esté a <= dist_threshold_m del ancla. Si la duración
    cae en [min_dur, max_dur] se emite la estancia; si la excede se descarta.
    En ambos casos el ancla salta al primer ping fuera de la ventana; si la
    ventana es demasiado corta avanza un solo ping.

    Args:
        track: Pings ordenados y sin duplicados
        params: Umbrales de distancia y duración

    Returns:
        Estancias ordenadas por start_ts, sin solapamiento
    """
    n = len(track)
    stays: List[StayPoint] = []
    if n < 2:
        return stays

    min_s = params.min_dur_min * 60.0
    max_s = params.max_dur_min * 60.0
    i = 0
    while i < n - 1:
        j = _window_end(track, i, params.dist_threshold_m)
        span = int(track.ts[j - 1] - track.ts[i])
        if j - i >= 2 and min_s <= span <= max_s:
            start_ts = int(track.ts[i])
            stays.append(StayPoint(
                stay_id=make_stay_id(track.device_id, start_ts),
                device_id=track.device_id,
                lat=float(track.lat[i:j].mean()),
                lon=float(track.lon[i:j].mean()),
                start_ts=start_ts,
                end_ts=int(track.ts[j - 1]),
                n_pings=j - i,
            ))
            i = j
        elif span > max_s:
            i = j
        else:
            i += 1
    return stays


def link_origins(stays: Sequence[StayPoint], track: DeviceTrack,
                 params: StayParams = StayParams()) -> List[StayPoint]:
    """
    Enlaza cada estancia con la anterior cuando el trayecto entre ambas
    fue registrado sin huecos mayores a max_track_gap_s.
    """
    linked: List[StayPoint] = []
    ts = track.ts
    prev = None
    for stay in stays:
        origin = None
        if prev is not None:
            a = int(np.searchsorted(ts, prev.end_ts, side="left"))
            b = int(np.searchsorted(ts, stay.start_ts, side="left"))
            gaps = np.diff(ts[a:b + 1])
            if gaps.size == 0 or int(gaps.max()) <= params.max_track_gap_s:
                origin = prev.stay_id
        linked.append(stay.model_copy(update={"origin_stay_id": origin}))
        prev = stay
    return linked


def filter_food_candidates(stays: Sequence[StayPoint], max_food_dur_min: float = 120.0) -> List[StayPoint]:
    """Estancias con duración <= max_food_dur_min (cota cerrada), en el mismo orden"""
    return [s for s in stays if s.duration_min <= max_food_dur_min]


def _stays_chunk(tracks: Sequence[DeviceTrack], params: StayParams) -> List[StayPoint]:
    out: List[StayPoint] = []
    for track in tracks:
        out.extend(link_origins(detect_stays(track, params), track, params))
    return out


def detect_all_stays(tracks: Sequence[DeviceTrack], params: StayParams = StayParams(),
                     workers: int = 1) -> List[StayPoint]:
    """Detecta y enlaza estancias de todos los dispositivos; orden (device_id, start_ts)"""
    ordered = sorted(tracks, key=lambda t: t.device_id)
    work = partial(_stays_chunk, params=params)
    parts = map_ordered(work, chunked(ordered, workers * 4), workers=workers)
    stays = [s for part in parts for s in part]

    n_linked = sum(1 for s in stays if s.origin_stay_id is not None)
    logger.info(f"📍 {len(stays)} estancias detectadas en {len(ordered)} dispositivos ({n_linked} con origen)")
    return stays
