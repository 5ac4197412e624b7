"""
Generador de mundos sintéticos con verdad de terreno (establecimientos, red vial,
sectores censales y agendas de dispositivos) y evaluador del pipeline
"""
import json
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from shapely.geometry import box, mapping

from forage.core.config import (
    BlackoutWindow, DegradeParams, EvalParams, StayParams, StudyConfig, SynthParams
)
from forage.models.home import HomeLocation
from forage.models.outlet import FoodVisit, HomeBased
from forage.models.stay import StayPoint
from forage.schemas.reports import EvalReport
from forage.utils.geo import LocalFrame, haversine, haversine_array
from forage.utils.parallel import map_ordered
from forage.utils.timeutils import local_date, local_midnight_ts, resolve_timezone

logger = logging.getLogger(__name__)

_CODES = ["LG", "BB", "SH", "PF"]
_OUTLET_SEPARATION_M = 150.0
_OUTLET_CLEARANCE_M = 250.0
_PLACE_SEPARATION_M = 300.0
_FOOD_OFFSET_M = 10.0
_MAX_TRIES = 2000


@dataclass
class SyntheticWorld:
    pings: pd.DataFrame
    outlets: pd.DataFrame
    nodes: pd.DataFrame
    edges: pd.DataFrame
    tracts: dict
    truth: dict


def _extent_frame(study: StudyConfig) -> LocalFrame:
    lat_min, lon_min, lat_max, lon_max = study.bbox
    return LocalFrame((lat_min + lat_max) / 2.0, (lon_min + lon_max) / 2.0)


def _place(rng: np.random.Generator, half: float, avoid: Sequence[Tuple[float, float]], min_dist: float
           ) -> Tuple[float, float]:
    """Punto (x, y) en el cuadrado [-half, half] a >= min_dist de los puntos a evitar"""
    avoid_arr = np.asarray(avoid, dtype=np.float64).reshape(-1, 2)
    xy = rng.uniform(-half, half, size=2)
    for _ in range(_MAX_TRIES):
        if avoid_arr.shape[0] == 0 or np.hypot(*(avoid_arr - xy).T).min() >= min_dist:
            break
        xy = rng.uniform(-half, half, size=2)
    return float(xy[0]), float(xy[1])


def _road_grid(frame: LocalFrame, extent_m: float, block_m: float) -> Tuple[pd.DataFrame, pd.DataFrame]:
    n = int(extent_m // block_m) + 1
    coords = -extent_m / 2.0 + np.arange(n) * block_m
    gx, gy = np.meshgrid(coords, coords)
    lat, lon = frame.unproject(gx.ravel(), gy.ravel())
    node_ids = np.arange(1, n * n + 1, dtype=np.int64)
    nodes = pd.DataFrame({"node_id": node_ids, "lat": lat, "lon": lon})

    ids = node_ids.reshape(n, n)
    src = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    dst = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    length = haversine_array(lat[src - 1], lon[src - 1], lat[dst - 1], lon[dst - 1])
    edges = pd.DataFrame({"from": src, "to": dst, "length_m": length, "oneway": 0})
    return nodes, edges


def _tract_collection(rng: np.random.Generator, frame: LocalFrame, extent_m: float, k: int) -> dict:
    step = extent_m / k
    features = []
    for row in range(k):
        for col in range(k):
            x0, y0 = -extent_m / 2.0 + col * step, -extent_m / 2.0 + row * step
            lat_lo, lon_lo = frame.unproject(x0, y0)
            lat_hi, lon_hi = frame.unproject(x0 + step, y0 + step)
            features.append({
                "type": "Feature",
                "properties": {"tract_id": f"T{row:02d}{col:02d}", "population": int(rng.integers(200, 2000))},
                "geometry": mapping(box(float(lon_lo), float(lat_lo), float(lon_hi), float(lat_hi))),
            })
    return {"type": "FeatureCollection", "features": features}


def _outlets(rng: np.random.Generator, frame: LocalFrame, params: SynthParams) -> Tuple[pd.DataFrame, np.ndarray]:
    half = params.grid_extent_m * 0.45
    placed: List[Tuple[float, float]] = []
    rows = []
    for c, code in enumerate(_CODES):
        for i in range(params.n_outlets_per_category):
            x, y = _place(rng, half, placed, _OUTLET_SEPARATION_M)
            placed.append((x, y))
            lat, lon = frame.unproject(y=y, x=x)
            if code == "LG":
                primary = 1
            elif code == "BB":
                primary = 0
            else:
                primary = 1 if i % 2 == 0 else 0
            rows.append((f"O{len(rows) + 1:04d}", f"{code} store {i + 1}", float(lat), float(lon), code, primary))
    outlets = pd.DataFrame(rows, columns=["outlet_id", "name", "lat", "lon", "category_code", "primary_food"])
    return outlets, np.asarray(placed, dtype=np.float64).reshape(-1, 2)


@dataclass(frozen=True)
class _Day:
    midnight: int
    weekday: int
    holiday: bool


def _schedule_days(study: StudyConfig, params: SynthParams) -> List[_Day]:
    zone = resolve_timezone(study.timezone)
    first = local_date(study.window_start, zone)
    holidays = {date.fromisoformat(d) for d in params.holidays}
    days = []
    for k in range(params.n_days + 1):
        day = first + timedelta(days=k)
        days.append(_Day(local_midnight_ts(day, zone), day.weekday(), day in holidays))
    return days


def _device(index: int, params: SynthParams, study: StudyConfig, outlet_xy: np.ndarray,
            outlet_ids: List[str], days: List[_Day]) -> Tuple[pd.DataFrame, dict]:
    """Agenda, pings y verdad de un dispositivo; RNG derivado de (seed, index)"""
    rng = np.random.default_rng([params.seed, index])
    frame = _extent_frame(study)
    device_id = f"dev{index:04d}"
    half = params.grid_extent_m * 0.45

    home = _place(rng, half, outlet_xy, _OUTLET_CLEARANCE_M)
    work = _place(rng, half, np.vstack([outlet_xy, [home]]), max(_OUTLET_CLEARANCE_M, _PLACE_SEPARATION_M))
    errand = _place(rng, half, np.vstack([outlet_xy, [home, work]]), max(_OUTLET_CLEARANCE_M, _PLACE_SEPARATION_M))
    speed = rng.uniform(8.0, 10.0)
    offset = int(rng.integers(0, params.cadence_s))

    # paradas: [kind, (x, y), salida absoluta o None, duración o None, outlet_id]
    stops: List[list] = [["home", home, None, None, None]]

    def food_stop() -> list:
        j = int(rng.integers(len(outlet_ids)))
        angle, radius = rng.uniform(0, 2 * np.pi), rng.uniform(0, _FOOD_OFFSET_M)
        loc = (outlet_xy[j, 0] + radius * np.cos(angle), outlet_xy[j, 1] + radius * np.sin(angle))
        return ["food", loc, None, rng.uniform(10.0, 45.0) * 60.0, outlet_ids[j]]

    def go_home():
        # dos paradas seguidas en casa son una sola estancia
        if stops[-1][0] == "home":
            stops[-1][2] = None
        else:
            stops.append(["home", home, None, None, None])

    for day in days[:-1]:
        weekend = day.weekday >= 5
        first_leave = day.midnight + (9.0 if weekend else 7.5) * 3600
        # la estancia en casa previa termina con la primera salida del día
        stops[-1][2] = first_leave
        has_outlets = len(outlet_ids) > 0
        if weekend:
            stops.append(["errand", errand, day.midnight + 9.8333 * 3600, None, None])
            stops.append(["home", home, day.midnight + 11.5 * 3600, None, None])
            if has_outlets and not day.holiday and rng.random() < params.weekend_food_rate:
                stops.append(food_stop())
        else:
            stops.append(["work", work, day.midnight + 17.0 * 3600, None, None])
            if has_outlets and not day.holiday and rng.random() < params.weekday_food_rate:
                stops.append(food_stop())
        go_home()
    timeline_end = days[-1].midnight
    stops[-1][2] = timeline_end

    # tiempos de llegada y salida
    key_t, key_x, key_y, dwells = [], [], [], []
    t = float(days[0].midnight)
    prev_kind = None
    prev_loc = None
    for kind, loc, leave_at, duration, outlet_id in stops:
        if prev_loc is not None:
            t += float(np.hypot(loc[0] - prev_loc[0], loc[1] - prev_loc[1])) / speed
        arrive = t
        leave = max(arrive, leave_at) if leave_at is not None else arrive + duration
        leave = min(leave, float(timeline_end))
        arrive = min(arrive, leave)
        for tk in ((arrive,) if leave == arrive else (arrive, leave)):
            if not key_t or tk > key_t[-1]:
                key_t.append(tk)
                key_x.append(loc[0])
                key_y.append(loc[1])
        lat, lon = frame.unproject(x=loc[0], y=loc[1])
        dwells.append({
            "kind": kind,
            "lat": float(lat),
            "lon": float(lon),
            "start_ts": int(round(arrive)),
            "end_ts": int(round(leave)),
            "outlet_id": outlet_id,
            "origin_kind": prev_kind,
        })
        prev_kind, prev_loc, t = kind, loc, leave

    ts = np.arange(days[0].midnight + offset, timeline_end, params.cadence_s, dtype=np.int64)
    x = np.interp(ts, key_t, key_x)
    y = np.interp(ts, key_t, key_y)

    if params.noise_sigma_m > 0 and ts.size:
        east = rng.normal(0.0, params.noise_sigma_m, ts.size)
        north = rng.normal(0.0, params.noise_sigma_m, ts.size)
        r = np.hypot(east, north)
        scale = np.minimum(1.0, params.noise_cap_m / np.maximum(r, 1e-12))
        x, y = x + east * scale, y + north * scale
    accuracy = np.full(ts.size, "High", dtype=object)
    if params.low_accuracy_fraction > 0 and ts.size:
        accuracy[rng.random(ts.size) < params.low_accuracy_fraction] = "Other"

    lat, lon = frame.unproject(x=x, y=y)
    inside = (ts >= study.window_start) & (ts < study.window_end)
    pings = pd.DataFrame({
        "device_id": device_id,
        "lat": np.asarray(lat)[inside],
        "lon": np.asarray(lon)[inside],
        "ts": ts[inside],
        "accuracy": accuracy[inside],
    })

    home_lat, home_lon = frame.unproject(x=home[0], y=home[1])
    truth = {
        "device_id": device_id,
        "home": {"lat": float(home_lat), "lon": float(home_lon)},
        "dwells": [
            d for d in dwells
            if d["end_ts"] > study.window_start and d["start_ts"] < study.window_end
        ],
    }
    return pings, truth


def generate_world(params: SynthParams = SynthParams(), study: StudyConfig = StudyConfig(),
                   workers: int = 1) -> SyntheticWorld:
    """
    Genera un mundo sintético determinista para la semilla dada.

    Args:
        params: Tamaño del mundo, cadencia, ruido y tasas de viajes a comprar
        study: Ventana y bbox; el mundo se centra en el centro del bbox
        workers: Procesos para generar dispositivos (cada uno con su propia sub-semilla)

    Returns:
        SyntheticWorld con tablas en los formatos que lee la ingesta y la verdad de terreno
    """
    rng = np.random.default_rng(params.seed)
    frame = _extent_frame(study)
    outlets, outlet_xy = _outlets(rng, frame, params)
    nodes, edges = _road_grid(frame, params.grid_extent_m, params.block_m)
    tracts = _tract_collection(rng, frame, params.grid_extent_m, params.tracts_k)
    days = _schedule_days(study, params)

    work = partial(_device, params=params, study=study, outlet_xy=outlet_xy,
                   outlet_ids=outlets["outlet_id"].tolist(), days=days)
    results = map_ordered(work, list(range(params.n_devices)), workers=workers)

    frames = [p for p, _ in results]
    pings = (pd.concat(frames, ignore_index=True) if frames
             else pd.DataFrame(columns=["device_id", "lat", "lon", "ts", "accuracy"]))
    truth = {
        "seed": params.seed,
        "holidays": list(params.holidays),
        "devices": [t for _, t in results],
    }
    logger.info(
        f"🧪 Mundo sintético: {params.n_devices} dispositivos, {len(outlets)} establecimientos, "
        f"{len(nodes)} nodos, {len(pings)} pings"
    )
    return SyntheticWorld(pings=pings, outlets=outlets, nodes=nodes, edges=edges, tracts=tracts, truth=truth)


def write_world(world: SyntheticWorld, out_dir) -> Dict[str, Path]:
    """Escribe las entradas en `<out>/inputs/` y la verdad en `<out>/truth.json`"""
    out = Path(out_dir)
    inputs = out / "inputs"
    inputs.mkdir(parents=True, exist_ok=True)
    paths = {
        "pings": inputs / "pings.csv",
        "outlets": inputs / "outlets.csv",
        "nodes": inputs / "nodes.csv",
        "edges": inputs / "edges.csv",
        "tracts": inputs / "tracts.geojson",
        "truth": out / "truth.json",
    }
    world.pings.to_csv(paths["pings"], index=False, float_format="%.7f")
    world.outlets.to_csv(paths["outlets"], index=False, float_format="%.7f")
    world.nodes.to_csv(paths["nodes"], index=False, float_format="%.7f")
    world.edges.to_csv(paths["edges"], index=False, float_format="%.3f")
    with open(paths["tracts"], "w", encoding="utf-8") as fh:
        json.dump(world.tracts, fh, indent=2, sort_keys=True)
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        json.dump(world.truth, fh, indent=2, sort_keys=True)
    logger.info(f"💾 Mundo sintético escrito en {out}")
    return paths


def load_truth(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def trip_blackouts(truth: dict, duration_s: int) -> List[BlackoutWindow]:
    """Apagones que cubren el viaje previo a cada parada de compra plantada"""
    windows = []
    for device in truth.get("devices", []):
        for d in device["dwells"]:
            if d["kind"] == "food":
                windows.append(BlackoutWindow(
                    start_ts=d["start_ts"] - duration_s, end_ts=d["start_ts"], device_id=device["device_id"]
                ))
    return windows


def degrade(pings: pd.DataFrame, params: DegradeParams = DegradeParams(),
            extra_windows: Sequence[BlackoutWindow] = ()) -> pd.DataFrame:
    """
    Degrada un conjunto de pings: descarte aleatorio y apagones.

    Args:
        pings: Pings en el formato de entrada
        params: Probabilidad de descarte, ventanas de apagón y semilla
        extra_windows: Ventanas adicionales (por ejemplo las de trip_blackouts)

    Returns:
        Subconjunto de filas, en el mismo orden
    """
    if pings.empty:
        return pings.copy()
    rng = np.random.default_rng(params.seed)
    keep = rng.random(len(pings)) >= params.dropout_p
    ts = pings["ts"].to_numpy(dtype=np.int64)
    devices = pings["device_id"].to_numpy()
    for w in list(params.blackout_windows) + list(extra_windows):
        hit = (ts >= w.start_ts) & (ts < w.end_ts)
        if w.device_id is not None:
            hit &= devices == w.device_id
        keep &= ~hit
    logger.info(f"📉 Degradación: {int(keep.sum())}/{len(pings)} pings retenidos")
    return pings[keep].reset_index(drop=True)


def _iou(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0:
        return 0.0
    union = (a_end - a_start) + (b_end - b_start) - inter
    return inter / union if union > 0 else 0.0


def _greedy_match(candidates: List[Tuple[float, int, int]]) -> int:
    """Emparejamiento uno a uno por IoU descendente; devuelve el número de pares"""
    used_a, used_b = set(), set()
    for _, a, b in sorted(candidates, key=lambda c: (-c[0], c[1], c[2])):
        if a not in used_a and b not in used_b:
            used_a.add(a)
            used_b.add(b)
    return len(used_a)


def _rate(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def evaluate(homes: Dict[str, HomeLocation], stays: Sequence[StayPoint], visits: Sequence[FoodVisit],
             truth: dict, params: EvalParams = EvalParams(), stay_params: StayParams = StayParams()) -> EvalReport:
    """
    Compara las salidas del pipeline con la verdad de terreno.

    Estancias: pares con IoU >= stay_iou y centroides a <= stay_match_m, solo
    contra paradas plantadas con duración detectable. Visitas: mismo
    dispositivo, mismo establecimiento e IoU >= stay_iou.
    """
    devices = truth.get("devices", [])
    report = EvalReport(n_devices=len(devices))
    if not devices:
        return report

    stays_by_dev: Dict[str, List[StayPoint]] = {}
    for s in stays:
        stays_by_dev.setdefault(s.device_id, []).append(s)
    visits_by_dev: Dict[str, List[FoodVisit]] = {}
    for v in visits:
        visits_by_dev.setdefault(v.device_id, []).append(v)

    hits = 0
    n_stays = n_planted = stay_matches = 0
    n_visits = n_food = visit_matches = 0
    min_s, max_s = stay_params.min_dur_min * 60, stay_params.max_dur_min * 60
    for device in devices:
        device_id = device["device_id"]
        home = homes.get(device_id)
        if home is not None and haversine((home.lat, home.lon),
                                          (device["home"]["lat"], device["home"]["lon"])) <= params.home_hit_m:
            hits += 1

        planted = [d for d in device["dwells"] if min_s <= d["end_ts"] - d["start_ts"] <= max_s]
        detected = stays_by_dev.get(device_id, [])
        n_stays += len(detected)
        n_planted += len(planted)
        cands = []
        for i, s in enumerate(detected):
            for j, d in enumerate(planted):
                iou = _iou(s.start_ts, s.end_ts, d["start_ts"], d["end_ts"])
                if iou >= params.stay_iou and haversine((s.lat, s.lon), (d["lat"], d["lon"])) <= params.stay_match_m:
                    cands.append((iou, i, j))
        stay_matches += _greedy_match(cands)

        food = [d for d in device["dwells"] if d["kind"] == "food"]
        found = visits_by_dev.get(device_id, [])
        n_visits += len(found)
        n_food += len(food)
        cands = []
        for i, v in enumerate(found):
            for j, d in enumerate(food):
                if v.outlet_id != d["outlet_id"]:
                    continue
                iou = _iou(v.start_ts, v.end_ts, d["start_ts"], d["end_ts"])
                if iou >= params.stay_iou:
                    cands.append((iou, i, j))
        visit_matches += _greedy_match(cands)

    known = [v for v in visits if v.home_based in (HomeBased.YES, HomeBased.NO)]
    n_yes = sum(1 for v in known if v.home_based == HomeBased.YES)

    report.home_hit_rate = hits / len(devices)
    report.stay_precision = _rate(stay_matches, n_stays)
    report.stay_recall = _rate(stay_matches, n_planted)
    report.visit_precision = _rate(visit_matches, n_visits)
    report.visit_recall = _rate(visit_matches, n_food)
    report.n_visits_detected = n_visits
    report.n_visits_planted = n_food
    report.visit_frequency_ratio = _rate(n_visits, n_food)
    report.n_known_origin = len(known)
    report.home_based_share = _rate(n_yes, len(known))

    logger.info(
        f"✅ Evaluación: hogares {report.home_hit_rate:.3f}, "
        f"recall de visitas {report.visit_recall if report.visit_recall is not None else 'n/a'}, "
        f"razón de frecuencia {report.visit_frequency_ratio if report.visit_frequency_ratio is not None else 'n/a'}"
    )
    return report
