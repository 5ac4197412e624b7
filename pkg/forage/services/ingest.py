"""
Lectura, validación y filtrado de los datos de entrada:
pings GPS, catálogo de establecimientos, red vial y sectores censales
"""
import contextlib
import csv
import json
import os
import logging
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from shapely.geometry import shape

from forage.core.config import StudyConfig
from forage.core.errors import IngestError
from forage.models.outlet import CATEGORY_CODES, FoodOutlet, OutletCategory
from forage.models.ping import DeviceTrack
from forage.models.tract import Tract
from forage.schemas.reports import DROP_REASONS, DropReport
from forage.services.outlet_catalog import OutletCatalog, category_defaults
from forage.services.routing import RoadGraph

logger = logging.getLogger(__name__)

PING_COLUMNS = ["device_id", "lat", "lon", "ts", "accuracy"]
OUTLET_COLUMNS = ["outlet_id", "name", "lat", "lon", "category_code", "primary_food"]
NODE_COLUMNS = ["node_id", "lat", "lon"]
EDGE_COLUMNS = ["from", "to", "length_m", "oneway"]

CHUNK_ROWS = 1_000_000
_REPLACEMENT = "\ufffd"


def _require_columns(columns, required: List[str], source: str):
    missing = [c for c in required if c not in columns]
    if missing:
        raise IngestError(f"faltan columnas {missing} (se requiere encabezado)", source=source)


def _filter_chunk(chunk: pd.DataFrame, cfg: StudyConfig, rows: np.ndarray) -> Tuple[pd.DataFrame, Dict[str, int]]:
    """Aplica los filtros por fila; devuelve filas retenidas con su número de fila original"""
    dropped = {reason: 0 for reason in DROP_REASONS}
    lat = pd.to_numeric(chunk["lat"], errors="coerce")
    lon = pd.to_numeric(chunk["lon"], errors="coerce")
    ts = pd.to_numeric(chunk["ts"], errors="coerce")

    valid = (
        lat.between(-90.0, 90.0) & lon.between(-180.0, 180.0)
        & np.isfinite(ts) & (ts == np.floor(ts))
        & (chunk["device_id"].str.len() > 0)
    )
    dropped["malformed"] = int((~valid).sum())

    high = chunk["accuracy"].str.strip().str.lower() == "high"
    low_accuracy = valid & ~high
    dropped["low_accuracy"] = int(low_accuracy.sum())

    keep = valid & high
    in_window = (ts >= cfg.window_start) & (ts < cfg.window_end)
    dropped["out_of_window"] = int((keep & ~in_window).sum())
    keep &= in_window

    lat_min, lon_min, lat_max, lon_max = cfg.bbox
    in_bbox = lat.between(lat_min, lat_max) & lon.between(lon_min, lon_max)
    dropped["out_of_bbox"] = int((keep & ~in_bbox).sum())
    keep &= in_bbox

    out = pd.DataFrame({
        "device_id": chunk["device_id"][keep].values,
        "lat": lat[keep].values.astype(np.float64),
        "lon": lon[keep].values.astype(np.float64),
        "ts": ts[keep].values.astype(np.int64),
        "row": rows[keep.values],
    })
    if "geohash" in chunk.columns:
        out["geohash"] = chunk["geohash"][keep].values
    return out, dropped


@contextlib.contextmanager
def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8-sig", errors="replace", newline="") as handle:
            yield handle
    else:
        yield source


def _read_ping_blocks(source, name: str, chunksize: int) -> Iterator[Tuple[pd.DataFrame, np.ndarray, int]]:
    """
    Tokeniza el CSV de pings por bloques.

    Las filas con un número de campos distinto al del encabezado o con bytes
    que no son UTF-8 válido no llegan al DataFrame; se reportan como rotas.

    Yields:
        Tupla (bloque de filas bien formadas, número de fila de cada una, filas rotas en el bloque)
    """
    with _open_text(source) as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader, None)
        except csv.Error as e:
            raise IngestError(f"encabezado ilegible: {e}", source=name)
        if not header or all(not h.strip() for h in header):
            raise IngestError("archivo vacío (se requiere encabezado)", source=name)
        _require_columns(header, PING_COLUMNS, name)
        width = len(header)

        good: List[List[str]] = []
        numbers: List[int] = []
        broken = 0
        row = 0
        while True:
            try:
                fields = next(reader)
            except StopIteration:
                break
            except csv.Error:
                fields = None
            if fields == []:
                # línea en blanco
                continue
            if fields is None or len(fields) != width or any(_REPLACEMENT in f for f in fields):
                broken += 1
            else:
                good.append(fields)
                numbers.append(row)
            row += 1
            if len(good) + broken >= chunksize:
                yield pd.DataFrame(good, columns=header, dtype=str), np.asarray(numbers, dtype=np.int64), broken
                good, numbers, broken = [], [], 0
        if good or broken:
            yield pd.DataFrame(good, columns=header, dtype=str), np.asarray(numbers, dtype=np.int64), broken


def parse_pings(source, cfg: StudyConfig, chunksize: int = CHUNK_ROWS) -> Tuple[pd.DataFrame, DropReport]:
    """
    Lee y filtra el CSV de pings.

    Args:
        source: Ruta o archivo con columnas device_id,lat,lon,ts,accuracy[,geohash]
        cfg: Ventana de estudio y bbox
        chunksize: Filas por bloque de lectura

    Returns:
        Tupla (DataFrame ordenado por device_id y ts sin duplicados, reporte de descartes)

    Raises:
        IngestError: Si falta el encabezado o una columna requerida
    """
    name = str(source)
    parts: List[pd.DataFrame] = []
    dropped = {reason: 0 for reason in DROP_REASONS}
    total = 0
    for chunk, rows, broken in _read_ping_blocks(source, name, chunksize):
        total += len(chunk) + broken
        dropped["malformed"] += broken
        if chunk.empty:
            continue
        part, counts = _filter_chunk(chunk, cfg, rows)
        parts.append(part)
        for reason, n in counts.items():
            dropped[reason] += n

    if dropped["malformed"]:
        logger.warning(f"⚠️ {dropped['malformed']} filas malformadas en {name}")

    if not parts:
        frame = pd.DataFrame({c: pd.Series(dtype=t) for c, t in
                              [("device_id", object), ("lat", float), ("lon", float), ("ts", np.int64)]})
        return frame, DropReport(total_rows=total, retained=0, dropped=dropped)

    frame = pd.concat(parts, ignore_index=True)
    frame = frame.sort_values(["device_id", "ts", "row"], kind="mergesort")
    dup = frame.duplicated(subset=["device_id", "ts"], keep="first")
    dropped["duplicate"] = int(dup.sum())
    frame = frame[~dup].drop(columns=["row"]).reset_index(drop=True)

    report = DropReport(
        total_rows=total,
        retained=len(frame),
        n_devices=int(frame["device_id"].nunique()),
        dropped=dropped,
    )
    logger.info(
        f"📥 Pings: {report.retained}/{report.total_rows} retenidos de "
        f"{report.n_devices} dispositivos; descartes {report.dropped}"
    )
    return frame, report


def iter_tracks(frame: pd.DataFrame) -> Iterator[DeviceTrack]:
    """Recorre un DataFrame ordenado por (device_id, ts) como trayectorias por dispositivo"""
    if frame.empty:
        return
    devices = frame["device_id"].to_numpy()
    ts = frame["ts"].to_numpy(dtype=np.int64)
    lat = frame["lat"].to_numpy(dtype=np.float64)
    lon = frame["lon"].to_numpy(dtype=np.float64)
    bounds = np.flatnonzero(devices[1:] != devices[:-1]) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [len(devices)]])
    for a, b in zip(starts.tolist(), stops.tolist()):
        yield DeviceTrack(device_id=str(devices[a]), ts=ts[a:b], lat=lat[a:b], lon=lon[a:b])


def load_tracks(frame: pd.DataFrame) -> List[DeviceTrack]:
    return list(iter_tracks(frame))


def _parse_float(value: str, what: str, source: str, row: int) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise IngestError(f"valor inválido en {what}: {value!r}", source=source, row=row)
    if not np.isfinite(out):
        raise IngestError(f"valor no finito en {what}", source=source, row=row)
    return out


def load_outlets(source, radii: Optional[Dict[OutletCategory, float]] = None) -> OutletCatalog:
    """
    Carga el catálogo de establecimientos clasificados.

    Args:
        source: CSV con outlet_id,name,lat,lon,category_code,primary_food[,radius_m]
        radii: Radio por categoría (por defecto category_defaults)

    Returns:
        OutletCatalog ordenado por outlet_id

    Raises:
        IngestError: Columna faltante, valor vacío o inválido, código de categoría
            desconocido u outlet_id duplicado
    """
    name = str(source)
    table = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    _require_columns(table.columns, OUTLET_COLUMNS, name)
    has_radius = "radius_m" in table.columns

    outlets: List[FoodOutlet] = []
    seen = set()
    for row, rec in enumerate(table.to_dict("records")):
        for col in OUTLET_COLUMNS:
            if rec[col].strip() == "" and col != "name":
                raise IngestError(f"valor vacío en {col}", source=name, row=row)
        outlet_id = rec["outlet_id"].strip()
        if outlet_id in seen:
            raise IngestError(f"outlet_id duplicado {outlet_id}", source=name, row=row)
        seen.add(outlet_id)

        code = rec["category_code"].strip().upper()
        if code not in CATEGORY_CODES:
            raise IngestError(f"category_code desconocido {code!r}", source=name, row=row)
        category = CATEGORY_CODES[code]

        flag = rec["primary_food"].strip()
        if flag not in ("0", "1"):
            raise IngestError(f"primary_food debe ser 0/1, no {flag!r}", source=name, row=row)
        if category == OutletCategory.BIG_BOX and flag == "1":
            # las grandes superficies nunca son destino principal de compra de alimentos
            logger.warning(f"⚠️ {outlet_id} es BigBox con primary_food=1 (fila {row}); se toma como 0")
            flag = "0"

        radius = radii[category] if radii else category_defaults(category)
        if has_radius and rec["radius_m"].strip():
            radius = _parse_float(rec["radius_m"], "radius_m", name, row)
            if radius <= 0:
                raise IngestError("radius_m debe ser positivo", source=name, row=row)

        lat = _parse_float(rec["lat"], "lat", name, row)
        lon = _parse_float(rec["lon"], "lon", name, row)
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise IngestError("coordenadas fuera de rango", source=name, row=row)

        outlets.append(FoodOutlet(
            outlet_id=outlet_id,
            name=rec["name"],
            lat=lat,
            lon=lon,
            category=category,
            primary_food=flag == "1",
            radius_m=radius,
        ))

    catalog = OutletCatalog(outlets)
    logger.info(f"🏪 Catálogo: {len(catalog)} establecimientos cargados")
    return catalog


def load_road_graph(nodes_source, edges_source) -> RoadGraph:
    """
    Carga la red vial preextraída (nodos y aristas).

    Raises:
        IngestError: Extremo de arista inexistente, longitud no positiva,
            node_id duplicado o valor inválido (con el índice de fila/arista)
    """
    nodes_name, edges_name = str(nodes_source), str(edges_source)
    nodes = pd.read_csv(nodes_source, dtype=str, keep_default_na=False, encoding="utf-8")
    edges = pd.read_csv(edges_source, dtype=str, keep_default_na=False, encoding="utf-8")
    _require_columns(nodes.columns, NODE_COLUMNS, nodes_name)
    _require_columns(edges.columns, EDGE_COLUMNS, edges_name)

    ids = pd.to_numeric(nodes["node_id"], errors="coerce")
    lat = pd.to_numeric(nodes["lat"], errors="coerce")
    lon = pd.to_numeric(nodes["lon"], errors="coerce")
    bad = ids.isna() | (ids != np.floor(ids)) | ~lat.between(-90, 90) | ~lon.between(-180, 180)
    if bad.any():
        raise IngestError("nodo inválido", source=nodes_name, row=int(np.flatnonzero(bad.values)[0]))
    dup = ids.duplicated()
    if dup.any():
        raise IngestError("node_id duplicado", source=nodes_name, row=int(np.flatnonzero(dup.values)[0]))
    known = set(ids.astype(np.int64).tolist())

    triples: List[Tuple[int, int, float]] = []
    for i, rec in enumerate(edges.to_dict("records")):
        try:
            u, v = int(rec["from"]), int(rec["to"])
        except ValueError:
            raise IngestError("extremo de arista inválido", source=edges_name, row=i)
        if u not in known or v not in known:
            raise IngestError(f"arista referencia un nodo inexistente ({u}->{v})", source=edges_name, row=i)
        length = _parse_float(rec["length_m"], "length_m", edges_name, i)
        if length <= 0:
            raise IngestError("length_m debe ser positivo", source=edges_name, row=i)
        oneway = rec["oneway"].strip()
        if oneway not in ("0", "1"):
            raise IngestError(f"oneway debe ser 0/1, no {oneway!r}", source=edges_name, row=i)
        triples.append((u, v, length))
        if oneway == "0":
            triples.append((v, u, length))

    graph = RoadGraph(ids.astype(np.int64).values, lat.values, lon.values, triples)
    logger.info(f"🛣️ Red vial: {len(graph)} nodos, {graph.n_edges} aristas dirigidas")
    return graph


def load_tracts(source) -> List[Tract]:
    """
    Carga sectores censales desde un FeatureCollection GeoJSON.

    Returns:
        Lista de Tract ordenada por tract_id; population None si falta

    Raises:
        IngestError: Feature sin tract_id o tract_id duplicado
    """
    name = str(source)
    if hasattr(source, "read"):
        collection = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            collection = json.load(fh)

    tracts: List[Tract] = []
    seen = set()
    for i, feature in enumerate(collection.get("features", [])):
        props = feature.get("properties") or {}
        tract_id = props.get("tract_id")
        if tract_id is None or str(tract_id).strip() == "":
            raise IngestError("feature sin tract_id", source=name, row=i)
        tract_id = str(tract_id)
        if tract_id in seen:
            raise IngestError(f"tract_id duplicado {tract_id}", source=name, row=i)
        seen.add(tract_id)

        population = props.get("population")
        if population is not None:
            try:
                population = int(population)
            except (TypeError, ValueError):
                logger.warning(f"⚠️ Población inválida en tract {tract_id}; se marca como desconocida")
                population = None

        try:
            geometry = shape(feature["geometry"])
        except Exception as e:
            raise IngestError(f"geometría inválida: {e}", source=name, row=i)
        tracts.append(Tract(tract_id=tract_id, population=population, geometry=geometry))

    tracts.sort(key=lambda t: t.tract_id)
    logger.info(f"🗺️ {len(tracts)} sectores censales cargados")
    return tracts
