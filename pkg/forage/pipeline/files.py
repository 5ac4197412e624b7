"""
Lectura y escritura de los archivos intermedios de cada etapa.

Los CSV se escriben con la representación float por defecto de pandas
(la más corta que reproduce el valor), de modo que releerlos con
float() devuelve exactamente los mismos números.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from forage.core.errors import IngestError, MissingInputError
from forage.models.home import HomeLocation
from forage.models.metrics import METRIC_FIELDS, MetricsRecord
from forage.models.outlet import FoodVisit
from forage.models.stay import StayPoint

logger = logging.getLogger(__name__)

PINGS_CLEAN = "pings_clean.csv"
INGEST_REPORT = "ingest_report.json"
HOMES = "homes.csv"
HOME_COVERAGE = "home_coverage.json"
STAYS = "stays.csv"
VISITS = "visits.csv"
METRICS = "metrics.csv"
SUMMARY = "summary.json"
ROUTING_DIAGNOSTICS = "routing_diagnostics.json"
TEMPORAL_PROFILE = "temporal_profile.csv"
TRACT_AGGREGATES = "tract_aggregates.csv"
DENSITY_GRID = "density_grid.csv"
SAMPLING_RATE_HIST = "hist_sampling_rate.csv"
SWEEP_RADIUS = "sweep_radius.csv"
SWEEP_INCLUSION = "sweep_inclusion.csv"
SWEEP_SUMMARIES = "sweep_summaries.json"
EVAL_REPORT = "eval_report.json"
TRUTH = "truth.json"
CONFIG_ECHO = "config.resolved.json"
MANIFESTS = "manifests"

PING_COLUMNS = ["device_id", "lat", "lon", "ts"]
HOME_COLUMNS = ["device_id", "lat", "lon", "method", "support", "ix", "iy"]
STAY_COLUMNS = ["stay_id", "device_id", "lat", "lon", "start_ts", "end_ts", "n_pings", "origin_stay_id"]
VISIT_COLUMNS = ["visit_id", "device_id", "outlet_id", "stay_id", "start_ts", "end_ts",
                 "distance_m", "home_based", "category", "primary_food"]
METRIC_COLUMNS = ["device_id", "category"] + METRIC_FIELDS


def require(path) -> Path:
    """Verifica que exista la salida de una etapa previa"""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(path)
    return path


def write_csv(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8")
    return path


def write_json(payload, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def read_json(path) -> dict:
    with open(require(path), "r", encoding="utf-8") as fh:
        return json.load(fh)


def models_frame(items: Iterable[BaseModel], columns: List[str]) -> pd.DataFrame:
    rows = [item.model_dump(mode="json") for item in items]
    if not rows:
        return pd.DataFrame(columns=columns)
    return pd.DataFrame(rows)[columns]


def _records(path, columns: Sequence[str]) -> List[Dict[str, Optional[str]]]:
    """Filas como dicts de cadenas; las celdas vacías pasan a None"""
    frame = pd.read_csv(require(path), dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise IngestError(f"faltan columnas {missing}", source=str(path))
    return [
        {k: (v if v != "" else None) for k, v in rec.items()}
        for rec in frame[list(columns)].to_dict("records")
    ]


def write_pings_clean(frame: pd.DataFrame, path) -> Path:
    return write_csv(frame[PING_COLUMNS], path)


def read_pings_clean(path) -> pd.DataFrame:
    frame = pd.read_csv(require(path), dtype={"device_id": str}, keep_default_na=False,
                        float_precision="round_trip", encoding="utf-8")
    frame["ts"] = frame["ts"].astype(np.int64)
    return frame[PING_COLUMNS]


def write_homes(homes: Dict[str, HomeLocation], path) -> Path:
    return write_csv(models_frame((homes[d] for d in sorted(homes)), HOME_COLUMNS), path)


def read_homes(path) -> Dict[str, HomeLocation]:
    homes = {}
    for rec in _records(path, HOME_COLUMNS):
        home = HomeLocation(
            device_id=rec["device_id"],
            ix=int(rec["ix"]),
            iy=int(rec["iy"]),
            lat=float(rec["lat"]),
            lon=float(rec["lon"]),
            method=rec["method"],
            support=int(rec["support"]),
        )
        homes[home.device_id] = home
    return homes


def write_stays(stays: Sequence[StayPoint], path) -> Path:
    return write_csv(models_frame(stays, STAY_COLUMNS), path)


def read_stays(path) -> List[StayPoint]:
    return [
        StayPoint(
            stay_id=rec["stay_id"],
            device_id=rec["device_id"],
            lat=float(rec["lat"]),
            lon=float(rec["lon"]),
            start_ts=int(rec["start_ts"]),
            end_ts=int(rec["end_ts"]),
            n_pings=int(rec["n_pings"]),
            origin_stay_id=rec["origin_stay_id"],
        )
        for rec in _records(path, STAY_COLUMNS)
    ]


def write_visits(visits: Sequence[FoodVisit], path) -> Path:
    frame = models_frame(visits, VISIT_COLUMNS)
    if not frame.empty:
        frame["primary_food"] = frame["primary_food"].astype(int)
    return write_csv(frame, path)


def read_visits(path) -> List[FoodVisit]:
    return [
        FoodVisit(
            visit_id=rec["visit_id"],
            device_id=rec["device_id"],
            outlet_id=rec["outlet_id"],
            stay_id=rec["stay_id"],
            start_ts=int(rec["start_ts"]),
            end_ts=int(rec["end_ts"]),
            distance_m=float(rec["distance_m"]),
            home_based=rec["home_based"],
            category=rec["category"],
            primary_food=rec["primary_food"] == "1",
        )
        for rec in _records(path, VISIT_COLUMNS)
    ]


def write_metrics(records: Sequence[MetricsRecord], path) -> Path:
    return write_csv(models_frame(records, METRIC_COLUMNS), path)


def read_metrics(path) -> List[MetricsRecord]:
    out = []
    for rec in _records(path, METRIC_COLUMNS):
        values = {}
        for name in METRIC_FIELDS:
            raw = rec[name]
            if raw is None:
                values[name] = None
            elif name.startswith("n_"):
                values[name] = int(float(raw))
            else:
                values[name] = float(raw)
        out.append(MetricsRecord(device_id=rec["device_id"], category=rec["category"], **values))
    return out
