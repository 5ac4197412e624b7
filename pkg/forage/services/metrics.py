"""
Métricas individuales de adquisición de alimentos y resumen poblacional
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from forage.core.config import MetricsParams, RoutingParams
from forage.models.home import HomeLocation
from forage.models.metrics import METRIC_FIELDS, MetricsRecord
from forage.models.outlet import ALL_CATEGORY, FoodVisit, HomeBased, OutletCategory
from forage.models.stay import StayPoint
from forage.schemas.reports import PopulationSummary, RoutingDiagnostics, SummaryCell
from forage.services.outlet_catalog import OutletCatalog, filter_primary
from forage.services.routing import BatchRouter, RoadGraph, SnappedTargets
from forage.utils.geo import haversine, haversine_array
from forage.utils.parallel import map_ordered

logger = logging.getLogger(__name__)

# candidatos del KD-tree que se revisan con haversine
_KNN = 4


def home_based_flag(visit: FoodVisit, stays: Mapping[str, StayPoint], home: Optional[HomeLocation],
                    radius_m: float = 200.0) -> HomeBased:
    """
    Clasifica el origen de una visita.

    Returns:
        UnknownOrigin si la estancia no tiene origen enlazado (o no hay hogar),
        Yes si el origen está a <= radius_m del hogar, No en otro caso
    """
    stay = stays.get(visit.stay_id)
    if stay is None or stay.origin_stay_id is None or home is None:
        return HomeBased.UNKNOWN_ORIGIN
    origin = stays.get(stay.origin_stay_id)
    if origin is None:
        return HomeBased.UNKNOWN_ORIGIN
    d = haversine((origin.lat, origin.lon), (home.lat, home.lon))
    return HomeBased.YES if d <= radius_m else HomeBased.NO


def flag_visits(visits: Sequence[FoodVisit], stays: Mapping[str, StayPoint],
                homes: Mapping[str, HomeLocation], radius_m: float = 200.0) -> List[FoodVisit]:
    return [
        v.model_copy(update={"home_based": home_based_flag(v, stays, homes.get(v.device_id), radius_m)})
        for v in visits
    ]


def _unit_vectors(lat, lon) -> np.ndarray:
    la, lo = np.radians(np.asarray(lat, dtype=np.float64)), np.radians(np.asarray(lon, dtype=np.float64))
    return np.stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)], axis=1)


class _NearestEuclid:
    """Tienda más cercana por categoría; la cuerda 3D es monótona con el arco"""

    def __init__(self, catalog: OutletCatalog, groups: Dict[str, np.ndarray]):
        self.catalog = catalog
        self.groups = groups
        self.trees = {
            name: cKDTree(_unit_vectors(catalog.lat[pos], catalog.lon[pos]))
            for name, pos in groups.items() if pos.size
        }

    def query(self, name: str, lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
        out = np.full(lat.shape[0], np.nan)
        tree = self.trees.get(name)
        if tree is None or lat.size == 0:
            return out
        pos = self.groups[name]
        k = min(_KNN, pos.size)
        _, idx = tree.query(_unit_vectors(lat, lon), k=k)
        idx = np.asarray(idx).reshape(lat.shape[0], k)
        cand = pos[idx]
        d = haversine_array(lat[:, None], lon[:, None], self.catalog.lat[cand], self.catalog.lon[cand])
        return d.min(axis=1)


@dataclass
class MetricsContext:
    """Entradas compartidas entre la etapa de métricas y los barridos de robustez"""
    homes: Dict[str, HomeLocation]
    catalog: OutletCatalog
    graph: RoadGraph
    stays_by_id: Dict[str, StayPoint]
    metrics: MetricsParams = field(default_factory=MetricsParams)
    routing: RoutingParams = field(default_factory=RoutingParams)
    window_days: float = 45.0


def _category_groups(catalog: OutletCatalog) -> Dict[str, np.ndarray]:
    groups = {
        c.value: np.array([i for i, o in enumerate(catalog.outlets) if o.category == c], dtype=np.int64)
        for c in catalog.categories()
    }
    groups[ALL_CATEGORY] = np.arange(len(catalog), dtype=np.int64)
    return groups


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def _device_records(device_id: str, visits: List[FoodVisit], categories: List[str],
                    catalog: OutletCatalog, home: HomeLocation,
                    nearest_euclid: Dict[str, float], nearest_network: Dict[str, float],
                    network_row: np.ndarray, weighting: str) -> List[MetricsRecord]:
    records = []
    for name in categories:
        subset = visits if name == ALL_CATEGORY else [v for v in visits if v.category.value == name]
        per_store: Dict[str, int] = defaultdict(int)
        for v in subset:
            per_store[v.outlet_id] += 1
        stores = sorted(per_store)

        euclid, network, weights = [], [], []
        for outlet_id in stores:
            pos = catalog.position(outlet_id)
            o = catalog.outlets[pos]
            euclid.append(haversine((home.lat, home.lon), (o.lat, o.lon)))
            network.append(network_row[pos])
            weights.append(per_store[outlet_id] if weighting == "visit" else 1)
        euclid_arr = np.array(euclid, dtype=np.float64)
        network_arr = np.array(network, dtype=np.float64)
        w = np.array(weights, dtype=np.float64)

        mean_euclid = float(np.average(euclid_arr, weights=w)) if stores else None
        ok = ~np.isnan(network_arr)
        mean_network = float(np.average(network_arr[ok], weights=w[ok])) if ok.any() else None

        known = [v for v in subset if v.home_based in (HomeBased.YES, HomeBased.NO)]
        n_yes = sum(1 for v in known if v.home_based == HomeBased.YES)

        ne = nearest_euclid.get(name)
        nn = nearest_network.get(name)
        records.append(MetricsRecord(
            device_id=device_id,
            category=name,
            n_visits=len(subset),
            n_unique_stores=len(stores),
            mean_visited_euclid_m=mean_euclid,
            mean_visited_network_m=mean_network,
            min_visited_euclid_m=float(euclid_arr.min()) if stores else None,
            nearest_store_euclid_m=None if ne is None or np.isnan(ne) else float(ne),
            nearest_store_network_m=None if nn is None or np.isnan(nn) else float(nn),
            n_known_origin=len(known),
            n_home_based=n_yes,
            home_based_share=(n_yes / len(known)) if known else None,
        ))
    return records


def _metrics_batch(batch: Sequence[Tuple[HomeLocation, List[FoodVisit]]], catalog: OutletCatalog,
                   groups: Dict[str, np.ndarray], nearest: _NearestEuclid, router: BatchRouter,
                   categories: List[str], params: MetricsParams) -> Tuple[List[MetricsRecord], RoutingDiagnostics]:
    lat = np.array([h.lat for h, _ in batch], dtype=np.float64)
    lon = np.array([h.lon for h, _ in batch], dtype=np.float64)
    euclid_by_cat = {name: nearest.query(name, lat, lon) for name in categories}
    rows, home_snapped = router.home_rows(list(zip(lat.tolist(), lon.tolist())))

    network_by_cat: Dict[str, np.ndarray] = {}
    for name in categories:
        pos = groups.get(name, np.empty(0, dtype=np.int64))
        sub = rows[:, pos] if pos.size else np.full((len(batch), 1), np.nan)
        best = np.full(len(batch), np.nan)
        has = ~np.all(np.isnan(sub), axis=1)
        if has.any():
            best[has] = np.nanmin(sub[has], axis=1)
        network_by_cat[name] = best

    records: List[MetricsRecord] = []
    pairs = []
    for i, (home, visits) in enumerate(batch):
        records.extend(_device_records(
            home.device_id, visits, categories, catalog, home,
            {name: euclid_by_cat[name][i] for name in categories},
            {name: network_by_cat[name][i] for name in categories},
            rows[i], params.visited_weighting,
        ))
        for outlet_id in sorted({v.outlet_id for v in visits}):
            pairs.append((i, catalog.position(outlet_id)))

    diag = router.diagnose(rows, home_snapped, np.array(pairs, dtype=np.int64).reshape(-1, 2))
    return records, diag


def compute_metrics(
    visits: Sequence[FoodVisit],
    homes: Mapping[str, HomeLocation],
    catalog: OutletCatalog,
    graph: RoadGraph,
    primary_only: bool = False,
    params: MetricsParams = MetricsParams(),
    routing: RoutingParams = RoutingParams(),
    workers: int = 1,
) -> Tuple[List[MetricsRecord], RoutingDiagnostics]:
    """
    Calcula las métricas por dispositivo y categoría (más la fila "All").

    Args:
        visits: Visitas atribuidas (con home_based ya marcado)
        homes: Residencias inferidas; los dispositivos sin hogar se excluyen
        catalog: Catálogo completo
        graph: Red vial para distancias de red
        primary_only: Restringe visitas y catálogo a venta primaria de alimentos
        params: Ponderación de las distancias visitadas
        routing: Ajuste a la red y tamaño de lote de Dijkstra
        workers: Procesos para repartir los lotes de hogares

    Returns:
        Tupla (registros ordenados por device_id y categoría, diagnóstico de ruteo)
    """
    scope = filter_primary(catalog, primary_only)
    in_scope = [v for v in filter_primary(list(visits), primary_only) if v.outlet_id in scope]
    categories = [c.value for c in scope.categories()] + [ALL_CATEGORY]

    by_device: Dict[str, List[FoodVisit]] = defaultdict(list)
    for v in in_scope:
        by_device[v.device_id].append(v)

    ordered = [(homes[d], by_device.get(d, [])) for d in sorted(homes)]
    if not ordered:
        logger.warning("⚠️ No hay dispositivos con residencia inferida; métricas vacías")
        return [], RoutingDiagnostics()

    groups = _category_groups(scope)
    targets = SnappedTargets(scope.lat, scope.lon, graph, routing.max_snap_m)
    router = BatchRouter(graph, targets, routing.max_snap_m, routing.batch_size)

    # lotes acotados: la matriz hogares x establecimientos vive por lote
    size = routing.batch_size
    batches = [ordered[i:i + size] for i in range(0, len(ordered), size)]
    work = partial(_metrics_batch, catalog=scope, groups=groups, nearest=_NearestEuclid(scope, groups),
                   router=router, categories=categories, params=params)
    parts = map_ordered(work, batches, workers=workers)

    records: List[MetricsRecord] = []
    diag = RoutingDiagnostics()
    for recs, d in parts:
        records.extend(recs)
        diag = diag.merge(d)

    dropped = sum(1 for v in in_scope if v.device_id not in homes)
    if dropped:
        logger.info(f"ℹ️ {dropped} visitas de dispositivos sin residencia quedan fuera de las métricas")
    logger.info(
        f"📊 Métricas: {len(ordered)} dispositivos x {len(categories)} categorías "
        f"({'solo primarios' if primary_only else 'todos los establecimientos'})"
    )
    if diag.n_unsnappable or diag.n_unreachable:
        logger.warning(
            f"⚠️ Distancia de red indefinida en {diag.n_unsnappable + diag.n_unreachable}/{diag.n_pairs} pares "
            f"(sin ajuste {diag.n_unsnappable}, inalcanzables {diag.n_unreachable})"
        )
    return records, diag


def summarize_population(records: Sequence[MetricsRecord], window_days: float = 45.0,
                         visited_weighting: str = "store") -> PopulationSummary:
    """
    Promedios no ponderados por categoría; los valores indefinidos se excluyen
    de su promedio y el conteo n lo refleja.
    """
    by_category: Dict[str, List[MetricsRecord]] = defaultdict(list)
    for r in records:
        by_category[r.category].append(r)

    order = [c.value for c in OutletCategory] + [ALL_CATEGORY]
    categories = [c for c in order if c in by_category]
    summary = PopulationSummary(categories=categories, visited_weighting=visited_weighting)
    weeks = window_days / 7.0

    for name in METRIC_FIELDS:
        summary.metrics[name] = {}
    for cat in categories:
        recs = by_category[cat]
        summary.n_devices[cat] = len(recs)
        summary.total_visits[cat] = sum(r.n_visits for r in recs)
        summary.total_known_origin[cat] = sum(r.n_known_origin for r in recs)
        for name in METRIC_FIELDS:
            values = [getattr(r, name) for r in recs if getattr(r, name) is not None]
            summary.metrics[name][cat] = SummaryCell(mean=_mean(values), n=len(values))
        mean_visits = summary.metrics["n_visits"][cat].mean
        summary.visits_per_week[cat] = mean_visits / weeks if mean_visits is not None and weeks > 0 else None
    return summary
