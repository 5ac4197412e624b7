"""
Análisis agregados: perfiles temporales, agregados por sector censal,
histogramas de distancias y grillas de densidad (tablas listas para graficar)
"""
import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from forage.core.config import AggregateParams
from forage.models.home import HomeLocation
from forage.models.metrics import MetricsRecord
from forage.models.outlet import ALL_CATEGORY, FoodVisit, OutletCategory
from forage.models.tract import Tract, TractAggregate
from forage.utils.geo import TractLocator
from forage.utils.timeutils import local_calendar, local_date, resolve_timezone

logger = logging.getLogger(__name__)

WEEKDAY_NAMES = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
PROFILE_COLUMNS = ["category", "dimension", "bin", "count", "share"]
CATEGORY_ORDER = [c.value for c in OutletCategory] + [ALL_CATEGORY]


def _ordered_categories(present) -> List[str]:
    return [c for c in CATEGORY_ORDER if c in set(present)]


@dataclass
class TemporalProfile:
    """Conteos de visitas por hora (laboral / fin de semana), día de la semana y fecha"""
    dates: List[date]
    hour_weekday: Dict[str, np.ndarray] = field(default_factory=dict)
    hour_weekend: Dict[str, np.ndarray] = field(default_factory=dict)
    day_of_week: Dict[str, np.ndarray] = field(default_factory=dict)
    daily: Dict[str, np.ndarray] = field(default_factory=dict)

    def total(self, category: str) -> int:
        return int(self.daily[category].sum())

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for cat in self.daily:
            dims = [
                ("hour_weekday", [str(h) for h in range(24)], self.hour_weekday[cat]),
                ("hour_weekend", [str(h) for h in range(24)], self.hour_weekend[cat]),
                ("day_of_week", WEEKDAY_NAMES, self.day_of_week[cat]),
                ("date", [d.isoformat() for d in self.dates], self.daily[cat]),
            ]
            total = self.total(cat)
            for dim, labels, counts in dims:
                for label, n in zip(labels, counts.tolist()):
                    rows.append((cat, dim, label, int(n), n / total if total else 0.0))
        return pd.DataFrame(rows, columns=PROFILE_COLUMNS)


def temporal_profile(visits: Sequence[FoodVisit], timezone: str,
                     window_start: int, window_end: int) -> TemporalProfile:
    """
    Agrupa visitas por hora local y día de su start_ts.

    Args:
        visits: Visitas atribuidas
        timezone: Zona IANA del estudio
        window_start: Inicio de la ventana (epoch UTC, incluido)
        window_end: Fin de la ventana (epoch UTC, excluido)

    Returns:
        TemporalProfile con una entrada por categoría presente más "All"
    """
    zone = resolve_timezone(timezone)
    first, last = local_date(window_start, zone), local_date(window_end - 1, zone)
    dates = [first + timedelta(days=k) for k in range((last - first).days + 1)]
    profile = TemporalProfile(dates=dates)

    categories = _ordered_categories([v.category.value for v in visits] + [ALL_CATEGORY])
    ts = np.array([v.start_ts for v in visits], dtype=np.int64)
    cats = np.array([v.category.value for v in visits], dtype=object)
    cal = local_calendar(ts, zone)
    day_index = (cal.date - np.datetime64(first, "D")).astype(np.int64)

    for cat in categories:
        mask = np.ones(len(ts), dtype=bool) if cat == ALL_CATEGORY else cats == cat
        weekend = cal.is_weekend
        profile.hour_weekday[cat] = np.bincount(cal.hour[mask & ~weekend], minlength=24)
        profile.hour_weekend[cat] = np.bincount(cal.hour[mask & weekend], minlength=24)
        profile.day_of_week[cat] = np.bincount(cal.weekday[mask], minlength=7)
        days = day_index[mask]
        inside = (days >= 0) & (days < len(dates))
        if not inside.all():
            logger.warning(f"⚠️ {int((~inside).sum())} visitas fuera de la ventana en el perfil diario")
        profile.daily[cat] = np.bincount(days[inside], minlength=len(dates))
    return profile


def tract_aggregates(records: Sequence[MetricsRecord], homes: Mapping[str, HomeLocation],
                     tracts: Sequence[Tract]) -> Tuple[List[TractAggregate], int]:
    """
    Agrega métricas individuales al sector censal que contiene cada residencia.

    Returns:
        Tupla (agregados por (tract_id, categoría), residencias fuera de todo sector)
    """
    locator = TractLocator(tracts)
    device_ids = sorted(homes)
    located = locator.locate_many(
        [homes[d].lat for d in device_ids], [homes[d].lon for d in device_ids]
    )
    tract_of = dict(zip(device_ids, located))
    outside = sum(1 for t in located if t is None)

    members: Dict[str, List[str]] = {t.tract_id: [] for t in locator.tracts}
    for device_id, tract_id in tract_of.items():
        if tract_id is not None:
            members[tract_id].append(device_id)

    by_key: Dict[Tuple[str, str], MetricsRecord] = {(r.device_id, r.category): r for r in records}
    categories = _ordered_categories([r.category for r in records]) or [ALL_CATEGORY]

    def mean_of(devices: List[str], cat: str, name: str, visited: bool = False) -> Optional[float]:
        values = []
        for d in devices:
            rec = by_key.get((d, cat))
            if rec is None or (visited and rec.n_visits == 0):
                continue
            value = getattr(rec, name)
            if value is not None:
                values.append(value)
        return float(np.mean(values)) if values else None

    def diff(a: Optional[float], b: Optional[float]) -> Optional[float]:
        return a - b if a is not None and b is not None else None

    result: List[TractAggregate] = []
    for tract in locator.tracts:
        devices = members[tract.tract_id]
        rate = None
        if tract.population:
            rate = len(devices) / tract.population
        for cat in categories:
            ne = mean_of(devices, cat, "nearest_store_euclid_m")
            ve = mean_of(devices, cat, "mean_visited_euclid_m", visited=True)
            nn = mean_of(devices, cat, "nearest_store_network_m")
            vn = mean_of(devices, cat, "mean_visited_network_m", visited=True)
            result.append(TractAggregate(
                tract_id=tract.tract_id,
                category=cat,
                n_sampled_homes=len(devices),
                population=tract.population,
                sampling_rate=rate,
                mean_nearest_euclid_m=ne,
                mean_visited_euclid_m=ve,
                diff_euclid_m=diff(ve, ne),
                mean_nearest_network_m=nn,
                mean_visited_network_m=vn,
                diff_network_m=diff(vn, nn),
            ))

    if outside:
        logger.warning(f"⚠️ {outside} residencias quedan fuera de todos los sectores censales")
    logger.info(f"🗺️ {len(locator.tracts)} sectores agregados ({len(device_ids) - outside} residencias ubicadas)")
    return result, outside


@dataclass
class Histogram:
    """Bins [k*w, (k+1)*w) hasta max_value, más un bin de desborde"""
    bin_width: float
    max_value: float
    counts: np.ndarray
    overflow: int

    @property
    def n_total(self) -> int:
        return int(self.counts.sum()) + self.overflow

    @property
    def edges(self) -> np.ndarray:
        left = np.arange(self.counts.size + 1, dtype=np.float64) * self.bin_width
        return np.minimum(left, self.max_value)

    @property
    def widths(self) -> np.ndarray:
        """Ancho real de cada bin; el último puede ser más angosto que bin_width"""
        return np.diff(self.edges)

    @property
    def densities(self) -> np.ndarray:
        if self.n_total == 0:
            return np.zeros_like(self.counts, dtype=np.float64)
        return self.counts / (self.n_total * self.widths)

    def to_frame(self) -> pd.DataFrame:
        edges = self.edges
        frame = pd.DataFrame({
            "bin_left": np.append(edges[:-1], self.max_value),
            "bin_right": np.append(edges[1:], np.inf),
            "count": np.append(self.counts, self.overflow).astype(np.int64),
            "density": np.append(self.densities, np.nan),
        })
        return frame


def histogram(values, bin_width: float, max_value: float) -> Histogram:
    """
    Histograma con bins cerrados a izquierda; valores >= max_value van al desborde.
    Los valores no finitos se ignoran.
    """
    if bin_width <= 0:
        raise ValueError("bin_width debe ser positivo")
    if max_value <= 0:
        raise ValueError("max_value debe ser positivo")
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    n_bins = max(int(np.ceil(max_value / bin_width - 1e-9)), 1)
    finite = v < max_value
    idx = np.floor(np.clip(v[finite], 0.0, None) / bin_width).astype(np.int64)
    counts = np.bincount(np.minimum(idx, n_bins - 1), minlength=n_bins)
    return Histogram(bin_width=bin_width, max_value=max_value, counts=counts, overflow=int((~finite).sum()))


def distance_histogram(values, bin_width_m: float, max_m: float) -> Histogram:
    return histogram(values, bin_width_m, max_m)


_HIST_FIELDS = {
    "nearest_euclid": "nearest_store_euclid_m",
    "visited_euclid": "mean_visited_euclid_m",
    "nearest_network": "nearest_store_network_m",
    "visited_network": "mean_visited_network_m",
}


def distance_histograms(records: Sequence[MetricsRecord], params: AggregateParams = AggregateParams()
                        ) -> Dict[str, pd.DataFrame]:
    """Un histograma por {nearest, visited} x {euclid, network}, con una sección por categoría"""
    categories = _ordered_categories([r.category for r in records])
    tables = {}
    for name, attr in _HIST_FIELDS.items():
        frames = []
        for cat in categories:
            values = [getattr(r, attr) for r in records if r.category == cat and getattr(r, attr) is not None]
            frame = distance_histogram(values, params.hist_bin_m, params.hist_max_m).to_frame()
            frame.insert(0, "category", cat)
            frames.append(frame)
        tables[name] = (pd.concat(frames, ignore_index=True) if frames
                        else pd.DataFrame(columns=["category", "bin_left", "bin_right", "count", "density"]))
    return tables


def sampling_rate_histogram(aggregates: Sequence[TractAggregate],
                            params: AggregateParams = AggregateParams()) -> pd.DataFrame:
    rates = {a.tract_id: a.sampling_rate for a in aggregates if a.sampling_rate is not None}
    return histogram(list(rates.values()), params.sampling_rate_bin, params.sampling_rate_max).to_frame()


@dataclass
class DensityGrid:
    """Conteos 2D sobre (x = distancia a la más cercana, y = distancia visitada)"""
    cell_m: float
    max_m: float
    counts: np.ndarray
    overflow: int

    def to_frame(self) -> pd.DataFrame:
        ix, iy = np.nonzero(self.counts)
        return pd.DataFrame({
            "x_left_m": ix * self.cell_m,
            "y_left_m": iy * self.cell_m,
            "count": self.counts[ix, iy].astype(np.int64),
        })


def density_grid(pairs: Sequence[Tuple[float, float]], cell_m: float, max_m: float = 20000.0) -> DensityGrid:
    """
    Histograma 2D de pares (más cercana, visitada). Pares con alguna
    coordenada >= max_m se cuentan en overflow.
    """
    n = int(np.ceil(max_m / cell_m))
    counts = np.zeros((n, n), dtype=np.int64)
    if len(pairs) == 0:
        return DensityGrid(cell_m=cell_m, max_m=max_m, counts=counts, overflow=0)
    xy = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    inside = (xy[:, 0] < max_m) & (xy[:, 1] < max_m)
    ix = np.floor(xy[inside, 0] / cell_m).astype(np.int64)
    iy = np.floor(xy[inside, 1] / cell_m).astype(np.int64)
    np.add.at(counts, (np.minimum(ix, n - 1), np.minimum(iy, n - 1)), 1)
    return DensityGrid(cell_m=cell_m, max_m=max_m, counts=counts, overflow=int((~inside).sum()))


def density_tables(records: Sequence[MetricsRecord], params: AggregateParams = AggregateParams()
                   ) -> Tuple[pd.DataFrame, int]:
    """
    Grillas de densidad por categoría y tipo de distancia.

    El eje y usa la media de las tiendas visitadas (o el mínimo euclidiano
    con density_y = "min"); solo entran dispositivos con visitas.

    Returns:
        Tupla (tabla larga con celdas no vacías, total de pares en desborde)
    """
    y_euclid = "min_visited_euclid_m" if params.density_y == "min" else "mean_visited_euclid_m"
    axes = [
        ("euclid", "nearest_store_euclid_m", y_euclid),
        ("network", "nearest_store_network_m", "mean_visited_network_m"),
    ]
    frames, overflow = [], 0
    for cat in _ordered_categories([r.category for r in records]):
        for metric, x_attr, y_attr in axes:
            pairs = [
                (getattr(r, x_attr), getattr(r, y_attr)) for r in records
                if r.category == cat and r.n_visits > 0
                and getattr(r, x_attr) is not None and getattr(r, y_attr) is not None
            ]
            grid = density_grid(pairs, params.density_cell_m, params.density_max_m)
            overflow += grid.overflow
            frame = grid.to_frame()
            frame.insert(0, "metric", metric)
            frame.insert(0, "category", cat)
            frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["category", "metric", "x_left_m", "y_left_m", "count"]), 0
    return pd.concat(frames, ignore_index=True), overflow
