"""
Chequeos de robustez: barrido del radio de atribución y criterio de inclusión de establecimientos
"""
import logging
from functools import partial
from typing import List, Optional, Sequence, Tuple

import pandas as pd

from forage.models.metrics import METRIC_FIELDS
from forage.models.outlet import FoodVisit
from forage.models.stay import StayPoint
from forage.schemas.reports import SweepResult
from forage.services.metrics import MetricsContext, compute_metrics, flag_visits, summarize_population
from forage.services.outlet_catalog import attribute_visits
from forage.utils.parallel import map_ordered

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["setting", "category", "metric", "value", "n"]


def radius_label(radius_m: float) -> str:
    return f"r={radius_m:g}m"


def attribute_and_flag(stays: Sequence[StayPoint], ctx: MetricsContext,
                       radius_override: Optional[float] = None) -> List[FoodVisit]:
    visits = attribute_visits(stays, ctx.catalog, radius_override=radius_override)
    return flag_visits(visits, ctx.stays_by_id, ctx.homes, ctx.metrics.home_based_radius_m)


def _summarize(visits: Sequence[FoodVisit], ctx: MetricsContext, axis: str, setting: str,
               primary_only: bool) -> SweepResult:
    records, _ = compute_metrics(visits, ctx.homes, ctx.catalog, ctx.graph, primary_only=primary_only,
                                 params=ctx.metrics, routing=ctx.routing)
    summary = summarize_population(records, ctx.window_days, ctx.metrics.visited_weighting)
    return SweepResult(axis=axis, setting=setting, summary=summary)


def _radius_setting(radius_m: float, stays: Sequence[StayPoint], ctx: MetricsContext) -> SweepResult:
    visits = attribute_and_flag(stays, ctx, radius_override=radius_m)
    return _summarize(visits, ctx, "Radius", radius_label(radius_m), primary_only=False)


def radius_sweep(stays: Sequence[StayPoint], ctx: MetricsContext, radii: Sequence[float] = (50, 100, 150, 200),
                 workers: int = 1) -> List[SweepResult]:
    """
    Recalcula todas las métricas con un radio uniforme por configuración.

    Args:
        stays: Estancias candidatas (se reutilizan en todas las configuraciones)
        ctx: Residencias, catálogo, red y parámetros compartidos
        radii: Radios a evaluar, en metros
        workers: Configuraciones evaluadas en paralelo

    Returns:
        Un SweepResult por radio, en el orden configurado
    """
    logger.info(f"🔁 Barrido de radios {list(radii)} sobre {len(stays)} estancias")
    work = partial(_radius_setting, stays=list(stays), ctx=ctx)
    return map_ordered(work, [float(r) for r in radii], workers=workers)


def inclusion_comparison(stays: Sequence[StayPoint], ctx: MetricsContext,
                         radius_override: Optional[float] = None) -> Tuple[SweepResult, SweepResult]:
    """
    Compara todos los establecimientos contra solo los de venta primaria.

    La configuración primaria filtra el mismo conjunto de visitas, así que
    sus visitas son siempre un subconjunto de las de la configuración completa.
    """
    visits = attribute_and_flag(stays, ctx, radius_override=radius_override)
    everything = _summarize(visits, ctx, "Inclusion", "all", primary_only=False)
    primary = _summarize(visits, ctx, "Inclusion", "primary_only", primary_only=True)
    logger.info(
        f"🔁 Inclusión: {everything.summary.total_visits.get('All', 0)} visitas (todos) vs "
        f"{primary.summary.total_visits.get('All', 0)} (solo primarios)"
    )
    return everything, primary


def sweep_frame(results: Sequence[SweepResult]) -> pd.DataFrame:
    """Una fila por (configuración, categoría, métrica)"""
    rows = []
    for result in results:
        summary = result.summary
        for cat in summary.categories:
            rows.append((result.setting, cat, "total_visits", float(summary.total_visits[cat]),
                         summary.n_devices[cat]))
            for name in METRIC_FIELDS:
                cell = summary.metrics[name][cat]
                rows.append((result.setting, cat, name, cell.mean, cell.n))
            rows.append((result.setting, cat, "visits_per_week", summary.visits_per_week[cat],
                         summary.n_devices[cat]))
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)
