"""
Etapas del pipeline: cada una lee las salidas de sus predecesoras y escribe las suyas
"""
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

from forage.core.config import PipelineConfig, resolve_input
from forage.models.tract import TractAggregate
from forage.pipeline import files
from forage.schemas.reports import StageManifest
from forage.services import (
    home_inference, ingest, metrics, outlet_catalog, robustness, spatiotemporal, staypoints, synth
)
from forage.services.metrics import MetricsContext

logger = logging.getLogger(__name__)

INPUT_FILES = {
    "pings": "pings.csv",
    "outlets": "outlets.csv",
    "nodes": "nodes.csv",
    "edges": "edges.csv",
    "tracts": "tracts.geojson",
}


class StageRun:
    """Registro de una corrida de etapa: entradas, salidas, conteos y manifiesto"""

    def __init__(self, name: str, cfg: PipelineConfig):
        self.name = name
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.inputs: Dict[str, str] = {}
        self.outputs: List[str] = []
        self.row_counts: Dict[str, int] = {}
        self._started = time.perf_counter()
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / files.CONFIG_ECHO, "w", encoding="utf-8") as fh:
            fh.write(cfg.resolved_json())
            fh.write("\n")
        logger.info(f"🚀 Etapa {name} (salida en {self.out})")

    def path(self, filename: str) -> Path:
        return self.out / filename

    def input(self, key: str, path) -> Path:
        path = files.require(path)
        self.inputs[key] = str(path)
        return path

    def source(self, name: str) -> Path:
        """Archivo de entrada externo (configurado o `<out>/inputs/`)"""
        return self.input(name, resolve_input(self.cfg, name, INPUT_FILES[name]))

    def wrote(self, path: Path, rows: Optional[int] = None):
        self.outputs.append(Path(path).name)
        if rows is not None:
            self.row_counts[Path(path).name] = int(rows)

    def finish(self) -> StageManifest:
        manifest = StageManifest(
            stage=self.name,
            inputs=self.inputs,
            outputs=self.outputs,
            config_hash=self.cfg.config_hash(),
            row_counts=self.row_counts,
            wall_time_s=round(time.perf_counter() - self._started, 3),
        )
        files.write_json(manifest, self.out / files.MANIFESTS / f"{self.name}.json")
        logger.info(f"✅ Etapa {self.name} completada en {manifest.wall_time_s:.2f}s")
        return manifest


def _catalog(run: StageRun):
    return ingest.load_outlets(run.source("outlets"), run.cfg.visits.category_radii)


def _graph(run: StageRun):
    return ingest.load_road_graph(run.source("nodes"), run.source("edges"))


def run_synth(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("synth", cfg)
    world = synth.generate_world(cfg.synth, cfg.study, workers=cfg.workers)
    degrade = cfg.degrade
    if degrade.dropout_p > 0 or degrade.blackout_windows or degrade.trip_blackout_s > 0:
        extra = synth.trip_blackouts(world.truth, degrade.trip_blackout_s) if degrade.trip_blackout_s else []
        world.pings = synth.degrade(world.pings, degrade, extra)
    paths = synth.write_world(world, run.out)
    for key, path in paths.items():
        rows = {"pings": len(world.pings), "outlets": len(world.outlets),
                "nodes": len(world.nodes), "edges": len(world.edges)}.get(key)
        run.wrote(path, rows)
    return run.finish()


def run_ingest(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("ingest", cfg)
    frame, report = ingest.parse_pings(run.source("pings"), cfg.study)
    run.wrote(files.write_pings_clean(frame, run.path(files.PINGS_CLEAN)), len(frame))

    payload = {"pings": report.model_dump(mode="json")}
    # el resto de entradas se valida aquí para fallar temprano
    for name in ("outlets", "nodes", "tracts"):
        path = resolve_input(cfg, name, INPUT_FILES[name])
        if not path.exists():
            logger.warning(f"⚠️ No se encontró {path}; se validará en la etapa que lo use")
            continue
        if name == "outlets":
            payload["outlets"] = {"n_outlets": len(_catalog(run))}
        elif name == "nodes":
            graph = _graph(run)
            payload["road_graph"] = {"n_nodes": len(graph), "n_directed_edges": graph.n_edges}
        else:
            payload["tracts"] = {"n_tracts": len(ingest.load_tracts(run.source("tracts")))}
    run.wrote(files.write_json(payload, run.path(files.INGEST_REPORT)))
    return run.finish()


def run_homes(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("homes", cfg)
    frame = files.read_pings_clean(run.input("pings_clean", run.path(files.PINGS_CLEAN)))
    homes, report = home_inference.infer_all_homes(
        ingest.load_tracks(frame), cfg.study, cfg.homes, workers=cfg.workers
    )
    run.wrote(files.write_homes(homes, run.path(files.HOMES)), len(homes))
    payload = report.model_dump(mode="json")
    payload["fractions"] = report.fractions
    run.wrote(files.write_json(payload, run.path(files.HOME_COVERAGE)))
    return run.finish()


def run_stays(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("stays", cfg)
    frame = files.read_pings_clean(run.input("pings_clean", run.path(files.PINGS_CLEAN)))
    stays = staypoints.detect_all_stays(ingest.load_tracks(frame), cfg.stays, workers=cfg.workers)
    run.wrote(files.write_stays(stays, run.path(files.STAYS)), len(stays))
    return run.finish()


def run_visits(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("visits", cfg)
    stays = files.read_stays(run.input("stays", run.path(files.STAYS)))
    homes = files.read_homes(run.input("homes", run.path(files.HOMES)))
    catalog = _catalog(run)

    candidates = staypoints.filter_food_candidates(stays, cfg.stays.max_food_dur_min)
    index = catalog.build_index(max_radius_m=cfg.visits.index_max_radius_m)
    visits = outlet_catalog.attribute_visits(
        candidates, catalog, index, radius_override=cfg.visits.radius_override, workers=cfg.workers
    )
    visits = metrics.flag_visits(visits, {s.stay_id: s for s in stays}, homes, cfg.metrics.home_based_radius_m)
    visits = outlet_catalog.filter_primary(visits, cfg.visits.primary_only)
    run.row_counts["food_candidates"] = len(candidates)
    run.wrote(files.write_visits(visits, run.path(files.VISITS)), len(visits))
    return run.finish()


def run_metrics(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("metrics", cfg)
    visits = files.read_visits(run.input("visits", run.path(files.VISITS)))
    homes = files.read_homes(run.input("homes", run.path(files.HOMES)))
    catalog = _catalog(run)
    graph = _graph(run)

    records, diag = metrics.compute_metrics(
        visits, homes, catalog, graph, primary_only=cfg.visits.primary_only,
        params=cfg.metrics, routing=cfg.routing, workers=cfg.workers,
    )
    summary = metrics.summarize_population(records, cfg.study.window_days, cfg.metrics.visited_weighting)
    run.wrote(files.write_metrics(records, run.path(files.METRICS)), len(records))
    run.wrote(files.write_json(summary, run.path(files.SUMMARY)))
    run.wrote(files.write_json(diag, run.path(files.ROUTING_DIAGNOSTICS)))
    return run.finish()


def run_aggregate(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("aggregate", cfg)
    visits = files.read_visits(run.input("visits", run.path(files.VISITS)))
    records = files.read_metrics(run.input("metrics", run.path(files.METRICS)))
    homes = files.read_homes(run.input("homes", run.path(files.HOMES)))
    tracts = ingest.load_tracts(run.source("tracts"))
    params = cfg.aggregate

    profile = spatiotemporal.temporal_profile(visits, cfg.study.timezone, cfg.study.window_start,
                                              cfg.study.window_end)
    frame = profile.to_frame()
    run.wrote(files.write_csv(frame, run.path(files.TEMPORAL_PROFILE)), len(frame))

    aggregates, outside = spatiotemporal.tract_aggregates(records, homes, tracts)
    frame = files.models_frame(aggregates, list(TractAggregate.model_fields))
    run.wrote(files.write_csv(frame, run.path(files.TRACT_AGGREGATES)), len(frame))
    run.row_counts["homes_outside_tracts"] = outside

    for name, table in spatiotemporal.distance_histograms(records, params).items():
        run.wrote(files.write_csv(table, run.path(f"hist_{name}.csv")), len(table))
    table = spatiotemporal.sampling_rate_histogram(aggregates, params)
    run.wrote(files.write_csv(table, run.path(files.SAMPLING_RATE_HIST)), len(table))

    grid, overflow = spatiotemporal.density_tables(records, params)
    run.wrote(files.write_csv(grid, run.path(files.DENSITY_GRID)), len(grid))
    run.row_counts["density_overflow"] = overflow
    return run.finish()


def run_sweep(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("sweep", cfg)
    stays = files.read_stays(run.input("stays", run.path(files.STAYS)))
    homes = files.read_homes(run.input("homes", run.path(files.HOMES)))
    ctx = MetricsContext(
        homes=homes,
        catalog=_catalog(run),
        graph=_graph(run),
        stays_by_id={s.stay_id: s for s in stays},
        metrics=cfg.metrics,
        routing=cfg.routing,
        window_days=cfg.study.window_days,
    )
    candidates = staypoints.filter_food_candidates(stays, cfg.stays.max_food_dur_min)

    radius_results = robustness.radius_sweep(candidates, ctx, cfg.sweep.radii, workers=cfg.workers)
    inclusion_results = list(robustness.inclusion_comparison(candidates, ctx, cfg.visits.radius_override))

    frame = robustness.sweep_frame(radius_results)
    run.wrote(files.write_csv(frame, run.path(files.SWEEP_RADIUS)), len(frame))
    frame = robustness.sweep_frame(inclusion_results)
    run.wrote(files.write_csv(frame, run.path(files.SWEEP_INCLUSION)), len(frame))
    payload = [r.model_dump(mode="json") for r in radius_results + inclusion_results]
    run.wrote(files.write_json(payload, run.path(files.SWEEP_SUMMARIES)))
    return run.finish()


def run_evaluate(cfg: PipelineConfig) -> StageManifest:
    run = StageRun("evaluate", cfg)
    truth = synth.load_truth(run.input("truth", run.path(files.TRUTH)))
    homes = files.read_homes(run.input("homes", run.path(files.HOMES)))
    stays = files.read_stays(run.input("stays", run.path(files.STAYS)))
    visits = files.read_visits(run.input("visits", run.path(files.VISITS)))
    report = synth.evaluate(homes, stays, visits, truth, cfg.evaluate, cfg.stays)
    run.wrote(files.write_json(report, run.path(files.EVAL_REPORT)))
    return run.finish()


STAGES: Dict[str, Callable[[PipelineConfig], StageManifest]] = {
    "synth": run_synth,
    "ingest": run_ingest,
    "homes": run_homes,
    "stays": run_stays,
    "visits": run_visits,
    "metrics": run_metrics,
    "aggregate": run_aggregate,
    "sweep": run_sweep,
    "evaluate": run_evaluate,
}

CHAIN = ["ingest", "homes", "stays", "visits", "metrics", "aggregate", "sweep"]


def run_all(cfg: PipelineConfig) -> List[StageManifest]:
    """Encadena ingest -> sweep; evalúa si existe truth.json en el directorio de salida"""
    manifests = [STAGES[name](cfg) for name in CHAIN]
    if (Path(cfg.out_dir) / files.TRUTH).exists():
        manifests.append(run_evaluate(cfg))
    else:
        logger.info("ℹ️ Sin truth.json: se omite la evaluación")
    return manifests


def run_stage(name: str, cfg: PipelineConfig):
    if name == "all":
        return run_all(cfg)
    return STAGES[name](cfg)
