import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from forage.core.errors import ConfigError
from forage.models.outlet import OutletCategory


class Settings(BaseSettings):
    # Logging Settings
    LOG: str = "INFO"
    LOG_FILE: Optional[str] = None

    model_config = SettingsConfigDict(
        env_prefix="FORAGE_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    def setup_logging(self):
        """Configurar logging para el pipeline"""
        log_level = getattr(logging, self.LOG.upper(), logging.INFO)
        log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

        handlers = [logging.StreamHandler()]
        if self.LOG_FILE:
            os.makedirs(os.path.dirname(self.LOG_FILE) or ".", exist_ok=True)
            handlers.append(logging.FileHandler(self.LOG_FILE, encoding='utf-8'))

        logging.basicConfig(level=log_level, format=log_format, handlers=handlers, force=True)


# Instancia global de configuración de entorno
settings = Settings()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StudyConfig(_Section):
    # 2022-09-01 00:00 a 2022-10-16 00:00, hora de Nueva York (45 días)
    window_start: int = 1662004800
    window_end: int = 1665892800
    bbox: List[float] = [30.10, -82.05, 30.60, -81.30]
    timezone: str = "America/New_York"
    grid_cell_m: float = Field(default=20.0, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.window_start >= self.window_end:
            raise ValueError("window_start debe ser menor que window_end")
        if len(self.bbox) != 4:
            raise ValueError("bbox requiere (lat_min, lon_min, lat_max, lon_max)")
        lat_min, lon_min, lat_max, lon_max = self.bbox
        if not (-90 <= lat_min < lat_max <= 90 and -180 <= lon_min < lon_max <= 180):
            raise ValueError("bbox mal formado")
        return self

    @property
    def window_days(self) -> float:
        return (self.window_end - self.window_start) / 86400.0


class PathsConfig(_Section):
    """Rutas de entrada; None significa `<out>/inputs/<archivo>`"""
    pings: Optional[str] = None
    outlets: Optional[str] = None
    nodes: Optional[str] = None
    edges: Optional[str] = None
    tracts: Optional[str] = None


class HomeParams(_Section):
    min_night_pings: int = Field(default=10, ge=1)
    min_weekend_pings: int = Field(default=10, ge=1)
    night_start_hour: int = Field(default=22, ge=0, le=23)
    night_end_hour: int = Field(default=6, ge=0, le=23)


class StayParams(_Section):
    dist_threshold_m: float = Field(default=100.0, gt=0)
    min_dur_min: float = Field(default=5.0, ge=0)
    max_dur_min: float = Field(default=720.0, gt=0)
    max_track_gap_s: int = Field(default=300, ge=0)
    max_food_dur_min: float = Field(default=120.0, gt=0)


class VisitParams(_Section):
    radius_override: Optional[float] = Field(default=None, gt=0)
    primary_only: bool = False
    index_max_radius_m: float = Field(default=1000.0, gt=0)
    category_radii: Dict[OutletCategory, float] = {
        OutletCategory.LARGE_GROCERY: 150.0,
        OutletCategory.BIG_BOX: 200.0,
        OutletCategory.SMALL_HEALTHY: 50.0,
        OutletCategory.PROCESSED_FOOD: 50.0,
    }


class RoutingParams(_Section):
    max_snap_m: float = Field(default=500.0, gt=0)
    batch_size: int = Field(default=256, ge=1)


class MetricsParams(_Section):
    home_based_radius_m: float = Field(default=200.0, gt=0)
    visited_weighting: str = Field(default="store", pattern="^(store|visit)$")


class AggregateParams(_Section):
    hist_bin_m: float = Field(default=500.0, gt=0)
    hist_max_m: float = Field(default=30000.0, gt=0)
    density_cell_m: float = Field(default=500.0, gt=0)
    density_max_m: float = Field(default=20000.0, gt=0)
    density_y: str = Field(default="mean", pattern="^(mean|min)$")
    sampling_rate_bin: float = Field(default=0.02, gt=0)
    sampling_rate_max: float = Field(default=0.5, gt=0)


class SweepParams(_Section):
    radii: List[float] = [50.0, 100.0, 150.0, 200.0]


class SynthParams(_Section):
    n_devices: int = Field(default=100, ge=0)
    n_outlets_per_category: int = Field(default=10, ge=0)
    grid_extent_m: float = Field(default=6000.0, gt=0)
    seed: int = 42
    n_days: int = Field(default=7, ge=1)
    cadence_s: int = Field(default=60, ge=1)
    noise_sigma_m: float = Field(default=15.0, ge=0)
    noise_cap_m: float = Field(default=35.0, ge=0)
    low_accuracy_fraction: float = Field(default=0.0, ge=0, lt=1)
    block_m: float = Field(default=250.0, gt=0)
    tracts_k: int = Field(default=3, ge=1)
    weekday_food_rate: float = Field(default=0.35, ge=0, le=1)
    weekend_food_rate: float = Field(default=0.7, ge=0, le=1)
    holidays: List[str] = ["2022-09-05"]


class BlackoutWindow(_Section):
    start_ts: int
    end_ts: int
    device_id: Optional[str] = None


class DegradeParams(_Section):
    dropout_p: float = Field(default=0.0, ge=0, lt=1)
    blackout_windows: List[BlackoutWindow] = []
    trip_blackout_s: int = Field(default=0, ge=0)
    seed: int = 7


class EvalParams(_Section):
    home_hit_m: float = 40.0
    stay_iou: float = 0.5
    stay_match_m: float = 100.0


class PipelineConfig(_Section):
    study: StudyConfig = StudyConfig()
    paths: PathsConfig = PathsConfig()
    homes: HomeParams = HomeParams()
    stays: StayParams = StayParams()
    visits: VisitParams = VisitParams()
    routing: RoutingParams = RoutingParams()
    metrics: MetricsParams = MetricsParams()
    aggregate: AggregateParams = AggregateParams()
    sweep: SweepParams = SweepParams()
    synth: SynthParams = SynthParams()
    degrade: DegradeParams = DegradeParams()
    evaluate: EvalParams = EvalParams()
    workers: int = Field(default=1, ge=1)
    out_dir: str = "out"

    def resolved_json(self) -> str:
        """JSON canónico sin los ajustes que no afectan las salidas"""
        data = self.model_dump(mode="json", exclude={"workers", "out_dir"})
        return json.dumps(data, indent=2, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.resolved_json().encode("utf-8")).hexdigest()


def _key_path(loc) -> str:
    return ".".join(str(part) for part in loc)


def load_pipeline_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """
    Carga la configuración del pipeline desde un archivo JSON.

    Args:
        path: Ruta al archivo JSON (None usa solo los valores por defecto)
        overrides: Valores de flags de la CLI con claves punteadas ("study.timezone")

    Returns:
        PipelineConfig validada

    Raises:
        ConfigError: Si el archivo no existe, no es JSON válido o trae claves inválidas
    """
    data: dict = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"No se encontró el archivo de configuración {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"JSON inválido: {e}")
        if not isinstance(data, dict):
            raise ConfigError("La configuración debe ser un objeto JSON")

    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value

    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first["msg"], key_path=_key_path(first["loc"]) or "<raíz>")


def resolve_input(cfg: PipelineConfig, name: str, filename: str) -> Path:
    explicit = getattr(cfg.paths, name)
    if explicit:
        return Path(explicit)
    return Path(cfg.out_dir) / "inputs" / filename
