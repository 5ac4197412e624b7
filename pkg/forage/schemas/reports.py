"""
Esquemas de reportes JSON emitidos por las etapas del pipeline
"""
from typing import Dict, List, Optional

from pydantic import BaseModel


DROP_REASONS = ["malformed", "low_accuracy", "out_of_window", "out_of_bbox", "duplicate"]


class DropReport(BaseModel):
    total_rows: int = 0
    retained: int = 0
    n_devices: int = 0
    dropped: Dict[str, int] = {reason: 0 for reason in DROP_REASONS}


class HomeCoverageReport(BaseModel):
    n_devices: int = 0
    n_nighttime: int = 0
    n_fallback: int = 0
    n_none: int = 0

    @property
    def fractions(self) -> Dict[str, float]:
        if self.n_devices == 0:
            return {"nighttime": 0.0, "fallback": 0.0, "none": 0.0}
        return {
            "nighttime": self.n_nighttime / self.n_devices,
            "fallback": self.n_fallback / self.n_devices,
            "none": self.n_none / self.n_devices,
        }


class RoutingDiagnostics(BaseModel):
    n_pairs: int = 0
    n_unsnappable: int = 0
    n_unreachable: int = 0

    def merge(self, other: "RoutingDiagnostics") -> "RoutingDiagnostics":
        return RoutingDiagnostics(
            n_pairs=self.n_pairs + other.n_pairs,
            n_unsnappable=self.n_unsnappable + other.n_unsnappable,
            n_unreachable=self.n_unreachable + other.n_unreachable,
        )


class SummaryCell(BaseModel):
    mean: Optional[float] = None
    n: int = 0


class PopulationSummary(BaseModel):
    """Promedios poblacionales: filas = métricas, columnas = categorías"""
    categories: List[str]
    visited_weighting: str = "store"
    n_devices: Dict[str, int] = {}
    total_visits: Dict[str, int] = {}
    total_known_origin: Dict[str, int] = {}
    visits_per_week: Dict[str, Optional[float]] = {}
    metrics: Dict[str, Dict[str, SummaryCell]] = {}


class SweepResult(BaseModel):
    axis: str  # "Radius" | "Inclusion"
    setting: str
    summary: PopulationSummary


class EvalReport(BaseModel):
    n_devices: int = 0
    home_hit_rate: Optional[float] = None
    stay_precision: Optional[float] = None
    stay_recall: Optional[float] = None
    visit_precision: Optional[float] = None
    visit_recall: Optional[float] = None
    n_visits_detected: int = 0
    n_visits_planted: int = 0
    visit_frequency_ratio: Optional[float] = None
    n_known_origin: int = 0
    home_based_share: Optional[float] = None


class StageManifest(BaseModel):
    stage: str
    inputs: Dict[str, str]
    outputs: List[str]
    config_hash: str
    row_counts: Dict[str, int]
    wall_time_s: float
