"""
Esquemas Pydantic de los reportes del pipeline
"""
from .reports import (
    DROP_REASONS, DropReport, HomeCoverageReport, RoutingDiagnostics,
    SummaryCell, PopulationSummary, SweepResult, EvalReport, StageManifest
)

__all__ = [
    "DROP_REASONS", "DropReport", "HomeCoverageReport", "RoutingDiagnostics",
    "SummaryCell", "PopulationSummary", "SweepResult", "EvalReport", "StageManifest",
]
