#!/usr/bin/env python3
"""
CLI del pipeline de adquisición de alimentos.

Cada subcomando lee las salidas de las etapas previas en --out y escribe
las suyas; `all` encadena ingest -> sweep y evalúa si hay truth.json.

Uso: python -m forage <subcomando> [--config CONFIG] [--out DIR] [--workers N]
"""
import argparse
import logging
import sys
import time
from typing import List, Optional

from forage.core.config import load_pipeline_config, settings
from forage.core.errors import ConfigError, ForageError
from forage.pipeline.stages import run_stage
from forage.utils.timeutils import resolve_timezone

logger = logging.getLogger(__name__)

SUBCOMMANDS = ["ingest", "homes", "stays", "visits", "metrics", "aggregate", "sweep", "synth", "evaluate", "all"]

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_FORAGE_ERROR = 2
EXIT_INTERRUPTED = 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forage",
        description="Métricas de adquisición de alimentos a partir de pings GPS",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Ejemplos de uso:
  python -m forage synth --out out --seed 7            # Genera un mundo sintético en out/inputs
  python -m forage all --out out --workers 4           # Corre ingest -> sweep (+ evaluate)
  python -m forage metrics --out out --primary-only    # Solo establecimientos de venta primaria
  python -m forage sweep --out out --radii 50,100,150,200
  python -m forage all --config study.json --timezone America/Chicago
        """
    )
    parser.add_argument("command", choices=SUBCOMMANDS, help="Etapa a ejecutar")
    parser.add_argument("--config", type=str, help="Archivo JSON de configuración del pipeline")
    parser.add_argument("--workers", type=int, help="Procesos en paralelo (la salida no depende de N)")
    parser.add_argument("--out", type=str, help="Directorio de salida (por defecto: out)")
    parser.add_argument("--seed", type=int, help="Semilla del mundo sintético (synth)")
    parser.add_argument("--radii", type=str, help="Radios del barrido separados por coma (sweep)")
    parser.add_argument("--primary-only", action="store_true",
                        help="Limita visitas y métricas a venta primaria de alimentos")
    parser.add_argument("--timezone", type=str, help="Zona horaria IANA del estudio")
    parser.add_argument("--debug", action="store_true", help="Habilita logging debug detallado")
    return parser


def _parse_radii(raw: str) -> List[float]:
    try:
        radii = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"lista de radios inválida: {raw!r}", key_path="sweep.radii")
    if not radii or any(r <= 0 for r in radii):
        raise ConfigError("los radios deben ser positivos", key_path="sweep.radii")
    return radii


def overrides_from_args(args: argparse.Namespace) -> dict:
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["synth.seed"] = args.seed
    if args.radii is not None:
        overrides["sweep.radii"] = _parse_radii(args.radii)
    if args.primary_only:
        overrides["visits.primary_only"] = True
    if args.timezone is not None:
        overrides["study.timezone"] = args.timezone
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    """Función principal; devuelve el código de salida"""
    args = build_parser().parse_args(argv)

    settings.setup_logging()
    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)
        logger.debug("Modo debug habilitado")

    started = time.time()
    try:
        cfg = load_pipeline_config(args.config, overrides_from_args(args))
        resolve_timezone(cfg.study.timezone)
        run_stage(args.command, cfg)
    except KeyboardInterrupt:
        logger.warning("❌ Proceso interrumpido por el usuario")
        return EXIT_INTERRUPTED
    except ForageError as e:
        logger.error(f"❌ {e}")
        return EXIT_FORAGE_ERROR
    except Exception as e:
        logger.exception(f"❌ Error crítico: {str(e)}")
        return EXIT_UNEXPECTED

    logger.info(f"⏱️  {args.command} terminado en {time.time() - started:.2f} segundos")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
