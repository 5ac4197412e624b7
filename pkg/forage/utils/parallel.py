"""
Ejecución paralela con resultados en el orden de entrada
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def chunked(items: Sequence[T], n_chunks: int) -> List[Sequence[T]]:
    """Parte una secuencia en bloques contiguos (el orden se conserva)"""
    if not items:
        return []
    n_chunks = max(1, min(n_chunks, len(items)))
    size = -(-len(items) // n_chunks)
    return [items[i:i + size] for i in range(0, len(items), size)]


def map_ordered(func: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """
    Aplica func a cada elemento; con workers > 1 usa un pool de procesos.

    El resultado siempre respeta el orden de `items`, de modo que la salida
    es idéntica para cualquier número de workers.
    """
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    logger.debug(f"Pool de {workers} procesos para {len(items)} tareas")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
