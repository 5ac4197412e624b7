"""
Distancias por red vial: snapping, Dijkstra uno-a-muchos y distancia hogar-establecimiento
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from forage.schemas.reports import RoutingDiagnostics
from forage.utils.geo import CellIndex, build_cell_index, haversine

logger = logging.getLogger(__name__)

SNAP_TIE_EPS = 1e-9


class RoadGraph:
    """
    Grafo dirigido inmutable. Los nodos se guardan ordenados por node_id y
    las aristas paralelas se reducen a la de menor longitud.
    """

    def __init__(self, node_ids, lat, lon, edges: Iterable[Tuple[int, int, float]]):
        order = np.argsort(np.asarray(node_ids, dtype=np.int64), kind="stable")
        self.node_ids = np.asarray(node_ids, dtype=np.int64)[order]
        self.lat = np.asarray(lat, dtype=np.float64)[order]
        self.lon = np.asarray(lon, dtype=np.float64)[order]
        self._pos = {int(n): i for i, n in enumerate(self.node_ids.tolist())}

        best: Dict[Tuple[int, int], float] = {}
        for u, v, length in edges:
            if u == v:
                continue
            key = (self._pos[int(u)], self._pos[int(v)])
            if key not in best or length < best[key]:
                best[key] = float(length)

        n = len(self.node_ids)
        if best:
            rows, cols = zip(*best.keys())
            self.matrix = csr_matrix((list(best.values()), (rows, cols)), shape=(n, n))
        else:
            self.matrix = csr_matrix((n, n), dtype=np.float64)
        self._snap_index: Optional[CellIndex] = None

    def __len__(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return int(self.matrix.nnz)

    def position(self, node_id: int) -> int:
        return self._pos[int(node_id)]

    def neighbors(self, node_id: int) -> List[Tuple[int, float]]:
        i = self._pos[int(node_id)]
        start, stop = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        cols = self.matrix.indices[start:stop]
        return sorted(
            (int(self.node_ids[c]), float(w)) for c, w in zip(cols, self.matrix.data[start:stop])
        )

    def snap_index(self, max_snap_m: float) -> CellIndex:
        if self._snap_index is None or self._snap_index.max_radius_m < max_snap_m:
            self._snap_index = build_cell_index(
                self.lat, self.lon, cell_m=max(max_snap_m / 2.0, 50.0), max_radius_m=max_snap_m
            )
        return self._snap_index


def snap(p: Tuple[float, float], graph: RoadGraph, max_snap_m: float = 500.0) -> Optional[int]:
    """
    Nodo más cercano a p dentro de max_snap_m.

    Returns:
        node_id (empate -> menor node_id) o None si no hay nodos a esa distancia
    """
    if len(graph) == 0:
        return None
    pos, dist = graph.snap_index(max_snap_m).query_within(p, max_snap_m)
    if pos.size == 0:
        return None
    tied = pos[dist <= dist.min() + SNAP_TIE_EPS]
    # los nodos están ordenados por node_id
    return int(graph.node_ids[int(tied.min())])


def _distances_from(graph: RoadGraph, sources: Sequence[int]) -> np.ndarray:
    idx = [graph.position(s) for s in sources]
    dist = dijkstra(graph.matrix, directed=True, indices=idx)
    return np.atleast_2d(dist)


def one_to_many(source: int, targets: Iterable[int], graph: RoadGraph) -> Dict[int, Optional[float]]:
    """
    Longitudes de camino mínimo desde source a cada target.

    Returns:
        Mapa target -> metros, o None si el target es inalcanzable
    """
    row = _distances_from(graph, [source])[0]
    result: Dict[int, Optional[float]] = {}
    for t in targets:
        d = row[graph.position(t)]
        result[int(t)] = float(d) if np.isfinite(d) else None
    return result


def network_distance(home: Tuple[float, float], outlet: Tuple[float, float], graph: RoadGraph,
                     max_snap_m: float = 500.0) -> Optional[float]:
    """Camino mínimo entre nodos ajustados más los tramos de acceso en línea recta"""
    h = snap(home, graph, max_snap_m)
    o = snap(outlet, graph, max_snap_m)
    if h is None or o is None:
        return None
    path = one_to_many(h, [o], graph)[o]
    if path is None:
        return None
    h_pos, o_pos = graph.position(h), graph.position(o)
    leg_h = haversine(home, (graph.lat[h_pos], graph.lon[h_pos]))
    leg_o = haversine(outlet, (graph.lat[o_pos], graph.lon[o_pos]))
    # mismo orden de suma que BatchRouter
    return (path + leg_o) + leg_h


class SnappedTargets:
    """Establecimientos ajustados una sola vez a la red (nodo + tramo de acceso)"""

    def __init__(self, lat, lon, graph: RoadGraph, max_snap_m: float = 500.0):
        self.n = len(lat)
        self.node_pos = np.full(self.n, -1, dtype=np.int64)
        self.leg = np.zeros(self.n, dtype=np.float64)
        for i, (la, lo) in enumerate(zip(np.asarray(lat).tolist(), np.asarray(lon).tolist())):
            node = snap((la, lo), graph, max_snap_m)
            if node is not None:
                pos = graph.position(node)
                self.node_pos[i] = pos
                self.leg[i] = haversine((la, lo), (graph.lat[pos], graph.lon[pos]))
        self.snapped = self.node_pos >= 0


class BatchRouter:
    """
    Evalúa distancias de red hogar -> establecimientos agrupando por nodo de origen:
    una corrida de Dijkstra por nodo de hogar cubre todos sus establecimientos.
    """

    def __init__(self, graph: RoadGraph, targets: SnappedTargets, max_snap_m: float = 500.0,
                 batch_size: int = 256):
        self.graph = graph
        self.targets = targets
        self.max_snap_m = max_snap_m
        self.batch_size = batch_size

    def home_rows(self, homes: Sequence[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Distancia de red de cada hogar a cada destino.

        Returns:
            (matriz homes x targets con NaN donde no está definida,
             vector booleano de hogares ajustados)
        """
        n_h = len(homes)
        out = np.full((n_h, self.targets.n), np.nan, dtype=np.float64)
        home_nodes = np.full(n_h, -1, dtype=np.int64)
        home_leg = np.zeros(n_h, dtype=np.float64)
        for i, p in enumerate(homes):
            node = snap(p, self.graph, self.max_snap_m)
            if node is not None:
                pos = self.graph.position(node)
                home_nodes[i] = pos
                home_leg[i] = haversine(p, (self.graph.lat[pos], self.graph.lon[pos]))
        snapped = home_nodes >= 0
        if self.targets.n == 0 or not snapped.any():
            return out, snapped

        unique_nodes = np.unique(home_nodes[snapped])
        t_ok = self.targets.snapped
        t_pos = self.targets.node_pos[t_ok]
        for start in range(0, unique_nodes.size, self.batch_size):
            batch = unique_nodes[start:start + self.batch_size]
            dist = np.atleast_2d(dijkstra(self.graph.matrix, directed=True, indices=batch))
            for row, node in zip(dist, batch.tolist()):
                members = np.flatnonzero(home_nodes == node)
                path = row[t_pos] + self.targets.leg[t_ok]
                path[~np.isfinite(path)] = np.nan
                for m in members.tolist():
                    out[m, t_ok] = path + home_leg[m]
        return out, snapped

    def diagnose(self, rows: np.ndarray, home_snapped: np.ndarray, pairs: np.ndarray) -> RoutingDiagnostics:
        """
        Cuenta pares hogar-establecimiento sin distancia definida.

        Args:
            rows: Salida de home_rows
            home_snapped: Hogares ajustados
            pairs: Arreglo (k, 2) de índices (hogar, destino) evaluados
        """
        diag = RoutingDiagnostics(n_pairs=int(len(pairs)))
        for h, t in pairs.tolist():
            if not home_snapped[h] or not self.targets.snapped[t]:
                diag.n_unsnappable += 1
            elif np.isnan(rows[h, t]):
                diag.n_unreachable += 1
        return diag
