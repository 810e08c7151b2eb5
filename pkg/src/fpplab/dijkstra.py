"""Reference shortest path by textbook single-source Dijkstra.

Kept deliberately independent of the exploration module: no shared state,
no shared traversal code. The equivalence corpus runs both and compares.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

from .graphs import WeightedGraph

__all__ = ["shortest_path"]


def shortest_path(g: WeightedGraph, src: int, dst: int) -> tuple[float, int] | None:
    """(weight, hops) of the minimum-weight src->dst path, or None.

    Hop counts follow strict relaxations only, so with continuous weights
    (optimal path almost surely unique) they are the optimal path's edge
    count. Self-loops never relax anything and are skipped implicitly.
    """
    if g.edge_weight_by_he is None:
        raise ValueError("graph has no edge weights assigned")
    if src == dst:
        return 0.0, 0
    n = g.n
    off = g.he_offset
    owner = g.he_owner
    partner = g.partner
    wt = g.edge_weight_by_he

    dist = np.full(n, math.inf)
    hops = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        if v == dst:
            return float(d), int(hops[v])
        done[v] = True
        for he in range(off[v], off[v + 1]):
            u = int(owner[partner[he]])
            if done[u]:
                continue
            nd = d + float(wt[he])
            if nd < dist[u]:
                dist[u] = nd
                hops[u] = hops[v] + 1
                heapq.heappush(heap, (nd, u))
    return None
