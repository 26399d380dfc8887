"""8-connected grid pathfinding over the occupancy layer.

Edge weights: straight moves cost 1, diagonal moves sqrt(2), both doubled
when the destination cell is Unknown; Occupied cells are impassable. The
octile-distance heuristic never exceeds the true remaining cost, so the
search is optimal.

Path costs are reported by recomputing from step counts (straights and
diagonals, weighted and not) in a single expression, so two equal-cost
paths always report bit-identical totals.
"""

from __future__ import annotations

import heapq
import math
from typing import Optional

import numpy as np

from .mapping import OCCUPIED, UNKNOWN

SQRT2 = math.sqrt(2.0)

_NEIGHBORS = (
    (1, 0), (-1, 0), (0, 1), (0, -1),
    (1, 1), (1, -1), (-1, 1), (-1, -1),
)


def octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    di = abs(a[0] - b[0])
    dj = abs(a[1] - b[1])
    lo, hi = (di, dj) if di < dj else (dj, di)
    return (hi - lo) + lo * SQRT2


def path_cost(occupancy: np.ndarray, path: list[tuple[int, int]]) -> float:
    """Cost of a cell path, recomputed exactly from step counts."""
    straight = straight2 = diag = diag2 = 0
    for prev, cell in zip(path, path[1:]):
        diagonal = prev[0] != cell[0] and prev[1] != cell[1]
        unknown = occupancy[cell] == UNKNOWN
        if diagonal:
            diag2 += unknown
            diag += not unknown
        else:
            straight2 += unknown
            straight += not unknown
    return (straight + 2 * straight2) + (diag + 2 * diag2) * SQRT2


def astar(
    occupancy: np.ndarray, start: tuple[int, int], goal: tuple[int, int]
) -> Optional[list[tuple[int, int]]]:
    """Minimum-cost 8-connected path, or None when unreachable."""
    n_i, n_j = occupancy.shape
    if not (0 <= start[0] < n_i and 0 <= start[1] < n_j):
        raise ValueError(f"start {start} outside grid")
    if not (0 <= goal[0] < n_i and 0 <= goal[1] < n_j):
        raise ValueError(f"goal {goal} outside grid")
    if start == goal:
        return [start]
    if occupancy[start] == OCCUPIED or occupancy[goal] == OCCUPIED:
        return None

    g = {start: 0.0}
    came: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    heap = [(octile(start, goal), counter, start)]
    closed = set()
    while heap:
        _, _, cell = heapq.heappop(heap)
        if cell == goal:
            path = [cell]
            while cell in came:
                cell = came[cell]
                path.append(cell)
            path.reverse()
            return path
        if cell in closed:
            continue
        closed.add(cell)
        gc = g[cell]
        for di, dj in _NEIGHBORS:
            nb = (cell[0] + di, cell[1] + dj)
            if not (0 <= nb[0] < n_i and 0 <= nb[1] < n_j):
                continue
            if occupancy[nb] == OCCUPIED:
                continue
            base = SQRT2 if (di and dj) else 1.0
            cost = base * 2.0 if occupancy[nb] == UNKNOWN else base
            ng = gc + cost
            if nb not in g or ng < g[nb]:
                g[nb] = ng
                came[nb] = cell
                counter += 1
                heapq.heappush(heap, (ng + octile(nb, goal), counter, nb))
    return None


def truncate_path(path: list[tuple[int, int]], max_len_m: float, resolution: float) -> list[tuple[int, int]]:
    """Longest path prefix whose total length stays within max_len_m."""
    out = [path[0]]
    total = 0.0
    for prev, cell in zip(path, path[1:]):
        step = resolution * (SQRT2 if (prev[0] != cell[0] and prev[1] != cell[1]) else 1.0)
        if total + step > max_len_m + 1e-9:
            break
        total += step
        out.append(cell)
    return out


def collinear_runs(path: list[tuple[int, int]]) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Split a cell path into (direction, last_cell) runs of equal direction."""
    runs = []
    if len(path) < 2:
        return runs
    direction = (path[1][0] - path[0][0], path[1][1] - path[0][1])
    last = path[1]
    for prev, cell in zip(path[1:], path[2:]):
        d = (cell[0] - prev[0], cell[1] - prev[1])
        if d == direction:
            last = cell
        else:
            runs.append((direction, last))
            direction = d
            last = cell
    runs.append((direction, last))
    return runs
