import math
import random
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqalab.mapping import FREE, OCCUPIED, UNKNOWN
from eqalab.pathfinding import SQRT2, astar, collinear_runs, path_cost, truncate_path
from oracles import dijkstra_cost


def random_grid(seed, size=64, occupied_frac=0.2):
    rng = random.Random(seed)
    occ = np.full((size, size), FREE, dtype=np.uint8)
    for i in range(size):
        for j in range(size):
            r = rng.random()
            if r < occupied_frac:
                occ[i, j] = OCCUPIED
            elif r < occupied_frac + 0.2:
                occ[i, j] = UNKNOWN
    return occ, rng


def free_cell(occ, rng):
    size = occ.shape[0]
    while True:
        cell = (rng.randrange(size), rng.randrange(size))
        if occ[cell] != OCCUPIED:
            return cell


class TestAstar:
    def test_start_equals_goal(self):
        occ = np.full((5, 5), FREE, dtype=np.uint8)
        path = astar(occ, (2, 2), (2, 2))
        assert path == [(2, 2)]
        assert path_cost(occ, path) == 0.0

    def test_diagonal_run_cost(self):
        occ = np.full((5, 5), FREE, dtype=np.uint8)
        path = astar(occ, (0, 0), (4, 4))
        assert path_cost(occ, path) == 4 * SQRT2

    def test_unreachable_returns_none(self):
        occ = np.full((5, 5), FREE, dtype=np.uint8)
        occ[2, :] = OCCUPIED
        assert astar(occ, (0, 0), (4, 4)) is None

    def test_occupied_goal_unreachable(self):
        occ = np.full((5, 5), FREE, dtype=np.uint8)
        occ[4, 4] = OCCUPIED
        assert astar(occ, (0, 0), (4, 4)) is None

    def test_unknown_cells_double_cost(self):
        # Straight corridor where the middle cell is Unknown.
        occ = np.full((1, 3), FREE, dtype=np.uint8)
        occ[0, 1] = UNKNOWN
        path = astar(occ, (0, 0), (0, 2))
        assert path == [(0, 0), (0, 1), (0, 2)]
        assert path_cost(occ, path) == 3.0  # 2 (into unknown) + 1

    def test_matches_dijkstra_on_seeded_grids(self):
        for seed in range(12):
            occ, rng = random_grid(seed, size=32)
            start = free_cell(occ, rng)
            goal = free_cell(occ, rng)
            path = astar(occ, start, goal)
            expected = dijkstra_cost(occ, start, goal)
            if expected is None:
                assert path is None
            else:
                assert path is not None
                assert path_cost(occ, path) == expected

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_path_invariants(self, seed):
        occ, rng = random_grid(seed, size=16)
        start = free_cell(occ, rng)
        goal = free_cell(occ, rng)
        path = astar(occ, start, goal)
        if path is None:
            return
        assert path[0] == start and path[-1] == goal
        for prev, cell in zip(path, path[1:]):
            assert max(abs(prev[0] - cell[0]), abs(prev[1] - cell[1])) == 1
            assert occ[cell] != OCCUPIED
        assert occ[path[0]] != OCCUPIED


class TestPathHelpers:
    def test_truncate_path_respects_cap(self):
        path = [(0, j) for j in range(30)]
        chunk = truncate_path(path, 10.0, 1.0)
        assert len(chunk) == 11  # 10 straight steps of 1 m
        chunk2 = truncate_path(path, 10.0, 2.0)
        assert len(chunk2) == 6

    def test_truncate_counts_diagonals(self):
        path = [(k, k) for k in range(10)]
        chunk = truncate_path(path, 10.0, 2.0)
        # each diagonal step is 2*sqrt(2) ~ 2.828 m -> 3 steps fit in 10 m
        assert len(chunk) == 4

    def test_collinear_runs_merge(self):
        path = [(0, 0), (0, 1), (0, 2), (1, 3), (2, 4), (2, 5)]
        runs = collinear_runs(path)
        assert runs == [((0, 1), (0, 2)), ((1, 1), (2, 4)), ((0, 1), (2, 5))]
