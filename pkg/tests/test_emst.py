"""Approximate Euclidean MST against the exact oracle."""

import math

import numpy as np
import pytest

from gridmpc.emst import approx_emst, growth_factor
from gridmpc.mpc import ClusterConfig
from gridmpc.oracle import euclidean_mst, tree_path_max_batch
from gridmpc.util import UnionFind, edge_key


def uniform_points(seed, n, d, spread):
    rng = np.random.default_rng(seed)
    seen, pts = set(), []
    while len(pts) < n:
        p = tuple(int(x) for x in rng.integers(0, spread, size=d))
        if p not in seen:
            seen.add(p)
            pts.append(p)
    return np.array(pts, dtype=np.int64)


def cfg(n, s, seed=0, m=None):
    return ClusterConfig(n_total=n, s=s, m=m, rng_seed=seed)


def assert_spanning_tree(edges, n):
    assert len(edges) == n - 1
    uf = UnionFind(range(n))
    for u, v, _ in edges:
        assert uf.union(u, v), f"cycle at ({u}, {v})"


# Nine points in three groups; the groups sit about 6 apart pairwise and the
# top group is ~10 away from the rest, so the tree forms over three scales.
WALKTHROUGH = [(0, 0), (2, 0), (0, 3), (8, 0), (10, 1), (9, 3),
               (1, 13), (3, 15), (5, 14)]


class TestWalkthrough:
    """Hand-checkable nine point instance, rho' = sqrt(2)/2 and c = 4."""

    def run(self):
        return approx_emst(WALKTHROUGH, rho=math.sqrt(2),
                           config=cfg(9, 16, m=2), c=4)

    def test_three_super_rounds(self):
        res = self.run()
        assert res.super_rounds <= 3
        assert res.super_rounds == 3

    def test_exactly_eight_edges(self):
        res = self.run()
        assert len(res.edges) == 8
        assert_spanning_tree(res.edges, 9)

    def test_edge_list(self):
        # per level: the three groups, then the two bottom groups joined by
        # (2,0)-(8,0), then the far group joined by (0,0)-(1,13)
        res = self.run()
        want = sorted([
            (0, 1, 2.0), (0, 2, 3.0),
            (3, 4, math.sqrt(5)), (4, 5, math.sqrt(5)),
            (7, 8, math.sqrt(5)), (6, 7, math.sqrt(8)),
            (1, 3, 6.0), (0, 6, math.sqrt(170)),
        ], key=lambda e: edge_key(*e))
        assert [(u, v) for u, v, _ in res.edges] == [(u, v) for u, v, _ in want]
        np.testing.assert_allclose([w for _, _, w in res.edges],
                                   [w for _, _, w in want])
        assert res.total_weight == pytest.approx(5 + 3 * math.sqrt(5)
                                                 + math.sqrt(8) + 6
                                                 + math.sqrt(170))

    def test_levels_add_six_one_one(self):
        res = self.run()
        assert [lv["added"] for lv in res.levels] == [6, 1, 1]

    def test_default_c_matches(self):
        # s = 16 gives a nominal horizon of 1; the progress floor
        # ceil(2 sqrt(2) / rho') = 4 is what picks c here
        res = approx_emst(WALKTHROUGH, rho=math.sqrt(2), config=cfg(9, 16, m=2))
        assert res.c == 4


class TestGrowthFactor:
    def test_progress_floor_dominates_small_memory(self):
        assert growth_factor(16, 2, math.sqrt(2) / 2) == 4
        assert growth_factor(256, 2, 0.5) == 6

    def test_nominal_dominates_large_memory(self):
        s = 10 ** 8
        assert growth_factor(s, 2, 2.0) == int(s ** (1 / 8))

    def test_floor_of_two(self):
        assert growth_factor(4, 3, 2.0) >= 2


# (d, rho, n, s, spread): spreads leave room for several coarsening levels,
# and s covers the separator plus merge graph of every level.
QUALITY_CASES = [
    (2, 0.5, 250, 256, 4096),
    (2, 1.0, 300, 256, 4096),
    (2, 2.0, 300, 256, 4096),
    (3, 1.0, 200, 256, 512),
]


class TestApproximationQuality:
    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("d,rho,n,s,spread", QUALITY_CASES)
    def test_weight_within_factor(self, seed, d, rho, n, s, spread):
        pts = uniform_points(seed, n, d, spread)
        res = approx_emst(pts, rho=rho, config=cfg(n, s, seed))
        assert_spanning_tree(res.edges, n)
        exact = euclidean_mst(pts)
        exact_w = sum(w for _, _, w in exact)
        assert res.total_weight <= (1 + rho) * exact_w + 1e-9
        assert res.total_weight >= exact_w - 1e-9
        assert res.violations == 0

    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("d,rho,n,s,spread", QUALITY_CASES)
    def test_edges_within_factor_of_bottleneck(self, seed, d, rho, n, s, spread):
        # each output edge is at most (1+rho) times the heaviest edge on the
        # exact tree path between its endpoints
        pts = uniform_points(seed, n, d, spread)
        res = approx_emst(pts, rho=rho, config=cfg(n, s, seed))
        exact = euclidean_mst(pts)
        bottle = tree_path_max_batch(exact, [(u, v) for u, v, _ in res.edges])
        for (u, v, w), b in zip(res.edges, bottle):
            assert w <= (1 + rho) * b + 1e-9

    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("d,rho,n,s,spread", QUALITY_CASES)
    def test_exact_edges_bottlenecked_in_output(self, seed, d, rho, n, s, spread):
        # the reverse direction: for every exact-tree edge, the heaviest edge
        # on our tree path between its endpoints is at most (1+rho) times it
        pts = uniform_points(seed, n, d, spread)
        res = approx_emst(pts, rho=rho, config=cfg(n, s, seed))
        exact = euclidean_mst(pts)
        ours = tree_path_max_batch(res.edges, [(u, v) for u, v, _ in exact])
        for (u, v, w), b in zip(exact, ours):
            assert b <= (1 + rho) * w + 1e-9

    def test_weights_are_true_distances(self):
        pts = uniform_points(5, 200, 2, 1024)
        res = approx_emst(pts, rho=1.0, config=cfg(200, 256, 5))
        for u, v, w in res.edges:
            assert w == pytest.approx(float(np.linalg.norm(pts[u] - pts[v])))
        assert res.edges == sorted(res.edges, key=lambda e: edge_key(*e))

    def test_separator_active_instance(self):
        # big enough that the per-level pipelines must actually split
        pts = uniform_points(1, 900, 2, 2048)
        res = approx_emst(pts, rho=1.0, config=cfg(900, 384, 1))
        assert_spanning_tree(res.edges, 900)
        assert max(lv["separator"] for lv in res.levels) > 0
        exact_w = sum(w for _, _, w in euclidean_mst(pts))
        assert res.total_weight <= 2 * exact_w + 1e-9
        assert res.violations == 0

    def test_single_level_when_reach_covers_diameter(self):
        # horizon beyond the diameter: round one already spans everything,
        # and its forest is the exact MST
        pts = uniform_points(2, 80, 2, 12)
        res = approx_emst(pts, rho=1.0, config=cfg(80, 96, 2), c=32)
        assert res.super_rounds == 1
        assert res.total_weight == pytest.approx(
            sum(w for _, _, w in euclidean_mst(pts)))


class TestDeterminism:
    def test_identical_reruns(self):
        pts = uniform_points(3, 300, 2, 2048)
        a = approx_emst(pts, rho=1.0, config=cfg(300, 256, 7))
        b = approx_emst(pts, rho=1.0, config=cfg(300, 256, 7))
        assert a.edges == b.edges
        assert a.levels == b.levels
        assert a.rounds == b.rounds

    def test_valid_under_other_seed(self):
        pts = uniform_points(3, 300, 2, 2048)
        res = approx_emst(pts, rho=1.0, config=cfg(300, 256, 8))
        assert_spanning_tree(res.edges, 300)


class TestInputValidation:
    def test_duplicate_points_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            approx_emst([(0, 0), (0, 0), (1, 1)], rho=1.0, config=cfg(3, 8))

    def test_nonpositive_rho_rejected(self):
        with pytest.raises(ValueError, match="rho"):
            approx_emst([(0, 0), (1, 1)], rho=0.0, config=cfg(2, 8))

    def test_flat_input_rejected(self):
        with pytest.raises(ValueError, match="array"):
            approx_emst([0, 1, 2], rho=1.0, config=cfg(3, 8))

    def test_single_point(self):
        res = approx_emst([(4, 4)], rho=1.0, config=cfg(1, 8))
        assert res.edges == [] and res.super_rounds == 0

    def test_two_points(self):
        res = approx_emst([(0, 0), (3, 4)], rho=1.0, config=cfg(2, 8))
        assert res.edges == [(0, 1, 5.0)]
