"""Cross-checks between the oracles themselves.

The distributed pipelines are compared against these oracles elsewhere; here
the oracles are compared against independent constructions (Prim vs Kruskal,
prefix sums vs direct box enumeration, batch path maxima vs BFS walks) so a
bug in one cannot silently vouch for the other.
"""

import numpy as np
import pytest

from gridmpc.grid import ImplicitGridGraph, LinfThresholdRule
from gridmpc.oracle import (
    OracleCapExceeded,
    box_discrepancy,
    euclidean_mst,
    exact_balanced_divider,
    exact_cc,
    exact_dbscan,
    exact_mst,
    exact_mst_prim,
    kruskal,
    minimax_path_matrix,
    path_max,
    tree_path_max_batch,
    verify_eps_approximation,
)


def grid_instance(seed, n, d, c, spread):
    rng = np.random.default_rng(seed)
    seen = set()
    pts = []
    while len(pts) < n:
        p = tuple(int(x) for x in rng.integers(0, spread, size=d))
        if p not in seen:
            seen.add(p)
            pts.append(p)
    coords = np.array(pts, dtype=np.int64)
    ids = np.arange(n, dtype=np.int64)
    return ImplicitGridGraph(ids=ids, coords=coords, rule=LinfThresholdRule(c))


class TestConnectivity:
    def test_two_obvious_components(self):
        coords = np.array([[0, 0], [1, 0], [0, 1], [10, 10], [11, 10]], dtype=np.int64)
        g = ImplicitGridGraph(ids=np.arange(5), coords=coords, rule=LinfThresholdRule(1))
        labels = exact_cc(g)
        assert labels == {0: 0, 1: 0, 2: 0, 3: 3, 4: 3}

    @pytest.mark.parametrize("seed", range(5))
    def test_labels_respect_every_edge(self, seed):
        g = grid_instance(seed, 60, 2, 2, 12)
        labels = exact_cc(g)
        # any pair within L-inf distance c must share a label
        for i in range(g.n):
            for j in range(i + 1, g.n):
                linf = int(np.max(np.abs(g.coords[i] - g.coords[j])))
                if 0 < linf <= g.rule.reach:
                    assert labels[int(g.ids[i])] == labels[int(g.ids[j])]

    def test_cap_enforced(self):
        g = grid_instance(0, 20, 2, 1, 30)
        with pytest.raises(OracleCapExceeded):
            exact_cc(g, cap=10)


class TestSpanningForests:
    @pytest.mark.parametrize("seed", range(6))
    def test_kruskal_agrees_with_prim_on_complete_graphs(self, seed):
        rng = np.random.default_rng(100 + seed)
        pts = rng.integers(0, 40, size=(24, 2))
        pts = np.unique(pts, axis=0)
        via_kruskal = euclidean_mst(pts)
        via_prim = exact_mst_prim(pts)
        assert via_kruskal == via_prim

    @pytest.mark.parametrize("seed", range(4))
    def test_grid_msf_weight_is_minimal_under_edge_swaps(self, seed):
        g = grid_instance(40 + seed, 50, 2, 2, 10)
        forest = exact_mst(g)
        labels = exact_cc(g)
        comp_count = len(set(labels.values()))
        assert len(forest) == g.n - comp_count
        # swapping any non-tree edge in must not reduce the total weight
        tree = {(a, b) for a, b, _ in forest}
        for i in range(g.n):
            for j in range(i + 1, g.n):
                mask, w = g.evaluate_pairs(np.array([i]), np.array([j]))
                if not mask[0]:
                    continue
                a, b = int(g.ids[i]), int(g.ids[j])
                if (a, b) in tree:
                    continue
                cycle_max = path_max(forest, a, b)
                assert cycle_max is not None and cycle_max <= float(w[0]) + 1e-12

    def test_deterministic_tie_break(self):
        # a unit square has four weight-1 edges; the forest must pick the
        # lexicographically smallest pair set
        pts = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
        forest = euclidean_mst(pts)
        assert [(a, b) for a, b, _ in forest] == [(0, 1), (0, 2), (1, 3)]


class TestDbscanOracle:
    def test_single_blob_all_core(self):
        pts = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
        out = exact_dbscan(pts, eps=1.5, min_pts=4)
        assert out["core"].all()
        assert out["clusters"] == [[0], [0], [0], [0]]

    def test_border_point_sees_both_clusters(self):
        # two unit squares, one middle point exactly eps from one core of each
        pts = np.array(
            [[0, 0], [1, 0], [0, 1], [1, 1], [5, 0], [6, 0], [5, 1], [6, 1], [3, 0]]
        )
        out = exact_dbscan(pts, eps=2.0, min_pts=4)
        assert out["core"][:8].all()
        assert not out["core"][8]
        assert out["clusters"][8] == [0, 4]

    def test_noise_has_empty_cluster_set(self):
        pts = np.array([[0, 0], [1, 0], [0, 1], [50, 50]])
        out = exact_dbscan(pts, eps=2.0, min_pts=3)
        assert out["clusters"][3] == []
        assert not out["core"][3]

    def test_inclusive_radius_on_integer_inputs(self):
        # distance exactly eps counts; 3-4-5 triangle edge
        pts = np.array([[0, 0], [3, 4], [0, 1]])
        out = exact_dbscan(pts, eps=5.0, min_pts=2)
        assert out["core"].all()


class TestBalancedDivider:
    @pytest.mark.parametrize("seed,d,c", [(s, d, c) for s in range(4) for d in (2, 3) for c in (1, 2)])
    def test_certificate_holds_on_random_sets(self, seed, d, c):
        rng = np.random.default_rng(1000 * d + 10 * c + seed)
        seen = set()
        pts = []
        while len(pts) < 400:
            p = tuple(int(x) for x in rng.integers(0, 60, size=d))
            if p not in seen:
                seen.add(p)
                pts.append(p)
        coords = np.array(pts, dtype=np.int64)
        out = exact_balanced_divider(coords, c)
        cert = out["certificate"]
        n = len(coords)
        assert cert["left"] + cert["right"] + cert["slab"] == n
        assert min(cert["left"], cert["right"]) >= n / (4 * (d + 1))
        assert cert["slab"] <= 2 * c * (d + 1) ** (1 / d) * n ** (1 - 1 / d)
        # masks partition V and respect the slab geometry
        col = coords[:, out["dim"]]
        assert (col[out["slab"]] >= out["x"]).all()
        assert (col[out["slab"]] <= out["x"] + c - 1).all()
        assert (col[out["left"]] < out["x"]).all()
        assert (col[out["right"]] > out["x"] + c - 1).all()

    def test_rejects_oversized_slab_width(self):
        coords = np.array([[i, j] for i in range(5) for j in range(5)], dtype=np.int64)
        with pytest.raises(ValueError):
            exact_balanced_divider(coords, c=10)


class TestBoxDiscrepancy:
    def brute_box_worst(self, coords, sample_idx):
        n, d = coords.shape
        k = len(sample_idx)
        in_s = np.zeros(n, dtype=bool)
        in_s[np.asarray(sample_idx)] = True
        axes = [np.unique(coords[:, j]) for j in range(d)]
        worst = 0.0
        boxes = 0

        def rec(j, lo, hi):
            nonlocal worst, boxes
            if j == d:
                inside = np.ones(n, dtype=bool)
                for jj in range(d):
                    inside &= (coords[:, jj] >= lo[jj]) & (coords[:, jj] <= hi[jj])
                boxes += 1
                worst = max(worst, abs(in_s[inside].sum() / k - inside.sum() / n))
                return
            for a in range(len(axes[j])):
                for b in range(a, len(axes[j])):
                    lo.append(axes[j][a])
                    hi.append(axes[j][b])
                    rec(j + 1, lo, hi)
                    lo.pop()
                    hi.pop()

        rec(0, [], [])
        return worst, boxes

    @pytest.mark.parametrize("seed", range(5))
    def test_prefix_sums_match_direct_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        coords = rng.integers(0, 5, size=(40, 2)).astype(np.int64)
        sample = rng.choice(40, size=10, replace=False)
        fast, fast_boxes = box_discrepancy(coords, sample)
        slow, slow_boxes = self.brute_box_worst(coords, sample)
        assert fast_boxes == slow_boxes
        assert fast == pytest.approx(slow, abs=1e-12)

    def test_full_sample_has_zero_discrepancy(self):
        rng = np.random.default_rng(7)
        coords = rng.integers(0, 9, size=(30, 3)).astype(np.int64)
        worst, _ = box_discrepancy(coords, np.arange(30))
        assert worst == pytest.approx(0.0, abs=1e-12)
        assert verify_eps_approximation(coords, np.arange(30), r=10**9)

    def test_skewed_sample_is_caught(self):
        coords = np.array([[i, 0] for i in range(20)], dtype=np.int64)
        sample = np.arange(10)  # only the left half
        worst, _ = box_discrepancy(coords, sample)
        assert worst >= 0.5 - 1e-12
        assert not verify_eps_approximation(coords, sample, r=4)


class TestPathMaxima:
    def random_tree(self, seed, n):
        rng = np.random.default_rng(seed)
        edges = []
        for v in range(1, n):
            u = int(rng.integers(0, v))
            edges.append((u, v, float(rng.integers(1, 50))))
        return edges

    @pytest.mark.parametrize("seed", range(5))
    def test_bfs_agrees_with_minimax_relaxation(self, seed):
        tree = self.random_tree(seed, 18)
        ids, mat = minimax_path_matrix(range(18), tree)
        for i in range(18):
            for j in range(i + 1, 18):
                assert path_max(tree, i, j) == pytest.approx(mat[i][j])

    @pytest.mark.parametrize("seed", range(5))
    def test_batch_agrees_with_bfs(self, seed):
        tree = self.random_tree(50 + seed, 40)
        rng = np.random.default_rng(seed)
        queries = [(int(rng.integers(0, 40)), int(rng.integers(0, 40))) for _ in range(60)]
        batch = tree_path_max_batch(tree, queries)
        for (u, v), got in zip(queries, batch):
            assert got == pytest.approx(path_max(tree, u, v))

    def test_disconnected_pair_is_none(self):
        tree = [(0, 1, 3.0), (2, 3, 4.0)]
        assert path_max(tree, 0, 2) is None
        assert tree_path_max_batch(tree, [(0, 2), (0, 1)]) == [None, 3.0]

    def test_kruskal_respects_forest_structure(self):
        # explicit edges, two components
        edges = [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0), (5, 6, 1.0)]
        forest = kruskal([0, 1, 2, 5, 6], edges)
        assert forest == [(0, 1, 1.0), (5, 6, 1.0), (1, 2, 2.0)]
