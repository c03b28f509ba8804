"""Exact single-machine oracles used to verify the distributed pipelines.

Everything here is deliberately brute force and structured differently from
the pipelines: connectivity and spanning forests enumerate all O(n^2) pairs
in chunks instead of bucketing cells, DBSCAN counts balls directly, and the
balanced-divider construction follows the counting argument step by step.
Oracles cap instance sizes and raise rather than silently degrade.
"""

from __future__ import annotations

import numpy as np

from .util import UnionFind, edge_key

ORACLE_CAP = 5000


class OracleCapExceeded(ValueError):
    pass


def _check_cap(n, cap):
    if n > cap:
        raise OracleCapExceeded(f"oracle instance size {n} exceeds cap {cap}")


def _all_rule_edges(graph, chunk=512):
    """Materialise every rule edge by scanning all pairs (i < j) in chunks."""
    n = graph.n
    edges = []
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        for j0 in range(lo, n, chunk):
            j1 = min(n, j0 + chunk)
            ia, ib = np.meshgrid(np.arange(lo, hi), np.arange(j0, j1), indexing="ij")
            keep = ia < ib
            ia, ib = ia[keep], ib[keep]
            if len(ia) == 0:
                continue
            mask, w = graph.evaluate_pairs(ia, ib)
            for a, b, ww in zip(ia[mask], ib[mask], w[mask]):
                edges.append((int(graph.ids[a]), int(graph.ids[b]), float(ww)))
    return edges


def exact_cc(graph, cap=ORACLE_CAP) -> dict:
    """Connected components by union-find over all materialised rule edges.

    Returns {vertex id: component label} with labels canonicalised to the
    smallest vertex id in the component.
    """
    _check_cap(graph.n, cap)
    uf = UnionFind(int(i) for i in graph.ids)
    for a, b, _ in _all_rule_edges(graph):
        uf.union(a, b)
    best = {}
    for vid in map(int, graph.ids):
        root = uf.find(vid)
        if root not in best or vid < best[root]:
            best[root] = vid
    return {vid: best[uf.find(vid)] for vid in map(int, graph.ids)}


def kruskal(ids, edges):
    """Plain Kruskal over explicit edges with the shared tie-break."""
    uf = UnionFind(int(i) for i in ids)
    forest = []
    for a, b, w in sorted(edges, key=lambda e: edge_key(*e)):
        if uf.union(a, b):
            forest.append((min(a, b), max(a, b), w))
    return forest


def exact_mst(graph, cap=ORACLE_CAP):
    """Minimum spanning forest via Kruskal over all materialised rule edges."""
    _check_cap(graph.n, cap)
    return kruskal(graph.ids, _all_rule_edges(graph))


def exact_mst_prim(points, cap=1000):
    """Dense Prim on complete Euclidean graphs; cross-checks exact_mst.

    points: (n, d) array.  Vertex ids are row indices.  Uses the same
    (weight, min id, max id) order, so the forests must agree edge for edge.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    _check_cap(n, cap)
    if n <= 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    dist = np.sqrt(np.sum((pts - pts[0]) ** 2, axis=1))
    best_from = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(~in_tree)[0]
        keys = [(dist[j], min(int(best_from[j]), int(j)), max(int(best_from[j]), int(j))) for j in cand]
        j = cand[min(range(len(cand)), key=keys.__getitem__)]
        a, b = int(best_from[j]), int(j)
        edges.append((min(a, b), max(a, b), float(dist[j])))
        in_tree[j] = True
        newd = np.sqrt(np.sum((pts - pts[j]) ** 2, axis=1))
        closer = newd < dist
        # equal distances: keep the incumbent unless the new edge wins the tie
        ties = (newd == dist) & ~in_tree
        for t in np.where(ties)[0]:
            old = edge_key(int(best_from[t]), int(t), float(dist[t]))
            new = edge_key(int(j), int(t), float(newd[t]))
            if new < old:
                closer[t] = True
        dist = np.where(closer, newd, dist)
        best_from = np.where(closer, j, best_from)
        dist[in_tree] = np.inf
    return sorted(edges, key=lambda e: edge_key(*e))


def euclidean_mst(points, cap=ORACLE_CAP):
    """Exact Euclidean MST of a point set by all-pairs Kruskal."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    _check_cap(n, cap)
    edges = []
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = pts[lo:hi, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        for i in range(lo, hi):
            for j in range(i + 1, n):
                edges.append((i, j, float(dist[i - lo, j])))
    return kruskal(range(n), edges)


def exact_dbscan(points, eps, min_pts, cap=ORACLE_CAP):
    """Definitional DBSCAN: ball counts, core flags, clusters, border sets.

    Ball membership is inclusive (dist <= eps); on integer inputs the
    squared distances are exact integers.  Returns a dict with
      core: (n,) bool array,
      primitive: {point index: cluster label} over core points only, where
        two cores share a label iff linked by cores at distance <= eps,
      clusters: list over all points of sorted cluster-label lists (empty
        for noise).  Labels are the smallest core point index in the cluster.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    _check_cap(n, cap)
    eps2 = float(eps) * float(eps)
    counts = np.zeros(n, dtype=np.int64)
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = pts[lo:hi, None, :] - pts[None, :, :]
        d2 = np.sum(diff * diff, axis=2)
        counts[lo:hi] = np.sum(d2 <= eps2, axis=1)
    core = counts >= int(min_pts)

    core_idx = np.where(core)[0]
    uf = UnionFind(int(i) for i in core_idx)
    for lo in range(0, len(core_idx), chunk):
        hi = min(len(core_idx), lo + chunk)
        diff = pts[core_idx[lo:hi], None, :] - pts[None, core_idx, :]
        d2 = np.sum(diff * diff, axis=2)
        near = d2 <= eps2
        for row, i in enumerate(core_idx[lo:hi]):
            for j in core_idx[near[row]]:
                if int(j) != int(i):
                    uf.union(int(i), int(j))
    label = {}
    for root, members in uf.groups().items():
        lab = min(members)
        for mbm in members:
            label[mbm] = lab

    clusters = []
    for i in range(n):
        if core[i]:
            clusters.append([label[int(i)]])
            continue
        near_labels = set()
        d2 = np.sum((pts[core_idx] - pts[i]) ** 2, axis=1) if len(core_idx) else np.empty(0)
        for j in core_idx[d2 <= eps2] if len(core_idx) else ():
            near_labels.add(label[int(j)])
        clusters.append(sorted(near_labels))
    return {"core": core, "primitive": label, "clusters": clusters}


# -- balanced slab dividers ---------------------------------------------------


def exact_balanced_divider(coords, c, threshold_denominator=None):
    """Constructive balanced c-divider with a size certificate.

    For V of distinct integer points in d dimensions, find per dimension the
    largest y_j with |{v : v_j < y_j}| <= |V| / (2(d+1)) and the smallest
    z_j with |{v : v_j > z_j}| <= |V| / (2(d+1)); pick the first dimension
    whose central band is wide enough, z_i - y_i + 1 >= (|V|/(d+1))^(1/d),
    then scan x in [y_i, z_i - c] for the slab-count minimiser (smallest x
    on ties).  Requires c <= (|V|/(d+1))^(1/d) / 2.

    Returns a dict with the divider (dim, x), the three masks, and the
    certified bounds: each side >= |V|/(4(d+1)) and the slab at most
    2 c (d+1)^(1/d) |V|^(1-1/d).
    """
    coords = np.asarray(coords, dtype=np.int64)
    n, d = coords.shape
    t = n / (2.0 * (d + 1))
    width_needed = (n / (d + 1.0)) ** (1.0 / d)
    if c > 0.5 * width_needed:
        raise ValueError(f"slab width c={c} too large for |V|={n} in {d}-D")

    dim = None
    for j in range(d):
        col = np.sort(coords[:, j])
        y = int(col[int(np.floor(t))])
        z = int(col[n - 1 - int(np.floor(t))])
        if z - y + 1 >= width_needed:
            dim = j
            break
    if dim is None:
        raise ValueError("no dimension offers a wide enough central band")

    col = coords[:, dim]
    scol = np.sort(col)
    y = int(scol[int(np.floor(t))])
    z = int(scol[n - 1 - int(np.floor(t))])
    best = None
    lo_candidates = np.concatenate([[y], np.unique(col) + 1])
    for x in lo_candidates:
        x = int(x)
        if x < y or x > z - c:
            continue
        slab = int(np.count_nonzero((col >= x) & (col <= x + c - 1)))
        if best is None or (slab, x) < best[:2]:
            best = (slab, x)
    if best is None:
        # the band is wide enough by construction, but guard anyway
        raise ValueError("empty scan range for divider")
    slab_count, x = best
    left = col <= x - 1
    right = col >= x + c
    slab = (col >= x) & (col <= x + c - 1)

    side_min = n / (4.0 * (d + 1))
    slab_max = 2.0 * c * (d + 1) ** (1.0 / d) * n ** (1.0 - 1.0 / d)
    cert = {
        "left": int(left.sum()),
        "right": int(right.sum()),
        "slab": int(slab.sum()),
        "side_lower_bound": side_min,
        "slab_upper_bound": slab_max,
    }
    assert cert["left"] + cert["right"] + cert["slab"] == n
    if cert["left"] < side_min or cert["right"] < side_min:
        raise AssertionError(f"divider certificate violated: sides {cert}")
    if cert["slab"] > slab_max:
        raise AssertionError(f"divider certificate violated: slab {cert}")
    return {"dim": dim, "x": int(x), "left": left, "right": right, "slab": slab, "certificate": cert}


# -- range-space discrepancy ---------------------------------------------------


def box_discrepancy(coords, sample_idx, max_distinct=200):
    """Worst relative-frequency error of a sample over canonical boxes.

    Canonical boxes take their corners from the sorted distinct coordinates
    of V per dimension (at most ``max_distinct`` each, else error).  Returns
    (worst_abs_discrepancy, box_count).  Only 1-D to 3-D are supported; 2-D
    and 3-D use prefix sums over the coordinate grid.
    """
    coords = np.asarray(coords, dtype=np.int64)
    n, d = coords.shape
    k = len(sample_idx)
    if k == 0 or n == 0:
        raise ValueError("need non-empty set and sample")
    axes = []
    for j in range(d):
        vals = np.unique(coords[:, j])
        if len(vals) > max_distinct:
            raise ValueError(f"dimension {j} has {len(vals)} distinct values > {max_distinct}")
        axes.append(vals)

    in_sample = np.zeros(n, dtype=bool)
    in_sample[np.asarray(sample_idx)] = True

    # histogram on the distinct-coordinate grid
    idx = np.stack([np.searchsorted(axes[j], coords[:, j]) for j in range(d)], axis=1)
    shape = tuple(len(a) for a in axes)
    hv = np.zeros(shape, dtype=np.int64)
    hs = np.zeros(shape, dtype=np.int64)
    np.add.at(hv, tuple(idx.T), 1)
    np.add.at(hs, tuple(idx.T), in_sample.astype(np.int64))

    # D = cumulative (sample frequency - ground frequency)
    delta = hs / float(k) - hv / float(n)
    for axis in range(d):
        delta = np.cumsum(delta, axis=axis)

    box_count = 1
    for a in axes:
        box_count *= len(a) * (len(a) + 1) // 2

    pad = np.zeros(tuple(s + 1 for s in shape))
    pad[(slice(1, None),) * d] = delta
    if d == 1:
        worst = _max_range_spread_1d(pad)
    elif d == 2:
        worst = max(
            _max_range_spread_1d(pad[hi] - pad[lo])
            for lo in range(shape[0] + 1)
            for hi in range(lo + 1, shape[0] + 1)
        )
    elif d == 3:
        worst = 0.0
        for lo in range(shape[0] + 1):
            for hi in range(lo + 1, shape[0] + 1):
                plane = pad[hi] - pad[lo]
                worst = max(worst, max(
                    _max_range_spread_1d(plane[b] - plane[a])
                    for a in range(shape[1] + 1)
                    for b in range(a + 1, shape[1] + 1)
                ))
    else:
        raise ValueError("box_discrepancy supports d <= 3")
    return float(worst), box_count


def _max_range_spread_1d(prefix):
    """max over a <= b of |prefix[b] - prefix[a]| for a cumulative vector."""
    best = 0.0
    lo = prefix[0]
    hi = prefix[0]
    for v in prefix[1:]:
        best = max(best, abs(v - lo), abs(v - hi))
        lo = min(lo, v)
        hi = max(hi, v)
    return best


def verify_eps_approximation(coords, sample_idx, r, max_distinct=200):
    """True iff the sample is a 1/r-approximation over canonical boxes."""
    worst, _ = box_discrepancy(coords, sample_idx, max_distinct=max_distinct)
    return worst <= 1.0 / r


# -- tree path maxima ----------------------------------------------------------


def path_max(tree_edges, u, v):
    """Maximum edge weight on the unique u-v path of a forest.

    tree_edges: iterable of (a, b, w).  Returns None when u and v are not
    connected.  Plain BFS walk; fine for oracle-sized trees.
    """
    adj = {}
    for a, b, w in tree_edges:
        adj.setdefault(a, []).append((b, w))
        adj.setdefault(b, []).append((a, w))
    if u == v:
        return 0.0
    if u not in adj or v not in adj:
        return None
    from collections import deque

    parent = {u: (None, 0.0)}
    dq = deque([u])
    while dq:
        x = dq.popleft()
        if x == v:
            break
        for y, w in adj[x]:
            if y not in parent:
                parent[y] = (x, w)
                dq.append(y)
    if v not in parent:
        return None
    best = 0.0
    x = v
    while x != u:
        x, w = parent[x]
        best = max(best, w)
    return best


def minimax_path_matrix(ids, edges):
    """All-pairs minimax path weights by Floyd-style relaxation.

    Cross-checks path_max on small instances: for tree edges the minimax
    path weight equals the tree path maximum.
    """
    ids = [int(i) for i in ids]
    pos = {v: i for i, v in enumerate(ids)}
    n = len(ids)
    mat = np.full((n, n), np.inf)
    np.fill_diagonal(mat, 0.0)
    for a, b, w in edges:
        i, j = pos[a], pos[b]
        mat[i, j] = min(mat[i, j], w)
        mat[j, i] = mat[i, j]
    for k in range(n):
        mat = np.minimum(mat, np.maximum(mat[:, k][:, None], mat[k, :][None, :]))
    return ids, mat


def tree_path_max_batch(tree_edges, queries):
    """Path maxima for many (u, v) queries in near-linear time.

    Processes tree edges in ascending weight order with union-find; a query
    is answered by the weight of the edge that first joins its endpoints.
    Verified against path_max in the test suite.
    """
    uf = UnionFind()
    answers = [None] * len(queries)
    remaining = set()
    for qi, (u, v) in enumerate(queries):
        if u == v:
            answers[qi] = 0.0
            continue
        uf.add(u)
        uf.add(v)
        remaining.add(qi)
    for a, b, w in sorted(tree_edges, key=lambda e: edge_key(*e)):
        uf.add(a)
        uf.add(b)
        if not uf.union(a, b):
            continue
        if not remaining:
            break
        done = [qi for qi in remaining if uf.find(queries[qi][0]) == uf.find(queries[qi][1])]
        for qi in done:
            answers[qi] = w
            remaining.discard(qi)
    return answers
