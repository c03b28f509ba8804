"""Pseudo separator construction for (d, c)-grid graphs.

A c-divider of a point set fixes a dimension i and a coordinate x and cuts
the set into a left part (coordinate < x), a slab of width c (x .. x+c-1)
and a right part.  No grid edge can cross the slab, so moving the slab
points into a separator set S leaves the two sides disconnected from each
other.  The distributed routine repeats a constant number of times: count
every part, pull a sample of each oversized part onto a coordinator
machine, build a recursive divider tree on the sample, broadcast all trees,
and reclassify every point locally.  Slab points accumulate in S (part id
-1); all surviving parts end up pairwise non-adjacent.

Part sizes are only estimated through the sample below the tree root, so a
part can come out oversized after a split; it simply stays active and is
cut again in the next super round.  Parts whose sample admits no balanced
divider at all are marked stuck and reported; they are rare and appear only
when the point set is almost entirely contained in a single width-c slab.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mpc import Cluster, SamplingFailure, exchange, mpc_sort, multi_broadcast

SEPARATOR_PART = -1
_SEP_CODE = -(10 ** 9)  # classification sentinel, distinct from any leaf code


class NoDivider(RuntimeError):
    """Raised when a part admits no balanced c-divider and the caller asked
    for strict behaviour instead of keeping the part oversized."""


@dataclass(frozen=True)
class SlabDivider:
    """A concrete cut: slab = { v : x <= v[dim] <= x + c - 1 }."""

    dim: int
    x: int
    c: int

    def side(self, coords) -> np.ndarray:
        """-1 left of the slab, 0 inside, +1 right of it."""
        col = np.asarray(coords)[:, self.dim]
        out = np.zeros(len(col), dtype=np.int64)
        out[col < self.x] = -1
        out[col > self.x + self.c - 1] = 1
        return out


def accuracy_parameter(s: int, d: int) -> int:
    """Sampling accuracy r; the balance slack is 1/(4d+4) - 1/r per side."""
    return max(8 * (d + 1), 2 * int(round(s ** (1.0 / d))))


def _candidate_xs(col, lo, hi):
    """Slab starts that can begin a minimal-count window in [lo, hi].

    Sliding the window right, the count only drops when a point leaves at
    the low end, i.e. at x = v + 1 for a present value v.  The minimum is
    therefore attained on {lo} union {v + 1}, and the smallest such x is the
    smallest minimiser overall.
    """
    if hi < lo:
        return []
    xs = {int(lo)}
    for v in np.unique(col):
        x = int(v) + 1
        if lo <= x <= hi:
            xs.add(x)
    return sorted(xs)


def find_divider_local(coords, c, v_est, r, relaxed=False):
    """Best balanced c-divider of a sample, or None.

    coords is the sample of a part, v_est the (estimated) true part size.
    Both side counts must reach max(1, |sample| (1/(4d+4) - 1/r)); unless
    ``relaxed``, the slab count must stay below
    2 c (1+d)^(1/d) |sample| (v_est^(-1/d) + 1/r).  The preferred scan walks
    the central band of the first dimension that is wide enough; if that
    fails every dimension and cut position is tried.
    """
    coords = np.asarray(coords, dtype=np.int64)
    nn, d = coords.shape
    if nn < 2 * (d + 1) or v_est < 1:
        return None
    t = nn // (2 * (d + 1))
    width_needed = (nn / (d + 1.0)) ** (1.0 / d)
    slab_cap = 2.0 * c * (d + 1) ** (1.0 / d) * nn * (v_est ** (-1.0 / d) + 1.0 / r)
    side_min = max(1.0, nn * (1.0 / (4 * (d + 1)) - 1.0 / r))

    def admissible(col, x):
        slab = int(np.count_nonzero((col >= x) & (col <= x + c - 1)))
        left = int(np.count_nonzero(col < x))
        right = nn - slab - left
        ok = left >= side_min and right >= side_min and (relaxed or slab <= slab_cap)
        return slab, ok

    if relaxed or c <= 0.5 * width_needed:
        for j in range(d):
            col = coords[:, j]
            scol = np.sort(col)
            y, z = int(scol[t]), int(scol[nn - 1 - t])
            if not relaxed and z - y + 1 < width_needed:
                continue
            best = None
            for x in _candidate_xs(col, y, z - c):
                slab, ok = admissible(col, x)
                if ok and (best is None or (slab, x) < best):
                    best = (slab, x)
            if best is not None:
                return SlabDivider(dim=j, x=best[1], c=c)

    best = None
    for j in range(d):
        col = coords[:, j]
        lo, hi = int(col.min()), int(col.max())
        for x in _candidate_xs(col, lo + 1, hi - c + 1):
            slab, ok = admissible(col, x)
            if ok and (best is None or (slab, j, x) < best):
                best = (slab, j, x)
    if best is None:
        return None
    return SlabDivider(dim=best[1], x=best[2], c=c)


def local_multi_partition(sample, v_est, *, c, limit, r, relaxed=False, min_leaf_sample=None):
    """Recursive divider tree over a sample, built entirely on one machine.

    Nodes are (node_id, dim, x, left_code, right_code); codes >= 0 point at
    child nodes, code -(j+1) is leaf slot j.  A node's slab points are the
    separator contribution of that node.  Recursion stops when the scaled
    size estimate drops to ``limit`` or the sample gets too thin to certify
    balance.  Returns (nodes, n_leaves, stuck) where stuck means the root
    itself could not be split.
    """
    sample = np.asarray(sample, dtype=np.int64)
    d = sample.shape[1]
    if min_leaf_sample is None:
        min_leaf_sample = 4 * (d + 1)
    nodes: list = []
    leaves = 0

    def rec(pts, v):
        nonlocal leaves
        if v <= limit or len(pts) < min_leaf_sample:
            leaves += 1
            return -leaves
        div = find_divider_local(pts, c, v, r, relaxed=relaxed)
        if div is None:
            leaves += 1
            return -leaves
        side = div.side(pts)
        node_id = len(nodes)
        nodes.append(None)  # reserve the slot; children may add nodes first
        frac = 1.0 / len(pts)
        lcode = rec(pts[side < 0], v * np.count_nonzero(side < 0) * frac)
        rcode = rec(pts[side > 0], v * np.count_nonzero(side > 0) * frac)
        nodes[node_id] = (node_id, div.dim, div.x, lcode, rcode)
        return node_id

    root = rec(sample, float(v_est))
    stuck = root < 0
    if stuck:
        nodes, leaves = [], 0
    return nodes, leaves, stuck


def classify_against_tree(coords, tree, c):
    """Leaf code per point (negative), or the separator sentinel.

    tree: {node_id: (node_id, dim, x, left_code, right_code)}.  Vectorised
    walk: index sets flow down the tree instead of per-point loops.
    """
    coords = np.asarray(coords, dtype=np.int64)
    out = np.empty(len(coords), dtype=np.int64)
    stack = [(0, np.arange(len(coords)))]
    while stack:
        code, idx = stack.pop()
        if len(idx) == 0:
            continue
        if code < 0:
            out[idx] = code
            continue
        _, dim, x, lcode, rcode = tree[code]
        col = coords[idx, dim]
        lm = col < x
        rm = col > x + c - 1
        out[idx[~lm & ~rm]] = _SEP_CODE
        stack.append((lcode, idx[lm]))
        stack.append((rcode, idx[rm]))
    return out


@dataclass
class PseudoSeparator:
    """Outcome of the separator loop; points stay distributed in `section`."""

    c: int
    d: int
    limit: int
    separator_size: int
    part_sizes: dict
    stuck_parts: frozenset
    super_rounds: int
    rounds: int
    sample_attempts: int
    section: str = "points"
    divider_log: list = field(default_factory=list)

    @property
    def n_parts(self) -> int:
        return len(self.part_sizes)

    @property
    def max_part(self) -> int:
        regular = [sz for p, sz in self.part_sizes.items() if p not in self.stuck_parts]
        return max(regular, default=0)

    def labels(self, cluster: Cluster) -> dict:
        """point id -> part id (SEPARATOR_PART for separator points)."""
        return {rec[1]: rec[0] for rec in cluster.gather(self.section)}

    def separator_ids(self, cluster: Cluster) -> list:
        return sorted(rec[1] for rec in cluster.gather(self.section) if rec[0] == SEPARATOR_PART)


def load_points(cluster: Cluster, graph, section="points"):
    """Distribute graph points as (part, id, coords..., payload...) records."""
    recs = [(0, *rec) for rec in graph.records()]
    cluster.load(section, recs)
    return len(recs)


def _local_parts(mch, section):
    """distinct part ids (except the separator) with local counts"""
    counts = {}
    for rec in mch.store.get(section, ()):
        if rec[0] != SEPARATOR_PART:
            counts[rec[0]] = counts.get(rec[0], 0) + 1
    return counts


def compute_pseudo_separator(cluster: Cluster, c: int, *, section="points", beta=0.25,
                             limit=None, relaxed=False, on_stuck="keep", d=None,
                             max_super_rounds=64, retry_cap=64) -> PseudoSeparator:
    """Split the points in `section` into non-adjacent parts of <= `limit`.

    Runs the super-round loop until no part is both oversized and splittable.
    With on_stuck="raise", an unsplittable oversized part raises NoDivider
    instead of being kept.  Points end up sorted by (part, id); separator
    points carry part id -1 and sort first.  Records may carry payload words
    after the first 2+d fields; pass ``d`` explicitly in that case.
    """
    s = cluster.config.s
    if limit is None:
        limit = 2 * s
    k = max(1, int(beta * s))
    m = cluster.m
    recs0 = cluster.gather(section)
    if d is None:
        d = len(recs0[0]) - 2 if recs0 else 0
    n_total = len(recs0)
    r = accuracy_parameter(s, d) if d else 8

    def coord_of(part):
        return part % m

    stuck: set = set()
    sizes: dict = {}
    attempts_total = 0
    divider_log: list = []
    round0 = cluster.round
    super_rounds = 0

    cluster.begin_phase("separator")
    for _ in range(max_super_rounds + 1):
        # count every live part on its coordinator
        queues = {}
        for mch in cluster.machines:
            for part, cnt in _local_parts(mch, section).items():
                queues.setdefault(mch.mid, {}).setdefault(coord_of(part), []).append(
                    ("_pcount", (part, cnt)))
        exchange(cluster, queues)
        sizes = {}
        for mch in cluster.machines:
            for part, cnt in mch.store.get("_pcount", ()):
                sizes[part] = sizes.get(part, 0) + cnt
            mch.clear("_pcount")

        active = sorted(p for p, sz in sizes.items() if sz > limit and p not in stuck)
        if not active:
            break
        super_rounds += 1
        active_set = set(active)

        # directory: every machine learns all part ids, sizes, active flags
        payloads = {}
        for part, sz in sorted(sizes.items()):
            payloads.setdefault(coord_of(part), []).append(
                (part, sz, 1 if part in active_set else 0))
        multi_broadcast(cluster, payloads, "_dir")

        # sample each active part onto its coordinator, window [k, 3k]
        pending = list(active)
        p_of = {part: min(1.0, 2.0 * k / sizes[part]) for part in active}
        attempt_round = 0
        while pending:
            attempt_round += 1
            attempts_total += 1
            if attempt_round > retry_cap:
                raise SamplingFailure(f"part sampling exceeded {retry_cap} attempts")
            retry = set(pending)
            cand_by_mid = {}

            def mark(mch):
                cand = {}
                for rec in mch.store.get(section, ()):
                    part = rec[0]
                    if part in retry and mch.rng.random() < p_of[part]:
                        cand.setdefault(part, []).append(rec[2:2 + d])
                cand_by_mid[mch.mid] = cand
                for part in retry:
                    mch.send(coord_of(part), "_scount", (part, len(cand.get(part, ()))))
            cluster.exec_round(mark)

            got = {}
            for mch in cluster.machines:
                for part, cnt in mch.store.get("_scount", ()):
                    got[part] = got.get(part, 0) + cnt
                mch.clear("_scount")
            accepted = {part for part in retry if k <= got.get(part, 0) <= 3 * k}

            queues = {}
            for mid, cand in cand_by_mid.items():
                for part in accepted:
                    for coords in cand.get(part, ()):
                        queues.setdefault(mid, {}).setdefault(coord_of(part), []).append(
                            ("_samples", (part, *coords)))
            exchange(cluster, queues)
            pending = [part for part in pending if part not in accepted]

        # every coordinator builds divider trees for its parts, locally
        tree_payloads = {}

        def build(mch):
            by_part = {}
            for rec in mch.store.get("_samples", ()):
                by_part.setdefault(rec[0], []).append(rec[1:])
            mch.clear("_samples")
            out = []
            for part in sorted(by_part):
                pts = np.array(by_part[part], dtype=np.int64)
                nodes, _, is_stuck = local_multi_partition(
                    pts, sizes[part], c=c, limit=limit, r=r, relaxed=relaxed)
                if is_stuck:
                    out.append((part, -1, 0, 0, 0, 0))
                else:
                    for nid, dim, x, lc, rc in nodes:
                        out.append((part, nid, dim, x, lc, rc))
            if out:
                tree_payloads[mch.mid] = out
        cluster.local(build)
        multi_broadcast(cluster, tree_payloads, "_trees")

        # reclassify locally; every machine derives the same dense relabeling
        def reclassify(mch):
            trees = {}
            for rec in mch.store.get("_trees", ()):
                part, nid = rec[0], rec[1]
                if nid != -1:
                    trees.setdefault(part, {})[nid] = rec[1:]
            mch.clear("_trees")
            all_parts = sorted(p for p, _, _ in mch.store.get("_dir", ()))
            mch.clear("_dir")
            labels = []
            for p in all_parts:
                if p in trees:
                    n_leaves = -min(min(lc, rc) for _, _, _, lc, rc in trees[p].values())
                    labels.extend((p, j) for j in range(n_leaves))
                else:
                    labels.append((p, -1))
            new_id = {lab: i for i, lab in enumerate(labels)}

            sec = mch.store.get(section, ())
            if not sec:
                return
            parts = np.array([rec[0] for rec in sec], dtype=np.int64)
            coords = np.array([rec[2:2 + d] for rec in sec], dtype=np.int64)
            out = [None] * len(sec)
            for p in np.unique(parts):
                idx = np.where(parts == p)[0]
                p = int(p)
                if p in trees:
                    codes = classify_against_tree(coords[idx], trees[p], c)
                    for i, code in zip(idx, codes):
                        if code == _SEP_CODE:
                            out[i] = (SEPARATOR_PART, *sec[i][1:])
                        else:
                            out[i] = (new_id[(p, -int(code) - 1)], *sec[i][1:])
                elif p == SEPARATOR_PART:
                    for i in idx:
                        out[i] = sec[i]
                else:
                    for i in idx:
                        out[i] = (new_id[(p, -1)], *sec[i][1:])
            mch.store[section] = out
        cluster.local(reclassify)

        # orchestrator keeps the same books from the broadcast trees
        stuck_rows = set()
        split_leaves = {}
        for recs in tree_payloads.values():
            for rec in recs:
                if rec[1] == -1:
                    stuck_rows.add(rec[0])
                else:
                    split_leaves[rec[0]] = max(split_leaves.get(rec[0], 0),
                                               -min(rec[4], rec[5]))
                    divider_log.append((super_rounds, rec[0], rec[2], rec[3]))
        labels = []
        for p in sorted(sizes):
            if p in split_leaves:
                labels.extend((p, j) for j in range(split_leaves[p]))
            else:
                labels.append((p, -1))
        new_dense = {lab: i for i, lab in enumerate(labels)}
        stuck = {new_dense[(p, -1)] for p in (stuck | stuck_rows) if (p, -1) in new_dense}

        if stuck_rows and on_stuck == "raise":
            raise NoDivider(f"parts {sorted(stuck_rows)} admit no balanced {c}-divider")

        # global sort restores part-contiguous layout
        mpc_sort(cluster, section)
    else:
        raise RuntimeError(f"separator did not converge in {max_super_rounds} super rounds")
    cluster.end_phase()

    separator_size = n_total - sum(sizes.values())
    return PseudoSeparator(
        c=c, d=d, limit=limit,
        separator_size=separator_size,
        part_sizes=dict(sorted(sizes.items())),
        stuck_parts=frozenset(stuck),
        super_rounds=super_rounds,
        rounds=cluster.round - round0,
        sample_attempts=attempts_total,
        section=section,
        divider_log=divider_log,
    )


def verify_separator(graph, labels, limit=None):
    """Check the separator contract on an explicit graph.

    labels: point id -> part id (-1 for separator points).  Verifies that no
    rule edge joins two distinct non-separator parts, and optionally that no
    part exceeds ``limit``.  Returns a dict of findings.
    """
    from .grid import candidate_pairs

    ia, ib = candidate_pairs(graph.coords, graph.rule.reach)
    mask, _ = graph.evaluate_pairs(ia, ib)
    crossing = 0
    for a, b in zip(ia[mask], ib[mask]):
        la, lb = labels[int(graph.ids[a])], labels[int(graph.ids[b])]
        if la != lb and la != SEPARATOR_PART and lb != SEPARATOR_PART:
            crossing += 1
    part_sizes = {}
    separator = 0
    for pid, lab in labels.items():
        if lab == SEPARATOR_PART:
            separator += 1
        else:
            part_sizes[lab] = part_sizes.get(lab, 0) + 1
    oversized = {p: sz for p, sz in part_sizes.items() if limit is not None and sz > limit}
    return {
        "crossing_edges": crossing,
        "separator_size": separator,
        "part_sizes": part_sizes,
        "oversized": oversized,
        "ok": crossing == 0 and not oversized,
    }
