"""Connected components and minimum spanning forests of (d, c)-grid graphs.

Both pipelines share the same shape.  After the pseudo separator splits the
points into pairwise non-adjacent parts plus a separator set S, every grid
edge is either internal to one part's neighbourhood or joins two separator
points.  Each part is consolidated on a coordinator machine, which solves
its extended subgraph H_i (the part plus the separator points within the
part's bounding box grown by c) exactly and compresses the resulting forest
onto the separator.  All compressed forests, together with every S-S edge
and the S singletons, form a merge graph small enough for a single machine,
where the global structure is resolved; labels (or edge deletions) then
flow back down to the coordinators.

The merge step is exact, not heuristic: a compressed edge stands for a tree
path and carries the identity of its heaviest original edge, so rejecting
it at the merge graph deletes precisely that edge.  With the shared total
order on edges (weight, min id, max id) the spanning forest is unique, and
the pipelines are compared edge for edge against the single-machine oracles
in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ImplicitGridGraph, candidate_pairs
from .mpc import Cluster, exchange, multi_broadcast
from .separator import SEPARATOR_PART, PseudoSeparator, compute_pseudo_separator, load_points
from .util import UnionFind, edge_key


class SeparatorOverflow(RuntimeError):
    """The separator does not fit into one machine's memory budget."""


class MergeOverflow(RuntimeError):
    """The merge graph exceeds s edges and cannot be solved on one machine."""


def rule_edges(ids, coords, rule, payload=None):
    """Index pairs and weights of all rule edges, via neighbourhood buckets."""
    ids = np.asarray(ids, dtype=np.int64)
    coords = np.asarray(coords, dtype=np.int64)
    if len(ids) == 0:
        return (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
    g = ImplicitGridGraph(ids=ids, coords=coords, rule=rule, payload=payload)
    ia, ib = candidate_pairs(coords, rule.reach)
    mask, w = g.evaluate_pairs(ia, ib)
    return ia[mask], ib[mask], w[mask]


def _kruskal(ids, edges):
    edges = sorted(edges, key=lambda e: edge_key(*e))
    uf = UnionFind(int(i) for i in ids)
    forest = []
    for a, b, w in edges:
        if uf.union(a, b):
            forest.append((min(a, b), max(a, b), w))
    return forest


def local_forest(ids, coords, rule, payload=None):
    """Tie-broken Kruskal over the rule edges of an explicit point set."""
    ia, ib, w = rule_edges(ids, coords, rule, payload=payload)
    ids = np.asarray(ids, dtype=np.int64)
    edges = [(int(ids[a]), int(ids[b]), float(ww)) for a, b, ww in zip(ia, ib, w)]
    return _kruskal(ids, edges)


def compress_forest(forest, terminals):
    """Compress a forest onto its terminal vertices.

    Non-terminal leaf branches are pruned (those edges can never close a
    cycle through another part, so they are kept unconditionally), then
    degree-2 non-terminal chains are contracted.  Every surviving original
    edge belongs to exactly one compressed edge, whose weight and identity
    are those of the heaviest original edge on the chain.  Because the
    chains are edge-disjoint, a cycle among compressed edges lifts to a
    real cycle, which is what makes reject-then-delete at the merge exact;
    a tree on the terminals alone with matching path maxima would not have
    that property.

    Returns (compressed, covered) where compressed is a list of
    (a, b, w, bu, bv) rows, with (bu, bv, w) the bottleneck edge, and
    covered is the set of original edge pairs appearing in some chain.
    """
    adj = {}
    for u, v, w in forest:
        adj.setdefault(u, []).append((v, w))
        adj.setdefault(v, []).append((u, w))
    terminals = set(terminals)

    # prune non-terminal leaves until every leaf is a terminal
    deg = {u: len(nb) for u, nb in adj.items()}
    alive = {u: True for u in adj}
    stack = [u for u in adj if deg[u] == 1 and u not in terminals]
    while stack:
        u = stack.pop()
        if not alive[u]:
            continue
        alive[u] = False
        for v, _ in adj[u]:
            if alive[v]:
                deg[v] -= 1
                if deg[v] == 1 and v not in terminals:
                    stack.append(v)
                elif deg[v] == 0:
                    alive[v] = False

    def is_anchor(u):
        return u in terminals or deg[u] >= 3

    compressed = []
    covered = set()
    for a in adj:
        if not alive[a] or not is_anchor(a):
            continue
        for v0, w0 in adj[a]:
            if not alive[v0]:
                continue
            # walk the chain a - v0 - ... until the next anchor
            prev, cur = a, v0
            bot = (w0, min(a, v0), max(a, v0))
            path = [(min(a, v0), max(a, v0))]
            while alive[cur] and not is_anchor(cur):
                nxt = [(v, w) for v, w in adj[cur] if v != prev and alive[v]]
                if len(nxt) != 1:
                    break
                (v, w), = nxt
                cand = (w, min(cur, v), max(cur, v))
                if cand > bot:
                    bot = cand
                path.append((min(cur, v), max(cur, v)))
                prev, cur = cur, v
            b = cur
            if not alive[b] or not is_anchor(b):
                continue
            if path[0] in covered:
                continue  # chain already walked from the other anchor
            covered.update(path)
            w, bu, bv = bot
            compressed.append((min(a, b), max(a, b), w, bu, bv))
    return compressed, covered


@dataclass
class GridCCResult:
    labels: dict
    separator: PseudoSeparator
    rounds: int
    cluster: Cluster = field(repr=False, default=None)

    @property
    def n_components(self) -> int:
        return len(set(self.labels.values()))


@dataclass
class GridForestResult:
    edges: list
    separator: PseudoSeparator
    rounds: int
    cluster: Cluster = field(repr=False, default=None)

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))


def _consolidate(cluster, d, c, rule, kpay):
    """Steps shared by both pipelines after the separator has run.

    Returns (tree_by_part shape on machines, merge rows on machine 0).
    Machine stores used: _sep (separator copies everywhere), _vpart
    (consolidated parts), _tree (local forest edges), _m0c / _m0t (merge
    graph rows shipped to machine 0).
    """
    m = cluster.m

    payloads = {}
    for mch in cluster.machines:
        recs = [rec[1:] for rec in mch.store.get("points", ()) if rec[0] == SEPARATOR_PART]
        if recs:
            payloads[mch.mid] = recs
    multi_broadcast(cluster, payloads, "_sep")

    queues = {}
    for mch in cluster.machines:
        q = {}
        for rec in mch.store.get("points", ()):
            if rec[0] != SEPARATOR_PART:
                q.setdefault(rec[0] % m, []).append(("_vpart", rec))
        if q:
            queues[mch.mid] = q
    exchange(cluster, queues)

    def build_local(mch):
        sep_recs = mch.store.get("_sep", ())
        if sep_recs:
            sids = np.array([r[0] for r in sep_recs], dtype=np.int64)
            scoords = np.array([r[1:1 + d] for r in sep_recs], dtype=np.int64)
            spay = (np.array([r[1 + d:] for r in sep_recs], dtype=np.int64)
                    if kpay else None)
        by_part = {}
        for rec in mch.store.get("_vpart", ()):
            by_part.setdefault(rec[0], []).append(rec[1:])
        tree_rows, m0c_rows, m0t_rows = [], [], []
        for part in sorted(by_part):
            vrecs = by_part[part]
            vids = np.array([r[0] for r in vrecs], dtype=np.int64)
            vcoords = np.array([r[1:1 + d] for r in vrecs], dtype=np.int64)
            vpay = (np.array([r[1 + d:] for r in vrecs], dtype=np.int64)
                    if kpay else None)
            if sep_recs:
                lo = vcoords.min(axis=0) - c
                hi = vcoords.max(axis=0) + c
                inbox = np.all((scoords >= lo) & (scoords <= hi), axis=1)
                hids = np.concatenate([vids, sids[inbox]])
                hcoords = np.concatenate([vcoords, scoords[inbox]])
                hpay = (np.concatenate([vpay, spay[inbox]]) if kpay else None)
                terms = set(int(i) for i in sids[inbox])
            else:
                hids, hcoords, hpay, terms = vids, vcoords, vpay, set()
            forest = local_forest(hids, hcoords, rule, payload=hpay)
            tree_rows.extend((part, u, v, w) for u, v, w in forest)
            compressed, _ = compress_forest(forest, terms)
            m0c_rows.extend((part, a, b, w, bu, bv) for a, b, w, bu, bv in compressed)
            m0t_rows.extend((part, t) for t in sorted(terms))
        mch.store["_tree"] = tree_rows
        mch.store["_m0c"] = m0c_rows
        mch.store["_m0t"] = m0t_rows
    cluster.local(build_local)

    merge_edges = sum(len(mch.store.get("_m0c", ())) for mch in cluster.machines)
    if merge_edges > cluster.config.s:
        raise MergeOverflow(f"merge graph has {merge_edges} edges > s={cluster.config.s}")

    queues = {}
    for mch in cluster.machines:
        if mch.mid == 0:
            continue  # its rows already sit on the merge machine
        rows = [("_m0c", rec) for rec in mch.store.get("_m0c", ())]
        rows += [("_m0t", rec) for rec in mch.store.get("_m0t", ())]
        if rows:
            queues[mch.mid] = {0: rows}
    exchange(cluster, queues)
    cluster.local(lambda mch: (mch.clear("_m0c"), mch.clear("_m0t")) if mch.mid != 0 else None)


def _separator_edges(mch, d, kpay, rule):
    """All S-S rule edges, computed locally from the broadcast separator."""
    sep_recs = mch.store.get("_sep", ())
    if not sep_recs:
        return []
    sids = np.array([r[0] for r in sep_recs], dtype=np.int64)
    scoords = np.array([r[1:1 + d] for r in sep_recs], dtype=np.int64)
    spay = np.array([r[1 + d:] for r in sep_recs], dtype=np.int64) if kpay else None
    ia, ib, w = rule_edges(sids, scoords, rule, payload=spay)
    return [(int(sids[a]), int(sids[b]), float(ww)) for a, b, ww in zip(ia, ib, w)]


def _pipeline(graph, config, *, want_forest, relaxed=False, on_stuck="keep", limit=None):
    cluster = Cluster(config)
    load_points(cluster, graph)
    d, c, kpay = graph.d, graph.rule.reach, graph.record_width() - 1 - graph.d
    sep = compute_pseudo_separator(cluster, c, d=d, relaxed=relaxed,
                                   on_stuck=on_stuck, limit=limit)
    if sep.separator_size > config.s:
        raise SeparatorOverflow(
            f"separator of {sep.separator_size} points exceeds s={config.s}")

    cluster.begin_phase("forest" if want_forest else "components")
    _consolidate(cluster, d, c, graph.rule, kpay)
    m = cluster.m
    m0 = cluster.machine(0)

    # -- merge graph on machine 0 (local compute) ---------------------------
    ess = _separator_edges(m0, d, kpay, graph.rule)
    comp_rows = list(m0.store.get("_m0c", ()))
    term_rows = list(m0.store.get("_m0t", ()))
    m0.clear("_m0c")
    m0.clear("_m0t")
    sep_ids = [r[0] for r in m0.store.get("_sep", ())]

    cc = UnionFind(sep_ids)
    for u, v, _ in ess:
        cc.union(u, v)
    for _, a, b, _, _, _ in comp_rows:
        cc.add(a)
        cc.add(b)
        cc.union(a, b)

    rejected = []
    accepted_ess = []
    if want_forest:
        rows = [(edge_key(u, v, w) + (0,), None, (u, v, w)) for u, v, w in ess]
        rows += [(edge_key(bu, bv, w) + (1,), (part, bu, bv), (a, b, w))
                 for part, a, b, w, bu, bv in comp_rows]
        rows.sort(key=lambda r: r[0])
        uf = UnionFind(sep_ids)
        for key, ident, (u, v, w) in rows:
            uf.add(u)
            uf.add(v)
            if uf.union(u, v):
                if ident is None:
                    accepted_ess.append((min(u, v), max(u, v), w))
            elif ident is not None:
                rejected.append(ident)

    # canonical merge-graph labels: smallest member id per component
    label0 = {}
    for root, members in cc.groups().items():
        lab = min(members)
        for x in members:
            label0[x] = lab

    # -- replies routed per part --------------------------------------------
    queues = {0: {}}
    if want_forest:
        for part, bu, bv in rejected:
            queues[0].setdefault(part % m, []).append(("_mdel", (part, bu, bv)))
    else:
        reply = {}
        for part, a, b, _, _, _ in comp_rows:
            reply.setdefault(part, set()).update([(a, label0[a]), (b, label0[b])])
        for part, t in term_rows:
            reply.setdefault(part, set()).add((t, label0[t]))
        for part, pairs in reply.items():
            dest = part % m
            queues[0].setdefault(dest, [])
            for vid, lab in sorted(pairs):
                queues[0][dest].append(("_mlabel", (part, vid, lab)))
    exchange(cluster, queues)

    if want_forest:
        def emit_forest(mch):
            drop = {(min(bu, bv), max(bu, bv)) for part, bu, bv in mch.store.get("_mdel", ())}
            mch.clear("_mdel")
            out = [(u, v, w) for _, u, v, w in mch.store.get("_tree", ())
                   if (u, v) not in drop]
            if mch.mid == 0:
                out.extend(accepted_ess)
            mch.store["msf"] = sorted(set(out), key=lambda e: edge_key(*e))
        cluster.local(emit_forest)
        cluster.end_phase()

        edges = sorted(cluster.gather("msf"), key=lambda e: edge_key(*e))
        seen = set()
        check = UnionFind()
        for u, v, w in edges:
            assert (u, v) not in seen, f"duplicate forest edge {(u, v)}"
            seen.add((u, v))
            check.add(u)
            check.add(v)
            assert check.union(u, v), f"cycle through forest edge {(u, v)}"
        return GridForestResult(edges=edges, separator=sep,
                                rounds=cluster.round, cluster=cluster)

    # -- connected components: inherit labels, then canonicalise ------------
    def label_parts(mch):
        got = {}
        for part, vid, lab in mch.store.get("_mlabel", ()):
            got.setdefault(part, {})[vid] = lab
        mch.clear("_mlabel")
        by_part = {}
        for rec in mch.store.get("_vpart", ()):
            by_part.setdefault(rec[0], []).append(rec[1])
        trees = {}
        for part, u, v, _ in mch.store.get("_tree", ()):
            trees.setdefault(part, []).append((u, v))
        pre = []  # (pid, preliminary label)
        minima = {}  # preliminary label -> smallest member pid seen here
        for part, vids in by_part.items():
            vset = set(vids)
            uf = UnionFind(vids)
            for u, v in trees.get(part, ()):
                uf.add(u)
                uf.add(v)
                uf.union(u, v)
            labmap = got.get(part, {})
            root_label = {}
            for root, members in uf.groups().items():
                inherited = sorted(labmap[x] for x in members if x in labmap)
                own = [x for x in members if x in vset]
                lab = inherited[0] if inherited else min(own)
                root_label[root] = lab
                lo = min(own) if own else lab
                minima[lab] = min(minima.get(lab, lo), lo)
            for pid in vids:
                pre.append((pid, root_label[uf.find(pid)]))
        mch.store["_cc_pre"] = pre
        for lab, lo in sorted(minima.items()):
            mch.send(0, "_cc_min", (lab, lo))
    cluster.exec_round(label_parts)

    final = {}
    for lab, lo in m0.store.get("_cc_min", ()):
        final[lab] = min(final.get(lab, lo), lo)
    m0.clear("_cc_min")
    for vid in sep_ids:
        lab = label0[vid]
        final[lab] = min(final.get(lab, lab), lab)
    # merge-graph labels may be refined by part interiors
    fanout = {0: {}}
    for mch in cluster.machines:
        labs = sorted({lab for _, lab in mch.store.get("_cc_pre", ())})
        for lab in labs:
            fanout[0].setdefault(mch.mid, []).append(("_cc_final", (lab, final.get(lab, lab))))
    exchange(cluster, fanout)

    def emit_labels(mch):
        fmap = dict((lab, fin) for lab, fin in mch.store.get("_cc_final", ()))
        mch.clear("_cc_final")
        out = [(pid, fmap.get(lab, lab)) for pid, lab in mch.store.get("_cc_pre", ())]
        mch.clear("_cc_pre")
        if mch.mid == 0:
            out.extend((vid, final.get(label0[vid], label0[vid])) for vid in sep_ids)
        mch.store["cc"] = sorted(out)
    cluster.local(emit_labels)
    cluster.end_phase()

    labels = dict(cluster.gather("cc"))
    return GridCCResult(labels=labels, separator=sep,
                        rounds=cluster.round, cluster=cluster)


def cc_grid(graph, config, *, relaxed=False, on_stuck="keep", limit=None) -> GridCCResult:
    """Connected components of a grid graph; labels are the component minima."""
    return _pipeline(graph, config, want_forest=False, relaxed=relaxed,
                     on_stuck=on_stuck, limit=limit)


def msf_grid(graph, config, *, relaxed=False, on_stuck="keep", limit=None) -> GridForestResult:
    """Minimum spanning forest of a grid graph under the shared edge order."""
    return _pipeline(graph, config, want_forest=True, relaxed=relaxed,
                     on_stuck=on_stuck, limit=limit)
