"""Approximate density clustering in O(1) simulated rounds.

The pipeline follows the usual grid decomposition: points are sorted into
cells of side eps/sqrt(d) so that each cell occupies a contiguous machine
interval, every cell learns where its geometric neighbours are stored, and
core points are identified exactly (dense cells wholesale, sparse cells by
probing the neighbour machines; the probe phase takes exactly two
communication rounds).  Core points are then clustered approximately: a
coarse grid snaps them to cell corners, components of the corner graph
under the (1 + rho/2) eps edge rule become the primitive clusters, and
non-core points pick up the cluster ids of in-range core points with the
same two-round probe skeleton.

Core labels are exact.  The clustering is rho-approximate in the sandwich
sense: any two core points within eps always share a cluster, and two
core points only share a cluster if they are linked by hops of at most
(1 + rho) eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .connectivity import cc_grid
from .grid import EuclidThresholdRule, ImplicitGridGraph
from .mpc import Cluster, ClusterConfig, exchange, multi_broadcast


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int
    rho: float

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1 or int(self.min_pts) != self.min_pts:
            raise ValueError("min_pts must be an integer >= 1")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class GridCell:
    coord: tuple
    size: int
    loc: tuple  # (lo, hi) machine interval, inclusive


@dataclass
class ClusterOutput:
    core: list
    clusters: list  # per point: sorted cluster ids; [] means noise
    n_clusters: int
    rounds: int
    violations: int
    phases: dict
    params: DbscanParams
    cluster: Cluster = field(repr=False, default=None)
    # per-round traffic, outer cluster followed by the connectivity run
    stats: list = field(default_factory=list, repr=False)

    @property
    def n_noise(self) -> int:
        return sum(1 for c in self.clusters if not c)

    def single_labels(self) -> list:
        """Partition view: smallest id for multi-cluster border points, -1
        for noise."""
        return [min(c) if c else -1 for c in self.clusters]


def neighbor_offsets(d: int) -> list:
    """Cell offsets that can hold a point pair within eps.

    With cell side eps/sqrt(d) the gap between two boxes offset by o is
    side * sqrt(sum(max(|o_j|-1, 0)^2)), so the cutoff is an exact integer
    comparison against d.  The count stays below (2 sqrt(d) + 3)^d.
    """
    reach = 1 + math.isqrt(d)
    out = []
    for off in product(range(-reach, reach + 1), repeat=d):
        if any(off) and sum(max(abs(o) - 1, 0) ** 2 for o in off) <= d:
            out.append(off)
    return out


def _cell_key(rec, d):
    return rec[1:1 + d]


def assign_cells(cluster: Cluster, points: np.ndarray, eps: float) -> dict:
    """Sort points into grid cells of side eps/sqrt(d) across the machines.

    Rows (id, cell, coords) end up ordered by (cell, id) and
    block-distributed, so every cell's points form one contiguous machine
    interval.  Cells that touch a machine boundary get their interval and
    total size resolved through a coordinator handshake; interior cells are
    purely local.  Returns the directory {cell: GridCell}.
    """
    n, d = points.shape
    side = eps / math.sqrt(d)
    cells = np.floor(points / side).astype(np.int64)
    rows = [(i,) + tuple(int(x) for x in cells[i]) + tuple(float(x) for x in points[i])
            for i in range(n)]
    cluster.load("_raw", rows)

    order = sorted(range(n), key=lambda i: (rows[i][1:1 + d], i))
    per = math.ceil(n / cluster.m)
    queues = {}
    for rank, i in enumerate(order):
        src, dst = i // per, rank // per
        queues.setdefault(src, {}).setdefault(dst, []).append(("_pts", rows[i]))
    exchange(cluster, queues)
    cluster.local(lambda mch: (mch.clear("_raw"),
                               mch.section("_pts").sort(key=lambda r: (r[1:1 + d], r[0]))))

    # boundary cells: each machine reports its first and last cell with the
    # local count; the coordinator merges runs and answers with (lo, hi, size)
    queues = {}
    for mch in cluster.machines:
        recs = mch.store.get("_pts", ())
        if not recs:
            continue
        first, last = _cell_key(recs[0], d), _cell_key(recs[-1], d)
        cf = sum(1 for r in recs if _cell_key(r, d) == first)
        cl = sum(1 for r in recs if _cell_key(r, d) == last)
        queues[mch.mid] = {0: [("_bnd", (mch.mid,) + first + (cf,) + last + (cl,))]}
    exchange(cluster, queues)

    m0 = cluster.machine(0)
    reporters = {}  # cell -> {mid: local count}
    for rec in m0.store.get("_bnd", ()):
        mid = rec[0]
        first, cf = rec[1:1 + d], rec[1 + d]
        last, cl = rec[2 + d:2 + 2 * d], rec[2 + 2 * d]
        reporters.setdefault(first, {})[mid] = cf
        reporters.setdefault(last, {})[mid] = cl
    m0.clear("_bnd")
    queues = {0: {}}
    for cell, by_mid in sorted(reporters.items()):
        lo, hi, size = min(by_mid), max(by_mid), sum(by_mid.values())
        for mid in by_mid:
            queues[0].setdefault(mid, []).append(("_bndloc", cell + (lo, hi, size)))
    exchange(cluster, queues)

    def build_dir(mch):
        recs = mch.store.get("_pts", ())
        counts = {}
        for r in recs:
            counts[_cell_key(r, d)] = counts.get(_cell_key(r, d), 0) + 1
        resolved = {r[:d]: r[d:] for r in mch.store.get("_bndloc", ())}
        mch.clear("_bndloc")
        for cell in sorted(counts):
            lo, hi, size = resolved.get(cell, (mch.mid, mch.mid, counts[cell]))
            mch.section("_dir").append(cell + (lo, hi, size))
    cluster.local(build_dir)

    directory = {}
    for rec in cluster.gather("_dir"):
        directory[rec[:d]] = GridCell(coord=rec[:d], size=rec[d + 2],
                                      loc=(rec[d], rec[d + 1]))
    return directory


def neighbor_locations(cluster: Cluster, d: int) -> dict:
    """Resolve the storage interval of every non-empty neighbour cell.

    Four super rounds: scatter candidate (cell, machine, neighbour) tuples
    sorted by neighbour coordinate; broadcast each machine's coordinate
    range; route every support cell's (coord, interval) to the machines
    whose range covers it; fill the placeholders and send the tuples home.
    Returns {cell: {neighbour cell: (lo, hi)}}.
    """
    offs = neighbor_offsets(d)
    m = cluster.m

    tuples = []
    for mch in cluster.machines:
        for rec in mch.store.get("_dir", ()):
            cell = rec[:d]
            for off in offs:
                nbr = tuple(cell[j] + off[j] for j in range(d))
                tuples.append((nbr, cell, mch.mid))
    tuples.sort()
    per = math.ceil(len(tuples) / m) if tuples else 1
    queues = {}
    for rank, (nbr, cell, src) in enumerate(tuples):
        queues.setdefault(src, {}).setdefault(rank // per, []).append(
            ("_t4", cell + (src,) + nbr))
    exchange(cluster, queues)

    payloads = {}
    for mch in cluster.machines:
        t4 = mch.store.get("_t4", ())
        if t4:
            nbrs = sorted(r[d + 1:] for r in t4)
            payloads[mch.mid] = [(mch.mid,) + nbrs[0] + nbrs[-1]]
    multi_broadcast(cluster, payloads, "_ranges")

    queues = {}
    for mch in cluster.machines:
        rngs = [(r[0], r[1:1 + d], r[1 + d:1 + 2 * d])
                for r in mch.store.get("_ranges", ())]
        for rec in mch.store.get("_dir", ()):
            cell, lo, hi = rec[:d], rec[d], rec[d + 1]
            for rm, mn, mx in rngs:
                if mn <= cell <= mx:
                    queues.setdefault(mch.mid, {}).setdefault(rm, []).append(
                        ("_t2", cell + (lo, hi)))
    exchange(cluster, queues)

    queues = {}
    for mch in cluster.machines:
        locs = {r[:d]: (r[d], r[d + 1]) for r in mch.store.get("_t2", ())}
        for r in mch.store.get("_t4", ()):
            cell, src, nbr = r[:d], r[d], r[d + 1:]
            if nbr in locs:
                queues.setdefault(mch.mid, {}).setdefault(src, []).append(
                    ("_nbr", cell + nbr + locs[nbr]))
    exchange(cluster, queues)
    cluster.local(lambda mch: (mch.clear("_t4"), mch.clear("_t2"),
                               mch.clear("_ranges")))

    table = {}
    for rec in cluster.gather("_nbr"):
        table.setdefault(rec[:d], {})[rec[d:2 * d]] = (rec[2 * d], rec[2 * d + 1])
    return table


def _ball_counts(local: np.ndarray, probes: np.ndarray, eps2: float) -> np.ndarray:
    if len(local) == 0 or len(probes) == 0:
        return np.zeros(len(probes), dtype=np.int64)
    diff = probes[:, None, :] - local[None, :, :]
    return np.count_nonzero(np.sum(diff * diff, axis=2) <= eps2, axis=1)


def _probe_targets(mch, d):
    """Per sparse-cell point: the other machines that may hold ball members
    (storage of the point's own cell and of its non-empty neighbours)."""
    dirs = {r[:d]: (r[d], r[d + 1], r[d + 2]) for r in mch.store.get("_dir", ())}
    nbrs = {}
    for r in mch.store.get("_nbr", ()):
        nbrs.setdefault(r[:d], []).append((r[2 * d], r[2 * d + 1]))
    out = []
    for rec in mch.store.get("_pts", ()):
        cell = rec[1:1 + d]
        lo, hi, size = dirs[cell]
        targets = set(range(lo, hi + 1))
        for nlo, nhi in nbrs.get(cell, ()):
            targets.update(range(nlo, nhi + 1))
        targets.discard(mch.mid)
        out.append((rec, size, sorted(targets)))
    return out


def label_core_points(cluster: Cluster, params: DbscanParams, d: int) -> dict:
    """Exact core flags in exactly two communication rounds.

    Dense cells (directory size >= min_pts) are flagged wholesale.  Every
    sparse-cell point probes the machines of its own and neighbouring
    cells; each counts its local points inside the ball and replies; the
    origin adds its own local count.  Returns {point id: bool}.
    """
    eps2 = params.eps * params.eps
    queues = {}
    for mch in cluster.machines:
        for rec, size, targets in _probe_targets(mch, d):
            if size >= params.min_pts:
                mch.section("_core").append((rec[0], 1))
                continue
            for t in targets:
                queues.setdefault(mch.mid, {}).setdefault(t, []).append(
                    ("_probe", (rec[0], mch.mid) + rec[1 + d:]))
    exchange(cluster, queues)

    queues = {}
    for mch in cluster.machines:
        probes = mch.store.get("_probe", ())
        mch.clear("_probe")
        if not probes:
            continue
        local = np.array([r[1 + d:] for r in mch.store.get("_pts", ())], dtype=float)
        counts = _ball_counts(local, np.array([p[2:] for p in probes], dtype=float), eps2)
        for (pid, src, *_), cnt in zip(probes, counts):
            queues.setdefault(mch.mid, {}).setdefault(src, []).append(
                ("_reply", (pid, int(cnt))))
    exchange(cluster, queues)

    def finish(mch):
        flagged = {pid for pid, _ in mch.store.get("_core", ())}
        recs = [r for r in mch.store.get("_pts", ()) if r[0] not in flagged]
        if not recs:
            mch.clear("_reply")
            return
        extra = {}
        for pid, cnt in mch.store.get("_reply", ()):
            extra[pid] = extra.get(pid, 0) + cnt
        mch.clear("_reply")
        local = np.array([r[1 + d:] for r in mch.store.get("_pts", ())], dtype=float)
        counts = _ball_counts(local, np.array([r[1 + d:] for r in recs], dtype=float), eps2)
        for rec, cnt in zip(recs, counts):
            total = int(cnt) + extra.get(rec[0], 0)
            mch.section("_core").append((rec[0], int(total >= params.min_pts)))
    cluster.local(finish)
    return {pid: bool(flag) for pid, flag in cluster.gather("_core")}


def primitive_clusters(points: np.ndarray, core: dict, params: DbscanParams,
                       config: ClusterConfig):
    """Cluster the core points through the corner graph.

    Core points snap to the corners of a grid with side rho*eps/(4 sqrt(d));
    corners are adjacent when at most (1 + rho/2) eps apart.  The side is
    half the usual statement because a point can sit a full cell diagonal
    from its corner: with side rho*eps/(4 sqrt(d)) the per-pair snap error
    is rho*eps/2, so eps-close cores always share a corner edge and any
    corner edge links cores at most (1 + rho) eps apart.  Cluster ids are
    the smallest member point id.  Returns ({core id: cluster id}, cc result).
    """
    core_ids = sorted(pid for pid, flag in core.items() if flag)
    if not core_ids:
        return {}, None
    d = points.shape[1]
    side = params.rho * params.eps / (4 * math.sqrt(d))
    idx = np.floor(points[core_ids] / side).astype(np.int64)
    by_cell = {}
    for pid, cell in zip(core_ids, map(tuple, idx)):
        by_cell.setdefault(cell, []).append(pid)
    corners = sorted(by_cell)
    ids = np.array([min(by_cell[c]) for c in corners], dtype=np.int64)
    coords = np.array(corners, dtype=np.int64)
    thr = (1 + params.rho / 2) * params.eps / side
    graph = ImplicitGridGraph(ids=ids, coords=coords, rule=EuclidThresholdRule(thr))
    sub = ClusterConfig(n_total=len(ids), s=config.s, m=config.m,
                        budget_factor=config.budget_factor,
                        rng_seed=config.rng_seed + 211)
    res = cc_grid(graph, sub, relaxed=True)
    labels = {}
    for cell, members in by_cell.items():
        lab = int(res.labels[min(members)])
        for pid in members:
            labels[pid] = lab
    return labels, res


def assign_noncore(cluster: Cluster, params: DbscanParams, d: int) -> dict:
    """Cluster lists for every point; the probe skeleton of core labeling.

    Core points carry their own id's label.  Each non-core point asks the
    machines of its own and neighbouring cells for the distinct cluster ids
    of core points within eps and unions the replies with its local view.
    Returns {point id: sorted tuple of cluster ids} ([] encodes noise).
    """
    eps2 = params.eps * params.eps

    def local_labels(mch, probes):
        recs = mch.store.get("_pts", ())
        lab = {pid: l for pid, l in mch.store.get("_clab", ())}
        cores = [(r, lab[r[0]]) for r in recs if r[0] in lab]
        if not cores or not len(probes):
            return [set() for _ in probes]
        pts = np.array([r[1 + d:] for r, _ in cores], dtype=float)
        diff = probes[:, None, :] - pts[None, :, :]
        ok = np.sum(diff * diff, axis=2) <= eps2
        return [{cores[j][1] for j in np.flatnonzero(row)} for row in ok]

    queues = {}
    for mch in cluster.machines:
        lab = {pid: l for pid, l in mch.store.get("_clab", ())}
        for rec, _, targets in _probe_targets(mch, d):
            if rec[0] in lab:
                continue
            for t in targets:
                queues.setdefault(mch.mid, {}).setdefault(t, []).append(
                    ("_nprobe", (rec[0], mch.mid) + rec[1 + d:]))
    exchange(cluster, queues)

    queues = {}
    for mch in cluster.machines:
        probes = mch.store.get("_nprobe", ())
        mch.clear("_nprobe")
        if not probes:
            continue
        found = local_labels(mch, np.array([p[2:] for p in probes], dtype=float))
        for (pid, src, *_), labs in zip(probes, found):
            if labs:
                queues.setdefault(mch.mid, {}).setdefault(src, []).append(
                    ("_nreply", (pid,) + tuple(sorted(labs))))
    exchange(cluster, queues)

    def finish(mch):
        lab = {pid: l for pid, l in mch.store.get("_clab", ())}
        got = {}
        for rec in mch.store.get("_nreply", ()):
            got.setdefault(rec[0], set()).update(rec[1:])
        mch.clear("_nreply")
        noncore = [r for r in mch.store.get("_pts", ()) if r[0] not in lab]
        if noncore:
            found = local_labels(mch, np.array([r[1 + d:] for r in noncore], dtype=float))
            for rec, labs in zip(noncore, found):
                got.setdefault(rec[0], set()).update(labs)
        for rec in mch.store.get("_pts", ()):
            pid = rec[0]
            ids = (lab[pid],) if pid in lab else tuple(sorted(got.get(pid, ())))
            mch.section("_out").append((pid,) + ids)
    cluster.local(finish)
    return {rec[0]: rec[1:] for rec in cluster.gather("_out")}


def approx_dbscan(points, params: DbscanParams, config: ClusterConfig) -> ClusterOutput:
    """rho-approximate DBSCAN of real-coordinate points.

    Core identification is exact; the primitive clustering satisfies the
    sandwich property; non-core points join every cluster owning a core
    point within eps of them (multiple ids possible, none means noise).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] < 2:
        raise ValueError("points must be an (n, d) array with d >= 2")
    n, d = points.shape
    if n == 0:
        raise ValueError("points must be non-empty")
    if config.m > config.s:
        raise ValueError("requires m <= s machines")

    cluster = Cluster(config)
    cluster.begin_phase("cells")
    assign_cells(cluster, points, params.eps)
    cluster.begin_phase("neighbor-locations")
    neighbor_locations(cluster, d)
    cluster.begin_phase("core-label")
    core = label_core_points(cluster, params, d)
    cluster.end_phase()

    labels, ccres = primitive_clusters(points, core, params, config)

    # hand the (pid, label) rows to the machines that store the points; the
    # connectivity run happens on its own cluster, so its output re-enters
    # like input data (block placement, traffic-free), then one exchange
    # routes every row to its owner with O(s) words per machine
    cluster.begin_phase("primitive")
    owner = {}
    for mch in cluster.machines:
        for rec in mch.store.get("_pts", ()):
            owner[rec[0]] = mch.mid
    cluster.load("_clab_in", [(pid, labels[pid]) for pid in sorted(labels)])
    queues = {}
    for mch in cluster.machines:
        for rec in mch.store.get("_clab_in", ()):
            queues.setdefault(mch.mid, {}).setdefault(
                owner[rec[0]], []).append(("_clab", rec))
        mch.clear("_clab_in")
    exchange(cluster, queues)

    cluster.begin_phase("assign-noncore")
    out = assign_noncore(cluster, params, d)
    cluster.end_phase()

    clusters = [sorted(out[i]) for i in range(n)]
    for i, cl in enumerate(clusters):
        if core[i]:
            assert len(cl) == 1, f"core point {i} has {len(cl)} cluster ids"

    rounds = cluster.round + (ccres.rounds if ccres else 0)
    violations = len(cluster.violations)
    phases = {name: cluster.phase_rounds(name) for name, _, _ in cluster.phase_log}
    stats = list(cluster.stats)
    if ccres is not None:
        violations += len(ccres.cluster.violations)
        phases["connectivity"] = ccres.rounds
        stats.extend(ccres.cluster.stats)
    return ClusterOutput(
        core=[core[i] for i in range(n)],
        clusters=clusters,
        n_clusters=len(set(labels.values())),
        rounds=rounds,
        violations=violations,
        phases=phases,
        params=params,
        cluster=cluster,
        stats=stats,
    )
