"""Grid graphs given implicitly: integer points plus an O(1)-word edge rule.

A (d, c)-grid graph has vertices at distinct points of N^d and edges only
between distinct vertices at L-infinity distance at most c, so every vertex
has fewer than (2c+1)^d neighbours.  The graph is never materialised
globally; machines evaluate the rule on locally held vertices, enumerating
candidate pairs by bucketing points into cells of side c and probing the
3^d surrounding cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EdgeRule:
    """Symmetric edge predicate with an L-infinity reach bound.

    Subclasses implement ``pairs(ca, cb, pa, pb)`` over row-aligned
    coordinate (and optional payload) arrays, returning (mask, weights).
    The scalar form derives from it.  ``reach`` is the c of the grid graph:
    the rule must answer "no edge" beyond it, and the implicit-graph wrapper
    clips and counts any violation instead of trusting the rule.
    """

    name = "abstract"
    reach = 1
    payload_width = 0

    def pairs(self, ca, cb, pa=None, pb=None):
        raise NotImplementedError

    def edge(self, u_coords, v_coords, u_payload=(), v_payload=()):
        ca = np.asarray([u_coords], dtype=float)
        cb = np.asarray([v_coords], dtype=float)
        pa = np.asarray([u_payload], dtype=float) if self.payload_width else None
        pb = np.asarray([v_payload], dtype=float) if self.payload_width else None
        mask, w = self.pairs(ca, cb, pa, pb)
        return float(w[0]) if mask[0] else None

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"rule": self.name, **self.params()}


class LinfThresholdRule(EdgeRule):
    """Edge iff 0 < L-infinity distance <= c; weight is Euclidean distance."""

    name = "linf_threshold"

    def __init__(self, c: int):
        if c < 1:
            raise ValueError("c must be >= 1")
        self.c = int(c)
        self.reach = int(c)

    def pairs(self, ca, cb, pa=None, pb=None):
        diff = np.asarray(ca, dtype=float) - np.asarray(cb, dtype=float)
        linf = np.max(np.abs(diff), axis=1)
        mask = (linf > 0) & (linf <= self.c)
        w = np.sqrt(np.sum(diff * diff, axis=1))
        return mask, w

    def params(self):
        return {"c": self.c}


class EuclidThresholdRule(EdgeRule):
    """Edge iff 0 < Euclidean distance <= threshold; weight is the distance."""

    name = "euclid_threshold"

    def __init__(self, threshold: float):
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        self.threshold = float(threshold)
        self.reach = max(1, int(np.floor(self.threshold)))

    def pairs(self, ca, cb, pa=None, pb=None):
        diff = np.asarray(ca, dtype=float) - np.asarray(cb, dtype=float)
        d2 = np.sum(diff * diff, axis=1)
        w = np.sqrt(d2)
        mask = (d2 > 0) & (d2 <= self.threshold * self.threshold)
        return mask, w

    def params(self):
        return {"threshold": self.threshold}


class ComponentDistanceRule(EdgeRule):
    """Distance-threshold rule over vertices carrying a component id payload.

    Edge iff Euclidean distance <= threshold (including coincident corner
    positions of distinct vertices); weight 0 when both endpoints already
    share a component id, otherwise the distance scaled by ``scale``.  This
    is the per-round rule of the approximate Euclidean MST: zero-weight
    edges glue fragments of one component so the spanning forest stays
    consistent, and they sort ahead of every real edge.
    """

    name = "component_distance"
    payload_width = 1

    def __init__(self, threshold: float, scale: float = 1.0):
        self.threshold = float(threshold)
        self.scale = float(scale)
        self.reach = max(1, int(np.floor(self.threshold)))

    def pairs(self, ca, cb, pa=None, pb=None):
        diff = np.asarray(ca, dtype=float) - np.asarray(cb, dtype=float)
        d2 = np.sum(diff * diff, axis=1)
        mask = d2 <= self.threshold * self.threshold
        w = np.sqrt(d2) * self.scale
        if pa is not None and pb is not None:
            same = np.asarray(pa)[:, 0] == np.asarray(pb)[:, 0]
            w = np.where(same, 0.0, w)
        return mask, w

    def params(self):
        return {"threshold": self.threshold, "scale": self.scale}


RULES = {
    LinfThresholdRule.name: LinfThresholdRule,
    EuclidThresholdRule.name: EuclidThresholdRule,
    ComponentDistanceRule.name: ComponentDistanceRule,
}


def rule_from_name(name: str, **params) -> EdgeRule:
    try:
        cls = RULES[name]
    except KeyError:
        raise ValueError(f"unknown edge rule {name!r}; known: {sorted(RULES)}") from None
    return cls(**params)


@dataclass
class ImplicitGridGraph:
    """Vertex set plus edge rule; edges are evaluated on demand.

    ids: (n,) int64 vertex ids, unique.
    coords: (n, d) int64 coordinates, distinct rows.
    payload: (n, k) int64 or None, carried alongside coordinates.
    """

    ids: np.ndarray
    coords: np.ndarray
    rule: EdgeRule
    payload: np.ndarray | None = None
    rule_errors: int = 0

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.coords = np.asarray(self.coords, dtype=np.int64)
        if self.coords.ndim != 2:
            raise ValueError("coords must be (n, d)")
        if len(self.ids) != len(self.coords):
            raise ValueError("ids and coords length mismatch")
        if self.payload is not None:
            self.payload = np.asarray(self.payload, dtype=np.int64)
            if len(self.payload) != len(self.coords):
                raise ValueError("payload length mismatch")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def c(self) -> int:
        return self.rule.reach

    def records(self) -> list:
        """Flat tuples (id, coords..., payload...) for machine stores."""
        out = []
        pay = self.payload
        for i in range(self.n):
            rec = (int(self.ids[i]),) + tuple(int(v) for v in self.coords[i])
            if pay is not None:
                rec = rec + tuple(int(v) for v in pay[i])
            out.append(rec)
        return out

    def record_width(self) -> int:
        k = self.payload.shape[1] if self.payload is not None else 0
        return 1 + self.d + k

    def evaluate_pairs(self, ia, ib):
        """Apply the rule to index arrays, clipping reach violations.

        Returns (mask, weights) where mask is False for self-pairs and for
        any pair the rule accepted beyond L-infinity reach c (those are
        counted in rule_errors: the graph contract wins over the rule).
        """
        ca, cb = self.coords[ia], self.coords[ib]
        pa = self.payload[ia] if self.payload is not None else None
        pb = self.payload[ib] if self.payload is not None else None
        mask, w = self.rule.pairs(ca, cb, pa, pb)
        mask = mask & (self.ids[ia] != self.ids[ib])
        linf = np.max(np.abs(ca - cb), axis=1)
        bad = mask & (linf > self.rule.reach)
        nbad = int(np.count_nonzero(bad))
        if nbad:
            self.rule_errors += nbad
            mask = mask & ~bad
        return mask, w


def mbr(coords) -> np.ndarray:
    """Minimum bounding rectangle: (2, d) array of per-dimension min, max."""
    coords = np.asarray(coords)
    if coords.size == 0:
        raise ValueError("mbr of empty point set")
    return np.stack([coords.min(axis=0), coords.max(axis=0)])


def lift_dimension(graph: ImplicitGridGraph) -> ImplicitGridGraph:
    """Embed a 2-D instance into 3-D by appending a constant 0 coordinate.

    Distances are unchanged, so the edge rule keeps its meaning and every
    3-D procedure applies unchanged.
    """
    if graph.d != 2:
        raise ValueError("lift_dimension expects a 2-D graph")
    coords = np.concatenate([graph.coords, np.zeros((graph.n, 1), dtype=np.int64)], axis=1)
    return ImplicitGridGraph(ids=graph.ids, coords=coords, rule=graph.rule, payload=graph.payload)


def candidate_pairs(coords, reach):
    """Neighbour-cell bucketing: candidate index pairs at L-inf <= reach.

    Cost O(n * 3^d) cell probes on cells of side ``reach``; each unordered
    pair appears exactly once.  This is the local materialisation step used
    inside machines, independent of the all-pairs oracle route.
    """
    coords = np.asarray(coords, dtype=np.int64)
    n, d = coords.shape
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    reach = max(1, int(reach))
    cells = coords // reach
    order = np.lexsort(cells.T[::-1])
    sorted_cells = cells[order]
    change = np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1, [n]])
    cell_index = {}
    for gi in range(len(starts) - 1):
        lo, hi = starts[gi], starts[gi + 1]
        cell_index[tuple(sorted_cells[lo])] = order[lo:hi]

    offsets = _half_space_offsets(d)
    ia_parts, ib_parts = [], []
    for key, members in cell_index.items():
        k = len(members)
        if k > 1:  # within-cell pairs, i < j
            grid_a, grid_b = np.triu_indices(k, 1)
            ia_parts.append(members[grid_a])
            ib_parts.append(members[grid_b])
        for off in offsets:
            other = cell_index.get(tuple(np.asarray(key) + off))
            if other is None:
                continue
            ia_parts.append(np.repeat(members, len(other)))
            ib_parts.append(np.tile(other, k))
    if not ia_parts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    ia = np.concatenate(ia_parts)
    ib = np.concatenate(ib_parts)
    keep = np.max(np.abs(coords[ia] - coords[ib]), axis=1) <= reach
    return ia[keep], ib[keep]


def _half_space_offsets(d):
    """Nonzero cell offsets in {-1,0,1}^d, one per unordered cell pair."""
    out = []
    for flat in range(3 ** d):
        off = []
        x = flat
        for _ in range(d):
            off.append(x % 3 - 1)
            x //= 3
        if any(off):
            for v in off:
                if v != 0:
                    if v > 0:
                        out.append(np.asarray(off, dtype=np.int64))
                    break
    return out
