"""Small shared helpers: union-find, canonical JSON, deterministic seeding."""

from __future__ import annotations

import json

import numpy as np


class UnionFind:
    """Disjoint sets over arbitrary hashable items."""

    def __init__(self, items=()):
        self.parent = {}
        self.rank = {}
        for it in items:
            self.add(it)

    def add(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.rank[x] = 0

    def find(self, x):
        p = self.parent
        root = x
        while p[root] != root:
            root = p[root]
        while p[x] != root:  # path compression
            p[x], x = root, p[x]
        return root

    def union(self, a, b):
        """Merge the sets of a and b; returns False if already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True

    def groups(self):
        out = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return out


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic per-(machine, round) random stream.

    SeedSequence spawn keys give independent streams without relying on
    Python's salted hash().
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**63 - 1), spawn_key=tuple(int(x) & (2**31 - 1) for x in stream))
    return np.random.default_rng(ss)


def edge_key(a, b, w):
    """Total order on weighted edges making the minimum spanning forest unique."""
    return (w, min(a, b), max(a, b))


def canonical_json(obj) -> str:
    """Stable JSON used for report files; reruns must be byte-identical."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def as_int_tuple(row) -> tuple:
    return tuple(int(v) for v in row)
