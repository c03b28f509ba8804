"""Level by level trace of the approximate Euclidean MST construction.

Nine points, three natural clusters.  Each level connects everything within
the current reach, collapses the components to single representatives on a
coarser grid, and hands those to the next level; three levels suffice here.
"""

import math

import numpy as np

from gridmpc import ClusterConfig, approx_emst
from gridmpc.oracle import euclidean_mst, tree_path_max_batch

pts = np.array([(0, 0), (2, 0), (0, 3), (8, 0), (10, 1), (9, 3),
                (1, 13), (3, 15), (5, 14)], dtype=float)
rho = math.sqrt(2)

res = approx_emst(pts, rho=rho, config=ClusterConfig(n_total=9, s=16, m=2), c=4)

print(f"9 points, rho = sqrt(2), internal rho' = {rho / 2:.4f}")
print(f"{res.super_rounds} levels, {res.rounds} rounds total\n")
print(f"{'level':>5} {'reach':>7} {'points':>7} {'added':>6} {'rounds':>7}")
for lv in res.levels:
    print(f"{lv['level']:>5} {lv['reach']:>7} {lv['n_vertices']:>7} "
          f"{lv['added']:>6} {lv['rounds']:>7}")

print("\ntree edges (u, v, weight):")
for u, v, w in sorted(res.edges):
    print(f"  {u} - {v}  {w:.4f}")

exact = euclidean_mst(pts)
exact_w = sum(w for _, _, w in exact)
print(f"\nour weight  {res.total_weight:.4f}")
print(f"exact weight {exact_w:.4f}")
print(f"ratio {res.total_weight / exact_w:.4f} <= 1 + rho = {1 + rho:.4f}")

# the stronger per-edge guarantee: walk our tree between the endpoints of
# every exact edge and compare the heaviest edge on that path
bottleneck = tree_path_max_batch(res.edges, [(u, v) for u, v, _ in exact])
worst = max(b / w for (u, v, w), b in zip(exact, bottleneck))
print(f"worst path bottleneck ratio {worst:.4f} (bound {1 + rho:.4f})")
