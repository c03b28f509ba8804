"""Simulated MPC algorithms on grid graphs.

The package is organised around a small BSP-style cluster simulator
(:mod:`gridmpc.mpc`) that accounts every word sent, received and stored per
machine per round.  On top of it sit the distributed algorithms: pseudo
separator construction for (d, c)-grid graphs, connected components and
minimum spanning forests, an approximate Euclidean MST and an approximate
DBSCAN.  Exact single-machine oracles live in :mod:`gridmpc.oracle`.
"""

from .mpc import Cluster, ClusterConfig, RoundStats, run_program
from .grid import ImplicitGridGraph, LinfThresholdRule, EuclidThresholdRule, lift_dimension, mbr
from .separator import PseudoSeparator, SlabDivider, compute_pseudo_separator, NoDivider
from .connectivity import cc_grid, msf_grid, SeparatorOverflow, MergeOverflow
from .emst import approx_emst, SpanningTreeResult
from .dbscan import approx_dbscan, DbscanParams, ClusterOutput
from .datasets import Dataset, generate

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ClusterConfig",
    "RoundStats",
    "run_program",
    "ImplicitGridGraph",
    "LinfThresholdRule",
    "EuclidThresholdRule",
    "lift_dimension",
    "mbr",
    "PseudoSeparator",
    "SlabDivider",
    "compute_pseudo_separator",
    "NoDivider",
    "cc_grid",
    "msf_grid",
    "SeparatorOverflow",
    "MergeOverflow",
    "approx_emst",
    "SpanningTreeResult",
    "approx_dbscan",
    "DbscanParams",
    "ClusterOutput",
    "Dataset",
    "generate",
    "__version__",
]
