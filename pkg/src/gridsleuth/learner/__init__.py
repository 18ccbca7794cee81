"""Topology and injection-statistics learners."""

from .algorithms import algorithm1, algorithm2, algorithm3, observed_mst
from .equations import (
    Clustering,
    check_parent_child,
    cluster_children,
    find_missing_parent_by_grandparent,
    moment_matrix,
    solve_hidden_stats,
    triplet_statistic,
)
from .model import LearnedModel, Thresholds, clamp_stats
from .mst import count_components, kruskal_mst

__all__ = [
    "Clustering",
    "LearnedModel",
    "Thresholds",
    "algorithm1",
    "algorithm2",
    "algorithm3",
    "check_parent_child",
    "clamp_stats",
    "cluster_children",
    "count_components",
    "find_missing_parent_by_grandparent",
    "kruskal_mst",
    "moment_matrix",
    "observed_mst",
    "solve_hidden_stats",
    "triplet_statistic",
]
