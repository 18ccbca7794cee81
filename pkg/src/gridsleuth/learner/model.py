"""Learner inputs and outputs."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..grid import edge_key

Stats = tuple[float, float, float]  # (var_p, var_q, cov_pq)


@dataclass(frozen=True)
class Thresholds:
    """Relative tolerances of the hidden-node algorithms.

    ``tau1`` bounds the parent-child check, ``tau2`` the grandparent check and
    ``tau3`` (times the median |phi| among the tested triplets) the band in
    which a triplet statistic counts as zero.
    """

    tau1: float = 0.1
    tau2: float = 0.1
    tau3: float = 0.1

    def __post_init__(self):
        if min(self.tau1, self.tau2, self.tau3) < 0:
            raise ValueError("thresholds must be non-negative")

    def scaled(self, tau1=1.0, tau2=1.0, tau3=1.0) -> Thresholds:
        return Thresholds(self.tau1 * tau1, self.tau2 * tau2, self.tau3 * tau3)


@dataclass
class LearnedModel:
    """Estimated operational edges plus recovered injection statistics.

    ``hidden_stats`` holds raw solutions for recovered hidden nodes (negative
    variances are kept as solved). ``node_stats`` is filled by the
    full-observation learner when phase data allow recovering every node.
    """

    edges: list[tuple[int, int]] = field(default_factory=list)
    hidden_stats: dict[int, Stats] = field(default_factory=dict)
    unresolved: list[frozenset[int]] = field(default_factory=list)
    node_stats: dict[int, Stats] = field(default_factory=dict)

    def __post_init__(self):
        self.edges = sorted({edge_key(u, v) for u, v in self.edges})

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)


def clamp_stats(s: Stats) -> Stats:
    """Reporting helper: zero out negative variances left by finite samples."""
    vp, vq, c = s
    return (max(vp, 0.0), max(vq, 0.0), max(c, 0.0))
