"""Separation constants behind the sample-complexity guarantee of the full-observation learner."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateStatistics
from ..grid import GridTopology
from ..moments import InjectionStatistics, MomentTable


@dataclass(frozen=True)
class SeparationBounds:
    """Gap constants of a grid.

    ``k1`` is the smallest phi margin separating a true neighbour from any
    farther node; ``k2`` bounds the voltage-variance diagonal per unit of
    squared depth and size. ``C`` is the unspecified constant of the sample
    bound and stays a free parameter.
    """

    k1: float
    k2: float
    depth: int
    num_nodes: int
    C: float = 1.0

    @property
    def margin(self) -> float:
        """Largest per-entry phi error that cannot change the learned tree."""
        return self.k1 / 2

    def required_samples(self, eta: float) -> float:
        """C d^4 |V|^2 log(|V| / eta)."""
        if not 0 < eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        v = self.num_nodes
        return self.C * self.depth**4 * v**2 * math.log(v / eta)

    def omega_v_bound(self) -> float:
        """Upper bound d^2 |V| k2 on any diagonal entry of the voltage covariance."""
        return self.depth**2 * self.num_nodes * self.k2


def compute_bounds(topology: GridTopology, stats: InjectionStatistics, C: float = 1.0) -> SeparationBounds:
    """k1 = min(r_min^2, x_min^2) min_d s(d) and k2 = max(r_max^2, x_max^2) max_d s(d).

    Here s(d) = var_p + var_q + 2 cov_pq at non-root node d.

    Raises
    ------
    DegenerateStatistics
        If ``k1`` is zero, e.g. some node injects no variance.
    """
    rs = np.array([z.r for _, _, z in topology.edges])
    xs = np.array([z.x for _, _, z in topology.edges])
    nr = list(topology.nonroot)
    s = stats.var_p[nr] + stats.var_q[nr] + 2 * stats.cov_pq[nr]
    k1 = float(min(rs.min() ** 2, xs.min() ** 2) * s.min())
    k2 = float(max(rs.max() ** 2, xs.max() ** 2) * s.max())
    if k1 <= 0:
        raise DegenerateStatistics("k1 is zero: some node has no injection variance")
    depth = max(topology.index.depth.values())
    return SeparationBounds(k1, k2, depth, topology.num_nodes, C)


def phi_gaps(topology: GridTopology, table: MomentTable) -> np.ndarray:
    """For every ordered pair (a, b) at least two hops apart, max over interior path nodes c of phi_ab - phi_ac.

    Nodes missing from ``table`` are skipped, both as endpoints and as c.
    """
    idx = topology.index
    nodes = [a for a in table.nodes]
    out = []
    for a in nodes:
        for b in nodes:
            if a == b or topology.hop_distance(a, b) < 2:
                continue
            path = _path_nodes(idx, a, b)
            inner = [c for c in path[1:-1] if c in table]
            if not inner:
                continue
            phi_ab = table.get(a, b)
            out.append(max(phi_ab - table.get(a, c) for c in inner))
    return np.array(out)


def _path_nodes(idx, a: int, b: int) -> list[int]:
    up_a = [a]
    while idx.parent[up_a[-1]] != up_a[-1]:
        up_a.append(idx.parent[up_a[-1]])
    up_b = [b]
    while idx.parent[up_b[-1]] != up_b[-1]:
        up_b.append(idx.parent[up_b[-1]])
    common = set(up_a) & set(up_b)
    i = next(k for k, n in enumerate(up_a) if n in common)
    j = up_b.index(up_a[i])
    return up_a[: i + 1] + list(reversed(up_b[:j]))
