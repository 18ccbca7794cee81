"""Moment relations between nodes of a radial grid and the checks built on them.

Every relation here rests on one fact: for two nodes ``u``, ``w`` joined by a
known path, each injecting node ``d`` contributes

    R^2 vp + X^2 vq + 2RX c          to phi_uw
    X^2 vp + R^2 vq - 2RX c          to phi^theta_uw
    RX (vp - vq) + (X^2 - R^2) c     to phi^vtheta_uw

where (R, X) is the resistance and reactance of the part of the u-w path that
lies on d's own root path. The map from (vp, vq, c) to the three contributions
is linear, so sums over node sets reduce to one 3x3 matrix times the summed
statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import (
    AmbiguousParent,
    IllConditionedSystem,
    InconsistentSigns,
    NegativeVarianceSolution,
    ZeroPredictedValue,
)
from ..grid import CandidateEdgeSet, Impedance
from ..moments import MomentTable
from .mst import DisjointSet

MAX_CONDITION = 1e8


def moment_matrix(r: float, x: float) -> np.ndarray:
    """Rows map (var_p, var_q, cov_pq) to (phi, phi_theta, phi_vtheta) contributions."""
    return np.array(
        [
            [r * r, x * x, 2 * r * x],
            [x * x, r * r, -2 * r * x],
            [r * x, -r * x, x * x - r * r],
        ]
    )


def stats_sum(stats: Iterable[Sequence[float]]) -> np.ndarray:
    total = np.zeros(3)
    for s in stats:
        total += np.asarray(s, dtype=float)
    return total


def predicted_parent_child(impedance: Impedance, subtree_total: np.ndarray) -> np.ndarray:
    """(phi, phi_theta, phi_vtheta) between a node and its parent.

    ``subtree_total`` is the summed statistics of the child and all its
    descendants.
    """
    return moment_matrix(impedance.r, impedance.x) @ subtree_total


def parent_child_deviation(observed, impedance: Impedance, subtree_total: np.ndarray) -> float:
    """Relative mismatch between observed and predicted parent-child moments.

    ``observed`` is phi alone or the (phi, phi_theta, phi_vtheta) triple. For a
    triple the largest component mismatch is taken relative to the mean of the
    predicted phi and phi_theta.
    """
    pred = predicted_parent_child(impedance, subtree_total)
    obs = np.atleast_1d(np.asarray(observed, dtype=float))
    scale = pred[0] if obs.size == 1 else 0.5 * (pred[0] + pred[1])
    if scale <= 0:
        raise ZeroPredictedValue("predicted parent-child phi is zero; descendants carry no variance")
    return float(np.max(np.abs(obs - pred[: obs.size]))) / scale


def check_parent_child(phi_ab: float, impedance: Impedance, descendant_stats, tau1: float) -> bool:
    """True when ``phi_ab`` matches the parent-child prediction within relative ``tau1``.

    ``descendant_stats`` is either an iterable of per-node (var_p, var_q,
    cov_pq) triples for the child's subtree or their 3-vector sum.
    """
    total = np.asarray(descendant_stats, dtype=float)
    if total.shape != (3,):
        total = stats_sum(descendant_stats)
    return parent_child_deviation(phi_ab, impedance, total) <= tau1


def grandchild_offsets(to_parent: Impedance, parent_to_grand: Impedance, subtree_total: np.ndarray) -> np.ndarray:
    """Extra moments a grandchild's own subtree adds on top of its parent's.

    For child ``c`` of ``b`` with ``b`` a child of ``g``, the moments of the
    pair (c, g) equal those of (b, g) plus this offset.
    """
    r1, x1 = to_parent.r, to_parent.x
    r2, x2 = parent_to_grand.r, parent_to_grand.x
    return (moment_matrix(r1 + r2, x1 + x2) - moment_matrix(r2, x2)) @ subtree_total


def grandparent_deviation(moments: np.ndarray, offsets: np.ndarray) -> float:
    """Largest pairwise mismatch of the grandparent difference relation.

    Row i of ``moments`` holds the moments between grandchild i and the
    putative grandparent, row i of ``offsets`` the matching offsets; columns
    are (phi[, phi_theta, phi_vtheta]). For each pair (i, j) the difference of
    moments must equal the difference of offsets. Mismatches are taken
    relative to the pair's offset scale (mean of its phi and phi_theta
    offsets, or the phi offsets alone without phase data).
    """
    moments = np.asarray(moments, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if moments.ndim == 1:
        moments, offsets = moments[:, None], offsets[:, None]
    resid = moments - offsets
    if offsets.shape[1] >= 2:
        scale = 0.5 * (offsets[:, 0] + offsets[:, 1])
    else:
        scale = offsets[:, 0]
    worst = 0.0
    k = len(resid)
    for i in range(k):
        for j in range(i + 1, k):
            denom = scale[i] + scale[j]
            if denom <= 0:
                return np.inf
            worst = max(worst, float(np.max(np.abs(resid[i] - resid[j]))) / denom)
    return worst


@dataclass(frozen=True)
class ParentMatch:
    parent: int
    deviation: float
    stats: np.ndarray | None = None


def _feasible(solution: np.ndarray, group_total: np.ndarray) -> bool:
    # the subtree below the line (hidden node plus group) must carry non-negative variance;
    # the hidden node's own share is too noisy to test at moderate sample sizes
    subtree = solution + group_total
    return subtree[0] >= 0 and subtree[1] >= 0


def find_missing_parent_by_grandparent(
    grandparent: int,
    group: Sequence[int],
    candidates: CandidateEdgeSet,
    table: MomentTable,
    subtree_totals: dict[int, np.ndarray],
    hidden: Iterable[int],
    tau2: float,
) -> ParentMatch | None:
    """Scan hidden nodes for the parent of ``group`` under ``grandparent``.

    A hidden node qualifies when the candidate set holds its lines to the
    grandparent and to every group member and the grandparent difference
    relation holds within ``tau2`` for every pair. With phase data the
    relation is checked on all three moment families and the implied subtree
    (hidden node plus group) must carry non-negative variances. More than one qualifying node raises ``AmbiguousParent``.
    """
    group = sorted(group)
    if len(group) < 2:
        return None
    phase = table.has_phase
    if phase:
        moments = np.array([table.triple(c, grandparent) for c in group])
    else:
        moments = np.array([[table.get(c, grandparent)] for c in group])
    group_total = sum((subtree_totals[c] for c in group), np.zeros(3))
    passing = []
    for b in sorted(hidden):
        up = candidates.get(b, grandparent)
        if up is None:
            continue
        downs = [candidates.get(c, b) for c in group]
        if any(z is None for z in downs):
            continue
        offs = np.array([grandchild_offsets(z, up, subtree_totals[c]) for z, c in zip(downs, group)])
        if not phase:
            offs = offs[:, :1]
        dev = grandparent_deviation(moments, offs)
        if dev > tau2:
            continue
        sol = None
        if phase:
            across = (moments - offs).mean(axis=0)
            try:
                sol = solve_node_stats(up, across, group_total, node=b, allow_negative=True)
            except IllConditionedSystem:
                continue
            if not _feasible(sol, group_total):
                continue
        passing.append(ParentMatch(b, dev, sol))
    if len(passing) > 1:
        raise AmbiguousParent(grandparent, group, [m.parent for m in passing])
    return passing[0] if passing else None


def sibling_parent_deviation(
    pair: tuple[int, int],
    impedances: tuple[Impedance, Impedance],
    table: MomentTable,
    subtree_totals: dict[int, np.ndarray],
) -> float:
    """Relative mismatch of the sibling relation phi_ac = own(a) + own(c) through a common parent."""
    a, c = pair
    pred = (
        predicted_parent_child(impedances[0], subtree_totals[a])[0]
        + predicted_parent_child(impedances[1], subtree_totals[c])[0]
    )
    if pred <= 0:
        raise ZeroPredictedValue("predicted sibling phi is zero")
    return abs(table.get(a, c) - pred) / pred


def solve_node_stats(impedance: Impedance, moments: np.ndarray, below: np.ndarray, node=None, allow_negative=False):
    """Solve one node's (var_p, var_q, cov_pq) from the moments across its upstream line.

    ``moments`` are (phi, phi_theta, phi_vtheta) across the line and
    ``below`` the summed statistics of the node's descendants (excluding the
    node).
    """
    M = moment_matrix(impedance.r, impedance.x)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedSystem(f"node {node}: moment system condition number {cond:.3g}")
    total = np.linalg.solve(M, np.asarray(moments, dtype=float))
    sol = total - below
    if not allow_negative:
        tol = 1e-9 * float(np.abs(total).max())  # round-off of the subtraction
        vp, vq, c = sol
        if min(vp, vq, c) < -tol or c * c > vp * vq + tol * tol + 1e-9 * abs(vp * vq):
            raise NegativeVarianceSolution(node, sol)
    return sol


def solve_hidden_stats(
    b: int,
    g: int,
    children: Sequence[int],
    table: MomentTable,
    subtree_totals: dict[int, np.ndarray],
    candidates: CandidateEdgeSet,
    allow_negative: bool = False,
) -> np.ndarray:
    """Injection statistics of hidden node ``b`` with parent ``g`` and observed ``children``.

    Each child c gives an estimate of the moments across line (b, g) by
    subtracting its own subtree's offset from the (c, g) moments; the
    estimates are averaged before the 3x3 solve.
    """
    up = candidates.get(b, g)
    if up is None:
        raise KeyError(f"no candidate line between {b} and {g}")
    across = np.zeros(3)
    below = np.zeros(3)
    for c in children:
        down = candidates.get(c, b)
        if down is None:
            raise KeyError(f"no candidate line between {c} and {b}")
        across += table.triple(c, g) - grandchild_offsets(down, up, subtree_totals[c])
        below += subtree_totals[c]
    across /= len(children)
    return solve_node_stats(up, across, below, node=b, allow_negative=allow_negative)


# ---------------------------------------------------------------------------
# Triplet signs
# ---------------------------------------------------------------------------


def triplet_statistic(k1: int, k2: int, a: int, table: MomentTable) -> float:
    """phi(k1, a) + phi(k2, a) - phi(k1, k2).

    Positive for two children of the same parent (both hanging below ``a``
    through one hidden child, or both siblings of ``a``), zero for children of
    two different hidden children of ``a``, negative for a grandchild of ``a``
    paired with a sibling of ``a``.
    """
    return table.get(k1, a) + table.get(k2, a) - table.get(k1, k2)


@dataclass(frozen=True)
class Clustering:
    """Split of a node's unconfirmed children.

    ``determined`` is False when the signs alone cannot tell which cluster (if
    any) holds the siblings; the caller then settles it by the parent search.
    """

    siblings: frozenset[int]
    groups: tuple[frozenset[int], ...]
    determined: bool


def cluster_children(a: int, units: Sequence[Iterable[int]], table: MomentTable, tau3: float) -> Clustering:
    """Partition suspect children of ``a`` into a sibling set and grandchild groups.

    ``units`` are sets already known to share a parent (singletons for plain
    suspects). Two units are compared by the mean triplet statistic over their
    member pairs, classified as +, 0 or - against ``tau3`` times the median
    |phi| seen in the tested triplets.
    """
    units = [frozenset(u) for u in units if u]
    if not units:
        return Clustering(frozenset(), (), True)
    if len(units) == 1:
        return Clustering(frozenset(), (units[0],), False)
    m = len(units)
    stat = np.zeros((m, m))
    phis = []
    for i in range(m):
        for j in range(i + 1, m):
            vals = []
            for k1 in units[i]:
                for k2 in units[j]:
                    vals.append(triplet_statistic(k1, k2, a, table))
                    phis.extend((table.get(k1, a), table.get(k2, a), table.get(k1, k2)))
            stat[i, j] = stat[j, i] = float(np.mean(vals))
    band = tau3 * float(np.median(np.abs(phis)))
    sign = np.where(stat > band, 1, np.where(stat < -band, -1, 0))

    ds = DisjointSet(range(m))
    for i in range(m):
        for j in range(i + 1, m):
            if sign[i, j] == 1:
                ds.union(i, j)
    members: dict[int, list[int]] = {}
    for i in range(m):
        members.setdefault(ds.find(i), []).append(i)
    comps = sorted(members.values(), key=lambda ix: min(min(units[i]) for i in ix))
    for ix in comps:
        for p in ix:
            for q in ix:
                if p < q and sign[p, q] != 1:
                    raise InconsistentSigns(
                        f"node {a}: units {sorted(units[p])} and {sorted(units[q])} chained as siblings "
                        f"but their triplet statistic is not positive"
                    )
    clusters = [frozenset().union(*(units[i] for i in ix)) for ix in comps]
    if len(clusters) == 1:
        return Clustering(frozenset(), (clusters[0],), False)

    k = len(comps)
    rel = np.zeros((k, k), dtype=int)
    for x in range(k):
        for y in range(x + 1, k):
            s = {int(sign[p, q]) for p in comps[x] for q in comps[y]}
            if len(s) != 1:
                raise InconsistentSigns(
                    f"node {a}: mixed triplet signs {sorted(s)} between "
                    f"{sorted(clusters[x])} and {sorted(clusters[y])}"
                )
            rel[x, y] = rel[y, x] = s.pop()
    if not np.any(rel == -1):
        return Clustering(frozenset(), tuple(clusters), True)
    if k == 2:
        return Clustering(frozenset(), tuple(clusters), False)
    sib = [x for x in range(k) if all(rel[x, y] == -1 for y in range(k) if y != x)]
    if len(sib) == 1:
        s = sib[0]
        rest = [y for y in range(k) if y != s]
        if all(rel[p, q] == 0 for p in rest for q in rest if p < q):
            return Clustering(clusters[s], tuple(clusters[y] for y in rest), True)
    raise InconsistentSigns(f"node {a}: triplet sign pattern fits no sibling/grandchild split")
