"""Topology and injection-statistics learners.

``algorithm1`` handles fully observed grids. ``algorithm2`` and ``algorithm3``
handle hidden nodes: they start from the spanning tree over observed nodes,
walk it from the deepest node upward, confirm true edges by the parent-child
relation and re-attach the remaining nodes through a hidden parent found with
the grandparent relation.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import DisconnectedCandidates, MissingPhaseData, UnobservedNode, UnresolvedNodes
from ..grid import CandidateEdgeSet, edge_key, root_tree
from ..moments import MomentTable
from .equations import (
    cluster_children,
    find_missing_parent_by_grandparent,
    parent_child_deviation,
    solve_hidden_stats,
    solve_node_stats,
)
from .model import LearnedModel, Thresholds
from .mst import count_components, kruskal_mst


def _weighted_pairs(table: MomentTable, candidates: CandidateEdgeSet | None):
    nodes = table.nodes
    if candidates is None:
        for i, a in enumerate(nodes):
            for b in nodes[i + 1:]:
                yield a, b, table.get(a, b)
        return
    present = set(nodes)
    for u, v, _ in candidates.edges:
        if u in present and v in present:
            yield u, v, table.get(u, v)


def observed_mst(table: MomentTable, candidates: CandidateEdgeSet | None = None) -> list[tuple[int, int]]:
    """Minimum spanning forest of the phi-weighted graph over the table's nodes.

    With ``candidates=None`` every node pair is a permissible edge.
    """
    return kruskal_mst(table.nodes, _weighted_pairs(table, candidates))


def algorithm1(
    table: MomentTable,
    candidates: CandidateEdgeSet | None = None,
    root: int = 0,
    recover_stats: bool = True,
) -> LearnedModel:
    """Learn the operational tree of a fully observed grid.

    Parameters
    ----------
    table
        Pairwise moments over every node (the root may be included with zero
        deviation).
    candidates
        Permissible lines with impedances. ``None`` allows every pair, which
        gives the observed-node spanning tree but no statistics recovery.
    root
        Reference node; used to orient the tree for statistics recovery.
    recover_stats
        When phase moments are present and ``candidates`` is given, solve every
        node's (var_p, var_q, cov_pq) from the leaves upward.

    Raises
    ------
    DisconnectedCandidates
        If the candidate lines do not connect the table's nodes.
    """
    edges = observed_mst(table, candidates)
    if count_components(table.nodes, edges) > 1:
        raise DisconnectedCandidates("candidate lines do not connect all measured nodes")
    model = LearnedModel(edges=edges)
    if recover_stats and table.has_phase and candidates is not None and root in table:
        adj: dict[int, list[int]] = defaultdict(list)
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        idx = root_tree(table.nodes, root, adj)
        totals: dict[int, np.ndarray] = {}
        for c in reversed(idx.order[1:]):
            g = idx.parent[c]
            below = sum((totals[k] for k in idx.children[c]), np.zeros(3))
            s = solve_node_stats(candidates.get(c, g), table.triple(c, g), below, node=c, allow_negative=True)
            totals[c] = below + s
            model.node_stats[c] = tuple(float(v) for v in s)
    return model


class _HiddenNodeLearner:
    """Shared loop of the two hidden-node learners."""

    def __init__(
        self,
        table: MomentTable,
        candidates: CandidateEdgeSet,
        known_stats: Mapping[int, Sequence[float]],
        hidden: Iterable[int],
        thresholds: Thresholds,
        root: int,
        clustering: bool,
    ):
        if not table.has_phase:
            raise MissingPhaseData("hidden-node learning needs phase moments to solve hidden statistics")
        self.table = table
        self.candidates = candidates
        self.th = thresholds
        self.root = root
        self.clustering = clustering
        self.stats = {a: np.asarray(known_stats[a], dtype=float) for a in table.nodes if a != root}
        self.stats[root] = np.zeros(3)
        self.hidden_left = set(hidden)
        self.hidden_stats: dict[int, tuple[float, float, float]] = {}
        self.children: dict[int, set[int]] = defaultdict(set)
        self.edges: set[tuple[int, int]] = set()
        self.unresolved: list[frozenset[int]] = []
        self._totals: dict[int, np.ndarray] = {}

    def total(self, b: int) -> np.ndarray:
        # children of b are final once b's own subtree is verified, so cache is safe
        if b not in self._totals:
            t = self.stats[b].copy()
            for c in self.children[b]:
                t += self.total(c)
            self._totals[b] = t
        return self._totals[b]

    def attach(self, parent: int, child: int):
        self.children[parent].add(child)
        self.edges.add(edge_key(parent, child))
        self._totals.pop(parent, None)

    def solved_below(self, b: int) -> bool:
        """True when b's subtree holds a hidden node whose statistics were solved, not given."""
        return b in self.hidden_stats or any(self.solved_below(c) for c in self.children[b])

    def verify(self, a: int, b: int) -> bool:
        z = self.candidates.get(a, b)
        if z is None:
            return False
        # all three moment families reject look-alike candidate lines, but solved hidden
        # statistics are too noisy for the phase rows; fall back to phi alone below them
        observed = self.table.get(a, b) if self.solved_below(b) else self.table.triple(a, b)
        return parent_child_deviation(observed, z, self.total(b)) <= self.th.tau1

    def find_parent(self, g: int, group: Iterable[int]) -> int | None:
        group = sorted(group)
        if len(group) < 2 or not self.hidden_left:
            return None
        totals = {c: self.total(c) for c in group}
        match = find_missing_parent_by_grandparent(
            g, group, self.candidates, self.table, totals, self.hidden_left, self.th.tau2
        )
        return None if match is None else match.parent

    def place_hidden(self, b: int, g: int, group: Iterable[int]):
        group = sorted(group)
        totals = {c: self.total(c) for c in group}
        s = solve_hidden_stats(b, g, group, self.table, totals, self.candidates, allow_negative=True)
        self.stats[b] = s
        self.hidden_stats[b] = tuple(float(v) for v in s)
        self.hidden_left.discard(b)
        for c in group:
            self.attach(b, c)
        self.attach(g, b)

    def resolve_pool(self, a: int, units: list[frozenset[int]]) -> set[int]:
        """Attach what can be attached below ``a``; return the nodes deferred as siblings of ``a``."""
        if not units:
            return set()
        if not self.clustering:
            pool = set().union(*units)
            b = self.find_parent(a, pool)
            if b is None:
                return pool
            self.place_hidden(b, a, pool)
            return set()
        split = cluster_children(a, units, self.table, self.th.tau3)
        siblings = set(split.siblings)
        for grp in split.groups:
            b = self.find_parent(a, grp)
            if b is None:
                siblings |= grp
            else:
                self.place_hidden(b, a, grp)
        return siblings

    def run(self) -> LearnedModel:
        nodes = self.table.nodes
        mst = observed_mst(self.table)
        adj: dict[int, list[int]] = defaultdict(list)
        for u, v in mst:
            adj[u].append(v)
            adj[v].append(u)
        idx = root_tree(nodes, self.root, adj)
        wparent = dict(idx.parent)
        wchildren = {a: set(c) for a, c in idx.children.items()}
        order = sorted(nodes, key=lambda a: (-idx.depth[a], a))
        groups: dict[int, list[frozenset[int]]] = defaultdict(list)

        for a in order:
            units = []
            for b in sorted(wchildren[a]):
                if self.verify(a, b):
                    self.attach(a, b)
                else:
                    units.append(frozenset([b]))
            units.extend(groups.pop(a, []))
            siblings = self.resolve_pool(a, units)
            if not siblings:
                continue
            if a == self.root:
                self.unresolved.append(frozenset(siblings))
                continue
            p = wparent[a]
            wchildren[p].discard(a)
            groups[p].append(frozenset(siblings | {a}))

        return LearnedModel(
            edges=sorted(self.edges),
            hidden_stats=dict(self.hidden_stats),
            unresolved=list(self.unresolved),
        )


def _learn_hidden(table, candidates, hidden_count, thresholds, known_stats, hidden, root, strict, clustering):
    thresholds = thresholds or Thresholds()
    if hidden is None:
        hidden = candidates.nodes() - set(table.nodes)
    hidden = set(hidden)
    missing = [a for a in table.nodes if a != root and a not in known_stats]
    if missing:
        raise UnobservedNode(f"no injection statistics for observed nodes {missing[:5]}")
    learner = _HiddenNodeLearner(table, candidates, known_stats, hidden, thresholds, root, clustering)
    model = learner.run()
    if strict and (learner.hidden_left or learner.unresolved):
        raise UnresolvedNodes(model, sorted(learner.hidden_left))
    return model


def algorithm2(
    table: MomentTable,
    candidates: CandidateEdgeSet,
    hidden_count: int | None = None,
    thresholds: Thresholds | None = None,
    *,
    known_stats: Mapping[int, Sequence[float]],
    hidden: Iterable[int] | None = None,
    root: int = 0,
    strict: bool = True,
) -> LearnedModel:
    """Learn a grid whose hidden nodes are more than two hops apart.

    Parameters
    ----------
    table
        Moments (magnitude and phase) over observed nodes, root included.
    candidates
        Permissible lines with impedances, covering hidden nodes too.
    hidden_count
        Advisory count of hidden nodes; the loop stops when no node is left
        to explore either way.
    thresholds
        Relative tolerances; defaults to ``Thresholds()``.
    known_stats
        (var_p, var_q, cov_pq) for every observed non-root node.
    hidden
        Hidden node ids. Defaults to candidate endpoints absent from ``table``.
    strict
        Raise ``UnresolvedNodes`` (carrying the partial model) when some
        hidden node or deferred group is left over; otherwise return the
        partial model with ``unresolved`` filled.
    """
    return _learn_hidden(table, candidates, hidden_count, thresholds, known_stats, hidden, root, strict, False)


def algorithm3(
    table: MomentTable,
    candidates: CandidateEdgeSet,
    hidden_count: int | None = None,
    thresholds: Thresholds | None = None,
    *,
    known_stats: Mapping[int, Sequence[float]],
    hidden: Iterable[int] | None = None,
    root: int = 0,
    strict: bool = True,
) -> LearnedModel:
    """Learn a grid whose hidden nodes are pairwise non-adjacent.

    Same interface as :func:`algorithm2`. Unconfirmed children of a node are
    first split into a sibling set and grandchild groups by triplet signs,
    so one node can acquire several hidden children.
    """
    return _learn_hidden(table, candidates, hidden_count, thresholds, known_stats, hidden, root, strict, True)
