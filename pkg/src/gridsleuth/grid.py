"""Radial grid structure: trees, candidate edges and inverse reduced Laplacians."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal

import numpy as np

from .errors import NotATree, RootDegreeViolation, SingularMatrix

WeightKind = Literal["r", "x"]


@dataclass(frozen=True)
class Impedance:
    r: float
    x: float

    def __post_init__(self):
        if not (self.r > 0 and self.x > 0):
            raise ValueError(f"impedance needs r > 0 and x > 0, got r={self.r}, x={self.x}")

    def get(self, kind: WeightKind) -> float:
        return self.r if kind == "r" else self.x


def edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class TreeIndex:
    """Rooted view of a tree.

    ``descendants[a]`` contains ``a`` itself; ``path_to_root[a]`` lists the
    edges from ``a`` up to the root, nearest edge first.
    """

    parent: dict[int, int]
    depth: dict[int, int]
    children: dict[int, tuple[int, ...]]
    descendants: dict[int, frozenset[int]]
    path_to_root: dict[int, tuple[tuple[int, int], ...]]
    order: tuple[int, ...]  # breadth-first from the root


def root_tree(nodes: Iterable[int], root: int, adjacency: dict[int, list[int]]) -> TreeIndex:
    nodes = list(nodes)
    parent = {root: root}
    depth = {root: 0}
    children: dict[int, list[int]] = {n: [] for n in nodes}
    order = [root]
    i = 0
    while i < len(order):
        a = order[i]
        i += 1
        for b in sorted(adjacency.get(a, ())):
            if b in parent:
                continue
            parent[b] = a
            depth[b] = depth[a] + 1
            children[a].append(b)
            order.append(b)
    desc: dict[int, set[int]] = {}
    for a in reversed(order):
        s = {a}
        for c in children[a]:
            s |= desc[c]
        desc[a] = s
    paths: dict[int, tuple[tuple[int, int], ...]] = {root: ()}
    for a in order[1:]:
        paths[a] = (edge_key(a, parent[a]),) + paths[parent[a]]
    return TreeIndex(
        parent=parent,
        depth=depth,
        children={a: tuple(c) for a, c in children.items()},
        descendants={a: frozenset(s) for a, s in desc.items()},
        path_to_root=paths,
        order=tuple(order),
    )


@dataclass(frozen=True)
class GridTopology:
    """A validated radial tree with line impedances. Immutable."""

    num_nodes: int
    root: int
    edges: tuple[tuple[int, int, Impedance], ...]

    def __post_init__(self):
        n = self.num_nodes
        if n < 2:
            raise NotATree("a grid needs at least two nodes")
        if not 0 <= self.root < n:
            raise NotATree(f"root {self.root} outside 0..{n - 1}")
        if len(self.edges) != n - 1:
            raise NotATree(f"{len(self.edges)} edges for {n} nodes; a tree needs {n - 1}")
        seen = set()
        for u, v, _ in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise NotATree(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
            if u == v:
                raise NotATree(f"self-loop at node {u}")
            k = edge_key(u, v)
            if k in seen:
                raise NotATree(f"duplicate edge {k}")
            seen.add(k)
        if len(self.index.order) != n:
            raise NotATree("edges contain a cycle or leave nodes disconnected")
        if len(self.adjacency[self.root]) != 1:
            raise RootDegreeViolation(
                f"root {self.root} has degree {len(self.adjacency[self.root])}, expected 1"
            )

    @cached_property
    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {a: [] for a in range(self.num_nodes)}
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    @cached_property
    def index(self) -> TreeIndex:
        return root_tree(range(self.num_nodes), self.root, self.adjacency)

    @cached_property
    def impedances(self) -> dict[tuple[int, int], Impedance]:
        return {edge_key(u, v): z for u, v, z in self.edges}

    @cached_property
    def nonroot(self) -> tuple[int, ...]:
        """Non-root nodes in ascending order; the row order of all reduced matrices."""
        return tuple(a for a in range(self.num_nodes) if a != self.root)

    @cached_property
    def position(self) -> dict[int, int]:
        return {a: i for i, a in enumerate(self.nonroot)}

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.impedances)

    def degree(self, a: int) -> int:
        return len(self.adjacency[a])

    def impedance(self, u: int, v: int) -> Impedance:
        return self.impedances[edge_key(u, v)]

    def hop_distance(self, a: int, b: int) -> int:
        idx = self.index
        pa, pb = set(idx.path_to_root[a]), set(idx.path_to_root[b])
        return len(pa ^ pb)

    def relabel(self, perm: dict[int, int]) -> GridTopology:
        return GridTopology(
            self.num_nodes,
            perm[self.root],
            tuple((perm[u], perm[v], z) for u, v, z in self.edges),
        )


def build_tree(num_nodes: int, edges: Iterable, root: int = 0) -> GridTopology:
    """Validate ``edges`` as a spanning tree rooted at ``root``.

    Each edge is ``(u, v, Impedance)`` or ``(u, v, r, x)``.
    """
    norm = []
    for e in edges:
        if len(e) == 3:
            u, v, z = e
            if not isinstance(z, Impedance):
                z = Impedance(*z)
        else:
            u, v, r, x = e
            z = Impedance(float(r), float(x))
        norm.append((int(u), int(v), z))
    return GridTopology(int(num_nodes), int(root), tuple(norm))


@dataclass(frozen=True)
class CandidateEdgeSet:
    """Permissible lines with known impedances, keyed by unordered node pair."""

    impedances: dict[tuple[int, int], Impedance] = field(default_factory=dict)

    def __post_init__(self):
        for u, v in self.impedances:
            if u == v:
                raise ValueError(f"self-loop candidate at node {u}")
            if u > v:
                raise ValueError(f"candidate key ({u}, {v}) is not normalised")

    @classmethod
    def from_edges(cls, edges: Iterable) -> CandidateEdgeSet:
        imp: dict[tuple[int, int], Impedance] = {}
        for e in edges:
            if len(e) == 3:
                u, v, z = e
                z = z if isinstance(z, Impedance) else Impedance(*z)
            else:
                u, v, r, x = e
                z = Impedance(float(r), float(x))
            if u == v:
                raise ValueError(f"self-loop candidate at node {u}")
            imp.setdefault(edge_key(int(u), int(v)), z)
        return cls(imp)

    @classmethod
    def from_topology(cls, topology: GridTopology) -> CandidateEdgeSet:
        return cls(dict(topology.impedances))

    def __contains__(self, pair) -> bool:
        return edge_key(*pair) in self.impedances

    def __len__(self) -> int:
        return len(self.impedances)

    def get(self, u: int, v: int) -> Impedance | None:
        return self.impedances.get(edge_key(u, v))

    @property
    def edges(self) -> list[tuple[int, int, Impedance]]:
        return [(u, v, z) for (u, v), z in sorted(self.impedances.items())]

    def nodes(self) -> set[int]:
        out = set()
        for u, v in self.impedances:
            out.update((u, v))
        return out

    def union(self, other: CandidateEdgeSet) -> CandidateEdgeSet:
        imp = dict(self.impedances)
        for k, z in other.impedances.items():
            imp.setdefault(k, z)
        return CandidateEdgeSet(imp)


def descendant_indicator(topology: GridTopology) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Matrix ``A`` with ``A[e, i] = 1`` when non-root node ``i`` lies below edge ``e``."""
    idx = topology.index
    pos = topology.position
    edges = []
    A = np.zeros((topology.num_nodes - 1, topology.num_nodes - 1))
    for k, c in enumerate(idx.order[1:]):
        edges.append(edge_key(c, idx.parent[c]))
        for d in idx.descendants[c]:
            A[k, pos[d]] = 1.0
    return A, edges


def reduced_laplacian(topology: GridTopology, kind: WeightKind) -> np.ndarray:
    """Weighted Laplacian with ``1/r`` (or ``1/x``) edge weights, root row/column removed."""
    n = topology.num_nodes
    L = np.zeros((n, n))
    for u, v, z in topology.edges:
        w = 1.0 / z.get(kind)
        L[u, u] += w
        L[v, v] += w
        L[u, v] -= w
        L[v, u] -= w
    keep = list(topology.nonroot)
    return L[np.ix_(keep, keep)]


def reduced_laplacian_inverse(
    topology: GridTopology, kind: WeightKind, method: Literal["paths", "invert"] = "paths"
) -> np.ndarray:
    """Inverse reduced weighted Laplacian over the non-root nodes.

    ``method="paths"`` sums edge weights over shared root paths, which is exact
    for trees. ``method="invert"`` builds the Laplacian and inverts it; it is kept
    as an independent cross-check.
    """
    if method == "paths":
        A, edges = descendant_indicator(topology)
        w = np.array([topology.impedances[e].get(kind) for e in edges])
        return A.T @ (w[:, None] * A)
    H = reduced_laplacian(topology, kind)
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMatrix(f"reduced Laplacian is singular (cond={cond:.3g})")
    inv = np.linalg.inv(H)
    return 0.5 * (inv + inv.T)


def hinv_entry(topology: GridTopology, a: int, b: int, kind: WeightKind) -> float:
    """Sum of line resistances (``kind="r"``) or reactances shared by the root paths of a and b."""
    idx = topology.index
    for node in (a, b):
        if node == topology.root or node not in idx.depth:
            raise ValueError(f"node {node} is not a non-root node")
    common = set(idx.path_to_root[a]) & set(idx.path_to_root[b])
    return float(sum(topology.impedances[e].get(kind) for e in common))
