"""Kruskal's minimum spanning forest with deterministic tie-breaking."""

from __future__ import annotations

from typing import Iterable


class DisjointSet:
    def __init__(self, items: Iterable[int]):
        self.parent = {a: a for a in items}
        self.rank = dict.fromkeys(self.parent, 0)

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def kruskal_mst(nodes: Iterable[int], weighted_pairs: Iterable[tuple[int, int, float]]) -> list[tuple[int, int]]:
    """Minimum-weight spanning forest over ``nodes``.

    Equal weights are broken by the (min id, max id) pair, smallest first.
    Pairs touching nodes outside ``nodes`` are ignored. A disconnected input
    yields a forest with one tree per component.
    """
    ds = DisjointSet(nodes)
    keyed = []
    for u, v, w in weighted_pairs:
        if u == v or u not in ds.parent or v not in ds.parent:
            continue
        a, b = (u, v) if u < v else (v, u)
        keyed.append((w, a, b))
    keyed.sort()
    out = []
    target = len(ds.parent) - 1
    for _, a, b in keyed:
        if ds.union(a, b):
            out.append((a, b))
            if len(out) == target:
                break
    return out


def count_components(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> int:
    nodes = list(nodes)
    ds = DisjointSet(nodes)
    k = len(nodes)
    for a, b in edges:
        if ds.union(a, b):
            k -= 1
    return k
