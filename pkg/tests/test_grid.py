import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsleuth.errors import NotATree, RootDegreeViolation
from gridsleuth.grid import (
    CandidateEdgeSet,
    Impedance,
    build_tree,
    hinv_entry,
    reduced_laplacian_inverse,
)
from gridsleuth.simulator import random_tree


class TestBuildTree:
    def test_star_off_root(self):
        t = build_tree(4, [(0, 1, 1, 1), (1, 2, 1, 1), (1, 3, 1, 1)])
        assert t.index.depth[2] == 2
        assert t.index.parent[3] == 1
        assert t.index.descendants[1] == {1, 2, 3}

    def test_root_degree_two(self):
        with pytest.raises(RootDegreeViolation):
            build_tree(3, [(0, 1, 1, 1), (0, 2, 1, 1)])

    def test_cycle(self):
        with pytest.raises(NotATree):
            build_tree(3, [(0, 1, 1, 1), (1, 2, 1, 1), (0, 2, 1, 1)])

    def test_cycle_with_tree_edge_count(self):
        # 4 nodes, 3 edges, but 1-2-3 closes a loop and 0 hangs alone
        with pytest.raises(NotATree):
            build_tree(4, [(1, 2, 1, 1), (2, 3, 1, 1), (1, 3, 1, 1)])

    def test_duplicate_and_self_loop(self):
        with pytest.raises(NotATree):
            build_tree(3, [(0, 1, 1, 1), (1, 0, 1, 1)])
        with pytest.raises(NotATree):
            build_tree(3, [(0, 1, 1, 1), (2, 2, 1, 1)])

    def test_nonpositive_impedance(self):
        with pytest.raises(ValueError):
            Impedance(0.0, 1.0)

    def test_hop_distance(self):
        t = build_tree(5, [(0, 1, 1, 1), (1, 2, 1, 1), (1, 3, 1, 1), (3, 4, 1, 1)])
        assert t.hop_distance(2, 4) == 3
        assert t.hop_distance(0, 4) == 3
        assert t.hop_distance(2, 2) == 0


class TestInverseLaplacian:
    def test_chain_unit_resistance(self):
        t = build_tree(3, [(0, 1, 1, 1), (1, 2, 1, 1)])
        np.testing.assert_allclose(reduced_laplacian_inverse(t, "r"), [[1, 1], [1, 2]])

    def test_single_edge(self):
        t = build_tree(2, [(0, 1, 2.0, 1.0)])
        np.testing.assert_allclose(reduced_laplacian_inverse(t, "r"), [[2.0]])
        np.testing.assert_allclose(reduced_laplacian_inverse(t, "x"), [[1.0]])

    @pytest.mark.parametrize("seed", range(5))
    def test_path_sum_matches_inversion(self, seed):
        t = random_tree(8, seed)
        for kind in ("r", "x"):
            paths = reduced_laplacian_inverse(t, kind, "paths")
            inv = reduced_laplacian_inverse(t, kind, "invert")
            np.testing.assert_allclose(paths, inv, atol=1e-10)
            for a in t.nonroot:
                for b in t.nonroot:
                    i, j = t.position[a], t.position[b]
                    assert abs(paths[i, j] - hinv_entry(t, a, b, kind)) < 1e-10

    def test_hinv_shared_root_edge(self):
        t = build_tree(4, [(0, 1, 1.0, 3.0), (1, 2, 2, 2), (1, 3, 5, 5)])
        assert hinv_entry(t, 2, 3, "r") == 1.0
        assert hinv_entry(t, 2, 3, "x") == 3.0

    def test_hinv_diagonal_is_path_total(self):
        t = build_tree(4, [(0, 1, 1.0, 1.0), (1, 2, 2.0, 1.0), (2, 3, 4.0, 1.0)])
        assert hinv_entry(t, 3, 3, "r") == 7.0

    def test_hinv_rejects_root(self):
        t = build_tree(2, [(0, 1, 1.0, 1.0)])
        with pytest.raises(ValueError):
            hinv_entry(t, 0, 1, "r")

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(3, 15))
    def test_parent_child_difference_identity(self, seed, n):
        t = random_tree(n, seed)
        idx = t.index
        for a in t.nonroot:
            b = idx.parent[a]
            if b == t.root:
                continue
            for kind in ("r", "x"):
                z = t.impedance(a, b).get(kind)
                for c in t.nonroot:
                    diff = hinv_entry(t, a, c, kind) - hinv_entry(t, b, c, kind)
                    expected = z if c in idx.descendants[a] else 0.0
                    assert abs(diff - expected) < 1e-12

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_relabel_permutes_consistently(self, seed):
        t = random_tree(9, seed)
        rng = np.random.default_rng(seed)
        perm = {0: 0, **{a: int(b) for a, b in zip(range(1, 9), 1 + rng.permutation(8))}}
        u = t.relabel(perm)
        H, G = reduced_laplacian_inverse(t, "r"), reduced_laplacian_inverse(u, "r")
        for a in t.nonroot:
            for b in t.nonroot:
                assert H[t.position[a], t.position[b]] == pytest.approx(G[u.position[perm[a]], u.position[perm[b]]])


class TestCandidates:
    def test_normalised_keys_and_union(self):
        c = CandidateEdgeSet.from_edges([(2, 1, 1.0, 2.0), (3, 0, 1.0, 1.0)])
        assert (1, 2) in c and (2, 1) in c
        assert c.get(2, 1) == Impedance(1.0, 2.0)
        assert c.nodes() == {0, 1, 2, 3}
        d = c.union(CandidateEdgeSet.from_edges([(1, 2, 9.0, 9.0), (1, 3, 1.0, 1.0)]))
        assert len(d) == 3 and d.get(1, 2).r == 1.0

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            CandidateEdgeSet.from_edges([(1, 1, 1.0, 1.0)])
