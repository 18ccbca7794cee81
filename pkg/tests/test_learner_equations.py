import math

import numpy as np
import pytest

from gridsleuth.errors import AmbiguousParent, InconsistentSigns, NegativeVarianceSolution, ZeroPredictedValue
from gridsleuth.grid import CandidateEdgeSet, Impedance, build_tree
from gridsleuth.learner import (
    check_parent_child,
    cluster_children,
    count_components,
    find_missing_parent_by_grandparent,
    kruskal_mst,
    moment_matrix,
    solve_hidden_stats,
    triplet_statistic,
)
from gridsleuth.learner.equations import (
    grandparent_deviation,
    parent_child_deviation,
    predicted_parent_child,
    sibling_parent_deviation,
    solve_node_stats,
)
from gridsleuth.moments import InjectionStatistics, analytic_phi_table
from gridsleuth.simulator import random_statistics


def subtree_totals(topo, stats):
    idx = topo.index
    return {a: sum(np.array(stats.omega(d)) for d in idx.descendants[a]) for a in topo.nonroot}


class TestKruskal:
    def test_triangle(self):
        assert kruskal_mst([0, 1, 2], [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]) == [(0, 1), (1, 2)]

    def test_ties_pick_smallest_pairs(self):
        w = [(2, 3, 1.0), (0, 3, 1.0), (1, 2, 1.0), (0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0)]
        assert kruskal_mst(range(4), w) == [(0, 1), (0, 2), (0, 3)]

    def test_forest_on_disconnected_input(self):
        edges = kruskal_mst(range(4), [(0, 1, 1.0), (2, 3, 1.0)])
        assert count_components(range(4), edges) == 2

    def test_ignores_foreign_nodes(self):
        assert kruskal_mst([0, 1], [(0, 5, 0.1), (0, 1, 1.0)]) == [(0, 1)]


class TestParentChild:
    def test_closed_form_holds(self, chain3):
        topo, stats = chain3
        tab = analytic_phi_table(topo, stats)
        z = Impedance(2.0, 1.0)
        assert tab.get(1, 2) == pytest.approx(5.0)
        assert check_parent_child(tab.get(1, 2), z, [stats.omega(2)], 0.1)

    def test_doubled_impedance_fails(self, chain3):
        topo, stats = chain3
        phi = analytic_phi_table(topo, stats).get(1, 2)
        z2 = Impedance(4.0, 2.0)
        pred = predicted_parent_child(z2, np.array(stats.omega(2)))[0]
        # prediction scales with impedance squared: 3.0 relative to the observed value,
        # 0.75 relative to the prediction (the normalisation the check uses)
        assert (pred - phi) / phi == pytest.approx(3.0)
        assert parent_child_deviation(phi, z2, np.array(stats.omega(2))) == pytest.approx(0.75)
        assert not check_parent_child(phi, z2, [stats.omega(2)], 0.5)

    def test_infinite_tolerance(self, chain3):
        _, stats = chain3
        assert check_parent_child(123.0, Impedance(4.0, 2.0), [stats.omega(2)], math.inf)

    def test_triple_form(self, three_leaf):
        topo, stats = three_leaf
        tab = analytic_phi_table(topo, stats)
        dev = parent_child_deviation(tab.triple(3, 1), topo.impedance(1, 3), np.array(stats.omega(3)))
        assert dev < 1e-12

    def test_zero_prediction(self):
        with pytest.raises(ZeroPredictedValue):
            parent_child_deviation(1.0, Impedance(1.0, 1.0), np.zeros(3))


class TestMomentMatrix:
    @pytest.mark.parametrize("r", [0.3, 1.0, 2.5])
    def test_equal_r_x_determinant(self, r):
        assert np.linalg.det(moment_matrix(r, r)) == pytest.approx(-8 * r**6)

    def test_general_determinant_nonzero(self):
        rng = np.random.default_rng(0)
        for r, x in rng.uniform(0.1, 2.0, (50, 2)):
            assert abs(np.linalg.det(moment_matrix(r, x))) > 1e-12


def hidden_parent_case():
    """0 - g(1) - b(2) - {3, 4}, 3 - 5; b is hidden."""
    topo = build_tree(6, [(0, 1, 1.0, 0.8), (1, 2, 0.7, 1.1), (2, 3, 1.2, 0.9), (2, 4, 0.6, 1.3), (3, 5, 1.0, 1.0)])
    stats = random_statistics(6, 1.0, 17)
    cand = CandidateEdgeSet.from_topology(topo).union(
        CandidateEdgeSet.from_edges([(1, 3, 1.4, 1.4), (1, 4, 0.9, 1.0), (0, 2, 1.0, 1.0)])
    )
    return topo, stats, cand


class TestGrandparent:
    def test_finds_hidden_parent(self):
        topo, stats, cand = hidden_parent_case()
        tab = analytic_phi_table(topo, stats, [0, 1, 3, 4, 5])
        tot = subtree_totals(topo, stats)
        m = find_missing_parent_by_grandparent(1, [3, 4], cand, tab, tot, {2}, 0.1)
        assert m.parent == 2 and m.deviation < 1e-9
        np.testing.assert_allclose(m.stats, stats.omega(2), rtol=1e-9)

    def test_phi_only_table(self):
        topo, stats, cand = hidden_parent_case()
        full = analytic_phi_table(topo, stats, [0, 1, 3, 4, 5])
        tab = type(full)(full.nodes, full.phi)
        m = find_missing_parent_by_grandparent(1, [3, 4], cand, tab, subtree_totals(topo, stats), {2}, 0.1)
        assert m.parent == 2 and m.stats is None

    def test_absent_candidate(self):
        topo, stats, cand = hidden_parent_case()
        tab = analytic_phi_table(topo, stats, [0, 1, 3, 4, 5])
        without = CandidateEdgeSet({k: z for k, z in cand.impedances.items() if 2 not in k})
        assert find_missing_parent_by_grandparent(1, [3, 4], without, tab, subtree_totals(topo, stats), {2}, 0.1) is None

    def test_perturbed_impedance_fails(self):
        topo, stats, cand = hidden_parent_case()
        tab = analytic_phi_table(topo, stats, [0, 1, 3, 4, 5])
        imp = dict(cand.impedances)
        z = imp[(2, 3)]
        imp[(2, 3)] = Impedance(1.5 * z.r, 1.5 * z.x)
        tot = subtree_totals(topo, stats)
        assert find_missing_parent_by_grandparent(1, [3, 4], CandidateEdgeSet(imp), tab, tot, {2}, 0.1) is None

    def test_needs_two_members(self):
        topo, stats, cand = hidden_parent_case()
        tab = analytic_phi_table(topo, stats, [0, 1, 3, 4, 5])
        assert find_missing_parent_by_grandparent(1, [3], cand, tab, subtree_totals(topo, stats), {2}, 0.1) is None

    def test_ambiguous(self):
        topo, stats, cand = hidden_parent_case()
        tab = analytic_phi_table(topo, stats, [0, 1, 3, 4, 5])
        # a twin of node 2 with identical lines passes the same checks
        imp = dict(cand.impedances)
        imp[(1, 6)], imp[(3, 6)], imp[(4, 6)] = imp[(1, 2)], imp[(2, 3)], imp[(2, 4)]
        with pytest.raises(AmbiguousParent):
            find_missing_parent_by_grandparent(1, [3, 4], CandidateEdgeSet(imp), tab, subtree_totals(topo, stats), {2, 6}, 0.1)

    def test_deviation_is_zero_on_exact_offsets(self):
        moments = np.array([[3.0, 2.0, 0.5], [4.0, 3.0, 0.1]])
        offsets = np.array([[1.0, 1.0, 0.2], [2.0, 2.0, -0.2]])
        assert grandparent_deviation(moments, offsets) == pytest.approx(0.0, abs=1e-15)
        assert grandparent_deviation(moments[:, 0], offsets[:, 0]) == pytest.approx(0.0, abs=1e-15)


class TestSolve:
    def test_five_node_unit_case(self):
        # 0 - g(1) - b(2) - {a(3), c(4)}, unit impedances and variances
        topo = build_tree(5, [(0, 1, 1, 1), (1, 2, 1, 1), (2, 3, 1, 1), (2, 4, 1, 1)])
        stats = InjectionStatistics.from_variances([0, 1, 1, 1, 1], [0, 1, 1, 1, 1])
        tab = analytic_phi_table(topo, stats, [0, 1, 3, 4])
        sol = solve_hidden_stats(2, 1, [3, 4], tab, subtree_totals(topo, stats), CandidateEdgeSet.from_topology(topo))
        np.testing.assert_allclose(sol, [1, 1, 0], atol=1e-8)

    def test_zero_variance_hidden(self):
        topo = build_tree(5, [(0, 1, 1, 2), (1, 2, 2, 1), (2, 3, 1, 1), (2, 4, 1, 3)])
        stats = InjectionStatistics.from_variances([0, 1, 0, 2, 1], [0, 1, 0, 1, 2], [0, 0.5, 0, 0.3, 0.2])
        tab = analytic_phi_table(topo, stats, [0, 1, 3, 4])
        sol = solve_hidden_stats(2, 1, [3, 4], tab, subtree_totals(topo, stats), CandidateEdgeSet.from_topology(topo))
        np.testing.assert_allclose(sol, 0, atol=1e-12)

    def test_negative_solution_flagged(self):
        with pytest.raises(NegativeVarianceSolution):
            solve_node_stats(Impedance(1, 1), np.zeros(3), np.ones(3))
        sol = solve_node_stats(Impedance(1, 1), np.zeros(3), np.ones(3), allow_negative=True)
        np.testing.assert_allclose(sol, -1)

    def test_sibling_relation(self, three_leaf):
        topo, stats = three_leaf
        tab = analytic_phi_table(topo, stats)
        tot = subtree_totals(topo, stats)
        dev = sibling_parent_deviation((2, 3), (topo.impedance(1, 2), topo.impedance(1, 3)), tab, tot)
        assert dev < 1e-12


def triplet_case():
    """p(1) under the root; a(2), s(3), s(4) children of p; hidden b1(5), b2(6) under a."""
    edges = [(0, 1), (1, 2), (1, 3), (1, 4), (2, 5), (2, 6), (5, 7), (5, 8), (6, 9), (6, 10)]
    rng = np.random.default_rng(4)
    topo = build_tree(11, [(u, v, *rng.uniform(0.5, 1.5, 2)) for u, v in edges])
    return topo, analytic_phi_table(topo, random_statistics(11, 1.0, 4))


class TestTriplets:
    def test_same_hidden_parent_positive(self):
        _, tab = triplet_case()
        assert triplet_statistic(7, 8, 2, tab) > 0
        assert triplet_statistic(3, 4, 2, tab) > 0

    def test_different_hidden_children_zero(self):
        _, tab = triplet_case()
        assert abs(triplet_statistic(7, 9, 2, tab)) < 1e-12

    def test_grandchild_and_sibling_negative(self):
        _, tab = triplet_case()
        assert triplet_statistic(7, 3, 2, tab) < 0

    def test_cluster_split(self):
        _, tab = triplet_case()
        split = cluster_children(2, [{3}, {4}, {7}, {8}, {9}, {10}], tab, 0.1)
        assert split.determined
        assert split.siblings == {3, 4}
        assert set(split.groups) == {frozenset({7, 8}), frozenset({9, 10})}

    def test_single_unit(self):
        _, tab = triplet_case()
        split = cluster_children(2, [{7}], tab, 0.1)
        assert split.groups == (frozenset({7}),) and not split.determined

    def test_grandchildren_only(self):
        _, tab = triplet_case()
        split = cluster_children(2, [{7, 8}, {9}, {10}], tab, 0.1)
        assert split.siblings == frozenset() and split.determined
        assert set(split.groups) == {frozenset({7, 8}), frozenset({9, 10})}

    def test_zero_band_on_perturbed_moments(self):
        topo, tab = triplet_case()
        rng = np.random.default_rng(0)
        noise = rng.normal(0, 1e-3, tab.phi.shape)
        noisy = tab.map(lambda m: m + (noise + noise.T) * np.abs(m).max())
        # with no band the zero relation between the two grandchild groups disappears
        units = [{3}, {4}, {7}, {8}, {9}, {10}]
        try:
            split = cluster_children(2, units, noisy, 0.0)
        except InconsistentSigns:
            return
        assert split.siblings != {3, 4} or len(split.groups) != 2
        assert cluster_children(2, units, noisy, 0.1).siblings == {3, 4}
