import numpy as np
import pytest

from gridsleuth.errors import DimensionMismatch, InfeasibleHiddenPolicy
from gridsleuth.fixtures import load_case33
from gridsleuth.grid import build_tree, reduced_laplacian_inverse
from gridsleuth.moments import InjectionStatistics, VoltageSamples
from gridsleuth.simulator import (
    ExperimentConfig,
    add_measurement_noise,
    check_hidden_policy,
    degree_two_hidden,
    lcpf_residuals,
    lcpf_solve,
    make_scenario,
    random_candidates,
    random_statistics,
    random_tree,
    sample_injections,
    select_hidden,
    simulate_samples,
    stream,
)


class TestSampling:
    def test_zero_variance_gives_means(self):
        s = InjectionStatistics([0, 0.3, -0.1], [0, 0.2, 0.4], [0, 0, 0], [0, 0, 0], [0, 0, 0])
        x = sample_injections(s, 5, 0)
        np.testing.assert_array_equal(x[:, :, 0], [[0.3, -0.1]] * 5)
        np.testing.assert_array_equal(x[:, :, 1], [[0.2, 0.4]] * 5)

    def test_same_node_cross_moment(self):
        n = 1_000_000
        s = InjectionStatistics.from_variances([0, 1.0, 1.0], [0, 1.0, 1.0], [0, 0.5, 0.0])
        x = sample_injections(s, n, 1)
        p, q = x[:, 0, 0], x[:, 0, 1]
        # var(p q) = 1 + 0.5^2 for unit Gaussians with correlation 0.5
        assert abs(np.mean(p * q) - 0.5) < 3 * np.sqrt(1.25 / n)
        r = np.corrcoef(x[:, 0, 0], x[:, 1, 0])[0, 1]
        assert abs(r) < 3 / np.sqrt(n)

    def test_seeded_streams_repeat(self):
        s = random_statistics(4, 1.0, 0)
        a = sample_injections(s, 10, stream(5, 2, 1000))
        b = sample_injections(s, 10, stream(5, 2, 1000))
        c = sample_injections(s, 10, stream(5, 3, 1000))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestLcpf:
    def test_zero_injection(self):
        t = random_tree(6, 0)
        s = lcpf_solve(t, np.zeros((3, 5, 2)))
        assert not s.v.any() and not s.theta.any()

    def test_unit_injection_is_laplacian_column(self):
        t = random_tree(6, 2)
        Hr = reduced_laplacian_inverse(t, "r")
        for k in range(5):
            inj = np.zeros((1, 5, 2))
            inj[0, k, 0] = 1.0
            np.testing.assert_allclose(lcpf_solve(t, inj).v[0], Hr[:, k])

    def test_residuals_vanish(self):
        t = random_tree(15, 4)
        inj = sample_injections(random_statistics(15, 1.0, 4), 200, 4, t.nonroot)
        res = lcpf_residuals(t, lcpf_solve(t, inj), inj)
        assert np.abs(res).max() < 1e-9

    def test_shape_checked(self):
        with pytest.raises(DimensionMismatch):
            lcpf_solve(random_tree(4, 0), np.zeros((2, 4, 2)))


class TestNoise:
    def _samples(self, n=100_000):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((n, 2)) * [1.0, 3.0]
        return VoltageSamples(v, v.copy(), (1, 2), frozenset((1, 2)))

    def test_ratio_zero_is_identity(self):
        s = self._samples(10)
        assert add_measurement_noise(s, 0.0, 1) is s

    def test_variance_grows_by_ratio(self):
        s = self._samples()
        noisy = add_measurement_noise(s, 0.05, 1)
        ratio = noisy.v.var(axis=0) / s.v.var(axis=0)
        np.testing.assert_allclose(ratio, 1.05, atol=0.01)

    def test_uniform_mode(self):
        s = self._samples()
        noisy = add_measurement_noise(s, 0.05, 1, mode="uniform")
        added = (noisy.v - s.v).var(axis=0)
        np.testing.assert_allclose(added, 0.05 * s.v.var(axis=0).mean(), rtol=0.02)

    def test_negative_ratio(self):
        with pytest.raises(ValueError):
            add_measurement_noise(self._samples(10), -0.1, 0)


class TestRandomGrids:
    def test_random_tree_shape(self):
        t = random_tree(30, 9)
        assert t.num_nodes == 30 and t.degree(0) == 1

    def test_candidates_superset(self):
        t = random_tree(10, 1)
        c = random_candidates(t, 7, 1)
        assert len(c) == 9 + 7
        assert all(e in c for e in t.edge_set())

    def test_statistics_scale_with_loads(self):
        loads = np.zeros((4, 2))
        loads[1:] = [[1.0, 0.0], [0.0, 2.0], [3.0, 4.0]]
        s = random_statistics(4, 1e-3, 0, loads)
        mag = np.array([1.0, 2.0, 5.0])
        assert np.all(s.var_p[1:] >= 0.5e-3 * mag) and np.all(s.var_p[1:] <= 1.5e-3 * mag)
        assert s.var_p[0] == 0 and np.all(s.cov_pq**2 <= s.var_p * s.var_q)
        np.testing.assert_array_equal(s.mean_p[1:], -loads[1:, 0])

    def test_all_zero_loads_mean_unit_loads(self):
        s = random_statistics(4, 1.0, 0, np.zeros((4, 2)))
        assert np.all(s.var_p[1:] >= 0.5)


class TestHiddenPlacement:
    def test_policy_none(self):
        g = load_case33()
        truth = make_scenario(ExperimentConfig(n_extra_candidate_edges=0), g.topology, g.base_loads, g.candidates)
        assert truth.hidden == frozenset()
        assert truth.observed == frozenset(range(1, 33))

    @pytest.mark.parametrize("seed", range(5))
    def test_three_hop_on_fixture(self, seed):
        topo = load_case33().topology
        h = select_hidden(topo, "three_hop", 4, seed)
        assert len(h) == 4
        assert all(topo.degree(a) > 2 for a in h)
        assert all(topo.hop_distance(a, b) > 2 for a in h for b in h if a != b)

    @pytest.mark.parametrize("seed", range(5))
    def test_two_hop_on_fixture(self, seed):
        topo = load_case33().topology
        h = select_hidden(topo, "two_hop", 8, seed)
        assert check_hidden_policy(topo, h, "two_hop")

    def test_two_hop_on_path_is_infeasible(self):
        t = build_tree(3, [(0, 1, 1, 1), (1, 2, 1, 1)])
        with pytest.raises(InfeasibleHiddenPolicy):
            select_hidden(t, "two_hop", 1, 0)

    def test_explicit_hidden_checked(self):
        g = load_case33()
        cfg = ExperimentConfig(hidden_node_policy="two_hop", hidden_nodes=(2, 3))
        with pytest.raises(InfeasibleHiddenPolicy):
            make_scenario(cfg, g.topology, g.base_loads, g.candidates)

    def test_degree_two_hidden(self):
        topo = load_case33().topology
        for seed in range(10):
            h = degree_two_hidden(topo, 3, seed)
            assert len(h) == 3 and all(topo.degree(a) == 2 for a in h)
            assert all(topo.hop_distance(a, b) > 1 for a in h for b in h if a != b)


class TestScenario:
    def test_samples_blank_hidden_columns(self):
        g = load_case33()
        cfg = ExperimentConfig(hidden_node_policy="three_hop", n_hidden=4, n_extra_candidate_edges=50)
        truth = make_scenario(cfg, g.topology, g.base_loads, g.candidates, trial=3)
        assert len(truth.candidates) == 82
        s = simulate_samples(truth, 20, cfg.seed, 3)
        for a in truth.hidden:
            assert np.isnan(s.v[:, s.column(a)]).all()
        assert s.observed == truth.observed

    def test_deterministic(self):
        g = load_case33()
        cfg = ExperimentConfig(seed=7, noise_variance_ratio=0.01)
        truth = make_scenario(cfg, g.topology, g.base_loads, g.candidates, 2)
        a = simulate_samples(truth, 30, 7, 2, 0, 0.01)
        b = simulate_samples(truth, 30, 7, 2, 0, 0.01)
        np.testing.assert_array_equal(a.v, b.v)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(covariance_scale=0)
        with pytest.raises(ValueError):
            ExperimentConfig(trials=0)
        assert ExperimentConfig(n_samples=50).n_samples == (50,)
