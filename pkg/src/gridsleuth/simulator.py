"""Ground-truth experiments: random grids, injection draws and LC-PF voltage samples.

Random streams
--------------
Every trial owns independent PCG64 streams derived from
``SeedSequence(seed, spawn_key=(trial, stream))``. ``STREAM_SCENARIO`` drives
candidate edges, injection statistics and hidden-node choice; sample draws for
the k-th point of a sample-size sweep use ``STREAM_SAMPLES + k`` and the
matching noise draws ``STREAM_NOISE + k``. Results are therefore identical
whether trials run serially or on a worker pool.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .errors import DimensionMismatch, InfeasibleHiddenPolicy, InvalidCovariance
from .learner.model import Thresholds
from .grid import CandidateEdgeSet, GridTopology, Impedance, build_tree, edge_key, reduced_laplacian_inverse
from .moments import InjectionStatistics, VoltageSamples

STREAM_SCENARIO = 0
STREAM_SAMPLES = 1_000
STREAM_NOISE = 2_000

HiddenPolicy = Literal["none", "three_hop", "two_hop"]


def default_seed() -> int:
    return int(os.environ.get("GRIDSLEUTH_SEED", "0"))


def stream(seed: int, trial: int, which: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial, which))))


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.Generator(np.random.PCG64(seed_or_rng))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_injections(stats: InjectionStatistics, n: int, seed, nodes: Sequence[int] | None = None) -> np.ndarray:
    """Independent bivariate Gaussian (p, q) draws per node.

    Returns an array of shape ``(n, len(nodes), 2)``; ``nodes`` defaults to
    every node but 0 (the root).
    """
    rng = _as_rng(seed)
    if nodes is None:
        nodes = range(1, stats.num_nodes)
    ix = np.asarray(list(nodes), dtype=int)
    vp, vq, c = stats.var_p[ix], stats.var_q[ix], stats.cov_pq[ix]
    if np.any(c**2 > vp * vq * (1 + 1e-12) + 1e-300):
        raise InvalidCovariance("cov_pq^2 exceeds var_p * var_q")
    z = rng.standard_normal((n, len(ix), 2))
    sp = np.sqrt(vp)
    # Cholesky factor of [[vp, c], [c, vq]] written out per node
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(sp > 0, c / sp, 0.0)
    l22 = np.sqrt(np.maximum(vq - l21**2, 0.0))
    out = np.empty((n, len(ix), 2))
    out[..., 0] = stats.mean_p[ix] + sp * z[..., 0]
    out[..., 1] = stats.mean_q[ix] + l21 * z[..., 0] + l22 * z[..., 1]
    return out


def lcpf_solve(topology: GridTopology, injections: np.ndarray) -> VoltageSamples:
    """Voltage magnitude and phase deviations for each injection sample.

    ``injections`` has shape ``(n, |V| - 1, 2)`` in the topology's non-root
    order. The root sits at 1 p.u. and angle 0, i.e. zero deviation.
    """
    k = topology.num_nodes - 1
    if injections.ndim != 3 or injections.shape[1:] != (k, 2):
        raise DimensionMismatch(f"expected injections of shape (n, {k}, 2), got {injections.shape}")
    Hr = reduced_laplacian_inverse(topology, "r")
    Hx = reduced_laplacian_inverse(topology, "x")
    p, q = injections[..., 0], injections[..., 1]
    v = p @ Hr + q @ Hx
    theta = p @ Hx - q @ Hr
    nr = topology.nonroot
    return VoltageSamples(v, theta, nr, frozenset(nr), topology.root)


def lcpf_residuals(topology: GridTopology, samples: VoltageSamples, injections: np.ndarray) -> np.ndarray:
    """Nodal balance residuals of the linear coupled power flow, shape (n, |V|-1, 2)."""
    n = samples.n
    full_v = np.zeros((n, topology.num_nodes))
    full_t = np.zeros((n, topology.num_nodes))
    cols = list(samples.columns)
    full_v[:, cols] = samples.v
    full_t[:, cols] = samples.theta
    bal_p = np.zeros_like(full_v)
    bal_q = np.zeros_like(full_v)
    for u, v, z in topology.edges:
        zz = z.r**2 + z.x**2
        dv = full_v[:, u] - full_v[:, v]
        dt = full_t[:, u] - full_t[:, v]
        fp = (z.r * dv + z.x * dt) / zz
        fq = (z.x * dv - z.r * dt) / zz
        bal_p[:, u] += fp
        bal_p[:, v] -= fp
        bal_q[:, u] += fq
        bal_q[:, v] -= fq
    out = np.empty((n, len(cols), 2))
    out[..., 0] = bal_p[:, cols] - injections[..., 0]
    out[..., 1] = bal_q[:, cols] - injections[..., 1]
    return out


def add_measurement_noise(
    samples: VoltageSamples,
    noise_variance_ratio: float,
    seed,
    mode: Literal["per_column", "uniform"] = "per_column",
) -> VoltageSamples:
    """Add zero-mean Gaussian noise to every observed magnitude and phase column.

    ``per_column`` scales the noise variance by each column's own sample
    variance; ``uniform`` uses one variance for all columns of a kind, equal to
    the ratio times the mean column variance.
    """
    if noise_variance_ratio < 0:
        raise ValueError("noise_variance_ratio must be >= 0")
    if noise_variance_ratio == 0:
        return samples
    rng = _as_rng(seed)
    obs = [i for i, a in enumerate(samples.columns) if a in samples.observed]

    def noisy(x):
        x = x.copy()
        var = x[:, obs].var(axis=0, ddof=1)
        if mode == "uniform":
            var = np.full_like(var, var.mean())
        x[:, obs] += rng.standard_normal((x.shape[0], len(obs))) * np.sqrt(noise_variance_ratio * var)
        return x

    v = noisy(samples.v)
    theta = None if samples.theta is None else noisy(samples.theta)
    return VoltageSamples(v, theta, samples.columns, samples.observed, samples.root)


# ---------------------------------------------------------------------------
# Random grids and statistics
# ---------------------------------------------------------------------------


def random_tree(
    num_nodes: int,
    seed,
    r_range: tuple[float, float] = (0.5, 1.5),
    x_range: tuple[float, float] = (0.5, 1.5),
) -> GridTopology:
    """Random recursive tree rooted at 0 with a single root edge 0-1."""
    if num_nodes < 2:
        raise ValueError("need at least 2 nodes")
    rng = _as_rng(seed)
    edges = [(0, 1)]
    for k in range(2, num_nodes):
        edges.append((int(rng.integers(1, k)), k))
    # shuffle labels of the non-root nodes so ids carry no depth information
    perm = np.concatenate([[0], 1 + rng.permutation(num_nodes - 1)])
    out = []
    for u, v in edges:
        out.append((int(perm[u]), int(perm[v]), float(rng.uniform(*r_range)), float(rng.uniform(*x_range))))
    return build_tree(num_nodes, out)


def random_candidates(topology: GridTopology, n_extra: int, seed) -> CandidateEdgeSet:
    """Operational edges plus ``n_extra`` random non-edges.

    Extra impedances are uniform between the smallest and largest operational
    resistance (and reactance).
    """
    rng = _as_rng(seed)
    n = topology.num_nodes
    existing = set(topology.impedances)
    pool = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in existing]
    n_extra = min(n_extra, len(pool))
    rs = [z.r for z in topology.impedances.values()]
    xs = [z.x for z in topology.impedances.values()]
    imp = dict(topology.impedances)
    if n_extra > 0:
        pick = rng.choice(len(pool), size=n_extra, replace=False)
        for k in sorted(pick):
            imp[pool[k]] = Impedance(float(rng.uniform(min(rs), max(rs))), float(rng.uniform(min(xs), max(xs))))
    return CandidateEdgeSet(imp)


def random_statistics(
    num_nodes: int,
    covariance_scale: float,
    seed,
    base_loads: np.ndarray | None = None,
    root: int = 0,
) -> InjectionStatistics:
    """Injection statistics relative to base loads.

    Variances are uniform in [0.5, 1.5] x scale x |base load| and the p-q
    correlation is uniform in [0, 0.5]. Without base loads (or with all of
    them zero) every node gets |load| = 1 and zero means; a node with zero
    load in an otherwise loaded grid injects no variance.
    """
    if covariance_scale <= 0:
        raise ValueError("covariance_scale must be positive")
    rng = _as_rng(seed)
    if base_loads is not None and not np.any(np.asarray(base_loads, dtype=float)):
        base_loads = None
    if base_loads is None:
        base_loads = np.zeros((num_nodes, 2))
        mag = np.ones(num_nodes)
    else:
        base_loads = np.asarray(base_loads, dtype=float)
        mag = np.hypot(base_loads[:, 0], base_loads[:, 1])
    vp = rng.uniform(0.5, 1.5, num_nodes) * covariance_scale * mag
    vq = rng.uniform(0.5, 1.5, num_nodes) * covariance_scale * mag
    rho = rng.uniform(0.0, 0.5, num_nodes)
    cov = rho * np.sqrt(vp * vq)
    for arr in (vp, vq, cov):
        arr[root] = 0.0
    # loads draw power: injections are the negated base loads
    mp = -base_loads[:, 0].copy()
    mq = -base_loads[:, 1].copy()
    mp[root] = mq[root] = 0.0
    return InjectionStatistics(mp, mq, vp, vq, cov)


# ---------------------------------------------------------------------------
# Hidden-node placement
# ---------------------------------------------------------------------------


def _compatible(topology: GridTopology, chosen: list[int], a: int, min_hops: int) -> bool:
    return all(topology.hop_distance(a, b) >= min_hops for b in chosen)


def select_hidden(topology: GridTopology, policy: HiddenPolicy, count: int, seed) -> frozenset[int]:
    """Random hidden set obeying the placement policy.

    ``three_hop``: degree > 2 and pairwise more than two hops apart.
    ``two_hop``: degree > 2 and no two hidden nodes adjacent.
    """
    if policy == "none" or count == 0:
        return frozenset()
    min_hops = {"three_hop": 3, "two_hop": 2}[policy]
    eligible = [a for a in topology.nonroot if topology.degree(a) > 2]
    if len(eligible) < count:
        raise InfeasibleHiddenPolicy(
            f"{len(eligible)} node(s) of degree > 2 available, {count} hidden requested"
        )
    rng = _as_rng(seed)
    order = [eligible[i] for i in rng.permutation(len(eligible))]
    budget = [20_000]

    def search(start: int, chosen: list[int]) -> list[int] | None:
        if len(chosen) == count:
            return chosen
        budget[0] -= 1
        if budget[0] < 0:
            return None
        for i in range(start, len(order)):
            if len(order) - i < count - len(chosen):
                return None
            a = order[i]
            if _compatible(topology, chosen, a, min_hops):
                found = search(i + 1, chosen + [a])
                if found is not None:
                    return found
        return None

    found = search(0, [])
    if found is None:
        raise InfeasibleHiddenPolicy(f"no set of {count} hidden node(s) satisfies policy {policy!r}")
    return frozenset(found)


def check_hidden_policy(topology: GridTopology, hidden, policy: HiddenPolicy) -> bool:
    if policy == "none":
        return not hidden
    min_hops = {"three_hop": 3, "two_hop": 2}[policy]
    hidden = sorted(hidden)
    if any(a == topology.root or topology.degree(a) <= 2 for a in hidden):
        return False
    return all(topology.hop_distance(a, b) >= min_hops for i, a in enumerate(hidden) for b in hidden[i + 1 :])


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_samples: tuple[int, ...] = (1000,)
    covariance_scale: float = 1e-3
    noise_variance_ratio: float = 0.0
    n_extra_candidate_edges: int = 50
    hidden_node_policy: HiddenPolicy = "none"
    n_hidden: int = 0
    hidden_nodes: tuple[int, ...] | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    trials: int = 1
    noise_mode: Literal["per_column", "uniform"] = "per_column"

    def __post_init__(self):
        ns = self.n_samples
        if isinstance(ns, int):
            ns = (ns,)
        object.__setattr__(self, "n_samples", tuple(int(n) for n in ns))
        if self.hidden_nodes is not None:
            object.__setattr__(self, "hidden_nodes", tuple(sorted(int(a) for a in self.hidden_nodes)))
        if self.covariance_scale <= 0:
            raise ValueError("covariance_scale must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.noise_variance_ratio < 0:
            raise ValueError("noise_variance_ratio must be >= 0")

    def with_(self, **kw) -> ExperimentConfig:
        return replace(self, **kw)


@dataclass(frozen=True)
class ScenarioTruth:
    topology: GridTopology
    candidates: CandidateEdgeSet
    stats: InjectionStatistics
    hidden: frozenset[int]
    observed: frozenset[int]

    def __post_init__(self):
        if self.hidden & self.observed:
            raise ValueError("hidden and observed sets overlap")
        if self.hidden | self.observed != frozenset(self.topology.nonroot):
            raise ValueError("hidden and observed must partition the non-root nodes")

    def known_stats(self) -> dict[int, tuple[float, float, float]]:
        return self.stats.as_dict(sorted(self.observed))


def make_scenario(
    config: ExperimentConfig,
    base_topology: GridTopology,
    base_loads: np.ndarray | None = None,
    base_candidates: CandidateEdgeSet | None = None,
    trial: int = 0,
) -> ScenarioTruth:
    """Draw one trial's candidate set, statistics and hidden set.

    With ``n_extra_candidate_edges > 0`` fresh random extra edges are drawn;
    with 0 the given ``base_candidates`` (or just the operational edges) are
    used. An explicit ``config.hidden_nodes`` overrides random placement but is
    still checked against the policy.
    """
    rng = stream(config.seed, trial, STREAM_SCENARIO)
    if config.n_extra_candidate_edges > 0:
        cand = random_candidates(base_topology, config.n_extra_candidate_edges, rng)
    else:
        cand = CandidateEdgeSet.from_topology(base_topology)
        if base_candidates is not None:
            cand = cand.union(base_candidates)
    stats = random_statistics(base_topology.num_nodes, config.covariance_scale, rng, base_loads, base_topology.root)
    if config.hidden_nodes is not None:
        hidden = frozenset(config.hidden_nodes)
        if config.hidden_node_policy != "none" and not check_hidden_policy(
            base_topology, hidden, config.hidden_node_policy
        ):
            raise InfeasibleHiddenPolicy(f"hidden set {sorted(hidden)} violates {config.hidden_node_policy}")
    else:
        hidden = select_hidden(base_topology, config.hidden_node_policy, config.n_hidden, rng)
    observed = frozenset(base_topology.nonroot) - hidden
    return ScenarioTruth(base_topology, cand, stats, hidden, observed)


def simulate_samples(
    truth: ScenarioTruth,
    n: int,
    seed: int,
    trial: int = 0,
    point: int = 0,
    noise_variance_ratio: float = 0.0,
    noise_mode: str = "per_column",
) -> VoltageSamples:
    """Noisy LC-PF samples restricted to the observed nodes."""
    inj = sample_injections(truth.stats, n, stream(seed, trial, STREAM_SAMPLES + point), truth.topology.nonroot)
    clean = lcpf_solve(truth.topology, inj)
    noisy = add_measurement_noise(clean, noise_variance_ratio, stream(seed, trial, STREAM_NOISE + point), noise_mode)
    return noisy.restrict(truth.observed)


def degree_two_hidden(topology: GridTopology, k: int, seed) -> frozenset[int]:
    """Random set of ``k`` pairwise non-adjacent degree-2 non-root nodes."""
    rng = _as_rng(seed)
    pool = [a for a in topology.nonroot if topology.degree(a) == 2]
    for _ in range(200):
        chosen: list[int] = []
        for i in rng.permutation(len(pool)):
            a = pool[i]
            if all(edge_key(a, b) not in topology.impedances for b in chosen):
                chosen.append(a)
                if len(chosen) == k:
                    return frozenset(chosen)
    raise InfeasibleHiddenPolicy(f"cannot place {k} non-adjacent degree-2 hidden nodes")
