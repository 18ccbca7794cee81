"""Second moments of voltage magnitudes and phases under the linear coupled power flow."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientSamples, InvalidCovariance, UnobservedNode
from .grid import GridTopology, reduced_laplacian_inverse


@dataclass(frozen=True)
class InjectionStatistics:
    """Per-node injection means and same-node covariances.

    Vectors are indexed by node id over the whole grid; the root entry is
    ignored (the substation balances the grid). Cross-node covariances are
    zero by construction.
    """

    mean_p: np.ndarray
    mean_q: np.ndarray
    var_p: np.ndarray
    var_q: np.ndarray
    cov_pq: np.ndarray

    def __post_init__(self):
        for name in ("mean_p", "mean_q", "var_p", "var_q", "cov_pq"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.var_p)
        if any(len(getattr(self, k)) != n for k in ("mean_p", "mean_q", "var_q", "cov_pq")):
            raise DimensionMismatch("injection statistic vectors differ in length")
        if np.any(self.var_p < 0) or np.any(self.var_q < 0) or np.any(self.cov_pq < 0):
            raise InvalidCovariance("variances and same-node p-q covariance must be non-negative")
        slack = self.var_p * self.var_q - self.cov_pq**2
        if np.any(slack < -1e-12 * np.maximum(self.var_p * self.var_q, 1e-300)):
            bad = int(np.argmin(slack))
            raise InvalidCovariance(f"node {bad}: cov_pq^2 exceeds var_p * var_q")

    @classmethod
    def from_variances(cls, var_p, var_q, cov_pq=None, mean_p=None, mean_q=None):
        var_p = np.asarray(var_p, dtype=float)
        zeros = np.zeros_like(var_p)
        return cls(
            zeros if mean_p is None else mean_p,
            zeros if mean_q is None else mean_q,
            var_p,
            var_q,
            zeros if cov_pq is None else cov_pq,
        )

    @property
    def num_nodes(self) -> int:
        return len(self.var_p)

    def omega(self, node: int) -> tuple[float, float, float]:
        return (float(self.var_p[node]), float(self.var_q[node]), float(self.cov_pq[node]))

    def as_dict(self, nodes: Iterable[int]) -> dict[int, tuple[float, float, float]]:
        return {a: self.omega(a) for a in nodes}

    def scaled(self, factor: float) -> InjectionStatistics:
        return InjectionStatistics(
            self.mean_p, self.mean_q, self.var_p * factor, self.var_q * factor, self.cov_pq * factor
        )


@dataclass(frozen=True)
class VoltageMoments:
    mu_v: np.ndarray
    mu_theta: np.ndarray
    omega_v: np.ndarray
    omega_theta: np.ndarray
    omega_vtheta: np.ndarray  # E[(v_i - mu)(theta_j - mu)]


def analytic_voltage_moments(topology: GridTopology, stats: InjectionStatistics) -> VoltageMoments:
    """Exact means and covariances of (v, theta) over the non-root nodes."""
    if stats.num_nodes != topology.num_nodes:
        raise DimensionMismatch(
            f"statistics cover {stats.num_nodes} nodes, grid has {topology.num_nodes}"
        )
    Hr = reduced_laplacian_inverse(topology, "r")
    Hx = reduced_laplacian_inverse(topology, "x")
    keep = list(topology.nonroot)
    mp, mq = stats.mean_p[keep], stats.mean_q[keep]
    Wp, Wq, Wpq = (np.diag(s[keep]) for s in (stats.var_p, stats.var_q, stats.cov_pq))
    omega_v = Hr @ Wp @ Hr + Hx @ Wq @ Hx + Hr @ Wpq @ Hx + Hx @ Wpq @ Hr
    omega_t = Hx @ Wp @ Hx + Hr @ Wq @ Hr - Hx @ Wpq @ Hr - Hr @ Wpq @ Hx
    omega_vt = Hr @ Wp @ Hx - Hx @ Wq @ Hr - Hr @ Wpq @ Hr + Hx @ Wpq @ Hx
    return VoltageMoments(
        mu_v=Hr @ mp + Hx @ mq,
        mu_theta=Hx @ mp - Hr @ mq,
        omega_v=0.5 * (omega_v + omega_v.T),
        omega_theta=0.5 * (omega_t + omega_t.T),
        omega_vtheta=omega_vt,
    )


@dataclass(frozen=True)
class MomentTable:
    """Pairwise statistics over ``nodes``.

    ``phi[i, j]`` is the variance of ``v_i - v_j``; ``phi_theta`` the same for
    phases; ``phi_vtheta`` the covariance of the two differences. The root may
    appear as a node: its deviations are identically zero.
    """

    nodes: tuple[int, ...]
    phi: np.ndarray
    phi_theta: np.ndarray | None = None
    phi_vtheta: np.ndarray | None = None
    provenance: str = "analytic"
    n_samples: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(a) for a in self.nodes))
        k = len(self.nodes)
        for name in ("phi", "phi_theta", "phi_vtheta"):
            m = getattr(self, name)
            if m is not None and np.shape(m) != (k, k):
                raise DimensionMismatch(f"{name} has shape {np.shape(m)}, expected {(k, k)}")
        object.__setattr__(self, "_pos", {a: i for i, a in enumerate(self.nodes)})

    @property
    def has_phase(self) -> bool:
        return self.phi_theta is not None and self.phi_vtheta is not None

    def __contains__(self, node) -> bool:
        return node in self._pos

    def pos(self, node: int) -> int:
        try:
            return self._pos[node]
        except KeyError:
            raise UnobservedNode(f"node {node} is not in the moment table") from None

    def get(self, a: int, b: int) -> float:
        return float(self.phi[self.pos(a), self.pos(b)])

    def triple(self, a: int, b: int) -> np.ndarray:
        """(phi, phi_theta, phi_vtheta) for the pair."""
        if not self.has_phase:
            raise UnobservedNode("moment table carries no phase statistics")
        i, j = self.pos(a), self.pos(b)
        return np.array([self.phi[i, j], self.phi_theta[i, j], self.phi_vtheta[i, j]])

    def subset(self, nodes: Sequence[int]) -> MomentTable:
        ix = [self.pos(a) for a in nodes]
        sel = np.ix_(ix, ix)
        return MomentTable(
            tuple(nodes),
            self.phi[sel],
            None if self.phi_theta is None else self.phi_theta[sel],
            None if self.phi_vtheta is None else self.phi_vtheta[sel],
            self.provenance,
            self.n_samples,
        )

    def map(self, fn) -> MomentTable:
        """Apply ``fn`` to every stored matrix (used for perturbation and scaling tests)."""
        return MomentTable(
            self.nodes,
            fn(self.phi),
            None if self.phi_theta is None else fn(self.phi_theta),
            None if self.phi_vtheta is None else fn(self.phi_vtheta),
            self.provenance,
            self.n_samples,
        )


def _phi_from_cov(cov: np.ndarray) -> np.ndarray:
    d = np.diag(cov)
    out = d[:, None] + d[None, :] - 2 * cov
    np.fill_diagonal(out, 0.0)
    return np.maximum(out, 0.0) if np.all(np.isfinite(out)) else out


def _phi_cross(cross: np.ndarray) -> np.ndarray:
    d = np.diag(cross)
    out = d[:, None] + d[None, :] - cross - cross.T
    np.fill_diagonal(out, 0.0)
    return out


def _embed(nonroot: Sequence[int], nodes: Sequence[int], M: np.ndarray) -> np.ndarray:
    """Restrict a non-root covariance to ``nodes`` (root rows/columns are zero)."""
    pos = {a: i for i, a in enumerate(nonroot)}
    k = len(nodes)
    out = np.zeros((k, k))
    ix = [pos.get(a, -1) for a in nodes]
    for i, pi in enumerate(ix):
        if pi < 0:
            continue
        for j, pj in enumerate(ix):
            if pj >= 0:
                out[i, j] = M[pi, pj]
    return out


def analytic_phi_table(
    topology: GridTopology, stats: InjectionStatistics, nodes: Sequence[int] | None = None
) -> MomentTable:
    """Exact pairwise table; defaults to every node including the root."""
    if nodes is None:
        nodes = tuple(range(topology.num_nodes))
    nodes = tuple(int(a) for a in nodes)
    for a in nodes:
        if not 0 <= a < topology.num_nodes:
            raise DimensionMismatch(f"node {a} not in grid of {topology.num_nodes} nodes")
    m = analytic_voltage_moments(topology, stats)
    nr = topology.nonroot
    cv = _embed(nr, nodes, m.omega_v)
    ct = _embed(nr, nodes, m.omega_theta)
    cvt = _embed(nr, nodes, m.omega_vtheta)
    return MomentTable(nodes, _phi_from_cov(cv), _phi_from_cov(ct), _phi_cross(cvt), "analytic")


@dataclass(frozen=True)
class VoltageSamples:
    """Voltage magnitude and phase deviations at the non-root nodes.

    ``columns`` labels the matrix columns with node ids. Columns of nodes not
    in ``observed`` hold NaN.
    """

    v: np.ndarray
    theta: np.ndarray | None
    columns: tuple[int, ...]
    observed: frozenset[int]
    root: int = 0

    @property
    def n(self) -> int:
        return self.v.shape[0]

    def column(self, node: int) -> int:
        return self.columns.index(node)

    def restrict(self, observed: Iterable[int]) -> VoltageSamples:
        """Blank out every column not listed in ``observed``."""
        observed = frozenset(observed) & frozenset(self.columns)
        v = self.v.copy()
        theta = None if self.theta is None else self.theta.copy()
        for i, a in enumerate(self.columns):
            if a not in observed:
                v[:, i] = np.nan
                if theta is not None:
                    theta[:, i] = np.nan
        return VoltageSamples(v, theta, self.columns, observed, self.root)

    def head(self, n: int) -> VoltageSamples:
        return VoltageSamples(
            self.v[:n], None if self.theta is None else self.theta[:n], self.columns, self.observed, self.root
        )


def _gather(samples: VoltageSamples, data: np.ndarray, nodes: Sequence[int]) -> np.ndarray:
    cols = {a: i for i, a in enumerate(samples.columns)}
    out = np.zeros((samples.n, len(nodes)))
    for k, a in enumerate(nodes):
        if a == samples.root:
            continue
        out[:, k] = data[:, cols[a]]
    return out


def empirical_phi_table(
    samples: VoltageSamples,
    nodes: Sequence[int] | None = None,
    noise_variance: float | Mapping[int, float] | None = None,
) -> MomentTable:
    """Sample-mean-centred pairwise table with (n - 1) normalisation.

    ``noise_variance`` optionally removes a known additive measurement-noise
    variance from every magnitude pair (scalar, or per node).
    """
    if samples.n < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {samples.n}")
    if nodes is None:
        nodes = (samples.root,) + tuple(sorted(samples.observed))
    nodes = tuple(int(a) for a in nodes)
    for a in nodes:
        if a != samples.root and a not in samples.observed:
            raise UnobservedNode(f"node {a} has no voltage samples")
    n = samples.n
    V = _gather(samples, samples.v, nodes)
    V -= V.mean(axis=0)
    phi = _phi_from_cov(V.T @ V / (n - 1))
    phi_t = phi_vt = None
    if samples.theta is not None:
        T = _gather(samples, samples.theta, nodes)
        T -= T.mean(axis=0)
        phi_t = _phi_from_cov(T.T @ T / (n - 1))
        phi_vt = _phi_cross(V.T @ T / (n - 1))
    if noise_variance is not None:
        if isinstance(noise_variance, Mapping):
            s = np.array([0.0 if a == samples.root else noise_variance.get(a, 0.0) for a in nodes])
        else:
            s = np.array([0.0 if a == samples.root else float(noise_variance) for a in nodes])
        phi = phi - (s[:, None] + s[None, :])
        np.fill_diagonal(phi, 0.0)
    return MomentTable(nodes, phi, phi_t, phi_vt, "empirical", n)
