"""Monte-Carlo campaigns: scenario, samples, moments, learner and error metrics per trial."""

from __future__ import annotations

import csv
import io as _io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import GridSleuthError
from .io import GridFile, topology_error
from .learner import algorithm1, algorithm2, algorithm3
from .moments import empirical_phi_table
from .simulator import ExperimentConfig, ScenarioTruth, make_scenario, simulate_samples

Algorithm = Literal["alg1", "alg2", "alg3"]
CSV_VERSION = "gridsleuth-campaign v1"
CSV_FIELDS = (
    "trial",
    "n_samples",
    "noise_ratio",
    "covariance_scale",
    "algorithm",
    "status",
    "topology_rel_error",
    "mean_rel_error_var_p",
    "mean_rel_error_var_q",
    "mean_rel_error_cov_pq",
)


@dataclass(frozen=True)
class TrialRecord:
    """One (trial, sample size) outcome.

    ``status`` is ``ok``, ``partial`` (learner left nodes unattached) or
    ``error:<ExceptionName>``; failed trials score topology error 1 and NaN
    statistics errors.
    """

    trial: int
    n_samples: int
    noise_ratio: float
    covariance_scale: float
    algorithm: str
    status: str
    topology_rel_error: float
    mean_rel_error_var_p: float
    mean_rel_error_var_q: float
    mean_rel_error_cov_pq: float
    runtime_ms: float = 0.0

    @property
    def failed(self) -> bool:
        return self.status != "ok"


@dataclass
class CampaignResult:
    config: ExperimentConfig
    algorithm: str
    records: list[TrialRecord] = field(default_factory=list)

    def at(self, n: int) -> list[TrialRecord]:
        return [r for r in self.records if r.n_samples == n]

    def mean_topology_error(self, n: int) -> float:
        return float(np.mean([r.topology_rel_error for r in self.at(n)]))

    def mean_variance_error(self, n: int) -> float:
        """Mean relative error over var_p and var_q, skipping failed trials."""
        vals = [v for r in self.at(n) for v in (r.mean_rel_error_var_p, r.mean_rel_error_var_q)]
        vals = [v for v in vals if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    def summary(self) -> dict[int, dict[str, float]]:
        out = {}
        for n in self.config.n_samples:
            errs = np.array([r.topology_rel_error for r in self.at(n)])
            out[n] = {
                "topology_mean": float(errs.mean()),
                "topology_std": float(errs.std()),
                "variance_mean": self.mean_variance_error(n),
                "failed": sum(r.failed for r in self.at(n)),
            }
        return out

    def to_csv(self, timing: bool = False) -> str:
        buf = _io.StringIO()
        buf.write(f"# {CSV_VERSION}\n")
        fields = CSV_FIELDS + (("runtime_ms",) if timing else ())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        for r in self.records:
            row = asdict(r)
            w.writerow([_fmt(row[f]) for f in fields])
        return buf.getvalue()

    def write_csv(self, path: str | Path, timing: bool = False) -> None:
        Path(path).write_text(self.to_csv(timing))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _rel_errors(estimates: dict[int, tuple[float, float, float]], truth: ScenarioTruth, nodes) -> tuple[float, float, float]:
    errs = np.zeros((len(nodes), 3))
    for i, a in enumerate(nodes):
        true = np.array(truth.stats.omega(a))
        est = np.array(estimates.get(a, (0.0, 0.0, 0.0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            errs[i] = np.where(true != 0, np.abs(est - true) / np.abs(true), np.abs(est))
    if not len(nodes):
        return (0.0, 0.0, 0.0)
    m = errs.mean(axis=0)
    return float(m[0]), float(m[1]), float(m[2])


def run_trial(config: ExperimentConfig, grid: GridFile, algorithm: Algorithm, trial: int) -> list[TrialRecord]:
    """Run every sample-size point of one trial."""
    try:
        truth = make_scenario(config, grid.topology, grid.base_loads, grid.candidates, trial)
    except GridSleuthError as exc:
        return [
            TrialRecord(
                trial, n, config.noise_variance_ratio, config.covariance_scale, algorithm,
                f"error:{type(exc).__name__}", 1.0, math.nan, math.nan, math.nan,
            )
            for n in config.n_samples
        ]
    root = truth.topology.root
    nodes = [root] + sorted(truth.observed)
    true_edges = truth.topology.edge_set()
    out = []
    for k, n in enumerate(config.n_samples):
        t0 = time.perf_counter()
        status = "ok"
        try:
            samples = simulate_samples(
                truth, n, config.seed, trial, k, config.noise_variance_ratio, config.noise_mode
            )
            table = empirical_phi_table(samples, nodes)
            if algorithm == "alg1":
                model = algorithm1(table, truth.candidates, root=root)
                stats, scored = model.node_stats, sorted(truth.observed)
            else:
                learner = algorithm2 if algorithm == "alg2" else algorithm3
                model = learner(
                    table,
                    truth.candidates,
                    len(truth.hidden),
                    config.thresholds,
                    known_stats=truth.known_stats(),
                    hidden=truth.hidden,
                    root=root,
                    strict=False,
                )
                stats, scored = model.hidden_stats, sorted(truth.hidden)
                if model.unresolved or len(model.hidden_stats) < len(truth.hidden):
                    status = "partial"
            topo_err = topology_error(model.edges, true_edges)
            ep, eq, ec = _rel_errors(stats, truth, scored)
        except GridSleuthError as exc:
            status, topo_err, (ep, eq, ec) = f"error:{type(exc).__name__}", 1.0, (math.nan,) * 3
        ms = (time.perf_counter() - t0) * 1e3
        out.append(
            TrialRecord(
                trial, n, config.noise_variance_ratio, config.covariance_scale, algorithm,
                status, topo_err, ep, eq, ec, ms,
            )
        )
    return out


def _run_trial_args(args):
    return run_trial(*args)


def run_campaign(
    config: ExperimentConfig,
    grid: GridFile,
    algorithm: Algorithm = "alg1",
    jobs: int = 1,
) -> CampaignResult:
    """Run ``config.trials`` independent trials.

    Each trial draws its own streams from ``(config.seed, trial)``, so the
    result does not depend on ``jobs``. Per-trial failures are recorded, not
    raised.
    """
    if algorithm not in ("alg1", "alg2", "alg3"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    tasks = [(config, grid, algorithm, t) for t in range(config.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_trial_args, tasks))
    else:
        chunks = [_run_trial_args(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.trial, config.n_samples.index(r.n_samples)))
    return CampaignResult(config, algorithm, records)


PLOT_SCRIPT = '''"""Plot mean topology and variance errors against sample size from a campaign CSV."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
rows = [r for r in csv.DictReader(line for line in open(path) if not line.startswith("#"))]
topo, var = defaultdict(list), defaultdict(list)
for r in rows:
    n = int(r["n_samples"])
    topo[n].append(float(r["topology_rel_error"]))
    for key in ("mean_rel_error_var_p", "mean_rel_error_var_q"):
        v = float(r[key])
        if v == v:
            var[n].append(v)
ns = sorted(topo)
fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
a1.plot(ns, [sum(topo[n]) / len(topo[n]) for n in ns], "o-")
a1.set_xlabel("samples")
a1.set_ylabel("mean relative topology error")
a2.plot(ns, [sum(var[n]) / max(len(var[n]), 1) for n in ns], "s-")
a2.set_xlabel("samples")
a2.set_ylabel("mean relative variance error")
for a in (a1, a2):
    a.set_xscale("log")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def write_plot_script(csv_path: str | Path, script_path: str | Path) -> None:
    Path(script_path).write_text(PLOT_SCRIPT.format(csv_name=str(csv_path)))
