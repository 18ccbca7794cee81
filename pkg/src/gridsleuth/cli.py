"""Command-line entry point.

Subcommands
-----------
gen-grid   write a random radial grid (or the bundled 33-node feeder) as grid JSON
simulate   draw one scenario and LC-PF voltage samples into an .npz file
learn      run a learner on an .npz sample file and print the learned edges
campaign   Monte-Carlo error-vs-samples campaign written as CSV
bounds     separation constants and sample-count expression for a grid
convert    Matpower case (plain-matrix subset) to grid JSON

All electrical quantities are per-unit. Exit status: 0 success, 1 usage
error, 2 data error, 3 learning failure. ``GRIDSLEUTH_SEED`` supplies the
seed when ``--seed`` is absent.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import run_campaign, write_plot_script
from .errors import AlgorithmError, DataError, SchemaError
from .fixtures import load_case33
from .grid import CandidateEdgeSet
from .io import GridFile, emit_grid_json, parse_grid_json, parse_matpower_case, topology_error
from .learner import Thresholds, algorithm1, algorithm2, algorithm3
from .learner.bounds import compute_bounds
from .moments import InjectionStatistics, VoltageSamples, empirical_phi_table
from .simulator import (
    ExperimentConfig,
    default_seed,
    make_scenario,
    random_candidates,
    random_tree,
    simulate_samples,
)

EXIT_USAGE, EXIT_DATA, EXIT_ALGORITHM = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_grid(path: str | None) -> GridFile:
    if path is None:
        return load_case33()
    return parse_grid_json(Path(path).read_bytes())


def _add_scenario_flags(p: argparse.ArgumentParser):
    p.add_argument("--grid", help="grid JSON (default: bundled 33-node feeder)")
    p.add_argument("--seed", type=int, default=None, help="base seed (default: $GRIDSLEUTH_SEED or 0)")
    p.add_argument("--covariance-scale", type=float, default=1e-3, help="injection variance relative to |base load|")
    p.add_argument("--noise-variance-ratio", type=float, default=0.0, help="noise variance relative to column variance")
    p.add_argument("--noise-mode", choices=("per_column", "uniform"), default="per_column")
    p.add_argument(
        "--n-extra-candidate-edges",
        type=int,
        default=0,
        help="fresh random candidate lines per trial; 0 keeps the grid file's candidates",
    )
    p.add_argument("--hidden-node-policy", choices=("none", "three_hop", "two_hop"), default="none")
    p.add_argument("--n-hidden", type=int, default=0)
    p.add_argument("--hidden-nodes", type=_int_list, default=None, help="explicit hidden ids, e.g. 2,8,15")


def _add_threshold_flags(p: argparse.ArgumentParser):
    d = Thresholds()
    p.add_argument("--tau1", type=float, default=d.tau1, help="parent-child relative tolerance")
    p.add_argument("--tau2", type=float, default=d.tau2, help="grandparent relative tolerance")
    p.add_argument("--tau3", type=float, default=d.tau3, help="triplet-sign band, relative to median |phi|")


def _config(args, n_samples, trials=1) -> ExperimentConfig:
    return ExperimentConfig(
        seed=default_seed() if args.seed is None else args.seed,
        n_samples=n_samples,
        covariance_scale=args.covariance_scale,
        noise_variance_ratio=args.noise_variance_ratio,
        n_extra_candidate_edges=args.n_extra_candidate_edges,
        hidden_node_policy=args.hidden_node_policy,
        n_hidden=args.n_hidden,
        hidden_nodes=args.hidden_nodes,
        thresholds=Thresholds(args.tau1, args.tau2, args.tau3) if hasattr(args, "tau1") else Thresholds(),
        trials=trials,
        noise_mode=args.noise_mode,
    )


def cmd_gen_grid(args) -> int:
    if args.case33:
        g = load_case33()
        data = emit_grid_json(g.topology, g.candidates, g.base_loads)
    else:
        seed = default_seed() if args.seed is None else args.seed
        rng = np.random.Generator(np.random.PCG64(seed))
        topo = random_tree(args.nodes, rng)
        data = emit_grid_json(topo, random_candidates(topo, args.extra_edges, rng))
    Path(args.out).write_bytes(data)
    return 0


def cmd_simulate(args) -> int:
    grid = _load_grid(args.grid)
    cfg = _config(args, (args.n_samples,))
    truth = make_scenario(cfg, grid.topology, grid.base_loads, grid.candidates, args.trial)
    s = simulate_samples(truth, args.n_samples, cfg.seed, args.trial, 0, cfg.noise_variance_ratio, cfg.noise_mode)
    st = truth.stats
    np.savez_compressed(
        args.out,
        v=s.v,
        theta=s.theta,
        columns=np.array(s.columns),
        observed=np.array(sorted(s.observed)),
        root=np.array(s.root),
        hidden=np.array(sorted(truth.hidden), dtype=int),
        var_p=st.var_p,
        var_q=st.var_q,
        cov_pq=st.cov_pq,
        mean_p=st.mean_p,
        mean_q=st.mean_q,
        candidates=np.array([(u, v, z.r, z.x) for u, v, z in truth.candidates.edges]),
    )
    return 0


def cmd_learn(args) -> int:
    with np.load(args.samples) as f:
        try:
            samples = VoltageSamples(
                f["v"], f["theta"] if "theta" in f else None, tuple(int(a) for a in f["columns"]), frozenset(int(a) for a in f["observed"]),
                int(f["root"]),
            )
            stats = InjectionStatistics(f["mean_p"], f["mean_q"], f["var_p"], f["var_q"], f["cov_pq"])
            hidden = [int(a) for a in f["hidden"]]
            candidates = CandidateEdgeSet.from_edges([(int(u), int(v), r, x) for u, v, r, x in f["candidates"]])
        except KeyError as exc:
            raise SchemaError(str(exc.args[0]), "missing array in sample file") from None
    if args.head:
        samples = samples.head(args.head)
    nodes = [samples.root] + sorted(samples.observed)
    table = empirical_phi_table(samples, nodes)
    th = Thresholds(args.tau1, args.tau2, args.tau3)
    if args.algorithm == "alg1":
        model = algorithm1(table, candidates, root=samples.root)
    else:
        learner = algorithm2 if args.algorithm == "alg2" else algorithm3
        known = stats.as_dict(sorted(samples.observed))
        model = learner(table, candidates, len(hidden), th, known_stats=known, hidden=hidden, root=samples.root)
    out = {
        "edges": [list(e) for e in model.edges],
        "hidden_stats": {str(k): list(v) for k, v in sorted(model.hidden_stats.items())},
        "node_stats": {str(k): list(v) for k, v in sorted(model.node_stats.items())},
    }
    if args.grid:
        truth = parse_grid_json(Path(args.grid).read_bytes()).topology
        out["topology_rel_error"] = topology_error(model.edges, truth.edge_set())
    text = json.dumps(out, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_campaign(args) -> int:
    grid = _load_grid(args.grid)
    cfg = _config(args, args.n_samples, args.trials)
    result = run_campaign(cfg, grid, args.algorithm, jobs=args.jobs)
    csv_text = result.to_csv(timing=args.timing)
    if args.out:
        Path(args.out).write_text(csv_text)
        if args.plot_script:
            write_plot_script(args.out, args.plot_script)
    else:
        sys.stdout.write(csv_text)
    for n, s in result.summary().items():
        print(
            f"n={n}: topology error {s['topology_mean']:.4f} +- {s['topology_std']:.4f}, "
            f"variance error {s['variance_mean']:.4f}, failed {s['failed']}",
            file=sys.stderr,
        )
    return 0


def cmd_bounds(args) -> int:
    grid = _load_grid(args.grid)
    cfg = _config(args, (1,))
    truth = make_scenario(cfg, grid.topology, grid.base_loads, grid.candidates, 0)
    b = compute_bounds(truth.topology, truth.stats, C=args.C)
    print(f"k1 {b.k1:.6g}")
    print(f"k2 {b.k2:.6g}")
    print(f"depth {b.depth}")
    print(f"n(eta={args.eta}) {b.required_samples(args.eta):.6g}  (C = {args.C})")
    return 0


def cmd_convert(args) -> int:
    g = parse_matpower_case(Path(args.input).read_text())
    Path(args.out).write_bytes(emit_grid_json(g.topology, g.candidates, g.base_loads))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridsleuth", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-grid", help="write a grid JSON file")
    g.add_argument("--nodes", type=int, default=20)
    g.add_argument("--extra-edges", type=int, default=20)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--case33", action="store_true", help="write the bundled 33-node feeder instead")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_grid)

    s = sub.add_parser("simulate", help="simulate one scenario into an .npz file")
    _add_scenario_flags(s)
    s.add_argument("--n-samples", type=int, required=True)
    s.add_argument("--trial", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    lr = sub.add_parser("learn", help="learn topology from an .npz sample file")
    lr.add_argument("--grid", help="grid JSON with the true topology; adds topology_rel_error to the output")
    lr.add_argument("--samples", required=True)
    lr.add_argument("--algorithm", choices=("alg1", "alg2", "alg3"), default="alg1")
    lr.add_argument("--head", type=int, default=None, help="use only the first N samples")
    lr.add_argument("--out", default=None)
    _add_threshold_flags(lr)
    lr.set_defaults(func=cmd_learn)

    c = sub.add_parser("campaign", help="error-vs-samples Monte-Carlo campaign")
    _add_scenario_flags(c)
    _add_threshold_flags(c)
    c.add_argument("--algorithm", choices=("alg1", "alg2", "alg3"), default="alg1")
    c.add_argument("--n-samples", type=_int_list, default=(20, 40, 60, 100, 200))
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out", default=None, help="CSV path (default: stdout)")
    c.add_argument("--plot-script", default=None, help="also write a matplotlib script for the CSV")
    c.add_argument("--timing", action="store_true", help="add a runtime_ms column (breaks bit-reproducibility)")
    c.set_defaults(func=cmd_campaign)

    b = sub.add_parser("bounds", help="separation constants of a grid")
    _add_scenario_flags(b)
    b.add_argument("--C", type=float, default=1.0, help="free constant of the sample bound")
    b.add_argument("--eta", type=float, default=0.05, help="failure probability")
    b.set_defaults(func=cmd_bounds)

    cv = sub.add_parser("convert", help="Matpower case to grid JSON")
    cv.add_argument("input")
    cv.add_argument("--out", required=True)
    cv.set_defaults(func=cmd_convert)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AlgorithmError as exc:
        print(f"learning failed: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM
    except (OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
