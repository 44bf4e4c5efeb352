"""Command-line interface: generate instances, run one discovery, benchmark, summarize traces."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import ALGORITHMS, ExperimentConfig, read_csv, run_benchmark, summarize
from .bif import parse_bif, write_bif
from .generate import random_chordal_dag, random_cpts
from .graph import cpdag_of, shd, to_edge_list
from .network import joint
from .separating import TargetFamily, graph_separating_system
from .tracker import NetworkOracle, build_hypotheses, run

log = logging.getLogger("tscd")


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise SystemExit(f"error: cannot read {path}: {e}")


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise SystemExit(f"error: cannot write {path}: {e}")


def _targets(arg: str | None, cpdag):
    if arg is None or arg == "auto":
        return graph_separating_system(cpdag)
    return TargetFamily.from_json(_read(arg))


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    dag = random_chordal_dag(args.nodes, args.rho, rng)
    net = random_cpts(dag, args.card, rng)
    cpdag = cpdag_of(dag)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise SystemExit(f"error: cannot create {out}: {e}")
    _write(str(out / "net.bif"), write_bif(net))
    _write(str(out / "dag.txt"), to_edge_list(dag))
    _write(str(out / "cpdag.txt"), to_edge_list(cpdag))
    _write(str(out / "targets.json"), graph_separating_system(cpdag).to_json())
    print(f"wrote net.bif, dag.txt, cpdag.txt, targets.json to {out}")
    return 0


def cmd_run(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.bif:
        net = parse_bif(_read(args.bif))
    else:
        net = random_cpts(random_chordal_dag(args.nodes, args.rho, rng), args.card, rng)
    if args.algo == "random-baseline":
        raise SystemExit("error: 'run' supports the exact and practical trackers; use 'benchmark' for the baseline")
    dag = net.graph
    cpdag = cpdag_of(dag)
    targets = _targets(args.targets, cpdag)
    hyp = build_hypotheses(cpdag, joint(net), targets, args.algo)
    if args.export_candidates:
        payload = [json.loads(c.to_json()) for c in hyp.candidates.values()]
        _write(args.export_candidates, json.dumps(payload, indent=2))
    env = NetworkOracle(net, hyp.arms, hyp.arm_scopes)
    res = run(env, hyp, args.delta, rng, max_samples=args.max_samples)
    data = json.loads(res.to_json(trace=args.trace))
    data["shd_to_truth"] = shd(res.graph, dag)
    text = json.dumps(data, indent=2)
    if args.out:
        _write(args.out, text)
    else:
        print(text)
    if res.inconclusive:
        log.warning("inconclusive: sample cap reached before the stopping rule fired")
    return 0


def _config_from_args(args) -> ExperimentConfig:
    base = json.loads(_read(args.config)) if args.config else {}
    for key in ("nodes", "rho", "card", "delta", "algo", "trials", "seed", "max_samples", "targets", "out", "log_every", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    try:
        return ExperimentConfig(**base)
    except (TypeError, ValueError) as e:
        raise SystemExit(f"error: invalid config: {e}")


def cmd_benchmark(args) -> int:
    config = _config_from_args(args)
    text, summary = run_benchmark(config)
    if not config.out:
        sys.stdout.write(text)
    if summary["errors"]:
        log.error("%d trial(s) failed: %s", len(summary["errors"]), summary["errors"])
        return 1
    return 0


def cmd_summarize(args) -> int:
    out = {}
    for path in args.csv:
        with open(path) as fh:
            out[path] = summarize(read_csv(fh), budget=args.budget)
    text = json.dumps(out, indent=2)
    if args.out:
        _write(args.out, text)
    else:
        print(text)
    return 0


def _instance_flags(p, defaults: bool) -> None:
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--nodes", type=int, default=d(4), help="number of variables")
    p.add_argument("--rho", type=float, default=d(0.5), help="edge density in (0, 1]")
    p.add_argument("--card", type=int, default=d(2), help="states per variable")
    p.add_argument("--seed", type=int, default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tscd", description="Track-and-stop causal discovery with interventions.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random network, its DAG, CPDAG and targets")
    _instance_flags(g, True)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="one discovery run; prints a JSON result")
    _instance_flags(r, True)
    r.add_argument("--bif", help="ground-truth network in BIF format (overrides random generation)")
    r.add_argument("--delta", type=float, default=0.1)
    r.add_argument("--algo", choices=("exact", "practical"), default="practical")
    r.add_argument("--max-samples", dest="max_samples", type=int, default=10 ** 6)
    r.add_argument("--targets", help='target family JSON {"sets": [...]} (default: coloring-based system)')
    r.add_argument("--export-candidates", dest="export_candidates", help="write candidate distributions as JSON")
    r.add_argument("--trace", action="store_true", help="include the per-round trace")
    r.add_argument("--out", help="write the JSON result here instead of stdout")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("benchmark", help="batch of seeded trials; writes a CSV trace and a JSON summary")
    _instance_flags(b, False)
    b.add_argument("--delta", type=float)
    b.add_argument("--algo", choices=ALGORITHMS)
    b.add_argument("--trials", type=int)
    b.add_argument("--max-samples", dest="max_samples", type=int)
    b.add_argument("--targets", help='"auto" or a target family JSON file')
    b.add_argument("--log-every", dest="log_every", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--out", help="CSV path (summary goes to <out>.summary.json)")
    b.add_argument("--config", help="JSON config file; command-line flags override its fields")
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("summarize", help="aggregate trace CSVs (ours or external tools') into SHD bands")
    s.add_argument("csv", nargs="+")
    s.add_argument("--budget", type=int, help="sample count charged to trials that never reach SHD 0")
    s.add_argument("--out")
    s.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
