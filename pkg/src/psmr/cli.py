"""Benchmark command line: optimize, run, verify, compare, sweep.

`run` executes one experiment and writes one CSV row (schema:
scenario,scheduler,workers,shards,throughput,lat_p50,lat_p99,seed);
`compare` runs early vs late on the same workload and seed and prints
their makespan ratio; `sweep` varies the worker count in powers of two.
Sim mode is the CI-stable default; all randomness flows from one 64-bit
seed (flag or PSMR_SEED).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .broadcast import WorkloadSpec, preset
from .classes import RequestClasses, builtin_topology, parse_topology
from .harness import run_experiment
from .optimizer import (
    ProblemInstance,
    parse_instance,
    serialize_assignment,
    solve,
)
from .runtime import COST_LEVELS, MODERATE, VirtualCosts, dump_trace, load_trace
from .verify import check_conflict_order, check_fifo

CSV_HEADER = "scenario,scheduler,workers,shards,throughput,lat_p50,lat_p99,seed"
COMPARE_HEADER = "scenario,workers,shards,early_makespan,late_makespan,ratio,seed"

TOPOLOGY_ALIASES = {
    "rw": "readers_writers",
    "readers_writers": "readers_writers",
    "snapshot": "sharded_snapshot",
    "sharded_snapshot": "sharded_snapshot",
    "global": "sharded_global",
    "sharded_global": "sharded_global",
}


def _default_seed() -> int:
    return int(os.environ.get("PSMR_SEED", "0"))


def _load_topology(arg: str, num_shards: int) -> RequestClasses:
    if arg in TOPOLOGY_ALIASES:
        return builtin_topology(TOPOLOGY_ALIASES[arg], num_shards)
    return parse_topology(Path(arg).read_text())


def _load_workload(args) -> WorkloadSpec:
    name = args.workload
    overrides = {}
    if args.requests is not None:
        clients = args.clients
        per_client = max(1, args.requests // clients) if args.requests else 0
        overrides["clients"] = clients
        overrides["requests_per_client"] = per_client
    else:
        overrides["clients"] = args.clients
        overrides["requests_per_client"] = args.requests_per_client
    overrides["seed"] = args.seed
    overrides["cost"] = args.cost
    if Path(name).is_file():
        fields = json.loads(Path(name).read_text())
        fields.update(overrides)
        return WorkloadSpec(**fields)
    shards = args.shards if args.shards > 1 else None
    return preset(name, num_shards=shards, **overrides)


def _scenario(args) -> str:
    return f"{args.topology}/{args.workload}"


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _csv_row(args, label: str, scheduler: str, m) -> str:
    return ",".join(
        [
            label,
            scheduler,
            str(args.workers),
            str(args.shards),
            _fmt(m.throughput),
            _fmt(m.latency_p50),
            _fmt(m.latency_p99),
            str(args.seed),
        ]
    )


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _run_one(args, scheduler: str, spec=None):
    spec = spec or _load_workload(args)
    topology = _load_topology(args.topology, spec.num_shards)
    costs = VirtualCosts.for_level(spec.cost)
    return run_experiment(
        spec,
        topology,
        scheduler=scheduler,
        nt=args.workers,
        replicas=args.replicas,
        mode=args.mode,
        graph_cap=args.graph_cap,
        costs=costs if args.mode == "sim" else None,
        weighted_ctot=args.weighted,
        shard_granular=args.shard_granular,
    )


def _verify_result(result) -> list:
    """The always-on checks `run` applies before reporting."""
    from .harness import verify_experiment

    return verify_experiment(result)


def cmd_optimize(args) -> int:
    inst = parse_instance(Path(args.instance).read_text())
    report = solve(inst, node_budget=args.budget_nodes, seed=args.seed)
    text = serialize_assignment(inst.classes, report.assignment)
    _write(args.output, text)
    print(
        f"cost={report.cost:.6g} optimal={report.optimal} "
        f"nodes={report.nodes_explored} time={report.wall_time:.3f}s",
        file=sys.stderr,
    )
    return 0


def cmd_run(args) -> int:
    spec = _load_workload(args)
    if spec.requests_per_client == 0:
        _write(args.output, CSV_HEADER + "\n")
        return 0
    result = _run_one(args, args.scheduler, spec)
    problems = _verify_result(result)
    rows = [CSV_HEADER, _csv_row(args, _scenario(args), args.scheduler, result.metrics)]
    _write(args.output, "\n".join(rows) + "\n")
    if args.dump_traces:
        outdir = Path(args.dump_traces)
        outdir.mkdir(parents=True, exist_ok=True)
        for trace in result.traces:
            dump_trace(trace, result.topology, outdir / f"replica{trace.replica_id}.trace")
    for p in problems:
        print(f"verification: {p}", file=sys.stderr)
    return 1 if problems else 0


def cmd_verify(args) -> int:
    topology = _load_topology(args.topology, args.shards)
    trace = load_trace(args.trace, topology)
    violations = list(check_conflict_order(trace, topology))
    if trace.scheduler == "early":
        violations += list(check_fifo(trace))
    for v in violations:
        print(str(v))
    print(f"{len(violations)} violation(s) in {args.trace}")
    return 1 if violations else 0


def cmd_compare(args) -> int:
    spec = _load_workload(args)
    early_r = _run_one(args, "early", spec)
    late_r = _run_one(args, "late", spec)
    ratio = (
        late_r.metrics.makespan / early_r.metrics.makespan
        if early_r.metrics.makespan
        else float("inf")
    )
    row = ",".join(
        [
            _scenario(args),
            str(args.workers),
            str(args.shards),
            _fmt(early_r.metrics.makespan),
            _fmt(late_r.metrics.makespan),
            _fmt(ratio),
            str(args.seed),
        ]
    )
    _write(args.output, COMPARE_HEADER + "\n" + row + "\n")
    print(f"late/early makespan ratio: {ratio:.3f}", file=sys.stderr)
    problems = _verify_result(early_r) + _verify_result(late_r)
    for p in problems:
        print(f"verification: {p}", file=sys.stderr)
    return 1 if problems else 0


def cmd_sweep(args) -> int:
    rows = [CSV_HEADER]
    problems = []
    w = 1
    while w <= args.max_workers:
        args.workers = w
        result = _run_one(args, args.scheduler)
        rows.append(_csv_row(args, _scenario(args), args.scheduler, result.metrics))
        problems += _verify_result(result)
        w *= 2
    _write(args.output, "\n".join(rows) + "\n")
    for p in problems:
        print(f"verification: {p}", file=sys.stderr)
    return 1 if problems else 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheduler", choices=["early", "late"], default="early")
    p.add_argument("--workers", type=int, default=4, help="worker threads per replica")
    p.add_argument("--shards", type=int, default=1, help="state partitions")
    p.add_argument("--topology", default="rw", help="kind (rw|snapshot|global) or file")
    p.add_argument("--workload", default="mixed85", help="preset name or JSON file")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--mode", choices=["sim", "threads"], default="sim")
    p.add_argument("--graph-cap", type=int, default=None, help="dependency graph capacity")
    p.add_argument(
        "--shard-granular",
        action="store_true",
        help="late scheduler detects conflicts per shard instead of per key",
    )
    p.add_argument("--cost", choices=list(COST_LEVELS), default=MODERATE)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--clients", type=int, default=64)
    p.add_argument("--requests", type=int, default=None, help="total request budget")
    p.add_argument("--requests-per-client", type=int, default=100)
    p.add_argument("--weighted", action="store_true", help="weight classes by workload mix")
    p.add_argument("-o", "--output", default=None, help="CSV output path (default stdout)")
    p.add_argument("--dump-traces", default=None, help="directory for trace dumps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psmr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="solve a class-to-thread instance file")
    p_opt.add_argument("--instance", required=True)
    p_opt.add_argument("--budget-nodes", type=int, default=2_000_000)
    p_opt.add_argument("--seed", type=int, default=_default_seed())
    p_opt.add_argument("-o", "--output", default=None)
    p_opt.set_defaults(func=cmd_optimize)

    p_run = sub.add_parser("run", help="run one experiment, emit metrics CSV")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="check a trace dump against a topology")
    p_ver.add_argument("--trace", required=True)
    p_ver.add_argument("--topology", required=True)
    p_ver.add_argument("--shards", type=int, default=1)
    p_ver.set_defaults(func=cmd_verify)

    p_cmp = sub.add_parser("compare", help="early vs late on the same workload and seed")
    _add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_swp = sub.add_parser("sweep", help="vary worker count in powers of two")
    _add_common(p_swp)
    p_swp.add_argument("--max-workers", type=int, default=8)
    p_swp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
