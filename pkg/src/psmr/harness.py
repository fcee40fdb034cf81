"""Experiment harness: closed-loop clients over a shared broadcast log.

Replica 0 serves a population of closed-loop clients (each issues its
next request when the previous response arrives); the resulting totally
ordered log is then replayed by the remaining replicas.  Works for both
schedulers in both modes; sim mode is bit-deterministic for a fixed seed.
"""

from __future__ import annotations

import heapq
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import early, late
from .broadcast import BroadcastLog, ClientStream, WorkloadSpec, class_weights, client_streams
from .classes import Request, RequestClasses, builtin_topology
from .optimizer import Assignment, ProblemInstance, solve
from .runtime import LIST_SIZES, ReplicaResult, VirtualCosts
from .service import class_of, conflict_oracle, make_service, sequential_run
from .verify import HistOp

SIM_WINDOW_TICKS = 1000
THREADS_WINDOW_NS = 1_000_000_000


@dataclass
class Metrics:
    """Run statistics; window counts always sum to the completed total."""

    completed: int = 0
    issued: int = 0
    makespan: float = 0.0
    throughput: float = 0.0
    window_size: float = SIM_WINDOW_TICKS
    windows: list = field(default_factory=list)
    latency_p50: float = 0.0
    latency_p95: float = 0.0
    latency_p99: float = 0.0
    class_latency: dict = field(default_factory=dict)
    worker_busy: list = field(default_factory=list)
    rendezvous_count: int = 0
    graph_blocked_count: int = 0
    graph_max_nodes: int = 0


def _build_metrics(
    completions: list,
    latencies: dict,
    class_names: list,
    makespan: float,
    window: float,
    result: ReplicaResult,
    issued: int,
) -> Metrics:
    m = Metrics(window_size=window)
    m.completed = len(completions)
    m.issued = issued
    m.makespan = makespan
    m.throughput = m.completed / makespan if makespan else 0.0
    if completions:
        n_windows = int(max(completions) // window) + 1
        counts = [0] * n_windows
        for t in completions:
            counts[int(t // window)] += 1
        m.windows = counts
    all_lat = [v for lat in latencies.values() for v in lat]
    if all_lat:
        m.latency_p50, m.latency_p95, m.latency_p99 = (
            float(x) for x in np.percentile(all_lat, [50, 95, 99])
        )
    for cid, lat in sorted(latencies.items()):
        if lat:
            p50, p95, p99 = (float(x) for x in np.percentile(lat, [50, 95, 99]))
            m.class_latency[class_names[cid]] = {"p50": p50, "p95": p95, "p99": p99}
    m.worker_busy = result.worker_busy
    m.rendezvous_count = result.rendezvous_count
    m.graph_blocked_count = result.graph_blocked_count
    m.graph_max_nodes = result.graph_max_nodes
    return m


@dataclass
class ExperimentResult:
    spec: WorkloadSpec
    topology: RequestClasses
    scheduler: str
    mode: str
    nt: int
    ctot: Assignment | None
    log: list
    replicas: list  # ReplicaResult per replica
    histories: list  # per-client HistOp lists (replica 0's responses)
    metrics: Metrics
    service_kind: str = "list"
    shard_granular: bool = False

    @property
    def digests(self) -> list:
        return [r.digest for r in self.replicas]

    @property
    def traces(self) -> list:
        return [r.trace for r in self.replicas]


def default_ctot(
    topology: RequestClasses,
    nt: int,
    spec: WorkloadSpec | None = None,
    weighted: bool = False,
    node_budget: int = 500_000,
) -> Assignment:
    """Class-to-thread mapping via the optimizer (weights from the
    workload mix when `weighted`)."""
    classes = topology
    if weighted and spec is not None:
        classes = topology.with_weights(class_weights(spec, topology))
    return solve(ProblemInstance(classes, nt), node_budget=node_budget).assignment


def _graph_capacity(spec: WorkloadSpec, explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    return late.WRITE_ONLY_CAP if spec.read_fraction == 0.0 else late.DEFAULT_CAP


def run_experiment(
    spec: WorkloadSpec,
    topology: RequestClasses | str | None = None,
    scheduler: str = "early",
    nt: int = 4,
    replicas: int = 1,
    mode: str = "sim",
    ctot: Assignment | None = None,
    graph_cap: int | None = None,
    costs: VirtualCosts | None = None,
    service_kind: str = "list",
    weighted_ctot: bool = False,
    shard_granular: bool = False,
) -> ExperimentResult:
    """Run one experiment: replica 0 drives closed-loop clients, further
    replicas replay the log; returns digests, traces and metrics."""
    if scheduler not in ("early", "late"):
        raise ValueError(f"unknown scheduler {scheduler!r}")
    if mode not in ("sim", "threads"):
        raise ValueError(f"unknown mode {mode!r}")
    if replicas < 1:
        raise ValueError("need at least one replica")
    if topology is None:
        topology = "sharded_global" if spec.num_shards > 1 else "readers_writers"
    if isinstance(topology, str):
        topology = builtin_topology(topology, spec.num_shards)
    costs = costs or VirtualCosts.for_level(spec.cost)
    initial_size = LIST_SIZES[spec.cost]
    if scheduler == "early" and ctot is None:
        ctot = default_ctot(topology, nt, spec, weighted=weighted_ctot)
    cap = _graph_capacity(spec, graph_cap)
    oracle = conflict_oracle(spec.num_shards, shard_granular)

    if mode == "sim":
        runner = _SimExperiment(
            spec, topology, scheduler, nt, ctot, cap, costs, service_kind,
            initial_size, oracle,
        )
    else:
        runner = _ThreadsExperiment(
            spec, topology, scheduler, nt, ctot, cap, service_kind, initial_size, oracle
        )
    log, leader, completions, issue_times = runner.run_leader()

    results = [leader]
    for rid in range(1, replicas):
        svc = make_service(service_kind, spec.num_shards, initial_size)
        if mode == "sim":
            if scheduler == "early":
                rep = early.run_replica_sim(
                    log, ctot, topology, svc, costs=costs, nt=nt, replica_id=rid
                )
            else:
                rep = late.run_replica_sim(
                    log, topology, svc, nt, oracle, capacity=cap, costs=costs, replica_id=rid
                )
        else:
            if scheduler == "early":
                rep = early.run_replica_threads(
                    log, ctot, topology, svc, nt=nt, replica_id=rid
                )
            else:
                rep = late.run_replica_threads(
                    log, topology, svc, nt, oracle, capacity=cap, replica_id=rid
                )
        results.append(rep)

    lat_by_class = {}
    for req in log:
        if req.global_seq in issue_times:
            lat = completions[req.global_seq] - issue_times[req.global_seq]
            lat_by_class.setdefault(req.class_id, []).append(lat)
    window = SIM_WINDOW_TICKS if mode == "sim" else THREADS_WINDOW_NS
    metrics = _build_metrics(
        completions=[completions[r.global_seq] for r in log if r.global_seq in completions],
        latencies=lat_by_class,
        class_names=topology.names,
        makespan=leader.makespan,
        window=window,
        result=leader,
        issued=len(log),
    )
    if metrics.issued != metrics.completed:
        raise RuntimeError(
            f"closed-loop accounting broken: issued {metrics.issued}, "
            f"completed {metrics.completed}"
        )

    histories = _histories(spec, log, issue_times, completions, leader.responses)
    return ExperimentResult(
        spec=spec,
        topology=topology,
        scheduler=scheduler,
        mode=mode,
        nt=nt,
        ctot=ctot,
        log=log,
        replicas=results,
        histories=histories,
        metrics=metrics,
        service_kind=service_kind,
        shard_granular=shard_granular,
    )


def verify_experiment(result: ExperimentResult) -> list:
    """The standard post-run checks: replica convergence, agreement with
    the sequential oracle (digest and responses), conflict order at the
    granularity the scheduler promises (class level for early, access-set
    level for late), and per-worker FIFO consistency."""
    from .verify import (
        check_conflict_order,
        check_conflict_order_requests,
        check_convergence,
        check_fifo,
    )

    problems = []
    if not check_convergence(result.digests):
        problems.append("replica digests diverge")
    svc = make_service(
        result.service_kind, result.spec.num_shards, LIST_SIZES[result.spec.cost]
    )
    responses, digest = sequential_run(svc, result.log)
    if result.digests and result.digests[0] != digest:
        problems.append("digest differs from sequential execution")
    for rep in result.replicas:
        if rep.responses != responses:
            problems.append(
                f"replica {rep.trace.replica_id} responses differ from sequential"
            )
    for trace in result.traces:
        if result.scheduler == "early":
            violations = check_conflict_order(trace, result.topology)
        else:
            violations = check_conflict_order_requests(
                trace, result.log, result.spec.num_shards, result.shard_granular
            )
        for v in violations:
            problems.append(f"replica {trace.replica_id}: {v}")
        for v in check_fifo(trace):
            problems.append(f"replica {trace.replica_id}: {v}")
    return problems


def _histories(spec, log, issue_times, completions, responses) -> list:
    per_client = [[] for _ in range(spec.clients)]
    for req in log:
        seq = req.global_seq
        per_client[req.client_id].append(
            HistOp(
                client=req.client_id,
                invoke=issue_times[seq],
                response=completions[seq],
                op=req.payload,
                result=responses[seq],
                seq=seq,
            )
        )
    return per_client


class _SimExperiment:
    def __init__(
        self, spec, topology, scheduler, nt, ctot, cap, costs, service_kind,
        initial_size, oracle,
    ):
        self.spec = spec
        self.topology = topology
        self.scheduler = scheduler
        self.nt = nt
        self.ctot = ctot
        self.cap = cap
        self.costs = costs
        self.service = make_service(service_kind, spec.num_shards, initial_size)
        self.initial_size = initial_size
        self.oracle = oracle

    def run_leader(self):
        spec = self.spec
        streams = client_streams(spec, self.initial_size)
        log = []
        issue_times = {}
        completions = {}

        def make_request(c: int) -> Request | None:
            stream = streams[c]
            if stream.issued >= spec.requests_per_client:
                return None
            op = stream.next_op()
            req = Request(
                client_id=c,
                client_seq=stream.issued - 1,
                class_id=class_of(op, self.topology),
                payload=op,
            ).sequenced(len(log))
            log.append(req)
            return req

        if self.scheduler == "early":
            sim = early.EarlySim(self.nt, self.ctot, self.costs)
            heap = [(0, c) for c in range(spec.clients)]
            while heap:
                t, c = heapq.heappop(heap)
                req = make_request(c)
                if req is None:
                    continue
                step = sim.step(req, arrival=t)
                issue_times[req.global_seq] = t
                completions[req.global_seq] = step.end
                heapq.heappush(heap, (step.end, c))
            responses = early._apply_in_execution_order(self.service, log, sim.trace)
            makespan = sim.makespan if log else 0
            leader = ReplicaResult(
                trace=sim.trace,
                digest=self.service.digest(),
                responses=responses,
                makespan=makespan,
                rendezvous_count=sim.rendezvous_count,
                worker_busy=[b / makespan if makespan else 0.0 for b in sim.busy],
            )
            return log, leader, completions, issue_times

        client_of = {}

        def on_complete(seq, end_t, _resp):
            completions[seq] = end_t
            issue(client_of[seq], end_t)

        sim = late.LateSim(
            self.nt, self.service, self.oracle, capacity=self.cap,
            costs=self.costs, on_complete=on_complete,
        )

        def issue(c: int, t) -> None:
            req = make_request(c)
            if req is None:
                return
            client_of[req.global_seq] = c
            issue_times[req.global_seq] = t
            sim.submit(req, t)

        for c in range(spec.clients):
            issue(c, 0)
        sim.run()
        makespan = sim.makespan if log else 0
        leader = ReplicaResult(
            trace=sim.trace,
            digest=self.service.digest(),
            responses=sim.responses,
            makespan=makespan,
            worker_busy=[b / makespan if makespan else 0.0 for b in sim.busy],
            graph_blocked_count=sim.blocked_count,
            graph_max_nodes=sim.max_nodes,
        )
        return log, leader, completions, issue_times

class _ThreadsExperiment:
    def __init__(
        self, spec, topology, scheduler, nt, ctot, cap, service_kind, initial_size, oracle
    ):
        self.spec = spec
        self.topology = topology
        self.scheduler = scheduler
        self.nt = nt
        self.ctot = ctot
        self.cap = cap
        self.service = make_service(service_kind, spec.num_shards, initial_size)
        self.initial_size = initial_size
        self.oracle = oracle

    def run_leader(self):
        spec = self.spec
        streams = client_streams(spec, self.initial_size)
        shared_log = BroadcastLog()
        done_lock = threading.Condition()
        done = {}  # seq -> (completion ns, response)
        issue_times = {}
        completions = {}

        def on_complete(seq, resp):
            with done_lock:
                done[seq] = (time.monotonic_ns(), resp)
                done_lock.notify_all()

        def client(c: int):
            stream = streams[c]
            for i in range(spec.requests_per_client):
                op = stream.next_op()
                req = Request(
                    client_id=c,
                    client_seq=i,
                    class_id=class_of(op, self.topology),
                    payload=op,
                )
                t_invoke = time.monotonic_ns()
                stamped = shared_log.append(req)
                with done_lock:
                    done_lock.wait_for(lambda: stamped.global_seq in done)
                    t_done, _ = done[stamped.global_seq]
                issue_times[stamped.global_seq] = t_invoke
                completions[stamped.global_seq] = t_done

        clients = [
            threading.Thread(target=client, args=(c,), daemon=True)
            for c in range(spec.clients)
        ]

        holder = {}

        def replica():
            if self.scheduler == "early":
                holder["result"] = early.run_replica_threads(
                    shared_log.iter_live(), self.ctot, self.topology, self.service,
                    nt=self.nt, on_complete=on_complete,
                )
            else:
                holder["result"] = late.run_replica_threads(
                    shared_log.iter_live(), self.topology, self.service, self.nt,
                    self.oracle, capacity=self.cap, on_complete=on_complete,
                )

        rep_thread = threading.Thread(target=replica, daemon=True)
        rep_thread.start()
        for t in clients:
            t.start()
        for t in clients:
            t.join()
        shared_log.close()
        rep_thread.join()
        leader = holder["result"]
        log = shared_log.snapshot()
        return log, leader, completions, issue_times
