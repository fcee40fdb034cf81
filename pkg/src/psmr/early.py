"""Early scheduler: per-worker FIFO queues and class barriers.

One scheduler dispatches delivered requests in total order.  A request of
a sequential class goes to every thread mapped to the class; the threads
rendezvous, the one with the smallest id executes between two barrier
rounds, the others wait through both rounds.  A request of a concurrent
class goes to a single thread chosen round-robin and executes with no
synchronization.

Two interchangeable backends: `EarlySim` is a single-threaded virtual-time
model of exactly these rules (bit-deterministic); `run_replica_threads`
runs a real scheduler thread plus worker threads.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

from .optimizer import Assignment, Mode, ProblemInstance, check_feasible
from .runtime import ExecutionTrace, ReplicaResult, TraceRecord, VirtualCosts


class RoundRobinCursor:
    """Per-class index into the class's thread list; persists for the
    replica's lifetime."""

    def __init__(self, ctot: Assignment):
        self.order = [sorted(u) for u in ctot.uses]
        self.next_idx = [0] * ctot.nc

    def pick(self, class_id: int) -> int:
        order = self.order[class_id]
        i = self.next_idx[class_id]
        self.next_idx[class_id] = (i + 1) % len(order)
        return order[i]


def dispatch(req, ctot: Assignment, cursor: RoundRobinCursor) -> tuple:
    """Target worker ids for one delivered request (all mapped threads for
    Seq classes, one round-robin thread for Cnc classes)."""
    c = req.class_id
    if not 0 <= c < ctot.nc:
        raise ValueError(f"unknown class id {c}")
    if ctot.mode(c) is Mode.SEQ:
        return tuple(sorted(ctot.uses[c]))
    return (cursor.pick(c),)


def require_feasible(classes, ctot: Assignment, nt: int) -> None:
    violations = check_feasible(ProblemInstance(classes, nt), ctot)
    if violations:
        raise ValueError(
            "infeasible class-to-thread mapping: " + "; ".join(str(v) for v in violations)
        )


@dataclass
class SimStep:
    enqueued: float
    start: float
    end: float
    executor: int
    participants: tuple


class EarlySim:
    """Virtual-time model of the scheduler/worker rules.

    Requests are fed in delivery order; per-worker FIFO order and the
    barrier discipline make every completion time forward-computable.
    Rendezvous of k>1 parties costs one tick before execution and one
    after; a single-party rendezvous is free (it degenerates to direct
    execution).
    """

    def __init__(self, nt: int, ctot: Assignment, costs: VirtualCosts, replica_id: int = 0):
        self.nt = nt
        self.ctot = ctot
        self.costs = costs
        self.cursor = RoundRobinCursor(ctot)
        self.sched_clock = 0
        self.avail = [0] * nt
        self.exec_count = [0] * nt
        self.busy = [0] * nt
        self.rendezvous_count = 0
        self.trace = ExecutionTrace(
            replica_id=replica_id,
            num_workers=nt,
            scheduler="early",
            worker_enqueues=[[] for _ in range(nt)],
            worker_process=[[] for _ in range(nt)],
        )

    def step(self, req, arrival: float = 0, exec_ticks: int | None = None) -> SimStep:
        cost = self.costs.exec_ticks if exec_ticks is None else exec_ticks
        rdv = self.costs.rendezvous
        self.sched_clock = max(self.sched_clock, arrival) + self.costs.dispatch
        enq = self.sched_clock
        targets = dispatch(req, self.ctot, self.cursor)
        for w in targets:
            self.trace.worker_enqueues[w].append(req.global_seq)
            self.trace.worker_process[w].append(req.global_seq)
        executor = targets[0]
        ready = max(enq, max(self.avail[w] for w in targets))
        if len(targets) > 1:
            start = ready + rdv
            end = start + cost
            release = end + rdv
            self.rendezvous_count += 2
        else:
            start = ready
            end = start + cost
            release = end
        for w in targets:
            self.avail[w] = release
        self.busy[executor] += cost
        self.trace.records.append(
            TraceRecord(
                global_seq=req.global_seq,
                class_id=req.class_id,
                worker=executor,
                exec_index=self.exec_count[executor],
                t_start=start,
                t_end=end,
                participants=targets,
            )
        )
        self.exec_count[executor] += 1
        self.trace.delivered.append(req.global_seq)
        return SimStep(enq, start, end, executor, targets)

    @property
    def makespan(self) -> float:
        return max(self.avail + [self.sched_clock])


def num_workers(ctot: Assignment, nt: int | None = None) -> int:
    """Worker count for a mapping: explicit, or max used thread + 1."""
    if nt is not None:
        return nt
    top = -1
    for u in ctot.uses:
        if u:
            top = max(top, max(u))
    return top + 1


def run_replica_sim(
    ordered,
    ctot: Assignment,
    classes,
    service,
    costs: VirtualCosts | None = None,
    nt: int | None = None,
    replica_id: int = 0,
    validate: bool = True,
) -> ReplicaResult:
    """Single-threaded deterministic replica: identical scheduling
    semantics to the threaded backend, virtual time instead of wall time.

    Service effects are applied in virtual execution order, so the digest
    reflects what actually executed, not the delivery order.
    """
    costs = costs or VirtualCosts()
    requests = list(ordered)
    nt = num_workers(ctot, nt)
    if validate:
        require_feasible(classes, ctot, nt)
    sim = EarlySim(nt, ctot, costs, replica_id)
    for req in requests:
        sim.step(req)
    responses = _apply_in_execution_order(service, requests, sim.trace)
    makespan = sim.makespan if requests else 0
    return ReplicaResult(
        trace=sim.trace,
        digest=service.digest(),
        responses=responses,
        makespan=makespan,
        rendezvous_count=sim.rendezvous_count,
        worker_busy=[b / makespan if makespan else 0.0 for b in sim.busy],
    )


def _apply_in_execution_order(service, requests, trace) -> dict:
    by_seq = {r.global_seq: r for r in requests}
    responses = {}
    for rec in sorted(trace.records, key=lambda r: (r.t_start, r.global_seq)):
        responses[rec.global_seq] = service.apply(by_seq[rec.global_seq].payload)
    return responses


_POISON = object()


def run_replica_threads(
    ordered,
    ctot: Assignment,
    classes,
    service,
    nt: int | None = None,
    replica_id: int = 0,
    queue_capacity: int = 16384,
    validate: bool = True,
    on_complete=None,
    guard_shards: bool = True,
) -> ReplicaResult:
    """Real scheduler + worker threads.

    The calling thread acts as the scheduler (deliver, then enqueue to all
    class threads for Seq or one round-robin thread for Cnc).  Workers
    share one cyclic barrier per sequential class; the minimum-id party
    executes between two barrier rounds.  A poison message behind all work
    flushes every queue and the workers leave together through a final
    all-worker rendezvous.
    """
    nt = num_workers(ctot, nt)
    if validate:
        require_feasible(classes, ctot, nt)
    queues = [queue.Queue(maxsize=queue_capacity) for _ in range(nt)]
    barriers = {
        c: threading.Barrier(len(ctot.uses[c]))
        for c in range(ctot.nc)
        if ctot.mode(c) is Mode.SEQ
    }
    shutdown = threading.Barrier(nt)
    guard = _ShardGuard(service) if guard_shards else None

    records = [[] for _ in range(nt)]
    process_logs = [[] for _ in range(nt)]
    responses_per_worker = [{} for _ in range(nt)]
    rendezvous = [0] * nt
    busy_ns = [0] * nt

    def worker(my_id: int):
        q = queues[my_id]
        execs = 0
        while True:
            req = q.get()
            if req is _POISON:
                shutdown.wait()
                return
            process_logs[my_id].append(req.global_seq)
            c = req.class_id
            if ctot.mode(c) is Mode.SEQ:
                parties = sorted(ctot.uses[c])
                bar = barriers[c]
                if len(parties) > 1:
                    rendezvous[my_id] += 2
                if my_id == parties[0]:
                    bar.wait()
                    t0 = time.monotonic_ns()
                    resp = _execute(service, guard, req)
                    t1 = time.monotonic_ns()
                    bar.wait()
                else:
                    bar.wait()
                    bar.wait()
                    continue
            else:
                parties = [my_id]
                t0 = time.monotonic_ns()
                resp = _execute(service, guard, req)
                t1 = time.monotonic_ns()
            busy_ns[my_id] += t1 - t0
            responses_per_worker[my_id][req.global_seq] = resp
            records[my_id].append(
                TraceRecord(
                    global_seq=req.global_seq,
                    class_id=c,
                    worker=my_id,
                    exec_index=execs,
                    t_start=t0,
                    t_end=t1,
                    participants=tuple(parties),
                )
            )
            execs += 1
            if on_complete is not None:
                on_complete(req.global_seq, resp)

    threads = [threading.Thread(target=worker, args=(w,), daemon=True) for w in range(nt)]
    for t in threads:
        t.start()

    trace = ExecutionTrace(
        replica_id=replica_id,
        num_workers=nt,
        scheduler="early",
        clock="monotonic",
        worker_enqueues=[[] for _ in range(nt)],
        worker_process=process_logs,
    )
    cursor = RoundRobinCursor(ctot)
    t_begin = time.monotonic_ns()
    delivered = 0
    for req in ordered:
        targets = dispatch(req, ctot, cursor)
        for w in targets:
            trace.worker_enqueues[w].append(req.global_seq)
            queues[w].put(req)
        trace.delivered.append(req.global_seq)
        delivered += 1
    for q in queues:
        q.put(_POISON)
    for t in threads:
        t.join()
    t_finish = time.monotonic_ns()

    responses = {}
    for per_worker in responses_per_worker:
        responses.update(per_worker)
    for recs in records:
        trace.records.extend(recs)
    if len(trace.records) != delivered:
        raise RuntimeError(
            f"executed {len(trace.records)} of {delivered} delivered requests"
        )
    wall = t_finish - t_begin
    return ReplicaResult(
        trace=trace,
        digest=service.digest(),
        responses=responses,
        makespan=wall,
        rendezvous_count=sum(rendezvous),
        worker_busy=[b / wall if wall else 0.0 for b in busy_ns],
    )


def _execute(service, guard, req):
    if guard is not None:
        return guard.apply(req.payload)
    return service.apply(req.payload)


class _ShardGuard:
    """Debug assertion that the scheduling rules really serialize
    conflicting work: no two workers may touch one shard concurrently."""

    def __init__(self, service):
        self.service = service
        self.owner = {}

    def apply(self, op):
        shards = (
            range(self.service.num_shards) if op.is_global else (op.shard,)
        )
        me = threading.get_ident()
        for s in shards:
            prev = self.owner.setdefault(s, me)
            if prev != me:
                raise AssertionError(f"shard {s} accessed concurrently by two workers")
        try:
            return self.service.apply(op)
        finally:
            for s in shards:
                self.owner.pop(s, None)
    @property
    def num_shards(self):
        return self.service.num_shards
