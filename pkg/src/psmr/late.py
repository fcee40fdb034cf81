"""Late scheduler baseline: a shared dependency graph of pending requests.

The scheduler inserts delivered requests into a bounded graph, adding an
edge from each new request to every pending or executing request it
conflicts with.  Workers repeatedly take a request with no unresolved
dependencies (lowest sequence number first), execute it, and remove it
from the graph.  Scheduler and workers serialize on a single lock around
the graph; that contention is the phenomenon this baseline exhibits.
"""

from __future__ import annotations

import heapq
import threading
import time

from .runtime import ExecutionTrace, ReplicaResult, TraceRecord, VirtualCosts

WRITE_ONLY_CAP = 50  # graph size giving late scheduling its best write-only performance
DEFAULT_CAP = 150


class DependencyGraph:
    """Thread-safe bounded dependency graph (single mutual-exclusion
    region, two wait conditions: space available, ready node available)."""

    def __init__(self, capacity: int = DEFAULT_CAP):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._lock = threading.Lock()
        self._space = threading.Condition(self._lock)
        self._ready_cv = threading.Condition(self._lock)
        self._nodes = {}  # seq -> [request, unresolved, dependents, executing]
        self._ready = []  # heap of ready seqs
        self._closed = False
        self.blocked_count = 0
        self.max_nodes = 0

    def __len__(self):
        with self._lock:
            return len(self._nodes)

    def insert(self, req, conflict_oracle) -> int:
        """Add a delivered request; blocks while the graph is full."""
        with self._space:
            if len(self._nodes) >= self.capacity:
                self.blocked_count += 1
                while len(self._nodes) >= self.capacity:
                    self._space.wait()
            unresolved = 0
            node = [req, 0, [], False]
            for seq, other in self._nodes.items():
                if conflict_oracle(req, other[0]):
                    unresolved += 1
                    other[2].append(req.global_seq)
            node[1] = unresolved
            self._nodes[req.global_seq] = node
            self.max_nodes = max(self.max_nodes, len(self._nodes))
            if unresolved == 0:
                heapq.heappush(self._ready, req.global_seq)
                self._ready_cv.notify()
            return req.global_seq

    def take_ready(self):
        """Return the lowest-sequence request with no unresolved
        dependencies, marking it executing; None once closed and empty."""
        with self._ready_cv:
            while True:
                while self._ready:
                    seq = heapq.heappop(self._ready)
                    node = self._nodes.get(seq)
                    if node is not None and not node[3] and node[1] == 0:
                        node[3] = True
                        return node[0]
                if self._closed and not self._nodes:
                    return None
                self._ready_cv.wait()

    def complete(self, req) -> None:
        """Remove an executed request and release its dependents."""
        with self._lock:
            node = self._nodes.pop(req.global_seq)
            for dep_seq in node[2]:
                dep = self._nodes.get(dep_seq)
                if dep is None:
                    continue
                dep[1] -= 1
                if dep[1] == 0 and not dep[3]:
                    heapq.heappush(self._ready, dep_seq)
            self._ready_cv.notify_all()
            self._space.notify()

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._ready_cv.notify_all()


def run_replica_threads(
    ordered,
    classes,
    service,
    nt: int,
    conflict_oracle,
    capacity: int = DEFAULT_CAP,
    replica_id: int = 0,
    on_complete=None,
) -> ReplicaResult:
    """Scheduler (calling thread) + worker pool over one shared graph."""
    graph = DependencyGraph(capacity)
    records = [[] for _ in range(nt)]
    process_logs = [[] for _ in range(nt)]
    responses_per_worker = [{} for _ in range(nt)]
    busy_ns = [0] * nt

    def worker(my_id: int):
        execs = 0
        while True:
            req = graph.take_ready()
            if req is None:
                return
            process_logs[my_id].append(req.global_seq)
            t0 = time.monotonic_ns()
            resp = service.apply(req.payload)
            t1 = time.monotonic_ns()
            graph.complete(req)
            busy_ns[my_id] += t1 - t0
            responses_per_worker[my_id][req.global_seq] = resp
            records[my_id].append(
                TraceRecord(
                    global_seq=req.global_seq,
                    class_id=req.class_id,
                    worker=my_id,
                    exec_index=execs,
                    t_start=t0,
                    t_end=t1,
                    participants=(my_id,),
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
        scheduler="late",
        clock="monotonic",
        worker_enqueues=process_logs,
        worker_process=process_logs,
    )
    t_begin = time.monotonic_ns()
    delivered = 0
    for req in ordered:
        graph.insert(req, conflict_oracle)
        trace.delivered.append(req.global_seq)
        delivered += 1
    graph.close()
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
        worker_busy=[b / wall if wall else 0.0 for b in busy_ns],
        graph_blocked_count=graph.blocked_count,
        graph_max_nodes=graph.max_nodes,
    )


# -- deterministic virtual-time model ---------------------------------------

_COMPLETE, _INSERT, _TAKE = 0, 1, 2


class LateSim:
    """Event-driven virtual-time model of the dependency-graph scheduler.

    Every graph operation (insert, take, remove) serializes on the graph
    lock; lock grants follow event-time order with deterministic
    tie-breaking.  Workers execute off-lock.  Requests are submitted with
    `submit` (closed-loop callers submit more from `on_complete`) and the
    loop runs until no events remain.
    """

    def __init__(
        self,
        nt: int,
        service,
        conflict_oracle,
        capacity: int = DEFAULT_CAP,
        costs: VirtualCosts | None = None,
        replica_id: int = 0,
        on_complete=None,
    ):
        self.nt = nt
        self.service = service
        self.oracle = conflict_oracle
        self.capacity = capacity
        self.costs = costs or VirtualCosts()
        self.on_complete = on_complete
        self.log = []  # (request, arrival time)
        self.next_insert = 0
        self.sched_free = 0
        self.sched_blocked = False
        self.lock_free = 0
        self.nodes = {}  # seq -> [request, unresolved, dependents, executing]
        self.ready = []
        self.idle = set(range(nt))
        self.events = []
        self.exec_count = [0] * nt
        self.busy = [0] * nt
        self.responses = {}
        self.blocked_count = 0
        self.max_nodes = 0
        self.completed = 0
        self.max_time = 0
        self.trace = ExecutionTrace(
            replica_id=replica_id,
            num_workers=nt,
            scheduler="late",
            worker_enqueues=[[] for _ in range(nt)],
            worker_process=[[] for _ in range(nt)],
        )

    def submit(self, req, arrival: float = 0) -> None:
        self.log.append((req, arrival))
        if not self.sched_blocked and self.next_insert == len(self.log) - 1:
            self._push(max(self.sched_free, arrival), _INSERT, req.global_seq)

    def _push(self, t, prio, key):
        heapq.heappush(self.events, (t, prio, key))

    def run(self) -> None:
        while self.events:
            t, prio, key = heapq.heappop(self.events)
            if prio == _COMPLETE:
                self._do_complete(t, key)
            elif prio == _INSERT:
                self._do_insert(t)
            else:
                self._do_take(t, key)
        if self.nodes:
            raise RuntimeError("virtual event loop stalled with pending requests")

    def _wake_idle(self, t) -> None:
        for w in sorted(self.idle):
            self._push(t, _TAKE, w)

    def _do_insert(self, t) -> None:
        if self.next_insert >= len(self.log):
            return
        req, arrival = self.log[self.next_insert]
        if len(self.nodes) >= self.capacity:
            self.blocked_count += 1
            self.sched_blocked = True
            return
        start = max(t, self.lock_free)
        op_cost = self.costs.graph_op + self.costs.graph_compare * len(self.nodes)
        done = start + op_cost
        self.lock_free = done
        self.max_time = max(self.max_time, done)
        unresolved = 0
        node = [req, 0, [], False]
        for seq, other in self.nodes.items():
            if self.oracle(req, other[0]):
                unresolved += 1
                other[2].append(req.global_seq)
        node[1] = unresolved
        self.nodes[req.global_seq] = node
        self.max_nodes = max(self.max_nodes, len(self.nodes))
        self.trace.delivered.append(req.global_seq)
        if unresolved == 0:
            heapq.heappush(self.ready, req.global_seq)
            self._wake_idle(done)
        self.sched_free = done
        self.next_insert += 1
        if self.next_insert < len(self.log):
            arrival = self.log[self.next_insert][1]
            self._push(max(done, arrival), _INSERT, self.next_insert)

    def _do_take(self, t, w) -> None:
        if w not in self.idle:
            return
        seq = None
        while self.ready:
            cand = heapq.heappop(self.ready)
            node = self.nodes.get(cand)
            if node is not None and node[1] == 0 and not node[3]:
                seq = cand
                break
        if seq is None:
            return
        node = self.nodes[seq]
        node[3] = True
        self.idle.discard(w)
        start = max(t, self.lock_free)
        done = start + self.costs.graph_op
        self.lock_free = done
        req = node[0]
        exec_end = done + self.costs.exec_ticks
        self.max_time = max(self.max_time, exec_end)
        self.responses[req.global_seq] = self.service.apply(req.payload)
        self.busy[w] += self.costs.exec_ticks
        self.trace.worker_enqueues[w].append(seq)
        self.trace.worker_process[w].append(seq)
        self.trace.records.append(
            TraceRecord(
                global_seq=seq,
                class_id=req.class_id,
                worker=w,
                exec_index=self.exec_count[w],
                t_start=done,
                t_end=exec_end,
                participants=(w,),
            )
        )
        self.exec_count[w] += 1
        self._push(exec_end, _COMPLETE, (w, seq))

    def _do_complete(self, t, key) -> None:
        w, seq = key
        start = max(t, self.lock_free)
        done = start + self.costs.graph_op
        self.lock_free = done
        self.max_time = max(self.max_time, done)
        node = self.nodes.pop(seq)
        for dep_seq in node[2]:
            dep = self.nodes.get(dep_seq)
            if dep is None:
                continue
            dep[1] -= 1
            if dep[1] == 0 and not dep[3]:
                heapq.heappush(self.ready, dep_seq)
                self._wake_idle(done)
        self.completed += 1
        self.idle.add(w)
        self._push(done, _TAKE, w)
        if self.sched_blocked and len(self.nodes) < self.capacity:
            self.sched_blocked = False
            self._push(max(self.sched_free, done), _INSERT, seq)
        if self.on_complete is not None:
            self.on_complete(seq, t, self.responses[seq])

    @property
    def makespan(self) -> float:
        return self.max_time


def run_replica_sim(
    ordered,
    classes,
    service,
    nt: int,
    conflict_oracle,
    capacity: int = DEFAULT_CAP,
    costs: VirtualCosts | None = None,
    replica_id: int = 0,
) -> ReplicaResult:
    """Deterministic single-threaded replica over a fixed delivery order."""
    sim = LateSim(
        nt, service, conflict_oracle, capacity=capacity, costs=costs, replica_id=replica_id
    )
    requests = list(ordered)
    for req in requests:
        sim.submit(req)
    sim.run()
    makespan = sim.makespan if requests else 0
    return ReplicaResult(
        trace=sim.trace,
        digest=service.digest(),
        responses=sim.responses,
        makespan=makespan,
        worker_busy=[b / makespan if makespan else 0.0 for b in sim.busy],
        graph_blocked_count=sim.blocked_count,
        graph_max_nodes=sim.max_nodes,
    )
