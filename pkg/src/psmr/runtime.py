"""Shared runtime pieces: virtual cost model, execution traces, dumps.

Both schedulers emit the same trace shape so one set of verifiers covers
them.  A trace records, per executed request: sequence number, class,
executing worker, that worker's dense execution index, start/end times
(virtual ticks in sim mode, monotonic nanoseconds in threads mode), and
the set of workers that took part (the rendezvous parties for sequential
classes, just the executor otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field

LIGHT, MODERATE, HEAVY = "light", "moderate", "heavy"
COST_LEVELS = (LIGHT, MODERATE, HEAVY)

# virtual execution ticks per cost level, mirroring list sizes 1/1k/10k
EXEC_TICKS = {LIGHT: 1, MODERATE: 10, HEAVY: 100}

# list sizes backing each cost level in threads mode
LIST_SIZES = {LIGHT: 1, MODERATE: 1000, HEAVY: 10000}


@dataclass(frozen=True)
class VirtualCosts:
    """Tick costs driving the deterministic simulator.

    exec_ticks: per-request execution time.
    dispatch: scheduler work per dispatched request (early scheduler).
    rendezvous: per barrier round when more than one party synchronizes.
    graph_op: one insert/take/remove on the shared dependency graph;
        these serialize on the graph lock (late scheduler).
    graph_compare: extra insert cost per node already in the graph: one
        pairwise conflict check is about as much work as a light
        operation, so big graphs cost real time to maintain.
    """

    exec_ticks: int = EXEC_TICKS[MODERATE]
    dispatch: int = 1
    rendezvous: int = 1
    graph_op: int = 1
    graph_compare: int = 1

    @staticmethod
    def for_level(level: str) -> "VirtualCosts":
        return VirtualCosts(exec_ticks=EXEC_TICKS[level])


@dataclass(frozen=True)
class TraceRecord:
    global_seq: int
    class_id: int
    worker: int
    exec_index: int
    t_start: float
    t_end: float
    participants: tuple


@dataclass
class ExecutionTrace:
    """Per-replica observation of one run."""

    replica_id: int
    num_workers: int
    scheduler: str  # "early" | "late"
    clock: str = "virtual"  # "virtual" (sim ticks) | "monotonic" (wall ns)
    records: list = field(default_factory=list)
    # scheduler-side hand-off order per worker (sequence numbers)
    worker_enqueues: list = field(default_factory=list)
    # worker-side processing order per worker, incl. rendezvous waits
    worker_process: list = field(default_factory=list)
    delivered: list = field(default_factory=list)

    def by_seq(self) -> dict:
        return {r.global_seq: r for r in self.records}

    def sorted_records(self) -> list:
        return sorted(self.records, key=lambda r: r.global_seq)


@dataclass
class ReplicaResult:
    trace: ExecutionTrace
    digest: str
    responses: dict  # global_seq -> response value
    makespan: float
    rendezvous_count: int = 0
    worker_busy: list = field(default_factory=list)
    graph_blocked_count: int = 0
    graph_max_nodes: int = 0


# -- trace dump format -----------------------------------------------------
#
# One tab-separated record per executed request:
#   global_seq  class  worker  exec_index  t_start  t_end
# plus an optional leading comment header naming scheduler and workers.


def dump_trace(trace: ExecutionTrace, classes, path) -> None:
    with open(path, "w") as f:
        f.write(
            f"# psmr-trace v1 scheduler={trace.scheduler} "
            f"workers={trace.num_workers} replica={trace.replica_id}\n"
        )
        for r in trace.sorted_records():
            f.write(
                f"{r.global_seq}\t{classes.names[r.class_id]}\t{r.worker}\t"
                f"{r.exec_index}\t{r.t_start:g}\t{r.t_end:g}\n"
            )


def load_trace(path, classes) -> ExecutionTrace:
    scheduler, workers, replica = "early", 0, 0
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("scheduler="):
                        scheduler = tok.split("=", 1)[1]
                    elif tok.startswith("workers="):
                        workers = int(tok.split("=", 1)[1])
                    elif tok.startswith("replica="):
                        replica = int(tok.split("=", 1)[1])
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 tab-separated fields")
            seq, cname, worker, idx, t0, t1 = parts
            records.append(
                TraceRecord(
                    global_seq=int(seq),
                    class_id=classes.index(cname),
                    worker=int(worker),
                    exec_index=int(idx),
                    t_start=float(t0),
                    t_end=float(t1),
                    participants=(int(worker),),
                )
            )
    workers = workers or (max((r.worker for r in records), default=-1) + 1)
    trace = ExecutionTrace(replica_id=replica, num_workers=workers, scheduler=scheduler)
    trace.records = records
    trace.delivered = sorted(r.global_seq for r in records)
    return trace
