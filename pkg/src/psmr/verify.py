"""Executable correctness checks over traces and client histories.

Three cheap trace checks (conflict order, convergence, FIFO) plus a
bounded linearizability decision for small histories.  Together they
mechanize the correctness argument: conflicting requests execute in
delivery order on every replica, replicas converge, and sampled windows
of the client history admit a legal sequential witness.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .classes import RequestClasses
from .runtime import ExecutionTrace


@dataclass(frozen=True)
class OrderViolation:
    earlier_seq: int
    later_seq: int
    detail: str

    def __str__(self) -> str:
        return f"requests {self.earlier_seq} -> {self.later_seq}: {self.detail}"


@dataclass(frozen=True)
class FifoViolation:
    worker: int
    seq_before: int
    seq_after: int

    def __str__(self) -> str:
        return (
            f"worker {self.worker} executed {self.seq_after} before "
            f"{self.seq_before} against its hand-off order"
        )


def check_conflict_order(trace: ExecutionTrace, conflicts) -> list:
    """Every conflicting pair must execute in delivery order.

    `conflicts` is either a RequestClasses (class-level oracle, checked
    pairwise per conflicting class pair with a linear scan) or a callable
    over two trace records (checked over all record pairs).

    In sim mode the trace timestamps are exact, so the check is
    end(earlier) <= start(later).  Threads-mode timestamps come from
    per-core clocks, so there the check uses worker-local processing
    positions: some common worker must process the pair in order.
    """
    if isinstance(conflicts, RequestClasses):
        return _check_conflict_order_classes(trace, conflicts)
    return _check_conflict_order_generic(trace, conflicts)


def _ordered_ok(trace, a, b, positions):
    """True iff record a (earlier seq) is ordered before b."""
    if trace.scheduler == "early" and positions is not None:
        common = set(a.participants) & set(b.participants)
        if not common:
            return False
        return all(positions[w][a.global_seq] < positions[w][b.global_seq] for w in common)
    return a.t_end <= b.t_start


def _worker_positions(trace):
    """Per-worker processing positions, used instead of raw timestamps for
    early threads-mode traces (clock skew between cores is not a
    correctness signal; queue positions and rendezvous edges are)."""
    if trace.clock != "monotonic" or trace.scheduler != "early":
        return None
    if not trace.worker_process:
        return None
    return [{seq: i for i, seq in enumerate(log)} for log in trace.worker_process]


def _check_conflict_order_classes(trace, classes) -> list:
    by_class = {}
    for rec in trace.sorted_records():
        by_class.setdefault(rec.class_id, []).append(rec)
    positions = _worker_positions(trace)
    out = []
    for ci in by_class:
        for cj in by_class:
            if cj < ci or not classes.conflict(ci, cj):
                continue
            if ci == cj:
                out.extend(_scan_same_class(trace, by_class[ci], positions))
            else:
                out.extend(
                    _scan_cross_class(trace, by_class[ci], by_class[cj], positions)
                )
    return out


def _scan_same_class(trace, recs, positions) -> list:
    """Order check within an internally conflicting class: every pair
    conflicts, so one pass with a running latest-end frontier suffices
    (and, for worker-position traces, adjacent-pair order plus per-worker
    FIFO transitivity covers all pairs)."""
    out = []
    if positions is not None:
        for a, b in zip(recs, recs[1:]):
            if not _ordered_ok(trace, a, b, positions):
                out.append(
                    OrderViolation(
                        a.global_seq,
                        b.global_seq,
                        "no common worker processed the conflicting pair in order",
                    )
                )
        return out
    frontier = None
    for rec in recs:
        if frontier is not None and frontier.t_end > rec.t_start:
            out.append(
                OrderViolation(
                    frontier.global_seq,
                    rec.global_seq,
                    f"executed [{rec.t_start},{rec.t_end}] before earlier request "
                    f"finished at {frontier.t_end}",
                )
            )
        if frontier is None or rec.t_end > frontier.t_end:
            frontier = rec
    return out


def _scan_cross_class(trace, recs_a, recs_b, positions) -> list:
    """Order check between two conflicting classes: only cross pairs are
    constrained (same-class pairs may overlap freely)."""
    out = []
    if positions is not None:
        for a in recs_a:
            for b in recs_b:
                lo, hi = (a, b) if a.global_seq < b.global_seq else (b, a)
                if not _ordered_ok(trace, lo, hi, positions):
                    out.append(
                        OrderViolation(
                            lo.global_seq,
                            hi.global_seq,
                            "no common worker processed the conflicting pair in order",
                        )
                    )
        return out
    merged = sorted(recs_a + recs_b, key=lambda r: r.global_seq)
    cls_a = recs_a[0].class_id
    frontier = {True: None, False: None}  # latest-end record per side
    for rec in merged:
        side = rec.class_id == cls_a
        opposite = frontier[not side]
        if opposite is not None and opposite.t_end > rec.t_start:
            out.append(
                OrderViolation(
                    opposite.global_seq,
                    rec.global_seq,
                    f"executed [{rec.t_start},{rec.t_end}] before earlier "
                    f"conflicting request finished at {opposite.t_end}",
                )
            )
        if frontier[side] is None or rec.t_end > frontier[side].t_end:
            frontier[side] = rec
    return out


def _check_conflict_order_generic(trace, oracle) -> list:
    recs = trace.sorted_records()
    positions = _worker_positions(trace)
    out = []
    for a, b in itertools.combinations(recs, 2):
        if not oracle(a, b):
            continue
        if not _ordered_ok(trace, a, b, positions):
            out.append(
                OrderViolation(a.global_seq, b.global_seq, "conflicting pair out of order")
            )
    return out


def check_conflict_order_requests(
    trace: ExecutionTrace, requests, num_shards: int, shard_granular: bool = False
) -> list:
    """Request-level conflict-order check via declared access sets.

    One pass per touched object: a writer must start after every earlier
    request touching the object ended; a reader must start after every
    earlier writer of the object ended.  This is the right granularity
    for the dependency-graph scheduler, which lets same-class but
    non-conflicting requests overlap.
    """
    from .service import access_sets, shard_access_sets

    sets_fn = shard_access_sets if shard_granular else access_sets
    by_seq = {r.global_seq: r for r in requests}
    out = []
    seen_pairs = set()
    # per object: latest-end record overall and among writers
    latest_any = {}
    latest_writer = {}
    for rec in trace.sorted_records():
        req = by_seq[rec.global_seq]
        acc = sets_fn(req.payload, num_shards)
        for obj in acc.readset | acc.writeset:
            writes = obj in acc.writeset
            blocker = latest_any.get(obj) if writes else latest_writer.get(obj)
            if blocker is not None and blocker.t_end > rec.t_start:
                pair = (blocker.global_seq, rec.global_seq)
                if pair not in seen_pairs:
                    seen_pairs.add(pair)
                    out.append(
                        OrderViolation(
                            pair[0],
                            pair[1],
                            f"executed [{rec.t_start},{rec.t_end}] before earlier "
                            f"conflicting request finished at {blocker.t_end}",
                        )
                    )
            prev = latest_any.get(obj)
            if prev is None or rec.t_end > prev.t_end:
                latest_any[obj] = rec
            if writes:
                prevw = latest_writer.get(obj)
                if prevw is None or rec.t_end > prevw.t_end:
                    latest_writer[obj] = rec
    return out


def check_convergence(digests: list) -> bool:
    """True iff all replica digests agree."""
    return len(set(digests)) <= 1


def check_fifo(trace: ExecutionTrace) -> list:
    """Per worker, executed requests must follow that worker's hand-off
    order (the scheduler's enqueue order for the early runtime, the graph
    take order for the late runtime)."""
    out = []
    by_worker = {}
    for rec in trace.records:
        by_worker.setdefault(rec.worker, []).append(rec)
    for w, recs in by_worker.items():
        recs.sort(key=lambda r: r.exec_index)
        if trace.worker_enqueues:
            pos = {seq: i for i, seq in enumerate(trace.worker_enqueues[w])}
            keys = [pos[r.global_seq] for r in recs]
        else:
            keys = [r.global_seq for r in recs]
        for i in range(1, len(recs)):
            if keys[i] < keys[i - 1]:
                out.append(FifoViolation(w, recs[i - 1].global_seq, recs[i].global_seq))
    return out


# -- bounded linearizability -------------------------------------------------

MAX_LINEARIZABLE_OPS = 10


@dataclass(frozen=True)
class HistOp:
    """One completed client operation."""

    client: int
    invoke: float
    response: float
    op: object
    result: object
    seq: int = -1


class SequentialSpec:
    """Replay adapter the checker drives: apply ops, undo on backtrack."""

    def apply(self, op):  # -> expected result
        raise NotImplementedError

    def undo(self):
        raise NotImplementedError


class ListSpec(SequentialSpec):
    """Sharded-list semantics over a base state plus an overlay, so a
    prefix state can be shared across many checks without copying."""

    def __init__(self, base_members):
        self.base = base_members  # per-shard set of present keys (not mutated)
        self.overlay = [set() for _ in base_members]
        self.journal = []

    def _has(self, shard, key):
        return key in self.base[shard] or key in self.overlay[shard]

    def _add(self, shard, key):
        if self._has(shard, key):
            return False
        self.overlay[shard].add(key)
        self.journal[-1].append((shard, key))
        return True

    def apply(self, op):
        self.journal.append([])
        kind = op.kind
        if kind == "contains":
            return self._has(op.shard, op.key)
        if kind == "add":
            return self._add(op.shard, op.key)
        if kind == "containsAll":
            return all(self._has(s, op.key) for s in range(len(self.base)))
        if kind == "addAll":
            results = [self._add(s, op.key) for s in range(len(self.base))]
            return all(results)
        raise ValueError(f"unknown op kind {kind!r}")

    def undo(self):
        for shard, key in self.journal.pop():
            self.overlay[shard].discard(key)


def list_spec_from_service(service) -> ListSpec:
    return ListSpec([set(shard) for shard in service.shards])


def sample_window_checks(
    log,
    histories,
    num_shards: int,
    initial_size: int = 1,
    samples: int = 1000,
    seed: int = 0,
) -> int:
    """Linearizability spot checks over sampled sub-histories.

    Takes contiguous delivery-order windows of 2..10 operations, replays
    the log up to each window to obtain the prefix state, and runs the
    exhaustive witness search on the window's client history.  Returns
    the number of windows WITHOUT a witness (0 on a correct run).

    Windows are closed under delivery order, so on a correct run the
    delivery order itself is a witness: closed-loop clients issue after
    their previous response, hence the real-time order never contradicts
    it, and responses match the sequential replay.
    """
    import random

    from .service import ShardedList

    by_seq = {}
    for hist in histories:
        for h in hist:
            by_seq[h.seq] = h
    n = len(log)
    if n == 0:
        return 0
    rng = random.Random(seed)
    points = sorted(
        (rng.randrange(0, n), rng.randint(2, MAX_LINEARIZABLE_OPS)) for _ in range(samples)
    )
    service = ShardedList(num_shards, initial_size)
    # membership sets shared with the overlay adapter; never mutated by it
    members = [set(shard) for shard in service.shards]
    failures = 0
    applied = 0

    def apply_upto(k):
        nonlocal applied
        while applied < k:
            op = log[applied].payload
            if op.kind in ("add", "addAll"):
                shards = (
                    range(num_shards) if op.shard < 0 else (op.shard,)
                )
                for s in shards:
                    members[s].add(op.key)
            applied += 1

    for start, size in points:
        size = min(size, n - start)
        if size < 1:
            continue
        apply_upto(start)
        window = [by_seq[s] for s in range(start, start + size)]
        if not check_linearizable_small(window, ListSpec(members)):
            failures += 1
    return failures


def check_linearizable_small(history: list, spec: SequentialSpec) -> bool:
    """Exhaustive search for a sequential witness of a small history.

    A witness is a permutation that respects real-time precedence
    (operation a precedes b when a's response time is strictly before
    b's invoke time) and replays every recorded result against the
    sequential specification.
    """
    if len(history) > MAX_LINEARIZABLE_OPS:
        raise ValueError(
            f"history of {len(history)} ops exceeds the {MAX_LINEARIZABLE_OPS}-op bound"
        )
    ops = sorted(history, key=lambda h: (h.invoke, h.response))
    n = len(ops)
    if n == 0:
        return True
    done = [False] * n

    def dfs(remaining: int) -> bool:
        if remaining == 0:
            return True
        for i in range(n):
            if done[i]:
                continue
            # real-time: nothing pending may have finished before i began
            blocked = any(
                not done[j] and ops[j].response < ops[i].invoke for j in range(n) if j != i
            )
            if blocked:
                continue
            expected = spec.apply(ops[i].op)
            if expected == ops[i].result:
                done[i] = True
                if dfs(remaining - 1):
                    return True
                done[i] = False
            spec.undo()
        return False

    return dfs(n)
