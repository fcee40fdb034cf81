"""Sharded linked-list application plus a synthetic fixed-cost service.

The list service keeps one integer list per shard.  Single-shard reads and
writes (`contains`, `add`) touch one (shard, key) object; the multi-shard
variants (`containsAll`, `addAll`) touch that key in every shard.  The
service supplies the three things schedulers need: execution, declared
access sets (conflict oracle), and class assignment under a topology.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .classes import (
    READERS_WRITERS,
    SHARDED_GLOBAL,
    SHARDED_SNAPSHOT,
    AccessSets,
    ObjectId,
    RequestClasses,
)

CONTAINS = "contains"
ADD = "add"
CONTAINS_ALL = "containsAll"
ADD_ALL = "addAll"

GLOBAL_SHARD = -1  # shard field of multi-shard operations


@dataclass(frozen=True)
class ServiceOp:
    kind: str
    shard: int
    key: int

    def __post_init__(self):
        if self.kind in (CONTAINS, ADD):
            if self.shard < 0:
                raise ValueError(f"{self.kind} needs a shard")
        elif self.kind in (CONTAINS_ALL, ADD_ALL):
            if self.shard != GLOBAL_SHARD:
                raise ValueError(f"{self.kind} is a multi-shard operation")
        else:
            raise ValueError(f"unknown operation kind {self.kind!r}")

    @property
    def is_write(self) -> bool:
        return self.kind in (ADD, ADD_ALL)

    @property
    def is_global(self) -> bool:
        return self.shard == GLOBAL_SHARD


def contains(shard: int, key: int) -> ServiceOp:
    return ServiceOp(CONTAINS, shard, key)


def add(shard: int, key: int) -> ServiceOp:
    return ServiceOp(ADD, shard, key)


def contains_all(key: int) -> ServiceOp:
    return ServiceOp(CONTAINS_ALL, GLOBAL_SHARD, key)


def add_all(key: int) -> ServiceOp:
    return ServiceOp(ADD_ALL, GLOBAL_SHARD, key)


class ShardedList:
    """One list of integers per shard.

    Lists start with `initial_size` sentinel entries disjoint from the
    workload key range [0, initial_size), so adds of fresh keys mutate
    state while the initial scan cost matches the configured size.
    """

    def __init__(self, num_shards: int, initial_size: int = 1):
        if num_shards < 1:
            raise ValueError("num_shards must be >= 1")
        if initial_size < 1:
            raise ValueError("initial_size must be >= 1")
        self.num_shards = num_shards
        self.initial_size = initial_size
        self.shards = [list(range(-initial_size, 0)) for _ in range(num_shards)]

    def copy(self) -> "ShardedList":
        out = ShardedList.__new__(ShardedList)
        out.num_shards = self.num_shards
        out.initial_size = self.initial_size
        out.shards = [list(s) for s in self.shards]
        return out

    def _contains(self, shard: int, key: int) -> bool:
        return key in self.shards[shard]

    def _add(self, shard: int, key: int) -> bool:
        if key in self.shards[shard]:
            return False
        self.shards[shard].append(key)
        return True

    def apply(self, op: ServiceOp) -> bool:
        """Execute one operation and return its response.

        Multi-shard responses AND the per-shard results together.
        """
        if op.kind == CONTAINS:
            return self._contains(op.shard, op.key)
        if op.kind == ADD:
            return self._add(op.shard, op.key)
        if op.kind == CONTAINS_ALL:
            return all(self._contains(s, op.key) for s in range(self.num_shards))
        if op.kind == ADD_ALL:
            results = [self._add(s, op.key) for s in range(self.num_shards)]
            return all(results)
        raise ValueError(f"unknown operation kind {op.kind!r}")

    def digest(self) -> str:
        """Hash of the service state, shard order sensitive.

        Per-shard contents are canonicalized (sorted) before hashing:
        adds of distinct keys commute under the declared access sets, so
        schedulers may legitimately interleave them differently while
        converging on the same membership state.
        """
        h = hashlib.sha256()
        for shard in self.shards:
            h.update(b"|")
            for v in sorted(shard):
                h.update(v.to_bytes(8, "little", signed=True))
        return h.hexdigest()


class SyntheticService:
    """Fixed-cost stand-in: operations only bump per-shard counters.

    Reuses the same operation shapes and class topologies as the list
    service, isolating scheduler overhead from execution work.
    """

    def __init__(self, num_shards: int, initial_size: int = 1):
        self.num_shards = num_shards
        self.initial_size = initial_size
        self.counters = [0] * num_shards

    def copy(self) -> "SyntheticService":
        out = SyntheticService(self.num_shards, self.initial_size)
        out.counters = list(self.counters)
        return out

    def apply(self, op: ServiceOp) -> bool:
        if op.is_global:
            for s in range(self.num_shards):
                self.counters[s] += 1 if op.is_write else 0
        elif op.is_write:
            self.counters[op.shard] += 1
        return True

    def digest(self) -> str:
        h = hashlib.sha256()
        for v in self.counters:
            h.update(v.to_bytes(8, "little", signed=True))
        return h.hexdigest()


def access_sets(op: ServiceOp, num_shards: int) -> AccessSets:
    """Declared read/write sets; key-granular, per operation kind."""
    if op.kind == CONTAINS:
        return AccessSets.make(reads=[ObjectId(op.shard, op.key)])
    if op.kind == ADD:
        obj = ObjectId(op.shard, op.key)
        return AccessSets.make(reads=[obj], writes=[obj])
    objs = [ObjectId(s, op.key) for s in range(num_shards)]
    if op.kind == CONTAINS_ALL:
        return AccessSets.make(reads=objs)
    return AccessSets.make(reads=objs, writes=objs)


def shard_access_sets(op: ServiceOp, num_shards: int) -> AccessSets:
    """Shard-granular coarsening of the access sets (cheaper conflict
    checks for the dependency-graph scheduler, at the price of more
    false conflicts)."""
    shards = range(num_shards) if op.is_global else [op.shard]
    objs = [ObjectId(s, 0) for s in shards]
    if op.is_write:
        return AccessSets.make(reads=objs, writes=objs)
    return AccessSets.make(reads=objs)


def class_of(op: ServiceOp, topology: RequestClasses) -> int:
    """Map an operation to its request class under a built-in topology."""
    names = topology.names

    def idx(name: str) -> int:
        try:
            return topology.index(name)
        except KeyError:
            raise ValueError(f"topology has no class {name!r} for op {op}") from None

    if "C_R" in names:  # readers/writers, single shard
        if op.shard not in (0, GLOBAL_SHARD):
            raise ValueError(f"single-shard topology cannot classify {op}")
        return idx("C_W") if op.is_write else idx("C_R")
    if op.is_global:
        if op.kind == ADD_ALL:
            if "C_Wg" not in names:
                raise ValueError(f"topology has no multi-shard write class for {op}")
            return idx("C_Wg")
        if "C_Rg" in names:
            return idx("C_Rg")
        if "C_S" in names:
            return idx("C_S")
        raise ValueError(f"topology has no multi-shard read class for {op}")
    name = f"C_W{op.shard + 1}" if op.is_write else f"C_R{op.shard + 1}"
    return idx(name)


def topology_for(kind: str, num_shards: int) -> RequestClasses:
    if kind == READERS_WRITERS and num_shards != 1:
        raise ValueError("readers_writers topology requires one shard")
    from .classes import builtin_topology

    return builtin_topology(kind, num_shards)


def conflict_oracle(num_shards: int, shard_granular: bool = False):
    """Request-level conflict oracle over operation payloads."""
    from .classes import conflicts_requests

    sets = shard_access_sets if shard_granular else access_sets

    def oracle(a, b) -> bool:
        return conflicts_requests(sets(a.payload, num_shards), sets(b.payload, num_shards))

    return oracle


def make_service(kind: str, num_shards: int, initial_size: int):
    if kind == "list":
        return ShardedList(num_shards, initial_size)
    if kind == "synthetic":
        return SyntheticService(num_shards, initial_size)
    raise ValueError(f"unknown service kind {kind!r}")


def sequential_run(service, requests) -> tuple:
    """Reference execution: apply every request in delivery order.

    Returns (responses keyed by global_seq, final digest); the oracle all
    scheduler executions must match.
    """
    responses = {}
    for req in requests:
        responses[req.global_seq] = service.apply(req.payload)
    return responses, service.digest()
