"""Simulated atomic broadcast and workload generation.

Total order comes from one shared append-only log: `sequence` stamps
consecutive sequence numbers, every replica reads the same prefix, so
validity, agreement, integrity and total order hold by construction.

Workloads draw operations per client from seeded generators; named
presets cover the benchmark mixes (read-only, 85/15 mixed, write-only,
and the three two-shard skew profiles).
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field, replace

from .classes import Request, RequestClasses
from .runtime import MODERATE
from .service import class_of
from . import service as svc


class BroadcastLog:
    """Append-only totally ordered request log (thread-safe)."""

    def __init__(self):
        self._entries = []
        self._lock = threading.Lock()
        self._grew = threading.Condition(self._lock)
        self._closed = False

    def append(self, request: Request) -> Request:
        with self._grew:
            stamped = request.sequenced(len(self._entries))
            self._entries.append(stamped)
            self._grew.notify_all()
            return stamped

    def close(self) -> None:
        with self._grew:
            self._closed = True
            self._grew.notify_all()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def snapshot(self) -> list:
        with self._lock:
            return list(self._entries)

    def get(self, seq: int, block: bool = False):
        """Entry at `seq`, optionally blocking until it exists or the log
        closes (returns None after close)."""
        with self._grew:
            while True:
                if seq < len(self._entries):
                    return self._entries[seq]
                if not block or self._closed:
                    return None
                self._grew.wait()

    def iter_live(self):
        """Yield entries in order, blocking for growth until closed."""
        i = 0
        while True:
            entry = self.get(i, block=True)
            if entry is None:
                return
            yield entry
            i += 1


def sequence(log: BroadcastLog, batch) -> list:
    """Append a batch of client requests, assigning consecutive global
    sequence numbers."""
    return [log.append(r) for r in batch]


@dataclass(frozen=True)
class WorkloadSpec:
    """Workload shape: operation mix, skew, cost level, client population.

    `shard_skew` distributes single-shard reads across shards (must sum
    to 1); `write_shard_skew` does the same for single-shard writes and
    defaults to `shard_skew`.  `local_fraction` is the share of requests
    touching a single shard; the rest span all shards.
    """

    name: str = "custom"
    num_shards: int = 1
    read_fraction: float = 1.0
    local_fraction: float = 1.0
    shard_skew: tuple = ()
    write_shard_skew: tuple | None = None
    cost: str = MODERATE
    clients: int = 64
    requests_per_client: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must be in [0, 1]")
        if not 0.0 <= self.local_fraction <= 1.0:
            raise ValueError("local_fraction must be in [0, 1]")
        if self.num_shards < 1:
            raise ValueError("num_shards must be >= 1")
        if self.clients < 1:
            raise ValueError("need at least one client")
        skew = self.shard_skew or tuple([1.0 / self.num_shards] * self.num_shards)
        if len(skew) != self.num_shards:
            raise ValueError("shard_skew length must match num_shards")
        if abs(sum(skew) - 1.0) > 1e-9:
            raise ValueError("shard_skew must sum to 1")
        object.__setattr__(self, "shard_skew", tuple(skew))
        if self.write_shard_skew is not None:
            wskew = tuple(self.write_shard_skew)
            if len(wskew) != self.num_shards or abs(sum(wskew) - 1.0) > 1e-9:
                raise ValueError("write_shard_skew must match num_shards and sum to 1")
            object.__setattr__(self, "write_shard_skew", wskew)

    @property
    def total_requests(self) -> int:
        return self.clients * self.requests_per_client

    def key_range(self, initial_size: int) -> int:
        return max(1, initial_size)


def _pick_shard(rng, skew) -> int:
    x = rng.random()
    acc = 0.0
    for s, p in enumerate(skew):
        acc += p
        if x < acc:
            return s
    return len(skew) - 1


class ClientStream:
    """Deterministic per-client operation stream."""

    def __init__(self, spec: WorkloadSpec, client_id: int, key_range: int):
        self.spec = spec
        self.client_id = client_id
        self.key_range = key_range
        self.rng = random.Random(spec.seed * 1_000_003 + client_id + 1)
        self.issued = 0

    def next_op(self):
        spec = self.spec
        rng = self.rng
        self.issued += 1
        is_write = rng.random() >= spec.read_fraction
        is_global = spec.num_shards > 1 and rng.random() >= spec.local_fraction
        key = rng.randrange(self.key_range)
        if is_global:
            return svc.add_all(key) if is_write else svc.contains_all(key)
        skew = (
            spec.write_shard_skew
            if is_write and spec.write_shard_skew is not None
            else spec.shard_skew
        )
        shard = _pick_shard(rng, skew) if spec.num_shards > 1 else 0
        return svc.add(shard, key) if is_write else svc.contains(shard, key)


def client_streams(spec: WorkloadSpec, initial_size: int) -> list:
    return [
        ClientStream(spec, c, spec.key_range(initial_size)) for c in range(spec.clients)
    ]


def generate_workload(
    spec: WorkloadSpec, topology: RequestClasses, initial_size: int = 1
) -> list:
    """Materialize the full request stream, clients interleaved
    round-robin; deterministic for a fixed spec."""
    streams = client_streams(spec, initial_size)
    out = []
    for i in range(spec.requests_per_client):
        for c, stream in enumerate(streams):
            op = stream.next_op()
            out.append(
                Request(client_id=c, client_seq=i, class_id=class_of(op, topology), payload=op)
            )
    return out


# -- named presets -----------------------------------------------------------

def preset(name: str, num_shards: int | None = None, **overrides) -> WorkloadSpec:
    """Benchmark workloads by name.

    read_only / mixed85 / mixed50 / write_only: single-shard mixes.
    workload1: 2 shards, 85/15 reads, 95% local balanced, 5% global.
    workload2: workload1 with local requests skewed 67/33 toward shard 1.
    workload3: workload1 with shard 1 getting 67% of local writes and 33%
        of local reads (shard 2 the reverse).
    """
    presets = {
        "read_only": dict(read_fraction=1.0),
        "mixed85": dict(read_fraction=0.85),
        "mixed50": dict(read_fraction=0.5),
        "write_only": dict(read_fraction=0.0),
        "workload1": dict(
            num_shards=2, read_fraction=0.85, local_fraction=0.95
        ),
        "workload2": dict(
            num_shards=2,
            read_fraction=0.85,
            local_fraction=0.95,
            shard_skew=(0.67, 0.33),
        ),
        "workload3": dict(
            num_shards=2,
            read_fraction=0.85,
            local_fraction=0.95,
            shard_skew=(0.33, 0.67),
            write_shard_skew=(0.67, 0.33),
        ),
    }
    if name not in presets:
        raise ValueError(f"unknown workload preset {name!r} (have {sorted(presets)})")
    fields = dict(presets[name])
    fields["name"] = name
    if num_shards is not None:
        base_shards = fields.get("num_shards", 1)
        if base_shards != 1 and num_shards != base_shards:
            raise ValueError(f"preset {name!r} is defined for {base_shards} shards")
        fields["num_shards"] = num_shards
    fields.update(overrides)
    return WorkloadSpec(**fields)


def class_weights(spec: WorkloadSpec, topology: RequestClasses, samples: int = 20000) -> list:
    """Empirical class frequencies under a spec, used as optimizer
    weights; derived from a dedicated sample so runs stay independent."""
    probe = replace(spec, clients=1, requests_per_client=samples, seed=spec.seed + 7919)
    counts = [0] * topology.nc
    stream = ClientStream(probe, 0, probe.key_range(1))
    for _ in range(samples):
        counts[class_of(stream.next_op(), topology)] += 1
    return [c / samples for c in counts]
