"""Request classes, conflict relations, and class-correctness checking.

A request class groups service requests that share conflict behaviour.
Classes conflict with each other (edges) and possibly with themselves
(internal conflicts, the diagonal of the conflict matrix).  A class set is
correct for a service when every pair of conflicting requests belongs to a
pair of mutually conflicting classes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

import numpy as np


class ObjectId(NamedTuple):
    """A piece of application state: (shard index, key)."""

    shard: int
    key: int


@dataclass(frozen=True)
class AccessSets:
    """Read and write sets of a request (writes are not implicitly reads)."""

    readset: frozenset = frozenset()
    writeset: frozenset = frozenset()

    @staticmethod
    def make(reads: Iterable[ObjectId] = (), writes: Iterable[ObjectId] = ()) -> "AccessSets":
        return AccessSets(frozenset(reads), frozenset(writes))


def conflicts_requests(a: AccessSets, b: AccessSets) -> bool:
    """True iff the two requests conflict: some object is written by one
    and touched (read or written) by the other."""
    return bool(
        a.readset & b.writeset
        or a.writeset & b.readset
        or a.writeset & b.writeset
    )


@dataclass(frozen=True)
class Request:
    """An ordered client operation.  `global_seq` is stamped exactly once
    by the broadcast log; -1 means not yet sequenced."""

    client_id: int
    client_seq: int
    class_id: int
    payload: object
    global_seq: int = -1

    def sequenced(self, seq: int) -> "Request":
        if self.global_seq != -1:
            raise ValueError("request already sequenced")
        return Request(self.client_id, self.client_seq, self.class_id, self.payload, seq)


class RequestClasses:
    """A class set: names, per-class weights, and a symmetric boolean
    conflict matrix whose diagonal marks internal conflicts."""

    def __init__(self, names: list, weights: list, conflicts: np.ndarray):
        names = list(names)
        if not names:
            raise ValueError("at least one class required")
        if len(set(names)) != len(names):
            raise ValueError("duplicate class names")
        weights = [float(w) for w in weights]
        if len(weights) != len(names):
            raise ValueError("one weight per class required")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        conflicts = np.asarray(conflicts, dtype=bool)
        if conflicts.shape != (len(names), len(names)):
            raise ValueError("conflict matrix shape mismatch")
        if not np.array_equal(conflicts, conflicts.T):
            raise ValueError("conflict matrix must be symmetric")
        conflicts = conflicts.copy()
        conflicts.setflags(write=False)
        self.names = names
        self.weights = weights
        self.conflicts = conflicts
        self._index = {n: i for i, n in enumerate(names)}

    @property
    def nc(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self._index[name]

    def conflict(self, i: int, j: int) -> bool:
        return bool(self.conflicts[i, j])

    def internal(self, i: int) -> bool:
        return bool(self.conflicts[i, i])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RequestClasses)
            and self.names == other.names
            and self.weights == other.weights
            and np.array_equal(self.conflicts, other.conflicts)
        )

    def __repr__(self) -> str:
        edges = sum(
            1
            for i in range(self.nc)
            for j in range(i, self.nc)
            if self.conflicts[i, j]
        )
        return f"RequestClasses({self.nc} classes, {edges} conflict edges)"

    def with_weights(self, weights: list) -> "RequestClasses":
        return RequestClasses(self.names, weights, self.conflicts)


def make_classes(names: list, edges: Iterable[tuple], weights: list | None = None) -> RequestClasses:
    """Build a class set from named conflict edges; a self-pair marks an
    internal conflict."""
    idx = {n: i for i, n in enumerate(names)}
    m = np.zeros((len(names), len(names)), dtype=bool)
    for a, b in edges:
        i, j = idx[a], idx[b]
        m[i, j] = m[j, i] = True
    if weights is None:
        weights = [1.0] * len(names)
    return RequestClasses(names, weights, m)


@dataclass(frozen=True)
class ClassViolation:
    """A conflicting request pair whose classes are not marked conflicting."""

    first: Request
    second: Request
    missing_edge: tuple

    def __str__(self) -> str:
        a, b = self.missing_edge
        return (
            f"requests ({self.first.client_id},{self.first.client_seq}) and "
            f"({self.second.client_id},{self.second.client_seq}) conflict but "
            f"classes ({a}, {b}) are not marked conflicting"
        )


def validate_classes(
    classes: RequestClasses,
    request_conflict_oracle: Callable[[Request, Request], bool],
    sample_requests: list,
) -> list:
    """Check class correctness against sampled requests.

    Returns one violation per sampled conflicting pair whose classes lack
    the corresponding conflict edge (diagonal included for same-class
    pairs).  The check is necessarily finite: it covers exactly the given
    sample, so callers should enumerate a representative request universe.
    """
    for r in sample_requests:
        if not 0 <= r.class_id < classes.nc:
            raise ValueError(f"invalid class id {r.class_id}")
    out = []
    for a, b in itertools.combinations(sample_requests, 2):
        if not request_conflict_oracle(a, b):
            continue
        if not classes.conflict(a.class_id, b.class_id):
            edge = (classes.names[a.class_id], classes.names[b.class_id])
            out.append(ClassViolation(a, b, edge))
    return out


# -- built-in topologies ------------------------------------------------

READERS_WRITERS = "readers_writers"
SHARDED_SNAPSHOT = "sharded_snapshot"
SHARDED_GLOBAL = "sharded_global"

TOPOLOGY_KINDS = (READERS_WRITERS, SHARDED_SNAPSHOT, SHARDED_GLOBAL)


def builtin_topology(kind: str, num_shards: int = 1) -> RequestClasses:
    """The three prototypical class topologies.

    readers_writers: one reader class, one writer class (single shard).
    sharded_snapshot: per-shard readers/writers plus a global snapshot
        class that conflicts only with the writers.
    sharded_global: per-shard readers/writers plus global reader and
        writer classes spanning every shard.
    """
    if num_shards < 1:
        raise ValueError("num_shards must be >= 1")
    if kind == READERS_WRITERS:
        if num_shards != 1:
            raise ValueError("readers_writers is a single-shard topology")
        return make_classes(["C_R", "C_W"], [("C_W", "C_W"), ("C_W", "C_R")])

    names = []
    for s in range(1, num_shards + 1):
        names += [f"C_R{s}", f"C_W{s}"]
    edges = []
    for s in range(1, num_shards + 1):
        edges += [(f"C_W{s}", f"C_W{s}"), (f"C_R{s}", f"C_W{s}")]

    if kind == SHARDED_SNAPSHOT:
        names.append("C_S")
        edges += [("C_S", f"C_W{s}") for s in range(1, num_shards + 1)]
        return make_classes(names, edges)

    if kind == SHARDED_GLOBAL:
        names += ["C_Rg", "C_Wg"]
        edges.append(("C_Wg", "C_Wg"))
        edges.append(("C_Rg", "C_Wg"))
        for s in range(1, num_shards + 1):
            edges += [
                ("C_Rg", f"C_W{s}"),
                ("C_Wg", f"C_W{s}"),
                ("C_Wg", f"C_R{s}"),
            ]
        return make_classes(names, edges)

    raise ValueError(f"unknown topology kind {kind!r}")


# -- topology file format -----------------------------------------------
#
#   class <name> <weight>
#   conflict <name> <name>        (self-pair = internal conflict)


class TopologyFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_topology(text: str) -> RequestClasses:
    names, weights, edges = [], [], []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "class":
            if len(parts) != 3:
                raise TopologyFormatError(lineno, "expected: class <name> <weight>")
            name = parts[1]
            if name in seen:
                raise TopologyFormatError(lineno, f"duplicate class {name!r}")
            try:
                w = float(parts[2])
            except ValueError:
                raise TopologyFormatError(lineno, f"bad weight {parts[2]!r}") from None
            seen.add(name)
            names.append(name)
            weights.append(w)
        elif parts[0] == "conflict":
            if len(parts) != 3:
                raise TopologyFormatError(lineno, "expected: conflict <name> <name>")
            for n in parts[1:]:
                if n not in seen:
                    raise TopologyFormatError(lineno, f"unknown class {n!r}")
            edges.append((parts[1], parts[2]))
        elif parts[0] == "threads":
            continue  # instance files append a threads line; ignored here
        else:
            raise TopologyFormatError(lineno, f"unknown directive {parts[0]!r}")
    if not names:
        raise TopologyFormatError(0, "no classes declared")
    return make_classes(names, edges, weights)


def serialize_topology(classes: RequestClasses) -> str:
    lines = [f"class {n} {w:g}" for n, w in zip(classes.names, classes.weights)]
    for i in range(classes.nc):
        for j in range(i, classes.nc):
            if classes.conflicts[i, j]:
                lines.append(f"conflict {classes.names[i]} {classes.names[j]}")
    return "\n".join(lines) + "\n"
