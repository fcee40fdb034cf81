"""Class-to-thread mapping optimizer.

Finds, for every request class, a synchronization mode (Seq or Cnc) and a
set of worker threads such that the five mapping rules hold:

  R.1  every class uses at least one thread;
  R.2  a class with internal conflicts is sequential;
  R.3  of two conflicting classes at least one is sequential;
  R.4  for a conflicting (Seq, Cnc) pair the concurrent class's threads
       are contained in the sequential class's threads;
  R.5  two conflicting sequential classes share at least one thread.

Among feasible mappings the solver minimizes

  O.1a  + sum over Seq classes of |threads| * weight-share (of Seq total)
  O.1b  - sum over Cnc classes of |threads|
  O.2   + sum over Cnc classes of |weight-share - |threads|/nt|
  O.3   + sum over non-conflicting Seq pairs of |shared threads| * nt * nc

O.1a penalizes sequential thread usage (a weighted average, so shifting
threads between sequential classes is nearly neutral), O.1b rewards every
thread a concurrent class can use, O.2 steers concurrent threads toward
the classes' weight shares, and O.3's large multiplier makes accidental
synchronization between independent sequential classes dominate every
other concern.

`solve` is an exact depth-first branch-and-bound (thread-relabeling
symmetry broken by searching multisets of per-thread class signatures)
with a node budget and a seeded local-search fallback; `brute_force` is an
independent exhaustive oracle for small instances.
"""

from __future__ import annotations

import enum
import itertools
import time
from dataclasses import dataclass

import numpy as np

from .classes import RequestClasses, TopologyFormatError, parse_topology, serialize_topology

COST_TOL = 1e-9  # absolute tolerance when ranking floating-point costs
ZERO_WEIGHT_EPS = 1e-6  # stand-in weight for zero-weight classes


class Mode(enum.Enum):
    SEQ = "Seq"
    CNC = "Cnc"


@dataclass(frozen=True)
class ProblemInstance:
    classes: RequestClasses
    nt: int

    def __post_init__(self):
        if self.nt < 1:
            raise ValueError("need at least one worker thread")

    @property
    def nc(self) -> int:
        return self.classes.nc


class Assignment:
    """Per-class mode and thread set; the CtoT mapping."""

    def __init__(self, modes: list, uses: list):
        if len(modes) != len(uses):
            raise ValueError("modes/uses length mismatch")
        self.modes = [Mode(m) if not isinstance(m, Mode) else m for m in modes]
        self.uses = [frozenset(int(t) for t in u) for u in uses]

    @property
    def nc(self) -> int:
        return len(self.modes)

    def mode(self, c: int) -> Mode:
        return self.modes[c]

    def threads(self, c: int) -> frozenset:
        return self.uses[c]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Assignment)
            and self.modes == other.modes
            and self.uses == other.uses
        )

    def __repr__(self) -> str:
        parts = [
            f"{i}:{m.value}{sorted(u)}" for i, (m, u) in enumerate(zip(self.modes, self.uses))
        ]
        return "Assignment(" + ", ".join(parts) + ")"

    def encode(self, nt: int) -> tuple:
        """(Seq bitvector, row-major uses bits); the deterministic tie-break key."""
        seq_bits = tuple(m is Mode.SEQ for m in self.modes)
        uses_bits = tuple(t in u for u in self.uses for t in range(nt))
        return seq_bits, uses_bits

    @staticmethod
    def all_sequential(nc: int, nt: int) -> "Assignment":
        """The always-feasible fallback: every class Seq on every thread."""
        return Assignment([Mode.SEQ] * nc, [frozenset(range(nt))] * nc)


@dataclass(frozen=True)
class RuleViolation:
    rule: str
    classes: tuple
    detail: str

    def __str__(self) -> str:
        return f"{self.rule} violated by {'/'.join(self.classes)}: {self.detail}"


def check_feasible(inst: ProblemInstance, a: Assignment) -> list:
    """All R.1-R.5 violations of `a` for `inst` (empty list = feasible)."""
    cls = inst.classes
    if a.nc != cls.nc:
        raise ValueError("assignment does not match instance dimensions")
    out = []
    for c in range(cls.nc):
        name = cls.names[c]
        if not a.uses[c]:
            out.append(RuleViolation("R.1", (name,), "no worker thread assigned"))
        bad = [t for t in a.uses[c] if not 0 <= t < inst.nt]
        if bad:
            raise ValueError(f"thread ids {bad} out of range for nt={inst.nt}")
        if cls.internal(c) and a.mode(c) is not Mode.SEQ:
            out.append(RuleViolation("R.2", (name,), "internally conflicting class must be Seq"))
    for c1, c2 in itertools.combinations(range(cls.nc), 2):
        if not cls.conflict(c1, c2):
            continue
        n1, n2 = cls.names[c1], cls.names[c2]
        m1, m2 = a.mode(c1), a.mode(c2)
        if m1 is Mode.CNC and m2 is Mode.CNC:
            out.append(RuleViolation("R.3", (n1, n2), "conflicting classes cannot both be Cnc"))
            continue
        if m1 is not m2:
            seq, cnc = (c1, c2) if m1 is Mode.SEQ else (c2, c1)
            if not a.uses[cnc] <= a.uses[seq]:
                out.append(
                    RuleViolation(
                        "R.4",
                        (cls.names[seq], cls.names[cnc]),
                        "Cnc threads not contained in conflicting Seq class",
                    )
                )
        elif not a.uses[c1] & a.uses[c2]:
            out.append(RuleViolation("R.5", (n1, n2), "conflicting Seq classes share no thread"))
    return out


def _effective_weights(classes: RequestClasses) -> list:
    return [w if w > 0 else ZERO_WEIGHT_EPS for w in classes.weights]


def cost(inst: ProblemInstance, a: Assignment) -> float:
    """Objective value O.1a + O.1b + O.2 + O.3 (feasibility not required).

    A mode group with no classes contributes nothing (its normalizing
    weight total would be zero); zero class weights are bumped to a tiny
    epsilon so shares stay defined.
    """
    cls = inst.classes
    if a.nc != cls.nc:
        raise ValueError("assignment does not match instance dimensions")
    w = _effective_weights(cls)
    nt, nc = inst.nt, cls.nc
    seq = [c for c in range(nc) if a.mode(c) is Mode.SEQ]
    cnc = [c for c in range(nc) if a.mode(c) is Mode.CNC]
    ws = sum(w[c] for c in seq)
    wc = sum(w[c] for c in cnc)
    total = 0.0
    if ws > 0:
        total += sum(len(a.uses[c]) * w[c] / ws for c in seq)
    total -= sum(len(a.uses[c]) for c in cnc)
    if wc > 0:
        total += sum(abs(w[c] / wc - len(a.uses[c]) / nt) for c in cnc)
    for c1, c2 in itertools.combinations(seq, 2):
        if not cls.conflict(c1, c2):
            total += len(a.uses[c1] & a.uses[c2]) * nt * nc
    return total


@dataclass
class SolveReport:
    assignment: Assignment
    cost: float
    optimal: bool
    nodes_explored: int
    wall_time: float


# -- exhaustive oracle ----------------------------------------------------

MAX_BRUTE_BITS = 24


def brute_force(inst: ProblemInstance) -> SolveReport:
    """Exhaustively enumerate every (Seq bitvector, uses bitmatrix)
    candidate, keep the feasible minimum-cost one.

    Deliberately independent of `solve`: feasibility and cost are
    re-derived here in vectorized form over the whole enumeration.
    Ties are broken by the lexicographically smallest encoding.
    """
    nc, nt = inst.nc, inst.nt
    bits = nc * nt + nc
    if bits > MAX_BRUTE_BITS:
        raise ValueError(f"instance too large for brute force ({bits} bits > {MAX_BRUTE_BITS})")
    t0 = time.perf_counter()
    cls = inst.classes
    w = np.array(_effective_weights(cls))
    conf = np.asarray(cls.conflicts)
    diag = conf.diagonal()

    # all nc-tuples of per-class thread masks (0 excluded: R.1)
    masks = np.array(
        list(itertools.product(range(1, 2**nt), repeat=nc)), dtype=np.int64
    )  # (M, nc)
    popcnt = np.array([bin(m).count("1") for m in range(2**nt)])
    sizes = popcnt[masks]  # (M, nc)

    # row-major uses bits as an integer, thread 0 of class 0 most significant
    uses_key = np.zeros(len(masks), dtype=np.int64)
    for c in range(nc):
        for t in range(nt):
            bit = (masks[:, c] >> t) & 1
            uses_key = (uses_key << 1) | bit

    best = None  # (cost, total encoding key, seq tuple, mask row)
    nodes = 0
    for seq_bits in itertools.product((False, True), repeat=nc):
        seq = np.array(seq_bits)
        if np.any(diag & ~seq):  # R.2
            continue
        pair_i, pair_j = np.triu_indices(nc, k=1)
        conf_pairs = conf[pair_i, pair_j]
        if np.any(conf_pairs & ~seq[pair_i] & ~seq[pair_j]):  # R.3
            continue
        nodes += len(masks)
        ok = np.ones(len(masks), dtype=bool)
        for i, j in zip(pair_i[conf_pairs], pair_j[conf_pairs]):
            mi, mj = masks[:, i], masks[:, j]
            if seq[i] and seq[j]:
                ok &= (mi & mj) != 0  # R.5
            else:
                s, c = (i, j) if seq[i] else (j, i)
                ok &= (masks[:, c] & ~masks[:, s]) == 0  # R.4
        if not ok.any():
            continue
        ws = float(w[seq].sum())
        wc = float(w[~seq].sum())
        costs = np.zeros(ok.sum())
        sz = sizes[ok]
        if ws > 0:
            costs += (sz[:, seq] * (w[seq] / ws)).sum(axis=1)
        costs -= sz[:, ~seq].sum(axis=1)
        if wc > 0:
            share = w[~seq] / wc
            costs += np.abs(share - sz[:, ~seq] / nt).sum(axis=1)
        for i, j in itertools.combinations(np.flatnonzero(seq), 2):
            if not conf[i, j]:
                costs += popcnt[masks[ok, i] & masks[ok, j]] * nt * nc
        kmin = costs.min()
        tied = np.flatnonzero(costs <= kmin + COST_TOL)
        pick = tied[np.argmin(uses_key[ok][tied])]
        cand_cost = float(costs[pick])
        row = np.flatnonzero(ok)[pick]
        key = (seq_bits, int(uses_key[row]))
        if (
            best is None
            or cand_cost < best[0] - COST_TOL
            or (cand_cost <= best[0] + COST_TOL and key < best[1])
        ):
            best = (cand_cost, key, seq_bits, masks[row])
    if best is None:
        raise RuntimeError("no feasible assignment found (internal bug: all-Seq is feasible)")
    _, _, seq_bits, row = best
    modes = [Mode.SEQ if s else Mode.CNC for s in seq_bits]
    uses = [frozenset(t for t in range(nt) if row[c] >> t & 1) for c in range(nc)]
    a = Assignment(modes, uses)
    return SolveReport(
        assignment=a,
        cost=cost(inst, a),
        optimal=True,
        nodes_explored=nodes,
        wall_time=time.perf_counter() - t0,
    )


# -- branch-and-bound solver ----------------------------------------------

_INF = float("inf")


def _canonical(modes: list, columns: list, nc: int, nt: int) -> Assignment:
    """Relabel threads so column signatures are sorted descending; makes
    cost-equal reports reproducible."""
    cols = sorted(
        (tuple(sig >> c & 1 for c in range(nc)) for sig in columns), reverse=True
    )
    uses = [frozenset(t for t, col in enumerate(cols) if col[c]) for c in range(nc)]
    return Assignment(modes, uses)


class _ModeSearch:
    """Exhaustive search of one mode vector: DFS over multisets of thread
    column signatures (a signature = set of classes a thread serves)."""

    def __init__(self, inst, seq, incumbent, budget_left):
        self.inst = inst
        self.cls = inst.classes
        self.nc, self.nt = inst.nc, inst.nt
        self.seq = seq
        w = _effective_weights(self.cls)
        self.cnc = [c for c in range(self.nc) if not seq[c]]
        wc = sum(w[c] for c in self.cnc)
        self.share = {c: w[c] / wc for c in self.cnc}  # O.2 weight shares
        ws = sum(w[c] for c in range(self.nc) if seq[c])
        self.seq_coef = {
            c: w[c] / ws for c in range(self.nc) if seq[c]
        }  # O.1a per-thread penalty
        self.incumbent = incumbent  # [cost, encoding, assignment] shared
        self.nodes = 0
        self.budget_left = budget_left
        self.aborted = False
        self._prepare_signatures()
        self._prepare_bound_tables()

    def _prepare_signatures(self):
        nc, nt, cls, seq = self.nc, self.nt, self.cls, self.seq
        conf = cls.conflicts
        # R.4: a column serving Cnc class c2 must also serve every Seq class
        # conflicting with c2.
        required = [0] * nc
        for c2 in range(nc):
            if seq[c2]:
                continue
            for c1 in range(nc):
                if c1 != c2 and conf[c1, c2]:
                    required[c2] |= 1 << c1
        # R.5 pairs to be covered by at least one column
        self.r5_pairs = [
            (c1, c2)
            for c1 in range(nc)
            for c2 in range(c1 + 1, nc)
            if seq[c1] and seq[c2] and conf[c1, c2]
        ]
        sigs = []
        for sig in range(1, 2**nc):
            ok = all(
                not (sig >> c2 & 1) or (sig & required[c2]) == required[c2]
                for c2 in self.cnc
            )
            if ok:
                sigs.append(sig)
        # per-column cost contribution (O.1a/O.1b plus O.3 pairs inside)
        g = {}
        pair_bit = {p: 1 << k for k, p in enumerate(self.r5_pairs)}
        pmask = {}
        for sig in sigs:
            members = [c for c in range(nc) if sig >> c & 1]
            val = 0.0
            for c in members:
                val += self.seq_coef[c] if seq[c] else -1.0
            for c1, c2 in itertools.combinations(members, 2):
                if seq[c1] and seq[c2] and not conf[c1, c2]:
                    val += nt * nc
            g[sig] = val
            pmask[sig] = sum(
                bit for (c1, c2), bit in pair_bit.items()
                if sig >> c1 & 1 and sig >> c2 & 1
            )
        sigs.sort(key=lambda s: g[s])  # cheapest columns first
        sigs.append(0)  # idle thread
        g[0] = 0.0
        pmask[0] = 0
        self.sigs = sigs
        self.g = g
        self.pmask = pmask
        n = len(sigs)
        self.suffix_union = [0] * (n + 1)
        self.suffix_pairs = [0] * (n + 1)
        self.suffix_min_g = [0.0] * (n + 1)
        # cheapest remaining signature covering class c
        self.suffix_cover_g = [[_INF] * (n + 1) for _ in range(nc)]
        for i in range(n - 1, -1, -1):
            s = sigs[i]
            self.suffix_union[i] = self.suffix_union[i + 1] | s
            self.suffix_pairs[i] = self.suffix_pairs[i + 1] | pmask[s]
            self.suffix_min_g[i] = min(self.suffix_min_g[i + 1], g[s])
            for c in range(nc):
                prev = self.suffix_cover_g[c][i + 1]
                self.suffix_cover_g[c][i] = (
                    min(prev, g[s]) if s >> c & 1 else prev
                )
        self.all_pairs_mask = (1 << len(self.r5_pairs)) - 1

    def _prepare_bound_tables(self):
        """joint[c][k][r]: best future O.1b+O.2 for concurrent class c from
        count k with at most r more columns; o2[c][k][r]: O.2 part alone."""
        nt = self.nt
        self.joint_tab = {}
        self.o2_tab = {}
        for c in self.cnc:
            share = self.share[c]
            joint = [[0.0] * (nt + 1) for _ in range(nt + 1)]
            o2 = [[0.0] * (nt + 1) for _ in range(nt + 1)]
            for k in range(nt + 1):
                for r in range(nt + 1):
                    lo, hi = max(k, 1), min(k + r, nt)
                    if hi < lo:
                        joint[k][r] = o2[k][r] = 0.0
                        continue
                    joint[k][r] = min(
                        -(m - k) + abs(share - m / nt) for m in range(lo, hi + 1)
                    )
                    o2[k][r] = min(abs(share - m / nt) for m in range(lo, hi + 1))
            self.joint_tab[c] = joint
            self.o2_tab[c] = o2

    def _future_bound(self, i, counts, remaining, covered):
        """Admissible lower bound on everything the remaining columns add.

        Combines three relaxations: (a) per-class joint O.1b reward and
        O.2 penalty, ignoring column sharing; (b) cheapest remaining
        signature per column plus O.2 alone; (c) refinement of (b): some
        column must cover the most expensive uncovered class.
        """
        reachable = self.suffix_union[i]
        per_class = 0.0
        o2_only = 0.0
        for c in self.cnc:
            k = counts[c]
            r = remaining if reachable >> c & 1 else 0
            per_class += self.joint_tab[c][k][r]
            o2_only += self.o2_tab[c][k][r]
        for c, coef in self.seq_coef.items():
            if not covered >> c & 1:
                per_class += coef
        min_g = min(self.suffix_min_g[i], 0.0)
        cheapest = remaining * min_g
        if remaining:
            worst_cover = max(
                (
                    self.suffix_cover_g[c][i]
                    for c in range(self.nc)
                    if not covered >> c & 1
                ),
                default=_INF,
            )
            if worst_cover != _INF:
                cheapest = max(cheapest, worst_cover + (remaining - 1) * min_g)
        return max(per_class, cheapest + o2_only)

    def run(self):
        self._greedy_seed()
        counts = [0] * self.nc
        self._dfs(0, self.nt, 0.0, 0, 0, counts, [])
        return self.nodes

    def _complete(self, partial_g, counts):
        o2 = sum(abs(self.share[c] - counts[c] / self.nt) for c in self.cnc)
        return partial_g + o2

    def _record(self, total, columns):
        modes = [Mode.SEQ if s else Mode.CNC for s in self.seq]
        a = _canonical(modes, columns, self.nc, self.nt)
        key = a.encode(self.nt)
        inc = self.incumbent
        if total < inc[0] - COST_TOL or (total <= inc[0] + COST_TOL and key < inc[1]):
            inc[0], inc[1], inc[2] = total, key, a

    def _greedy_seed(self):
        """Cheap constructive solution to arm the incumbent before the
        exhaustive descent: cover classes and R.5 pairs with the cheapest
        signatures, then spend leftover columns on the best reward."""
        full = (1 << self.nc) - 1
        columns = []
        covered = 0
        pairs = 0
        counts = [0] * self.nc
        sigs = self.sigs

        def push(sig):
            nonlocal covered, pairs
            columns.append(sig)
            covered |= sig
            pairs |= self.pmask[sig]
            for c in self.cnc:
                if sig >> c & 1:
                    counts[c] += 1

        while len(columns) < self.nt and covered != full:
            missing = full & ~covered
            cands = [s for s in sigs if s & missing]
            if not cands:
                return
            push(min(cands, key=lambda s: (self.g[s], -bin(s & missing).count("1"))))
        while len(columns) < self.nt and pairs != self.all_pairs_mask:
            cands = [s for s in sigs if self.pmask[s] & ~pairs]
            if not cands:
                return
            push(min(cands, key=lambda s: self.g[s]))
        if covered != full or pairs != self.all_pairs_mask:
            return
        while len(columns) < self.nt:
            best = min(
                sigs,
                key=lambda s: self.g[s]
                + sum(
                    abs(self.share[c] - (counts[c] + (s >> c & 1)) / self.nt)
                    - abs(self.share[c] - counts[c] / self.nt)
                    for c in self.cnc
                ),
            )
            push(best)
        self._record(
            self._complete(sum(self.g[s] for s in columns), counts), columns
        )

    def _dfs(self, i, remaining, partial_g, covered, pairs_done, counts, columns):
        self.nodes += 1
        if self.nodes > self.budget_left:
            self.aborted = True
            return
        full = (1 << self.nc) - 1
        if remaining == 0:
            if covered == full and pairs_done == self.all_pairs_mask:
                self._record(self._complete(partial_g, counts), columns)
            return
        if i >= len(self.sigs):
            return
        # everything still missing must be coverable by remaining signatures
        if covered | self.suffix_union[i] != full:
            return
        if pairs_done | self.suffix_pairs[i] != self.all_pairs_mask:
            return
        bound = partial_g + self._future_bound(i, counts, remaining, covered)
        if bound > self.incumbent[0] + COST_TOL:
            return
        sig = self.sigs[i]
        members = [c for c in range(self.nc) if sig >> c & 1]
        pb = self.pmask[sig]
        gval = self.g[sig]
        # try generous multiplicities first for rewarding columns
        order = range(remaining, -1, -1) if gval < 0 else range(0, remaining + 1)
        for m in order:
            if self.aborted:
                return
            if m:
                new_counts = list(counts)
                for c in members:
                    new_counts[c] += m
            else:
                new_counts = counts
            self._dfs(
                i + 1,
                remaining - m,
                partial_g + m * gval,
                covered | (sig if m else 0),
                pairs_done | (pb if m else 0),
                new_counts,
                columns + [sig] * m,
            )


def _mode_vectors(cls: RequestClasses):
    """All Seq/Cnc vectors satisfying R.2 and R.3."""
    nc = cls.nc
    forced = [cls.internal(c) for c in range(nc)]
    free = [c for c in range(nc) if not forced[c]]
    for choice in itertools.product((True, False), repeat=len(free)):
        seq = list(forced)
        for c, v in zip(free, choice):
            seq[c] = v
        ok = all(
            seq[i] or seq[j]
            for i in range(nc)
            for j in range(i + 1, nc)
            if cls.conflict(i, j)
        )
        if ok:
            yield tuple(seq)


def _local_search(inst, start, budget, rng):
    """Flip/swap hill-climbing used when the exact search runs out of
    node budget; keeps feasibility, accepts strict improvements."""
    best = start
    best_cost = cost(inst, best)
    nc, nt = inst.nc, inst.nt
    for _ in range(budget):
        modes = list(best.modes)
        uses = [set(u) for u in best.uses]
        if rng.random() < 0.3:
            c = rng.randrange(nc)
            modes[c] = Mode.CNC if modes[c] is Mode.SEQ else Mode.SEQ
        else:
            c = rng.randrange(nc)
            t = rng.randrange(nt)
            if t in uses[c]:
                uses[c].discard(t)
            else:
                uses[c].add(t)
        cand = Assignment(modes, uses)
        if check_feasible(inst, cand):
            continue
        c_cost = cost(inst, cand)
        if c_cost < best_cost - COST_TOL:
            best, best_cost = cand, c_cost
    return best, best_cost


DEFAULT_NODE_BUDGET = 2_000_000


def solve(
    inst: ProblemInstance,
    node_budget: int = DEFAULT_NODE_BUDGET,
    seed: int = 0,
    time_budget: float | None = None,
) -> SolveReport:
    """Minimize the mapping cost subject to R.1-R.5.

    Exact branch-and-bound over (mode vector, thread-column multiset);
    `optimal=True` when the search completed within the node budget,
    otherwise the best assignment found (improved by seeded local search)
    is returned with `optimal=False`.  Deterministic for a fixed
    (instance, node_budget, seed).
    """
    t0 = time.perf_counter()
    nc, nt = inst.nc, inst.nt
    fallback = Assignment.all_sequential(nc, nt)
    incumbent = [cost(inst, fallback), fallback.encode(nt), fallback]
    nodes = 0
    aborted = False

    vectors = list(_mode_vectors(inst.classes))
    # most-concurrent vectors first: they carry the reward terms
    vectors.sort(key=lambda v: (sum(v), v))
    for seq in vectors:
        if time_budget is not None and time.perf_counter() - t0 > time_budget:
            aborted = True
            break
        search = _ModeSearch(inst, seq, incumbent, node_budget - nodes)
        nodes += search.run()
        if search.aborted:
            aborted = True
            break

    best = incumbent[2]
    best_cost = cost(inst, best)
    if aborted:
        import random

        best, best_cost = _local_search(inst, best, 2000, random.Random(seed))
    return SolveReport(
        assignment=best,
        cost=best_cost,
        optimal=not aborted,
        nodes_explored=nodes,
        wall_time=time.perf_counter() - t0,
    )


# -- instance / assignment files ------------------------------------------


def parse_instance(text: str) -> ProblemInstance:
    """Instance file = topology file plus a `threads <nt>` line."""
    classes = parse_topology(text)
    nt = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "threads":
            if len(parts) != 2:
                raise TopologyFormatError(lineno, "expected: threads <nt>")
            try:
                nt = int(parts[1])
            except ValueError:
                raise TopologyFormatError(lineno, f"bad thread count {parts[1]!r}") from None
    if nt is None:
        raise TopologyFormatError(0, "missing threads line")
    return ProblemInstance(classes, nt)


def serialize_instance(inst: ProblemInstance) -> str:
    return serialize_topology(inst.classes) + f"threads {inst.nt}\n"


def serialize_assignment(classes: RequestClasses, a: Assignment) -> str:
    """One `assign <class> <Seq|Cnc> <t0,t1,...>` line per class."""
    lines = []
    for c in range(classes.nc):
        ts = ",".join(str(t) for t in sorted(a.uses[c]))
        lines.append(f"assign {classes.names[c]} {a.mode(c).value} {ts}")
    return "\n".join(lines) + "\n"


def parse_assignment(classes: RequestClasses, text: str) -> Assignment:
    modes = {}
    uses = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "assign" or len(parts) != 4:
            raise TopologyFormatError(lineno, "expected: assign <class> <Seq|Cnc> <t0,t1,...>")
        name = parts[1]
        if name not in classes.names:
            raise TopologyFormatError(lineno, f"unknown class {name!r}")
        if name in modes:
            raise TopologyFormatError(lineno, f"duplicate assignment for {name!r}")
        try:
            mode = Mode(parts[2])
        except ValueError:
            raise TopologyFormatError(lineno, f"bad mode {parts[2]!r}") from None
        try:
            threads = frozenset(int(t) for t in parts[3].split(","))
        except ValueError:
            raise TopologyFormatError(lineno, f"bad thread list {parts[3]!r}") from None
        modes[name] = mode
        uses[name] = threads
    missing = [n for n in classes.names if n not in modes]
    if missing:
        raise TopologyFormatError(0, f"no assignment for classes {missing}")
    return Assignment([modes[n] for n in classes.names], [uses[n] for n in classes.names])
