"""Parallel state machine replication scheduling framework.

Request classes express application conflict semantics; an optimizer maps
classes to worker threads under correctness rules; an early scheduler
(per-worker FIFO queues, class barriers) and a late dependency-graph
baseline execute totally ordered request streams; verifiers check the
runs against the sequential specification.
"""

from .classes import (
    AccessSets,
    ObjectId,
    Request,
    RequestClasses,
    builtin_topology,
    conflicts_requests,
    make_classes,
    parse_topology,
    serialize_topology,
    validate_classes,
)
from .optimizer import (
    Assignment,
    Mode,
    ProblemInstance,
    SolveReport,
    brute_force,
    check_feasible,
    cost,
    parse_assignment,
    parse_instance,
    serialize_assignment,
    serialize_instance,
    solve,
)
from .broadcast import BroadcastLog, WorkloadSpec, generate_workload, preset, sequence
from .harness import ExperimentResult, Metrics, default_ctot, run_experiment
from .runtime import VirtualCosts, ExecutionTrace, TraceRecord, dump_trace, load_trace
from .service import ShardedList, ServiceOp, SyntheticService, access_sets, class_of
from .verify import (
    HistOp,
    check_conflict_order,
    check_convergence,
    check_fifo,
    check_linearizable_small,
    list_spec_from_service,
)

__version__ = "0.1.0"

__all__ = [
    "AccessSets",
    "Assignment",
    "BroadcastLog",
    "ExecutionTrace",
    "ExperimentResult",
    "HistOp",
    "Metrics",
    "Mode",
    "ObjectId",
    "ProblemInstance",
    "Request",
    "RequestClasses",
    "ServiceOp",
    "ShardedList",
    "SolveReport",
    "SyntheticService",
    "TraceRecord",
    "VirtualCosts",
    "WorkloadSpec",
    "access_sets",
    "brute_force",
    "builtin_topology",
    "check_conflict_order",
    "check_convergence",
    "check_feasible",
    "check_fifo",
    "check_linearizable_small",
    "class_of",
    "conflicts_requests",
    "cost",
    "default_ctot",
    "dump_trace",
    "generate_workload",
    "list_spec_from_service",
    "load_trace",
    "make_classes",
    "parse_assignment",
    "parse_instance",
    "parse_topology",
    "preset",
    "run_experiment",
    "sequence",
    "serialize_assignment",
    "serialize_instance",
    "serialize_topology",
    "solve",
    "validate_classes",
]
