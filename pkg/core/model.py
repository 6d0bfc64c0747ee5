# core/model.py - Omega Provisioner Core Model
"""
Shared domain types and resource arithmetic.

Every other module (config, provisioner, both simulators, the harness)
builds on the values defined here. Value types are frozen dataclasses;
the few stateful records (JobAd, PodState, Node) are plain dataclasses
mutated only by the simulators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple, Union

from core.errors import IllegalTransition

OWNER_LABEL = "omega-provisioner"
SERVICE_OWNER = "service"


# ─────────────────────────────────────────────────────────────
# Resources
# ─────────────────────────────────────────────────────────────

@dataclass(frozen=True, order=True)
class ResourceVector:
    """CPU (millicores), GPUs, memory and disk (MiB). All fields >= 0."""
    cpus_milli: int = 0
    gpus: int = 0
    memory_mib: int = 0
    disk_mib: int = 0

    def __post_init__(self):
        for name in ("cpus_milli", "gpus", "memory_mib", "disk_mib"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError(f"ResourceVector.{name} must be an integer, got {value!r}")
            if value < 0:
                raise ValueError(f"ResourceVector.{name} must be >= 0, got {value}")

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(
            self.cpus_milli + other.cpus_milli,
            self.gpus + other.gpus,
            self.memory_mib + other.memory_mib,
            self.disk_mib + other.disk_mib,
        )

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        # Callers only subtract what they previously added.
        return ResourceVector(
            self.cpus_milli - other.cpus_milli,
            self.gpus - other.gpus,
            self.memory_mib - other.memory_mib,
            self.disk_mib - other.disk_mib,
        )

    def is_zero(self) -> bool:
        return self == ResourceVector()

    def as_dict(self) -> Dict[str, int]:
        return {
            "cpus_milli": self.cpus_milli,
            "gpus": self.gpus,
            "memory_mib": self.memory_mib,
            "disk_mib": self.disk_mib,
        }


def fits(request: ResourceVector, capacity: ResourceVector) -> bool:
    """True iff every field of request is <= the same field of capacity."""
    return (
        request.cpus_milli <= capacity.cpus_milli
        and request.gpus <= capacity.gpus
        and request.memory_mib <= capacity.memory_mib
        and request.disk_mib <= capacity.disk_mib
    )


def sum_vectors(vectors: Iterable[ResourceVector]) -> ResourceVector:
    total = ResourceVector()
    for v in vectors:
        total = total + v
    return total


# ─────────────────────────────────────────────────────────────
# Filters
# ─────────────────────────────────────────────────────────────

class FilterOp(str, Enum):
    EQ = "=="
    NE = "!="
    GE = ">="
    LE = "<="
    IN = "IN"


@dataclass(frozen=True)
class FilterClause:
    name: str
    op: FilterOp
    # A plain string, or a tuple of strings for IN
    value: Union[str, Tuple[str, ...]]

    def render(self) -> str:
        if self.op is FilterOp.IN:
            return f"{self.name} IN {'|'.join(self.value)}"
        return f"{self.name} {self.op.value} {self.value}"


@dataclass(frozen=True)
class FilterExpr:
    """Conjunction of clauses. No clauses means match-all."""
    clauses: Tuple[FilterClause, ...] = ()

    def render(self) -> str:
        return " AND ".join(c.render() for c in self.clauses)

    def matches(self, attrs: Mapping[str, str]) -> bool:
        return eval_filter(self, attrs)


MATCH_ALL = FilterExpr()


def _as_decimal(text: str) -> Optional[Decimal]:
    try:
        number = Decimal(text.strip())
    except (InvalidOperation, ValueError):
        return None
    return number if number.is_finite() else None


def _compare(left: str, right: str) -> int:
    """Numeric when both sides parse as decimals, lexicographic otherwise."""
    a, b = _as_decimal(left), _as_decimal(right)
    if a is not None and b is not None:
        return (a > b) - (a < b)
    return (left > right) - (left < right)


def _clause_holds(clause: FilterClause, attrs: Mapping[str, str]) -> bool:
    if clause.name not in attrs:
        return clause.op is FilterOp.NE
    actual = attrs[clause.name]
    if clause.op is FilterOp.EQ:
        return actual == clause.value
    if clause.op is FilterOp.NE:
        return actual != clause.value
    if clause.op is FilterOp.IN:
        return actual in clause.value
    if clause.op is FilterOp.GE:
        return _compare(actual, clause.value) >= 0
    return _compare(actual, clause.value) <= 0


def eval_filter(expr: FilterExpr, attrs: Mapping[str, str]) -> bool:
    return all(_clause_holds(c, attrs) for c in expr.clauses)


# ─────────────────────────────────────────────────────────────
# Grouping
# ─────────────────────────────────────────────────────────────

@dataclass(frozen=True, order=True)
class GroupKey:
    """Quantized resource class. Ordering is lexicographic over the fields."""
    cpus_milli: int
    gpus: int
    memory_mib: int
    disk_mib: int

    def vector(self) -> ResourceVector:
        return ResourceVector(self.cpus_milli, self.gpus, self.memory_mib, self.disk_mib)

    @property
    def slug(self) -> str:
        return f"c{self.cpus_milli}-g{self.gpus}-m{self.memory_mib}-d{self.disk_mib}"

    @classmethod
    def from_slug(cls, slug: str) -> "GroupKey":
        try:
            c, g, m, d = slug.split("-")
            return cls(int(c[1:]), int(g[1:]), int(m[1:]), int(d[1:]))
        except (ValueError, IndexError):
            raise ValueError(f"not a group slug: {slug!r}")


def group_key_of(request: ResourceVector, mem_quantum: int, disk_quantum: int) -> GroupKey:
    if mem_quantum < 1 or disk_quantum < 1:
        raise ValueError("quanta must be >= 1")
    return GroupKey(
        cpus_milli=request.cpus_milli,
        gpus=request.gpus,
        memory_mib=-(-request.memory_mib // mem_quantum) * mem_quantum,
        disk_mib=-(-request.disk_mib // disk_quantum) * disk_quantum,
    )


# ─────────────────────────────────────────────────────────────
# Node placement constraints
# ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AffinityRule:
    key: str
    values: Tuple[str, ...]
    negated: bool = False

    def satisfied_by(self, labels: Mapping[str, str]) -> bool:
        present = self.key in labels and labels[self.key] in self.values
        return not present if self.negated else present

    def render(self) -> str:
        return f"{'^' if self.negated else ''}{self.key}:{'|'.join(self.values)}"


# ─────────────────────────────────────────────────────────────
# Jobs
# ─────────────────────────────────────────────────────────────

class JobState(str, Enum):
    IDLE = "Idle"
    RUNNING = "Running"
    COMPLETED = "Completed"
    REMOVED = "Removed"


JOB_TRANSITIONS = {
    JobState.IDLE: {JobState.RUNNING, JobState.REMOVED},
    JobState.RUNNING: {JobState.IDLE, JobState.COMPLETED, JobState.REMOVED},
    JobState.COMPLETED: {JobState.REMOVED},
    JobState.REMOVED: set(),
}


@dataclass
class JobAd:
    job_id: int
    request: ResourceVector
    submit_time: int = 0
    duration: int = 0
    state: JobState = JobState.IDLE
    attributes: Dict[str, str] = field(default_factory=dict)
    requirements: FilterExpr = MATCH_ALL
    restart_count: int = 0
    slot_name: Optional[str] = None
    start_time: Optional[int] = None

    def transition(self, new_state: JobState):
        if new_state not in JOB_TRANSITIONS[self.state]:
            raise IllegalTransition(
                f"job {self.job_id}: {self.state.value} -> {new_state.value} is not allowed"
            )
        if self.state is JobState.RUNNING and new_state is JobState.IDLE:
            self.restart_count += 1
        self.state = new_state


# ─────────────────────────────────────────────────────────────
# Pods
# ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PodSpec:
    pod_name: str
    group: GroupKey
    request: ResourceVector
    priority: int = 0
    priority_class: str = ""
    tolerations: FrozenSet[str] = frozenset()
    affinity: Tuple[AffinityRule, ...] = ()
    env: Tuple[Tuple[str, str], ...] = ()
    secret_refs: Tuple[str, ...] = ()
    image: str = ""
    start_filter: FilterExpr = MATCH_ALL
    advertised_attributes: Tuple[Tuple[str, str], ...] = ()
    owner_label: str = OWNER_LABEL


class PodPhase(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (PodPhase.SUCCEEDED, PodPhase.FAILED)


@dataclass
class PodState:
    spec: PodSpec
    phase: PodPhase = PodPhase.PENDING
    bound_node: Optional[str] = None
    created_time: int = 0
    scheduled_time: Optional[int] = None
    terminated_time: Optional[int] = None
    current_job: Optional[int] = None
    last_claim_end: Optional[int] = None

    @property
    def name(self) -> str:
        return self.spec.pod_name

    @property
    def provisioner_owned(self) -> bool:
        return self.spec.owner_label == OWNER_LABEL


# ─────────────────────────────────────────────────────────────
# Nodes
# ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class NodeShape:
    name: str
    capacity: ResourceVector
    labels: Tuple[Tuple[str, str], ...] = ()
    taints: FrozenSet[str] = frozenset()
    boot_delay: int = 0
    spot: bool = False

    def __post_init__(self):
        if self.capacity.is_zero():
            raise ValueError(f"node shape {self.name!r} has zero capacity")

    def size_key(self) -> Tuple[int, int, int, int]:
        """Smallest-first ordering used by the autoscaler: gpus, then cpus, then memory."""
        c = self.capacity
        return (c.gpus, c.cpus_milli, c.memory_mib, c.disk_mib)


@dataclass
class Node:
    node_id: str
    shape: str
    capacity: ResourceVector
    labels: Dict[str, str] = field(default_factory=dict)
    taints: FrozenSet[str] = frozenset()
    created_time: int = 0
    ready_time: int = 0
    spot: bool = False
    allocated: ResourceVector = ResourceVector()
    empty_since: Optional[int] = None

    @property
    def free(self) -> ResourceVector:
        return self.capacity - self.allocated

    def is_ready(self, now: int) -> bool:
        return now >= self.ready_time
