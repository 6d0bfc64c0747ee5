# core/provisioner.py - Omega Provisioner reconcile logic
"""
Demand-driven provisioning of batch execute pods.

Each cycle counts the idle batch jobs that pass the provisioner filter,
groups them by quantized resource request, and compares each group with the
number of execute pods still waiting (Pending) for resources. Missing pods
are submitted. Pods are never deleted while Pending or Running; they go away
by themselves once no matching jobs are waiting. The only deletions issued
here are terminal pods past their TTL.

Everything up to `reconcile` is a pure function of its inputs.
`Provisioner` wraps it with the sequence counter and logging of a
long-running loop.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

from core.config import ProvisionerConfig
from core.errors import UnknownPriorityClass
from core.model import (
    OWNER_LABEL,
    GroupKey,
    JobAd,
    JobState,
    PodPhase,
    PodSpec,
    PodState,
    group_key_of,
)

logger = logging.getLogger(__name__)

CENTRAL_MANAGER_ENV = "CONDOR_HOST"
ADVERTISED_PREFIX = "GLIDEIN_"


@dataclass(frozen=True)
class PoolSnapshot:
    jobs: Tuple[JobAd, ...]
    pods: Tuple[PodState, ...]
    now: int

    def __post_init__(self):
        job_ids = [j.job_id for j in self.jobs]
        if len(job_ids) != len(set(job_ids)):
            raise ValueError("duplicate job_id in snapshot")
        names = [p.name for p in self.pods]
        if len(names) != len(set(names)):
            raise ValueError("duplicate pod_name in snapshot")
        if any(p.spec.owner_label != OWNER_LABEL for p in self.pods):
            raise ValueError("snapshot contains pods not owned by the provisioner")


@dataclass
class ReconcileActions:
    submissions: List[PodSpec] = field(default_factory=list)
    deletions: List[str] = field(default_factory=list)
    # Per-group inputs of this cycle, kept for auditing
    demand: Dict[GroupKey, int] = field(default_factory=dict)
    pending: Dict[GroupKey, int] = field(default_factory=dict)
    plan: Dict[GroupKey, int] = field(default_factory=dict)


def select_candidate_jobs(jobs: Sequence[JobAd], config_filter) -> List[JobAd]:
    """Idle jobs whose attributes pass the filter, oldest first."""
    candidates = [
        j for j in jobs
        if j.state is JobState.IDLE and config_filter.matches(j.attributes)
    ]
    return sorted(candidates, key=lambda j: (j.submit_time, j.job_id))


def demand_by_group(candidates: Sequence[JobAd], config: ProvisionerConfig) -> Dict[GroupKey, int]:
    counts = Counter(
        group_key_of(j.request, config.mem_quantum_mib, config.disk_quantum_mib)
        for j in candidates
    )
    return dict(counts)


def _count_phase(pods: Sequence[PodState], phase: PodPhase) -> Dict[GroupKey, int]:
    return dict(Counter(p.spec.group for p in pods if p.phase is phase))


def pending_by_group(pods: Sequence[PodState]) -> Dict[GroupKey, int]:
    """Pods still waiting for resources, per group."""
    return _count_phase(pods, PodPhase.PENDING)


def running_by_group(pods: Sequence[PodState]) -> Dict[GroupKey, int]:
    return _count_phase(pods, PodPhase.RUNNING)


def plan_submissions(
    demand: Mapping[GroupKey, int],
    pending: Mapping[GroupKey, int],
    running_counts: Mapping[GroupKey, int],
    config: ProvisionerConfig,
) -> Dict[GroupKey, int]:
    """How many pods to submit per group this cycle.

    The raw deficit is idle demand minus pods already waiting. It is then
    clamped by the per-group cap, the total-pod cap and the per-cycle cap.
    When the per-cycle cap binds, pods are handed out one per group per pass,
    visiting groups by descending raw deficit, ties by GroupKey order.
    """
    raw = {g: max(0, n - pending.get(g, 0)) for g, n in demand.items()}

    wanted = {}
    for g, deficit in raw.items():
        headroom = config.max_pods_per_group - pending.get(g, 0) - running_counts.get(g, 0)
        capped = min(deficit, max(0, headroom))
        if capped > 0:
            wanted[g] = capped

    existing = sum(pending.values()) + sum(running_counts.values())
    budget = min(config.max_submit_per_cycle, max(0, config.max_total_pods - existing))

    if sum(wanted.values()) <= budget:
        return wanted

    order = sorted(wanted, key=lambda g: (-raw[g], g))
    plan = {g: 0 for g in order}
    while budget > 0:
        progressed = False
        for g in order:
            if budget == 0:
                break
            if plan[g] < wanted[g]:
                plan[g] += 1
                budget -= 1
                progressed = True
        if not progressed:
            break
    return {g: n for g, n in plan.items() if n > 0}


def pod_name_for(namespace: str, group: GroupKey, seq: int) -> str:
    return f"{namespace}-htc-{group.slug}-{seq}"


def _cores(cpus_milli: int) -> str:
    return f"{cpus_milli / 1000:g}"


def render_pod(group: GroupKey, config: ProvisionerConfig, seq: int, now: int) -> PodSpec:
    priority = config.priority_of(config.priority_class)
    if priority is None:
        raise UnknownPriorityClass(f"priority class {config.priority_class!r} is not defined")

    env = list(config.env)
    if config.central_manager:
        env.append((CENTRAL_MANAGER_ENV, config.central_manager))

    advertised = [(name, value) for name, value in config.env if name.startswith(ADVERTISED_PREFIX)]
    advertised += [
        ("PodCPUs", _cores(group.cpus_milli)),
        ("PodGPUs", str(group.gpus)),
        ("PodMemory", str(group.memory_mib)),
        ("PodDisk", str(group.disk_mib)),
    ]

    return PodSpec(
        pod_name=pod_name_for(config.namespace, group, seq),
        group=group,
        request=group.vector(),
        priority=priority,
        priority_class=config.priority_class,
        tolerations=frozenset(config.tolerations),
        affinity=config.affinity,
        env=tuple(env),
        secret_refs=(config.secret_name,) if config.secret_name else (),
        image=config.image,
        start_filter=config.filter,
        advertised_attributes=tuple(advertised),
        owner_label=OWNER_LABEL,
    )


def expired_pods(pods: Sequence[PodState], ttl_s: int, now: int) -> List[str]:
    return sorted(
        p.name for p in pods
        if p.phase.terminal and p.terminated_time is not None and now - p.terminated_time > ttl_s
    )


def reconcile(snapshot: PoolSnapshot, config: ProvisionerConfig, next_seq: int = 1) -> ReconcileActions:
    candidates = select_candidate_jobs(snapshot.jobs, config.filter)
    demand = demand_by_group(candidates, config)
    pending = pending_by_group(snapshot.pods)
    running = running_by_group(snapshot.pods)
    plan = plan_submissions(demand, pending, running, config)

    submissions = []
    seq = next_seq
    for group in sorted(plan):
        for _ in range(plan[group]):
            submissions.append(render_pod(group, config, seq, snapshot.now))
            seq += 1

    return ReconcileActions(
        submissions=submissions,
        deletions=expired_pods(snapshot.pods, config.completed_pod_ttl_s, snapshot.now),
        demand=demand,
        pending=pending,
        plan=plan,
    )


class Provisioner:
    """
    The periodic provisioning loop.

    Owns the pod sequence counter so pod names stay unique for the lifetime
    of the provisioner. The caller supplies snapshots and applies the actions.
    """

    def __init__(self, config: ProvisionerConfig, first_seq: int = 1):
        self.config = config
        self.next_seq = first_seq
        self.cycles = 0
        self.total_submitted = 0

    def one_iteration(self, snapshot: PoolSnapshot) -> ReconcileActions:
        actions = reconcile(snapshot, self.config, self.next_seq)
        self.next_seq += len(actions.submissions)
        self.cycles += 1
        self.total_submitted += len(actions.submissions)

        for group in sorted(actions.demand):
            logger.debug(
                f"[Provisioner] Group '{group.slug}' n_jobs_idle {actions.demand[group]} "
                f"n_pods_pending {actions.pending.get(group, 0)} to_submit {actions.plan.get(group, 0)}"
            )
        if actions.submissions or actions.deletions:
            logger.info(
                f"[Provisioner] t={snapshot.now} submitted {len(actions.submissions)} pods "
                f"in {len(actions.plan)} groups, cleaned up {len(actions.deletions)}"
            )
        return actions
