# sim/condor.py - Omega Provisioner batch pool simulator
"""
A deterministic stand-in for the batch pool the pods join.

Jobs wait in a queue; each Running execute pod contributes one slot. The
negotiator pairs idle jobs with unclaimed slots (greedy FIFO, both sides'
constraints must hold). A slot runs one job at a time and is reused until
its pod decides to self-terminate. Preempted jobs go back to Idle and start
over from scratch on their next match.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from core.errors import IllegalTransition
from core.model import MATCH_ALL, FilterExpr, JobAd, JobState, PodSpec, ResourceVector, fits

logger = logging.getLogger(__name__)


@dataclass
class Slot:
    pod_name: str
    capacity: ResourceVector
    advertised_attributes: Dict[str, str] = field(default_factory=dict)
    start_filter: FilterExpr = MATCH_ALL
    claimed_job: Optional[int] = None
    ready_time: int = 0
    last_claim_end: int = 0

    @classmethod
    def for_pod(cls, spec: PodSpec, now: int) -> "Slot":
        return cls(
            pod_name=spec.pod_name,
            capacity=spec.request,
            advertised_attributes=dict(spec.advertised_attributes),
            start_filter=spec.start_filter,
            ready_time=now,
            last_claim_end=now,
        )


def slot_accepts(slot: Slot, job: JobAd) -> bool:
    """Resources fit and both the slot's START policy and the job's requirements hold."""
    return (
        fits(job.request, slot.capacity)
        and slot.start_filter.matches(job.attributes)
        and job.requirements.matches(slot.advertised_attributes)
    )


def negotiate(idle_jobs: Sequence[JobAd], slots: Sequence[Slot], now: int) -> List[Tuple[int, str]]:
    jobs = sorted(
        (j for j in idle_jobs if j.state is JobState.IDLE),
        key=lambda j: (j.submit_time, j.job_id),
    )
    free = sorted(
        (s for s in slots if s.claimed_job is None),
        key=lambda s: (s.ready_time, s.pod_name),
    )
    matches = []
    for job in jobs:
        for i, slot in enumerate(free):
            if slot_accepts(slot, job):
                matches.append((job.job_id, slot.pod_name))
                del free[i]
                break
    return matches


def start_job(job: JobAd, slot: Slot, now: int):
    if slot.claimed_job is not None:
        raise IllegalTransition(f"slot {slot.pod_name} already runs job {slot.claimed_job}")
    if job.state is not JobState.IDLE:
        raise IllegalTransition(f"job {job.job_id} is {job.state.value}, not Idle")
    job.transition(JobState.RUNNING)
    job.slot_name = slot.pod_name
    job.start_time = now
    slot.claimed_job = job.job_id


def _release(job: JobAd, slot: Slot, now: int):
    job.slot_name = None
    job.start_time = None
    slot.claimed_job = None
    slot.last_claim_end = now


def complete_job(job: JobAd, slot: Slot, now: int):
    if slot.claimed_job != job.job_id or job.state is not JobState.RUNNING:
        raise IllegalTransition(f"job {job.job_id} is not running on slot {slot.pod_name}")
    job.transition(JobState.COMPLETED)
    _release(job, slot, now)


def preempt_slot(slot: Slot, jobs: Dict[int, JobAd], now: int) -> Optional[int]:
    """Return the claimed job (if any) to Idle. The caller removes the slot."""
    if slot.claimed_job is None:
        return None
    job = jobs[slot.claimed_job]
    job.transition(JobState.IDLE)
    _release(job, slot, now)
    return job.job_id


def should_terminate(slot: Slot, idle_jobs: Iterable[JobAd], idle_timeout_s: int, now: int) -> bool:
    """An unclaimed slot quits once idle past the timeout with nothing it could run."""
    if slot.claimed_job is not None:
        return False
    if now - max(slot.ready_time, slot.last_claim_end) <= idle_timeout_s:
        return False
    return not any(
        slot_accepts(slot, job) for job in idle_jobs if job.state is JobState.IDLE
    )


class CondorPool:
    """Job queue plus the slots of the execute pods that joined the pool."""

    def __init__(self):
        self.jobs: Dict[int, JobAd] = {}
        self.slots: Dict[str, Slot] = {}
        self.submitted = 0

    # --- Queue ---

    def submit_job(self, job: JobAd):
        if job.job_id in self.jobs:
            raise IllegalTransition(f"job {job.job_id} already submitted")
        self.jobs[job.job_id] = job
        self.submitted += 1

    def remove_job(self, job_id: int, now: int) -> Optional[str]:
        """Any state -> Removed. Returns the slot it was running on, if any."""
        job = self.jobs[job_id]
        slot_name = job.slot_name
        if slot_name is not None:
            _release(job, self.slots[slot_name], now)
        job.transition(JobState.REMOVED)
        return slot_name

    def idle_jobs(self) -> List[JobAd]:
        return [j for j in self.jobs.values() if j.state is JobState.IDLE]

    def counts(self) -> Dict[JobState, int]:
        counts = {state: 0 for state in JobState}
        for job in self.jobs.values():
            counts[job.state] += 1
        return counts

    # --- Slots ---

    def add_slot(self, slot: Slot):
        self.slots[slot.pod_name] = slot

    def drop_slot(self, pod_name: str) -> Optional[Slot]:
        return self.slots.pop(pod_name, None)

    def negotiate(self, now: int) -> List[Tuple[int, str]]:
        matches = negotiate(self.idle_jobs(), list(self.slots.values()), now)
        for job_id, pod_name in matches:
            start_job(self.jobs[job_id], self.slots[pod_name], now)
        if matches:
            logger.debug(f"[Negotiator] t={now} matched {len(matches)} jobs")
        return matches

    def complete(self, job_id: int, now: int) -> str:
        job = self.jobs[job_id]
        slot = self.slots.get(job.slot_name) if job.slot_name else None
        if slot is None:
            raise IllegalTransition(f"job {job_id} has no slot to complete on")
        complete_job(job, slot, now)
        return slot.pod_name

    def preempt(self, pod_name: str, now: int) -> Optional[int]:
        slot = self.drop_slot(pod_name)
        if slot is None:
            return None
        job_id = preempt_slot(slot, self.jobs, now)
        if job_id is not None:
            logger.info(f"[Negotiator] t={now} job {job_id} preempted on {pod_name}, back to Idle")
        return job_id

    def terminating_slots(self, idle_timeout_s: int, now: int) -> List[str]:
        idle = self.idle_jobs()
        return sorted(
            name for name, slot in self.slots.items()
            if should_terminate(slot, idle, idle_timeout_s, now)
        )
