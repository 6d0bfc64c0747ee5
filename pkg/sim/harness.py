# sim/harness.py - Omega Provisioner discrete-event harness
"""
Drives the provisioner against the two simulators.

Time is integer seconds. The engine jumps from one instant to the next
instant at which anything can happen, and at every processed instant runs
the phases in this order:

    workload arrivals, node readiness, scheduler, negotiator,
    job completions, self-termination checks, provisioner cycle,
    autoscaler, spot kills, metrics sample

Every state change is appended to the event log. Cross-module invariants
are checked at the end of each instant; a breach aborts the run with
InvariantViolation.
"""

import csv
import heapq
import io
import json
import logging
import random
from dataclasses import astuple, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

from core.errors import InvariantViolation, UnknownNode
from core.model import (
    SERVICE_OWNER,
    JobAd,
    JobState,
    Node,
    PodPhase,
    PodSpec,
    PodState,
    ResourceVector,
    group_key_of,
)
from core.provisioner import PoolSnapshot, Provisioner
from sim.condor import CondorPool, Slot
from sim.k8s import AutoscalerParams, Cluster
from sim.scenario import Scenario

logger = logging.getLogger(__name__)

FAULTS = ("capacity",)


# --- Event log ---

def _sorted_detail(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _sorted_detail(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_sorted_detail(v) for v in value]
    return value


@dataclass(frozen=True)
class EventRecord:
    time: int
    seq: int
    kind: str
    subject: str
    detail: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "time": self.time,
            "seq": self.seq,
            "kind": self.kind,
            "subject": self.subject,
            "detail": _sorted_detail(self.detail),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), separators=(",", ":"))


class EventLog:
    def __init__(self):
        self.records: List[EventRecord] = []

    def append(self, time: int, kind: str, subject: str, **detail) -> EventRecord:
        record = EventRecord(time, len(self.records) + 1, kind, str(subject), detail)
        self.records.append(record)
        return record

    @property
    def last(self) -> Optional[EventRecord]:
        return self.records[-1] if self.records else None

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class MetricsSample:
    time: int
    idle_jobs: int
    running_jobs: int
    completed_jobs: int
    pending_pods: int
    running_pods: int
    nodes_total: int
    gpus_allocated: int
    gpus_capacity: int
    cum_preemptions: int
    cum_pods_submitted: int


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsSample))


def emit_metrics(samples: List[MetricsSample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for sample in samples:
        writer.writerow(astuple(sample))
    return buf.getvalue()


def emit_events(records: List[EventRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def _resources(vector: ResourceVector) -> Dict[str, int]:
    return vector.as_dict()


# --- Engine ---

class Simulation:
    """One run of one scenario. Not reusable; build a new one per run."""

    def __init__(self, scenario: Scenario, seed: Optional[int] = None, fault: Optional[str] = None):
        if fault is not None and fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r}; known: {', '.join(FAULTS)}")
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.fault = fault
        self.config = scenario.provisioner_config()
        self.log = EventLog()
        self.samples: List[MetricsSample] = []

        spec = scenario.autoscaler
        self.pool = CondorPool()
        self.cluster = Cluster(
            scenario.node_shapes(),
            AutoscalerParams(
                provision_delay_s=spec.provision_delay_s,
                scale_down_idle_s=spec.scale_down_idle_s,
                max_nodes=spec.max_nodes,
                enabled=spec.enabled,
            ),
            scenario.pod_pending_timeout_s,
        )
        self.provisioner = Provisioner(self.config)

        self._durations = random.Random(f"{self.seed}/durations")
        self._kill_rng = random.Random(f"{self.seed}/spot-kills")
        self._completions: List[Tuple[int, int, str]] = []
        self._service_ends: List[Tuple[int, str]] = []
        self._service_durations: Dict[str, int] = {}
        self._service_seq = 0
        self._next_job_id = 1
        self._flagged: set = set()
        self.cum_preemptions = 0
        self.now = 0

        self._spot_kills = [(k.time, k.node) for k in scenario.spot_kills]
        if scenario.random_spot_kills is not None:
            rk = scenario.random_spot_kills
            self._spot_kills += [
                (self._kill_rng.randint(rk.start_s, rk.end_s), "random") for _ in range(rk.count)
            ]
        self._spot_kills.sort(key=lambda k: k[0])

        self._scripted_times = sorted(
            {w.time for w in scenario.workload}
            | {s.time for s in scenario.service_pods}
            | {r.time for r in scenario.removals}
            | {t for t, _ in self._spot_kills}
        )

    # --- Main loop ---

    def run(self) -> Tuple[List[EventRecord], List[MetricsSample]]:
        self._start()
        t: Optional[int] = 0
        while t is not None:
            self.now = t
            self._step(t)
            self._check_invariants(t)
            t = self._next_instant(t)
        counts = self.pool.counts()
        logger.info(
            f"[Harness] Scenario '{self.scenario.name}' seed {self.seed}: {len(self.log)} events, "
            f"{counts[JobState.COMPLETED]}/{self.pool.submitted} jobs completed, "
            f"{self.provisioner.total_submitted} pods submitted"
        )
        return self.log.records, self.samples

    def _start(self):
        self.log.append(
            0, "run-start", self.scenario.name,
            seed=self.seed,
            filter=self.config.filter.render(),
            mem_quantum_mib=self.config.mem_quantum_mib,
            disk_quantum_mib=self.config.disk_quantum_mib,
            idle_timeout_s=self.config.idle_timeout_s,
            priority_class=self.config.priority_class,
            max_pods_per_group=self.config.max_pods_per_group,
            max_total_pods=self.config.max_total_pods,
        )
        for entry in self.scenario.initial_nodes:
            for _ in range(entry.count):
                node = self.cluster.add_node(entry.shape, 0, ready_time=0, spot=entry.spot)
                self._log_node_add(node)
                self.log.append(0, "node-ready", node.node_id)

    def _step(self, t: int):
        self._arrivals(t)
        for node in self.cluster.mark_ready(t):
            self.log.append(t, "node-ready", node.node_id)
        if t % self.scenario.scheduler_interval_s == 0:
            self._schedule(t)
        if t % self.scenario.negotiator_interval_s == 0:
            self._negotiate(t)
        self._completions_due(t)
        self._self_terminations(t)
        if t % self.config.cycle_interval_s == 0:
            self._provision(t)
        self._autoscale(t)
        self._spot_kills_due(t)
        if t % self.scenario.metrics_interval_s == 0:
            self.samples.append(self._sample(t))

    # --- Phases ---

    def _arrivals(self, t: int):
        for burst in self.scenario.workload:
            if burst.time != t:
                continue
            requirements = burst.requirements_expr()
            for _ in range(burst.count):
                job = JobAd(
                    job_id=self._next_job_id,
                    request=burst.request.vector(),
                    submit_time=t,
                    duration=burst.draw_duration(self._durations),
                    attributes=dict(burst.attributes),
                    requirements=requirements,
                )
                self._next_job_id += 1
                self.pool.submit_job(job)
                self.log.append(
                    t, "job-submit", job.job_id,
                    request=_resources(job.request),
                    attributes=job.attributes,
                    requirements=requirements.render(),
                    duration=job.duration,
                )

        for burst in self.scenario.service_pods:
            if burst.time != t:
                continue
            request = burst.request.vector()
            for _ in range(burst.count):
                self._service_seq += 1
                spec = PodSpec(
                    pod_name=f"{burst.name}-{self._service_seq}",
                    group=group_key_of(request, 1, 1),
                    request=request,
                    priority=burst.priority,
                    tolerations=frozenset(burst.tolerations),
                    owner_label=SERVICE_OWNER,
                )
                self.cluster.submit_pod(spec, t)
                self._service_durations[spec.pod_name] = burst.duration_s
                self.log.append(
                    t, "service-pod-submit", spec.pod_name,
                    request=_resources(request),
                    priority=spec.priority,
                    tolerations=sorted(spec.tolerations),
                    duration=burst.duration_s,
                )

        for removal in self.scenario.removals:
            if removal.time != t:
                continue
            for job_id in removal.job_ids:
                job = self.pool.jobs.get(job_id)
                if job is None or job.state is JobState.REMOVED:
                    logger.warning(f"[Harness] t={t} removal of unknown or removed job {job_id} skipped")
                    continue
                from_state = job.state.value
                pod_name = self.pool.remove_job(job_id, t)
                if pod_name is not None:
                    self._release_pod_claim(pod_name, t)
                self.log.append(t, "job-remove", job_id, from_state=from_state, pod=pod_name)

    def _schedule(self, t: int):
        for name in self.cluster.expire_pending(t):
            self.log.append(t, "pod-fail", name, reason="pending-timeout")

        result = self.cluster.schedule(t)
        for pod_name, node_id in result.bindings:
            self._on_bound(pod_name, node_id, t)

        for outcome in self.cluster.resolve_unschedulable(result.unschedulable, t):
            if not outcome.placed:
                continue
            preemptor = self.cluster.pods[outcome.pod_name]
            for victim_name in outcome.victims:
                victim = self.cluster.pods[victim_name]
                self.log.append(
                    t, "preempt", victim_name,
                    node=outcome.node_id,
                    preemptor=outcome.pod_name,
                    victim_priority=victim.spec.priority,
                    preemptor_priority=preemptor.spec.priority,
                )
                self._batch_slot_lost(victim, t, "priority")
            self._on_bound(outcome.pod_name, outcome.node_id, t)

    def _on_bound(self, pod_name: str, node_id: str, t: int):
        pod = self.cluster.pods[pod_name]
        self.log.append(t, "bind", pod_name, node=node_id)
        if pod.provisioner_owned:
            pod.last_claim_end = t
            self.pool.add_slot(Slot.for_pod(pod.spec, t))
        else:
            heapq.heappush(self._service_ends, (t + self._service_durations[pod_name], pod_name))

    def _batch_slot_lost(self, pod: PodState, t: int, reason: str):
        if not pod.provisioner_owned:
            return
        job_id = self.pool.preempt(pod.name, t)
        if job_id is not None:
            self.cum_preemptions += 1
            self.log.append(t, "job-preempt", job_id, pod=pod.name, reason=reason)

    def _negotiate(self, t: int):
        for job_id, pod_name in self.pool.negotiate(t):
            job = self.pool.jobs[job_id]
            self.cluster.pods[pod_name].current_job = job_id
            heapq.heappush(self._completions, (t + job.duration, job_id, pod_name))
            self.log.append(t, "job-start", job_id, pod=pod_name)

    def _completions_due(self, t: int):
        while self._completions and self._completions[0][0] <= t:
            _, job_id, pod_name = heapq.heappop(self._completions)
            job = self.pool.jobs[job_id]
            if job.state is not JobState.RUNNING or job.slot_name != pod_name:
                continue
            if t - job.start_time != job.duration:
                continue
            self.pool.complete(job_id, t)
            self._release_pod_claim(pod_name, t)
            self.log.append(t, "job-complete", job_id, pod=pod_name)

        while self._service_ends and self._service_ends[0][0] <= t:
            _, pod_name = heapq.heappop(self._service_ends)
            pod = self.cluster.pods.get(pod_name)
            if pod is None or pod.phase is not PodPhase.RUNNING:
                continue
            node_id = pod.bound_node
            self.cluster.terminate_pod(pod_name, t, PodPhase.SUCCEEDED)
            self.log.append(t, "pod-terminate", pod_name, node=node_id, reason="complete")

    def _release_pod_claim(self, pod_name: str, t: int):
        pod = self.cluster.pods.get(pod_name)
        if pod is not None:
            pod.current_job = None
            pod.last_claim_end = t

    def _self_terminations(self, t: int):
        for pod_name in self.pool.terminating_slots(self.config.idle_timeout_s, t):
            self.pool.drop_slot(pod_name)
            node_id = self.cluster.pods[pod_name].bound_node
            self.cluster.terminate_pod(pod_name, t, PodPhase.SUCCEEDED)
            self.log.append(t, "pod-terminate", pod_name, node=node_id, reason="self-terminate")

    def _provision(self, t: int):
        owned = sorted(
            (p for p in self.cluster.pods.values() if p.provisioner_owned),
            key=lambda p: p.name,
        )
        jobs = tuple(self.pool.jobs[i] for i in sorted(self.pool.jobs))
        actions = self.provisioner.one_iteration(PoolSnapshot(jobs=jobs, pods=tuple(owned), now=t))

        groups = sorted(set(actions.demand) | set(actions.pending))
        self.log.append(
            t, "provisioner-cycle", "provisioner",
            groups={
                g.slug: {
                    "idle": actions.demand.get(g, 0),
                    "pending": actions.pending.get(g, 0),
                    "submitted": actions.plan.get(g, 0),
                }
                for g in groups
            },
            deletions=len(actions.deletions),
        )
        for spec in actions.submissions:
            self.cluster.submit_pod(spec, t)
            self.log.append(
                t, "pod-submit", spec.pod_name,
                group=spec.group.slug,
                request=_resources(spec.request),
                priority=spec.priority,
                priority_class=spec.priority_class,
                start_filter=spec.start_filter.render(),
                advertised=dict(spec.advertised_attributes),
                tolerations=sorted(spec.tolerations),
                affinity=[rule.render() for rule in spec.affinity],
            )
        for name in actions.deletions:
            self.cluster.delete_pod(name)
            self.log.append(t, "pod-delete", name)

    def _autoscale(self, t: int):
        result = self.cluster.autoscale(t)
        for node in result.added:
            self._log_node_add(node)
        for name in result.unsatisfiable:
            if name not in self._flagged:
                self._flagged.add(name)
                pod = self.cluster.pods[name]
                self.log.append(t, "shape-unsatisfiable", name, request=_resources(pod.spec.request))
        for node_id in result.removed:
            self.log.append(t, "node-remove", node_id)

    def _log_node_add(self, node: Node):
        self.log.append(
            node.created_time, "node-add", node.node_id,
            shape=node.shape,
            capacity=_resources(node.capacity),
            labels=node.labels,
            taints=sorted(node.taints),
            ready_time=node.ready_time,
            spot=node.spot,
        )

    def _spot_kills_due(self, t: int):
        for when, target in self._spot_kills:
            if when != t:
                continue
            if target == "random":
                spot = [n for n in sorted(self.cluster.nodes) if self.cluster.nodes[n].spot]
                if not spot:
                    logger.warning(f"[Harness] t={t} random spot kill skipped, no spot nodes")
                    self.log.append(t, "spot-kill-skip", "random", reason="no spot nodes")
                    continue
                target = self._kill_rng.choice(spot)
            try:
                evicted = self.cluster.kill_node(target, t)
            except UnknownNode as e:
                logger.warning(f"[Harness] t={t} spot kill skipped: {e}")
                self.log.append(t, "spot-kill-skip", target, reason="unknown node")
                continue
            self.log.append(t, "node-kill", target, evicted=evicted)
            for name in evicted:
                self._batch_slot_lost(self.cluster.pods[name], t, "node-lost")

    def _sample(self, t: int) -> MetricsSample:
        counts = self.pool.counts()
        owned = [p for p in self.cluster.pods.values() if p.provisioner_owned]
        nodes = self.cluster.nodes.values()
        return MetricsSample(
            time=t,
            idle_jobs=counts[JobState.IDLE],
            running_jobs=counts[JobState.RUNNING],
            completed_jobs=counts[JobState.COMPLETED],
            pending_pods=sum(1 for p in owned if p.phase is PodPhase.PENDING),
            running_pods=sum(1 for p in owned if p.phase is PodPhase.RUNNING),
            nodes_total=len(self.cluster.nodes),
            gpus_allocated=sum(n.allocated.gpus for n in nodes),
            gpus_capacity=sum(n.capacity.gpus for n in nodes),
            cum_preemptions=self.cum_preemptions,
            cum_pods_submitted=self.provisioner.total_submitted,
        )

    # --- Invariants ---

    def _inject_fault(self):
        for node_id in sorted(self.cluster.nodes):
            if self.cluster.pods_on(node_id):
                node = self.cluster.nodes[node_id]
                node.capacity = ResourceVector()
                self.fault = None
                logger.debug(f"[Harness] injected capacity fault on {node_id}")
                return

    def _check_invariants(self, t: int):
        if self.fault == "capacity":
            self._inject_fault()

        problems = self.cluster.capacity_violations()

        counts = self.pool.counts()
        if sum(counts.values()) != self.pool.submitted:
            problems.append(f"job conservation broken: {self.pool.submitted} submitted, states {counts}")

        for name, pod in self.cluster.pods.items():
            if pod.provisioner_owned and pod.phase is PodPhase.RUNNING and name not in self.pool.slots:
                problems.append(f"running execute pod {name} has no slot in the pool")
        for name in self.pool.slots:
            pod = self.cluster.pods.get(name)
            if pod is None or pod.phase is not PodPhase.RUNNING:
                problems.append(f"slot {name} belongs to a pod that is not Running")

        if problems:
            raise InvariantViolation(f"t={t}: " + "; ".join(problems), self.log.last)

    # --- Clock ---

    def _next_instant(self, t: int) -> Optional[int]:
        horizon = self.scenario.horizon_s
        if t >= horizon:
            return None
        candidates = [horizon]

        for when in self._scripted_times:
            if when > t:
                candidates.append(when)
                break

        intervals = [
            self.scenario.scheduler_interval_s,
            self.scenario.negotiator_interval_s,
            self.config.cycle_interval_s,
            self.scenario.metrics_interval_s,
        ]
        candidates += [(t // i + 1) * i for i in intervals]

        if self._completions:
            candidates.append(self._completions[0][0])
        if self._service_ends:
            candidates.append(self._service_ends[0][0])

        for node in self.cluster.nodes.values():
            candidates.append(node.ready_time)
        for slot in self.pool.slots.values():
            if slot.claimed_job is None:
                candidates.append(max(slot.ready_time, slot.last_claim_end) + self.config.idle_timeout_s + 1)

        autoscaler = self.cluster.autoscaler
        if autoscaler.enabled:
            candidates += [since + autoscaler.provision_delay_s for since in self.cluster.pending_since.values()]
            candidates += [
                n.empty_since + autoscaler.scale_down_idle_s
                for n in self.cluster.nodes.values() if n.empty_since is not None
            ]
        return min(c for c in candidates if c > t)


def run(scenario: Scenario, seed: Optional[int] = None, fault: Optional[str] = None):
    """Run one scenario; returns (event records, metrics samples)."""
    return Simulation(scenario, seed=seed, fault=fault).run()
