# sim/checker.py - Omega Provisioner event-log checker
"""
Replays an event log and reports every invariant it breaks.

The replay rebuilds jobs, pods and nodes from the log alone, so a log can
be verified without the run that produced it:

  - job state machine, and no Running job left on a pod that is gone
  - per-group and total execute pod caps
  - the provisioner filter reaching every execute pod, and every pairing
    satisfying both sides' constraints and fitting the slot
  - node capacity, taints and affinity on every binding
  - preemption victims always of strictly lower priority
  - scale-down only removing empty nodes
  - no provisioner cycle submitting more than idle minus pending for a group
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Union

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, ValidationError

from core.config import parse_affinity_entry, parse_filter
from core.errors import FilterSyntax, InvalidValue, SchemaError
from core.model import (
    JOB_TRANSITIONS,
    MATCH_ALL,
    AffinityRule,
    FilterExpr,
    JobState,
    ResourceVector,
    fits,
    group_key_of,
    sum_vectors,
)

logger = logging.getLogger(__name__)


class EventLine(BaseModel):
    model_config = ConfigDict(extra="forbid")

    time: NonNegativeInt
    seq: int
    kind: str = Field(min_length=1)
    subject: str
    detail: Dict[str, Any] = Field(default_factory=dict)


def parse_event_lines(text: str) -> List[Dict[str, Any]]:
    """JSONL -> list of event dicts. Blank lines are skipped."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            event = EventLine.model_validate_json(line)
        except ValidationError as e:
            first = e.errors()[0]
            where = ".".join(str(p) for p in first["loc"])
            raise SchemaError(f"line {lineno}" + (f".{where}" if where else ""), first["msg"])
        records.append(event.model_dump())
    return records


def _vector(raw: Dict[str, int]) -> ResourceVector:
    return ResourceVector(**raw)


@dataclass
class _Job:
    request: ResourceVector
    attributes: Dict[str, str]
    requirements: FilterExpr
    state: JobState = JobState.IDLE
    pod: Optional[str] = None


@dataclass
class _Pod:
    request: ResourceVector
    priority: int
    tolerations: Set[str]
    provisioner_owned: bool
    group: Optional[str] = None
    affinity: List[AffinityRule] = field(default_factory=list)
    start_filter: FilterExpr = MATCH_ALL
    start_filter_text: str = ""
    advertised: Dict[str, str] = field(default_factory=dict)
    phase: str = "Pending"
    node: Optional[str] = None
    job: Optional[int] = None


@dataclass
class _Node:
    capacity: ResourceVector
    labels: Dict[str, str]
    taints: Set[str]
    ready_time: int
    pods: Set[str] = field(default_factory=set)

    def used(self, pods: Dict[str, _Pod]) -> ResourceVector:
        return sum_vectors(pods[name].request for name in self.pods)


class LogReplay:
    """Event-by-event replay; `violations` collects human-readable findings."""

    def __init__(self):
        self.jobs: Dict[int, _Job] = {}
        self.pods: Dict[str, _Pod] = {}
        self.nodes: Dict[str, _Node] = {}
        self.violations: List[str] = []
        self.filter: FilterExpr = MATCH_ALL
        self.filter_text: Optional[str] = None
        self.mem_quantum = 1
        self.disk_quantum = 1
        self.allowance: Optional[Dict[str, int]] = None
        self._last_key = None
        self.max_pods_per_group: Optional[int] = None
        self.max_total_pods: Optional[int] = None
        self._instant: Optional[int] = None
        self._orphaned: Set[int] = set()

    def _flag(self, event: Dict[str, Any], message: str):
        self.violations.append(f"t={event['time']} seq={event['seq']} {event['kind']} {event['subject']}: {message}")

    # --- Replay ---

    def feed(self, event: Dict[str, Any]):
        key = (event["time"], event["seq"])
        if self._last_key is not None and key <= self._last_key:
            self._flag(event, f"(time, seq) not increasing after {self._last_key}")
        self._last_key = key
        if self._instant is not None and event["time"] != self._instant:
            self._check_claims(self._instant)
        self._instant = event["time"]

        handler = getattr(self, "_on_" + event["kind"].replace("-", "_"), None)
        if handler is None:
            logger.debug(f"[Checker] no checks for event kind '{event['kind']}'")
            return
        try:
            handler(event, event["detail"])
        except (KeyError, TypeError, ValueError, FilterSyntax, InvalidValue) as e:
            self._flag(event, f"malformed or unexpected event ({e.__class__.__name__}: {e})")

    def finish(self):
        if self._instant is not None:
            self._check_claims(self._instant)

    def _check_claims(self, time: int):
        """At the end of an instant every Running job must sit on a Running execute pod."""
        for job_id in sorted(self.jobs):
            job = self.jobs[job_id]
            if job.state is not JobState.RUNNING or job_id in self._orphaned:
                continue
            pod = self.pods.get(job.pod) if job.pod else None
            if pod is None or pod.phase != "Running":
                self._orphaned.add(job_id)
                self.violations.append(
                    f"t={time} job {job_id} lost: still Running on {job.pod}, which is "
                    f"{pod.phase if pod else 'gone'}"
                )

    # --- Jobs ---

    def _job_transition(self, event, job_id: int, new_state: JobState) -> Optional[_Job]:
        job = self.jobs.get(job_id)
        if job is None:
            self._flag(event, f"job {job_id} was never submitted")
            return None
        if new_state not in JOB_TRANSITIONS[job.state]:
            self._flag(event, f"illegal job transition {job.state.value} -> {new_state.value}")
            return None
        job.state = new_state
        return job

    def _on_run_start(self, event, detail):
        self.filter_text = detail.get("filter", "")
        self.filter = parse_filter(self.filter_text)
        self.mem_quantum = detail.get("mem_quantum_mib", 1)
        self.disk_quantum = detail.get("disk_quantum_mib", 1)
        self.max_pods_per_group = detail.get("max_pods_per_group")
        self.max_total_pods = detail.get("max_total_pods")

    def _on_job_submit(self, event, detail):
        job_id = int(event["subject"])
        if job_id in self.jobs:
            self._flag(event, "job submitted twice")
            return
        self.jobs[job_id] = _Job(
            request=_vector(detail["request"]),
            attributes=dict(detail.get("attributes", {})),
            requirements=parse_filter(detail.get("requirements", "")),
        )

    def _on_job_start(self, event, detail):
        job_id, pod_name = int(event["subject"]), detail["pod"]
        pod = self.pods.get(pod_name)
        if pod is None or not pod.provisioner_owned or pod.phase != "Running":
            self._flag(event, f"job started on {pod_name}, which is not a Running execute pod")
            return
        if pod.job is not None:
            self._flag(event, f"slot {pod_name} already runs job {pod.job}")
        job = self.jobs.get(job_id)
        if job is not None:
            if not fits(job.request, pod.request):
                self._flag(event, f"job request {job.request.as_dict()} exceeds slot {pod.request.as_dict()}")
            if not pod.start_filter.matches(job.attributes):
                self._flag(event, f"job attributes fail the START filter of {pod_name}")
            if not job.requirements.matches(pod.advertised):
                self._flag(event, f"slot {pod_name} fails the job requirements")
        job = self._job_transition(event, job_id, JobState.RUNNING)
        if job is not None:
            job.pod = pod_name
            pod.job = job_id

    def _end_claim(self, event, job_id: int, new_state: JobState):
        job = self.jobs.get(job_id)
        pod_name = job.pod if job is not None else None
        if self._job_transition(event, job_id, new_state) is None:
            return
        if pod_name is not None and pod_name in self.pods:
            self.pods[pod_name].job = None
        job.pod = None

    def _on_job_complete(self, event, detail):
        job = self.jobs.get(int(event["subject"]))
        if job is not None and job.pod != detail.get("pod"):
            self._flag(event, f"job completed on {detail.get('pod')} but ran on {job.pod}")
        self._end_claim(event, int(event["subject"]), JobState.COMPLETED)

    def _on_job_preempt(self, event, detail):
        pod = self.pods.get(detail.get("pod"))
        if pod is not None and pod.phase == "Running":
            self._flag(event, f"job preempted while {detail.get('pod')} is still Running")
        self._end_claim(event, int(event["subject"]), JobState.IDLE)

    def _on_job_remove(self, event, detail):
        self._end_claim(event, int(event["subject"]), JobState.REMOVED)

    # --- Pods ---

    def _on_pod_submit(self, event, detail):
        name = event["subject"]
        if self.allowance is None:
            self._flag(event, "pod submitted outside a provisioner cycle")
        else:
            group = detail["group"]
            self.allowance[group] = self.allowance.get(group, 0) - 1
            if self.allowance[group] < 0:
                self._flag(event, f"group {group} got more pods than its deficit")
        if self.filter_text is not None and detail.get("start_filter", "") != self.filter_text:
            self._flag(event, f"START filter {detail.get('start_filter')!r} differs from the provisioner filter {self.filter_text!r}")
        self.pods[name] = _Pod(
            request=_vector(detail["request"]),
            priority=detail["priority"],
            tolerations=set(detail.get("tolerations", [])),
            provisioner_owned=True,
            group=detail["group"],
            affinity=[parse_affinity_entry(a) for a in detail.get("affinity", [])],
            start_filter=parse_filter(detail.get("start_filter", "")),
            start_filter_text=detail.get("start_filter", ""),
            advertised=dict(detail.get("advertised", {})),
        )
        self._check_caps(event, detail["group"])

    def _check_caps(self, event, group: str):
        live = [p for p in self.pods.values() if p.provisioner_owned and p.phase in ("Pending", "Running")]
        in_group = sum(1 for p in live if p.group == group)
        if self.max_pods_per_group is not None and in_group > self.max_pods_per_group:
            self._flag(event, f"group {group} has {in_group} live pods, cap is {self.max_pods_per_group}")
        if self.max_total_pods is not None and len(live) > self.max_total_pods:
            self._flag(event, f"{len(live)} live execute pods, cap is {self.max_total_pods}")

    def _on_service_pod_submit(self, event, detail):
        self.pods[event["subject"]] = _Pod(
            request=_vector(detail["request"]),
            priority=detail["priority"],
            tolerations=set(detail.get("tolerations", [])),
            provisioner_owned=False,
        )

    def _on_bind(self, event, detail):
        pod = self.pods.get(event["subject"])
        node = self.nodes.get(detail["node"])
        if pod is None or node is None:
            self._flag(event, "bind of an unknown pod or onto an unknown node")
            return
        if pod.phase != "Pending":
            self._flag(event, f"pod bound while {pod.phase}")
        if event["time"] < node.ready_time:
            self._flag(event, f"node {detail['node']} not ready until {node.ready_time}")
        untolerated = node.taints - pod.tolerations
        if untolerated:
            self._flag(event, f"taints {sorted(untolerated)} not tolerated")
        if not all(rule.satisfied_by(node.labels) for rule in pod.affinity):
            self._flag(event, "node labels fail the pod's affinity")
        node.pods.add(event["subject"])
        if not fits(node.used(self.pods), node.capacity):
            self._flag(event, f"node {detail['node']} over capacity")
        pod.phase = "Running"
        pod.node = detail["node"]

    def _release(self, name: str, phase: str):
        pod = self.pods[name]
        pod.phase = phase
        node = self.nodes.get(pod.node) if pod.node else None
        if node is not None:
            node.pods.discard(name)

    def _on_preempt(self, event, detail):
        victim = self.pods.get(event["subject"])
        preemptor = self.pods.get(detail["preemptor"])
        if victim is None or preemptor is None:
            self._flag(event, "preemption names an unknown pod")
            return
        if victim.priority >= preemptor.priority:
            self._flag(event, f"victim priority {victim.priority} is not below preemptor priority {preemptor.priority}")
        if victim.phase != "Running":
            self._flag(event, f"victim is {victim.phase}, not Running")
        self._release(event["subject"], "Failed")

    def _on_pod_terminate(self, event, detail):
        pod = self.pods.get(event["subject"])
        if pod is None or pod.phase != "Running":
            self._flag(event, "terminated pod is not Running")
            return
        if detail.get("reason") == "self-terminate" and pod.job is not None:
            self._flag(event, f"slot self-terminated while running job {pod.job}")
        self._release(event["subject"], "Succeeded")

    def _on_pod_fail(self, event, detail):
        pod = self.pods.get(event["subject"])
        if pod is None or pod.phase in ("Succeeded", "Failed"):
            self._flag(event, "failed pod is unknown or already finished")
            return
        self._release(event["subject"], "Failed")

    def _on_pod_delete(self, event, detail):
        pod = self.pods.pop(event["subject"], None)
        if pod is None or pod.phase not in ("Succeeded", "Failed"):
            self._flag(event, "only finished pods may be deleted")

    # --- Nodes ---

    def _on_node_add(self, event, detail):
        self.nodes[event["subject"]] = _Node(
            capacity=_vector(detail["capacity"]),
            labels=dict(detail.get("labels", {})),
            taints=set(detail.get("taints", [])),
            ready_time=detail.get("ready_time", event["time"]),
        )

    def _on_node_remove(self, event, detail):
        node = self.nodes.pop(event["subject"], None)
        if node is None:
            self._flag(event, "removal of an unknown node")
        elif node.pods:
            self._flag(event, f"scale-down removed a node with {len(node.pods)} pods")

    def _on_node_kill(self, event, detail):
        node = self.nodes.pop(event["subject"], None)
        if node is None:
            self._flag(event, "kill of an unknown node")
            return
        if set(detail.get("evicted", [])) != node.pods:
            self._flag(event, "evicted pods do not match the pods bound to the node")
        for name in node.pods:
            self.pods[name].phase = "Failed"

    # --- Provisioner ---

    def _on_provisioner_cycle(self, event, detail):
        idle = Counter(
            group_key_of(job.request, self.mem_quantum, self.disk_quantum).slug
            for job in self.jobs.values()
            if job.state is JobState.IDLE and self.filter.matches(job.attributes)
        )
        pending = Counter(
            pod.group for pod in self.pods.values()
            if pod.provisioner_owned and pod.phase == "Pending"
        )
        self.allowance = {}
        for group, counts in detail.get("groups", {}).items():
            deficit = max(0, idle[group] - pending[group])
            if counts.get("submitted", 0) > deficit:
                self._flag(event, f"group {group} planned {counts['submitted']} > deficit {deficit}")
            if counts.get("idle") != idle[group] or counts.get("pending") != pending[group]:
                self._flag(
                    event,
                    f"group {group} reported idle={counts.get('idle')} pending={counts.get('pending')}, "
                    f"replay has idle={idle[group]} pending={pending[group]}",
                )
            self.allowance[group] = min(counts.get("submitted", 0), deficit)


def check_events(records: Iterable[Union[Dict[str, Any], Any]]) -> List[str]:
    """Replay `records` (dicts or EventRecords) and return the violations found."""
    replay = LogReplay()
    for record in records:
        event = record if isinstance(record, dict) else record.as_dict()
        replay.feed(event)
    replay.finish()
    return replay.violations
