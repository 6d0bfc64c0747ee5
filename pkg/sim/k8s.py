# sim/k8s.py - Omega Provisioner container cluster simulator
"""
A small, deterministic model of the container orchestrator.

Covers what the provisioner interacts with:
  - scheduling Pending pods onto ready nodes (taints, affinity, capacity),
    best-fit so that nodes fill up before new ones are used
  - priority preemption of lower-priority pods
  - node loss (spot reclaim, maintenance)
  - node auto-provisioning driven by unschedulable pods, and removal of
    nodes that stayed empty
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from core.errors import IllegalTransition, ShapeUnsatisfiable, UnknownNode
from core.model import Node, NodeShape, PodPhase, PodSpec, PodState, ResourceVector, fits

logger = logging.getLogger(__name__)

# Above these sizes the scheduler keeps its greedy answer
EXACT_SEARCH_MAX_PODS = 6
EXACT_SEARCH_MAX_NODES = 3


@dataclass
class AutoscalerParams:
    provision_delay_s: int = 0
    scale_down_idle_s: int = 600
    max_nodes: int = 100
    enabled: bool = False

    def __post_init__(self):
        if self.provision_delay_s < 0 or self.scale_down_idle_s < 0:
            raise ValueError("autoscaler delays must be >= 0")
        if self.max_nodes < 0:
            raise ValueError("max_nodes must be >= 0")


@dataclass(frozen=True)
class PreemptionPlan:
    node_id: str
    victims: Tuple[str, ...]


@dataclass
class ScheduleResult:
    bindings: List[Tuple[str, str]] = field(default_factory=list)
    unschedulable: List[str] = field(default_factory=list)


@dataclass
class PreemptionOutcome:
    pod_name: str
    node_id: Optional[str] = None
    victims: Tuple[str, ...] = ()

    @property
    def placed(self) -> bool:
        return self.node_id is not None


@dataclass
class AutoscaleResult:
    added: List[Node] = field(default_factory=list)
    removed: List[str] = field(default_factory=list)
    unsatisfiable: List[str] = field(default_factory=list)


# --- Predicates ---

def taints_tolerated(pod: PodSpec, node: Node) -> bool:
    return node.taints <= pod.tolerations


def affinity_satisfied(pod: PodSpec, node: Node) -> bool:
    return all(rule.satisfied_by(node.labels) for rule in pod.affinity)


def placement_allowed(pod: PodSpec, node: Node) -> bool:
    return taints_tolerated(pod, node) and affinity_satisfied(pod, node)


def feasible(pod: PodSpec, node: Node) -> bool:
    return placement_allowed(pod, node) and fits(pod.request, node.free)


def _fit_score(free_after: ResourceVector, node_id: str):
    """Least free capacity left after placement wins; node_id breaks ties."""
    return (free_after.gpus, free_after.cpus_milli, free_after.memory_mib, free_after.disk_mib, node_id)


def _ffd_key(pod: PodState):
    r = pod.spec.request
    return (-r.gpus, -r.cpus_milli, -r.memory_mib, -r.disk_mib, pod.name)


class Cluster:
    """Nodes, pods and the autoscaler state of one simulated cluster."""

    def __init__(
        self,
        shapes: Sequence[NodeShape],
        autoscaler: Optional[AutoscalerParams] = None,
        pod_pending_timeout_s: Optional[int] = None,
    ):
        self.shapes: Dict[str, NodeShape] = {s.name: s for s in shapes}
        self.autoscaler = autoscaler or AutoscalerParams()
        self.pod_pending_timeout_s = pod_pending_timeout_s
        self.nodes: Dict[str, Node] = {}
        self.pods: Dict[str, PodState] = {}
        self.pending_since: Dict[str, int] = {}
        self._bound: Dict[str, Set[str]] = {}
        self._node_seq: Dict[str, int] = defaultdict(int)
        self._flagged: Set[str] = set()

    # --- Nodes ---

    def add_node(self, shape_name: str, now: int, ready_time: Optional[int] = None,
                 spot: Optional[bool] = None) -> Node:
        shape = self.shapes[shape_name]
        self._node_seq[shape_name] += 1
        node = Node(
            node_id=f"{shape_name}-{self._node_seq[shape_name]:03d}",
            shape=shape_name,
            capacity=shape.capacity,
            labels=dict(shape.labels),
            taints=shape.taints,
            created_time=now,
            ready_time=now + shape.boot_delay if ready_time is None else ready_time,
            spot=shape.spot if spot is None else spot,
        )
        self.nodes[node.node_id] = node
        self._bound[node.node_id] = set()
        if node.is_ready(now):
            node.empty_since = now
        return node

    def mark_ready(self, now: int) -> List[Node]:
        """Nodes whose boot finished exactly now."""
        ready = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.ready_time == now and node.created_time < now:
                if not self._bound[node_id]:
                    node.empty_since = now
                ready.append(node)
        return ready

    def ready_nodes(self, now: int) -> List[Node]:
        return [self.nodes[n] for n in sorted(self.nodes) if self.nodes[n].is_ready(now)]

    def pods_on(self, node_id: str) -> List[PodState]:
        return [self.pods[name] for name in sorted(self._bound.get(node_id, ()))]

    def kill_node(self, node_id: str, now: int) -> List[str]:
        if node_id not in self.nodes:
            raise UnknownNode(f"no such node: {node_id}")
        evicted = sorted(self._bound.pop(node_id))
        for name in evicted:
            pod = self.pods[name]
            pod.phase = PodPhase.FAILED
            pod.terminated_time = now
            pod.current_job = None
        del self.nodes[node_id]
        logger.info(f"[Scheduler] t={now} node {node_id} lost, {len(evicted)} pods failed")
        return evicted

    def remove_node(self, node_id: str):
        if self._bound.get(node_id):
            raise IllegalTransition(f"node {node_id} still has pods bound")
        del self.nodes[node_id]
        del self._bound[node_id]

    # --- Pods ---

    def submit_pod(self, spec: PodSpec, now: int) -> PodState:
        if spec.pod_name in self.pods:
            raise IllegalTransition(f"pod {spec.pod_name} already exists")
        pod = PodState(spec=spec, created_time=now)
        self.pods[spec.pod_name] = pod
        return pod

    def delete_pod(self, name: str):
        pod = self.pods[name]
        if not pod.phase.terminal:
            raise IllegalTransition(f"pod {name} is {pod.phase.value}; only finished pods are deleted")
        del self.pods[name]

    def pending_pods(self) -> List[PodState]:
        pending = [p for p in self.pods.values() if p.phase is PodPhase.PENDING]
        return sorted(pending, key=lambda p: (-p.spec.priority, p.created_time, p.name))

    def _bind(self, pod: PodState, node: Node, now: int):
        if pod.phase is not PodPhase.PENDING:
            raise IllegalTransition(f"pod {pod.name} is {pod.phase.value}, cannot bind")
        pod.phase = PodPhase.RUNNING
        pod.bound_node = node.node_id
        pod.scheduled_time = now
        node.allocated = node.allocated + pod.spec.request
        node.empty_since = None
        self._bound[node.node_id].add(pod.name)
        self.pending_since.pop(pod.name, None)

    def terminate_pod(self, name: str, now: int, phase: PodPhase = PodPhase.SUCCEEDED):
        """Running or Pending pod -> terminal phase, freeing its node share."""
        pod = self.pods[name]
        if pod.phase.terminal:
            raise IllegalTransition(f"pod {name} already {pod.phase.value}")
        if pod.phase is PodPhase.RUNNING and pod.bound_node in self.nodes:
            node = self.nodes[pod.bound_node]
            node.allocated = node.allocated - pod.spec.request
            self._bound[node.node_id].discard(name)
            if not self._bound[node.node_id]:
                node.empty_since = now
        pod.phase = phase
        pod.terminated_time = now
        pod.current_job = None
        self.pending_since.pop(name, None)

    def expire_pending(self, now: int) -> List[str]:
        if self.pod_pending_timeout_s is None:
            return []
        expired = [
            p.name for p in self.pending_pods()
            if now - p.created_time >= self.pod_pending_timeout_s
        ]
        for name in expired:
            self.terminate_pod(name, now, PodPhase.FAILED)
        return sorted(expired)

    # --- Scheduling ---

    def schedule(self, now: int) -> ScheduleResult:
        """Bind Pending pods, highest priority first, best-fit onto ready nodes."""
        pending = self.pending_pods()
        ready = self.ready_nodes(now)
        free = {n.node_id: n.free for n in ready}

        placements: Dict[str, str] = {}
        unplaced: List[PodState] = []
        for pod in pending:
            node_id = self._best_node(pod.spec, ready, free)
            if node_id is None:
                unplaced.append(pod)
                continue
            placements[pod.name] = node_id
            free[node_id] = free[node_id] - pod.spec.request

        if unplaced and len(pending) <= EXACT_SEARCH_MAX_PODS and len(ready) <= EXACT_SEARCH_MAX_NODES:
            complete = self._complete_placement(pending, ready)
            if complete is not None:
                placements, unplaced = complete, []

        result = ScheduleResult()
        for pod in pending:
            node_id = placements.get(pod.name)
            if node_id is not None:
                self._bind(pod, self.nodes[node_id], now)
                result.bindings.append((pod.name, node_id))
        result.unschedulable = [p.name for p in unplaced]
        return result

    @staticmethod
    def _best_node(spec: PodSpec, ready: Sequence[Node], free: Dict[str, ResourceVector]) -> Optional[str]:
        best = None
        for node in ready:
            if not placement_allowed(spec, node) or not fits(spec.request, free[node.node_id]):
                continue
            score = _fit_score(free[node.node_id] - spec.request, node.node_id)
            if best is None or score < best:
                best = score
        return best[-1] if best else None

    def _complete_placement(self, pending: Sequence[PodState], ready: Sequence[Node]) -> Optional[Dict[str, str]]:
        """Depth-first search for a placement of every pending pod, best-fit order first."""
        free = {n.node_id: n.free for n in ready}
        for pod in pending:
            if not any(placement_allowed(pod.spec, n) and fits(pod.spec.request, free[n.node_id]) for n in ready):
                return None

        placements: Dict[str, str] = {}

        def place(i: int) -> bool:
            if i == len(pending):
                return True
            spec = pending[i].spec
            options = sorted(
                _fit_score(free[n.node_id] - spec.request, n.node_id)
                for n in ready
                if placement_allowed(spec, n) and fits(spec.request, free[n.node_id])
            )
            for score in options:
                node_id = score[-1]
                free[node_id] = free[node_id] - spec.request
                placements[spec.pod_name] = node_id
                if place(i + 1):
                    return True
                free[node_id] = free[node_id] + spec.request
                del placements[spec.pod_name]
            return False

        return dict(placements) if place(0) else None

    def try_preempt(self, spec: PodSpec, now: int) -> Optional[PreemptionPlan]:
        """Fewest strictly-lower-priority victims that make room, lowest priority and newest first."""
        best: Optional[PreemptionPlan] = None
        for node in self.ready_nodes(now):
            if not placement_allowed(spec, node) or not fits(spec.request, node.capacity):
                continue
            victims = sorted(
                (p for p in self.pods_on(node.node_id) if p.spec.priority < spec.priority),
                key=lambda p: (p.spec.priority, -p.created_time, p.name),
            )
            freed = node.free
            chosen: List[str] = []
            for victim in victims:
                if fits(spec.request, freed):
                    break
                freed = freed + victim.spec.request
                chosen.append(victim.name)
            if not fits(spec.request, freed):
                continue
            if best is None or len(chosen) < len(best.victims):
                best = PreemptionPlan(node.node_id, tuple(chosen))
        return best

    def resolve_unschedulable(self, names: Sequence[str], now: int) -> List[PreemptionOutcome]:
        """Second chance for pods the scheduler could not place.

        A pod first tries capacity freed by earlier preemptions in this pass,
        then preemption. Pods still homeless are marked unschedulable.
        """
        outcomes = []
        for name in names:
            pod = self.pods[name]
            if pod.phase is not PodPhase.PENDING:
                continue
            ready = self.ready_nodes(now)
            node_id = self._best_node(pod.spec, ready, {n.node_id: n.free for n in ready})
            if node_id is not None:
                self._bind(pod, self.nodes[node_id], now)
                outcomes.append(PreemptionOutcome(name, node_id))
                continue
            plan = self.try_preempt(pod.spec, now)
            if plan is None:
                self.pending_since.setdefault(name, now)
                outcomes.append(PreemptionOutcome(name))
                continue
            for victim in plan.victims:
                self.terminate_pod(victim, now, PodPhase.FAILED)
            self._bind(pod, self.nodes[plan.node_id], now)
            logger.info(
                f"[Scheduler] t={now} {name} (priority {pod.spec.priority}) preempted "
                f"{len(plan.victims)} pods on {plan.node_id}"
            )
            outcomes.append(PreemptionOutcome(name, plan.node_id, plan.victims))
        return outcomes

    # --- Node auto-provisioning ---

    def smallest_shape_for(self, spec: PodSpec, now: int) -> NodeShape:
        for shape in sorted(self.shapes.values(), key=lambda s: (s.size_key(), s.name)):
            probe = Node(node_id="probe", shape=shape.name, capacity=shape.capacity,
                         labels=dict(shape.labels), taints=shape.taints)
            if feasible(spec, probe):
                return shape
        raise ShapeUnsatisfiable(f"pod {spec.pod_name} fits no node shape in the catalog")

    def autoscale(self, now: int) -> AutoscaleResult:
        result = AutoscaleResult()
        if not self.autoscaler.enabled:
            return result
        self._scale_up(now, result)
        self._scale_down(now, result)
        return result

    def _scale_up(self, now: int, result: AutoscaleResult):
        waiting = sorted(
            (
                self.pods[name] for name, since in self.pending_since.items()
                if self.pods[name].phase is PodPhase.PENDING
                and now - since >= self.autoscaler.provision_delay_s
            ),
            key=_ffd_key,
        )
        if not waiting:
            return

        # First-fit decreasing into the spare room of existing nodes (a node that
        # turned ready between scheduler ticks still counts), then into new ones
        bins = [self.nodes[i] for i in sorted(self.nodes)]
        spare = {n.node_id: n.free for n in bins}
        for pod in waiting:
            spec = pod.spec
            target = next(
                (n for n in bins if placement_allowed(spec, n) and fits(spec.request, spare[n.node_id])),
                None,
            )
            if target is None:
                try:
                    shape = self.smallest_shape_for(spec, now)
                except ShapeUnsatisfiable as e:
                    if pod.name not in self._flagged:
                        self._flagged.add(pod.name)
                        logger.warning(f"[Autoscaler] {e}")
                    result.unsatisfiable.append(pod.name)
                    continue
                if len(self.nodes) >= self.autoscaler.max_nodes:
                    logger.debug(f"[Autoscaler] t={now} max_nodes={self.autoscaler.max_nodes} reached")
                    continue
                target = self.add_node(shape.name, now)
                bins.append(target)
                spare[target.node_id] = target.free
                result.added.append(target)
            spare[target.node_id] = spare[target.node_id] - spec.request

        if result.added:
            logger.info(
                f"[Autoscaler] t={now} adding {len(result.added)} nodes for {len(waiting)} waiting pods"
            )

    def _scale_down(self, now: int, result: AutoscaleResult):
        pending = self.pending_pods()
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if not node.is_ready(now) or self._bound[node_id] or node.empty_since is None:
                continue
            # Kept for a Pending pod the next scheduler tick will bind here
            if any(feasible(p.spec, node) for p in pending):
                continue
            if now - node.empty_since >= self.autoscaler.scale_down_idle_s:
                self.remove_node(node_id)
                result.removed.append(node_id)
        if result.removed:
            logger.info(f"[Autoscaler] t={now} removed {len(result.removed)} empty nodes")

    # --- Accounting ---

    def capacity_violations(self) -> List[str]:
        problems = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            used = ResourceVector()
            for pod in self.pods_on(node_id):
                used = used + pod.spec.request
                if not taints_tolerated(pod.spec, node):
                    problems.append(f"pod {pod.name} on {node_id} does not tolerate {sorted(node.taints - pod.spec.tolerations)}")
            if not fits(used, node.capacity):
                problems.append(f"node {node_id} over capacity: {used.as_dict()} > {node.capacity.as_dict()}")
        for pod in self.pods.values():
            if pod.phase is PodPhase.RUNNING and pod.bound_node not in self.nodes:
                problems.append(f"running pod {pod.name} bound to missing node {pod.bound_node}")
        return problems
