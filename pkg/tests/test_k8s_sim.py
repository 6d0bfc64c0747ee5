# tests/test_k8s_sim.py
import itertools
import random

import pytest

from core.errors import IllegalTransition, ShapeUnsatisfiable, UnknownNode
from core.model import AffinityRule, NodeShape, PodPhase, ResourceVector, fits
from sim.k8s import AutoscalerParams, Cluster, feasible

from conftest import vec


def gpu_shape(name, gpus):
    return NodeShape(name, ResourceVector(64000, gpus, 262144, 1048576))


def cluster_with(shapes, **autoscaler):
    return Cluster(shapes, AutoscalerParams(enabled=True, **autoscaler))


def submit(cluster, make_pod, name, now=0, **kw):
    return cluster.submit_pod(make_pod(name, **kw).spec, now)


class TestPredicates:
    def test_capacity(self, make_pod, make_node):
        node = make_node("n1", capacity=vec(gpus=2))
        assert feasible(make_pod("p", request=vec(gpus=2)).spec, node)
        assert not feasible(make_pod("p", request=vec(gpus=3)).spec, node)

    def test_taints_need_tolerations(self, make_pod, make_node):
        node = make_node("n1", taints={"nautilus.io/noceph"})
        assert not feasible(make_pod("p").spec, node)
        assert feasible(make_pod("p", tolerations={"nautilus.io/noceph", "other"}).spec, node)

    def test_affinity(self, make_pod, make_node):
        rules = (
            AffinityRule("nautilus.io/low-power", ("true",), negated=True),
            AffinityRule("gpu-type", ("A100", "A40", "V100")),
        )
        pod = make_pod("p", affinity=rules).spec
        assert feasible(pod, make_node("n1", labels={"gpu-type": "A40"}))
        assert not feasible(pod, make_node("n2", labels={"gpu-type": "T4"}))
        assert not feasible(pod, make_node("n3", labels={"gpu-type": "A40", "nautilus.io/low-power": "true"}))
        assert feasible(pod, make_node("n4", labels={"gpu-type": "A40", "nautilus.io/low-power": "false"}))


class TestNodes:
    def test_ids_count_per_shape(self, gpu7_shape):
        small = gpu_shape("gpu2", 2)
        cluster = Cluster([gpu7_shape, small])
        ids = [cluster.add_node(s, 0).node_id for s in ("gpu7", "gpu2", "gpu7")]
        assert ids == ["gpu7-001", "gpu2-001", "gpu7-002"]

    def test_boot_delay_and_ready(self, gpu7_shape):
        cluster = Cluster([gpu7_shape])
        node = cluster.add_node("gpu7", 10)
        assert node.ready_time == 130
        assert cluster.ready_nodes(129) == []
        assert cluster.mark_ready(130) == [node]
        assert node.empty_since == 130

    def test_kill_node_fails_its_pods(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape])
        node = cluster.add_node("gpu7", 0, ready_time=0)
        for name in ("b", "a"):
            submit(cluster, make_pod, name)
        cluster.schedule(0)
        assert cluster.kill_node(node.node_id, 50) == ["a", "b"]
        assert all(cluster.pods[n].phase is PodPhase.FAILED for n in ("a", "b"))
        assert node.node_id not in cluster.nodes

    def test_kill_unknown_node(self, gpu7_shape):
        with pytest.raises(UnknownNode):
            Cluster([gpu7_shape]).kill_node("gpu7-404", 0)

    def test_remove_busy_node(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape])
        node = cluster.add_node("gpu7", 0, ready_time=0)
        submit(cluster, make_pod, "p")
        cluster.schedule(0)
        with pytest.raises(IllegalTransition):
            cluster.remove_node(node.node_id)


class TestPods:
    def test_delete_only_finished(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape])
        submit(cluster, make_pod, "p")
        with pytest.raises(IllegalTransition):
            cluster.delete_pod("p")
        cluster.terminate_pod("p", 5, PodPhase.FAILED)
        cluster.delete_pod("p")
        assert "p" not in cluster.pods

    def test_pending_timeout(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape], pod_pending_timeout_s=300)
        submit(cluster, make_pod, "p")
        assert cluster.expire_pending(299) == []
        assert cluster.expire_pending(300) == ["p"]
        assert cluster.pods["p"].phase is PodPhase.FAILED

    def test_terminate_frees_capacity(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape])
        node = cluster.add_node("gpu7", 0, ready_time=0)
        submit(cluster, make_pod, "p")
        cluster.schedule(0)
        cluster.terminate_pod("p", 40)
        assert node.allocated == ResourceVector()
        assert node.empty_since == 40


class TestSchedule:
    def test_eight_pods_on_seven_gpus(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape])
        cluster.add_node("gpu7", 0, ready_time=0)
        for i in range(8):
            submit(cluster, make_pod, f"p{i}", now=i)
        result = cluster.schedule(10)
        assert len(result.bindings) == 7
        assert result.unschedulable == ["p7"]

    def test_best_fit(self, make_pod):
        cluster = Cluster([gpu_shape("gpu4", 4), gpu_shape("gpu2", 2)])
        cluster.add_node("gpu4", 0, ready_time=0)
        cluster.add_node("gpu2", 0, ready_time=0)
        submit(cluster, make_pod, "p", request=vec(gpus=2))
        assert cluster.schedule(0).bindings == [("p", "gpu2-001")]

    def test_priority_first(self, make_pod):
        cluster = Cluster([gpu_shape("gpu1", 1)])
        cluster.add_node("gpu1", 0, ready_time=0)
        submit(cluster, make_pod, "low", now=0, priority=10)
        submit(cluster, make_pod, "high", now=5, priority=1000)
        result = cluster.schedule(10)
        assert result.bindings == [("high", "gpu1-001")]
        assert result.unschedulable == ["low"]

    def test_booting_nodes_take_nothing(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape])
        cluster.add_node("gpu7", 0)
        submit(cluster, make_pod, "p")
        assert cluster.schedule(60).unschedulable == ["p"]

    def test_finds_complete_placement_greedy_misses(self, make_pod):
        # Best-fit sends the first pod to the smaller node and strands the 3-GPU pod
        cluster = Cluster([gpu_shape("gpu4", 4), gpu_shape("gpu3", 3)])
        cluster.add_node("gpu4", 0, ready_time=0)
        cluster.add_node("gpu3", 0, ready_time=0)
        submit(cluster, make_pod, "a", now=0, request=vec(gpus=2))
        submit(cluster, make_pod, "b", now=1, request=vec(gpus=2))
        submit(cluster, make_pod, "c", now=2, request=vec(gpus=3))
        result = cluster.schedule(5)
        assert result.unschedulable == []
        assert sorted(result.bindings) == [("a", "gpu4-001"), ("b", "gpu4-001"), ("c", "gpu3-001")]
        assert cluster.capacity_violations() == []

    def test_against_exhaustive_search(self, make_pod):
        rng = random.Random("scheduler-oracle")
        for trial in range(500):
            n_nodes, n_pods = rng.randint(1, 3), rng.randint(1, 6)
            shapes = [
                NodeShape(f"s{i}", ResourceVector(rng.randint(1, 8) * 1000, rng.randint(0, 4), 16384, 16384))
                for i in range(n_nodes)
            ]
            requests = [
                ResourceVector(rng.randint(1, 4) * 1000, rng.randint(0, 2), 4096, 4096)
                for _ in range(n_pods)
            ]
            cluster = Cluster(shapes)
            nodes = [cluster.add_node(s.name, 0, ready_time=0) for s in shapes]
            for i, request in enumerate(requests):
                submit(cluster, make_pod, f"p{i}", now=i, request=request)

            def load(choice, k):
                return sum((requests[i] for i, n in enumerate(choice) if n == k), ResourceVector())

            placeable = any(
                all(fits(load(choice, k), node.capacity) for k, node in enumerate(nodes))
                for choice in itertools.product(range(n_nodes), repeat=n_pods)
            )
            result = cluster.schedule(0)
            assert cluster.capacity_violations() == [], trial
            if placeable:
                assert result.unschedulable == [], trial


class TestPreemption:
    def fill(self, make_pod, n=7):
        cluster = Cluster([gpu_shape("gpu7", 7)])
        cluster.add_node("gpu7", 0, ready_time=0)
        for i in range(n):
            submit(cluster, make_pod, f"batch-{i}", now=i, priority=100)
        cluster.schedule(10)
        return cluster

    def test_evicts_only_the_newest(self, make_pod):
        cluster = self.fill(make_pod)
        submit(cluster, make_pod, "svc", now=20, priority=1000)
        unschedulable = cluster.schedule(20).unschedulable
        [outcome] = cluster.resolve_unschedulable(unschedulable, 20)
        assert outcome.placed and outcome.victims == ("batch-6",)
        assert cluster.pods["batch-6"].phase is PodPhase.FAILED
        assert cluster.pods["svc"].phase is PodPhase.RUNNING
        assert cluster.capacity_violations() == []

    def test_equal_priority_never_preempts(self, make_pod):
        cluster = self.fill(make_pod)
        submit(cluster, make_pod, "peer", now=20, priority=100)
        [outcome] = cluster.resolve_unschedulable(cluster.schedule(20).unschedulable, 20)
        assert not outcome.placed
        assert cluster.pending_since == {"peer": 20}
        assert all(p.phase is PodPhase.RUNNING for n, p in cluster.pods.items() if n != "peer")

    def test_no_plan_when_node_cannot_hold_the_pod(self, make_pod):
        cluster = self.fill(make_pod)
        spec = make_pod("huge", request=vec(gpus=8), priority=1000).spec
        assert cluster.try_preempt(spec, 20) is None


class TestAutoscaler:
    def pending(self, cluster, make_pod, n, request=None):
        for i in range(n):
            submit(cluster, make_pod, f"p{i:02d}", now=0, request=request)
        cluster.resolve_unschedulable(cluster.schedule(0).unschedulable, 0)

    def test_disabled_does_nothing(self, gpu7_shape, make_pod):
        cluster = Cluster([gpu7_shape])
        self.pending(cluster, make_pod, 3)
        assert cluster.autoscale(100).added == []

    def test_packs_21_pods_into_three_nodes(self, gpu7_shape, make_pod):
        cluster = cluster_with([gpu7_shape], provision_delay_s=10)
        self.pending(cluster, make_pod, 21)
        assert cluster.autoscale(5).added == []
        added = cluster.autoscale(10).added
        assert [n.node_id for n in added] == ["gpu7-001", "gpu7-002", "gpu7-003"]
        assert all(n.ready_time == 130 for n in added)
        # Booting nodes absorb the demand on the next pass
        assert cluster.autoscale(20).added == []

    def test_ready_node_between_ticks_absorbs_waiting_pods(self, make_pod):
        shape = NodeShape("gpu7", ResourceVector(56000, 7, 229376, 1048576), boot_delay=125)
        cluster = cluster_with([shape])
        self.pending(cluster, make_pod, 21)
        assert len(cluster.autoscale(10).added) == 3
        # Ready at 135, the scheduler next runs at 140
        assert [n.node_id for n in cluster.mark_ready(135)] == ["gpu7-001", "gpu7-002", "gpu7-003"]
        result = cluster.autoscale(135)
        assert result.added == [] and result.removed == []
        assert len(cluster.nodes) == 3

    def test_fresh_node_kept_for_its_pending_pods(self, gpu7_shape, make_pod):
        cluster = cluster_with([gpu7_shape], scale_down_idle_s=0)
        self.pending(cluster, make_pod, 2)
        [node] = cluster.autoscale(0).added
        cluster.mark_ready(node.ready_time)
        assert cluster.autoscale(node.ready_time).removed == []
        result = cluster.schedule(node.ready_time + 10)
        assert len(result.bindings) == 2 and result.unschedulable == []

    def test_max_nodes(self, gpu7_shape, make_pod):
        cluster = cluster_with([gpu7_shape], max_nodes=2)
        self.pending(cluster, make_pod, 21)
        assert len(cluster.autoscale(0).added) == 2

    def test_smallest_shape_wins(self, gpu7_shape, make_pod):
        cluster = cluster_with([gpu7_shape, gpu_shape("gpu1", 1)])
        self.pending(cluster, make_pod, 1)
        assert [n.shape for n in cluster.autoscale(0).added] == ["gpu1"]

    def test_unsatisfiable_shape(self, gpu7_shape, make_pod):
        cluster = cluster_with([gpu7_shape])
        self.pending(cluster, make_pod, 1, request=vec(gpus=8))
        with pytest.raises(ShapeUnsatisfiable):
            cluster.smallest_shape_for(cluster.pods["p00"].spec, 0)
        result = cluster.autoscale(0)
        assert result.added == [] and result.unsatisfiable == ["p00"]

    def test_empty_node_removed_after_scale_down_delay(self, gpu7_shape):
        cluster = cluster_with([gpu7_shape], scale_down_idle_s=600)
        node = cluster.add_node("gpu7", 0, ready_time=0)
        assert cluster.autoscale(599).removed == []
        assert cluster.autoscale(600).removed == [node.node_id]
        assert cluster.nodes == {}


def test_capacity_violations(gpu7_shape, make_pod):
    cluster = Cluster([gpu7_shape])
    node = cluster.add_node("gpu7", 0, ready_time=0)
    submit(cluster, make_pod, "p")
    cluster.schedule(0)
    assert cluster.capacity_violations() == []
    node.capacity = ResourceVector()
    [problem] = cluster.capacity_violations()
    assert "over capacity" in problem
