# tests/conftest.py - shared fixtures
import os

import pytest

from core.config import load_config
from core.model import (
    MATCH_ALL,
    OWNER_LABEL,
    JobAd,
    JobState,
    Node,
    NodeShape,
    PodPhase,
    PodSpec,
    PodState,
    ResourceVector,
    group_key_of,
)

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES_DIR = os.path.join(REPO_ROOT, "fixtures")

NAUTILUS_INI = """\
[DEFAULT]
k8s_domain=nrp-nautilus.io
[k8s]
tolerations_list=nautilus.io/noceph, nautilus.io/suncave
node_affinity_dict=^nautilus.io/low-power:true,gpu-type:A100|A40|V100
priority_class=opportunistic
envs_dict=USE_SINGULARITY:no,GLIDEIN_Site:SDSC-PRP
"""


def vec(cpus_milli=1000, gpus=1, memory_mib=4096, disk_mib=4096) -> ResourceVector:
    return ResourceVector(cpus_milli, gpus, memory_mib, disk_mib)


@pytest.fixture
def fixture_path():
    return lambda name: os.path.join(FIXTURES_DIR, name)


@pytest.fixture
def nautilus_config():
    return load_config(os.path.join(FIXTURES_DIR, "nautilus.ini"))


@pytest.fixture
def make_job():
    def _make(job_id, request=None, state=JobState.IDLE, submit_time=0, duration=100,
              attributes=None, requirements=MATCH_ALL):
        return JobAd(
            job_id=job_id,
            request=request or vec(),
            submit_time=submit_time,
            duration=duration,
            state=state,
            attributes=dict(attributes or {}),
            requirements=requirements,
        )
    return _make


@pytest.fixture
def make_pod():
    def _make(name, request=None, phase=PodPhase.PENDING, priority=100, created_time=0,
              tolerations=(), affinity=(), owner_label=OWNER_LABEL, terminated_time=None):
        request = request or vec()
        spec = PodSpec(
            pod_name=name,
            group=group_key_of(request, 1024, 1024),
            request=request,
            priority=priority,
            tolerations=frozenset(tolerations),
            affinity=tuple(affinity),
            owner_label=owner_label,
        )
        return PodState(spec=spec, phase=phase, created_time=created_time, terminated_time=terminated_time)
    return _make


@pytest.fixture
def gpu7_shape():
    return NodeShape(name="gpu7", capacity=ResourceVector(56000, 7, 229376, 1048576), boot_delay=120)


@pytest.fixture
def make_node():
    def _make(node_id, capacity=None, labels=None, taints=(), ready_time=0):
        return Node(
            node_id=node_id,
            shape="test",
            capacity=capacity or ResourceVector(56000, 7, 229376, 1048576),
            labels=dict(labels or {}),
            taints=frozenset(taints),
            ready_time=ready_time,
        )
    return _make
