# core/schemas.py - Omega Provisioner plan input records
"""
JSON records accepted by `plan --jobs/--pods`, validated with pydantic and
converted to the domain types the reconcile logic works on.
"""

import json
from typing import Dict, List, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, TypeAdapter, ValidationError

from core.config import parse_affinity_entry, parse_filter
from core.errors import FilterSyntax, InputError, InvalidValue, SchemaError
from core.model import OWNER_LABEL, GroupKey, JobAd, JobState, PodPhase, PodSpec, PodState, ResourceVector

T = TypeVar("T", bound=BaseModel)


class ResourceRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cpus_milli: NonNegativeInt = 0
    gpus: NonNegativeInt = 0
    memory_mib: NonNegativeInt = 0
    disk_mib: NonNegativeInt = 0

    def vector(self) -> ResourceVector:
        return ResourceVector(self.cpus_milli, self.gpus, self.memory_mib, self.disk_mib)


class JobRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    job_id: int
    request: ResourceRecord
    submit_time: NonNegativeInt = 0
    state: JobState = JobState.IDLE
    attributes: Dict[str, str] = Field(default_factory=dict)
    requirements: str = ""

    def to_job(self) -> JobAd:
        return JobAd(
            job_id=self.job_id,
            request=self.request.vector(),
            submit_time=self.submit_time,
            state=self.state,
            attributes=dict(self.attributes),
            requirements=parse_filter(self.requirements),
        )


class PodRecord(BaseModel):
    """An execute pod as the provisioner sees it. `group` is the slug form."""
    model_config = ConfigDict(extra="forbid")

    pod_name: str = Field(min_length=1)
    group: str
    phase: PodPhase = PodPhase.PENDING
    priority: int = 0
    created_time: NonNegativeInt = 0
    terminated_time: Optional[NonNegativeInt] = None
    tolerations: List[str] = Field(default_factory=list)
    affinity: List[str] = Field(default_factory=list)

    def to_pod(self) -> PodState:
        try:
            group = GroupKey.from_slug(self.group)
        except ValueError as e:
            raise SchemaError(f"{self.pod_name}.group", str(e))
        spec = PodSpec(
            pod_name=self.pod_name,
            group=group,
            request=group.vector(),
            priority=self.priority,
            tolerations=frozenset(self.tolerations),
            affinity=tuple(parse_affinity_entry(a) for a in self.affinity),
            owner_label=OWNER_LABEL,
        )
        return PodState(
            spec=spec,
            phase=self.phase,
            created_time=self.created_time,
            terminated_time=self.terminated_time,
        )


def _load_list(path: str, model: Type[T]) -> List[T]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise SchemaError(path, f"not valid JSON (line {e.lineno}): {e.msg}")
    try:
        return TypeAdapter(List[model]).validate_python(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise SchemaError(f"{path}:{where}" if where else path, first["msg"])


def load_jobs(path: str) -> List[JobAd]:
    try:
        return [record.to_job() for record in _load_list(path, JobRecord)]
    except FilterSyntax as e:
        raise SchemaError(f"{path}:requirements", str(e))


def load_pods(path: str) -> List[PodState]:
    try:
        return [record.to_pod() for record in _load_list(path, PodRecord)]
    except InvalidValue as e:
        raise SchemaError(f"{path}:affinity", str(e))
