# sim/scenario.py - Omega Provisioner scenario files
"""
Scenario documents (JSON) describe one simulated run: the node catalog, the
nodes present at t=0, the batch workload, service pods competing for the
same nodes, scripted job removals and spot reclaims, and the provisioner
configuration to use.

Validation is done with pydantic; the first failing field is reported as a
SchemaError carrying its dotted path (e.g. "workload.2.time").
"""

import json
import logging
import os
import random
from typing import Dict, List, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveInt,
    PrivateAttr,
    ValidationError,
    field_validator,
    model_validator,
)

from core.config import ProvisionerConfig, load_config, parse_filter, parse_ini
from core.errors import FilterSyntax, InputError, SchemaError
from core.model import FilterExpr, NodeShape, ResourceVector

logger = logging.getLogger(__name__)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Resources(_Strict):
    cpus_milli: NonNegativeInt = 0
    gpus: NonNegativeInt = 0
    memory_mib: NonNegativeInt = 0
    disk_mib: NonNegativeInt = 0

    def vector(self) -> ResourceVector:
        return ResourceVector(self.cpus_milli, self.gpus, self.memory_mib, self.disk_mib)


class ShapeSpec(_Strict):
    name: str = Field(min_length=1)
    capacity: Resources
    labels: Dict[str, str] = Field(default_factory=dict)
    taints: List[str] = Field(default_factory=list)
    boot_delay_s: NonNegativeInt = 0
    spot: bool = False

    @field_validator("capacity")
    @classmethod
    def _nonzero(cls, value: Resources) -> Resources:
        if value.vector().is_zero():
            raise ValueError("capacity must not be all zero")
        return value

    def to_shape(self) -> NodeShape:
        return NodeShape(
            name=self.name,
            capacity=self.capacity.vector(),
            labels=tuple(sorted(self.labels.items())),
            taints=frozenset(self.taints),
            boot_delay=self.boot_delay_s,
            spot=self.spot,
        )


class InitialNodes(_Strict):
    shape: str
    count: PositiveInt
    spot: Optional[bool] = None


class WorkloadBurst(_Strict):
    """`count` identical jobs submitted at `time`."""

    time: NonNegativeInt
    count: PositiveInt
    request: Resources
    attributes: Dict[str, str] = Field(default_factory=dict)
    requirements: str = ""
    duration_s: Optional[PositiveInt] = None
    duration_range: Optional[Tuple[PositiveInt, PositiveInt]] = None

    @field_validator("requirements")
    @classmethod
    def _requirements_parse(cls, value: str) -> str:
        try:
            parse_filter(value)
        except FilterSyntax as e:
            raise ValueError(str(e))
        return value

    @model_validator(mode="after")
    def _one_duration(self):
        if (self.duration_s is None) == (self.duration_range is None):
            raise ValueError("give exactly one of duration_s or duration_range")
        if self.duration_range is not None and self.duration_range[0] > self.duration_range[1]:
            raise ValueError(f"duration_range {list(self.duration_range)} is inverted")
        return self

    def requirements_expr(self) -> FilterExpr:
        return parse_filter(self.requirements)

    def draw_duration(self, rng: random.Random) -> int:
        if self.duration_s is not None:
            return self.duration_s
        low, high = self.duration_range
        return rng.randint(low, high)


class ServicePodBurst(_Strict):
    """Non-batch pods sharing the cluster, e.g. interactive or system workloads."""

    time: NonNegativeInt
    count: PositiveInt
    request: Resources
    priority: int
    duration_s: PositiveInt
    tolerations: List[str] = Field(default_factory=list)
    name: str = Field(default="service", min_length=1)


class JobRemoval(_Strict):
    time: NonNegativeInt
    job_ids: List[PositiveInt] = Field(min_length=1)


class SpotKill(_Strict):
    time: NonNegativeInt
    node: str = "random"


class RandomSpotKills(_Strict):
    count: PositiveInt
    start_s: NonNegativeInt
    end_s: NonNegativeInt

    @model_validator(mode="after")
    def _ordered(self):
        if self.start_s > self.end_s:
            raise ValueError("start_s must be <= end_s")
        return self


class AutoscalerSpec(_Strict):
    enabled: bool = False
    provision_delay_s: NonNegativeInt = 0
    scale_down_idle_s: NonNegativeInt = 600
    max_nodes: NonNegativeInt = 100


class Scenario(_Strict):
    name: str = Field(min_length=1)
    seed: int = 0
    horizon_s: PositiveInt
    shapes: List[ShapeSpec] = Field(min_length=1)
    initial_nodes: List[InitialNodes] = Field(default_factory=list)
    workload: List[WorkloadBurst] = Field(default_factory=list)
    service_pods: List[ServicePodBurst] = Field(default_factory=list)
    removals: List[JobRemoval] = Field(default_factory=list)
    spot_kills: List[SpotKill] = Field(default_factory=list)
    random_spot_kills: Optional[RandomSpotKills] = None
    autoscaler: AutoscalerSpec = Field(default_factory=AutoscalerSpec)
    negotiator_interval_s: PositiveInt = 10
    scheduler_interval_s: PositiveInt = 10
    metrics_interval_s: PositiveInt = 60
    pod_pending_timeout_s: Optional[PositiveInt] = None
    config_path: Optional[str] = None
    config_text: Optional[str] = Field(default=None, alias="config")

    _base_dir: str = PrivateAttr(default=".")

    def node_shapes(self) -> List[NodeShape]:
        return [s.to_shape() for s in self.shapes]

    def provisioner_config(self) -> ProvisionerConfig:
        """The inline INI text, else the file at config_path, else all defaults."""
        if self.config_text is not None:
            return parse_ini(self.config_text)
        if self.config_path is not None:
            path = os.path.join(self._base_dir, self.config_path)
            try:
                return load_config(path)
            except OSError as e:
                raise SchemaError("config_path", f"cannot read {path}: {e.strerror}")
        return ProvisionerConfig()


def _check_references(scenario: Scenario):
    names = [s.name for s in scenario.shapes]
    seen = set()
    for i, name in enumerate(names):
        if name in seen:
            raise SchemaError(f"shapes.{i}.name", f"duplicate shape {name!r}")
        seen.add(name)
    for i, entry in enumerate(scenario.initial_nodes):
        if entry.shape not in seen:
            raise SchemaError(f"initial_nodes.{i}.shape", f"unknown shape {entry.shape!r}")
    if scenario.config_text is not None and scenario.config_path is not None:
        raise SchemaError("config", "give config or config_path, not both")


def _check_times(scenario: Scenario):
    horizon = scenario.horizon_s
    timed = (
        ("workload", scenario.workload),
        ("service_pods", scenario.service_pods),
        ("removals", scenario.removals),
        ("spot_kills", scenario.spot_kills),
    )
    for section, entries in timed:
        for i, entry in enumerate(entries):
            if entry.time > horizon:
                raise SchemaError(f"{section}.{i}.time", f"{entry.time} is past horizon_s={horizon}")
    kills = scenario.random_spot_kills
    if kills is not None and kills.end_s > horizon:
        raise SchemaError("random_spot_kills.end_s", f"{kills.end_s} is past horizon_s={horizon}")


def parse_scenario(text: str, base_dir: str = ".") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("", f"not valid JSON (line {e.lineno}): {e.msg}")
    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = ".".join(str(part) for part in first["loc"])
        raise SchemaError(path, first["msg"])
    _check_references(scenario)
    _check_times(scenario)
    scenario._base_dir = base_dir
    return scenario


def load_scenario(source: str) -> Scenario:
    """Accepts a path to a scenario file or the JSON text itself."""
    if source.lstrip().startswith("{"):
        return parse_scenario(source)
    try:
        with open(source, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise InputError(f"cannot read scenario {source}: {e.strerror}")
    scenario = parse_scenario(text, base_dir=os.path.dirname(os.path.abspath(source)))
    logger.debug(f"[Harness] Loaded scenario '{scenario.name}' from {source}")
    return scenario
