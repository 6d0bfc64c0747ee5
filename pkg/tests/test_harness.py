# tests/test_harness.py
import copy
import json

import pytest

from core.errors import InputError, InvariantViolation, SchemaError
from sim.checker import check_events
from sim.harness import METRICS_COLUMNS, Simulation, emit_events, emit_metrics, run
from sim.scenario import load_scenario, parse_scenario

BASE = {
    "name": "small",
    "seed": 3,
    "horizon_s": 1800,
    "shapes": [{
        "name": "gpu4",
        "capacity": {"cpus_milli": 16000, "gpus": 4, "memory_mib": 65536, "disk_mib": 65536},
    }],
    "initial_nodes": [{"shape": "gpu4", "count": 1}],
    "workload": [{
        "time": 0,
        "count": 6,
        "request": {"cpus_milli": 1000, "gpus": 1, "memory_mib": 4096, "disk_mib": 4096},
        "duration_range": [100, 400],
    }],
    "config": "[k8s]\nidle_timeout_s=60\n",
}


def scenario(**changes):
    doc = copy.deepcopy(BASE)
    doc.update(changes)
    return parse_scenario(json.dumps(doc))


def kinds(records, kind):
    return [r for r in records if r.kind == kind]


class TestScenarioLoading:
    def test_minimal(self):
        s = scenario()
        assert s.name == "small"
        assert [shape.name for shape in s.node_shapes()] == ["gpu4"]
        assert s.provisioner_config().idle_timeout_s == 60

    def test_negative_time(self):
        doc = copy.deepcopy(BASE)
        doc["workload"][0]["time"] = -5
        with pytest.raises(SchemaError) as exc:
            parse_scenario(json.dumps(doc))
        assert exc.value.path == "workload.0.time"

    def test_time_past_horizon(self):
        doc = copy.deepcopy(BASE)
        doc["workload"].append(dict(doc["workload"][0], time=5000))
        with pytest.raises(SchemaError) as exc:
            parse_scenario(json.dumps(doc))
        assert exc.value.path == "workload.1.time"

    @pytest.mark.parametrize("changes", [
        {"surprise": 1},
        {"initial_nodes": [{"shape": "gpu9", "count": 1}]},
        {"config_path": "nautilus.ini"},
        {"shapes": [{"name": "zero", "capacity": {}}]},
    ])
    def test_rejected(self, changes):
        with pytest.raises(SchemaError):
            scenario(**changes)

    def test_both_durations_rejected(self):
        doc = copy.deepcopy(BASE)
        doc["workload"][0]["duration_s"] = 100
        with pytest.raises(SchemaError):
            parse_scenario(json.dumps(doc))

    def test_bad_requirements(self):
        doc = copy.deepcopy(BASE)
        doc["workload"][0]["requirements"] = "GLIDEIN_Site == SDSC AND"
        with pytest.raises(SchemaError):
            parse_scenario(json.dumps(doc))

    def test_load_from_file_resolves_config_path(self, fixture_path):
        s = load_scenario(fixture_path("preemption_mixed.json"))
        assert s.provisioner_config().priority_class == "opportunistic"

    def test_load_inline_text(self):
        assert load_scenario(json.dumps(BASE)).name == "small"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_scenario(str(tmp_path / "nope.json"))


class TestRun:
    def test_all_jobs_complete(self):
        records, samples = run(scenario())
        assert len(kinds(records, "job-complete")) == 6
        assert samples[-1].completed_jobs == 6
        assert check_events(records) == []

    def test_event_stream_shape(self):
        records, _ = run(scenario())
        assert records[0].kind == "run-start"
        assert [r.seq for r in records] == list(range(1, len(records) + 1))
        assert all(a.time <= b.time for a, b in zip(records, records[1:]))
        lines = emit_events(records).splitlines()
        assert len(lines) == len(records)
        assert list(json.loads(lines[0])) == ["time", "seq", "kind", "subject", "detail"]

    def test_metrics(self):
        s = scenario()
        _, samples = run(s)
        text = emit_metrics(samples)
        assert text.splitlines()[0] == ",".join(METRICS_COLUMNS)
        assert len(samples) == s.horizon_s // s.metrics_interval_s + 1
        assert [x.time for x in samples[:3]] == [0, 60, 120]

    def test_same_seed_same_bytes(self):
        a, _ = run(scenario())
        b, _ = run(scenario())
        assert emit_events(a) == emit_events(b)

    def test_seed_override(self):
        s = scenario()
        records, _ = run(s, seed=1)
        assert records[0].detail["seed"] == 1
        durations = {
            seed: [r.detail["duration"] for r in kinds(run(s, seed=seed)[0], "job-submit")]
            for seed in (1, 2)
        }
        assert durations[1] != durations[2]
        assert all(100 <= d <= 400 for d in durations[1])

    def test_empty_workload(self):
        records, samples = run(scenario(workload=[]))
        assert kinds(records, "pod-submit") == []
        assert len(kinds(records, "provisioner-cycle")) == 1800 // 60 + 1
        assert all(x.running_pods == 0 for x in samples)

    def test_removal(self):
        records, _ = run(scenario(removals=[{"time": 0, "job_ids": [6]}]))
        [removed] = kinds(records, "job-remove")
        assert removed.subject == "6" and removed.detail["from_state"] == "Idle"
        assert len(kinds(records, "job-complete")) == 5

    def test_kill_of_unknown_node_is_skipped(self):
        records, _ = run(scenario(spot_kills=[{"time": 30, "node": "gpu4-404"}]))
        [skip] = kinds(records, "spot-kill-skip")
        assert skip.detail["reason"] == "unknown node"

    def test_idle_pods_leave_after_timeout(self):
        records, samples = run(scenario())
        terminated = [r for r in kinds(records, "pod-terminate") if r.detail["reason"] == "self-terminate"]
        assert terminated
        assert samples[-1].running_pods == 0

    def test_injected_fault_is_caught(self):
        with pytest.raises(InvariantViolation) as exc:
            Simulation(scenario(), fault="capacity").run()
        assert exc.value.event is not None

    def test_unknown_fault(self):
        with pytest.raises(ValueError):
            Simulation(scenario(), fault="meteor")

    def test_unsatisfiable_pod_flagged_once(self):
        big = {"cpus_milli": 1000, "gpus": 8, "memory_mib": 4096, "disk_mib": 4096}
        s = scenario(
            workload=[{"time": 0, "count": 1, "request": big, "duration_s": 100}],
            autoscaler={"enabled": True},
            horizon_s=600,
        )
        records, _ = run(s)
        [flag] = kinds(records, "shape-unsatisfiable")
        assert flag.detail["request"]["gpus"] == 8
        assert kinds(records, "node-add")[1:] == []
        assert check_events(records) == []
