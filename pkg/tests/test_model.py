# tests/test_model.py
import random

import pytest

from core.errors import IllegalTransition
from core.model import (
    MATCH_ALL,
    AffinityRule,
    FilterClause,
    FilterExpr,
    FilterOp,
    GroupKey,
    JobState,
    NodeShape,
    ResourceVector,
    eval_filter,
    fits,
    group_key_of,
    sum_vectors,
)


def test_resource_vector_rejects_negative_and_non_integer():
    with pytest.raises(ValueError):
        ResourceVector(gpus=-1)
    with pytest.raises(ValueError):
        ResourceVector(cpus_milli=1.5)


@pytest.mark.parametrize(
    "request_vec, capacity, expected",
    [
        (ResourceVector(cpus_milli=1000, gpus=1), ResourceVector(cpus_milli=8000, gpus=7), True),
        (ResourceVector(), ResourceVector(), True),
        (ResourceVector(gpus=8), ResourceVector(gpus=7), False),
    ],
)
def test_fits(request_vec, capacity, expected):
    assert fits(request_vec, capacity) is expected


def test_fits_reflexive_and_transitive():
    rng = random.Random("fits")
    for _ in range(200):
        a = ResourceVector(*(rng.randint(0, 4) for _ in range(4)))
        b = a + ResourceVector(*(rng.randint(0, 4) for _ in range(4)))
        c = b + ResourceVector(*(rng.randint(0, 4) for _ in range(4)))
        assert fits(a, a)
        assert fits(a, b) and fits(b, c) and fits(a, c)


def test_vector_arithmetic():
    a = ResourceVector(1000, 1, 2048, 0)
    b = ResourceVector(500, 0, 1024, 10)
    assert a + b - b == a
    assert sum_vectors([a, b]) == ResourceVector(1500, 1, 3072, 10)
    assert ResourceVector().is_zero()


class TestEvalFilter:
    def test_empty_expression_matches_everything(self):
        assert eval_filter(MATCH_ALL, {})
        assert eval_filter(MATCH_ALL, {"anything": "x"})

    def test_eq_clause(self):
        expr = FilterExpr((FilterClause("GLIDEIN_Site", FilterOp.EQ, "SDSC-PRP"),))
        assert eval_filter(expr, {"GLIDEIN_Site": "SDSC-PRP"})
        assert not eval_filter(expr, {"GLIDEIN_Site": "UCSD"})

    def test_in_clause(self):
        expr = FilterExpr((FilterClause("gpu_type", FilterOp.IN, ("A100", "A40", "V100")),))
        assert not eval_filter(expr, {"gpu_type": "K80"})
        assert eval_filter(expr, {"gpu_type": "A40"})

    def test_missing_attribute_only_satisfies_ne(self):
        for op, value in ((FilterOp.EQ, "x"), (FilterOp.GE, "1"), (FilterOp.LE, "1"), (FilterOp.IN, ("x",))):
            assert not eval_filter(FilterExpr((FilterClause("a", op, value),)), {})
        assert eval_filter(FilterExpr((FilterClause("a", FilterOp.NE, "x"),)), {})

    def test_numeric_comparison_falls_back_to_lexicographic(self):
        ge_9 = FilterExpr((FilterClause("Memory", FilterOp.GE, "9"),))
        assert eval_filter(ge_9, {"Memory": "10"})
        le_b = FilterExpr((FilterClause("Site", FilterOp.LE, "b"),))
        assert eval_filter(le_b, {"Site": "a"})
        assert not eval_filter(le_b, {"Site": "c"})

    def test_conjunction(self):
        expr = FilterExpr((
            FilterClause("a", FilterOp.EQ, "1"),
            FilterClause("b", FilterOp.NE, "2"),
        ))
        assert eval_filter(expr, {"a": "1", "b": "3"})
        assert not eval_filter(expr, {"a": "1", "b": "2"})

    def test_unnamed_attributes_never_change_the_result(self):
        rng = random.Random("perturb")
        expr = FilterExpr((
            FilterClause("Site", FilterOp.EQ, "SDSC"),
            FilterClause("Memory", FilterOp.GE, "2048"),
        ))
        base = {"Site": "SDSC", "Memory": "4096"}
        expected = eval_filter(expr, base)
        for i in range(100):
            attrs = dict(base)
            attrs[f"noise{rng.randint(0, 5)}"] = str(rng.random())
            assert eval_filter(expr, attrs) == expected


class TestGroupKey:
    def test_rounds_memory_and_disk_up(self):
        key = group_key_of(ResourceVector(1000, 1, 4000, 10000), 1024, 1024)
        assert key == GroupKey(1000, 1, 4096, 10240)

    def test_identical_requests_share_a_key(self):
        a = group_key_of(ResourceVector(1000, 1, 3000, 100), 1024, 1024)
        b = group_key_of(ResourceVector(1000, 1, 3000, 100), 1024, 1024)
        assert a == b

    def test_gpus_are_not_quantized(self):
        assert group_key_of(ResourceVector(1000, 0, 1024, 1024), 1024, 1024) != \
            group_key_of(ResourceVector(1000, 1, 1024, 1024), 1024, 1024)

    def test_idempotent(self):
        key = group_key_of(ResourceVector(1500, 2, 5000, 1), 1024, 512)
        assert group_key_of(key.vector(), 1024, 512) == key

    def test_rejects_zero_quantum(self):
        with pytest.raises(ValueError):
            group_key_of(ResourceVector(), 0, 1024)

    def test_slug_parses_back(self):
        key = GroupKey(1000, 1, 4096, 10240)
        assert key.slug == "c1000-g1-m4096-d10240"
        assert GroupKey.from_slug(key.slug) == key
        with pytest.raises(ValueError):
            GroupKey.from_slug("not-a-slug")


def test_affinity_rule():
    rule = AffinityRule("gpu-type", ("A100", "A40"))
    assert rule.satisfied_by({"gpu-type": "A100"})
    assert not rule.satisfied_by({})
    negated = AffinityRule("nautilus.io/low-power", ("true",), negated=True)
    assert not negated.satisfied_by({"nautilus.io/low-power": "true"})
    assert negated.satisfied_by({"nautilus.io/low-power": "false"})
    assert negated.satisfied_by({})


def test_job_state_machine(make_job):
    job = make_job(1)
    with pytest.raises(IllegalTransition):
        job.transition(JobState.COMPLETED)
    job.transition(JobState.RUNNING)
    job.transition(JobState.IDLE)
    assert job.restart_count == 1
    job.transition(JobState.RUNNING)
    job.transition(JobState.COMPLETED)
    assert job.restart_count == 1
    job.transition(JobState.REMOVED)
    with pytest.raises(IllegalTransition):
        job.transition(JobState.IDLE)


def test_node_shape_needs_capacity():
    with pytest.raises(ValueError):
        NodeShape(name="empty", capacity=ResourceVector())
