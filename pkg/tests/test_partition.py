from __future__ import annotations

import numpy as np
import pytest

from cmaccel import zoo
from cmaccel.errors import PartitionError
from cmaccel.nnmodel import ConvParams, NNGraph, Node, TensorShape
from cmaccel.partition import PartitionPlan, partition, partition_order, validate_plan


def _g(nodes, shapes, out):
    return NNGraph(tuple(nodes), {t: TensorShape(s) for t, s in shapes.items()}, "x", out)


def _c(d=1, k=1):
    return ConvParams(d, k, 1, 1, np.ones((k, d)), None)


def test_chain3_members():
    plan = partition(zoo.chain3())
    assert [p.members for p in plan.partitions] == [("conv1", "relu1"), ("conv2",), ("conv3",)]
    assert [(e.source, e.dest, e.objects) for e in plan.edges] == [(0, 1, ("ar",)), (1, 2, ("b",))]
    assert partition_order(plan) == [0, 1, 2]


def test_no_conv_is_rejected():
    g = _g([Node("r", "ReLU", ("x",), "y")], {"x": (1, 2, 2), "y": (1, 2, 2)}, "y")
    with pytest.raises(PartitionError, match="convolution"):
        partition(g)


def test_leading_dpu_op_is_rejected():
    g = _g([Node("r", "ReLU", ("x",), "a"), Node("c", "Conv2D", ("a",), "y", _c())],
           {"x": (1, 2, 2), "a": (1, 2, 2), "y": (1, 2, 2)}, "y")
    with pytest.raises(PartitionError):
        partition(g)


def test_add_joins_latest_acyclic_producer():
    # two parallel convs joined by an Add: the Add may sit with either producer
    g = _g(
        [Node("c1", "Conv2D", ("x",), "a", _c()), Node("c2", "Conv2D", ("x",), "b", _c()),
         Node("add", "Add", ("a", "b"), "y")],
        {"x": (1, 2, 2), "a": (1, 2, 2), "b": (1, 2, 2), "y": (1, 2, 2)}, "y",
    )
    plan = partition(g)
    assert plan.by_id(1).members == ("c2", "add")
    assert validate_plan(plan, g)


def test_unmerged_edges_reported():
    plan = partition(zoo.chain3())
    dup = PartitionPlan(plan.partitions, plan.edges + plan.edges[:1])
    report = validate_plan(dup)
    assert not report and "not merged" in report.first


def test_missing_node_reported():
    g = zoo.residual()
    plan = partition(g)
    short = PartitionPlan(plan.partitions[:1], ())
    assert "not assigned" in validate_plan(short, g).first
