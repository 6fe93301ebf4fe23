"""Split a dataflow graph into per-core partitions.

Two invariants hold for every plan: a partition contains at most one crossbar
(convolution) node, and the partition graph is acyclic.  Nodes are visited in
topological order; each convolution opens a new partition and every other node
joins the latest partition among its producers that keeps the plan acyclic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import PartitionError
from .nnmodel import NNGraph


@dataclass(frozen=True)
class Partition:
    id: int
    members: tuple[str, ...]
    conv: str | None


@dataclass(frozen=True)
class PartitionEdge:
    """All dataflow edges from ``source`` to ``dest`` merged into one.

    ``readers`` maps each shared tensor to the dest-side nodes reading it.
    """

    source: int
    dest: int
    readers: tuple[tuple[str, tuple[str, ...]], ...]

    @property
    def objects(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.readers)


@dataclass(frozen=True)
class PartitionPlan:
    partitions: tuple[Partition, ...]
    edges: tuple[PartitionEdge, ...]
    graph_input: str = ""
    graph_output: str = ""

    def of_node(self) -> dict[str, int]:
        return {n: p.id for p in self.partitions for n in p.members}

    def by_id(self, pid: int) -> Partition:
        for p in self.partitions:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def to_dict(self) -> dict:
        return {
            "partitions": [
                {"id": p.id, "members": list(p.members), "conv": p.conv} for p in self.partitions
            ],
            "edges": [
                {
                    "source": e.source,
                    "dest": e.dest,
                    "objects": {t: list(r) for t, r in e.readers},
                }
                for e in self.edges
            ],
        }


@dataclass
class PlanReport:
    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    @property
    def first(self) -> str | None:
        return self.violations[0] if self.violations else None


def build_edges(g: NNGraph, assignment: dict[str, int]) -> tuple[PartitionEdge, ...]:
    merged: dict[tuple[int, int], dict[str, list[str]]] = {}
    for node in g.topo_order():
        dst = assignment[node.id]
        for t in node.inputs:
            prod = g.producer(t)
            if prod is None:
                continue
            src = assignment[prod.id]
            if src == dst:
                continue
            readers = merged.setdefault((src, dst), {}).setdefault(t, [])
            if node.id not in readers:
                readers.append(node.id)
    return tuple(
        PartitionEdge(s, d, tuple((t, tuple(r)) for t, r in objs.items()))
        for (s, d), objs in sorted(merged.items())
    )


def _make_plan(g: NNGraph, assignment: dict[str, int]) -> PartitionPlan:
    members: dict[int, list[str]] = {}
    for node in g.topo_order():
        members.setdefault(assignment[node.id], []).append(node.id)
    nm = g.node_map
    parts = tuple(
        Partition(pid, tuple(ms), next((m for m in ms if nm[m].is_conv), None))
        for pid, ms in sorted(members.items())
    )
    return PartitionPlan(parts, build_edges(g, assignment), g.graph_input, g.graph_output)


def _has_cycle(n: int, edges) -> list[int] | None:
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for s, d in edges:
        adj.setdefault(s, []).append(d)
        adj.setdefault(d, [])
    color: dict[int, int] = {}
    stack: list[int] = []

    def dfs(u):
        color[u] = 1
        stack.append(u)
        for v in adj[u]:
            if color.get(v) == 1:
                return stack[stack.index(v):] + [v]
            if v not in color:
                found = dfs(v)
                if found:
                    return found
        color[u] = 2
        stack.pop()
        return None

    for u in sorted(adj):
        if u not in color:
            found = dfs(u)
            if found:
                return found
    return None


def partition(g: NNGraph) -> PartitionPlan:
    if not g.conv_nodes:
        raise PartitionError("unsupported model: no convolution node to place on a crossbar")
    assignment: dict[str, int] = {}
    next_id = 0
    for node in g.topo_order():
        if node.is_conv:
            assignment[node.id] = next_id
            next_id += 1
            continue
        hosts = sorted(
            {assignment[p.id] for t in node.inputs if (p := g.producer(t)) is not None},
            reverse=True,
        )
        if not hosts:
            raise PartitionError(
                f"unsupported model: node {node.id!r} reads only the graph input and has no crossbar partition"
            )
        for pid in hosts:
            trial = dict(assignment, **{node.id: pid})
            edges = {(e.source, e.dest) for e in build_edges(_AssignedView(g, trial), trial)}
            if _has_cycle(next_id, edges) is None:
                assignment[node.id] = pid
                break
        else:
            raise PartitionError(f"node {node.id!r}: every candidate partition creates a cycle")
    plan = _make_plan(g, assignment)
    report = validate_plan(plan, g)
    if not report:
        raise PartitionError(f"internal error, plan violates invariants: {report.first}")
    return plan


class _AssignedView:
    """Restrict a graph to the nodes assigned so far (used while partitioning)."""

    def __init__(self, g: NNGraph, assignment: dict[str, int]):
        self._g = g
        self._keep = assignment

    def topo_order(self):
        return [n for n in self._g.topo_order() if n.id in self._keep]

    def producer(self, t):
        return self._g.producer(t)


def validate_plan(plan: PartitionPlan, g: NNGraph | None = None) -> PlanReport:
    """Check the partitioning invariants; returns a report instead of raising."""
    v: list[str] = []
    seen: dict[str, int] = {}
    for p in plan.partitions:
        for m in p.members:
            if m in seen:
                v.append(f"node {m!r} is in partitions {seen[m]} and {p.id}")
            seen[m] = p.id
    if g is not None:
        nm = g.node_map
        missing = sorted(set(nm) - set(seen))
        if missing:
            v.append(f"nodes not assigned to any partition: {missing}")
        for p in plan.partitions:
            convs = [m for m in p.members if m in nm and nm[m].is_conv]
            if len(convs) > 1:
                v.append(f"partition {p.id} has more than one convolution operator: {convs}")
    cyc = _has_cycle(len(plan.partitions), [(e.source, e.dest) for e in plan.edges])
    if cyc:
        v.append(f"cycle in the partition graph: {' -> '.join(map(str, cyc))}")
    pairs = [(e.source, e.dest) for e in plan.edges]
    for pr in sorted(set(pairs)):
        if pairs.count(pr) > 1:
            v.append(f"partition edge {pr[0]} -> {pr[1]} is not merged ({pairs.count(pr)} copies)")
    if g is not None and not v:
        expected = build_edges(g, seen)
        if {(e.source, e.dest, e.readers) for e in expected} != {(e.source, e.dest, e.readers) for e in plan.edges}:
            v.append("partition edges do not match the cross-partition dataflow edges")
    return PlanReport(not v, v)


def partition_order(plan: PartitionPlan) -> list[int]:
    """Topological order of partitions (ties by id)."""
    indeg = {p.id: 0 for p in plan.partitions}
    for e in plan.edges:
        indeg[e.dest] += 1
    ready = sorted(pid for pid, d in indeg.items() if d == 0)
    order = []
    while ready:
        u = ready.pop(0)
        order.append(u)
        for e in plan.edges:
            if e.source == u:
                indeg[e.dest] -= 1
                if indeg[e.dest] == 0:
                    ready.append(e.dest)
                    ready.sort()
    return order
