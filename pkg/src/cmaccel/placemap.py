"""Embedding of the partition graph into the core interconnect.

Depth-first backtracking over partitions in topological order, trying cores in
ascending id order and forward-checking that every unassigned partition still
has a candidate core.  The first feasible mapping wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import MappingError
from .nnmodel import NNGraph
from .partition import PartitionPlan, partition_order

ELEMENT_BYTES = 4  # activations are stored as int32


@dataclass(frozen=True)
class Core:
    id: int
    width: int
    sram_bytes: int


@dataclass(frozen=True)
class HwDescription:
    cores: tuple[Core, ...]
    links: frozenset[tuple[int, int]]
    gcu_in: frozenset[int]
    gcu_out: frozenset[int]

    def __post_init__(self):
        ids = [c.id for c in self.cores]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate core id in hardware description")
        known = set(ids)
        for a, b in self.links:
            if a not in known or b not in known:
                raise ValueError(f"link {a}->{b} references an unknown core")
        for c in (*self.gcu_in, *self.gcu_out):
            if c not in known:
                raise ValueError(f"GCU binding references unknown core {c}")

    def core(self, cid: int) -> Core:
        for c in self.cores:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def to_dict(self) -> dict:
        return {
            "cores": [{"id": c.id, "width": c.width, "sram_bytes": c.sram_bytes} for c in self.cores],
            "links": sorted([list(l) for l in self.links]),
            "gcu_in": sorted(self.gcu_in),
            "gcu_out": sorted(self.gcu_out),
        }


def hw_from_dict(d: dict) -> HwDescription:
    try:
        return HwDescription(
            tuple(sorted((Core(int(c["id"]), int(c["width"]), int(c["sram_bytes"])) for c in d["cores"]),
                         key=lambda c: c.id)),
            frozenset((int(a), int(b)) for a, b in d["links"]),
            frozenset(int(c) for c in d["gcu_in"]),
            frozenset(int(c) for c in d["gcu_out"]),
        )
    except KeyError as e:
        raise ValueError(f"hardware description is missing field {e.args[0]!r}") from e


def load_hw(data: bytes | str) -> HwDescription:
    return hw_from_dict(json.loads(data))


@dataclass(frozen=True)
class Mapping:
    cores: dict[int, int]  # partition -> core
    links: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)  # partition edge -> link

    def to_dict(self) -> dict:
        return {
            "partitions": {str(p): c for p, c in sorted(self.cores.items())},
            "edges": [
                {"edge": list(e), "link": list(l)} for e, l in sorted(self.links.items())
            ],
        }


@dataclass(frozen=True)
class PartitionNeeds:
    """Resource demand of one partition, used by both the search and the checker."""

    rows: int
    cols: int
    sram_bytes: int
    reads_input: bool
    writes_output: bool


def _padded_extent(g: NNGraph, plan: PartitionPlan, pid: int, tensor: str) -> int:
    d, h, w = g.shape(tensor)
    pt = pb = pl = pr = 0
    nm = g.node_map
    for m in plan.by_id(pid).members:
        n = nm[m]
        if n.is_conv and tensor in n.inputs:
            t, b, l, r = n.params.pads()
            pt, pb, pl, pr = max(pt, t), max(pb, b), max(pl, l), max(pr, r)
    return d * (h + pt + pb) * (w + pl + pr)


def partition_needs(g: NNGraph, plan: PartitionPlan) -> dict[int, PartitionNeeds]:
    """SRAM holds every object a partition reads from outside (full extent, padded)
    plus the graph output when the partition produces it."""
    of = plan.of_node()
    nm = g.node_map
    out: dict[int, PartitionNeeds] = {}
    for part in plan.partitions:
        conv = nm[part.conv].params
        objs = set()
        for m in part.members:
            for t in nm[m].inputs:
                prod = g.producer(t)
                if prod is None or of[prod.id] != part.id:
                    objs.add(t)
        writes_output = of[g.producer(g.graph_output).id] == part.id
        sram = sum(_padded_extent(g, plan, part.id, t) for t in objs) * ELEMENT_BYTES
        if writes_output:
            sram += int(g.tensors[g.graph_output].size) * ELEMENT_BYTES
        out[part.id] = PartitionNeeds(
            rows=conv.out_channels,
            cols=conv.columns,
            sram_bytes=sram,
            reads_input=g.graph_input in objs,
            writes_output=writes_output,
        )
    return out


def _fits(n: PartitionNeeds, c: Core) -> bool:
    return n.rows <= c.width and n.cols <= c.width and n.sram_bytes <= c.sram_bytes


def _gcu_ok(n: PartitionNeeds, cid: int, hw: HwDescription) -> bool:
    return (not n.reads_input or cid in hw.gcu_in) and (not n.writes_output or cid in hw.gcu_out)


def map_partitions(plan: PartitionPlan, hw: HwDescription, g: NNGraph) -> Mapping:
    needs = partition_needs(g, plan)
    order = partition_order(plan)
    core_ids = sorted(c.id for c in hw.cores)

    # unary domains: capacity first, then GCU reachability
    domains: dict[int, list[int]] = {}
    for pid in order:
        n = needs[pid]
        fitting = [c for c in core_ids if _fits(n, hw.core(c))]
        if not fitting:
            widest = max(c.width for c in hw.cores)
            raise MappingError(
                f"partition {pid} needs a {n.rows}x{n.cols} crossbar and {n.sram_bytes} SRAM bytes; "
                f"no core fits (widest crossbar {widest})",
                "capacity",
                pid,
            )
        reachable = [c for c in fitting if _gcu_ok(n, c, hw)]
        if not reachable:
            raise MappingError(
                f"partition {pid}: no core that fits is bound to the GCU "
                f"({'input' if n.reads_input else ''}{'/' if n.reads_input and n.writes_output else ''}"
                f"{'output' if n.writes_output else ''})",
                "connectivity",
                pid,
            )
        domains[pid] = reachable
    if len(order) > len(core_ids):
        raise MappingError(f"{len(order)} partitions but only {len(core_ids)} cores", "capacity", order[-1])

    edges = [(e.source, e.dest) for e in plan.edges]
    deepest = [0, order[0]]

    def consistent(pid: int, cid: int, assign: dict[int, int]) -> bool:
        if cid in assign.values():
            return False
        for s, d in edges:
            if s == pid and d in assign and (cid, assign[d]) not in hw.links:
                return False
            if d == pid and s in assign and (assign[s], cid) not in hw.links:
                return False
        return True

    def search(k: int, assign: dict[int, int]) -> dict[int, int] | None:
        if k == len(order):
            return assign
        pid = order[k]
        if k >= deepest[0]:
            deepest[0], deepest[1] = k, pid
        for cid in domains[pid]:
            if not consistent(pid, cid, assign):
                continue
            assign[pid] = cid
            # forward check
            if all(any(consistent(q, c, assign) for c in domains[q]) for q in order[k + 1:]):
                found = search(k + 1, assign)
                if found is not None:
                    return found
            del assign[pid]
        return None

    found = search(0, {})
    if found is None:
        pid = deepest[1]
        raise MappingError(
            f"partition {pid}: no assignment places every partition edge on a directed link",
            "connectivity",
            pid,
        )
    return Mapping(dict(sorted(found.items())), {(s, d): (found[s], found[d]) for s, d in sorted(edges)})


def check_mapping(plan: PartitionPlan, hw: HwDescription, g: NNGraph, mapping: Mapping) -> list[str]:
    """Independent re-check of a mapping; returns the list of violated constraints."""
    problems = []
    pids = {p.id for p in plan.partitions}
    if set(mapping.cores) != pids:
        problems.append(f"mapped partitions {sorted(mapping.cores)} != plan partitions {sorted(pids)}")
    used = list(mapping.cores.values())
    if len(used) != len(set(used)):
        problems.append("two partitions share a core")
    cores = {c.id: c for c in hw.cores}
    nm = g.node_map
    of = plan.of_node()
    for part in plan.partitions:
        cid = mapping.cores.get(part.id)
        if cid not in cores:
            problems.append(f"partition {part.id} mapped to unknown core {cid}")
            continue
        core = cores[cid]
        p = nm[part.conv].params
        if p.out_channels > core.width or p.in_channels * p.kh * p.kw > core.width:
            problems.append(f"partition {part.id}: crossbar {p.out_channels}x{p.columns} exceeds width {core.width}")
        # SRAM: recount resident objects from the raw graph
        resident = 0
        for t in sorted({t for m in part.members for t in nm[m].inputs}):
            prod = g.producer(t)
            if prod is not None and of[prod.id] == part.id:
                continue
            d, h, w = g.shape(t)
            ph = pw = 0
            for m in part.members:
                n = nm[m]
                if n.is_conv and t in n.inputs:
                    ph, pw = n.params.kh - 1 if n.params.padding == "same" else 0, \
                        n.params.kw - 1 if n.params.padding == "same" else 0
            resident += d * (h + ph) * (w + pw) * ELEMENT_BYTES
            if t == g.graph_input and cid not in hw.gcu_in:
                problems.append(f"partition {part.id} reads the graph input but core {cid} is not GCU-fed")
        if of[g.producer(g.graph_output).id] == part.id:
            resident += int(g.tensors[g.graph_output].size) * ELEMENT_BYTES
            if cid not in hw.gcu_out:
                problems.append(f"partition {part.id} produces the graph output but core {cid} cannot reach the GCU")
        if resident > core.sram_bytes:
            problems.append(f"partition {part.id}: {resident} SRAM bytes exceed {core.sram_bytes} on core {cid}")
    for e in plan.edges:
        link = (mapping.cores.get(e.source), mapping.cores.get(e.dest))
        if link not in hw.links:
            problems.append(f"edge {e.source}->{e.dest} has no link {link[0]}->{link[1]}")
        if mapping.links.get((e.source, e.dest)) != link:
            problems.append(f"edge {e.source}->{e.dest} recorded on wrong link {mapping.links.get((e.source, e.dest))}")
    return problems
