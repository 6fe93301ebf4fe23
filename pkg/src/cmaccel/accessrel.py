"""Read/write access relations of partitions over shared tensors.

Iteration spaces are the output pixels ``(oh, ow)`` of a partition's
convolution.  Object spaces are tensors laid out as ``(channel, h, w)`` with the
channel dimension most significant, so one writer iteration's burst of ``K``
channel values ends at its lexicographically greatest location.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import AccessError
from .nnmodel import ConvParams, NNGraph
from .partition import PartitionPlan
from .relspec import PresRelation, Space, eq, ge, union

GCU = "gcu"


def iteration_space(name: str, oh: int, ow: int) -> Space:
    return Space.box(name, (oh, ow), ("oh", "ow"))


def object_space(tensor: str, shape, dims=("k", "h", "w")) -> Space:
    return Space.box(tensor, shape, dims)


def gcu_space(name: str, rows: int) -> Space:
    return Space.box(name, (rows,), ("r",))


def conv_read_relation(p: ConvParams, in_shape, iters: Space, obj: Space | str) -> PresRelation:
    """``{[oh,ow] -> [id,ih,iw] : oh*s - pt <= ih < oh*s - pt + FH, ...}``.

    Zero-padding cells lie outside the object box and are therefore excluded.
    """
    if isinstance(obj, str):
        obj = object_space(obj, in_shape, ("id", "ih", "iw"))
    s = p.stride
    t, _, l, _ = p.pads()
    # variables: oh, ow, id, ih, iw
    cons = (
        ge((-s, 0, 0, 1, 0), t),                # ih >= s*oh - t
        ge((s, 0, 0, -1, 0), p.kh - 1 - t),     # ih <= s*oh - t + FH - 1
        ge((0, -s, 0, 0, 1), l),
        ge((0, s, 0, 0, -1), p.kw - 1 - l),
    )
    return PresRelation(iters, obj, (cons,))


def conv_gather_relation(p: ConvParams, in_shape, iters: Space, tensor: str) -> PresRelation:
    """Crossbar input gather in padded coordinates.

    The image of an iteration enumerated lexicographically is the
    ``(id, fh, fw)``-ordered input vector of the crossbar.
    """
    t, b, l, r = p.pads()
    d, ih, iw = in_shape
    padded = Space.box(tensor, (d, ih + t + b, iw + l + r), ("id", "ph", "pw"))
    s = p.stride
    cons = (
        ge((-s, 0, 0, 1, 0), 0),
        ge((s, 0, 0, -1, 0), p.kh - 1),
        ge((0, -s, 0, 0, 1), 0),
        ge((0, s, 0, 0, -1), p.kw - 1),
    )
    return PresRelation(iters, padded, (cons,))


def conv_write_relation(iters: Space, obj: Space) -> PresRelation:
    """``{[oh,ow] -> [k,oh,ow]}``: each iteration writes all channels of its pixel."""
    return pixel_relation(iters, obj)


def pixel_relation(iters: Space, obj: Space) -> PresRelation:
    oh_n, ow_n = iters.extents
    if obj.arity != 3 or obj.extents[1:] != (oh_n, ow_n):
        raise AccessError(
            f"object {obj.name!r} with extents {obj.extents} is misaligned with iteration space "
            f"{iters.name!r} {iters.extents}"
        )
    cons = (eq((1, 0, 0, -1, 0)), eq((0, 1, 0, 0, -1)))
    return PresRelation(iters, obj, (cons,))


def dpu_read_relation(iters: Space, obj: Space) -> PresRelation:
    """Elementwise read of all channels at the current output pixel (Add operand)."""
    return pixel_relation(iters, obj)


def gcu_write_relation(in_shape, tensor: str, name: str = "GCU_IN") -> PresRelation:
    """Input streaming: GCU iteration ``ih`` writes row ``ih`` of every channel."""
    d, ih, iw = in_shape
    return PresRelation(
        gcu_space(name, ih),
        object_space(tensor, in_shape, ("id", "ih", "iw")),
        ((eq((1, 0, -1, 0)),),),
    )


@dataclass(frozen=True)
class AccessSpec:
    partition: int | str  # partition id, or "gcu" for graph-input streaming
    object: str
    relation: PresRelation
    direction: str  # "read" | "write"
    nodes: tuple[str, ...] = ()


def partition_space(g: NNGraph, plan: PartitionPlan, pid: int) -> Space:
    part = plan.by_id(pid)
    if part.conv is None:
        raise AccessError(f"partition {pid} has no crossbar operator")
    k, oh, ow = g.shape(g.node_map[part.conv].output)
    return iteration_space(f"{part.conv}", oh, ow)


def partition_accesses(g: NNGraph, plan: PartitionPlan) -> list[AccessSpec]:
    """Reads of every externally-produced object and writes of every exported one.

    Reads of the same object by several nodes of one partition are unioned.
    """
    of = plan.of_node()
    nm = g.node_map
    specs: list[AccessSpec] = []
    gin = g.graph_input
    specs.append(AccessSpec(GCU, gin, gcu_write_relation(g.shape(gin), gin), "write"))
    for part in plan.partitions:
        iters = partition_space(g, plan, part.id)
        reads: dict[str, tuple[PresRelation, list[str]]] = {}
        written: set[str] = set()
        for m in part.members:
            node = nm[m]
            for t in node.inputs:
                prod = g.producer(t)
                if prod is not None and of[prod.id] == part.id:
                    continue
                obj = object_space(t, g.shape(t), ("id", "ih", "iw"))
                if node.is_conv:
                    rel = conv_read_relation(node.params, g.shape(t), iters, obj)
                elif node.kind == "Add":
                    rel = dpu_read_relation(iters, obj)
                else:
                    raise AccessError(f"node {m!r} ({node.kind}) cannot read object {t!r} from another partition")
                if t in reads:
                    prev, who = reads[t]
                    reads[t] = (union(prev, rel), who + [m])
                else:
                    reads[t] = (rel, [m])
            out = node.output
            exported = out == g.graph_output or any(of[c.id] != part.id for c in g.consumers(out))
            if exported:
                written.add(out)
        for t, (rel, who) in reads.items():
            specs.append(AccessSpec(part.id, t, rel, "read", tuple(who)))
        for t in sorted(written, key=lambda t: part.members.index(g.producer(t).id)):
            specs.append(
                AccessSpec(part.id, t, conv_write_relation(iters, object_space(t, g.shape(t))), "write",
                           (g.producer(t).id,))
            )
    return specs


def writer_of(specs: list[AccessSpec], obj: str) -> AccessSpec:
    for s in specs:
        if s.direction == "write" and s.object == obj:
            return s
    raise AccessError(f"no writer for object {obj!r}")
