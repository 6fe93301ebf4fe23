"""Compile pipeline: partition, map, derive dependencies, emit per-core configs.

The bundle is a plain JSON-serializable dict; see ``docs/formats.md``.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor

from .accessrel import (
    GCU,
    AccessSpec,
    conv_gather_relation,
    partition_accesses,
    partition_space,
)
from .depsm import DependencyChain, compute_S, oracle_S, synthesize_lcu
from .errors import DependencyError, LoweringError
from .nnmodel import NNGraph
from .partition import PartitionPlan, partition, validate_plan
from .placemap import ELEMENT_BYTES, HwDescription, Mapping, map_partitions
from .relspec import relation_to_dict, space_to_dict, to_text

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "cmaccel-bundle/1"


def _dpu_program(g: NNGraph, plan: PartitionPlan, mapping: Mapping, pid: int) -> list[dict]:
    """Straight-line DPU program operating on the crossbar's output vector."""
    nm = g.node_map
    of = plan.of_node()
    part = plan.by_id(pid)
    conv = nm[part.conv]
    if part.members[0] != conv.id:
        raise LoweringError(f"partition {pid}: convolution {conv.id!r} must be the first member")
    prog: list[dict] = [{"op": "bias_add", "bias": conv.params.bias.tolist()}]
    current = conv.output

    def export(tensor: str):
        dests = sorted({mapping.cores[of[c.id]] for c in g.consumers(tensor) if of[c.id] != pid})
        for d in dests:
            prog.append({"op": "send", "dest": d, "object": tensor})
        if tensor == g.graph_output:
            prog.append({"op": "write_local", "object": tensor})

    export(current)
    for m in part.members[1:]:
        node = nm[m]
        if node.kind == "ReLU":
            if node.inputs[0] != current:
                raise LoweringError(f"partition {pid}: {m!r} does not consume the in-flight value {current!r}")
            prog.append({"op": "relu"})
        elif node.kind == "Add":
            a, b = node.inputs
            if a == b or current not in (a, b):
                raise LoweringError(
                    f"partition {pid}: Add {m!r} must combine the in-flight value {current!r} with a remote object"
                )
            other = b if a == current else a
            prod = g.producer(other)
            if prod is not None and of[prod.id] == pid:
                raise LoweringError(f"partition {pid}: Add {m!r} reads in-partition tensor {other!r}")
            prog.append({"op": "residual_add", "object": other})
        else:
            raise LoweringError(f"partition {pid}: unsupported DPU node {m!r} ({node.kind})")
        current = node.output
        export(current)
    return prog


def _sram_directory(g: NNGraph, plan: PartitionPlan, pid: int, reads: list[AccessSpec]) -> dict:
    nm = g.node_map
    part = plan.by_id(pid)
    out = {}
    for spec in reads:
        d, h, w = g.shape(spec.object)
        pt = pb = pl = pr = 0
        for m in part.members:
            n = nm[m]
            if n.is_conv and spec.object in n.inputs:
                pt, pb, pl, pr = n.params.pads()
        out[spec.object] = {
            "shape": [d, h, w],
            "extents": [d, h + pt + pb, w + pl + pr],
            "origin": [0, pt, pl],
            "element_bytes": ELEMENT_BYTES,
            "constant_fill": 0,
        }
    if g.producer(g.graph_output).id in part.members:
        out[g.graph_output] = {
            "shape": list(g.shape(g.graph_output)),
            "extents": list(g.shape(g.graph_output)),
            "origin": [0, 0, 0],
            "element_bytes": ELEMENT_BYTES,
            "constant_fill": 0,
        }
    return out


def _chains(specs: list[AccessSpec], oracle: bool, workers: int = 1) -> dict[tuple[int, str], DependencyChain]:
    writers = {s.object: s for s in specs if s.direction == "write"}
    jobs = []
    for s in specs:
        if s.direction != "read":
            continue
        if s.object not in writers:
            raise LoweringError(f"object {s.object!r} is read by partition {s.partition} but never written")
        jobs.append((s.partition, s.object, writers[s.object].relation, s.relation))

    def run(job):
        pid, obj, W1, R2 = job
        chain = compute_S(W1, R2)
        if oracle:
            ref = oracle_S(W1, R2)
            if ref != chain.S:
                raise DependencyError(f"partition {pid}, object {obj!r}: S disagrees with the writer-replay oracle")
        return (pid, obj), chain

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return dict(results)


def compile_model(g: NNGraph, hw: HwDescription, *, oracle: bool = True, workers: int = 1) -> dict:
    """Run every compile phase and return the initialization bundle."""
    plan = partition(g)
    report = validate_plan(plan, g)
    if not report:
        raise LoweringError(f"invalid partition plan: {report.first}")
    mapping = map_partitions(plan, hw, g)
    log.info("mapped %d partitions: %s", len(plan.partitions), mapping.cores)
    specs = partition_accesses(g, plan)
    chains = _chains(specs, oracle, workers)
    writer_name = {
        s.object: ("gcu" if s.partition == GCU else f"core{mapping.cores[s.partition]}")
        for s in specs
        if s.direction == "write"
    }
    nm = g.node_map
    cores = []
    for part in sorted(plan.partitions, key=lambda p: mapping.cores[p.id]):
        pid, cid = part.id, mapping.cores[part.id]
        iters = partition_space(g, plan, pid)
        reads = [s for s in specs if s.partition == pid and s.direction == "read"]
        writes = [s for s in specs if s.partition == pid and s.direction == "write"]
        lcu = synthesize_lcu(
            {s.object: (writer_name[s.object], chains[(pid, s.object)]) for s in reads}, iters
        )
        conv = nm[part.conv]
        src = conv.inputs[0]
        gather = conv_gather_relation(conv.params, g.shape(src), iters, src)
        cores.append(
            {
                "core": cid,
                "partition": pid,
                "iter_space": space_to_dict(iters),
                "crossbar": {
                    "rows": conv.params.out_channels,
                    "cols": conv.params.columns,
                    "weights": conv.params.weights.tolist(),
                },
                "gather": {"object": src, "relation": relation_to_dict(gather)},
                "dpu": _dpu_program(g, plan, mapping, pid),
                "lcu": lcu.to_dict(),
                "sram": _sram_directory(g, plan, pid, reads),
                "debug": {
                    "members": list(part.members),
                    "reads": {s.object: to_text(s.relation) for s in reads},
                    "writes": {s.object: to_text(s.relation) for s in writes},
                    "S": {s.object: to_text(chains[(pid, s.object)].S) for s in reads},
                },
            }
        )
    gin, gout = g.graph_input, g.graph_output
    out_pid = plan.of_node()[g.producer(gout).id]
    in_specs = [s for s in specs if s.object == gin]
    return {
        "format": BUNDLE_FORMAT,
        "hw": hw.to_dict(),
        "plan": plan.to_dict(),
        "mapping": mapping.to_dict(),
        "gcu": {
            "input": {
                "object": gin,
                "shape": list(g.shape(gin)),
                "dests": sorted(mapping.cores[s.partition] for s in in_specs if s.direction == "read"),
                "write_relation": to_text(next(s for s in in_specs if s.direction == "write").relation),
            },
            "output": {"object": gout, "shape": list(g.shape(gout)), "core": mapping.cores[out_pid]},
        },
        "cores": cores,
    }


def bundle_to_json(bundle: dict) -> str:
    return json.dumps(bundle, sort_keys=True, indent=1) + "\n"


def load_bundle(data: bytes | str) -> dict:
    from .errors import BundleError

    try:
        bundle = json.loads(data)
    except json.JSONDecodeError as e:
        raise BundleError(f"bundle is not valid JSON: {e}") from e
    if bundle.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"unsupported bundle format {bundle.get('format')!r}, expected {BUNDLE_FORMAT!r}")
    return bundle
