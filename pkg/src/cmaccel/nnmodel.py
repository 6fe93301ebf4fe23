"""Dataflow graph representation, JSON model loader and the sequential reference evaluator."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ModelError

OP_KINDS = ("Conv2D", "Add", "ReLU")
PADDING_MODES = ("valid", "same")
MODEL_FORMAT = "cm-model/1"


def wrap32(x) -> np.ndarray:
    """Reduce integers to signed 32-bit two's complement (accumulator semantics)."""
    return np.asarray(x, dtype=np.int64).astype(np.int32).astype(np.int64)


@dataclass(frozen=True)
class TensorShape:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ModelError(f"tensor extents must be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)


@dataclass(frozen=True, eq=False)
class ConvParams:
    """2-D convolution lowered to a ``K x (D*FH*FW)`` crossbar matrix."""

    in_channels: int
    out_channels: int
    kh: int
    kw: int
    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: str = "valid"

    def __post_init__(self):
        if self.padding not in PADDING_MODES:
            raise ModelError(f"unknown padding {self.padding!r}")
        if min(self.in_channels, self.out_channels, self.kh, self.kw, self.stride) < 1:
            raise ModelError("convolution dimensions and stride must be >= 1")
        w = np.asarray(self.weights, dtype=np.int64)
        cols = self.in_channels * self.kh * self.kw
        if w.shape == (self.out_channels, self.in_channels, self.kh, self.kw):
            w = w.reshape(self.out_channels, cols)
        if w.shape != (self.out_channels, cols):
            raise ModelError(f"weight matrix must be {self.out_channels}x{cols}, got {w.shape}")
        if w.size and (w.min() < -128 or w.max() > 127):
            raise ModelError("weights must fit in int8")
        b = np.zeros(self.out_channels, dtype=np.int64) if self.bias is None else np.asarray(self.bias, dtype=np.int64)
        if b.shape != (self.out_channels,):
            raise ModelError(f"bias must have length {self.out_channels}, got shape {b.shape}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def columns(self) -> int:
        return self.in_channels * self.kh * self.kw

    def pads(self) -> tuple[int, int, int, int]:
        """(top, bottom, left, right) zero padding."""
        if self.padding == "valid":
            return (0, 0, 0, 0)
        top, left = (self.kh - 1) // 2, (self.kw - 1) // 2
        return (top, self.kh - 1 - top, left, self.kw - 1 - left)

    def output_hw(self, ih: int, iw: int) -> tuple[int, int]:
        t, b, l, r = self.pads()
        ph, pw = ih + t + b, iw + l + r
        if ph < self.kh or pw < self.kw:
            raise ModelError(f"filter {self.kh}x{self.kw} larger than padded input {ph}x{pw}")
        return (ph - self.kh) // self.stride + 1, (pw - self.kw) // self.stride + 1


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    inputs: tuple[str, ...]
    output: str
    params: ConvParams | None = None

    @property
    def is_conv(self) -> bool:
        return self.kind == "Conv2D"


@dataclass(frozen=True)
class NNGraph:
    nodes: tuple[Node, ...]
    tensors: dict[str, TensorShape]
    graph_input: str
    graph_output: str
    _order: tuple[str, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        validate_graph(self)
        object.__setattr__(self, "_order", tuple(n.id for n in _topo_sort(self.nodes, self.graph_input)))

    @property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def topo_order(self) -> list[Node]:
        nm = self.node_map
        return [nm[i] for i in self._order]

    def producer(self, tensor: str) -> Node | None:
        for n in self.nodes:
            if n.output == tensor:
                return n
        return None

    def consumers(self, tensor: str) -> list[Node]:
        return [n for n in self.topo_order() if tensor in n.inputs]

    def shape(self, tensor: str) -> tuple[int, ...]:
        return self.tensors[tensor].dims

    @property
    def conv_nodes(self) -> list[Node]:
        return [n for n in self.topo_order() if n.is_conv]


def _topo_sort(nodes: Sequence[Node], graph_input: str) -> list[Node]:
    # Kahn's algorithm; ties broken by declaration order
    produced_by = {n.output: n.id for n in nodes}
    deps = {n.id: {produced_by[t] for t in n.inputs if t in produced_by} for n in nodes}
    done: set[str] = set()
    order: list[Node] = []
    pending = list(nodes)
    while pending:
        for n in pending:
            if deps[n.id] <= done:
                order.append(n)
                done.add(n.id)
                pending.remove(n)
                break
        else:
            raise ModelError(f"cycle detected among nodes {sorted(n.id for n in pending)}")
    return order


def infer_shape(node: Node, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    if node.kind == "Conv2D":
        p = node.params
        (s,) = in_shapes
        if len(s) != 3 or s[0] != p.in_channels:
            raise ModelError(f"node {node.id!r}: input shape {s} does not match {p.in_channels} input channels")
        oh, ow = p.output_hw(s[1], s[2])
        return (p.out_channels, oh, ow)
    if node.kind == "Add":
        a, b = in_shapes
        if a != b:
            raise ModelError(f"node {node.id!r}: shape mismatch between Add operands {a} and {b}")
        return a
    if node.kind == "ReLU":
        (s,) = in_shapes
        return s
    raise ModelError(f"node {node.id!r}: unknown op kind {node.kind!r}")


def validate_graph(g: NNGraph) -> None:
    if not g.nodes:
        raise ModelError("graph must contain at least one node")
    ids = [n.id for n in g.nodes]
    if len(set(ids)) != len(ids):
        raise ModelError("duplicate node ids")
    if g.graph_input not in g.tensors:
        raise ModelError(f"graph input {g.graph_input!r} is not a declared tensor")
    if g.graph_output not in g.tensors:
        raise ModelError(f"graph output {g.graph_output!r} is not a declared tensor")
    producers: dict[str, str] = {}
    for n in g.nodes:
        if n.kind not in OP_KINDS:
            raise ModelError(f"node {n.id!r}: unknown op kind {n.kind!r}")
        arity = {"Conv2D": 1, "Add": 2, "ReLU": 1}[n.kind]
        if len(n.inputs) != arity:
            raise ModelError(f"node {n.id!r}: {n.kind} takes {arity} input(s), got {len(n.inputs)}")
        if n.kind == "Conv2D" and n.params is None:
            raise ModelError(f"node {n.id!r}: missing convolution parameters")
        for t in (*n.inputs, n.output):
            if t not in g.tensors:
                raise ModelError(f"node {n.id!r}: undeclared tensor {t!r}")
        if n.output == g.graph_input or n.output in producers:
            raise ModelError(f"tensor {n.output!r} has more than one producer")
        producers[n.output] = n.id
    for n in g.nodes:
        for t in n.inputs:
            if t != g.graph_input and t not in producers:
                raise ModelError(f"node {n.id!r}: tensor {t!r} has no producer")
    if g.graph_output not in producers:
        raise ModelError(f"graph output {g.graph_output!r} is not produced by any node")
    for n in _topo_sort(g.nodes, g.graph_input):
        got = infer_shape(n, [g.tensors[t].dims for t in n.inputs])
        if got != g.tensors[n.output].dims:
            raise ModelError(f"node {n.id!r}: shape mismatch, declared {g.tensors[n.output].dims}, inferred {got}")


# ---------------------------------------------------------------------------
# loading


def _decode_array(spec: Any, dtype=np.int64) -> np.ndarray:
    if isinstance(spec, dict):
        try:
            raw = base64.b64decode(spec["data"], validate=True)
            arr = np.frombuffer(raw, dtype=np.dtype(spec.get("dtype", "int8")).newbyteorder("<"))
            if "shape" in spec:
                arr = arr.reshape(spec["shape"])
        except Exception as e:  # noqa: BLE001 - report any decoding failure uniformly
            raise ModelError(f"malformed weights: {e}") from e
        return arr.astype(dtype)
    try:
        arr = np.asarray(spec)
    except Exception as e:  # noqa: BLE001
        raise ModelError(f"malformed weights: {e}") from e
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.integer):
        raise ModelError("malformed weights: expected a nested list of integers")
    return arr.astype(dtype)


def _conv_params(node_id: str, params: dict, weights: dict) -> ConvParams:
    w = weights.get(node_id)
    if w is None or "weight" not in w:
        raise ModelError(f"malformed weights: no weights for conv node {node_id!r}")
    kernel = params.get("kernel")
    if not (isinstance(kernel, (list, tuple)) and len(kernel) == 2):
        raise ModelError(f"node {node_id!r}: 'kernel' must be [FH, FW]")
    return ConvParams(
        in_channels=int(params["in_channels"]),
        out_channels=int(params["out_channels"]),
        kh=int(kernel[0]),
        kw=int(kernel[1]),
        weights=_decode_array(w["weight"]),
        bias=_decode_array(w["bias"]) if "bias" in w else None,
        stride=int(params.get("stride", 1)),
        padding=params.get("padding", "valid"),
    )


def model_from_dict(doc: dict) -> NNGraph:
    try:
        tensors = {t["id"]: TensorShape(tuple(t["shape"])) for t in doc["tensors"]}
        weights = doc.get("weights", {})
        nodes = []
        for nd in doc["nodes"]:
            kind = nd["kind"]
            if kind not in OP_KINDS:
                raise ModelError(f"node {nd.get('id')!r}: unknown op kind {kind!r}")
            params = _conv_params(nd["id"], nd.get("params", {}), weights) if kind == "Conv2D" else None
            nodes.append(Node(nd["id"], kind, tuple(nd["inputs"]), nd["output"], params))
        return NNGraph(tuple(nodes), tensors, doc["graph_input"], doc["graph_output"])
    except KeyError as e:
        raise ModelError(f"model file is missing field {e.args[0]!r}") from e


def load_model(data: bytes | str) -> NNGraph:
    """Parse and validate a JSON model document."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ModelError(f"model is not valid JSON: {e}") from e
    return model_from_dict(doc)


def model_to_dict(g: NNGraph) -> dict:
    nodes, weights = [], {}
    for n in g.nodes:
        nd = {"id": n.id, "kind": n.kind, "inputs": list(n.inputs), "output": n.output}
        if n.is_conv:
            p = n.params
            nd["params"] = {
                "in_channels": p.in_channels,
                "out_channels": p.out_channels,
                "kernel": [p.kh, p.kw],
                "stride": p.stride,
                "padding": p.padding,
            }
            weights[n.id] = {"weight": p.weights.tolist(), "bias": p.bias.tolist()}
        nodes.append(nd)
    return {
        "format": MODEL_FORMAT,
        "tensors": [{"id": t, "shape": list(s.dims)} for t, s in g.tensors.items()],
        "nodes": nodes,
        "weights": weights,
        "graph_input": g.graph_input,
        "graph_output": g.graph_output,
    }


# ---------------------------------------------------------------------------
# reference evaluation


def pad_input(p: ConvParams, x: np.ndarray) -> np.ndarray:
    t, b, l, r = p.pads()
    return np.pad(x, ((0, 0), (t, b), (l, r)))


def conv2d_mxv_reference(p: ConvParams, x: np.ndarray, trace: dict | None = None) -> np.ndarray:
    """Convolution as one matrix-vector product per output pixel.

    If ``trace`` is a dict, it receives ``(oh, ow) -> set of (id, ih, iw)``
    naming the unpadded input locations each output pixel reads.
    """
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 3 or x.shape[0] != p.in_channels:
        raise ModelError(f"input shape {x.shape} does not match {p.in_channels} input channels")
    oh_n, ow_n = p.output_hw(x.shape[1], x.shape[2])
    t, _, l, _ = p.pads()
    xp = pad_input(p, x)
    out = np.zeros((p.out_channels, oh_n, ow_n), dtype=np.int64)
    s = p.stride
    for oh in range(oh_n):
        for ow in range(ow_n):
            window = xp[:, oh * s:oh * s + p.kh, ow * s:ow * s + p.kw]
            out[:, oh, ow] = wrap32(p.weights @ window.reshape(-1) + p.bias)
            if trace is not None:
                touched = set()
                for d in range(p.in_channels):
                    for fh in range(p.kh):
                        for fw in range(p.kw):
                            ih, iw = oh * s + fh - t, ow * s + fw - l
                            if 0 <= ih < x.shape[1] and 0 <= iw < x.shape[2]:
                                touched.add((d, ih, iw))
                trace[(oh, ow)] = touched
    return out


def eval_node(node: Node, args: list[np.ndarray]) -> np.ndarray:
    if node.kind == "Conv2D":
        return conv2d_mxv_reference(node.params, args[0])
    if node.kind == "Add":
        return wrap32(args[0] + args[1])
    if node.kind == "ReLU":
        return np.maximum(args[0], 0)
    raise ModelError(f"unknown op kind {node.kind!r}")


def reference_eval(g: NNGraph, x: np.ndarray) -> np.ndarray:
    """Evaluate the graph sequentially in topological order."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != g.shape(g.graph_input):
        raise ModelError(f"input shape {x.shape} does not match graph input {g.shape(g.graph_input)}")
    env = {g.graph_input: x}
    for node in g.topo_order():
        env[node.output] = eval_node(node, [env[t] for t in node.inputs])
    return env[g.graph_output]
