"""Small reference models and hardware descriptions used by fixtures, tests and the CLI."""

from __future__ import annotations

import numpy as np

from .nnmodel import ConvParams, NNGraph, Node, TensorShape
from .placemap import Core, HwDescription


def _conv(rng: np.random.Generator, d: int, k: int, kh: int, kw: int, stride=1, padding="valid",
          wlim: int = 8) -> ConvParams:
    w = rng.integers(-wlim, wlim + 1, size=(k, d * kh * kw), dtype=np.int64)
    b = rng.integers(-64, 65, size=k, dtype=np.int64)
    return ConvParams(d, k, kh, kw, w, b, stride, padding)


def _graph(nodes, shapes, gin="x", gout=None) -> NNGraph:
    tensors = {t: TensorShape(s) for t, s in shapes.items()}
    return NNGraph(tuple(nodes), tensors, gin, gout or nodes[-1].output)


def single_conv(seed: int = 1) -> NNGraph:
    rng = np.random.default_rng(seed)
    p = _conv(rng, 1, 1, 2, 2)
    return _graph([Node("conv", "Conv2D", ("x",), "y", p)], {"x": (1, 3, 3), "y": (1, 2, 2)})


def conv_relu(seed: int = 2) -> NNGraph:
    rng = np.random.default_rng(seed)
    p = _conv(rng, 2, 3, 3, 3)
    return _graph(
        [Node("conv", "Conv2D", ("x",), "t", p), Node("relu", "ReLU", ("t",), "y")],
        {"x": (2, 6, 6), "t": (3, 4, 4), "y": (3, 4, 4)},
    )


def chain3(seed: int = 3) -> NNGraph:
    """Three convolutions; the middle one is strided, the last one pads."""
    rng = np.random.default_rng(seed)
    c1 = _conv(rng, 1, 2, 3, 3)
    c2 = _conv(rng, 2, 3, 3, 3, stride=2)
    c3 = _conv(rng, 3, 2, 3, 3, padding="same")
    return _graph(
        [
            Node("conv1", "Conv2D", ("x",), "a", c1),
            Node("relu1", "ReLU", ("a",), "ar"),
            Node("conv2", "Conv2D", ("ar",), "b", c2),
            Node("conv3", "Conv2D", ("b",), "y", c3),
        ],
        {"x": (1, 11, 11), "a": (2, 9, 9), "ar": (2, 9, 9), "b": (3, 4, 4), "y": (2, 4, 4)},
    )


def residual(seed: int = 4) -> NNGraph:
    """conv1 (valid) feeds conv2 (same) and, through a skip edge, the Add after conv2."""
    rng = np.random.default_rng(seed)
    c1 = _conv(rng, 1, 2, 3, 3)
    c2 = _conv(rng, 2, 2, 3, 3, padding="same")
    return _graph(
        [
            Node("conv1", "Conv2D", ("x",), "a", c1),
            Node("conv2", "Conv2D", ("a",), "b", c2),
            Node("add", "Add", ("b", "a"), "y"),
        ],
        {"x": (1, 6, 6), "a": (2, 4, 4), "b": (2, 4, 4), "y": (2, 4, 4)},
    )


def chain_1d(seed: int = 5) -> NNGraph:
    """A 1x1 convolution followed by a 1x3 convolution over a single row of 8 pixels."""
    rng = np.random.default_rng(seed)
    a = _conv(rng, 1, 1, 1, 1)
    b = _conv(rng, 1, 1, 1, 3)
    return _graph(
        [Node("conv_a", "Conv2D", ("x",), "t", a), Node("conv_b", "Conv2D", ("t",), "y", b)],
        {"x": (1, 1, 8), "t": (1, 1, 8), "y": (1, 1, 6)},
    )


def wide_conv(seed: int = 6) -> NNGraph:
    """D*FH*FW = 100 crossbar columns, more than a 64-wide core holds."""
    rng = np.random.default_rng(seed)
    p = _conv(rng, 4, 2, 5, 5)
    return _graph([Node("conv", "Conv2D", ("x",), "y", p)], {"x": (4, 6, 6), "y": (2, 2, 2)})


MODELS = {
    "single_conv": single_conv,
    "conv_relu": conv_relu,
    "chain3": chain3,
    "residual": residual,
    "chain_1d": chain_1d,
    "wide_conv": wide_conv,
}


def chain_hw(n: int, width: int = 64, sram: int = 16384) -> HwDescription:
    cores = tuple(Core(i, width, sram) for i in range(n))
    return HwDescription(cores, frozenset((i, i + 1) for i in range(n - 1)), frozenset({0}),
                         frozenset(range(n)))


def mesh_hw(rows: int = 2, cols: int = 3, width: int = 64, sram: int = 16384) -> HwDescription:
    """Row-major ids with bidirectional links between 4-neighbours; the first column is GCU-fed."""
    cores = tuple(Core(i, width, sram) for i in range(rows * cols))
    links = set()
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                links |= {(i, i + 1), (i + 1, i)}
            if r + 1 < rows:
                links |= {(i, i + cols), (i + cols, i)}
    return HwDescription(cores, frozenset(links), frozenset(r * cols for r in range(rows)),
                         frozenset(range(rows * cols)))


def disconnected_hw(n: int = 2, width: int = 64, sram: int = 16384) -> HwDescription:
    return HwDescription(tuple(Core(i, width, sram) for i in range(n)), frozenset(), frozenset({0}),
                         frozenset(range(n)))


HARDWARE = {
    "chain2": lambda: chain_hw(2),
    "chain3": lambda: chain_hw(3),
    "mesh2x3": mesh_hw,
    "disconnected": disconnected_hw,
}


def random_input(g: NNGraph, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(-128, 128, size=g.shape(g.graph_input), dtype=np.int64)


def random_dependency_case(rng: np.random.Generator):
    """A random (W1, R2) pair drawn from the writer/reader relations the compiler emits.

    The shared object has D channels and an OH x OW plane (each in 1..6); the
    writer is either a convolution's pixel write or GCU row streaming, and the
    reader a convolution (FH, FW in 1..3, stride 1 or 2, either padding) or an
    elementwise Add.
    """
    from .accessrel import (conv_read_relation, conv_write_relation, dpu_read_relation, gcu_write_relation,
                            iteration_space, object_space)

    d = int(rng.integers(1, 4))
    oh, ow = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    shape = (d, oh, ow)
    obj = object_space("T", shape)
    if rng.random() < 0.25:
        W1 = gcu_write_relation(shape, "T")
        desc = {"writer": "gcu"}
    else:
        W1 = conv_write_relation(iteration_space("W", oh, ow), obj)
        desc = {"writer": "conv"}
    if rng.random() < 0.2:
        R2 = dpu_read_relation(iteration_space("R", oh, ow), obj)
        desc["reader"] = "add"
    else:
        while True:
            fh, fw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            stride = int(rng.choice([1, 2]))
            padding = str(rng.choice(["valid", "same"]))
            if padding == "same" or (fh <= oh and fw <= ow):
                break
        k = int(rng.integers(1, 4))
        p = ConvParams(d, k, fh, fw, np.zeros((k, d * fh * fw), dtype=np.int64), None, stride, padding)
        r_oh, r_ow = p.output_hw(oh, ow)
        R2 = conv_read_relation(p, shape, iteration_space("R", r_oh, r_ow), obj)
        desc.update(reader="conv", kernel=[fh, fw], stride=stride, padding=padding)
    desc["shape"] = list(shape)
    return W1, R2, desc
