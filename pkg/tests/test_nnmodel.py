from __future__ import annotations

import base64
import json

import numpy as np
import pytest

from cmaccel import zoo
from cmaccel.errors import ModelError
from cmaccel.nnmodel import (
    ConvParams,
    NNGraph,
    Node,
    TensorShape,
    conv2d_mxv_reference,
    load_model,
    model_from_dict,
    model_to_dict,
    reference_eval,
    wrap32,
)


def naive_conv(w4, bias, x, stride, pads):
    """Six nested loops over output channel, output pixel, input channel and filter tap."""
    k_n, d_n, fh_n, fw_n = w4.shape
    t, b, l, r = pads
    ih_n, iw_n = x.shape[1:]
    oh_n = (ih_n + t + b - fh_n) // stride + 1
    ow_n = (iw_n + l + r - fw_n) // stride + 1
    out = np.zeros((k_n, oh_n, ow_n), dtype=np.int64)
    for k in range(k_n):
        for oh in range(oh_n):
            for ow in range(ow_n):
                acc = int(bias[k])
                for d in range(d_n):
                    for fh in range(fh_n):
                        for fw in range(fw_n):
                            ih, iw = oh * stride + fh - t, ow * stride + fw - l
                            if 0 <= ih < ih_n and 0 <= iw < iw_n:
                                acc += int(w4[k, d, fh, fw]) * int(x[d, ih, iw])
                out[k, oh, ow] = acc
    return wrap32(out)


def test_mxv_matches_naive_loops():
    rng = np.random.default_rng(200)
    done = 0
    while done < 200:
        d, k = rng.integers(1, 4, size=2)
        fh, fw = rng.integers(1, 4, size=2)
        ih, iw = rng.integers(2, 9, size=2)
        stride = int(rng.integers(1, 3))
        padding = str(rng.choice(["valid", "same"]))
        if padding == "valid" and (fh > ih or fw > iw):
            continue
        w4 = rng.integers(-128, 128, size=(k, d, fh, fw))
        bias = rng.integers(-1000, 1000, size=k)
        p = ConvParams(int(d), int(k), int(fh), int(fw), w4, bias, stride, padding)
        x = rng.integers(-128, 128, size=(d, ih, iw))
        assert np.array_equal(conv2d_mxv_reference(p, x), naive_conv(w4, bias, x, stride, p.pads()))
        done += 1


def test_wraparound_is_32_bit():
    assert wrap32(2**31) == -(2**31)
    assert wrap32(-(2**31) - 1) == 2**31 - 1


def test_relu_graph():
    g = NNGraph((Node("r", "ReLU", ("x",), "y"),), {"x": TensorShape((1, 1, 2)), "y": TensorShape((1, 1, 2))},
                "x", "y")
    assert reference_eval(g, np.array([[[-1, 2]]])).tolist() == [[[0, 2]]]


def test_residual_with_identity_weights():
    ident1 = np.zeros((2, 1, 3, 3), dtype=np.int64)
    ident1[:, 0, 1, 1] = 1
    ident2 = np.zeros((2, 2, 3, 3), dtype=np.int64)
    ident2[0, 0, 1, 1] = ident2[1, 1, 1, 1] = 1
    c1 = ConvParams(1, 2, 3, 3, ident1, None)
    c2 = ConvParams(2, 2, 3, 3, ident2, None, padding="same")
    g = NNGraph(
        (Node("conv1", "Conv2D", ("x",), "a", c1), Node("conv2", "Conv2D", ("a",), "b", c2),
         Node("add", "Add", ("b", "a"), "y")),
        {t: TensorShape(s) for t, s in {"x": (1, 6, 6), "a": (2, 4, 4), "b": (2, 4, 4), "y": (2, 4, 4)}.items()},
        "x", "y",
    )
    x = np.arange(36).reshape(1, 6, 6)
    a = conv2d_mxv_reference(c1, x)
    assert np.array_equal(reference_eval(g, x), conv2d_mxv_reference(c2, a) + a)
    assert np.array_equal(reference_eval(g, x), 2 * np.stack([x[0, 1:5, 1:5]] * 2))


def test_model_json_round_trip():
    g = zoo.residual()
    doc = json.loads(json.dumps(model_to_dict(g)))
    g2 = model_from_dict(doc)
    x = zoo.random_input(g, np.random.default_rng(0))
    assert np.array_equal(reference_eval(g, x), reference_eval(g2, x))


def test_base64_weights():
    doc = model_to_dict(zoo.single_conv())
    w = np.asarray(doc["weights"]["conv"]["weight"], dtype=np.int8)
    doc["weights"]["conv"]["weight"] = {"data": base64.b64encode(w.tobytes()).decode(), "dtype": "int8",
                                        "shape": list(w.shape)}
    g = model_from_dict(doc)
    assert np.array_equal(g.node_map["conv"].params.weights, w)


@pytest.mark.parametrize(
    "mutate,msg",
    [
        (lambda d: d.update(nodes=[]), "at least one node"),
        (lambda d: d["nodes"][0].update(kind="Pool"), "unknown op kind"),
        (lambda d: d["weights"].pop("conv"), "malformed weights"),
        (lambda d: d["tensors"][1].update(shape=[1, 3, 3]), "shape"),
        (lambda d: d["nodes"].append(dict(d["nodes"][0])), "duplicate"),
    ],
)
def test_load_errors(mutate, msg):
    doc = model_to_dict(zoo.single_conv())
    mutate(doc)
    with pytest.raises(ModelError, match=msg):
        model_from_dict(doc)


def test_cycle_rejected():
    p = ConvParams(1, 1, 1, 1, np.ones((1, 1)), None)
    shapes = {t: TensorShape((1, 2, 2)) for t in "xab"}
    with pytest.raises(ModelError, match="cycle"):
        NNGraph((Node("c", "Conv2D", ("x",), "a", p), Node("s", "Add", ("a", "b"), "b")), shapes, "x", "b")


def test_weights_must_be_int8():
    with pytest.raises(ModelError, match="int8"):
        ConvParams(1, 1, 1, 1, np.array([[300]]), None)


def test_input_shape_checked():
    g = zoo.single_conv()
    with pytest.raises(ModelError, match="input shape"):
        reference_eval(g, np.zeros((1, 4, 4)))


def test_load_model_bad_json():
    with pytest.raises(ModelError, match="JSON"):
        load_model("{nope")
