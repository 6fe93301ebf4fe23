"""Regenerate fixtures/ and tests/golden/ from the deterministic builders in cmaccel.zoo."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from cmaccel import tensorio, zoo
from cmaccel.lower import compile_model
from cmaccel.nnmodel import model_to_dict, reference_eval
from cmaccel.simcm import run

ROOT = Path(__file__).resolve().parent.parent
SEED = 20240601


def dump(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def main() -> None:
    fx = ROOT / "fixtures"
    for name, build in zoo.MODELS.items():
        dump(fx / "models" / f"{name}.json", model_to_dict(build()))
    for name, build in zoo.HARDWARE.items():
        dump(fx / "hw" / f"{name}.json", build().to_dict())

    (fx / "inputs").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    for name in ("single_conv", "chain_1d", "residual"):
        g = zoo.MODELS[name]()
        x = zoo.random_input(g, rng)
        tensorio.save(fx / "inputs" / f"{name}.in", x, "int8")
        tensorio.save(fx / "inputs" / f"{name}.ref", reference_eval(g, x), "int32")

    g = zoo.chain_1d()
    x = tensorio.load(fx / "inputs" / "chain_1d.in")
    _, _, trace = run(compile_model(g, zoo.chain_hw(2)), [x], trace=True)
    golden = ROOT / "tests" / "golden" / "chain_1d.trace"
    golden.parent.mkdir(parents=True, exist_ok=True)
    golden.write_text("".join(line + "\n" for line in trace))


if __name__ == "__main__":
    main()
