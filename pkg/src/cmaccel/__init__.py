"""Compiler and cycle-level simulator for a computational-memory dataflow accelerator."""

from __future__ import annotations

from .depsm import compute_S, oracle_S, synthesize_lcu
from .lower import bundle_to_json, compile_model, load_bundle
from .nnmodel import load_model, reference_eval
from .partition import partition, validate_plan
from .placemap import check_mapping, load_hw, map_partitions
from .simcm import Simulator, run

__version__ = "0.1.0"

__all__ = [
    "Simulator",
    "bundle_to_json",
    "check_mapping",
    "compile_model",
    "compute_S",
    "load_bundle",
    "load_hw",
    "load_model",
    "map_partitions",
    "oracle_S",
    "partition",
    "reference_eval",
    "run",
    "synthesize_lcu",
    "validate_plan",
]
