"""Exception hierarchy shared by the compiler phases and the simulator."""

from __future__ import annotations


class CompileError(Exception):
    """Any failure while turning a model + hardware description into a bundle."""

    module = "compile"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ModelError(CompileError, ValueError):
    module = "nnmodel"


class AccessError(CompileError):
    module = "accessrel"


class PartitionError(CompileError):
    module = "partition"


class MappingError(CompileError):
    """Infeasible placement. ``kind`` is ``"capacity"`` or ``"connectivity"``."""

    module = "placemap"

    def __init__(self, message: str, kind: str, partition: int | None = None):
        super().__init__(message)
        self.kind = kind
        self.partition = partition


class DependencyError(CompileError):
    module = "depsm"


class LoweringError(CompileError):
    module = "lower"


class SimulationError(RuntimeError):
    pass


class BundleError(SimulationError):
    """Malformed or inconsistent configuration bundle."""


class RawViolation(SimulationError):
    def __init__(self, core: int, obj: str, location: tuple, cycle: int):
        super().__init__(
            f"RAW violation on core {core}: read of {obj}{list(location)} at cycle {cycle} "
            f"before any write reached it"
        )
        self.core = core
        self.object = obj
        self.location = location
        self.cycle = cycle


class DeadlockError(SimulationError):
    pass
