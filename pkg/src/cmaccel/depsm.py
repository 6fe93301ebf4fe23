"""Dependency relations between a writer and a reader loop nest, and LCU tables.

Given the writer's write relation ``W1 (I -> O)`` and the reader's read
relation ``R2 (J -> O)``, :func:`compute_S` derives ``S (O -> J)`` mapping each
observed write to the furthest reader iteration that may run once that write
(and every write preceding it in writer order) has landed::

    K  = W1^-1 (R2)          J -> I   writers each reader iteration depends on
    D  = dom K               J
    D' = D >>= D             J -> J   every iteration to all iterations not after it
    L  = lexmax K (D')       J -> I   last writer needed by all iterations up to j
    M  = W1 (L)              J -> O
    S  = lexmax M^-1         O -> J

:func:`oracle_S` recomputes ``S`` by replaying the writer one iteration at a
time, without any relation algebra.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .errors import DependencyError
from .relspec import (
    IntTuple,
    PresRelation,
    PresSet,
    Space,
    compose,
    domain,
    inverse,
    lex_ge_relation,
    lexmax,
    space_from_dict,
    space_to_dict,
)


@dataclass(frozen=True)
class DependencyChain:
    W1: PresRelation
    R2: PresRelation
    K: PresRelation
    D: PresSet
    Dprime: PresRelation
    L: PresRelation
    M: PresRelation
    S: PresRelation


def _check_inputs(W1: PresRelation, R2: PresRelation) -> None:
    if W1.range_space != R2.range_space:
        raise DependencyError(
            f"space mismatch: writer writes {W1.range_space.name!r} {W1.range_space.bounds}, "
            f"reader reads {R2.range_space.name!r} {R2.range_space.bounds}"
        )
    if not W1.is_injective():
        raise DependencyError(f"write relation {W1.domain_space.name!r} -> {W1.range_space.name!r} is not injective")
    if R2.is_empty():
        raise DependencyError(
            f"reader {R2.domain_space.name!r} does not read {R2.range_space.name!r}; no dependency to compute"
        )


def compute_S(W1: PresRelation, R2: PresRelation) -> DependencyChain:
    _check_inputs(W1, R2)
    K = compose(inverse(W1), R2)
    D = domain(K)
    Dp = lex_ge_relation(D)
    L = lexmax(compose(K, Dp))
    M = compose(W1, L)
    S = lexmax(inverse(M))
    return DependencyChain(W1, R2, K, D, Dp, L, M, S)


def oracle_S(W1: PresRelation, R2: PresRelation) -> PresRelation:
    """Writer replay: after each writer iteration, how far can the reader go?"""
    _check_inputs(W1, R2)
    writes = W1.as_dict()
    reads = R2.as_dict()
    reader_iters = [tuple(p) for p in R2.domain_space.points().tolist()]
    written: set[IntTuple] = set()
    frontier = -1  # index into reader_iters of the furthest runnable iteration
    out = []
    for i in sorted(writes):
        written.update(writes[i])
        advanced = frontier
        while advanced + 1 < len(reader_iters) and set(reads.get(reader_iters[advanced + 1], ())) <= written:
            advanced += 1
        if advanced > frontier:
            frontier = advanced
            out += [(o, reader_iters[frontier]) for o in writes[i]]
    return PresRelation.from_pairs(W1.range_space, R2.domain_space, out)


# ---------------------------------------------------------------------------
# LCU tables


@dataclass(frozen=True)
class ObjectTable:
    """Lookup table for one read object.

    ``entries`` pairs a written location with the reader iteration it unlocks,
    sorted in writer execution order; reader iterations never decrease.
    ``initial`` is the furthest iteration runnable before any write (or None).
    """

    object: str
    writer: str
    entries: tuple[tuple[IntTuple, IntTuple], ...]
    initial: IntTuple | None

    def lookup(self) -> dict[IntTuple, IntTuple]:
        return dict(self.entries)


@dataclass(frozen=True)
class LcuTable:
    reader_space: Space
    objects: tuple[ObjectTable, ...]

    RULE = (
        "frontier = lex-min over objects of the per-object max unlocked iteration; "
        "a delivered write burst advances its object's max via the entry of its lex-greatest location; "
        "the core executes the next iteration in lex order while it is <= frontier"
    )

    def to_dict(self) -> dict:
        return {
            "rule": self.RULE,
            "reader_space": space_to_dict(self.reader_space),
            "objects": [
                {
                    "object": t.object,
                    "writer": t.writer,
                    "initial": None if t.initial is None else list(t.initial),
                    "entries": [[list(o), list(j)] for o, j in t.entries],
                }
                for t in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LcuTable":
        return cls(
            space_from_dict(d["reader_space"]),
            tuple(
                ObjectTable(
                    t["object"],
                    t["writer"],
                    tuple((tuple(o), tuple(j)) for o, j in t["entries"]),
                    None if t["initial"] is None else tuple(t["initial"]),
                )
                for t in d["objects"]
            ),
        )


def _object_table(obj: str, writer: str, chain: DependencyChain, iters: list[IntTuple]) -> ObjectTable:
    reads = set(chain.D.points())
    # iterations that read nothing from this object may always follow the frontier
    ext = list(range(len(iters)))
    for k in range(len(iters) - 2, -1, -1):
        if iters[k + 1] not in reads:
            ext[k] = ext[k + 1]
    index = {j: k for k, j in enumerate(iters)}
    prefix = -1
    while prefix + 1 < len(iters) and iters[prefix + 1] not in reads:
        prefix += 1
    initial = iters[prefix] if prefix >= 0 else None
    writer_of = {o: i for i, o in chain.W1.pairs()}
    rows = sorted(
        ((writer_of[o], o), iters[ext[index[j]]]) for o, j in chain.S.pairs()
    )
    entries = tuple((o, j) for (_, o), j in rows)
    for (prev_o, prev_j), (o, j) in zip(entries, entries[1:]):
        if j < prev_j:
            raise DependencyError(
                f"object {obj!r}: S is not monotone in writer order ({prev_o}->{prev_j} precedes {o}->{j})"
            )
    return ObjectTable(obj, writer, entries, initial)


def synthesize_lcu(chains: dict[str, tuple[str, DependencyChain]], reader_space: Space) -> LcuTable:
    """Build per-object lookup tables for one reader partition.

    ``chains`` maps object id to ``(writer name, chain)``.
    """
    if not chains:
        raise DependencyError(f"reader {reader_space.name!r} reads no objects; every core needs a producer")
    iters = [tuple(p) for p in reader_space.points().tolist()]
    tables = []
    for obj in sorted(chains):
        writer, chain = chains[obj]
        if chain.R2.domain_space != reader_space:
            raise DependencyError(f"object {obj!r}: chain reader space differs from {reader_space.name!r}")
        tables.append(_object_table(obj, writer, chain, iters))
    return LcuTable(reader_space, tuple(tables))


def frontier(maxima: dict[str, IntTuple | None]) -> IntTuple | None:
    """Min-combining rule over per-object maxima (None = nothing unlocked)."""
    vals = list(maxima.values())
    if any(v is None for v in vals):
        return None
    return min(vals)


def unlocked_index(iters: list[IntTuple], j: IntTuple | None) -> int:
    """Index of the last iteration ``<= j`` (-1 when none)."""
    if j is None:
        return -1
    return bisect.bisect_right(iters, j) - 1
