"""Bounded integer sets and relations over affine constraints.

Every set lives inside a finite box (a :class:`Space`), so all operators can be
executed by enumerating the box and filtering it through the constraints.
Constraint form is kept for construction, printing and serialization; derived
relations (compositions, lexmax, ...) are stored extensionally as point lists.

Equality between sets or relations is extensional: two objects are equal when
they live in the same spaces and enumerate to the same points.
"""

from __future__ import annotations

import contextlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

IntTuple = tuple[int, ...]
Pair = tuple[IntTuple, IntTuple]

DEFAULT_POINT_CAP = 10**6
DEFAULT_PAIR_CAP = 10**7

_caps = {"points": DEFAULT_POINT_CAP, "pairs": DEFAULT_PAIR_CAP}


class EnumerationTooLarge(RuntimeError):
    """Raised when enumerating a space or join would exceed the configured cap."""


def get_enumeration_caps() -> tuple[int, int]:
    return _caps["points"], _caps["pairs"]


def set_enumeration_caps(points: int | None = None, pairs: int | None = None) -> None:
    if points is not None:
        _caps["points"] = int(points)
    if pairs is not None:
        _caps["pairs"] = int(pairs)


@contextlib.contextmanager
def enumeration_caps(points: int | None = None, pairs: int | None = None):
    old = dict(_caps)
    set_enumeration_caps(points, pairs)
    try:
        yield
    finally:
        _caps.update(old)


# ---------------------------------------------------------------------------
# spaces and constraints


@dataclass(frozen=True)
class Space:
    """A named box of integer tuples with inclusive per-dimension bounds."""

    name: str
    bounds: tuple[tuple[int, int], ...]
    dims: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        bounds = tuple((int(lo), int(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if not bounds:
            raise ValueError(f"space {self.name!r} must have at least one dimension")
        for k, (lo, hi) in enumerate(bounds):
            if lo > hi:
                raise ValueError(f"space {self.name!r}: empty bound [{lo}, {hi}] in dimension {k}")
        if self.dims is not None:
            dims = tuple(self.dims)
            if len(dims) != len(bounds):
                raise ValueError(f"space {self.name!r}: {len(dims)} names for {len(bounds)} dimensions")
            object.__setattr__(self, "dims", dims)

    @classmethod
    def box(cls, name: str, extents: Sequence[int], dims: Sequence[str] | None = None) -> "Space":
        """Space ``[0, e) x [0, f) x ...``."""
        return cls(name, tuple((0, int(e) - 1) for e in extents), tuple(dims) if dims else None)

    @property
    def arity(self) -> int:
        return len(self.bounds)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(hi - lo + 1 for lo, hi in self.bounds)

    @property
    def size(self) -> int:
        n = 1
        for e in self.extents:
            n *= e
        return n

    @property
    def dim_names(self) -> tuple[str, ...]:
        if self.dims is not None:
            return self.dims
        return tuple(f"i{k}" for k in range(self.arity))

    def in_bounds(self, t: Sequence[int]) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(t, self.bounds))

    def points(self) -> np.ndarray:
        """All points of the box, shape ``(size, arity)``, in lexicographic order."""
        cap = _caps["points"]
        if self.size > cap:
            raise EnumerationTooLarge(
                f"enumeration too large: space {self.name!r} has {self.size} points (cap {cap})"
            )
        ranges = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in self.bounds]
        grids = np.meshgrid(*ranges, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def renamed(self, name: str) -> "Space":
        return Space(name, self.bounds, self.dims)


@dataclass(frozen=True)
class AffineConstraint:
    """``coeffs . x + const >= 0`` (or ``== 0`` when ``eq`` is set)."""

    coeffs: tuple[int, ...]
    const: int = 0
    eq: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))
        object.__setattr__(self, "const", int(self.const))

    def holds(self, t: Sequence[int]) -> bool:
        v = self.const
        for c, x in zip(self.coeffs, t):
            v += c * x
        return v == 0 if self.eq else v >= 0

    def mask(self, pts: np.ndarray) -> np.ndarray:
        v = pts @ np.asarray(self.coeffs, dtype=np.int64) + self.const
        return v == 0 if self.eq else v >= 0

    def to_dict(self) -> dict:
        return {"coeffs": list(self.coeffs), "const": self.const, "kind": "eq" if self.eq else "ge"}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineConstraint":
        return cls(tuple(d["coeffs"]), d["const"], d["kind"] == "eq")


Conjunction = tuple[AffineConstraint, ...]


def ge(coeffs: Sequence[int], const: int = 0) -> AffineConstraint:
    return AffineConstraint(tuple(coeffs), const, False)


def eq(coeffs: Sequence[int], const: int = 0) -> AffineConstraint:
    return AffineConstraint(tuple(coeffs), const, True)


def _check_arity(disjuncts, n: int, what: str) -> tuple[Conjunction, ...]:
    out = []
    for conj in disjuncts:
        conj = tuple(conj)
        for c in conj:
            if len(c.coeffs) != n:
                raise ValueError(f"{what}: constraint has {len(c.coeffs)} coefficients, expected {n}")
        out.append(conj)
    return tuple(out)


def _filter(pts: np.ndarray, disjuncts: tuple[Conjunction, ...]) -> np.ndarray:
    if not disjuncts:
        return np.zeros(len(pts), dtype=bool)
    keep = np.zeros(len(pts), dtype=bool)
    for conj in disjuncts:
        m = np.ones(len(pts), dtype=bool)
        for c in conj:
            m &= c.mask(pts)
        keep |= m
    return keep


def _point_conjunction(t: Sequence[int]) -> Conjunction:
    n = len(t)
    return tuple(eq(tuple(1 if i == k else 0 for i in range(n)), -int(v)) for k, v in enumerate(t))


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True, eq=False)
class PresSet:
    """Union of conjunctions of affine constraints, intersected with a space box."""

    space: Space
    disjuncts: tuple[Conjunction, ...] = ((),)
    _points: tuple[IntTuple, ...] | None = field(default=None, repr=False)
    explicit: bool = field(default=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "disjuncts", _check_arity(self.disjuncts, self.space.arity, "set"))

    @classmethod
    def universe(cls, space: Space) -> "PresSet":
        return cls(space, ((),))

    @classmethod
    def empty(cls, space: Space) -> "PresSet":
        return cls(space, (), (), True)

    @classmethod
    def from_points(cls, space: Space, points: Iterable[Sequence[int]]) -> "PresSet":
        pts = sorted({tuple(int(v) for v in p) for p in points})
        for p in pts:
            if len(p) != space.arity or not space.in_bounds(p):
                raise ValueError(f"point {p} outside space {space.name!r}")
        return cls(space, tuple(_point_conjunction(p) for p in pts), tuple(pts), True)

    @property
    def is_explicit(self) -> bool:
        return self.explicit

    def points(self) -> tuple[IntTuple, ...]:
        if self._points is None:
            pts = self.space.points()
            sel = pts[_filter(pts, self.disjuncts)]
            object.__setattr__(self, "_points", tuple(tuple(int(v) for v in row) for row in sel))
        return self._points

    def __iter__(self) -> Iterator[IntTuple]:
        return iter(self.points())

    def __len__(self) -> int:
        return len(self.points())

    def __contains__(self, t) -> bool:
        return contains(self, t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PresSet):
            return NotImplemented
        return self.space == other.space and self.points() == other.points()

    def __hash__(self) -> int:
        return hash(self.space)

    def is_empty(self) -> bool:
        return not self.points()

    def __str__(self) -> str:
        return to_text(self)


# ---------------------------------------------------------------------------
# relations


@dataclass(frozen=True, eq=False)
class PresRelation:
    """Relation between two spaces; constraints range over ``(domain..., range...)``."""

    domain_space: Space
    range_space: Space
    disjuncts: tuple[Conjunction, ...] = ((),)
    _pairs: tuple[Pair, ...] | None = field(default=None, repr=False)
    explicit: bool = field(default=False, repr=False)

    def __post_init__(self):
        n = self.domain_space.arity + self.range_space.arity
        object.__setattr__(self, "disjuncts", _check_arity(self.disjuncts, n, "relation"))

    @classmethod
    def empty(cls, dom: Space, rng: Space) -> "PresRelation":
        return cls(dom, rng, (), (), True)

    @classmethod
    def from_pairs(cls, dom: Space, rng: Space, pairs: Iterable[tuple[Sequence[int], Sequence[int]]]) -> "PresRelation":
        ps = sorted({(tuple(int(v) for v in a), tuple(int(v) for v in b)) for a, b in pairs})
        for a, b in ps:
            if len(a) != dom.arity or not dom.in_bounds(a):
                raise ValueError(f"{a} outside domain space {dom.name!r}")
            if len(b) != rng.arity or not rng.in_bounds(b):
                raise ValueError(f"{b} outside range space {rng.name!r}")
        return cls(dom, rng, tuple(_point_conjunction(a + b) for a, b in ps), tuple(ps), True)

    @property
    def arity(self) -> tuple[int, int]:
        return self.domain_space.arity, self.range_space.arity

    @property
    def is_explicit(self) -> bool:
        return self.explicit

    def pairs(self) -> tuple[Pair, ...]:
        """All ``(i, o)`` pairs, sorted lexicographically by ``i`` then ``o``."""
        if self._pairs is None:
            object.__setattr__(self, "_pairs", tuple(self._enumerate()))
        return self._pairs

    def _enumerate(self) -> list[Pair]:
        point_cap, pair_cap = get_enumeration_caps()
        total = self.domain_space.size * self.range_space.size
        if total > pair_cap:
            raise EnumerationTooLarge(
                f"enumeration too large: relation {self.domain_space.name!r} -> "
                f"{self.range_space.name!r} spans {total} candidate pairs (cap {pair_cap})"
            )
        if not self.disjuncts:
            return []
        dpts = self.domain_space.points()
        rpts = self.range_space.points()
        da = self.domain_space.arity
        out: list[Pair] = []
        # chunk over domain points so the candidate matrix stays small
        chunk = max(1, 200_000 // max(1, len(rpts)))
        for start in range(0, len(dpts), chunk):
            dblk = dpts[start:start + chunk]
            cand = np.concatenate(
                [np.repeat(dblk, len(rpts), axis=0), np.tile(rpts, (len(dblk), 1))], axis=1
            )
            for row in cand[_filter(cand, self.disjuncts)]:
                vals = tuple(int(v) for v in row)
                out.append((vals[:da], vals[da:]))
        return out

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs())

    def __len__(self) -> int:
        return len(self.pairs())

    def __contains__(self, pair) -> bool:
        a, b = pair
        return contains(self.as_set(), tuple(a) + tuple(b))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PresRelation):
            return NotImplemented
        return (
            self.domain_space == other.domain_space
            and self.range_space == other.range_space
            and self.pairs() == other.pairs()
        )

    def __hash__(self) -> int:
        return hash((self.domain_space, self.range_space))

    def __str__(self) -> str:
        return to_text(self)

    def is_empty(self) -> bool:
        return not self.pairs()

    def as_set(self) -> PresSet:
        """View the relation as a set over the concatenated (domain, range) space."""
        d, r = self.domain_space, self.range_space
        space = Space(f"{d.name}->{r.name}", d.bounds + r.bounds, d.dim_names + r.dim_names)
        pts = None if self._pairs is None else tuple(a + b for a, b in self._pairs)
        return PresSet(space, self.disjuncts, pts, self.explicit)

    def image(self, t: Sequence[int]) -> tuple[IntTuple, ...]:
        t = tuple(t)
        return tuple(b for a, b in self.pairs() if a == t)

    def as_dict(self) -> dict[IntTuple, tuple[IntTuple, ...]]:
        out: dict[IntTuple, list[IntTuple]] = {}
        for a, b in self.pairs():
            out.setdefault(a, []).append(b)
        return {k: tuple(v) for k, v in out.items()}

    def is_functional(self) -> bool:
        doms = [a for a, _ in self.pairs()]
        return len(doms) == len(set(doms))

    def is_injective(self) -> bool:
        rngs = [b for _, b in self.pairs()]
        return len(rngs) == len(set(rngs))


# ---------------------------------------------------------------------------
# operators


def contains(s: PresSet | PresRelation, t: Sequence[int]) -> bool:
    """Membership of a tuple; for relations ``t`` is the concatenated (domain, range) tuple."""
    if isinstance(s, PresRelation):
        s = s.as_set()
    t = tuple(int(v) for v in t)
    if len(t) != s.space.arity:
        raise ValueError(f"arity mismatch: tuple {t} has arity {len(t)}, space {s.space.name!r} has {s.space.arity}")
    if not s.space.in_bounds(t):
        return False
    return any(all(c.holds(t) for c in conj) for conj in s.disjuncts)


def enumerate_set(s: PresSet) -> list[IntTuple]:
    return list(s.points())


def inverse(r: PresRelation) -> PresRelation:
    da, ra = r.arity

    def swap(c: AffineConstraint) -> AffineConstraint:
        return AffineConstraint(c.coeffs[da:] + c.coeffs[:da], c.const, c.eq)

    disjuncts = tuple(tuple(swap(c) for c in conj) for conj in r.disjuncts)
    pairs = None
    if r._pairs is not None:
        pairs = tuple(sorted((b, a) for a, b in r._pairs))
    return PresRelation(r.range_space, r.domain_space, disjuncts, pairs, r.explicit)


def domain(r: PresRelation) -> PresSet:
    return PresSet.from_points(r.domain_space, (a for a, _ in r.pairs()))


def range_of(r: PresRelation) -> PresSet:
    return PresSet.from_points(r.range_space, (b for _, b in r.pairs()))


def apply(r: PresRelation, s: PresSet) -> PresSet:
    """Image of ``s`` under ``r``."""
    if s.space != r.domain_space:
        raise ValueError(f"space mismatch: set over {s.space.name!r}, relation from {r.domain_space.name!r}")
    members = set(s.points())
    return PresSet.from_points(r.range_space, (b for a, b in r.pairs() if a in members))


def union(a: PresRelation, b: PresRelation) -> PresRelation:
    if a.domain_space != b.domain_space or a.range_space != b.range_space:
        raise ValueError("space mismatch in union")
    pairs = None
    if a._pairs is not None and b._pairs is not None:
        pairs = tuple(sorted(set(a._pairs) | set(b._pairs)))
    return PresRelation(a.domain_space, a.range_space, a.disjuncts + b.disjuncts, pairs,
                        a.explicit and b.explicit)


def compose(b: PresRelation, a: PresRelation) -> PresRelation:
    """``b`` after ``a``: ``{i -> j : exists k. (i -> k) in a and (k -> j) in b}``."""
    if a.range_space != b.domain_space:
        raise ValueError(
            f"space mismatch: cannot compose {b.domain_space.name!r}->{b.range_space.name!r} "
            f"after {a.domain_space.name!r}->{a.range_space.name!r}"
        )
    _, pair_cap = get_enumeration_caps()
    b_by_src = b.as_dict()
    out = set()
    work = 0
    for i, k in a.pairs():
        targets = b_by_src.get(k)
        if not targets:
            continue
        work += len(targets)
        if work > pair_cap:
            raise EnumerationTooLarge(
                f"enumeration too large: join over {a.range_space.name!r} exceeds {pair_cap} pairs"
            )
        for j in targets:
            out.add((i, j))
    return PresRelation.from_pairs(a.domain_space, b.range_space, out)


def lex_ge_relation(s: PresSet) -> PresRelation:
    """``{j -> z : j, z in s and z <= j}`` (lexicographic)."""
    pts = s.points()
    _, pair_cap = get_enumeration_caps()
    n = len(pts)
    if n * (n + 1) // 2 > pair_cap:
        raise EnumerationTooLarge(f"enumeration too large: lex order on {s.space.name!r} has {n} points")
    pairs = [(pts[i], pts[k]) for i in range(n) for k in range(i + 1)]
    return PresRelation.from_pairs(s.space, s.space, pairs)


def lexmax(r: PresRelation) -> PresRelation:
    """Keep, for every domain element, only its lexicographically greatest image."""
    best: dict[IntTuple, IntTuple] = {}
    for a, b in r.pairs():
        cur = best.get(a)
        if cur is None or b > cur:
            best[a] = b
    return PresRelation.from_pairs(r.domain_space, r.range_space, best.items())


# ---------------------------------------------------------------------------
# textual form


def _fmt_affine(terms: list[tuple[int, str]], const: int) -> str:
    parts = []
    for c, name in terms:
        mag = abs(c)
        body = name if mag == 1 else f"{mag}*{name}"
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if c > 0 else f"- {body}")
    if const or not parts:
        if not parts:
            parts.append(str(const))
        else:
            parts.append(f"+ {const}" if const > 0 else f"- {-const}")
    return " ".join(parts)


def _fmt_constraint(c: AffineConstraint, names: Sequence[str]) -> str:
    # printed as  neg_terms (op) pos_terms, constants moved to keep both sides non-negative
    pos = [(v, n) for v, n in zip(c.coeffs, names) if v > 0]
    neg = [(-v, n) for v, n in zip(c.coeffs, names) if v < 0]
    lhs = _fmt_affine(neg, -c.const if c.const < 0 else 0)
    rhs = _fmt_affine(pos, c.const if c.const > 0 else 0)
    return f"{lhs} {'=' if c.eq else '<='} {rhs}"


def _implied_by_box(c: AffineConstraint, bounds: Sequence[tuple[int, int]]) -> bool:
    lo = hi = c.const
    for v, (blo, bhi) in zip(c.coeffs, bounds):
        lo += min(v * blo, v * bhi)
        hi += max(v * blo, v * bhi)
    return lo == hi == 0 if c.eq else lo >= 0


def _fmt_tuple(space: Space, names: Sequence[str]) -> str:
    return f"{space.name}[{','.join(names)}]"


def _fmt_bounds(space: Space, names: Sequence[str]) -> list[str]:
    out = []
    for n, (lo, hi) in zip(names, space.bounds):
        out.append(f"{n} = {lo}" if lo == hi else f"{lo} <= {n} < {hi + 1}")
    return out


def to_text(obj: PresSet | PresRelation) -> str:
    """Render a set or relation in an ISL-like notation."""
    if isinstance(obj, PresSet):
        spaces = (obj.space,)
        if obj.is_explicit:
            pieces = [f"{obj.space.name}[{','.join(map(str, p))}]" for p in obj.points()]
            return "{ " + "; ".join(pieces) + " }" if pieces else "{ }"
    else:
        spaces = (obj.domain_space, obj.range_space)
        if obj.is_explicit:
            pieces = [
                f"{obj.domain_space.name}[{','.join(map(str, a))}] -> {obj.range_space.name}[{','.join(map(str, b))}]"
                for a, b in obj.pairs()
            ]
            return "{ " + "; ".join(pieces) + " }" if pieces else "{ }"
    names: list[str] = []
    used: set[str] = set()
    for sp in spaces:
        for n in sp.dim_names:
            base, k = n, 0
            while n in used:
                k += 1
                n = f"{base}{k}"
            used.add(n)
            names.append(n)
    heads, off = [], 0
    for sp in spaces:
        heads.append(_fmt_tuple(sp, names[off:off + sp.arity]))
        off += sp.arity
    head = " -> ".join(heads)
    bounds = []
    off = 0
    for sp in spaces:
        bounds += _fmt_bounds(sp, names[off:off + sp.arity])
        off += sp.arity
    if not obj.disjuncts:
        return "{ }"
    box = [b for sp in spaces for b in sp.bounds]
    pieces = []
    for conj in obj.disjuncts:
        conds = bounds + [_fmt_constraint(c, names) for c in conj if not _implied_by_box(c, box)]
        pieces.append(f"{head} :\n      " + "\n  and ".join(conds))
    return "{ " + " ;\n  ".join(pieces) + " }"


_TOKEN = re.compile(r"\s*(->|<=|>=|==|[{}\[\],:;<>=+\-*()]|[A-Za-z_][A-Za-z0-9_']*|\d+)")


def _tokenize(text: str) -> list[str]:
    toks, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse near {text[pos:pos + 20]!r}")
        toks.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return toks


class _Parser:
    def __init__(self, text: str, params: dict[str, int]):
        self.toks = _tokenize(text)
        self.i = 0
        self.params = params

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expect: str | None = None) -> str:
        tok = self.peek()
        if tok is None or (expect is not None and tok != expect):
            raise ValueError(f"expected {expect!r}, got {tok!r}")
        self.i += 1
        return tok

    def tuple_(self):
        name = self.take()
        self.take("[")
        entries = []
        if self.peek() != "]":
            while True:
                entries.append(self.expr_terms())
                if self.peek() == ",":
                    self.take(",")
                    continue
                break
        self.take("]")
        return name, entries

    # an expression is a dict var->coef plus the key None for the constant
    def expr_terms(self) -> dict:
        terms: dict = {}
        sign = 1
        if self.peek() == "-":
            self.take()
            sign = -1
        elif self.peek() == "+":
            self.take()
        while True:
            self.term(terms, sign)
            if self.peek() in ("+", "-"):
                sign = 1 if self.take() == "+" else -1
                continue
            break
        return terms

    def term(self, terms: dict, sign: int):
        tok = self.take()
        if tok == "(":
            inner = self.expr_terms()
            self.take(")")
            for k, v in inner.items():
                terms[k] = terms.get(k, 0) + sign * v
            return
        if tok.isdigit():
            coef = int(tok)
            nxt = self.peek()
            if nxt == "*":
                self.take()
                tok = self.take()
            elif nxt is not None and re.match(r"[A-Za-z_]", nxt) and nxt not in ("and", "or"):
                tok = self.take()
            else:
                terms[None] = terms.get(None, 0) + sign * coef
                return
        else:
            coef = 1
            if self.peek() == "*":
                self.take()
                coef = int(self.take())
        if tok in self.params:
            terms[None] = terms.get(None, 0) + sign * coef * int(self.params[tok])
        else:
            terms[tok] = terms.get(tok, 0) + sign * coef

    def chain(self) -> list[tuple[dict, str, dict]]:
        left = self.expr_terms()
        out = []
        while self.peek() in ("<", "<=", ">", ">=", "=", "=="):
            op = self.take()
            right = self.expr_terms()
            out.append((left, op, right))
            left = right
        if not out:
            raise ValueError("expected a comparison")
        return out

    def atom(self) -> list[list]:
        """A comparison chain, or a parenthesized formula (returned in DNF)."""
        if self.peek() == "(":
            save = self.i
            try:
                self.take("(")
                inner = self.formula()
                self.take(")")
                if self.peek() not in ("<", "<=", ">", ">=", "=", "==", "+", "-", "*"):
                    return inner
            except ValueError:
                pass
            self.i = save
        return [self.chain()]

    def conjunction(self) -> list[list]:
        dnf = self.atom()
        while self.peek() == "and":
            self.take()
            rhs = self.atom()
            dnf = [a + b for a in dnf for b in rhs]
        return dnf

    def formula(self) -> list[list]:
        dnf = self.conjunction()
        while self.peek() == "or":
            self.take()
            dnf += self.conjunction()
        return dnf

    def piece(self):
        heads = [self.tuple_()]
        if self.peek() == "->":
            self.take()
            heads.append(self.tuple_())
        disj = [[]]
        if self.peek() == ":":
            self.take()
            disj = self.formula()
        return heads, disj

    def parse(self):
        self.take("{")
        pieces = []
        if self.peek() != "}":
            pieces.append(self.piece())
            while self.peek() == ";":
                self.take()
                pieces.append(self.piece())
        self.take("}")
        if self.peek() is not None:
            raise ValueError(f"trailing input at {self.peek()!r}")
        return pieces


def _to_constraints(comps, var_index: dict[str, int], n: int) -> list[AffineConstraint]:
    def vec(terms: dict) -> tuple[list[int], int]:
        v = [0] * n
        for k, c in terms.items():
            if k is None:
                continue
            if k not in var_index:
                raise ValueError(f"unknown variable {k!r}")
            v[var_index[k]] += c
        return v, terms.get(None, 0)

    out = []
    for left, op, right in comps:
        lv, lc = vec(left)
        rv, rc = vec(right)
        diff = [b - a for a, b in zip(lv, rv)]  # right - left
        dc = rc - lc
        if op in ("=", "=="):
            out.append(eq(diff, dc))
        elif op == "<=":
            out.append(ge(diff, dc))
        elif op == "<":
            out.append(ge(diff, dc - 1))
        elif op == ">=":
            out.append(ge([-d for d in diff], -dc))
        elif op == ">":
            out.append(ge([-d for d in diff], -dc - 1))
    return out


def _propagate_bounds(cons: list[AffineConstraint], n: int) -> list[tuple[float, float]] | None:
    """Interval propagation; returns None when the conjunction is infeasible."""
    inf = float("inf")
    lo = [-inf] * n
    hi = [inf] * n
    expanded = []
    for c in cons:
        expanded.append((c.coeffs, c.const))
        if c.eq:
            expanded.append((tuple(-v for v in c.coeffs), -c.const))
    for _ in range(4 * n + 8):
        changed = False
        for coeffs, const in expanded:
            for k, ck in enumerate(coeffs):
                if ck == 0:
                    continue
                rest = const
                for i, ci in enumerate(coeffs):
                    if i == k or ci == 0:
                        continue
                    rest += max(ci * lo[i] if lo[i] != -inf else (-inf if ci > 0 else inf),
                                ci * hi[i] if hi[i] != inf else (inf if ci > 0 else -inf))
                if rest in (inf, -inf):
                    continue
                if ck > 0:
                    new = -((rest) // ck)  # ceil(-rest / ck)
                    if new > lo[k]:
                        lo[k], changed = new, True
                else:
                    new = rest // (-ck)
                    if new < hi[k]:
                        hi[k], changed = new, True
                if lo[k] > hi[k]:
                    return None
        if not changed:
            break
    return list(zip(lo, hi))


def parse(text: str, params: dict[str, int] | None = None,
          spaces: Sequence[Space] | None = None) -> PresSet | PresRelation:
    """Parse the ISL-like notation emitted by :func:`to_text`.

    Symbolic constants (``OH``, ``FH``, ...) are substituted from ``params``.
    When ``spaces`` is not given, box bounds are inferred from the constraints.
    """
    pieces = _Parser(text, dict(params or {})).parse()
    if not pieces:
        raise ValueError("cannot infer spaces of an empty set or relation")
    shape = [(name, len(entries)) for name, entries in pieces[0][0]]
    disjuncts: list[list[AffineConstraint]] = []
    dim_names: list[str] | None = None
    for heads, disj in pieces:
        if [(nm, len(e)) for nm, e in heads] != shape:
            raise ValueError("all pieces must share the same tuple names and arities")
        n = sum(a for _, a in shape)
        var_index: dict[str, int] = {}
        tuple_cons: list[AffineConstraint] = []
        names = []
        pos = 0
        for _, entries in heads:
            for terms in entries:
                keys = [k for k in terms if k is not None]
                if len(keys) == 1 and terms[keys[0]] == 1 and keys[0] not in var_index and None not in terms:
                    var_index[keys[0]] = pos
                    names.append(keys[0])
                else:
                    names.append(f"_t{pos}")
                    var_index[f"_t{pos}"] = pos
                    tuple_cons.append((pos, terms))
                pos += 1
        cons = []
        for p, terms in tuple_cons:
            cons += _to_constraints([({f"_t{p}": 1}, "=", terms)], var_index, n)
        if dim_names is None:
            dim_names = names
        for conj in disj:
            disjuncts.append(cons + _to_constraints(conj, var_index, n))
    n = sum(a for _, a in shape)
    if spaces is None:
        hull: list[list[float]] = [[float("inf"), float("-inf")] for _ in range(n)]
        any_feasible = False
        for conj in disjuncts:
            b = _propagate_bounds(conj, n)
            if b is None:
                continue
            any_feasible = True
            for k, (lo, hi) in enumerate(b):
                hull[k][0] = min(hull[k][0], lo)
                hull[k][1] = max(hull[k][1], hi)
        if not any_feasible:
            raise ValueError("cannot infer bounds: every disjunct is infeasible")
        for k, (lo, hi) in enumerate(hull):
            if lo == float("-inf") or hi == float("inf"):
                raise ValueError(f"dimension {dim_names[k]!r} is unbounded")
        spaces = []
        off = 0
        for name, a in shape:
            spaces.append(Space(name, tuple((int(hull[k][0]), int(hull[k][1])) for k in range(off, off + a)),
                                tuple(d if not d.startswith("_t") else f"i{i}" for i, d in enumerate(dim_names[off:off + a]))))
            off += a
    spaces = list(spaces)
    if len(spaces) != len(shape):
        raise ValueError("number of spaces does not match the parsed tuples")
    disj_t = tuple(tuple(c) for c in disjuncts)
    if len(shape) == 1:
        return PresSet(spaces[0], disj_t)
    return PresRelation(spaces[0], spaces[1], disj_t)


# ---------------------------------------------------------------------------
# serialization


def space_to_dict(s: Space) -> dict:
    d = {"name": s.name, "bounds": [list(b) for b in s.bounds]}
    if s.dims is not None:
        d["dims"] = list(s.dims)
    return d


def space_from_dict(d: dict) -> Space:
    return Space(d["name"], tuple(tuple(b) for b in d["bounds"]), tuple(d["dims"]) if "dims" in d else None)


def relation_to_dict(r: PresRelation) -> dict:
    d = {"domain": space_to_dict(r.domain_space), "range": space_to_dict(r.range_space)}
    if r.is_explicit:
        d["pairs"] = [[list(a), list(b)] for a, b in r.pairs()]
    else:
        d["disjuncts"] = [[c.to_dict() for c in conj] for conj in r.disjuncts]
    return d


def relation_from_dict(d: dict) -> PresRelation:
    dom, rng = space_from_dict(d["domain"]), space_from_dict(d["range"])
    if "pairs" in d:
        return PresRelation.from_pairs(dom, rng, [(tuple(a), tuple(b)) for a, b in d["pairs"]])
    return PresRelation(dom, rng, tuple(tuple(AffineConstraint.from_dict(c) for c in conj) for conj in d["disjuncts"]))

