"""Conditional-independence statements, graphoid axioms and closure.

Statements are stored internally as bitmask triples over a fixed, sorted
attribute universe. The closure is a worklist fixed point; every derived
statement remembers the rule and premises that produced it, so derivations
can be replayed.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .relcore import ArgumentError, AttrsLike, Relation, attrset, empirical_ci

DEFAULT_MAX_UNIVERSE = 12
DEFAULT_MAX_STATEMENTS = 2_000_000

SEMIGRAPHOID = "semigraphoid"
GRAPHOID = "graphoid"
MODES = (SEMIGRAPHOID, GRAPHOID)

AXIOMS = ("symmetry", "decomposition", "weak_union", "contraction",
          "intersection", "strong_union", "transitivity")


class ResourceLimitError(RuntimeError):
    """A configured size bound was exceeded."""


class CIParseError(ValueError):
    pass


def _key(s: frozenset[str]) -> tuple[str, ...]:
    return tuple(sorted(s))


@dataclass(frozen=True, init=False)
class CIStatement:
    """X independent of Y given Z, scoped to one relation (``context``).

    The two independent sides are stored in canonical order, so a statement
    and its mirror image compare equal.
    """

    lhs_a: frozenset[str]
    cond: frozenset[str]
    lhs_b: frozenset[str]
    context: str

    def __init__(self, x: AttrsLike, z: AttrsLike, y: AttrsLike, context: str = ""):
        xs, zs, ys = attrset(x), attrset(z), attrset(y)
        if not xs or not ys:
            raise ArgumentError("both independence sides must be non-empty")
        if xs & ys or xs & zs or ys & zs:
            raise ArgumentError(f"overlapping sets in ({_key(xs)}, {_key(zs)}, {_key(ys)})")
        if _key(ys) < _key(xs):
            xs, ys = ys, xs
        object.__setattr__(self, "lhs_a", xs)
        object.__setattr__(self, "cond", zs)
        object.__setattr__(self, "lhs_b", ys)
        object.__setattr__(self, "context", context)

    @property
    def attributes(self) -> frozenset[str]:
        return self.lhs_a | self.lhs_b | self.cond

    def in_context(self, context: str) -> "CIStatement":
        return CIStatement(self.lhs_a, self.cond, self.lhs_b, context)

    def orientations(self) -> tuple[tuple[frozenset[str], frozenset[str], frozenset[str]], ...]:
        return ((self.lhs_a, self.cond, self.lhs_b), (self.lhs_b, self.cond, self.lhs_a))

    def sort_key(self):
        got = self.__dict__.get("_sort_key")
        if got is None:
            got = (self.context, _key(self.lhs_a), _key(self.lhs_b), _key(self.cond))
            object.__setattr__(self, "_sort_key", got)
        return got

    def __lt__(self, other: "CIStatement") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        cond = f"| {','.join(_key(self.cond))}" if self.cond else "|-"
        text = f"{','.join(_key(self.lhs_a))} _|_ {','.join(_key(self.lhs_b))} {cond}"
        return f"{text} @ {self.context}" if self.context else text

    def __repr__(self) -> str:
        return f"CI({self})"

    def holds_in(self, r: Relation) -> bool:
        return empirical_ci(r, self.lhs_a, self.lhs_b, self.cond)

    @classmethod
    def _trusted(cls, x: frozenset[str], z: frozenset[str], y: frozenset[str],
                 context: str) -> "CIStatement":
        """Build without validation; callers guarantee disjoint, canonical sides."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "lhs_a", x)
        object.__setattr__(obj, "cond", z)
        object.__setattr__(obj, "lhs_b", y)
        object.__setattr__(obj, "context", context)
        return obj


def ci(x: AttrsLike, y: AttrsLike, z: AttrsLike = (), context: str = "") -> CIStatement:
    """Shorthand in reading order: ``ci("A", "B", "C")`` is A _|_ B | C."""
    return CIStatement(x, z, y, context)


_NAME_LIST = r"[^,|@]+(?:,[^,|@]+)*"
_CI_RE = re.compile(
    rf"^\s*(?P<x>{_NAME_LIST})\s*_\|_\s*(?P<y>{_NAME_LIST}?)\s*"
    rf"\|\s*(?P<z>-|{_NAME_LIST})?\s*(?:@\s*(?P<ctx>\S+))?\s*$"
)


def _names(text: str | None) -> list[str]:
    if not text or text.strip() == "-":
        return []
    names = [t.strip() for t in text.split(",")]
    if any(not n for n in names):
        raise CIParseError(f"empty attribute name in {text!r}")
    if len(set(names)) != len(names):
        raise CIParseError(f"repeated attribute in {text!r}")
    return names


def parse_ci(line: str, default_context: str = "") -> CIStatement:
    """Parse ``X1,X2 _|_ Y1 | Z1,Z2 @ Rel``; an empty Z is written ``|-``."""
    m = _CI_RE.match(line)
    if not m:
        raise CIParseError(f"cannot parse CI statement {line!r}")
    x, y, z = _names(m["x"]), _names(m["y"]), _names(m["z"])
    if not y:
        raise CIParseError(f"missing right-hand side in {line!r}")
    try:
        return CIStatement(x, z, y, m["ctx"] or default_context)
    except ArgumentError as exc:
        raise CIParseError(f"{line!r}: {exc}") from None


def parse_ci_lines(text: str, default_context: str = "") -> list[CIStatement]:
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(parse_ci(line, default_context))
    return out


@dataclass(frozen=True)
class CISet:
    statements: frozenset[CIStatement]
    universe: frozenset[str]

    def __init__(self, statements: Iterable[CIStatement] = (), universe: AttrsLike | None = None):
        stmts = frozenset(statements)
        uni = None if universe is None else attrset(universe)
        seen: set[str] = set()
        for s in stmts:
            if uni is None or not (s.lhs_a <= uni and s.lhs_b <= uni and s.cond <= uni):
                seen.update(s.lhs_a, s.lhs_b, s.cond)
        if uni is None:
            uni = frozenset(seen)
        elif not seen <= uni:
            raise ArgumentError(f"statements use attributes outside the universe: {sorted(seen - uni)}")
        object.__setattr__(self, "statements", stmts)
        object.__setattr__(self, "universe", uni)

    def __iter__(self) -> Iterator[CIStatement]:
        return iter(sorted(self.statements, key=CIStatement.sort_key))

    def __len__(self) -> int:
        return len(self.statements)

    def __contains__(self, s: object) -> bool:
        return s in self.statements

    def contexts(self) -> list[str]:
        return sorted({s.context for s in self.statements})

    def in_context(self, context: str) -> "CISet":
        return CISet((s for s in self.statements if s.context == context), self.universe)


@dataclass(frozen=True)
class Step:
    axiom: str
    inputs: tuple[CIStatement, ...]
    output: CIStatement

    def __str__(self) -> str:
        return f"{self.axiom}: {' ; '.join(map(str, self.inputs))} => {self.output}"


@dataclass(frozen=True)
class DerivationTrace:
    steps: tuple[Step, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def lines(self) -> list[str]:
        return [str(s) for s in self.steps]


@dataclass(frozen=True)
class EitherOr:
    """Two-branch conclusion: at least one of the statements must hold."""
    first: CIStatement
    second: CIStatement


# ---------------------------------------------------------------- bitmasks

Triple = tuple[int, int, int]  # (x, z, y) masks with x < y


def _canon(x: int, z: int, y: int) -> Triple:
    return (x, z, y) if x < y else (y, z, x)


def _submasks(m: int) -> Iterator[int]:
    """Non-empty proper submasks of ``m``."""
    s = (m - 1) & m
    while s:
        yield s
        s = (s - 1) & m


def _bits(m: int) -> Iterator[int]:
    while m:
        b = m & -m
        yield b
        m ^= b


class _Codec:
    def __init__(self, universe: Iterable[str]):
        self.names = sorted(universe)
        self.bit = {a: 1 << i for i, a in enumerate(self.names)}
        self.full = (1 << len(self.names)) - 1
        self._sets: dict[int, frozenset[str]] = {}
        self._keys: dict[int, tuple[str, ...]] = {}

    def mask(self, attrs: Iterable[str]) -> int:
        m = 0
        for a in attrs:
            try:
                m |= self.bit[a]
            except KeyError:
                raise ArgumentError(f"attribute {a!r} not in universe") from None
        return m

    def attrs(self, m: int) -> frozenset[str]:
        got = self._sets.get(m)
        if got is None:
            got = frozenset(self.names[i] for i in range(len(self.names)) if m >> i & 1)
            self._sets[m] = got
            self._keys[m] = tuple(sorted(got))
        return got

    def encode(self, s: CIStatement) -> Triple:
        return _canon(self.mask(s.lhs_a), self.mask(s.cond), self.mask(s.lhs_b))

    def decode(self, t: Triple, context: str) -> CIStatement:
        x, z, y = self.attrs(t[0]), self.attrs(t[1]), self.attrs(t[2])
        if self._keys[t[2]] < self._keys[t[0]]:
            x, y = y, x
        return CIStatement._trusted(x, z, y, context)


def _check_universe(n: int, max_universe: int) -> None:
    if n > max_universe:
        raise ResourceLimitError(
            f"universe has {n} attributes; the bound max_universe={max_universe} "
            "keeps closure tractable (raise it explicitly if intended)")


class _Engine:
    """Worklist closure over one context.

    ``index`` maps (X, Z) to every Y with I(X,Z,Y) known; ``spans`` maps
    (X, Z u Y) to every such Y, which finds the partner premise of
    contraction and intersection without enumerating subsets.
    """

    def __init__(self, codec: _Codec, mode: str, max_statements: int):
        if mode not in MODES:
            raise ArgumentError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.codec = codec
        self.graphoid = mode == GRAPHOID
        self.max_statements = max_statements
        self.parent: dict[Triple, tuple[str, tuple[Triple, ...]] | None] = {}
        self.index: dict[tuple[int, int], set[int]] = {}
        self.spans: dict[tuple[int, int], set[int]] = {}
        self.queue: list[Triple] = []

    def has(self, x: int, z: int, y: int) -> bool:
        return y in self.index.get((x, z), ())

    def add(self, t: Triple, why: tuple[str, tuple[Triple, ...]] | None) -> bool:
        if t in self.parent:
            return False
        if len(self.parent) >= self.max_statements:
            raise ResourceLimitError(
                f"closure exceeded max_statements={self.max_statements}")
        self.parent[t] = why
        x, z, y = t
        self.index.setdefault((x, z), set()).add(y)
        self.index.setdefault((y, z), set()).add(x)
        self.spans.setdefault((x, z | y), set()).add(y)
        self.spans.setdefault((y, z | x), set()).add(x)
        self.queue.append(t)
        return True

    def run(self, goal: Triple | None = None) -> bool:
        while self.queue:
            if goal is not None and goal in self.parent:
                return True
            t = self.queue.pop()
            self._expand(t, t[0], t[1], t[2])
            self._expand(t, t[2], t[1], t[0])
        return goal is not None and goal in self.parent

    def _expand(self, t: Triple, x: int, z: int, y: int) -> None:
        # Membership is tested before building the reason tuple: most
        # candidates are already known.
        known, add = self.parent, self.add
        if y & (y - 1):  # |Y| >= 2
            for b in _bits(y):
                r = y ^ b
                c = (x, z, r) if x < r else (r, z, x)
                if c not in known:
                    add(c, ("decomposition", (t,)))
                zb = z | b
                c = (x, zb, r) if x < r else (r, zb, x)
                if c not in known:
                    add(c, ("weak_union", (t,)))
        # t as first contraction premise: I(X,Z,Y) & I(X,ZY,W) -> I(X,Z,YW)
        ws = self.index.get((x, z | y))
        if ws:
            for w in list(ws):
                yw = y | w
                c = (x, z, yw) if x < yw else (yw, z, x)
                if c not in known:
                    add(c, ("contraction", (t, _canon(x, z | y, w))))
        if z:
            # t = I(X,Z',W) as second premise; partners I(X,Z,Y) with Z u Y = Z'
            ys = self.spans.get((x, z))
            if ys:
                for yy in list(ys):
                    zz, yw = z ^ yy, yy | y
                    c = (x, zz, yw) if x < yw else (yw, zz, x)
                    if c not in known:
                        add(c, ("contraction", (_canon(x, zz, yy), t)))
        if self.graphoid and z:
            # I(X,ZW,Y) & I(X,ZY,W) -> I(X,Z,YW) with t the first premise, Z u W = z.
            # A partner I(X,S,W) spans z u y; it fits when W lies inside z.
            for w in list(self.spans.get((x, z | y), ())):
                if w & z == w:
                    zz = z ^ w
                    add(_canon(x, zz, y | w), ("intersection", (t, _canon(x, zz | y, w))))

    def trace(self, goal: Triple, context: str) -> DerivationTrace:
        order: list[Triple] = []
        seen: set[Triple] = set()
        stack: list[tuple[Triple, bool]] = [(goal, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if node in seen:
                continue
            seen.add(node)
            why = self.parent[node]
            stack.append((node, True))
            if why is not None:
                for p in why[1]:
                    if p not in seen:
                        stack.append((p, False))
        steps = []
        for node in order:
            why = self.parent[node]
            if why is not None:
                dec = self.codec.decode
                steps.append(Step(why[0], tuple(dec(p, context) for p in why[1]), dec(node, context)))
        return DerivationTrace(tuple(steps))


def _group(base: CISet) -> dict[str, list[CIStatement]]:
    groups: dict[str, list[CIStatement]] = {}
    for s in sorted(base.statements):
        groups.setdefault(s.context, []).append(s)
    return groups


def closure(base: CISet, mode: str = SEMIGRAPHOID, *,
            max_universe: int = DEFAULT_MAX_UNIVERSE,
            max_statements: int = DEFAULT_MAX_STATEMENTS) -> CISet:
    """Least superset of ``base`` closed under the axioms of ``mode``.

    Statements in different contexts never combine.
    """
    _check_universe(len(base.universe), max_universe)
    codec = _Codec(base.universe)
    out: list[CIStatement] = []
    for context, stmts in _group(base).items():
        eng = _Engine(codec, mode, max_statements)
        for s in stmts:
            eng.add(codec.encode(s), None)
        eng.run()
        out.extend(codec.decode(t, context) for t in eng.parent)
    return CISet(out, base.universe)


class ClosureWithProof:
    """A closure that can explain each member on request."""

    def __init__(self, statements: CISet, codec: _Codec, engines: dict[str, _Engine]):
        self.statements = statements
        self._codec = codec
        self._engines = engines

    def is_base(self, s: CIStatement) -> bool:
        return self._engines[s.context].parent[self._codec.encode(s)] is None

    def trace(self, goal: CIStatement) -> DerivationTrace:
        return self._engines[goal.context].trace(self._codec.encode(goal), goal.context)


def closure_with_proof(base: CISet, mode: str = SEMIGRAPHOID, *,
                       max_universe: int = DEFAULT_MAX_UNIVERSE,
                       max_statements: int = DEFAULT_MAX_STATEMENTS) -> ClosureWithProof:
    """Like :func:`closure` but keeps the rule and premises behind every member."""
    _check_universe(len(base.universe), max_universe)
    codec = _Codec(base.universe)
    engines: dict[str, _Engine] = {}
    out: list[CIStatement] = []
    for context, stmts in _group(base).items():
        eng = _Engine(codec, mode, max_statements)
        for s in stmts:
            eng.add(codec.encode(s), None)
        eng.run()
        engines[context] = eng
        out.extend(codec.decode(t, context) for t in eng.parent)
    return ClosureWithProof(CISet(out, base.universe), codec, engines)


def derivable(base: CISet, goal: CIStatement, mode: str = SEMIGRAPHOID, *,
              max_universe: int = DEFAULT_MAX_UNIVERSE,
              max_statements: int = DEFAULT_MAX_STATEMENTS) -> tuple[bool, DerivationTrace | None]:
    """Whether ``goal`` is in the axiom closure of ``base``, with a replayable trace.

    ``False`` only means the axioms do not produce the goal; it says nothing
    about whether the independence fails in any particular data.
    """
    universe = base.universe | goal.attributes
    _check_universe(len(universe), max_universe)
    if goal in base.statements:
        return True, DerivationTrace()
    codec = _Codec(universe)
    eng = _Engine(codec, mode, max_statements)
    for s in sorted(base.statements):
        if s.context == goal.context:
            eng.add(codec.encode(s), None)
    target = codec.encode(goal)
    if not eng.run(target):
        return False, None
    return True, eng.trace(target, goal.context)


def replay(base: CISet, trace: DerivationTrace, universe: AttrsLike | None = None) -> bool:
    """Check that every step of ``trace`` is a valid axiom application."""
    uni = attrset(universe) if universe is not None else base.universe
    known = set(base.statements)
    for step in trace.steps:
        if not all(p in known for p in step.inputs):
            return False
        if step.output not in apply_axiom(step.axiom, list(step.inputs), uni):
            return False
        known.add(step.output)
    return True


# ---------------------------------------------------------- single axioms

def _two_partitions(s: frozenset[str]) -> Iterator[tuple[frozenset[str], frozenset[str]]]:
    items = sorted(s)
    for k in range(1, len(items)):
        for left in itertools.combinations(items, k):
            left_set = frozenset(left)
            yield left_set, s - left_set


def _nonempty_subsets(s: Iterable[str]) -> Iterator[frozenset[str]]:
    items = sorted(s)
    for k in range(1, len(items) + 1):
        for c in itertools.combinations(items, k):
            yield frozenset(c)


def apply_axiom(axiom: str, premises: Sequence[CIStatement],
                universe: AttrsLike) -> list:
    """Every conclusion the named axiom licenses from ``premises``.

    Returns an empty list when the premises do not fit the axiom's pattern.
    Transitivity returns :class:`EitherOr` items instead of statements.
    """
    uni = attrset(universe)
    if axiom not in AXIOMS:
        raise ArgumentError(f"unknown axiom {axiom!r}")
    if not premises or len({p.context for p in premises}) != 1:
        return []
    ctx = premises[0].context
    out: set = set()
    if axiom in ("symmetry", "decomposition", "weak_union", "strong_union", "transitivity"):
        if len(premises) != 1:
            return []
        (p,) = premises
        for x, z, y in p.orientations():
            if axiom == "symmetry":
                out.add(CIStatement(y, z, x, ctx))
            elif axiom == "decomposition":
                for y1, y2 in _two_partitions(y):
                    out.add(CIStatement(x, z, y1, ctx))
                    out.add(CIStatement(x, z, y2, ctx))
            elif axiom == "weak_union":
                for y1, w in _two_partitions(y):
                    out.add(CIStatement(x, z | w, y1, ctx))
            elif axiom == "strong_union":
                for w in _nonempty_subsets(uni - x - y - z):
                    out.add(CIStatement(x, z | w, y, ctx))
            else:
                for g in sorted(uni - x - y - z):
                    a, b = sorted((CIStatement(x, z, [g], ctx), CIStatement([g], z, y, ctx)))
                    out.add(EitherOr(a, b))
        return sorted(out, key=_result_key)
    if len(premises) != 2:
        return []
    p, q = premises
    for x, z, y in p.orientations():
        for x2, z2, w in q.orientations():
            if x2 != x:
                continue
            if axiom == "contraction":
                # I(X,Z,Y) & I(X,ZY,W) -> I(X,Z,YW), in either premise order
                if z2 == z | y and not (w & (z | y)):
                    out.add(CIStatement(x, z, y | w, ctx))
                if z == z2 | w and not (y & (z2 | w)):
                    out.add(CIStatement(x, z2, w | y, ctx))
            elif axiom == "intersection":
                # I(X,ZW,Y) & I(X,ZY,W) -> I(X,Z,YW)
                if w <= z and y <= z2 and z - w == z2 - y:
                    out.add(CIStatement(x, z - w, y | w, ctx))
    return sorted(out, key=_result_key)


def _result_key(r):
    if isinstance(r, EitherOr):
        return (r.first.sort_key(), r.second.sort_key())
    return (r.sort_key(),)


# ------------------------------------------------- graph-isomorph checks

@dataclass(frozen=True)
class Violation:
    axiom: str
    premises: tuple[CIStatement, ...]
    missing: tuple[CIStatement, ...]

    def __str__(self) -> str:
        need = " or ".join(map(str, self.missing))
        return f"{self.axiom}: {' ; '.join(map(str, self.premises))} requires {need}"


def check_graph_isomorph_axioms(s: CISet, *, max_universe: int = DEFAULT_MAX_UNIVERSE,
                                max_statements: int = DEFAULT_MAX_STATEMENTS,
                                limit: int | None = None) -> list[Violation]:
    """Violated instances of symmetry, decomposition, intersection, strong union
    and transitivity. An empty list means ``s`` is closed under all five.

    Decomposition and strong union are checked one attribute at a time;
    closure under those single steps is equivalent to closure under the full
    schemas.
    """
    _check_universe(len(s.universe), max_universe)
    if len(s) > max_statements:
        raise ResourceLimitError(f"{len(s)} statements exceed max_statements={max_statements}")
    codec = _Codec(s.universe)
    out: list[Violation] = []
    for context, stmts in _group(s).items():
        known: set[tuple[int, int, int]] = set()
        for st in stmts:
            x, z, y = codec.encode(st)
            known.add((x, z, y))
            known.add((y, z, x))

        def has(x: int, z: int, y: int) -> bool:
            return (x, z, y) in known

        def dec(x: int, z: int, y: int) -> CIStatement:
            return codec.decode(_canon(x, z, y), context)

        for st in stmts:
            t = codec.encode(st)
            for x, z, y in ((t[0], t[1], t[2]), (t[2], t[1], t[0])):
                rest = codec.full & ~(x | y | z)
                if y & (y - 1):
                    for b in _bits(y):
                        if not has(x, z, y ^ b):
                            out.append(Violation("decomposition", (st,), (dec(x, z, y ^ b),)))
                for b in _bits(rest):
                    if not has(x, z | b, y):
                        out.append(Violation("strong_union", (st,), (dec(x, z | b, y),)))
                    if not has(x, z, b) and not has(b, z, y):
                        out.append(Violation("transitivity", (st,), (dec(x, z, b), dec(b, z, y))))
                for w in itertools.chain(_submasks(z), (z,)) if z else ():
                    zz = z ^ w
                    if has(x, zz | y, w) and not has(x, zz, y | w):
                        other = dec(x, zz | y, w)
                        out.append(Violation("intersection", (st, other), (dec(x, zz, y | w),)))
    uniq = sorted(set(out), key=lambda v: (v.axiom, [p.sort_key() for p in v.premises],
                                           [m.sort_key() for m in v.missing]))
    return uniq if limit is None else uniq[:limit]


# ------------------------------------------------------- data bridges

def triples(universe: AttrsLike, context: str = "") -> Iterator[CIStatement]:
    """Every canonical statement over ``universe``."""
    codec = _Codec(attrset(universe))
    n = len(codec.names)
    for assign in itertools.product(range(4), repeat=n):
        x = sum(1 << i for i, a in enumerate(assign) if a == 1)
        y = sum(1 << i for i, a in enumerate(assign) if a == 2)
        z = sum(1 << i for i, a in enumerate(assign) if a == 3)
        if x and y and x < y:
            yield codec.decode((x, z, y), context)


def empirical_statements(r: Relation, context: str | None = None,
                         max_universe: int = 8) -> CISet:
    """All statements over the schema of ``r`` that hold exactly in ``r``."""
    _check_universe(len(r.schema), max_universe)
    ctx = r.name if context is None else context
    return CISet((s for s in triples(r.schema, ctx) if s.holds_in(r)), r.schema)
