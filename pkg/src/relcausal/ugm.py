"""Undirected graphs as independence maps of relations."""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Union

from .gaxioms import CISet, CIStatement, ResourceLimitError
from .relcore import ArgumentError, AttrsLike, Relation, attrset, empirical_ci

MAX_EXHAUSTIVE_VERTICES = 8
COUNTEREXAMPLE_CAP = 10

Triple = tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]


class PreconditionError(ValueError):
    """An operation's structural precondition does not hold."""


class NonPositiveWarning(UserWarning):
    """The distribution has zero cells, so the minimal I-map may not be valid."""


@dataclass(frozen=True)
class UndirectedGraph:
    vertices: frozenset[str]
    edges: frozenset[frozenset[str]]

    def __init__(self, vertices: Iterable[str], edges: Iterable[Iterable[str]] = ()):
        vs = frozenset(vertices)
        es = set()
        for e in edges:
            pair = frozenset(e)
            if len(pair) != 2:
                raise ArgumentError(f"edge {tuple(e)} is a self-loop or malformed")
            if not pair <= vs:
                raise ArgumentError(f"edge {sorted(pair)} uses undeclared vertices")
            es.add(pair)
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "edges", frozenset(es))

    @classmethod
    def path(cls, *names: str) -> "UndirectedGraph":
        return cls(names, zip(names, names[1:]))

    @cached_property
    def adjacency(self) -> dict[str, frozenset[str]]:
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for a, b in map(tuple, self.edges):
            adj[a].add(b)
            adj[b].add(a)
        return {v: frozenset(n) for v, n in adj.items()}

    def sorted_edges(self) -> list[tuple[str, str]]:
        return sorted(tuple(sorted(e)) for e in self.edges)

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        start = min(self.vertices)
        return _reach(self, {start}, frozenset()) == set(self.vertices)

    def to_json(self) -> dict:
        return {"vertices": sorted(self.vertices), "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_json(cls, data: dict) -> "UndirectedGraph":
        return cls(data["vertices"], data.get("edges", []))

    @classmethod
    def load(cls, path: str | Path) -> "UndirectedGraph":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _reach(g: UndirectedGraph, start: set[str], blocked: frozenset[str]) -> set[str]:
    seen = set(start)
    stack = list(start)
    adj = g.adjacency
    while stack:
        v = stack.pop()
        for n in adj[v]:
            if n not in seen and n not in blocked:
                seen.add(n)
                stack.append(n)
    return seen


def separated(g: UndirectedGraph, x: AttrsLike, y: AttrsLike, z: AttrsLike = ()) -> bool:
    """Every path from ``x`` to ``y`` passes through ``z``."""
    xs, ys, zs = attrset(x), attrset(y), attrset(z)
    if not xs or not ys:
        raise ArgumentError("both sides must be non-empty")
    if xs & ys or xs & zs or ys & zs:
        raise ArgumentError("x, y and z must be disjoint")
    unknown = (xs | ys | zs) - g.vertices
    if unknown:
        raise ArgumentError(f"unknown vertices {sorted(unknown)}")
    return not (_reach(g, set(xs), zs) & ys)


def _check_size(n: int, limit: int | None, max_vertices: int) -> None:
    if limit is None and n > max_vertices:
        raise ResourceLimitError(
            f"{n} vertices exceed the exhaustive bound max_vertices={max_vertices}; "
            "pass a conditioning-size limit or raise the bound")


def all_triples(vertices: Iterable[str], limit: int | None = None) -> Iterator[Triple]:
    """Canonical (X, Z, Y) triples over ``vertices``; ``limit`` caps |Z|."""
    names = sorted(vertices)
    for assign in itertools.product(range(4), repeat=len(names)):
        z = tuple(a for a, k in zip(names, assign) if k == 3)
        if limit is not None and len(z) > limit:
            continue
        x = tuple(a for a, k in zip(names, assign) if k == 1)
        y = tuple(a for a, k in zip(names, assign) if k == 2)
        if x and y and x < y:
            yield x, z, y


def separations(g: UndirectedGraph, limit: int | None = None) -> Iterator[Triple]:
    """Every separation statement of ``g``.

    For a fixed Z the components of the graph minus Z decide everything: X
    and Y are separated iff no component meets both.
    """
    names = sorted(g.vertices)
    for zmask in itertools.product((False, True), repeat=len(names)):
        z = tuple(a for a, b in zip(names, zmask) if b)
        if limit is not None and len(z) > limit:
            continue
        blocked = frozenset(z)
        rest = [a for a in names if a not in blocked]
        comp: dict[str, str] = {}
        for v in rest:
            if v not in comp:
                for u in _reach(g, {v}, blocked):
                    comp[u] = v
        for assign in itertools.product(range(3), repeat=len(rest)):
            x = tuple(a for a, k in zip(rest, assign) if k == 1)
            y = tuple(a for a, k in zip(rest, assign) if k == 2)
            if not x or not y or not x < y:
                continue
            if not {comp[a] for a in x} & {comp[a] for a in y}:
                yield x, z, y


def triple_statement(t: Triple, context: str = "") -> CIStatement:
    return CIStatement(t[0], t[1], t[2], context)


Oracle = Union[CISet, Relation]


def _oracle_fn(oracle: Oracle):
    if isinstance(oracle, Relation):
        return lambda t: empirical_ci(oracle, t[0], t[2], t[1]), frozenset(oracle.schema)
    keys = {(s.lhs_a, s.cond, s.lhs_b) for s in oracle.statements}

    def member(t: Triple) -> bool:
        s = triple_statement(t)
        return (s.lhs_a, s.cond, s.lhs_b) in keys

    return member, oracle.universe


@dataclass(frozen=True)
class MapVerdict:
    kind: str
    holds: bool
    counterexamples: tuple[Triple, ...] = ()
    checked: int = 0

    def as_dict(self) -> dict:
        return {
            "kind": self.kind, "holds": self.holds, "checked": self.checked,
            "counterexamples": [{"x": list(x), "z": list(z), "y": list(y)}
                                for x, z, y in self.counterexamples],
        }


def verify_map(g: UndirectedGraph, oracle: Oracle, kind: str = "p_map",
               limit: int | None = None,
               max_vertices: int = MAX_EXHAUSTIVE_VERTICES) -> MapVerdict:
    """Compare the separations of ``g`` with the independences of ``oracle``.

    An I-map needs every separation to be an independence, a D-map every
    independence to be a separation, a P-map both. A CISet oracle is taken as
    the complete list of independences of the model. ``limit`` caps the size
    of the conditioning set.
    """
    if kind not in ("d_map", "i_map", "p_map"):
        raise ArgumentError(f"unknown map kind {kind!r}")
    test, universe = _oracle_fn(oracle)
    if universe != g.vertices:
        raise ArgumentError(f"graph vertices {sorted(g.vertices)} differ from "
                            f"oracle attributes {sorted(universe)}")
    _check_size(len(g.vertices), limit, max_vertices)
    bad: list[Triple] = []
    checked = 0
    for t in all_triples(g.vertices, limit):
        sep = separated(g, t[0], t[2], t[1])
        if sep and kind == "d_map" or not sep and kind == "i_map":
            continue
        checked += 1
        if sep != test(t):
            bad.append(t)
            if len(bad) >= COUNTEREXAMPLE_CAP:
                break
    return MapVerdict(kind, not bad, tuple(bad), checked)


def pmap_propagate(g1: UndirectedGraph, r_name: str, d: AttrsLike, ci: CIStatement) -> bool:
    """A separation of a perfect map of R also holds in R joined on the single attribute ``d``.

    ``g1`` is trusted to be a perfect map of R. Returns False when ``ci`` is
    not a separation of ``g1``.
    """
    ds = attrset(d)
    if len(ds) != 1:
        raise PreconditionError(f"join must be on a single attribute, got {sorted(ds)}")
    if not ds <= g1.vertices:
        raise PreconditionError(f"join attribute {sorted(ds)} is not a vertex of the graph")
    if ci.context != r_name:
        raise ArgumentError(f"statement context {ci.context!r} is not {r_name!r}")
    return separated(g1, ci.lhs_a, ci.lhs_b, ci.cond)


def pmap_join_cis(g1: UndirectedGraph, r_name: str, d: str, context: str = "JOIN") -> CISet:
    """All separations of ``g1`` restated in the join context."""
    if d not in g1.vertices:
        raise PreconditionError(f"join attribute {d!r} is not a vertex of the graph")
    _check_size(len(g1.vertices), None, MAX_EXHAUSTIVE_VERTICES)
    return CISet((triple_statement(t, context) for t in separations(g1)), g1.vertices)


@dataclass(frozen=True)
class Branches:
    """Which ways the extra vertex ``d`` can be added to a separation."""
    y_with_d: bool  # X separated from Y+d by Z
    x_with_d: bool  # X+d separated from Y by Z


def either_or(g1: UndirectedGraph, x: AttrsLike, y: AttrsLike, z: AttrsLike, d: str) -> Branches:
    xs, ys, zs = attrset(x), attrset(y), attrset(z)
    if d in xs | ys | zs:
        raise PreconditionError(f"{d!r} must lie outside x, y and z")
    if not separated(g1, xs, ys, zs):
        raise PreconditionError("x and y are not separated by z")
    out = Branches(separated(g1, xs, ys | {d}, zs), separated(g1, xs | {d}, ys, zs))
    assert out.y_with_d or out.x_with_d
    return out


def union_imap(g1: UndirectedGraph, g2: UndirectedGraph, d: str,
               r: Relation | None = None, s: Relation | None = None) -> UndirectedGraph:
    """Edge union of two connected perfect maps that share exactly the vertex ``d``.

    When ``r`` and ``s`` are given both graphs are first verified as perfect
    maps of them. Separations of the union are independences of the join;
    non-separations are undecided.
    """
    if not g1.is_connected():
        raise PreconditionError("first graph is not connected")
    if not g2.is_connected():
        raise PreconditionError("second graph is not connected")
    shared = g1.vertices & g2.vertices
    if shared != {d}:
        raise PreconditionError(f"graphs must share exactly vertex {d!r}, they share {sorted(shared)}")
    for g, rel, label in ((g1, r, "first"), (g2, s, "second")):
        if rel is not None:
            v = verify_map(g, rel, "p_map")
            if not v.holds:
                raise PreconditionError(f"{label} graph is not a perfect map of {rel.name or 'its relation'}")
    return UndirectedGraph(g1.vertices | g2.vertices, g1.edges | g2.edges)


@dataclass(frozen=True)
class ImapResult:
    graph: UndirectedGraph
    positive: bool
    note: str = ""


def is_positive(r: Relation) -> bool:
    """Every combination of observed attribute values occurs."""
    size = 1
    for a in r.schema:
        size *= len(r.values(a))
    return r.distinct() == size


def build_minimal_imap(oracle: Oracle, max_vertices: int = MAX_EXHAUSTIVE_VERTICES) -> ImapResult:
    """Drop the edge a-b exactly when a and b are independent given everything else."""
    test, universe = _oracle_fn(oracle)
    _check_size(len(universe), None, max_vertices)
    names = sorted(universe)
    edges = []
    for a, b in itertools.combinations(names, 2):
        rest = tuple(n for n in names if n not in (a, b))
        if not test(((a,), rest, (b,))):
            edges.append((a, b))
    g = UndirectedGraph(names, edges)
    positive = is_positive(oracle) if isinstance(oracle, Relation) else True
    note = ""
    if not positive:
        note = "distribution is not strictly positive; the graph may not be an I-map"
        warnings.warn(note, NonPositiveWarning, stacklevel=2)
    return ImapResult(g, positive, note)


def to_dot(g: UndirectedGraph, name: str = "G") -> str:
    lines = [f"graph {name} {{"]
    lines += [f'  "{v}";' for v in sorted(g.vertices)]
    lines += [f'  "{a}" -- "{b}";' for a, b in g.sorted_edges()]
    lines.append("}")
    return "\n".join(lines) + "\n"
