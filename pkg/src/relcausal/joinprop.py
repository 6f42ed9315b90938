"""Carry conditional independences from base relations to their natural join."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .gaxioms import (
    DEFAULT_MAX_STATEMENTS, DEFAULT_MAX_UNIVERSE, SEMIGRAPHOID, CISet, CIStatement,
    closure_with_proof,
)
from .relcore import (
    ArgumentError, AttrsLike, EmptyConditionError, Relation, attrset, count,
    distinct_project, is_key, join_all, natural_join, validate_foreign_key,
)

GENERAL = "general"
FOREIGN_KEY = "foreign_key_left_to_right"
ONE_ONE = "one_one"
KEY_CLASSES = (GENERAL, FOREIGN_KEY, ONE_ONE)

JOIN = "JOIN"


class RefutedAssertionWarning(UserWarning):
    """An asserted base CI does not hold in the supplied data."""


class RefutedAssertionError(ValueError):
    pass


@dataclass(frozen=True)
class JoinSpec:
    """One binary join step. ``result`` names the context of the output."""

    left: str
    right: str
    join_attrs: frozenset[str]
    key_class: str = GENERAL
    left_schema: frozenset[str] = frozenset()
    right_schema: frozenset[str] = frozenset()
    result: str = JOIN

    def __post_init__(self):
        if self.key_class not in KEY_CLASSES:
            raise ArgumentError(f"unknown key class {self.key_class!r}")
        object.__setattr__(self, "join_attrs", attrset(self.join_attrs))
        object.__setattr__(self, "left_schema", attrset(self.left_schema))
        object.__setattr__(self, "right_schema", attrset(self.right_schema))

    @classmethod
    def between(cls, left: str, left_schema: AttrsLike, right: str, right_schema: AttrsLike,
                key_class: str = GENERAL, result: str = JOIN) -> "JoinSpec":
        ls, rs = attrset(left_schema), attrset(right_schema)
        return cls(left, right, ls & rs, key_class, ls, rs, result)

    def swapped(self) -> "JoinSpec":
        return JoinSpec(self.right, self.left, self.join_attrs, self.key_class,
                        self.right_schema, self.left_schema, self.result)


@dataclass(frozen=True)
class ForeignKey:
    source: str
    target: str
    attrs: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "attrs", attrset(self.attrs))


def classify_join(r: Relation, s: Relation) -> tuple[str, bool]:
    """Key class of ``r`` join ``s`` read off the data.

    Returns ``(key_class, swap)``; ``swap`` means the foreign key runs from
    ``s`` into ``r``.
    """
    common = r.attributes & s.attributes
    if not common:
        return GENERAL, False
    if (is_key(r, common) and is_key(s, common)
            and distinct_project(r, sorted(common)) == distinct_project(s, sorted(common))):
        return ONE_ONE, False
    if validate_foreign_key(r, s, common):
        return FOREIGN_KEY, False
    if validate_foreign_key(s, r, common):
        return FOREIGN_KEY, True
    return GENERAL, False


def base_join_cis(spec: JoinSpec, left_schema: AttrsLike | None = None,
                  right_schema: AttrsLike | None = None) -> CISet:
    """The attributes private to each side are independent given the shared ones."""
    ls = attrset(left_schema) if left_schema is not None else spec.left_schema
    rs = attrset(right_schema) if right_schema is not None else spec.right_schema
    uni = ls | rs
    a, b = ls - rs, rs - ls
    if not a or not b:
        return CISet((), uni)
    return CISet([CIStatement(a, ls & rs, b, spec.result)], uni)


@dataclass(frozen=True)
class Propagation:
    propagated: bool
    tags: tuple[str, ...]
    statement: CIStatement | None

    def __bool__(self) -> bool:
        return self.propagated


def propagate_ci(ci: CIStatement, spec: JoinSpec) -> Propagation:
    """Which join rules, if any, license ``ci`` in the join result.

    A negative answer means no rule applies, not that the CI fails.
    """
    if ci.context not in (spec.left, spec.right):
        raise ArgumentError(f"statement context {ci.context!r} is neither "
                            f"{spec.left!r} nor {spec.right!r}")
    schema = spec.left_schema if ci.context == spec.left else spec.right_schema
    if schema and not ci.attributes <= schema:
        raise ArgumentError(f"{ci} uses attributes outside {sorted(schema)}")
    j = spec.join_attrs
    tags = []
    if j <= ci.cond:
        tags.append("rhs-rule")
    if j <= ci.lhs_a or j <= ci.lhs_b:
        tags.append("lhs-rule")
    if spec.key_class == FOREIGN_KEY and ci.context == spec.left:
        tags.append("fk-rule")
    if spec.key_class == ONE_ONE:
        tags.append("one-one-rule")
    if not tags:
        return Propagation(False, (), None)
    return Propagation(True, tuple(tags), ci.in_context(spec.result))


def plan_joins(order: Sequence[Sequence[str]], schemas: Mapping[str, AttrsLike],
               relations: Mapping[str, Relation] | None = None,
               foreign_keys: Iterable[ForeignKey] = ()) -> list[JoinSpec]:
    """Turn a join order into chained binary steps.

    The first pair joins two base relations. Each later pair must name one
    relation already joined and one new relation; the new relation is joined
    into the accumulated result. Intermediate results are named ``R+S`` and
    the final one ``JOIN``. Key classes come from the data when relations are
    given, otherwise from declared foreign keys.
    """
    schemas = {k: attrset(v) for k, v in schemas.items()}
    fks = list(foreign_keys)
    if not order:
        return []
    steps: list[JoinSpec] = []
    joined: list[str] = []
    acc_name, acc_schema = "", frozenset()
    acc_rel: Relation | None = None
    for i, pair in enumerate(order):
        if len(pair) != 2:
            raise ArgumentError(f"join order entry {pair!r} must name two relations")
        a, b = pair
        for n in (a, b):
            if n not in schemas:
                raise ArgumentError(f"join order names unknown relation {n!r}")
        if i == 0:
            left, right = a, b
            ls = schemas[a]
            if relations is not None:
                acc_rel = relations[a]
            joined.append(a)
            acc_name = a
        else:
            news = [n for n in (a, b) if n not in joined]
            if len(news) != 1:
                raise ArgumentError(f"join step {pair!r} must add exactly one new relation")
            left, right = acc_name, news[0]
            ls = acc_schema
        rs = schemas[right]
        result = JOIN if i == len(order) - 1 else "+".join(joined + [right])
        key_class, swap = GENERAL, False
        if relations is not None:
            new_rel = relations[right]
            key_class, swap = classify_join(acc_rel, new_rel)
            acc_rel = natural_join(acc_rel, new_rel, result)
        else:
            key_class, swap = _declared_class(joined, right, ls & rs, fks)
        spec = JoinSpec(left, right, ls & rs, key_class, ls, rs, result)
        steps.append(spec.swapped() if swap else spec)
        joined.append(right)
        acc_name, acc_schema = result, ls | rs
    return steps


def _declared_class(joined: list[str], new: str, common: frozenset[str],
                    fks: list[ForeignKey]) -> tuple[str, bool]:
    if not common:
        return GENERAL, False
    into_new = any(fk.target == new and fk.source in joined and fk.attrs == common for fk in fks)
    from_new = any(fk.source == new and fk.target in joined and fk.attrs == common for fk in fks)
    single = len(joined) == 1
    if into_new and from_new and single:
        return ONE_ONE, False
    if into_new:
        return FOREIGN_KEY, False
    if from_new and single:
        return FOREIGN_KEY, True
    return GENERAL, False


@dataclass(frozen=True)
class InferredCI:
    statement: CIStatement
    rule_tags: tuple[str, ...]
    derivation: tuple[str, ...]

    def as_dict(self) -> dict:
        s = self.statement
        return {
            "x": sorted(s.lhs_a), "y": sorted(s.lhs_b), "z": sorted(s.cond),
            "context": s.context, "rule_tags": list(self.rule_tags),
            "derivation": list(self.derivation),
        }


class Inference:
    """Inferred join statements; tags and derivations are built on request."""

    def __init__(self, statements: CISet, seeds: dict, proofs: dict, refuted=()):
        self.statements = statements
        self.refuted = tuple(refuted)
        self._seeds = seeds    # statement -> (tags, derivation line, source or None)
        self._proofs = proofs  # context -> ClosureWithProof
        self._memo: dict[CIStatement, InferredCI] = {}

    def __contains__(self, s: object) -> bool:
        return s in self.statements

    def detail(self, s: CIStatement) -> InferredCI:
        if s in self._memo:
            return self._memo[s]
        seed = self._seeds.get(s)
        if seed is not None:
            tags, line, source = seed
            if source is None:
                out = InferredCI(s, tags, (line,))
            else:
                src = self.detail(source)
                out = InferredCI(s, src.rule_tags + tags, src.derivation + (line,))
        else:
            steps = self._proofs[s.context].trace(s).steps
            tags: set[str] = set()
            lines: list[str] = []
            for step in steps:
                for p in step.inputs:
                    if p in self._seeds:
                        d = self.detail(p)
                        tags.update(d.rule_tags)
                        lines.extend(x for x in d.derivation if x not in lines)
            lines.extend(str(step) for step in steps)
            out = InferredCI(s, tuple(sorted(tags)) + (f"closure:{steps[-1].axiom}",), tuple(lines))
        self._memo[s] = out
        return out

    @property
    def details(self) -> "_Details":
        return _Details(self)

    def report(self) -> list[InferredCI]:
        return [self.detail(s) for s in self.statements]


class _Details:
    def __init__(self, inf: Inference):
        self._inf = inf

    def __getitem__(self, s: CIStatement) -> InferredCI:
        if s not in self._inf.statements and s not in self._inf._seeds:
            raise KeyError(s)
        return self._inf.detail(s)


def _audit(stmts: Iterable[CIStatement], relations: Mapping[str, Relation] | None,
           abort: bool) -> list[CIStatement]:
    if not relations:
        return []
    bad = [s for s in sorted(stmts) if s.context in relations and not s.holds_in(relations[s.context])]
    for s in bad:
        if abort:
            raise RefutedAssertionError(f"asserted {s} does not hold in the data")
        warnings.warn(f"asserted {s} does not hold in the data", RefutedAssertionWarning,
                      stacklevel=3)
    return bad


def infer_join_cis(schemas: Mapping[str, AttrsLike],
                   asserted: Mapping[str, Iterable[CIStatement]],
                   specs: Sequence[JoinSpec], mode: str = SEMIGRAPHOID, *,
                   relations: Mapping[str, Relation] | None = None,
                   abort_on_refuted: bool = False,
                   max_universe: int = DEFAULT_MAX_UNIVERSE,
                   max_statements: int = DEFAULT_MAX_STATEMENTS) -> Inference:
    """CIs of the final join implied by the join structure and the asserted base CIs.

    Each step closes the statements of both inputs, adds the base join
    statement, keeps every input statement some rule licenses and closes the
    result. With no join steps the asserted set of the single relation is
    closed and returned.

    Asserted statements are trusted. When ``relations`` is given they are
    audited first: refuted ones raise a warning, or an error if
    ``abort_on_refuted``.
    """
    schemas = {k: attrset(v) for k, v in schemas.items()}
    asserted_stmts = {k: [s if s.context else s.in_context(k) for s in v]
                      for k, v in asserted.items()}
    refuted = _audit([s for v in asserted_stmts.values() for s in v], relations, abort_on_refuted)
    kw = {"max_universe": max_universe, "max_statements": max_statements}

    seeds: dict[CIStatement, tuple] = {}
    pool: dict[str, set[CIStatement]] = {}
    proofs: dict[str, object] = {}
    for stmts in asserted_stmts.values():
        for s in stmts:
            pool.setdefault(s.context, set()).add(s)
            seeds[s] = (("asserted",), f"asserted {s}", None)

    def closed(context: str, universe: frozenset[str]) -> CISet:
        proof = closure_with_proof(CISet(pool.get(context, ()), universe), mode, **kw)
        proofs[context] = proof
        return proof.statements

    if not specs:
        if len(schemas) != 1:
            raise ArgumentError("without join steps exactly one relation is expected")
        (name, schema), = schemas.items()
        return Inference(closed(name, schema), seeds, proofs, refuted)

    contexts_schema = dict(schemas)
    for spec in specs:
        ls = spec.left_schema or contexts_schema[spec.left]
        rs = spec.right_schema or contexts_schema[spec.right]
        spec = JoinSpec(spec.left, spec.right, ls & rs, spec.key_class, ls, rs, spec.result)
        out: set[CIStatement] = set()
        for s in base_join_cis(spec):
            out.add(s)
            seeds[s] = (("base",), f"base join of {spec.left} and {spec.right}: {s}", None)
        for side, schema in ((spec.left, ls), (spec.right, rs)):
            for s in closed(side, schema):
                p = propagate_ci(s, spec)
                if p and p.statement not in out:
                    out.add(p.statement)
                    seeds[p.statement] = (p.tags, f"{'/'.join(p.tags)}: {s} => {p.statement}", s)
        contexts_schema[spec.result] = ls | rs
        pool[spec.result] = out
    final = specs[-1].result
    return Inference(closed(final, contexts_schema[final]), seeds, proofs, refuted)


# --------------------------------------------------------------- EMVDs

@dataclass(frozen=True)
class EmvdStatement:
    """X ->> Y | scope: the MVD X ->> Y holds in the projection onto ``scope``."""

    x: frozenset[str]
    y: frozenset[str]
    scope: frozenset[str]

    def __init__(self, x: AttrsLike, y: AttrsLike, scope: AttrsLike):
        xs, ys, sc = attrset(x), attrset(y), attrset(scope)
        if not xs | ys <= sc:
            raise ArgumentError("x and y must lie inside the scope")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "y", ys)
        object.__setattr__(self, "scope", sc)

    def __str__(self) -> str:
        return (f"{','.join(sorted(self.x))} ->> {','.join(sorted(self.y))} "
                f"| {','.join(sorted(self.scope))}")


def emvd_holds(r: Relation, e: EmvdStatement) -> bool:
    """Set-semantics check on the duplicate-free projection onto the scope."""
    r.check_attrs(e.scope)
    x = e.x
    y = e.y - x
    w = e.scope - x - y
    if not y or not w:
        return True
    rows = distinct_project(r, e.scope)
    order = r.ordered(e.scope)
    xi = [i for i, a in enumerate(order) if a in x]
    yi = [i for i, a in enumerate(order) if a in y]
    wi = [i for i, a in enumerate(order) if a in w]
    groups: dict[tuple, tuple[set, set, set]] = {}
    for row in rows:
        g = groups.setdefault(tuple(row[i] for i in xi), (set(), set(), set()))
        yv, wv = tuple(row[i] for i in yi), tuple(row[i] for i in wi)
        g[0].add(yv)
        g[1].add(wv)
        g[2].add((yv, wv))
    return all(len(pairs) == len(ys) * len(ws) for ys, ws, pairs in groups.values())


def semi_join_reduced(relations: Sequence[Relation], specs: Sequence[JoinSpec] = ()) -> bool:
    """Every tuple of every relation contributes to the full join."""
    if not relations:
        return True
    j = join_all(list(relations))
    for r in relations:
        if not distinct_project(r, r.schema) <= distinct_project(j, r.schema):
            return False
    return True


def emvd_propagates(e: EmvdStatement, relations: Sequence[Relation]) -> bool:
    """Whether an EMVD of one base relation is licensed in the join."""
    return semi_join_reduced(relations)


def factorized_count_estimate(ci: CIStatement, r: Relation, a: Mapping[str, str]) -> Fraction:
    """Joint probability of ``a`` assembled as P(X|Z) P(Y|Z) P(Z).

    Exact when the CI holds in ``r``; otherwise the gap to the true joint is
    the estimation error.
    """
    bound = set(a)
    if bound != set(ci.attributes):
        raise ArgumentError(f"assignment must bind exactly {sorted(ci.attributes)}")
    pick = lambda attrs: {k: a[k] for k in attrs}
    z = pick(ci.cond)
    nz = count(r, z)
    if nz == 0:
        raise EmptyConditionError(f"no rows satisfy {z}")
    px = Fraction(count(r, {**z, **pick(ci.lhs_a)}), nz)
    py = Fraction(count(r, {**z, **pick(ci.lhs_b)}), nz)
    return px * py * Fraction(nz, len(r))
