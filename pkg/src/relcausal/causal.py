"""Matching estimators of average treatment effects over (joined) relations."""
from __future__ import annotations

import warnings
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .gaxioms import SEMIGRAPHOID, CISet, CIStatement, derivable
from .joinprop import ForeignKey
from .relcore import ArgumentError, AttrsLike, Relation, attrset, empirical_ci

OPS = ("=", "!=", "<", "<=", ">", ">=")


class OutcomeParseError(ValueError):
    pass


class BinningError(ValueError):
    pass


class NoValidGroupsError(ValueError):
    """No group has both a treated and a control unit."""


class ZeroAteWarning(UserWarning):
    """Treatment and outcome sit on opposite sides of a join whose attributes are covariates."""


def parse_number(text: str) -> Fraction:
    """Exact value of a decimal literal such as ``3.25`` or ``1e3``."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise OutcomeParseError(f"{text!r} is not a finite number") from None


def _maybe_number(text: str) -> Fraction | None:
    try:
        return parse_number(text)
    except OutcomeParseError:
        return None


@dataclass(frozen=True)
class TreatmentSpec:
    """T = 1 exactly when ``attribute <op> value`` holds."""

    attribute: str
    op: str
    value: str

    def __post_init__(self):
        if self.op not in OPS:
            raise ArgumentError(f"unknown comparison {self.op!r}; expected one of {OPS}")
        object.__setattr__(self, "value", str(self.value))

    def __call__(self, v: str) -> int:
        a, b = _maybe_number(v), _maybe_number(self.value)
        if self.op in ("=", "!="):
            same = a == b if a is not None and b is not None else v == self.value
            return int(same == (self.op == "="))
        if a is None or b is None:
            raise OutcomeParseError(
                f"comparison {self.op} needs numbers, got {v!r} and {self.value!r}")
        return int({"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[self.op])


@dataclass(frozen=True)
class Unit:
    index: int
    t: int
    y: Fraction
    covariates: tuple[str, ...]


@dataclass(frozen=True)
class UnitTable:
    units: tuple[Unit, ...]
    covariates: tuple[str, ...]
    treatment: str
    outcome: str
    provenance: tuple[str, ...] = ()
    zero_ate_trap: bool = False

    def __len__(self) -> int:
        return len(self.units)

    def relabel(self) -> "UnitTable":
        """Same table with treated and control swapped."""
        units = tuple(Unit(u.index, 1 - u.t, u.y, u.covariates) for u in self.units)
        return UnitTable(units, self.covariates, self.treatment, self.outcome,
                         self.provenance, self.zero_ate_trap)


def _single_origin(r: Relation, a: str) -> str | None:
    origins = r.origins.get(a, frozenset())
    return next(iter(origins)) if len(origins) == 1 else None


def build_unit_table(u: Relation, t: TreatmentSpec, y: str, x: AttrsLike = ()) -> UnitTable:
    """One unit per tuple of ``u`` (duplicates included) in sorted row order."""
    xs = attrset(x)
    u.check_attrs({t.attribute, y} | xs)
    if t.attribute == y:
        raise ArgumentError("treatment and outcome must be different attributes")
    if xs & {t.attribute, y}:
        raise ArgumentError("covariates may not include the treatment or the outcome")
    cov = u.ordered(xs)
    ti, yi = u.schema.index(t.attribute), u.schema.index(y)
    ci = [u.schema.index(a) for a in cov]
    units = []
    for k, row in enumerate(u.rows()):
        try:
            yv = parse_number(row[yi])
        except OutcomeParseError:
            raise OutcomeParseError(f"row {k}: outcome {y}={row[yi]!r} is not numeric") from None
        units.append(Unit(k, t(row[ti]), yv, tuple(row[i] for i in ci)))
    t_loc, y_loc = _single_origin(u, t.attribute), _single_origin(u, y)
    trap = bool(u.join_attrs) and detect_zero_ate(xs, t_loc, y_loc, u.join_attrs)
    if trap:
        warnings.warn(zero_ate_message(t.attribute, y, u.join_attrs), ZeroAteWarning, stacklevel=2)
    provenance = tuple(sorted(set().union(*u.origins.values()))) if u.origins else ()
    return UnitTable(tuple(units), cov, t.attribute, y, provenance, trap)


@dataclass(frozen=True)
class SutvaReport:
    ok: bool
    violations: tuple[tuple[tuple[str, ...], int], ...] = ()


def validate_sutva_units(joined: Relation, outcome_origin: Relation, y: str,
                         provenance_key: AttrsLike) -> SutvaReport:
    """Each tuple carrying the outcome may feed at most one joined row."""
    key = attrset(provenance_key)
    outcome_origin.check_attrs(key | {y})
    joined.check_attrs(key | {y})
    order = outcome_origin.ordered(key)
    base = outcome_origin.marginal(order)
    pos = [joined.ordered(key).index(a) for a in order]
    seen = {tuple(k[i] for i in pos): n for k, n in joined.marginal(key).items()}
    bad = tuple(sorted((k, n) for k, n in seen.items() if n > base.get(k, 0)))
    return SutvaReport(not bad, bad)


@dataclass(frozen=True)
class MatchGroup:
    signature: tuple[str, ...]
    treated: tuple[Unit, ...]
    control: tuple[Unit, ...]

    @property
    def valid(self) -> bool:
        return bool(self.treated) and bool(self.control)

    @property
    def size(self) -> int:
        return len(self.treated) + len(self.control)


@dataclass(frozen=True)
class MatchGroups:
    groups: tuple[MatchGroup, ...]
    attributes: tuple[str, ...]

    @property
    def valid_groups(self) -> tuple[MatchGroup, ...]:
        return tuple(g for g in self.groups if g.valid)


def _group(units: Iterable[Unit], sig) -> tuple[MatchGroup, ...]:
    buckets: dict[tuple[str, ...], tuple[list[Unit], list[Unit]]] = {}
    for u in units:
        b = buckets.setdefault(sig(u), ([], []))
        b[0 if u.t else 1].append(u)
    return tuple(MatchGroup(s, tuple(buckets[s][0]), tuple(buckets[s][1]))
                 for s in sorted(buckets))


def _positions(units: UnitTable, x: AttrsLike | None) -> tuple[tuple[str, ...], list[int]]:
    xs = set(units.covariates) if x is None else attrset(x)
    extra = xs - set(units.covariates)
    if extra:
        raise ArgumentError(f"{sorted(extra)} are not covariates of the unit table")
    attrs = tuple(a for a in units.covariates if a in xs)
    return attrs, [units.covariates.index(a) for a in attrs]


def exact_match(units: UnitTable, x: AttrsLike | None = None) -> MatchGroups:
    """Group units whose covariates over ``x`` agree exactly (all covariates by default)."""
    attrs, idx = _positions(units, x)
    return MatchGroups(_group(units.units, lambda u: tuple(u.covariates[i] for i in idx)), attrs)


@dataclass(frozen=True)
class CoarseningSpec:
    """Per-attribute numeric cutpoints, categorical value maps, or identity."""

    cutpoints: Mapping[str, tuple[Fraction, ...]] = field(default_factory=dict)
    categories: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    identity: frozenset[str] = frozenset()

    def __post_init__(self):
        cuts = {}
        for a, cs in self.cutpoints.items():
            vals = tuple(c if isinstance(c, Fraction) else parse_number(str(c)) for c in cs)
            if any(b <= a_ for a_, b in zip(vals, vals[1:])):
                raise ArgumentError(f"cutpoints for {a!r} must be strictly increasing")
            cuts[a] = vals
        object.__setattr__(self, "cutpoints", cuts)
        object.__setattr__(self, "identity", attrset(self.identity))
        both = set(cuts) & set(self.categories)
        if both:
            raise ArgumentError(f"{sorted(both)} have both cutpoints and a category map")

    @classmethod
    def identity_for(cls, attrs: AttrsLike) -> "CoarseningSpec":
        return cls(identity=attrset(attrs))

    def covers(self, a: str) -> bool:
        return a in self.cutpoints or a in self.categories or a in self.identity

    def bin(self, a: str, v: str) -> str:
        if a in self.cutpoints:
            num = _maybe_number(v)
            if num is None:
                raise BinningError(f"value {v!r} of {a!r} is not numeric")
            cuts = self.cutpoints[a]
            i = bisect_right(cuts, num)
            lo = _fmt(cuts[i - 1]) if i > 0 else "-inf"
            hi = _fmt(cuts[i]) if i < len(cuts) else "inf"
            return f"[{lo},{hi})"
        if a in self.categories:
            try:
                return self.categories[a][v]
            except KeyError:
                raise BinningError(f"value {v!r} of {a!r} has no bin") from None
        if a in self.identity:
            return v
        raise BinningError(f"no coarsening given for {a!r}")


def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def cem(units: UnitTable, x: AttrsLike | None, c: CoarseningSpec) -> MatchGroups:
    """Exact matching on coarsened covariate values."""
    attrs, idx = _positions(units, x)
    missing = [a for a in attrs if not c.covers(a)]
    if missing:
        raise BinningError(f"no coarsening given for {missing}")
    sig = lambda u: tuple(c.bin(a, u.covariates[i]) for a, i in zip(attrs, idx))
    return MatchGroups(_group(units.units, sig), attrs)


@dataclass(frozen=True)
class GroupDetail:
    signature: tuple[str, ...]
    n_treated: int
    n_control: int
    weight: Fraction
    effect: Fraction


@dataclass(frozen=True)
class AteReport:
    ate: Fraction
    n_matched: int
    n_dropped: int
    group_details: tuple[GroupDetail, ...]
    warnings: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "ate": rational(self.ate), "ate_float": float(self.ate),
            "n_matched": self.n_matched, "n_dropped": self.n_dropped,
            "groups": [{"signature": list(g.signature), "n_treated": g.n_treated,
                        "n_control": g.n_control, "weight": rational(g.weight),
                        "effect": rational(g.effect)} for g in self.group_details],
            "warnings": list(self.warnings),
        }


def rational(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _mean(units: Sequence[Unit]) -> Fraction:
    return sum((u.y for u in units), Fraction(0)) / len(units)


def estimate_ate(groups: MatchGroups, notes: Iterable[str] = ()) -> AteReport:
    """Group-size weighted mean of within-group treated minus control outcome means.

    Units in groups lacking either arm are dropped from both the estimate and
    the weights, and counted in ``n_dropped``.
    """
    valid = groups.valid_groups
    if not valid:
        raise NoValidGroupsError(
            f"none of {len(groups.groups)} groups has both treated and control units")
    n_matched = sum(g.size for g in valid)
    n_dropped = sum(g.size for g in groups.groups if not g.valid)
    details = []
    ate = Fraction(0)
    for g in valid:
        w = Fraction(g.size, n_matched)
        eff = _mean(g.treated) - _mean(g.control)
        ate += w * eff
        details.append(GroupDetail(g.signature, len(g.treated), len(g.control), w, eff))
    return AteReport(ate, n_matched, n_dropped, tuple(details), tuple(notes))


def detect_zero_ate(x: AttrsLike, t_loc: str | None, y_loc: str | None,
                    join_attrs: AttrsLike) -> bool:
    """True when treatment and outcome come from different relations and the
    covariates contain the join attributes; the adjusted estimate is then 0."""
    if t_loc is None or y_loc is None or t_loc == y_loc:
        return False
    return attrset(join_attrs) <= attrset(x)


def zero_ate_message(t: str, y: str, join_attrs: AttrsLike) -> str:
    return (f"{t} and {y} come from different joined relations and the covariates include "
            f"the join attributes {sorted(attrset(join_attrs))}: treatment and outcome are "
            "independent given them, so ignorability holds trivially and the estimate is exactly 0")


def _ci_or_trivial(x: frozenset[str], y: frozenset[str], z: frozenset[str]):
    """Normalise X _|_ Y | Z when X or Y overlap Z: drop the overlap; empty sides are trivial."""
    x, y = x - z, y - z
    if not x or not y:
        return None
    return x, y, z


def check_c_equivalence(oracle: Union[CISet, Relation], t: str, y: str,
                        x: AttrsLike, x2: AttrsLike, mode: str = SEMIGRAPHOID,
                        context: str | None = None) -> str:
    """Sufficient test that two covariate sets give the same adjusted estimand.

    Returns ``equivalent_by_(i)``, ``equivalent_by_(ii)`` or ``not_established``;
    the last is non-committal.
    """
    xs, x2s = attrset(x), attrset(x2)
    if {t, y} & (xs | x2s):
        raise ArgumentError("covariate sets must exclude treatment and outcome")
    if isinstance(oracle, Relation):
        def holds(a, b, c):
            n = _ci_or_trivial(a, b, c)
            return n is None or empirical_ci(oracle, n[0], n[1], n[2])
    else:
        ctx = context
        if ctx is None:
            ctxs = oracle.contexts()
            ctx = ctxs[0] if len(ctxs) == 1 else "JOIN"

        def holds(a, b, c):
            n = _ci_or_trivial(a, b, c)
            return n is None or derivable(oracle, CIStatement(n[0], n[2], n[1], ctx), mode)[0]
    T, Y = frozenset([t]), frozenset([y])
    if holds(T, x2s, xs) and holds(Y, xs, x2s | T):
        return "equivalent_by_(i)"
    if holds(T, xs, x2s) and holds(Y, x2s, xs | T):
        return "equivalent_by_(ii)"
    return "not_established"


@dataclass(frozen=True)
class CovariateReduction:
    covariates: frozenset[str]
    reduced: bool
    note: str = ""


def reduce_covariates_fk(x: AttrsLike, schemas: Mapping[str, AttrsLike],
                         fks: Iterable[ForeignKey], y_loc: str) -> CovariateReduction:
    """Keep only the covariates of the outcome's relation when its foreign keys,
    themselves covariates, reach every other relation that contributes covariates."""
    xs = attrset(x)
    schemas = {k: attrset(v) for k, v in schemas.items()}
    if y_loc not in schemas:
        raise ArgumentError(f"unknown relation {y_loc!r}")
    own = xs & schemas[y_loc]
    outside = xs - own
    if not outside:
        return CovariateReduction(xs, False, "covariates already lie in the outcome relation")
    fks = [fk for fk in fks if fk.source == y_loc and fk.attrs <= own]
    covered = set()
    for fk in fks:
        covered |= schemas.get(fk.target, frozenset())
    uncovered = outside - covered
    if uncovered:
        return CovariateReduction(
            xs, False, f"reduction not licensed: {sorted(uncovered)} are not reached by a "
                       f"foreign key of {y_loc} contained in the covariates")
    return CovariateReduction(own, True, f"reduced to covariates of {y_loc}")


@dataclass(frozen=True)
class IgnorabilityVerdict:
    verdict: str  # "positive" or "unverifiable"
    derivable: bool
    zero_ate: bool = False
    note: str = ""


def check_ignorability_asserted(cis: CISet, t: str, y: str, x: AttrsLike,
                                potential: str | None = None, mode: str = SEMIGRAPHOID,
                                t_loc: str | None = None, y_loc: str | None = None,
                                join_attrs: AttrsLike = (), context: str = "JOIN"
                                ) -> IgnorabilityVerdict:
    """Is T independent of the potential outcomes given X derivable from asserted CIs?

    Potential outcomes are never observed, so they appear only as a declared
    symbol (``<y>_pot`` by default) inside user assertions. When treatment and
    outcome straddle a join whose attributes are covariates, ignorability holds
    structurally and the estimate is zero; that case is flagged.
    """
    xs = attrset(x)
    pot = potential or f"{y}_pot"
    ok = False
    if xs.isdisjoint({t, pot}):
        ok, _ = derivable(cis, CIStatement([t], xs, [pot], context), mode)
    trap = detect_zero_ate(xs, t_loc, y_loc, join_attrs)
    if trap:
        return IgnorabilityVerdict("positive", ok, True, zero_ate_message(t, y, join_attrs))
    if ok:
        return IgnorabilityVerdict("positive", True)
    return IgnorabilityVerdict("unverifiable", False,
                               note="ignorability cannot be tested from data; assert it explicitly")


def randomized_difference(units: UnitTable) -> Fraction:
    """Difference of treated and control outcome means with no adjustment."""
    treated = [u for u in units.units if u.t]
    control = [u for u in units.units if not u.t]
    if not treated or not control:
        raise NoValidGroupsError("need both treated and control units")
    return _mean(treated) - _mean(control)


def count_by_signature(units: UnitTable, x: AttrsLike | None = None) -> Counter:
    attrs, idx = _positions(units, x)
    return Counter(tuple(u.covariates[i] for i in idx) for u in units.units)
