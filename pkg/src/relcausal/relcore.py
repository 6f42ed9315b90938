"""Bag-semantics relations with exact frequency arithmetic.

A relation stores each distinct row once together with its multiplicity, so
relations built from count tables stay small even when the bag is large.
Counts and probabilities are exact integers and Fractions; only the entropy
helpers use floating point.
"""
from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from operator import itemgetter
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

Row = tuple[str, ...]
AttrsLike = Union[str, Iterable[str]]


class SchemaError(ValueError):
    """An attribute is not part of the relation's schema."""


class ArgumentError(ValueError):
    """Attribute sets that must be disjoint overlap, or a required set is empty."""


class EmptyConditionError(ZeroDivisionError):
    """Conditioning on an event with zero support."""


class EmptyDistributionError(ValueError):
    """A distribution was requested from an empty relation."""


def attrset(attrs: AttrsLike | None) -> frozenset[str]:
    """Normalise an attribute collection. A bare string is one attribute."""
    if attrs is None:
        return frozenset()
    if isinstance(attrs, str):
        return frozenset([attrs])
    return frozenset(attrs)


class Relation:
    """An immutable bag of rows over an ordered schema.

    ``rows`` may be an iterable of row sequences (each one bag element) or a
    mapping from row tuple to multiplicity.
    """

    __slots__ = ("name", "schema", "_counts", "_n", "_pos", "_marginals", "_orders",
                 "_fanouts", "origins", "join_attrs")

    def __init__(
        self,
        schema: Sequence[str],
        rows: Iterable[Sequence[str]] | Mapping[Row, int] = (),
        name: str = "",
        origins: Mapping[str, frozenset[str]] | None = None,
        join_attrs: Iterable[str] = (),
    ):
        schema = tuple(schema)
        if len(set(schema)) != len(schema):
            raise SchemaError(f"duplicate attribute in schema {schema}")
        if any(not a for a in schema):
            raise SchemaError("attribute names must be non-empty")
        counts: Counter[Row] = Counter()
        if isinstance(rows, Mapping):
            for row, m in rows.items():
                if m < 0:
                    raise ValueError(f"negative multiplicity for {row}")
                if m:
                    counts[self._check_row(row, schema)] += int(m)
        else:
            for row in rows:
                counts[self._check_row(row, schema)] += 1
        self.name = name
        self.schema = schema
        self._counts = dict(counts)
        self._n = sum(counts.values())
        self._pos = {a: i for i, a in enumerate(schema)}
        self._marginals: dict[tuple[str, ...], dict[Row, int]] = {}
        self._orders: dict[frozenset[str], tuple[str, ...]] = {}
        self._fanouts: dict[tuple[tuple[str, ...], tuple[str, ...]], dict[Row, int]] = {}
        if origins is None:
            origins = {a: frozenset([name]) for a in schema}
        self.origins = dict(origins)
        self.join_attrs = frozenset(join_attrs)

    @staticmethod
    def _check_row(row: Sequence[str], schema: Row) -> Row:
        if isinstance(row, Mapping):
            row = tuple(row[a] for a in schema)
        row = tuple(str(v) for v in row)
        if len(row) != len(schema):
            raise SchemaError(f"row {row} does not bind schema {schema}")
        return row

    def __len__(self) -> int:
        return self._n

    def __repr__(self) -> str:
        return f"Relation({self.name!r}, {list(self.schema)}, n={self._n})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        if set(self.schema) != set(other.schema):
            return False
        return self._counts == other.reorder(self.schema)._counts

    def __hash__(self) -> int:
        return hash((frozenset(self.schema), self._n))

    @property
    def attributes(self) -> frozenset[str]:
        return frozenset(self.schema)

    def items(self) -> Iterator[tuple[Row, int]]:
        """Distinct rows with their multiplicities."""
        return iter(self._counts.items())

    def distinct(self) -> int:
        return len(self._counts)

    def rows(self) -> Iterator[Row]:
        """Every bag element, duplicates expanded, in sorted order."""
        for row in sorted(self._counts):
            for _ in range(self._counts[row]):
                yield row

    def multiplicity(self, row: Sequence[str]) -> int:
        return self._counts.get(tuple(row), 0)

    def renamed(self, name: str) -> "Relation":
        return Relation(self.schema, self._counts, name)

    def reorder(self, schema: Sequence[str]) -> "Relation":
        schema = tuple(schema)
        if set(schema) != set(self.schema):
            raise SchemaError(f"{schema} is not a permutation of {self.schema}")
        idx = [self._pos[a] for a in schema]
        counts = {tuple(r[i] for i in idx): m for r, m in self._counts.items()}
        return Relation(schema, counts, self.name, self.origins, self.join_attrs)

    def check_attrs(self, attrs: Iterable[str]) -> None:
        missing = sorted(set(attrs) - set(self.schema))
        if missing:
            raise SchemaError(f"unknown attributes {missing} for relation "
                              f"{self.name or '<unnamed>'} over {list(self.schema)}")

    def ordered(self, attrs: AttrsLike) -> tuple[str, ...]:
        """Attributes of ``attrs`` in schema order."""
        s = attrset(attrs)
        got = self._orders.get(s)
        if got is None:
            self.check_attrs(s)
            got = tuple(a for a in self.schema if a in s)
            self._orders[s] = got
        return got

    def fanout(self, attrs: tuple[str, ...], sub: tuple[str, ...]) -> dict[Row, int]:
        """For each value of ``sub``, how many distinct values of ``attrs`` extend it."""
        key = (attrs, sub)
        got = self._fanouts.get(key)
        if got is None:
            proj = _getter(attrs, sub)
            got = dict(Counter(proj(k) for k in self.marginal(attrs)))
            self._fanouts[key] = got
        return got

    def marginal(self, attrs: AttrsLike) -> dict[Row, int]:
        """Counts of value combinations over ``attrs`` (keys in schema order). Cached."""
        key = attrs if type(attrs) is tuple and attrs in self._marginals else self.ordered(attrs)
        cached = self._marginals.get(key)
        if cached is not None:
            return cached
        if key == self.schema:
            out = self._counts
        else:
            proj = _getter(self.schema, key)
            acc: defaultdict[Row, int] = defaultdict(int)
            for row, m in self._counts.items():
                acc[proj(row)] += m
            out = dict(acc)
        self._marginals[key] = out
        return out

    def values(self, attr: str) -> list[str]:
        """Sorted active domain of one attribute."""
        return sorted(v for (v,) in self.marginal([attr]))


def natural_join(r: Relation, s: Relation, name: str | None = None) -> Relation:
    """Bag natural join on the shared attributes; multiplicities multiply."""
    common = [a for a in r.schema if a in s._pos]
    extra = [a for a in s.schema if a not in r._pos]
    ri = [r._pos[a] for a in common]
    si = [s._pos[a] for a in common]
    ei = [s._pos[a] for a in extra]
    index: defaultdict[Row, list[tuple[Row, int]]] = defaultdict(list)
    for row, m in s._counts.items():
        index[tuple(row[i] for i in si)].append((tuple(row[i] for i in ei), m))
    counts: dict[Row, int] = {}
    for row, m in r._counts.items():
        for tail, m2 in index.get(tuple(row[i] for i in ri), ()):
            counts[row + tail] = m * m2
    origins = {a: _origin(r, a) | _origin(s, a) for a in r.schema}
    origins.update({a: _origin(s, a) for a in extra})
    if name is None:
        name = f"{r.name}+{s.name}"
    return Relation(r.schema + tuple(extra), counts, name, origins,
                    r.join_attrs | s.join_attrs | frozenset(common))


def _origin(r: Relation, a: str) -> frozenset[str]:
    if a not in r._pos:
        return frozenset()
    return r.origins.get(a, frozenset([r.name]))


def join_all(relations: Sequence[Relation], name: str = "JOIN") -> Relation:
    if not relations:
        raise ValueError("nothing to join")
    out = relations[0]
    for s in relations[1:]:
        out = natural_join(out, s)
    return Relation(out.schema, out._counts, name, out.origins, out.join_attrs)


def project(r: Relation, attrs: AttrsLike, name: str | None = None) -> Relation:
    """Duplicate-preserving projection."""
    key = r.ordered(attrs)
    missing = attrset(attrs) - set(key)
    if missing:
        raise SchemaError(f"unknown attributes {sorted(missing)}")
    return Relation(key, r.marginal(key), r.name if name is None else name,
                    {a: _origin(r, a) for a in key}, r.join_attrs & set(key))


def distinct_project(r: Relation, attrs: AttrsLike) -> set[Row]:
    """Set-semantics projection. Tuples follow ``attrs`` when it is a list or
    tuple, otherwise the schema order, so projections of different relations
    taken with the same sequence compare directly."""
    if not isinstance(attrs, (list, tuple)):
        return set(r.marginal(attrs))
    r.check_attrs(attrs)
    own = r.ordered(attrs)
    idx = [own.index(a) for a in attrs]
    return {tuple(k[i] for i in idx) for k in r.marginal(own)}


def count(r: Relation, a: Mapping[str, str] | None = None) -> int:
    """Number of rows agreeing with every binding in ``a``."""
    a = dict(a or {})
    if not a:
        return len(r)
    key = r.ordered(a)
    return r.marginal(key).get(tuple(str(a[k]) for k in key), 0)


def probability(r: Relation, target: Mapping[str, str],
                given: Mapping[str, str] | None = None) -> Fraction:
    """Exact conditional frequency N(target, given) / N(given)."""
    given = dict(given or {})
    overlap = set(target) & set(given)
    if overlap:
        raise ArgumentError(f"target and condition both bind {sorted(overlap)}")
    denom = count(r, given)
    if denom == 0:
        raise EmptyConditionError(f"no rows satisfy {given}")
    return Fraction(count(r, {**given, **target}), denom)


def _split_sets(r: Relation, x: AttrsLike, y: AttrsLike, z: AttrsLike):
    xs, ys, zs = attrset(x), attrset(y), attrset(z)
    if not xs or not ys:
        raise ArgumentError("both independence sides must be non-empty")
    if xs & ys or xs & zs or ys & zs:
        raise ArgumentError(f"sets overlap: {sorted(xs)} {sorted(ys)} {sorted(zs)}")
    r.ordered(xs | ys | zs)  # validates on first use
    return xs, ys, zs


_GETTERS: dict = {}


def _getter(full: tuple[str, ...], part: Iterable[str]):
    """Function projecting a row over ``full`` onto ``part`` (kept in ``full`` order)."""
    part = frozenset(part)
    key = (full, part)
    got = _GETTERS.get(key)
    if got is None:
        idx = [i for i, a in enumerate(full) if a in part]
        if not idx:
            got = lambda row: ()
        elif len(idx) == 1:
            i = idx[0]
            got = lambda row: (row[i],)
        else:
            got = itemgetter(*idx)
        if len(_GETTERS) > 100_000:
            _GETTERS.clear()
        _GETTERS[key] = got
    return got


def empirical_ci(r: Relation, x: AttrsLike, y: AttrsLike, z: AttrsLike = ()) -> bool:
    """Exact test of X independent of Y given Z on the frequency table of ``r``.

    The identity N_xyz * N_z == N_xz * N_yz must hold for every x, y, z with
    N_z > 0. Present xyz cells are checked directly. Absent cells need
    N_xz * N_yz = 0, i.e. for each z every pairing of an observed x with an
    observed y must itself be observed; that is a count comparison.
    """
    xs, ys, zs = _split_sets(r, x, y, z)
    if len(r) == 0:
        return True
    full = r.ordered(xs | ys | zs)
    xz, yz, zo = r.ordered(xs | zs), r.ordered(ys | zs), r.ordered(zs)
    nxz, nyz = r.marginal(xz), r.marginal(yz)
    nz = r.marginal(zo) if zs else {(): len(r)}
    if len(nxz) == len(nz) or len(nyz) == len(nz):
        return True  # one side is a function of Z
    nxyz = r.marginal(full)
    fx, fy = r.fanout(xz, zo), r.fanout(yz, zo)
    if len(nxyz) != sum(n * fy[k] for k, n in fx.items()):
        return False
    px, py, pz = _getter(full, xz), _getter(full, yz), _getter(full, zo)
    for row, n in nxyz.items():
        if n * nz[pz(row)] != nxz[px(row)] * nyz[py(row)]:
            return False
    return True


def _entropy_of(counts: Iterable[int], n: int) -> float:
    return -sum((c / n) * math.log2(c / n) for c in counts if c)


def entropy(r: Relation, attrs: AttrsLike) -> float:
    """Shannon entropy in bits of the marginal over ``attrs``."""
    if len(r) == 0:
        raise EmptyDistributionError("entropy of an empty relation")
    if not attrset(attrs):
        return 0.0
    return _entropy_of(r.marginal(attrs).values(), len(r))


def conditional_entropy(r: Relation, x: AttrsLike, y: AttrsLike) -> float:
    xs, ys = attrset(x), attrset(y)
    return max(0.0, entropy(r, xs | ys) - entropy(r, ys))


def mutual_information(r: Relation, x: AttrsLike, y: AttrsLike, z: AttrsLike = ()) -> float:
    """I(X;Y|Z) in bits, summed cell by cell so exact independence gives exactly 0."""
    xs, ys, zs = _split_sets(r, x, y, z)
    if len(r) == 0:
        raise EmptyDistributionError("mutual information of an empty relation")
    full = r.ordered(xs | ys | zs)
    nxz, nyz = r.marginal(xs | zs), r.marginal(ys | zs)
    nz = r.marginal(zs) if zs else {(): len(r)}
    px, py, pz = (_getter(full, s) for s in (xs | zs, ys | zs, zs))
    total = 0.0
    n = len(r)
    for row, c in r.marginal(full).items():
        num = c * nz[pz(row)]
        den = nxz[px(row)] * nyz[py(row)]
        if num != den:
            total += (c / n) * (math.log2(num) - math.log2(den))
    return total


@dataclass(frozen=True)
class EntropyMeasures:
    h_x: float
    h_x_given_y: float
    i_xy: float
    i_xy_given_z: float


def entropy_measures(r: Relation, x: AttrsLike, y: AttrsLike, z: AttrsLike = ()) -> EntropyMeasures:
    """H(X), H(X|Y), I(X;Y) and I(X;Y|Z) over the frequency distribution of ``r``."""
    if len(r) == 0:
        raise EmptyDistributionError("entropy of an empty relation")
    _split_sets(r, x, y, z)
    return EntropyMeasures(
        h_x=entropy(r, x),
        h_x_given_y=conditional_entropy(r, x, y),
        i_xy=mutual_information(r, x, y),
        i_xy_given_z=mutual_information(r, x, y, z),
    )


def functional_dependency_holds(r: Relation, x: AttrsLike, y: AttrsLike) -> bool:
    """True iff no two rows agree on ``x`` and differ on ``y``."""
    xs, ys = attrset(x), attrset(y)
    r.check_attrs(xs | ys)
    if len(r) == 0:
        return True
    nx = len(r.marginal(xs)) if xs else 1
    return len(r.marginal(xs | ys)) == nx


def is_key(r: Relation, attrs: AttrsLike) -> bool:
    """No value combination of ``attrs`` occurs more than once (bag-wise)."""
    return all(m == 1 for m in r.marginal(attrs).values())


def validate_foreign_key(referencing: Relation, referenced: Relation, attrs: AttrsLike) -> bool:
    """``attrs`` is a key of ``referenced`` and every referencing value resolves."""
    a = attrset(attrs)
    referencing.check_attrs(a)
    referenced.check_attrs(a)
    if not is_key(referenced, a):
        return False
    order = referenced.ordered(a)
    return distinct_project(referencing, order) <= distinct_project(referenced, order)


def read_csv(path: str | Path, name: str | None = None) -> Relation:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header line") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(row)
    return Relation([h.strip() for h in header], rows, name or path.stem)


def write_csv(r: Relation, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(r.schema)
        w.writerows(r.rows())
