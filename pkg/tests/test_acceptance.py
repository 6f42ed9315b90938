"""Acceptance suite: ten end-to-end criteria, each reported as one PASS/FAIL line.

Run with pytest (lines appear in the terminal summary) or directly:
``python tests/test_acceptance.py``.
"""
import itertools
import random
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import sweeps  # noqa: E402
from relcausal.causal import (  # noqa: E402
    NoValidGroupsError, TreatmentSpec, ZeroAteWarning, build_unit_table, check_c_equivalence,
    estimate_ate, exact_match, reduce_covariates_fk,
)
from relcausal.gaxioms import (  # noqa: E402
    CISet, check_graph_isomorph_axioms, ci, closure, empirical_statements,
)
from relcausal.generators import perfect_factor_relation, random_connected_graph  # noqa: E402
from relcausal.joinprop import (  # noqa: E402
    FOREIGN_KEY, ONE_ONE, EmvdStatement, ForeignKey, classify_join, emvd_holds, infer_join_cis,
    plan_joins, propagate_ci, semi_join_reduced, JoinSpec,
)
from relcausal.relcore import (  # noqa: E402
    empirical_ci, is_key, join_all, natural_join, probability, validate_foreign_key,
)
from relcausal.ugm import (  # noqa: E402
    UndirectedGraph, pmap_propagate, separations, triple_statement, union_imap, verify_map,
)
from tables import creation_r, creation_s, large_r, s, small_r  # noqa: E402

CRITERIA = {}
RESULTS: list[str] = []


def criterion(n, title, limit=None):
    def register(fn):
        CRITERIA[n] = (title, limit, fn)
        return fn
    return register


def run_criterion(n):
    title, limit, fn = CRITERIA[n]
    start = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - start
    if limit is not None and elapsed >= limit:
        ok, detail = False, f"{detail}; took {elapsed:.2f}s, limit {limit}s"
    timing = f"{elapsed:.2f}s" + (f" < {limit}s" if limit is not None else "")
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{timing}]"
    return ok, line


def conditional(j, target, given):
    return probability(j, target, given)


# ---------------------------------------------------------------- 1-3 golden tables

@criterion(1, "four-row join example", limit=1.0)
def golden_small():
    r, t = small_r(), s()
    j = natural_join(r, t)
    c = {"C": "c"}
    probs = (conditional(j, {"A": "a1", "B": "b1"}, c), conditional(j, {"A": "a1"}, c),
             conditional(j, {"B": "b1"}, c))
    cis = (empirical_ci(r, ["A"], ["B"], ["C"]), empirical_ci(j, ["A"], ["B"], ["C"]),
           empirical_ci(j, ["A"], ["B"], ["C", "D"]))
    ok = probs == (Fraction(2, 7), Fraction(5, 7), Fraction(3, 7)) and cis == (True, False, True)
    return ok, f"P = {', '.join(map(str, probs))}; CI in R/J/J|CD = {cis}"


@criterion(2, "eight-row join example", limit=1.0)
def golden_large():
    r, t = large_r(), s()
    j = natural_join(r, t)
    c = {"C": "c"}
    probs = (conditional(j, {"A": "a1", "B": "b1"}, c), conditional(j, {"A": "a1"}, c),
             conditional(j, {"B": "b1"}, c))
    want = (Fraction(3, 14), Fraction(7, 14), Fraction(6, 14))
    holds = empirical_ci(r, ["A"], ["B"], ["C"]) and empirical_ci(j, ["A"], ["B"], ["C"])
    # licensed two ways: a verified perfect map of R, and the join rules plus closure
    pmap = UndirectedGraph("ABCD", [("B", "D")])
    by_graph = verify_map(pmap, r, "p_map").holds and pmap_propagate(pmap, "R", "D", ci("A", "B", "C", "R"))
    schemas = {"R": r.schema, "S": t.schema}
    rels = {"R": r, "S": t}
    inferred = infer_join_cis(schemas, {n: empirical_statements(x) for n, x in rels.items()},
                              plan_joins([["R", "S"]], schemas, rels))
    by_rules = ci("A", "B", "C", "JOIN") in inferred
    ok = len(j) == 14 and probs == want and holds and by_graph and by_rules
    return ok, (f"|J| = {len(j)}; P = {', '.join(map(str, probs))}; CI holds {holds}, "
                f"licensed by P-map {by_graph}, by join rules {by_rules}")


@criterion(3, "join creates an independence")
def golden_creation():
    r, t = creation_r(), creation_s()
    j = natural_join(r, t)
    c = {"C": "c"}
    pr = (conditional(r, {"A": "a1", "B": "b1"}, c), conditional(r, {"A": "a1"}, c),
          conditional(r, {"B": "b1"}, c))
    pj = (conditional(j, {"A": "a1", "B": "b1"}, c), conditional(j, {"A": "a1"}, c),
          conditional(j, {"B": "b1"}, c))
    in_r, in_j = empirical_ci(r, ["A"], ["B"], ["C"]), empirical_ci(j, ["A"], ["B"], ["C"])
    ok = (pr == (Fraction(2, 7), Fraction(5, 7), Fraction(3, 7)) and pr[0] != pr[1] * pr[2]
          and pj == (Fraction(6, 14), Fraction(12, 14), Fraction(7, 14)) and pj[0] == pj[1] * pj[2]
          and not in_r and in_j)
    return ok, f"R: {pr[0]} vs {pr[1]}*{pr[2]}, CI {in_r}; J: {pj[0]} = {pj[1]}*{pj[2]}, CI {in_j}"


# ---------------------------------------------------------------- 4-5 sweeps

@criterion(4, "inferred join CIs hold on 200 random instances", limit=60.0)
def soundness_sweep():
    failures = statements = 0
    for seed in range(200):
        rng = random.Random(seed)
        r, t = sweeps.random_pair(rng)
        rels = {"R": r, "S": t}
        schemas = {"R": r.schema, "S": t.schema}
        asserted = {n: empirical_statements(x) for n, x in rels.items()}
        out = infer_join_cis(schemas, asserted, plan_joins([["R", "S"]], schemas, rels))
        j = natural_join(r, t)
        for stmt in out.statements:
            statements += 1
            failures += not stmt.holds_in(j)
    return failures == 0, f"{statements} statements checked, {failures} failures"


@criterion(5, "foreign-key and one-to-one joins keep base CIs")
def key_sweeps():
    failures = checked = bad_pre = 0
    for seed in range(100):
        rng = random.Random(10_000 + seed)
        r, t = sweeps.fk_pair(rng)
        common = [a for a in r.schema if a in t.schema]
        # a foreign key whose values cover the referenced side is also one-to-one
        if not validate_foreign_key(r, t, common) or classify_join(r, t) not in ((FOREIGN_KEY, False),
                                                                                (ONE_ONE, False)):
            bad_pre += 1
            continue
        spec = JoinSpec.between("R", r.schema, "S", t.schema, FOREIGN_KEY)
        j = natural_join(r, t)
        for stmt in empirical_statements(r):
            checked += 1
            failures += not (propagate_ci(stmt, spec) and stmt.holds_in(j))
    for seed in range(100):
        rng = random.Random(20_000 + seed)
        r, t = sweeps.one_one_pair(rng)
        common = [a for a in r.schema if a in t.schema]
        same_keys = set(r.marginal(common)) == set(t.marginal(common))
        if not (is_key(r, common) and is_key(t, common) and same_keys
                and classify_join(r, t)[0] == ONE_ONE):
            bad_pre += 1
            continue
        spec = JoinSpec.between("R", r.schema, "S", t.schema, ONE_ONE)
        j = natural_join(r, t)
        failures += not len(r) == len(t) == len(j)
        for rel in (r, t):
            for stmt in empirical_statements(rel):
                checked += 1
                failures += not (propagate_ci(stmt, spec) and stmt.holds_in(j))
    ok = failures == 0 and bad_pre == 0
    return ok, f"200 instances, {checked} base CIs checked, {failures} failures, {bad_pre} precondition misses"


# ---------------------------------------------------------------- 6 graphs

@criterion(6, "perfect-map propagation and union I-map on 50 factor pairs", limit=120.0)
def factor_pairs():
    failures = checked = 0
    for seed in range(50):
        rng = random.Random(30_000 + seed)
        v1 = list("ABCDE")[: rng.randint(2, 5)]
        d = rng.choice(v1)
        v2 = [d] + list("VWX")[: rng.randint(1, 3)]
        g1, g2 = random_connected_graph(rng, v1), random_connected_graph(rng, v2)
        r = perfect_factor_relation(rng, g1, domain=2, name="R")
        t = perfect_factor_relation(rng, g2, domain=2, name="S")
        u = union_imap(g1, g2, d, r, t)
        j = natural_join(r, t)
        for x, z, y in separations(g1):
            checked += 1
            failures += not (pmap_propagate(g1, "R", d, ci(x, y, z, "R")) and empirical_ci(j, x, y, z))
        for x, z, y in separations(u):
            checked += 1
            failures += not empirical_ci(j, x, y, z)
    return failures == 0, f"{checked} separations checked, {failures} failures"


# ---------------------------------------------------------------- 7-8 causal

@criterion(7, "zero effect when covariates include the join attribute")
def zero_ate():
    warned = all_valid = nonzero = 0
    for seed in range(50):
        rng = random.Random(40_000 + seed)
        r, t = sweeps.straddling_pair(rng)
        x = ["D"] + rng.sample(["A", "B"], rng.randint(0, 2))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            units = build_unit_table(natural_join(r, t), TreatmentSpec("TR", ">=", "2"), "Y", x)
        warned += any(issubclass(w.category, ZeroAteWarning) for w in caught)
        groups = exact_match(units)
        if groups.groups and len(groups.valid_groups) == len(groups.groups):
            all_valid += 1
            nonzero += estimate_ate(groups).ate != 0
    ok = warned == 50 and nonzero == 0 and all_valid > 0
    return ok, f"warned {warned}/50; {all_valid} all-valid runs, {nonzero} nonzero estimates"


@criterion(8, "covariates of the outcome relation give the same estimate")
def avoid_join():
    schemas = {"E": ["sid", "cid", "T", "Y"], "Student": ["sid", "age"], "Course": ["cid", "level"]}
    fks = [ForeignKey("E", "Student", ["sid"]), ForeignKey("E", "Course", ["cid"])]
    x = ["age", "cid", "level", "sid"]
    red = reduce_covariates_fk(x, schemas, fks, "E")
    compared = mismatches = 0
    for seed in range(50):
        e, student, course = sweeps.fk_star(random.Random(50_000 + seed))
        if not (validate_foreign_key(e, student, ["sid"]) and validate_foreign_key(e, course, ["cid"])):
            mismatches += 1
            continue
        j = join_all([e, student, course])
        units = build_unit_table(j, TreatmentSpec("T", "=", "1"), "Y", x)
        outcomes = []
        for cov in (x, sorted(red.covariates)):
            try:
                outcomes.append(estimate_ate(exact_match(units, cov)).ate)
            except NoValidGroupsError:
                outcomes.append(None)
        verdict = check_c_equivalence(j, "T", "Y", x, sorted(red.covariates))
        compared += outcomes[0] is not None
        mismatches += outcomes[0] != outcomes[1] or verdict != "equivalent_by_(i)"
    ok = red.reduced and mismatches == 0 and compared > 0
    return ok, (f"reduced to {sorted(red.covariates)}; {compared} estimates compared, "
                f"{mismatches} mismatches")


# ---------------------------------------------------------------- 9-10

@criterion(9, "closure soundness and separation axioms on 100 graphs")
def graphoid_soundness():
    unsound = 0
    closed_total = 0
    for seed in range(30):
        rng = random.Random(60_000 + seed)
        rel = sweeps.random_instance(rng, list("ABCDE")[: rng.randint(3, 5)], "R")
        for stmt in closure(empirical_statements(rel)):
            closed_total += 1
            unsound += not stmt.holds_in(rel)
    violations = 0
    for seed in range(100):
        rng = random.Random(70_000 + seed)
        names = list("ABCDEFG")[: rng.randint(2, 7)]
        p = rng.random() * 0.6
        g = UndirectedGraph(names, [e for e in itertools.combinations(names, 2) if rng.random() < p])
        model = CISet([triple_statement(t) for t in separations(g)], names)
        violations += len(check_graph_isomorph_axioms(model))
    # negative control: a parity relation breaks at least one of the schemas
    xor = sweeps.Relation(["A", "B", "C"], [(a, b, str(int(a) ^ int(b))) for a in "01" for b in "01"])
    control = bool(check_graph_isomorph_axioms(empirical_statements(xor)))
    ok = unsound == 0 and violations == 0 and control
    return ok, (f"{closed_total} closed statements, {unsound} unsound; "
                f"{violations} axiom violations on 100 graphs; parity control flagged {control}")


def emvds_of(rel):
    names = list(rel.schema)
    for roles in itertools.product(range(4), repeat=len(names)):
        x = [a for a, k in zip(names, roles) if k == 1]
        y = [a for a, k in zip(names, roles) if k == 2]
        w = [a for a, k in zip(names, roles) if k == 3]
        if y and w:
            yield EmvdStatement(x, y, x + y + w)


@criterion(10, "EMVDs survive semi-join reduced joins; dangling tuples break them")
def emvd_propagation():
    checked = failures = 0
    for seed in range(50):
        rng = random.Random(80_000 + seed)
        r, t = sweeps.semi_join_reduce(*sweeps.random_pair(rng, max_attrs=4))
        if not len(r):
            r, t = sweeps.semi_join_reduce(*sweeps.fk_pair(rng))
        failures += not semi_join_reduced([r, t])
        j = natural_join(r, t)
        for rel in (r, t):
            for e in emvds_of(rel):
                if emvd_holds(rel, e):
                    checked += 1
                    failures += not emvd_holds(j, e)
    broken = 0
    for seed in range(10):
        r, t = sweeps.dangling_counterexample(random.Random(90_000 + seed))
        e = EmvdStatement([], ["A"], ["A", "B"])
        if emvd_holds(r, e) and not semi_join_reduced([r, t]) and not emvd_holds(natural_join(r, t), e):
            broken += 1
    ok = failures == 0 and checked > 0 and broken >= 1
    return ok, f"{checked} base EMVDs checked, {failures} failures; {broken}/10 dangling counterexamples"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, line = run_criterion(n)
    RESULTS.append(line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    lines = [run_criterion(n) for n in sorted(CRITERIA)]
    for _, line in lines:
        print(line)
    sys.exit(0 if all(ok for ok, _ in lines) else 1)
