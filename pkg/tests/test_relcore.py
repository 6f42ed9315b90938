from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_ci, brute_count, brute_join, disjoint_sets, relations
from relcausal.relcore import (
    ArgumentError, EmptyConditionError, EmptyDistributionError, Relation, SchemaError,
    count, distinct_project, empirical_ci, entropy, entropy_measures, functional_dependency_holds,
    mutual_information, natural_join, probability, project, read_csv, validate_foreign_key,
    write_csv,
)
from tables import SMALL_JOIN_ROWS, large_r, s, small_r


def test_join_matches_printed_table():
    j = natural_join(small_r(), s())
    assert j.schema == tuple("ABCDE")
    assert sorted(j.rows()) == sorted(SMALL_JOIN_ROWS)


def test_join_with_empty_partner_is_empty():
    assert len(natural_join(small_r(), Relation("DE", []))) == 0


def test_larger_join_has_fourteen_rows():
    assert len(natural_join(large_r(), s())) == 14


def test_join_without_shared_attributes_is_cross_product():
    r = Relation("A", [("a1",), ("a2",)])
    t = Relation("B", [("b1",), ("b1",), ("b2",)])
    j = natural_join(r, t)
    assert len(j) == 6
    assert j.multiplicity(("a1", "b1")) == 2


def test_join_on_identical_schemas_multiplies_matches():
    r = Relation("AB", [("x", "y"), ("x", "y"), ("u", "v")])
    t = Relation("AB", [("x", "y"), ("p", "q")])
    j = natural_join(r, t)
    assert dict(j.items()) == {("x", "y"): 2}


def test_project_keeps_duplicates():
    j = natural_join(small_r(), s())
    d = project(j, ["D"])
    assert sorted(v for (v,) in d.rows()) == ["d1", "d1", "d2", "d2", "d2", "d3", "d4"]
    assert len(project(small_r(), ["C"])) == 4
    assert set(project(small_r(), ["C"]).rows()) == {("c",)}


def test_identity_projection():
    r = small_r()
    assert project(r, r.schema) == r


def test_project_unknown_attribute():
    with pytest.raises(SchemaError):
        project(small_r(), ["Q"])


def test_counts_on_join():
    j = natural_join(small_r(), s())
    assert count(j, {"A": "a1", "B": "b1", "C": "c"}) == 2
    assert count(j, {"A": "a1", "C": "c"}) == 5
    assert count(small_r(), {}) == 4
    with pytest.raises(SchemaError):
        count(j, {"Q": "q"})


def test_probabilities_are_exact():
    j = natural_join(small_r(), s())
    assert probability(j, {"A": "a1", "B": "b1"}, {"C": "c"}) == Fraction(2, 7)
    assert probability(small_r(), {}, {}) == 1
    with pytest.raises(EmptyConditionError):
        probability(j, {"A": "a1"}, {"C": "zz"})
    with pytest.raises(ArgumentError):
        probability(j, {"A": "a1"}, {"A": "a1"})


def test_ci_on_small_tables():
    r, j = small_r(), natural_join(small_r(), s())
    assert empirical_ci(r, ["A"], ["B"], ["C"])
    assert not empirical_ci(j, ["A"], ["B"], ["C"])
    assert empirical_ci(j, ["A"], ["B"], ["C", "D"])


def test_ci_single_row_always_holds():
    r = Relation("ABC", [("x", "y", "z")])
    assert empirical_ci(r, "A", "B", ()) and empirical_ci(r, "A", ["B", "C"], ())


def test_ci_rejects_overlap_and_empty_sides():
    with pytest.raises(ArgumentError):
        empirical_ci(small_r(), "A", "A", "C")
    with pytest.raises(ArgumentError):
        empirical_ci(small_r(), [], "A")


def test_ci_detects_missing_cell():
    # every present cell satisfies the identity, but (x2, y2) is absent
    r = Relation("XY", [("x1", "y1"), ("x1", "y2"), ("x2", "y1")])
    assert not empirical_ci(r, "X", "Y")
    assert not brute_ci(r, ["X"], ["Y"], [])


def test_entropy_values():
    coin = Relation("A", [("h",), ("t",)])
    assert entropy(coin, "A") == pytest.approx(1.0, abs=1e-12)
    assert entropy(Relation("A", [("h",), ("h",)]), "A") == 0.0
    m = entropy_measures(small_r(), "A", "B", "C")
    assert abs(m.i_xy_given_z) < 1e-9
    with pytest.raises(EmptyDistributionError):
        entropy(Relation("A", []), "A")


def test_functional_dependencies():
    assert not functional_dependency_holds(s(), "D", "E")
    assert functional_dependency_holds(s(), "D", "D")
    keyed = Relation(["id", "x", "y"], [("1", "a", "b"), ("2", "a", "c"), ("3", "b", "b")])
    assert functional_dependency_holds(keyed, "id", ["x", "y"])


def test_foreign_keys():
    assert not validate_foreign_key(small_r(), s(), "D")
    students = Relation(["sid", "name"], [("s1", "ann"), ("s2", "bo"), ("s3", "cy")])
    enroll = Relation(["sid", "course"], [("s1", "db"), ("s1", "ml"), ("s3", "db")])
    assert validate_foreign_key(enroll, students, "sid")
    assert not validate_foreign_key(enroll, Relation(["sid"], [("s1",)]), "sid")
    assert validate_foreign_key(Relation(["sid", "course"], []), students, "sid")


def test_csv_round_trip(tmp_path):
    p = tmp_path / "r.csv"
    write_csv(natural_join(large_r(), s()), p)
    back = read_csv(p)
    assert back == natural_join(large_r(), s())
    assert back.name == "r"


def test_csv_with_quoted_commas(tmp_path):
    p = tmp_path / "q.csv"
    p.write_text('A,B\n"x,1",y\n"x,1",y\n', encoding="utf-8")
    r = read_csv(p)
    assert r.multiplicity(("x,1", "y")) == 2


# ---------------------------------------------------------------- properties

@settings(max_examples=150, deadline=None)
@given(st.data())
def test_ci_matches_brute_force(data):
    r = data.draw(relations())
    x, y, z = data.draw(disjoint_sets(list(r.schema)))
    assert empirical_ci(r, x, y, z) == brute_ci(r, x, y, z)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_ci_agrees_with_conditional_mutual_information(data):
    r = data.draw(relations(max_rows=20))
    x, y, z = data.draw(disjoint_sets(list(r.schema)))
    m = entropy_measures(r, x, y, z)
    assert min(m.h_x, m.h_x_given_y, m.i_xy, m.i_xy_given_z) >= -1e-9
    assert empirical_ci(r, x, y, z) == (abs(m.i_xy_given_z) < 1e-9)
    assert mutual_information(r, x, y) == pytest.approx(m.i_xy)


@settings(max_examples=100, deadline=None)
@given(relations(attrs="ABC"), relations(attrs="CDE"))
def test_join_size_and_content(r, t):
    t = Relation(["C"] + list(t.schema[1:]) if "C" in t.schema else t.schema, t.rows())
    j = natural_join(r, t)
    assert j == brute_join(r, t)
    common = [a for a in r.schema if a in t.schema]
    if common:
        mr, mt = r.marginal(common), t.marginal(common)
        assert len(j) == sum(n * mt.get(k, 0) for k, n in mr.items())


@settings(max_examples=100, deadline=None)
@given(relations(), st.data())
def test_probabilities_and_projection(r, data):
    attrs = data.draw(st.lists(st.sampled_from(r.schema), min_size=1, unique=True))
    assert len(project(r, attrs)) == len(r)
    cond_attr = data.draw(st.sampled_from(r.schema))
    target = [a for a in attrs if a != cond_attr]
    for (cv,) in r.marginal([cond_attr]):
        given_ = {cond_attr: cv}
        if not target:
            continue
        total = sum(probability(r, dict(zip(r.ordered(target), k)), given_)
                    for k in r.marginal(target))
        assert total == 1
    for row in r.rows():
        full = dict(zip(r.schema, row))
        p = probability(r, full)
        assert 0 <= p <= 1
        assert count(r, full) == brute_count(r, full)
        assert count(r, {k: full[k] for k in attrs}) >= count(r, full)
        break


def test_projections_follow_requested_order():
    r = Relation(["B", "A"], [("b1", "a1"), ("b2", "a2")])
    assert distinct_project(r, ["A", "B"]) == {("a1", "b1"), ("a2", "b2")}
    assert distinct_project(r, {"A", "B"}) == {("b1", "a1"), ("b2", "a2")}


def test_foreign_key_with_permuted_schemas():
    referenced = Relation(["A", "B", "C"], [("a1", "b1", "c1"), ("a2", "b2", "c1")])
    referencing = Relation(["B", "A", "E"], [("b1", "a1", "e1"), ("b2", "a2", "e2")])
    assert validate_foreign_key(referencing, referenced, ["A", "B"])
    dangling = Relation(["B", "A", "E"], [("b1", "a2", "e1")])
    assert not validate_foreign_key(dangling, referenced, ["A", "B"])
