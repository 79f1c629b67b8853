from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from relsdp import logic, oracle
from relsdp.logic import Predicate
from relsdp.parser import parse_expression
from relsdp.relexpr import (Agg, EvaluationError, Op, Scale, UnsupportedCombination, apply_binary,
                            canonicalize, check_invariants, constant, evaluate, expr, max_combine,
                            render, scalar_combine, simplify, standardize_apart)

from conftest import PREDICATES, expressions, sample_interpretations

color = Predicate("color", ("Obj", "Colour"))
box = Predicate("box", ("Obj",))
X, Z = logic.var("X", "Obj"), logic.var("Z", "Obj")
Y = logic.var("Y", "Colour")
COLOR = logic.lit(logic.atom(color, X, Y))
I = logic.Interpretation({"Obj": ("a", "b"), "Colour": ("black", "white")}, {},
                         frozenset({("color", "a", "black"), ("color", "a", "white"),
                                    ("color", "b", "black")}))
SAMPLES = sample_interpretations()


def test_product_example():
    e = expr([(Agg.PRODUCT, X), (Agg.PRODUCT, Y)],
             [(COLOR, Fraction(3, 10)), (logic.neg(COLOR), Fraction(1, 2))])
    assert evaluate(e, I) == Fraction(27, 2000)


def test_constant_expression():
    assert evaluate(constant(5), I) == 5


def test_largest_colour_class():
    e = expr([(Agg.MAX, Y), (Agg.SUM, X)], [(COLOR, 1), (logic.neg(COLOR), 0)])
    assert evaluate(e, I) == 2
    assert oracle.brute_evaluate(e, I) == 2


def test_avg_over_empty_sort_is_an_error():
    e = expr([(Agg.AVG, X)], [(logic.TRUE, 1)])
    with pytest.raises(EvaluationError):
        evaluate(e, logic.Interpretation({"Obj": ()}, {}))


def test_scale_multiplies_by_sort_size():
    e = expr([(Agg.AVG, X)], [(logic.lit(logic.atom(box, X)), 4), (logic.neg(logic.lit(logic.atom(box, X))), 0)],
             Scale(Fraction(1), ("Obj",)))
    i = logic.Interpretation({"Obj": ("a", "b", "c")}, {}, frozenset({("box", "a"), ("box", "c")}))
    assert evaluate(e, i) == 8


def test_cross_product_example():
    boxed = logic.lit(logic.atom(box, X))
    f = expr([(Agg.MAX, X), (Agg.MIN, Y)], [(COLOR, 3), (logic.neg(COLOR), 5)])
    g = expr([(Agg.MAX, X)], [(boxed, 1), (logic.neg(boxed), 2)])
    out = apply_binary(Op.PLUS, f, g)
    assert [a for a, _ in out.prefix] == [Agg.MAX, Agg.MAX, Agg.MIN]
    assert sorted(c.value for c in out.cases) == [4, 5, 6, 7]
    check_invariants(out)
    boxed_z = logic.lit(logic.atom(box, Z))
    expected = expr([(Agg.MAX, Z), (Agg.MAX, X), (Agg.MIN, Y)], [
        (logic.conj(COLOR, boxed_z), 4), (logic.conj(logic.neg(COLOR), boxed_z), 6),
        (logic.conj(COLOR, logic.neg(boxed_z)), 5),
        (logic.conj(logic.neg(COLOR), logic.neg(boxed_z)), 7)])
    assert canonicalize(out) == canonicalize(expected)
    for i in _colour_worlds():
        assert evaluate(out, i) == evaluate(f, i) + evaluate(g, i)


def _colour_worlds():
    ground = [("color", o, c) for o in "ab" for c in ("black", "white")] + [("box", "a"), ("box", "b")]
    for mask in range(0, 1 << len(ground), 3):
        yield logic.Interpretation({"Obj": ("a", "b"), "Colour": ("black", "white")}, {},
                                   frozenset(g for k, g in enumerate(ground) if mask >> k & 1))


def test_additive_identity():
    f = expr([(Agg.MAX, X), (Agg.MIN, Y)], [(COLOR, 3), (logic.neg(COLOR), 5)])
    out = apply_binary(Op.PLUS, f, constant(0))
    assert all(evaluate(out, i) == evaluate(f, i) for i in _colour_worlds())


def test_unsafe_combinations_fail_loudly():
    f = expr([(Agg.AVG, X)], [(logic.TRUE, 1)])
    g = expr([(Agg.MAX, Z)], [(logic.lit(logic.atom(box, Z)), 1), (logic.neg(logic.lit(logic.atom(box, Z))), 0)])
    with pytest.raises(UnsupportedCombination) as err:
        apply_binary(Op.MAX, f, g)
    assert "avg" in str(err.value)
    prod = expr([(Agg.PRODUCT, X)], [(logic.TRUE, 2)])
    with pytest.raises(UnsupportedCombination):
        apply_binary(Op.PLUS, prod, constant(1))


def test_scalar_combine():
    f = expr([], [(COLOR, 10), (logic.neg(COLOR), 9)])
    assert [c.value for c in scalar_combine(f, Fraction(9, 10)).cases] == [9, Fraction(81, 10)]
    assert scalar_combine(f, 1) == f
    assert {c.value for c in scalar_combine(f, 0).cases} == {0}


def test_standardize_apart_renames():
    p = Predicate("p", ("Obj",))
    f = expr([(Agg.MAX, X)], [(logic.lit(logic.atom(p, X)), 1), (logic.neg(logic.lit(logic.atom(p, X))), 0)])
    out = standardize_apart(f, {"X"})
    assert render(out) == "[max X1:Obj] { p(X1) : 1 ; ~p(X1) : 0 }"
    assert standardize_apart(f, set()) == f


def test_simplify_drops_contradictions_and_eliminates_equalities():
    B, B1 = logic.var("B", "Box"), logic.var("B1", "Box")
    C1 = logic.var("C1", "City")
    paris = logic.const("paris", "City")
    bin_ = Predicate("BIn", ("Box", "City"))
    hit = logic.conj(logic.eq(B1, B), logic.eq(C1, paris), logic.lit(logic.atom(bin_, B1, C1)))
    e = expr([(Agg.MAX, B), (Agg.MAX, B1), (Agg.MAX, C1)],
             [(hit, 10), (logic.neg(hit), 0), (logic.FALSE, 3)])
    out = simplify(e)
    assert render(out) == "[max B:Box] { BIn(B,paris) : 10 ; ~BIn(B,paris) : 0 }"


def test_vacuous_sum_variable_becomes_scale():
    e = expr([(Agg.SUM, X)], [(logic.TRUE, 3)])
    out = simplify(e)
    assert out.prefix == () and out.scale == Scale(Fraction(1), ("Obj",))
    assert evaluate(out, I) == evaluate(e, I) == 6


def test_max_combine_self():
    f = expr([(Agg.MAX, X), (Agg.MIN, Y)], [(COLOR, 3), (logic.neg(COLOR), 5)])
    out = max_combine(f, f)
    assert all(evaluate(out, i) == evaluate(f, i) for i in _colour_worlds())


def test_canonicalize_idempotent_and_rename_invariant():
    f = expr([(Agg.MAX, X), (Agg.MIN, Y)], [(COLOR, 3), (logic.neg(COLOR), 5)])
    g = standardize_apart(f, {"X", "Y"})
    assert canonicalize(canonicalize(f)) == canonicalize(f)
    assert canonicalize(g) == canonicalize(f)


def test_canonical_text_round_trips(boxworld):
    text = "[max B:Box, max T:Truck] { BIn(B,paris) : 10 ; (On(B,T) & TIn(T,paris) & ~BIn(B,paris)) : 9 ; ((~On(B,T) | ~TIn(T,paris)) & ~BIn(B,paris)) : 0 }"
    e = parse_expression(text, boxworld.predicates, boxworld.constants)
    assert render(canonicalize(e)) == text
    assert parse_expression(render(e), boxworld.predicates, boxworld.constants) == e


# -- property suites ----------------------------------------------------------------------------

SAFE_MAXMIN = expressions(aggs=(Agg.MAX, Agg.MIN))
NONNEG_MAXMIN = expressions(aggs=(Agg.MAX, Agg.MIN), values=st.integers(0, 5))


def _pointwise(op, a, b):
    return {Op.PLUS: a + b, Op.TIMES: a * b, Op.MAX: max(a, b)}[op]


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(list(Op)), st.data())
def test_apply_binary_homomorphism(op, data):
    strategy = NONNEG_MAXMIN if op is Op.TIMES else SAFE_MAXMIN
    f, g = data.draw(strategy), data.draw(strategy)
    out = apply_binary(op, f, g)
    check_invariants(out)
    for i in SAMPLES:
        assert evaluate(out, i) == _pointwise(op, evaluate(f, i), evaluate(g, i))


@settings(max_examples=100, deadline=None)
@given(expressions(aggs=(Agg.AVG, Agg.SUM)), expressions(aggs=(Agg.AVG, Agg.SUM)))
def test_plus_over_aligned_sums(f, g):
    try:
        out = apply_binary(Op.PLUS, f, g)
    except UnsupportedCombination:
        return
    for i in SAMPLES:
        assert evaluate(out, i) == evaluate(f, i) + evaluate(g, i)


@settings(max_examples=200, deadline=None)
@given(expressions())
def test_simplify_and_standardize_preserve_evaluation(e):
    s = simplify(e)
    r = standardize_apart(e, {"X", "Y", "Z"})
    check_invariants(s)
    for i in SAMPLES:
        v = oracle.brute_evaluate(e, i)
        assert evaluate(e, i) == v
        assert evaluate(s, i) == v
        assert evaluate(r, i) == v


@settings(max_examples=50, deadline=None)
@given(SAFE_MAXMIN, SAFE_MAXMIN)
def test_max_combine_is_pointwise_max(f, g):
    out = max_combine(f, g)
    for i in SAMPLES:
        assert evaluate(out, i) == max(evaluate(f, i), evaluate(g, i))


def test_vocabulary_fixture():
    assert set(PREDICATES) == {"P", "Q", "R"}
