import pytest
from hypothesis import given, settings, strategies as st

from relsdp import logic
from relsdp.logic import Predicate

from conftest import ATOMS, PREDICATES, X, Y, Z, a, formulas, groundings, interpretations

Box = "Box"
City = "City"
BIn = Predicate("BIn", (Box, City))
On = Predicate("On", (Box, "Truck"))
B, B1 = logic.var("B", Box), logic.var("B1", Box)
T1 = logic.var("T1", "Truck")
C, C1 = logic.var("C", City), logic.var("C1", City)
paris = logic.const("paris", City)


def bin_(b, c):
    return logic.lit(logic.atom(BIn, b, c))


def test_substitution_examples():
    b1 = logic.const("b1", Box)
    assert logic.apply_substitution(bin_(B, C), {B: b1, C: paris}) == bin_(b1, paris)
    assert logic.apply_substitution(bin_(B, paris), {}) == bin_(B, paris)
    f = logic.conj(logic.eq(B1, B), logic.lit(logic.atom(On, B1, T1)))
    b2 = logic.const("b2", Box)
    assert logic.apply_substitution(f, {B: b2}) == logic.conj(
        logic.eq(B1, b2), logic.lit(logic.atom(On, B1, T1)))


def test_substitution_rejects_sort_change():
    with pytest.raises(logic.SortError):
        logic.apply_substitution(bin_(B, C), {B: paris})


def test_eval_examples():
    color = Predicate("color", ("Obj", "Colour"))
    cx, cy = logic.var("X", "Obj"), logic.var("Y", "Colour")
    i = logic.Interpretation({"Obj": ("a",), "Colour": ("black", "white")}, {},
                             frozenset({("color", "a", "black")}))
    assert logic.eval_formula(logic.lit(logic.atom(color, cx, cy)), i, {cx: "a", cy: "black"})
    assert logic.eval_formula(logic.eq(paris, paris), logic.Interpretation({City: ("paris",)},
                                                                            {"paris": "paris"}), {})
    j = logic.Interpretation({Box: ("b1",), City: ("paris",)}, {"paris": "paris", "b1": "b1"},
                             frozenset({("BIn", "b1", "paris")}))
    b1 = logic.const("b1", Box)
    contradiction = logic.And((bin_(b1, paris), logic.neg(bin_(b1, paris))))
    assert not logic.eval_formula(contradiction, j, {})


def test_eval_unbound_variable():
    i = logic.Interpretation({Box: ("b1",), City: ("paris",)}, {"paris": "paris"})
    with pytest.raises(logic.UnboundVariableError):
        logic.eval_formula(bin_(B, paris), i, {})


def test_satisfiable_examples():
    assert not logic.satisfiable(logic.conj(bin_(B, paris), logic.neg(bin_(B, paris))))
    f = logic.conj(logic.eq(B1, B), logic.eq(C1, paris), logic.lit(logic.atom(On, B1, T1)))
    assert logic.satisfiable(f)
    lyon = logic.const("lyon", City)
    assert not logic.satisfiable(logic.eq(paris, lyon))


def test_equality_congruence():
    f = logic.conj(logic.eq(B1, B), bin_(B1, paris), logic.neg(bin_(B, paris)))
    assert not logic.satisfiable(f)
    g = logic.conj(logic.eq(C, paris), logic.neq(C, paris))
    assert not logic.satisfiable(g)


def test_entails_examples():
    other = logic.lit(logic.atom(On, B, T1))
    assert logic.entails(bin_(B, paris), logic.disj(bin_(B, paris), other))
    assert not logic.entails(logic.TRUE, bin_(B, paris))
    assert logic.entails(logic.conj(logic.eq(B1, B), bin_(B1, paris)), bin_(B, paris))


def brute_satisfiable(f):
    ts = logic.terms(f) | {X, Y, Z}
    for i in interpretations(n_a=3, n_b=1):
        for g in groundings(ts, i.objects):
            if logic.eval_formula(f, i, g):
                return True
    return False


@settings(max_examples=60, deadline=None)
@given(formulas(depth=2))
def test_satisfiable_matches_model_enumeration(f):
    assert logic.satisfiable(f) == brute_satisfiable(f)


@settings(max_examples=60, deadline=None)
@given(formulas(depth=2))
def test_formula_and_negation_exclusive(f):
    for i in list(interpretations(n_a=2, n_b=1))[::5]:
        for g in groundings({X, Y, Z}, i.objects):
            assert logic.eval_formula(f, i, g) != logic.eval_formula(logic.neg(f), i, g)


@settings(max_examples=60, deadline=None)
@given(formulas(depth=2), st.sampled_from([{X: Y}, {Y: a}, {X: a, Y: X}]))
def test_substitution_homomorphism(f, s):
    g_f = logic.apply_substitution(f, s)
    for i in list(interpretations(n_a=2, n_b=1))[::3]:
        for g in groundings({X, Y, Z}, i.objects):
            composed = {v: (i.constants[t.name] if t.kind is logic.Kind.CONST else g[t])
                        for v, t in s.items()}
            assert logic.eval_formula(g_f, i, g) == logic.eval_formula(f, i, {**g, **composed})


@settings(max_examples=60, deadline=None)
@given(formulas(depth=2))
def test_minimize_and_dnf_preserve_meaning(f):
    m = logic.minimize(f)
    assert logic.entails(f, m) and logic.entails(m, f)
    d = logic.disj(*(logic.conj(*c) for c in logic.dnf(f)))
    assert logic.entails(f, d) and logic.entails(d, f)


def test_render_is_canonical():
    f = logic.conj(bin_(B, paris), logic.eq(C, paris))
    g = logic.conj(logic.eq(paris, C), bin_(B, paris))
    assert f == g and f.key == g.key


def test_atoms_vocabulary_is_well_sorted():
    assert all(at.pred == "=" or at.pred in PREDICATES for at in ATOMS)
