import itertools
from fractions import Fraction

import pytest
from hypothesis import strategies as st

from relsdp import logic
from relsdp.logic import Predicate
from relsdp.parser import bundled_domain
from relsdp.relexpr import Agg, Case, RelationalExpression

P = Predicate("P", ("A",))
Q = Predicate("Q", ("A", "B"))
R = Predicate("R", ("B",))
PREDICATES = {p.name: p for p in (P, Q, R)}

X, Y = logic.var("X", "A"), logic.var("Y", "A")
Z = logic.var("Z", "B")
a = logic.const("a", "A")
TERMS_A = (X, Y, a)
TERMS_B = (Z,)


def small_atoms():
    out = [logic.atom(P, t) for t in TERMS_A]
    out += [logic.atom(Q, t, Z) for t in TERMS_A]
    out += [logic.atom(R, Z)]
    out += [logic.eq_atom(X, Y), logic.eq_atom(X, a), logic.eq_atom(Y, a)]
    return out


ATOMS = small_atoms()


@st.composite
def formulas(draw, depth=2):
    if depth == 0 or draw(st.booleans()):
        f = logic.lit(draw(st.sampled_from(ATOMS)))
        return f if draw(st.booleans()) else logic.neg(f)
    parts = draw(st.lists(formulas(depth=depth - 1), min_size=2, max_size=3))
    return logic.conj(*parts) if draw(st.booleans()) else logic.disj(*parts)


def partition(fs):
    """Exclusive, exhaustive conditions built from a list of formulas."""
    out, seen = [], logic.FALSE
    for f in fs:
        out.append(logic.conj(f, logic.neg(seen)))
        seen = logic.disj(seen, f)
    out.append(logic.neg(seen))
    return out


@st.composite
def expressions(draw, aggs=tuple(Agg), values=st.integers(-3, 5)):
    fs = draw(st.lists(formulas(depth=1), min_size=1, max_size=3))
    conds = [c for c in partition(fs) if c != logic.FALSE]
    vals = [Fraction(draw(values)) for _ in conds]
    order = draw(st.permutations([X, Y, Z]))
    prefix = [(draw(st.sampled_from(aggs)), v) for v in order]
    return RelationalExpression(tuple(prefix), tuple(Case(c, v) for c, v in zip(conds, vals)))


def interpretations(n_a=2, n_b=2):
    """Every interpretation of the small vocabulary over fixed object sets."""
    objs = {"A": ("a",) + tuple(f"a{i}" for i in range(1, n_a)),
            "B": tuple(f"b{i}" for i in range(1, n_b + 1))}
    ground = [("P", o) for o in objs["A"]]
    ground += [("Q", o, b) for o in objs["A"] for b in objs["B"]]
    ground += [("R", b) for b in objs["B"]]
    for bits in itertools.product((0, 1), repeat=len(ground)):
        yield logic.Interpretation(objs, {"a": "a"},
                                   frozenset(g for g, on in zip(ground, bits) if on))


def sample_interpretations(n_a=2, n_b=2, step=7):
    return list(itertools.islice(interpretations(n_a, n_b), 0, None, step))


def groundings(terms, objects):
    free = sorted(t for t in terms if t.kind is not logic.Kind.CONST)
    for combo in itertools.product(*(objects[t.sort] for t in free)):
        yield dict(zip(free, combo))


def boxworld_state(spec, boxes=1, trucks=1, cities=("paris",), atoms=()):
    objs = {"Box": tuple(f"b{i}" for i in range(1, boxes + 1)),
            "Truck": tuple(f"t{i}" for i in range(1, trucks + 1)),
            "City": tuple(cities)}
    return logic.Interpretation(objs, {c: c for c in spec.constants}, frozenset(atoms))


@pytest.fixture(scope="session")
def boxworld():
    return bundled_domain("boxworld.rmdp")


@pytest.fixture(scope="session")
def additive():
    return bundled_domain("boxworld_additive.rmdp")


@pytest.fixture(scope="session")
def converged(boxworld):
    from relsdp import sdp

    return sdp.solve(boxworld, None, Fraction(1, 10000))


@pytest.fixture(scope="session")
def converged_policy(boxworld, converged):
    from relsdp import sdp

    return sdp.extract_policy(boxworld, converged)


ACCEPTANCE: dict[int, tuple[str, str, float, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, seconds, detail = ACCEPTANCE[n]
        line = f"criterion {n}: {status} {title} ({seconds:.1f} s)"
        terminalreporter.write_line(line + (f": {detail}" if detail else ""))
