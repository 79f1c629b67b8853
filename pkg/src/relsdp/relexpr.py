"""Relational expressions: an aggregation prefix over a list of cases.

``[max B:Box, avg T:Truck] { phi_1 : v_1 ; ... }`` maps an interpretation to a
number.  For every assignment of the prefix variables exactly one case
condition holds; its value is aggregated, innermost variable first, and the
result is multiplied by an optional scale (a rational times a product of sort
cardinalities).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from . import logic, maxform
from .logic import (
    FALSE,
    TRUE,
    Formula,
    Interpretation,
    Kind,
    Term,
    apply_substitution,
    conj,
    disj,
    neg,
)


class ExpressionError(Exception):
    pass


class EvaluationError(ExpressionError):
    pass


class UnsupportedCombination(ExpressionError):
    def __init__(self, op: str, agg: str, detail: str = "") -> None:
        self.op, self.agg = op, agg
        msg = f"operation {op!r} is not safe with respect to aggregation {agg!r}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class Agg(str, Enum):
    MAX = "max"
    MIN = "min"
    SUM = "sum"
    AVG = "avg"
    PRODUCT = "product"


class Op(str, Enum):
    PLUS = "+"
    TIMES = "*"
    MAX = "max"


@dataclass(frozen=True)
class Case:
    condition: Formula
    value: Fraction


@dataclass(frozen=True)
class Scale:
    """``coeff * |S_1| * ... * |S_k|``; sorts are kept sorted."""

    coeff: Fraction = Fraction(1)
    sorts: tuple[str, ...] = ()

    @property
    def is_one(self) -> bool:
        return self.coeff == 1 and not self.sorts

    def __mul__(self, other: Scale) -> Scale:
        return Scale(self.coeff * other.coeff, tuple(sorted(self.sorts + other.sorts)))

    def value(self, interp: Interpretation) -> Fraction:
        out = self.coeff
        for s in self.sorts:
            out *= interp.count(s)
        return out

    def render(self) -> str:
        parts = [] if self.coeff == 1 else [fmt_value(self.coeff)]
        parts += [f"|{s}|" for s in self.sorts]
        return " * ".join(parts)


ONE = Scale()


@dataclass(frozen=True)
class RelationalExpression:
    prefix: tuple[tuple[Agg, Term], ...]
    cases: tuple[Case, ...]
    scale: Scale = field(default=ONE)

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix", tuple((Agg(a), v) for a, v in self.prefix))
        object.__setattr__(
            self, "cases", tuple(Case(c.condition, Fraction(c.value)) for c in self.cases))

    @property
    def variables(self) -> tuple[Term, ...]:
        return tuple(v for _, v in self.prefix)

    @property
    def aggs(self) -> set[Agg]:
        return {a for a, _ in self.prefix}

    def free_terms(self) -> set[Term]:
        bound = set(self.variables)
        return {t for c in self.cases for t in logic.terms(c.condition)
                if t.kind is not Kind.CONST and t not in bound}

    def values(self) -> list[Fraction]:
        return [c.value for c in self.cases]

    def __str__(self) -> str:
        return render(self)


def expr(prefix: Iterable[tuple[Agg | str, Term]], cases: Iterable[tuple[Formula, object]],
         scale: Scale = ONE) -> RelationalExpression:
    return RelationalExpression(
        tuple((Agg(a), v) for a, v in prefix),
        tuple(Case(f, Fraction(v)) for f, v in cases),  # type: ignore[arg-type]
        scale,
    )


def constant(v) -> RelationalExpression:
    return RelationalExpression((), (Case(TRUE, Fraction(v)),))


# -- formatting ---------------------------------------------------------------


def fmt_value(v: Fraction) -> str:
    """Decimal text when the expansion terminates, otherwise ``p/q``."""
    v = Fraction(v)
    d = v.denominator
    k = 0
    while d % 2 == 0:
        d //= 2
        k += 1
    j = 0
    while d % 5 == 0:
        d //= 5
        j += 1
    if d != 1:
        return f"{v.numerator}/{v.denominator}"
    if v.denominator == 1:
        return str(v.numerator)
    places = max(k, j)
    scaled = abs(v.numerator) * 10**places // v.denominator
    sign = "-" if v < 0 else ""
    s = str(scaled).rjust(places + 1, "0")
    return f"{sign}{s[:-places]}.{s[-places:]}".rstrip("0")


def render(e: RelationalExpression) -> str:
    head = ", ".join(f"{a.value} {v.name}:{v.sort}" for a, v in e.prefix)
    body = " ; ".join(f"{c.condition.key} : {fmt_value(c.value)}" for c in e.cases)
    out = f"[{head}] {{ {body} }}"
    if not e.scale.is_one:
        out = f"{e.scale.render()} * {out}"
    return out


# -- invariants ----------------------------------------------------------------


def check_invariants(e: RelationalExpression, allowed_free: Iterable[Term] = ()) -> None:
    """Raise ``ExpressionError`` unless cases are exclusive, exhaustive and closed."""
    for a, b in itertools.combinations(e.cases, 2):
        if logic.satisfiable(conj(a.condition, b.condition)):
            raise ExpressionError(f"cases overlap: {a.condition} / {b.condition}")
    if logic.satisfiable(neg(disj(*(c.condition for c in e.cases)))):
        raise ExpressionError("cases are not exhaustive")
    allowed = set(allowed_free)
    stray = {t for t in e.free_terms() if t.kind is Kind.VAR and t not in allowed}
    if stray:
        raise ExpressionError(f"unbound variables {sorted(map(str, stray))}")
    names: dict[str, Term] = {}
    for v in e.variables:
        if names.setdefault(v.name, v) != v or list(e.variables).count(v) > 1:
            raise ExpressionError(f"variable {v.name} bound twice")


# -- evaluation ------------------------------------------------------------------


def evaluate(e: RelationalExpression, interp: Interpretation,
             binding: Mapping[Term, str] | None = None) -> Fraction:
    for a, v in e.prefix:
        if a in (Agg.AVG, Agg.MAX, Agg.MIN) and interp.count(v.sort) == 0:
            raise EvaluationError(f"{a.value} over empty sort {v.sort}")
    b = dict(binding or {})
    return e.scale.value(interp) * _fold(e, 0, interp, b)


def _fold(e: RelationalExpression, i: int, interp: Interpretation, b: dict) -> Fraction:
    n = len(e.prefix)
    if i == n:
        for c in e.cases:
            if logic.eval_formula(c.condition, interp, b):
                return c.value
        raise EvaluationError("no case holds; cases are not exhaustive")
    rest = {a for a, _ in e.prefix[i:]}
    if rest == {Agg.MAX} or rest == {Agg.MIN}:
        block = [v for _, v in e.prefix[i:]]
        desc = rest == {Agg.MAX}
        for c in sorted(e.cases, key=lambda c: c.value, reverse=desc):
            if _exists(c.condition, block, 0, interp, b):
                return c.value
        raise EvaluationError("no case holds; cases are not exhaustive")
    agg, x = e.prefix[i]
    vals = []
    for o in interp.objects.get(x.sort, ()):
        b[x] = o
        vals.append(_fold(e, i + 1, interp, b))
    b.pop(x, None)
    return combine(agg, vals)


def _exists(f: Formula, block: Sequence[Term], i: int, interp: Interpretation, b: dict) -> bool:
    v = logic.eval3(f, interp, b)
    if v is not None:
        return v
    if i == len(block):
        raise logic.UnboundVariableError(f"unbound terms in {f}")
    x = block[i]
    for o in interp.objects.get(x.sort, ()):
        b[x] = o
        if _exists(f, block, i + 1, interp, b):
            del b[x]
            return True
    b.pop(x, None)
    return False


def combine(agg: Agg, vals: Sequence[Fraction]) -> Fraction:
    if agg is Agg.SUM:
        return sum(vals, Fraction(0))
    if agg is Agg.PRODUCT:
        out = Fraction(1)
        for v in vals:
            out *= v
        return out
    if not vals:
        raise EvaluationError(f"{agg.value} over an empty sort")
    if agg is Agg.MAX:
        return max(vals)
    if agg is Agg.MIN:
        return min(vals)
    return sum(vals, Fraction(0)) / len(vals)


# -- renaming --------------------------------------------------------------------


def fresh_name(base: str, used: set[str]) -> str:
    stem = base.rstrip("0123456789'") or "X"
    i = 1
    while f"{stem}{i}" in used:
        i += 1
    return f"{stem}{i}"


def rename(e: RelationalExpression, m: Mapping[Term, Term]) -> RelationalExpression:
    if not m:
        return e
    return RelationalExpression(
        tuple((a, m.get(v, v)) for a, v in e.prefix),
        tuple(Case(apply_substitution(c.condition, m), c.value) for c in e.cases),
        e.scale,
    )


def all_names(e: RelationalExpression) -> set[str]:
    return {v.name for v in e.variables} | {t.name for t in e.free_terms()}


def standardize_apart(e: RelationalExpression, avoid: Iterable[str | Term]) -> RelationalExpression:
    """Rename prefix variables whose names occur in ``avoid``."""
    avoid_names = {a.name if isinstance(a, Term) else a for a in avoid}
    used = avoid_names | all_names(e)
    m = {}
    for v in e.variables:
        if v.name in avoid_names:
            n = fresh_name(v.name, used)
            used.add(n)
            m[v] = logic.var(n, v.sort)
    return rename(e, m)


# -- binary operations --------------------------------------------------------------


def _value_op(op: Op, a: Fraction, b: Fraction) -> Fraction:
    if op is Op.PLUS:
        return a + b
    if op is Op.TIMES:
        return a * b
    return max(a, b)


def _nonneg(e: RelationalExpression) -> bool:
    return e.scale.coeff >= 0 and all(c.value >= 0 for c in e.cases)


def _pullable(op: Op, agg: Agg, other_nonneg: bool) -> bool:
    if op is Op.PLUS:
        return agg in (Agg.MAX, Agg.MIN, Agg.AVG)
    if op is Op.TIMES:
        if agg in (Agg.SUM, Agg.AVG):
            return True
        return agg in (Agg.MAX, Agg.MIN) and other_nonneg
    return agg in (Agg.MAX, Agg.MIN)


def _alignable(op: Op, agg: Agg) -> bool:
    return (op is Op.PLUS and agg in (Agg.SUM, Agg.AVG)) or (op is Op.TIMES and agg is Agg.PRODUCT)


def _merge_prefixes(op: Op, f: RelationalExpression, g: RelationalExpression):
    """Interleave two prefixes so that ``op`` can be pushed inside them.

    Returns the merged prefix and a renaming of g's variables onto aligned
    variables of f.
    """
    P, Q = list(f.prefix), list(g.prefix)
    fn, gn = _nonneg(f), _nonneg(g)
    out: list[tuple[Agg, Term]] = []
    ren: dict[Term, Term] = {}
    i = j = 0
    while i < len(P) or j < len(Q):
        p = P[i] if i < len(P) else None
        q = Q[j] if j < len(Q) else None
        if q and q[0] in (Agg.MAX, Agg.MIN) and _pullable(op, q[0], fn):
            out.append(q)
            j += 1
        elif p and p[0] in (Agg.MAX, Agg.MIN) and _pullable(op, p[0], gn):
            out.append(p)
            i += 1
        elif p and q and p[0] is q[0] and p[1].sort == q[1].sort and _alignable(op, p[0]):
            ren[q[1]] = p[1]
            out.append(p)
            i += 1
            j += 1
        elif q and _pullable(op, q[0], fn):
            out.append(q)
            j += 1
        elif p and _pullable(op, p[0], gn):
            out.append(p)
            i += 1
        else:
            bad = p if p is not None else q
            assert bad is not None
            raise UnsupportedCombination(op.value, bad[0].value)
    return out, ren


def _is_zero(e: RelationalExpression) -> bool:
    return all(c.value == 0 for c in e.cases)


def apply_binary(op: Op | str, f: RelationalExpression, g: RelationalExpression
                 ) -> RelationalExpression:
    """Combine two expressions case by case after standardizing apart."""
    op = Op(op)
    if op is Op.PLUS:
        if _is_zero(g):
            return f
        if _is_zero(f):
            return g
    if op is Op.TIMES:
        scale = f.scale * g.scale
    elif f.scale == g.scale and f.scale.coeff > 0:
        scale = f.scale
    else:
        raise UnsupportedCombination(op.value, "scale",
                                     f"scales {f.scale.render() or 1} and {g.scale.render() or 1} differ")
    f = standardize_apart(f, {t.name for t in g.free_terms()})
    g = standardize_apart(g, all_names(f))
    prefix, ren = _merge_prefixes(op, f, g)
    g = rename(g, ren)
    cases = []
    for cg in g.cases:
        for cf in f.cases:
            c = conj(cf.condition, cg.condition)
            if c != FALSE and logic.satisfiable(c):
                cases.append(Case(c, _value_op(op, cf.value, cg.value)))
    return RelationalExpression(tuple(prefix), tuple(cases), scale)


def plus(f: RelationalExpression, g: RelationalExpression) -> RelationalExpression:
    return apply_binary(Op.PLUS, f, g)


def times(f: RelationalExpression, g: RelationalExpression) -> RelationalExpression:
    return apply_binary(Op.TIMES, f, g)


def scalar_combine(e: RelationalExpression, k, op: Op | str = Op.TIMES) -> RelationalExpression:
    """Apply ``op`` with a constant to every case value."""
    op = Op(op)
    k = Fraction(k)
    if op is Op.PLUS:
        if k == 0:
            return e
        if not e.scale.is_one:
            raise UnsupportedCombination("+", "scale", "adding a constant under a scale")
        for a in e.aggs:
            if not _pullable(Op.PLUS, a, True):
                raise UnsupportedCombination("+", a.value)
        return replace_values(e, lambda v: v + k)
    if op is Op.TIMES:
        if Agg.PRODUCT in e.aggs and k not in (0, 1):
            raise UnsupportedCombination("*", Agg.PRODUCT.value, "constant factor")
        if k < 0 and e.aggs & {Agg.MAX, Agg.MIN}:
            raise UnsupportedCombination("*", "max", "negative factor")
        return replace_values(e, lambda v: v * k)
    raise UnsupportedCombination(op.value, "constant")


def replace_values(e: RelationalExpression, fn) -> RelationalExpression:
    return RelationalExpression(e.prefix, tuple(Case(c.condition, fn(c.value)) for c in e.cases),
                                e.scale)


# -- simplification -----------------------------------------------------------------


def merge_values(cases: Iterable[Case]) -> list[Case]:
    groups: dict[Fraction, list[Formula]] = {}
    for c in cases:
        groups.setdefault(c.value, []).append(c.condition)
    return [Case(disj(*fs), v) for v, fs in groups.items()]


def relax_max_cases(cases: Sequence[Case]) -> list[tuple[Formula, Fraction]]:
    """Weaken exclusive case conditions for use under max aggregation.

    A case may absorb any region already covered by higher-valued cases, so
    conjuncts whose removal only adds such regions are dropped and the lowest
    case becomes ``true``.
    """
    ordered = sorted(cases, key=lambda c: -c.value)
    out: list[tuple[Formula, Fraction]] = []
    for i, c in enumerate(ordered):
        higher = disj(*(d.condition for d in ordered[:i] if d.value > c.value))
        if i == len(ordered) - 1:
            out.append((TRUE, c.value))
            continue
        parts = list(c.condition.parts) if isinstance(c.condition, logic.And) else [c.condition]
        k = 0
        while k < len(parts):
            rest = parts[:k] + parts[k + 1:]
            if not logic.satisfiable(conj(*rest, neg(parts[k]), neg(higher))):
                parts = rest
            else:
                k += 1
        out.append((conj(*parts), c.value))
    return out


def simplify(e: RelationalExpression, max_cases: int | None = None) -> RelationalExpression:
    cases = [c for c in e.cases if c.condition != FALSE and logic.satisfiable(c.condition)]
    cases = merge_values(cases)
    prefix = list(e.prefix)
    k = len(prefix)
    inner = prefix[-1][0] if prefix else None
    if inner in (Agg.MAX, Agg.MIN):
        while k > 0 and prefix[k - 1][0] is inner:
            k -= 1
        rigid = frozenset(v for _, v in prefix[:k])
        sign = 1 if inner is Agg.MAX else -1
        relaxed = relax_max_cases([Case(c.condition, sign * c.value) for c in cases])
        xs = maxform.prune(maxform.from_cases(relaxed, rigid), rigid, max_cases)
        order, new = maxform.to_cases(xs, rigid)
        prefix = prefix[:k] + [(inner, v) for v in order]
        cases = [Case(f, sign * v) for f, v in new]
    cases = [Case(logic.minimize(c.condition), c.value) for c in cases]
    used = set()
    for c in cases:
        used |= logic.variables(c.condition)
    scale = e.scale
    kept = []
    under_product = False
    for a, v in prefix:
        if v in used or a is Agg.PRODUCT or (a is Agg.SUM and under_product):
            kept.append((a, v))
        elif a is Agg.SUM:
            scale = scale * Scale(Fraction(1), (v.sort,))
        under_product = under_product or a is Agg.PRODUCT
    return RelationalExpression(tuple(kept), tuple(cases), scale)


# -- max combination -------------------------------------------------------------------


def dominates(f: RelationalExpression, g: RelationalExpression) -> bool:
    """Sufficient test for ``f >= g`` on every interpretation with nonempty sorts.

    Non-max/min variables are aligned by position and sort; max/min variables
    are standardized apart, and every jointly satisfiable pair of cases must
    have ``v_f >= v_g``.
    """
    if f.scale != g.scale or f.scale.coeff < 0:
        return False
    g = standardize_apart(g, all_names(f))
    lf = [v for a, v in f.prefix if a not in (Agg.MAX, Agg.MIN)]
    lg = [v for a, v in g.prefix if a not in (Agg.MAX, Agg.MIN)]
    kf = [(a, v.sort) for a, v in f.prefix if a not in (Agg.MAX, Agg.MIN)]
    kg = [(a, v.sort) for a, v in g.prefix if a not in (Agg.MAX, Agg.MIN)]
    if kf != kg:
        return False
    g = rename(g, dict(zip(lg, lf)))
    for cf in f.cases:
        for cg in g.cases:
            if cf.value < cg.value and logic.satisfiable(conj(cf.condition, cg.condition)):
                return False
    return True


def max_combine(f: RelationalExpression, g: RelationalExpression) -> RelationalExpression:
    safe = {Agg.MAX, Agg.MIN}
    if f.aggs <= safe and g.aggs <= safe and f.scale == g.scale:
        return apply_binary(Op.MAX, f, g)
    if dominates(f, g):
        return f
    if dominates(g, f):
        return g
    bad = sorted(a.value for a in (f.aggs | g.aggs) - safe) or ["scale"]
    raise UnsupportedCombination("max", bad[0], "no expression dominates the other")


# -- canonical form ----------------------------------------------------------------------


_MAX_CANON = 720


def canonicalize(e: RelationalExpression) -> RelationalExpression:
    """Deterministic renaming and ordering.

    Variables inside a run of identical aggregators commute; within each run
    they are ordered by sort and the naming with the smallest rendering wins.
    """
    runs: list[list[tuple[Agg, Term]]] = []
    for a, v in e.prefix:
        if runs and runs[-1][0][0] is a:
            runs[-1].append((a, v))
        else:
            runs.append([(a, v)])
    groups: list[list[Term]] = []
    for r in runs:
        by_sort: dict[str, list[Term]] = {}
        for _, v in r:
            by_sort.setdefault(v.sort, []).append(v)
        groups.extend(by_sort[s] for s in sorted(by_sort))
    taken = {t.name for t in e.free_terms() if t.kind is Kind.VAR}
    prefixes = maxform.sort_prefixes(v.sort for v in e.variables)
    counters: dict[str, int] = {}
    slot_names: list[list[Term]] = []
    for grp in groups:
        names = []
        for v in grp:
            i = counters.get(v.sort, 0)
            n = maxform.pool_name(prefixes[v.sort], i)
            while n in taken:
                i += 1
                n = maxform.pool_name(prefixes[v.sort], i)
            counters[v.sort] = i + 1
            names.append(logic.var(n, v.sort))
        slot_names.append(names)
    total = 1
    for grp in groups:
        for k in range(2, len(grp) + 1):
            total *= k
    if total <= _MAX_CANON:
        perms = itertools.product(*(itertools.permutations(g) for g in groups))
    else:
        perms = iter([tuple(tuple(g) for g in groups)])
    run_agg = [r[0][0] for r in runs for _ in sorted({v.sort for _, v in r})]
    best = None
    for perm in perms:
        m = {old: new for olds, news in zip(perm, slot_names) for old, new in zip(olds, news)}
        prefix = tuple((agg, n) for agg, news in zip(run_agg, slot_names) for n in news)
        cases = sorted((Case(apply_substitution(c.condition, m), c.value) for c in e.cases),
                       key=lambda c: (-c.value, c.condition.key))
        cand = RelationalExpression(prefix, tuple(cases), e.scale)
        text = render(cand)
        if best is None or text < best[0]:
            best = (text, cand)
    assert best is not None
    return best[1]


def equivalent_on(f: RelationalExpression, g: RelationalExpression,
                  interps: Iterable[Interpretation]) -> bool:
    return all(evaluate(f, i) == evaluate(g, i) for i in interps)


def same_structure(f: RelationalExpression, g: RelationalExpression) -> bool:
    """Equal up to variable renaming, case order and logically equivalent conditions."""
    f, g = canonicalize(f), canonicalize(g)
    if f.prefix != g.prefix or f.scale != g.scale or len(f.cases) != len(g.cases):
        return False
    rest = list(g.cases)
    for c in f.cases:
        for k, d in enumerate(rest):
            if c.value == d.value and logic.entails(c.condition, d.condition) \
                    and logic.entails(d.condition, c.condition):
                del rest[k]
                break
        else:
            return False
    return True
