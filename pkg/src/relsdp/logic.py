"""Function-free, sorted, quantifier-free logic.

Formulas are kept in negation normal form.  Conjunctions and disjunctions are
flat, deduplicated and sorted by their rendering, so two formulas built from
the same pieces compare equal regardless of construction order.

Terms come in three kinds:

* variables (``B``, ``T1``) - bound by an aggregation prefix or free in an
  open expression;
* constants (``paris``) - unique names: distinct constants denote distinct
  objects;
* parameters (``@B1``) - rigid but anonymous objects, used for action
  arguments and Skolem constants.  A parameter may equal any term of its sort.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Mapping


class LogicError(Exception):
    pass


class SortError(LogicError):
    pass


class UnboundVariableError(LogicError):
    pass


class Kind(IntEnum):
    VAR = 0
    PARAM = 1
    CONST = 2


@dataclass(frozen=True, order=True)
class Term:
    kind: Kind
    name: str
    sort: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "_h", hash((self.kind, self.name, self.sort)))

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]

    def __str__(self) -> str:
        if self.kind is Kind.PARAM:
            return "@" + self.name
        return self.name

    @property
    def is_var(self) -> bool:
        return self.kind is Kind.VAR


def var(name: str, sort: str) -> Term:
    return Term(Kind.VAR, name, sort)


def const(name: str, sort: str) -> Term:
    return Term(Kind.CONST, name, sort)


def param(name: str, sort: str) -> Term:
    return Term(Kind.PARAM, name, sort)


EQ = "="


@dataclass(frozen=True)
class Predicate:
    name: str
    sorts: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.sorts)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.sorts)})"


@dataclass(frozen=True, order=True)
class Atom:
    pred: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_h", hash((self.pred, self.args)))

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]

    @property
    def is_eq(self) -> bool:
        return self.pred == EQ

    def __str__(self) -> str:
        if self.is_eq:
            return f"{self.args[0]} = {self.args[1]}"
        return f"{self.pred}({','.join(map(str, self.args))})"

    def substitute(self, s: Mapping[Term, Term]) -> Atom:
        return Atom(self.pred, tuple(s.get(t, t) for t in self.args))


class Formula:
    """Base class for NNF formulas.  Build instances with the helpers below."""

    __slots__ = ()

    @cached_property
    def key(self) -> str:
        return self.render()

    def render(self) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    def __str__(self) -> str:
        return self.key

    def __lt__(self, other: Formula) -> bool:
        return self.key < other.key


@dataclass(frozen=True, eq=True)
class Const(Formula):
    value: bool

    def render(self) -> str:
        return "true" if self.value else "false"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True, eq=True)
class Lit(Formula):
    atom: Atom
    positive: bool = True

    def __hash__(self) -> int:
        return hash(self.atom) ^ (0 if self.positive else 0x5BD1E995)

    def render(self) -> str:
        if self.atom.is_eq:
            a, b = self.atom.args
            return f"{a} {'=' if self.positive else '!='} {b}"
        return str(self.atom) if self.positive else "~" + str(self.atom)

    def negate(self) -> Lit:
        return Lit(self.atom, not self.positive)


@dataclass(frozen=True, eq=True)
class And(Formula):
    parts: tuple[Formula, ...]

    def render(self) -> str:
        return "(" + " & ".join(p.key for p in self.parts) + ")"


@dataclass(frozen=True, eq=True)
class Or(Formula):
    parts: tuple[Formula, ...]

    def render(self) -> str:
        return "(" + " | ".join(p.key for p in self.parts) + ")"


# -- constructors -----------------------------------------------------------


def _check_sorts(pred: Predicate, args: tuple[Term, ...]) -> None:
    if len(args) != pred.arity:
        raise SortError(f"{pred.name} expects {pred.arity} arguments, got {len(args)}")
    for t, s in zip(args, pred.sorts):
        if t.sort != s:
            raise SortError(f"argument {t} of {pred.name} has sort {t.sort}, expected {s}")


def atom(pred: Predicate, *args: Term) -> Atom:
    _check_sorts(pred, args)
    return Atom(pred.name, tuple(args))


def eq_atom(a: Term, b: Term) -> Atom:
    if a.sort != b.sort:
        raise SortError(f"equality between {a}:{a.sort} and {b}:{b.sort}")
    return Atom(EQ, (a, b) if a <= b else (b, a))


def lit(a: Atom, positive: bool = True) -> Formula:
    """A literal, with trivial equalities decided on the spot."""
    if a.is_eq:
        x, y = a.args
        if x > y:
            a = Atom(EQ, (y, x))
            x, y = y, x
        if x == y:
            return TRUE if positive else FALSE
        if x.kind is Kind.CONST and y.kind is Kind.CONST:
            return FALSE if positive else TRUE
    return Lit(a, positive)


def eq(a: Term, b: Term) -> Formula:
    return lit(eq_atom(a, b))


def neq(a: Term, b: Term) -> Formula:
    return lit(eq_atom(a, b), False)


def _flatten(parts: Iterable[Formula], cls: type) -> Iterator[Formula]:
    for p in parts:
        if isinstance(p, cls):
            yield from p.parts  # type: ignore[attr-defined]
        else:
            yield p


def conj(*parts: Formula) -> Formula:
    seen: dict[str, Formula] = {}
    for p in _flatten(parts, And):
        if p is FALSE or p == FALSE:
            return FALSE
        if p == TRUE:
            continue
        seen.setdefault(p.key, p)
    lits = {p for p in seen.values() if isinstance(p, Lit)}
    if any(p.negate() in lits for p in lits):
        return FALSE
    if not seen:
        return TRUE
    if len(seen) == 1:
        return next(iter(seen.values()))
    return And(tuple(seen[k] for k in sorted(seen)))


def disj(*parts: Formula) -> Formula:
    seen: dict[str, Formula] = {}
    for p in _flatten(parts, Or):
        if p == TRUE:
            return TRUE
        if p == FALSE:
            continue
        seen.setdefault(p.key, p)
    lits = {p for p in seen.values() if isinstance(p, Lit)}
    if any(p.negate() in lits for p in lits):
        return TRUE
    if not seen:
        return FALSE
    if len(seen) == 1:
        return next(iter(seen.values()))
    return Or(tuple(seen[k] for k in sorted(seen)))


def neg(f: Formula) -> Formula:
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Lit):
        return f.negate()
    if isinstance(f, And):
        return disj(*(neg(p) for p in f.parts))
    if isinstance(f, Or):
        return conj(*(neg(p) for p in f.parts))
    raise TypeError(f)


def implies(f: Formula, g: Formula) -> Formula:
    return disj(neg(f), g)


# -- structure --------------------------------------------------------------


def atoms(f: Formula) -> set[Atom]:
    out: set[Atom] = set()
    _collect_atoms(f, out)
    return out


def _collect_atoms(f: Formula, out: set[Atom]) -> None:
    if isinstance(f, Lit):
        out.add(f.atom)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            _collect_atoms(p, out)


def terms(f: Formula) -> set[Term]:
    return {t for a in atoms(f) for t in a.args}


def variables(f: Formula) -> set[Term]:
    return {t for t in terms(f) if t.kind is Kind.VAR}


def apply_substitution(f: Formula, s: Mapping[Term, Term]) -> Formula:
    """Replace terms simultaneously; the result is re-normalised."""
    for k, v in s.items():
        if k.sort != v.sort:
            raise SortError(f"cannot substitute {v}:{v.sort} for {k}:{k.sort}")
    if not s:
        return f
    return _subst(f, s)


def _subst(f: Formula, s: Mapping[Term, Term]) -> Formula:
    if isinstance(f, Lit):
        if not any(t in s for t in f.atom.args):
            return f
        a = f.atom.substitute(s)
        if a.is_eq:
            return lit(eq_atom(*a.args), f.positive)
        return Lit(a, f.positive)
    if isinstance(f, And):
        return conj(*(_subst(p, s) for p in f.parts))
    if isinstance(f, Or):
        return disj(*(_subst(p, s) for p in f.parts))
    return f


def map_literals(f: Formula, fn) -> Formula:
    """Rebuild ``f`` with every literal replaced by ``fn(literal)``."""
    if isinstance(f, Lit):
        return fn(f)
    if isinstance(f, And):
        return conj(*(map_literals(p, fn) for p in f.parts))
    if isinstance(f, Or):
        return disj(*(map_literals(p, fn) for p in f.parts))
    return f


# -- interpretations ----------------------------------------------------------


@dataclass(frozen=True)
class Interpretation:
    """A finite relational structure.

    ``true_atoms`` holds ``(pred, obj, ...)`` tuples; every other ground atom
    is false.
    """

    objects: Mapping[str, tuple[str, ...]]
    constants: Mapping[str, str] = field(default_factory=dict)
    true_atoms: frozenset[tuple[str, ...]] = frozenset()

    def count(self, sort: str) -> int:
        return len(self.objects.get(sort, ()))

    def holds(self, pred: str, objs: tuple[str, ...]) -> bool:
        return (pred, *objs) in self.true_atoms


def _resolve(t: Term, i: Interpretation, s: Mapping[Term, str]) -> str | None:
    if t.kind is Kind.CONST:
        try:
            return i.constants[t.name]
        except KeyError:
            raise LogicError(f"constant {t.name} is not mapped by the interpretation") from None
    return s.get(t)


def eval_formula(f: Formula, i: Interpretation, s: Mapping[Term, str]) -> bool:
    v = eval3(f, i, s)
    if v is None:
        missing = sorted(str(t) for t in terms(f) if t.kind is not Kind.CONST and t not in s)
        raise UnboundVariableError(f"unbound terms {missing} in {f}")
    return v


def eval3(f: Formula, i: Interpretation, s: Mapping[Term, str]) -> bool | None:
    """Three-valued evaluation: ``None`` when the value depends on unbound terms."""
    if isinstance(f, Lit):
        objs = []
        for t in f.atom.args:
            o = _resolve(t, i, s)
            if o is None:
                return None
            objs.append(o)
        if f.atom.is_eq:
            v = objs[0] == objs[1]
        else:
            v = (f.atom.pred, *objs) in i.true_atoms
        return v if f.positive else not v
    if isinstance(f, And):
        unknown = False
        for p in f.parts:
            v = eval3(p, i, s)
            if v is False:
                return False
            if v is None:
                unknown = True
        return None if unknown else True
    if isinstance(f, Or):
        unknown = False
        for p in f.parts:
            v = eval3(p, i, s)
            if v is True:
                return True
            if v is None:
                unknown = True
        return None if unknown else False
    assert isinstance(f, Const)
    return f.value


# -- satisfiability -----------------------------------------------------------


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[Term, Term] = {}

    def find(self, t: Term) -> Term:
        p = self.parent.get(t, t)
        if p == t:
            return t
        r = self.find(p)
        self.parent[t] = r
        return r

    def union(self, a: Term, b: Term) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def consistent(literals: Iterable[Lit]) -> bool:
    """Theory check for a set of literals.

    Equality is a congruence over the terms, distinct constants differ, and
    atoms whose arguments are pairwise equal share a truth value.  Variables
    and parameters are free to coincide with anything of their sort.  For
    literal sets this check is complete.
    """
    lits = list(literals)
    uf = _UnionFind()
    for l in lits:
        if l.positive and l.atom.is_eq:
            uf.union(*l.atom.args)
    const_of: dict[Term, Term] = {}
    for t in list(uf.parent):
        if t.kind is Kind.CONST:
            r = uf.find(t)
            if const_of.setdefault(r, t) != t:
                return False
    seen: dict[tuple, bool] = {}
    for l in lits:
        args = tuple(uf.find(t) for t in l.atom.args)
        if l.atom.is_eq:
            if not l.positive and args[0] == args[1]:
                return False
            continue
        k = (l.atom.pred, args)
        if seen.setdefault(k, l.positive) != l.positive:
            return False
    return True


def satisfiable(f: Formula) -> bool:
    """DPLL-style search over atoms, with the equality theory checked on each
    partial assignment."""
    if isinstance(f, Const):
        return f.value
    order = sorted(atoms(f))
    return _dpll(f, order, 0, {})


def _partial(f: Formula, assign: Mapping[Atom, bool]) -> bool | None:
    if isinstance(f, Lit):
        v = assign.get(f.atom)
        if v is None:
            return None
        return v if f.positive else not v
    if isinstance(f, And):
        unknown = False
        for p in f.parts:
            v = _partial(p, assign)
            if v is False:
                return False
            if v is None:
                unknown = True
        return None if unknown else True
    if isinstance(f, Or):
        unknown = False
        for p in f.parts:
            v = _partial(p, assign)
            if v is True:
                return True
            if v is None:
                unknown = True
        return None if unknown else False
    return f.value  # type: ignore[attr-defined]


def _dpll(f: Formula, order: list[Atom], i: int, assign: dict[Atom, bool]) -> bool:
    v = _partial(f, assign)
    if v is False:
        return False
    if not consistent(Lit(a, b) for a, b in assign.items()):
        return False
    if v is True:
        return True
    while order[i] in assign:
        i += 1
    a = order[i]
    for value in (True, False):
        assign[a] = value
        if _dpll(f, order, i + 1, assign):
            del assign[a]
            return True
        del assign[a]
    return False


def entails(f: Formula, g: Formula) -> bool:
    return not satisfiable(conj(f, neg(g)))


def valid(f: Formula) -> bool:
    return not satisfiable(neg(f))


# -- normal forms -------------------------------------------------------------


def dnf(f: Formula, limit: int = 100_000) -> list[frozenset[Lit]]:
    """Disjunctive normal form as a list of literal sets (possibly overlapping).

    Conjunctions containing a complementary pair are dropped on the fly.
    """
    if isinstance(f, Const):
        return [frozenset()] if f.value else []
    if isinstance(f, Lit):
        return [frozenset((f,))]
    if isinstance(f, Or):
        out: list[frozenset[Lit]] = []
        for p in f.parts:
            out.extend(dnf(p, limit))
        return _dedupe(out)
    assert isinstance(f, And)
    acc: list[frozenset[Lit]] = [frozenset()]
    for p in f.parts:
        nxt = []
        for right in dnf(p, limit):
            for left in acc:
                merged = left | right
                if any(l.negate() in merged for l in right):
                    continue
                nxt.append(merged)
        acc = _dedupe(nxt)
        if len(acc) > limit:
            raise LogicError(f"DNF expansion exceeded {limit} conjunctions")
        if not acc:
            return []
    return acc


def _dedupe(cs: list[frozenset[Lit]]) -> list[frozenset[Lit]]:
    return list(dict.fromkeys(cs))


def conj_of(lits: Iterable[Lit]) -> Formula:
    return conj(*lits)


@lru_cache(maxsize=50_000)
def minimize(f: Formula, max_atoms: int = 7) -> Formula:
    """Two-level minimisation of a (propositional-with-equality) formula.

    Theory-inconsistent atom assignments are treated as don't-cares.  Formulas
    with more than ``max_atoms`` atoms are returned unchanged.
    """
    if isinstance(f, (Const, Lit)):
        return f
    order = sorted(atoms(f))
    n = len(order)
    if n > max_atoms:
        return f
    from sympy import symbols
    from sympy.logic import SOPform

    on: list[list[int]] = []
    dc: list[list[int]] = []
    for bits in itertools.product((0, 1), repeat=n):
        assign = dict(zip(order, map(bool, bits)))
        if not consistent(Lit(a, b) for a, b in assign.items()):
            dc.append(list(bits))
        elif _partial(f, assign):
            on.append(list(bits))
    if not on:
        return FALSE
    if len(on) + len(dc) == 2**n:
        return TRUE
    syms = symbols(f"x0:{n}")
    sop = SOPform(syms, on, dc)
    out = _from_sympy(sop, dict(zip(syms, order)))
    return out if len(out.key) <= len(f.key) else f


def _from_sympy(e, table) -> Formula:
    from sympy.logic.boolalg import And as SAnd, Not as SNot, Or as SOr, BooleanTrue, BooleanFalse

    if isinstance(e, BooleanTrue):
        return TRUE
    if isinstance(e, BooleanFalse):
        return FALSE
    if isinstance(e, SNot):
        return neg(_from_sympy(e.args[0], table))
    if isinstance(e, SAnd):
        return conj(*(_from_sympy(a, table) for a in e.args))
    if isinstance(e, SOr):
        return disj(*(_from_sympy(a, table) for a in e.args))
    return lit(table[e])
