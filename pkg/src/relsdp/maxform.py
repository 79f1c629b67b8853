"""Existential case lists: the normal form of max-aggregated blocks.

Under a block of ``max`` aggregations the value of an expression is the largest
case value whose condition is satisfiable for *some* assignment of the block
variables.  Cases can therefore be treated one at a time, each as an
existentially closed conjunction of literals, which need not be mutually
exclusive.  This is what makes aggressive reduction possible:

* equality elimination on existential variables,
* dropping a case implied (by theta-subsumption) by a case of at least the
  same value,
* dropping a literal ``L`` from a case when the case with ``L`` flipped is
  already covered by a case of at least the same value.

Parameters (``@X``), constants and any variables listed as *rigid* are fixed
terms.  Equalities against parameters are never eliminated; that happens only
once the parameters become variables.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from . import logic
from .logic import (
    FALSE,
    TRUE,
    Formula,
    Interpretation,
    Kind,
    Lit,
    Term,
    conj,
    disj,
    eq_atom,
    lit,
    neg,
)


@dataclass(frozen=True)
class XCase:
    lits: frozenset[Lit]
    value: Fraction
    binding: tuple[Term, ...] = ()

    def render(self) -> str:
        body = " & ".join(sorted(l.key for l in self.lits)) or "true"
        return f"{body} : {self.value}"


def existential(c: XCase, rigid: frozenset[Term] = frozenset()) -> set[Term]:
    out = {t for l in c.lits for t in l.atom.args if t.kind is Kind.VAR and t not in rigid}
    out.update(t for t in c.binding if t.kind is Kind.VAR and t not in rigid)
    return out


# -- case normalisation -------------------------------------------------------


def _elim_key(t: Term) -> tuple:
    return (t.name.startswith("_"), len(t.name), t.name)


def _pick(a: Term, b: Term, rigid: frozenset[Term]) -> tuple[Term, Term] | None:
    ea = a.kind is Kind.VAR and a not in rigid
    eb = b.kind is Kind.VAR and b not in rigid
    if ea and eb:
        return (a, b) if _elim_key(a) > _elim_key(b) else (b, a)
    if ea and b.kind is not Kind.PARAM:
        return a, b
    if eb and a.kind is not Kind.PARAM:
        return b, a
    return None


def subst_lit(l: Lit, s: Mapping[Term, Term]) -> Formula:
    a = l.atom.substitute(s)
    if a.is_eq:
        return lit(eq_atom(*a.args), l.positive)
    return Lit(a, l.positive)


def normalize(c: XCase, rigid: frozenset[Term] = frozenset()) -> XCase | None:
    """Eliminate existential equalities; ``None`` if the case is unsatisfiable."""
    out = _normalize(c.lits, c.binding, rigid)
    return None if out is None else XCase(out[0], c.value, out[1])


@lru_cache(maxsize=500_000)
def _normalize(lits0: frozenset[Lit], binding: tuple[Term, ...], rigid: frozenset[Term]):
    lits = set(lits0)
    while True:
        for l in lits:
            if l.positive and l.atom.is_eq:
                pick = _pick(*l.atom.args, rigid)
                if pick is not None:
                    break
        else:
            break
        x, t = pick
        s = {x: t}
        nxt: set[Lit] = set()
        for m in lits:
            if m is l:
                continue
            f = subst_lit(m, s) if x in m.atom.args else m
            if f == FALSE:
                return None
            if f == TRUE:
                continue
            nxt.add(f)  # type: ignore[arg-type]
        lits = nxt
        binding = tuple(s.get(b, b) for b in binding)
    for l in lits:
        if l.negate() in lits:
            return None
    if not logic.consistent(lits):
        return None
    return frozenset(lits), binding


# -- subsumption ----------------------------------------------------------------


@lru_cache(maxsize=200_000)
def _sig(c: frozenset[Lit]) -> frozenset[tuple[str, bool]]:
    return frozenset((l.atom.pred, l.positive) for l in c)


@lru_cache(maxsize=200_000)
def _index(c: frozenset[Lit]) -> dict[tuple[str, bool], list[tuple[Term, ...]]]:
    """Literals of ``c`` by (predicate, sign), closed under the equalities of ``c``."""
    classes: dict[Term, set[Term]] = {}
    for l in c:
        if l.positive and l.atom.is_eq:
            a, b = l.atom.args
            merged = classes.get(a, {a}) | classes.get(b, {b})
            for t in merged:
                classes[t] = merged
    index: dict[tuple[str, bool], list[tuple[Term, ...]]] = {}
    for l in c:
        key = (l.atom.pred, l.positive)
        options = [sorted(classes.get(t, {t})) for t in l.atom.args]
        combos = itertools.product(*options)
        bucket = index.setdefault(key, [])
        for args in itertools.islice(combos, 64):
            if args not in bucket:
                bucket.append(args)
    return index


@lru_cache(maxsize=2_000_000)
def subsumes(d: frozenset[Lit], c: frozenset[Lit], rigid: frozenset[Term] = frozenset()) -> bool:
    """Is there a substitution theta of d's existential variables with d.theta a subset of c?

    If so, the existential closure of ``c`` entails that of ``d``.
    """
    if not _sig(d) <= _sig(c):
        return False
    index = _index(c)
    dl = sorted(d, key=lambda l: len(index[(l.atom.pred, l.positive)]))
    return _match(dl, 0, index, {}, rigid)


def _unify(args: Sequence[Term], target: Sequence[Term], theta: dict[Term, Term],
           rigid: frozenset[Term]) -> dict[Term, Term] | None:
    new = dict(theta)
    for a, b in zip(args, target):
        if a.kind is Kind.VAR and a not in rigid:
            bound = new.get(a)
            if bound is None:
                if a.sort != b.sort:
                    return None
                new[a] = b
            elif bound != b:
                return None
        elif a != b:
            return None
    return new


def _match(dl: list[Lit], i: int, index, theta: dict[Term, Term], rigid) -> bool:
    if i == len(dl):
        return True
    l = dl[i]
    for target in index[(l.atom.pred, l.positive)]:
        orders = [target, target[::-1]] if l.atom.is_eq else [target]
        for t in orders:
            nxt = _unify(l.atom.args, t, theta, rigid)
            if nxt is not None and _match(dl, i + 1, index, nxt, rigid):
                return True
    return False


# -- canonical naming -----------------------------------------------------------


def sort_prefixes(sorts: Iterable[str]) -> dict[str, str]:
    sorts = sorted(set(sorts))
    initials: dict[str, list[str]] = {}
    for s in sorts:
        initials.setdefault(s[0].upper(), []).append(s)
    out = {}
    for s in sorts:
        out[s] = s[0].upper() if len(initials[s[0].upper()]) == 1 else s[0].upper() + s[1:]
    return out


def pool_name(prefix: str, i: int) -> str:
    return prefix if i == 0 else f"{prefix}{i + 1}"


_MAX_PERMUTATIONS = 720


def rename_case(c: XCase, rigid: frozenset[Term], prefixes: Mapping[str, str]) -> XCase:
    """Rename existential variables to pool names (B, B2, ... per sort), picking
    the assignment with the smallest rendering so equal cases collide."""
    lits, binding = _rename(c.lits, c.binding, rigid, tuple(sorted(prefixes.items())))
    return XCase(lits, c.value, binding)


@lru_cache(maxsize=500_000)
def _rename(lits0: frozenset[Lit], binding: tuple[Term, ...], rigid: frozenset[Term],
            prefix_items: tuple[tuple[str, str], ...]):
    prefixes = dict(prefix_items)
    c = XCase(lits0, Fraction(0), binding)
    ev = existential(c, rigid)
    if not ev:
        return lits0, binding
    taken = {t.name for t in rigid}
    by_sort: dict[str, list[Term]] = {}
    for t in sorted(ev):
        by_sort.setdefault(t.sort, []).append(t)
    names: dict[str, list[str]] = {}
    for s, vs in by_sort.items():
        pool = []
        i = 0
        while len(pool) < len(vs):
            n = pool_name(prefixes.get(s, s[0].upper()), i)
            if n not in taken:
                pool.append(n)
            i += 1
        names[s] = pool
    sorts = sorted(by_sort)
    total = 1
    for s in sorts:
        for k in range(2, len(by_sort[s]) + 1):
            total *= k
    if total <= _MAX_PERMUTATIONS:
        candidates = itertools.product(*(itertools.permutations(by_sort[s]) for s in sorts))
    else:
        candidates = iter([tuple(_first_appearance(c, by_sort[s]) for s in sorts)])
    best = None
    for perm in candidates:
        m = {}
        for s, order in zip(sorts, perm):
            for t, n in zip(order, names[s]):
                m[t] = logic.var(n, s)
        lits = frozenset(subst_lit(l, m) for l in c.lits)  # type: ignore[misc]
        key = (sorted(l.key for l in lits), tuple(str(m.get(b, b)) for b in c.binding))
        if best is None or key < best[0]:
            best = (key, lits, tuple(m.get(b, b) for b in c.binding))
    assert best is not None
    return best[1], best[2]


def _first_appearance(c: XCase, vs: list[Term]) -> list[Term]:
    order: list[Term] = []
    for l in sorted(c.lits, key=lambda l: (l.atom.pred, l.positive, len(l.atom.args))):
        for t in l.atom.args:
            if t in vs and t not in order:
                order.append(t)
    order += [t for t in vs if t not in order]
    return order


# -- pruning ---------------------------------------------------------------------


class CaseLimitExceeded(Exception):
    pass


def prune(cases: Iterable[XCase], rigid: frozenset[Term] = frozenset(),
          limit: int | None = None, drop: bool = True) -> list[XCase]:
    """Normalise and remove redundancy; the max-semantics is preserved.

    With ``drop`` false only duplicates and subsumed cases are removed, which
    is cheaper and enough for intermediate results.
    """
    norm = [n for n in (normalize(c, rigid) for c in cases) if n is not None]
    norm = _dominance_filter(norm, rigid)
    prefixes = sort_prefixes(t.sort for c in norm for t in existential(c, rigid))
    work = _dominance_filter([rename_case(c, rigid, prefixes) for c in norm], rigid)
    changed = drop
    while changed:
        changed = False
        nxt = []
        for c in work:
            better = [k for k in work if k.value >= c.value]
            d = _drop_literals(c, better, rigid)
            if d is not c:
                changed = True
                d = rename_case(d, rigid, prefixes)
            nxt.append(d)
        work = _dominance_filter(nxt, rigid)
    if limit is not None and len(work) > limit:
        raise CaseLimitExceeded(f"{len(work)} cases exceed the cap of {limit}")
    return work


def _drop_literals(c: XCase, better: list[XCase], rigid: frozenset[Term]) -> XCase:
    """Drop literals whose flipped case is already covered at least as well."""
    k = 0
    lits = sorted(c.lits, key=lambda l: l.key)
    while k < len(lits):
        l = lits[k]
        rest = c.lits - {l}
        flip = normalize(XCase(rest | {l.negate()}, c.value), rigid)
        if flip is None or any(subsumes(b.lits, flip.lits, rigid) for b in better):
            shorter = normalize(XCase(rest, c.value, c.binding), rigid)
            assert shorter is not None
            c = shorter
            lits = sorted(c.lits, key=lambda l: l.key)
            k = 0
        else:
            k += 1
    return c


def _dominance_filter(cases: list[XCase], rigid: frozenset[Term]) -> list[XCase]:
    ordered = sorted(dict.fromkeys(cases), key=lambda c: (-c.value, len(c.lits), c.render()))
    kept: list[XCase] = []
    for c in ordered:
        if any(k.value >= c.value and subsumes(k.lits, c.lits, rigid) for k in kept):
            continue
        kept.append(c)
    return kept


# -- algebra -----------------------------------------------------------------------


def fresh_apart(cases: Sequence[XCase], avoid: set[str], rigid: frozenset[Term]) -> list[XCase]:
    """Rename existential variables so none of their names is in ``avoid``."""
    out = []
    for c in cases:
        m = {}
        for t in existential(c, rigid):
            if t.name in avoid:
                n = t.name
                while n in avoid:
                    n += "'"
                m[t] = logic.var(n, t.sort)
        if m:
            c = XCase(frozenset(subst_lit(l, m) for l in c.lits),  # type: ignore[misc]
                      c.value, tuple(m.get(b, b) for b in c.binding))
        out.append(c)
    return out


def names(cases: Iterable[XCase]) -> set[str]:
    return {t.name for c in cases for l in c.lits for t in l.atom.args} | {
        t.name for c in cases for t in c.binding}


def plus(f: Sequence[XCase], g: Sequence[XCase], rigid: frozenset[Term] = frozenset(),
         limit: int | None = None, drop: bool = True) -> list[XCase]:
    """max_X f + max_Y g = max_{X,Y} (f + g) after standardizing apart."""
    g = fresh_apart(g, names(f), rigid)
    out = []
    for a in f:
        for b in g:
            n = normalize(XCase(a.lits | b.lits, a.value + b.value, a.binding or b.binding), rigid)
            if n is not None:
                out.append(n)
    return prune(out, rigid, limit, drop)


def times_open(f: Sequence[XCase], open_cases: Sequence[tuple[frozenset[Lit], Fraction]],
               rigid: frozenset[Term] = frozenset()) -> list[XCase]:
    """Multiply by a variable-free, non-negative case expression."""
    out = []
    for lits, p in open_cases:
        if p < 0:
            raise ValueError("open factor must be non-negative under max aggregation")
        for c in f:
            n = normalize(XCase(c.lits | lits, c.value * p, c.binding), rigid)
            if n is not None:
                out.append(n)
    return out


def scale(f: Sequence[XCase], k: Fraction) -> list[XCase]:
    if k < 0:
        raise ValueError("negative scaling does not commute with max")
    return [XCase(c.lits, c.value * k, c.binding) for c in f]


# -- conversion ---------------------------------------------------------------------


def from_cases(cases: Iterable[tuple[Formula, Fraction]], rigid: frozenset[Term] = frozenset()
               ) -> list[XCase]:
    out = []
    for f, v in cases:
        for lits in logic.dnf(f):
            out.append(XCase(lits, Fraction(v)))
    return out


def to_cases(cases: Sequence[XCase], rigid: frozenset[Term] = frozenset()
             ) -> tuple[list[Term], list[tuple[Formula, Fraction]]]:
    """Rebuild mutually exclusive, exhaustive cases over a shared max prefix.

    Cases are chained by decreasing value; the lowest value takes the
    complement of everything above it.
    """
    groups: dict[Fraction, list[Formula]] = {}
    for c in sorted(cases, key=lambda c: -c.value):
        groups.setdefault(c.value, []).append(conj(*c.lits))
    values = sorted(groups, reverse=True)
    out: list[tuple[Formula, Fraction]] = []
    above: list[Formula] = []
    for i, v in enumerate(values):
        cond = disj(*groups[v])
        if i == len(values) - 1:
            out.append((neg(disj(*above)), v))
        else:
            out.append((conj(cond, *(neg(a) for a in above)), v))
        above.append(cond)
    order: list[Term] = []
    for c in sorted(cases, key=lambda c: -c.value):
        for t in sorted(existential(c, rigid)):
            if t not in order:
                order.append(t)
    return order, out


# -- evaluation ---------------------------------------------------------------------


def exists(lits: Iterable[Lit], interp: Interpretation, binding: Mapping[Term, str]) -> bool:
    lits = list(lits)
    free = []
    for l in lits:
        for t in l.atom.args:
            if t.kind is not Kind.CONST and t not in binding and t not in free:
                free.append(t)
    return _search(lits, free, 0, interp, dict(binding))


def _search(lits, free, i, interp, binding) -> bool:
    for l in lits:
        if logic.eval3(l, interp, binding) is False:
            return False
    if i == len(free):
        return True
    t = free[i]
    for o in interp.objects.get(t.sort, ()):
        binding[t] = o
        if _search(lits, free, i + 1, interp, binding):
            del binding[t]
            return True
    binding.pop(t, None)
    return False


def evaluate(cases: Sequence[XCase], interp: Interpretation,
             binding: Mapping[Term, str] | None = None) -> Fraction:
    binding = binding or {}
    for c in sorted(cases, key=lambda c: -c.value):
        if exists(c.lits, interp, binding):
            return c.value
    raise ValueError("existential cases are not exhaustive on this interpretation")
