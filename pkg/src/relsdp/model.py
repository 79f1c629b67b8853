"""Relational MDP descriptions and the add/delete-list front end.

Action parameters are ``PARAM`` terms (rendered ``@B``); they stay fixed while a
Q-function is built and become max-aggregated variables during object
maximization.  TVD formal arguments are variables named ``_1``, ``_2``, ...
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

from . import logic
from .logic import FALSE, TRUE, Atom, Formula, Kind, Predicate, Term, conj, disj, neg
from .relexpr import Case, RelationalExpression, check_invariants, ExpressionError

WILDCARD = "*"

GOAL = "goal"
ACCUMULATE = "accumulate"


class ModelError(Exception):
    pass


def wildcard(sort: str) -> Term:
    return Term(Kind.VAR, WILDCARD, sort)


def is_wildcard(t: Term) -> bool:
    return t.kind is Kind.VAR and t.name == WILDCARD


@dataclass(frozen=True)
class Tvd:
    """Next-state truth of ``pred(formals)``: true exactly when ``positive`` holds."""

    pred: Predicate
    formals: tuple[Term, ...]
    positive: Formula

    def instantiate(self, args: Sequence[Term]) -> Formula:
        return logic.apply_substitution(self.positive, dict(zip(self.formals, args)))


@dataclass(frozen=True)
class ActionVariant:
    name: str
    action: str
    choice_prob: RelationalExpression
    tvds: Mapping[str, Tvd] = field(hash=False, compare=True)

    def tvd(self, pred: Predicate) -> Tvd:
        t = self.tvds.get(pred.name)
        if t is None:
            f = formals(pred)
            return Tvd(pred, f, logic.lit(logic.atom(pred, *f)))
        return t


@dataclass(frozen=True)
class PstripsAction:
    name: str
    params: tuple[Term, ...]
    prob_cases: tuple[tuple[Formula, Fraction], ...]
    add: tuple[Atom, ...] = ()
    delete: tuple[Atom, ...] = ()


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[Term, ...]
    variants: tuple[ActionVariant, ...]
    source: PstripsAction | None = None

    def rename_params(self, names: Mapping[str, str]) -> ActionSchema:
        m = {p: logic.param(names.get(p.name, p.name), p.sort) for p in self.params}
        return substitute_schema(self, m)


@dataclass(frozen=True)
class ExogenousEvent:
    """A per-object event of one sort, occurring independently after each step."""

    sort: str
    param: Term
    prob: Fraction
    add: tuple[Atom, ...] = ()
    delete: tuple[Atom, ...] = ()

    def as_action(self) -> PstripsAction:
        return PstripsAction(f"exo_{self.sort}", (self.param,), ((TRUE, self.prob),),
                             self.add, self.delete)


@dataclass(frozen=True)
class RmdpSpec:
    sorts: Mapping[str, tuple[str, ...]]
    predicates: Mapping[str, Predicate]
    actions: tuple[ActionSchema, ...]
    reward: RelationalExpression
    discount: Fraction = Fraction(9, 10)
    mode: str = ACCUMULATE
    exogenous: tuple[ExogenousEvent, ...] = ()

    @property
    def constants(self) -> dict[str, str]:
        return {c: s for s, cs in self.sorts.items() for c in cs}

    def action(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def with_mode(self, mode: str) -> RmdpSpec:
        return replace(self, mode=mode)


def formals(pred: Predicate) -> tuple[Term, ...]:
    return tuple(logic.var(f"_{i + 1}", s) for i, s in enumerate(pred.sorts))


def substitute_schema(a: ActionSchema, m: Mapping[Term, Term]) -> ActionSchema:
    def sub(f: Formula) -> Formula:
        return logic.apply_substitution(f, m)

    variants = []
    for v in a.variants:
        cp = RelationalExpression((), tuple(Case(sub(c.condition), c.value)
                                            for c in v.choice_prob.cases))
        tvds = {k: Tvd(t.pred, t.formals, sub(t.positive)) for k, t in v.tvds.items()}
        variants.append(ActionVariant(v.name, v.action, cp, tvds))
    return ActionSchema(a.name, tuple(m.get(p, p) for p in a.params), tuple(variants), a.source)


# -- compilation ---------------------------------------------------------------------


def _matches(formal: Sequence[Term], args: Sequence[Term]) -> Formula:
    return conj(*(logic.eq(y, t) for y, t in zip(formal, args) if not is_wildcard(t)))


def _success_tvd(pred: Predicate, a: PstripsAction, pre: Formula, guard_delete: bool) -> Tvd:
    y = formals(pred)
    now = logic.lit(logic.atom(pred, *y))
    dels = [_matches(y, d.args) for d in a.delete if d.pred == pred.name]
    if guard_delete:
        dels = [conj(d, pre) for d in dels]
    adds = [conj(_matches(y, d.args), pre) for d in a.add if d.pred == pred.name]
    kept = conj(now, *(neg(d) for d in dels))
    return Tvd(pred, y, disj(kept, *adds))


def compile_pstrips(a: PstripsAction, predicates: Mapping[str, Predicate]) -> ActionSchema:
    """Turn success probability cases and add/delete lists into action variants.

    A stochastic action yields a success variant (effects applied) and a
    failure variant (nothing changes).  When every probability is 0 or 1 the
    action is deterministic with conditional effects and has one variant.
    """
    for at in a.add + a.delete:
        if at.pred not in predicates:
            raise ModelError(f"action {a.name}: undeclared predicate {at.pred}")
    probs = [Fraction(p) for _, p in a.prob_cases]
    for p in probs:
        if not 0 <= p <= 1:
            raise ModelError(f"action {a.name}: probability {p} outside [0, 1]")
    pre = disj(*(f for f, p in a.prob_cases if p > 0))
    touched = sorted({at.pred for at in a.add + a.delete})
    if all(p in (0, 1) for p in probs):
        tvds = {n: _success_tvd(predicates[n], a, pre, True) for n in touched}
        one = RelationalExpression((), (Case(TRUE, Fraction(1)),))
        return ActionSchema(a.name, a.params, (ActionVariant(a.name, a.name, one, tvds),), a)
    succ = RelationalExpression((), tuple(Case(f, p) for f, p in a.prob_cases))
    fail = RelationalExpression((), tuple(Case(f, 1 - p) for f, p in a.prob_cases))
    tvds = {n: _success_tvd(predicates[n], a, pre, False) for n in touched}
    return ActionSchema(a.name, a.params, (
        ActionVariant(a.name + "S", a.name, succ, tvds),
        ActionVariant(a.name + "F", a.name, fail, {}),
    ), a)


def compile_exogenous(e: ExogenousEvent, predicates: Mapping[str, Predicate]) -> ActionSchema:
    """The event as a two-variant action on one object: occur or stay."""
    a = e.as_action()
    pre = TRUE
    tvds = {n: _success_tvd(predicates[n], a, pre, False)
            for n in sorted({at.pred for at in a.add + a.delete})}
    occur = RelationalExpression((), (Case(TRUE, e.prob),))
    stay = RelationalExpression((), (Case(TRUE, 1 - e.prob),))
    variants = [ActionVariant(a.name + "_occur", a.name, occur, tvds)]
    if e.prob < 1:
        variants.append(ActionVariant(a.name + "_stay", a.name, stay, {}))
    if e.prob == 0:
        variants = [ActionVariant(a.name + "_stay", a.name, stay, {})]
    return ActionSchema(a.name, a.params, tuple(variants), a)


# -- validation ------------------------------------------------------------------------


def probability_sum_violation(a: ActionSchema) -> str | None:
    """Check that variant probabilities add to 1 for every parameter binding."""
    combos: list[tuple[Formula, Fraction]] = [(TRUE, Fraction(0))]
    for v in a.variants:
        nxt = []
        for f, total in combos:
            for c in v.choice_prob.cases:
                g = conj(f, c.condition)
                if g != FALSE and logic.satisfiable(g):
                    nxt.append((g, total + c.value))
        combos = nxt
    for f, total in combos:
        if total != 1:
            return f"action {a.name}: variant probabilities sum to {total} when {f}"
    return None


def validate_spec(spec: RmdpSpec) -> list[str]:
    out: list[str] = []
    if not spec.actions:
        out.append("at least one action is required")
    if not 0 < spec.discount <= 1:
        out.append(f"discount {spec.discount} outside (0, 1]")
    if spec.mode not in (GOAL, ACCUMULATE):
        out.append(f"unknown backup mode {spec.mode!r}")
    for p in spec.predicates.values():
        for s in p.sorts:
            if s not in spec.sorts:
                out.append(f"predicate {p.name}: undeclared sort {s}")
    consts = spec.constants
    for a in spec.actions:
        params = set(a.params)
        for v in a.variants:
            cp = v.choice_prob
            if cp.prefix:
                out.append(f"variant {v.name}: choice probability has an aggregation prefix")
            for c in cp.cases:
                if not 0 <= c.value <= 1:
                    out.append(f"variant {v.name}: probability {c.value} outside [0, 1]")
                out += _stray(f"variant {v.name} probability", c.condition, params, consts)
            try:
                check_invariants(cp, params)
            except ExpressionError as err:
                out.append(f"variant {v.name}: {err}")
            for name, t in v.tvds.items():
                if name not in spec.predicates:
                    out.append(f"variant {v.name}: TVD for undeclared predicate {name}")
                out += _stray(f"variant {v.name} TVD {name}", t.positive,
                              params | set(t.formals), consts)
        msg = probability_sum_violation(a)
        if msg:
            out.append(msg)
        if a.source is not None:
            adds = {str(x) for x in a.source.add}
            for d in a.source.delete:
                if str(d) in adds:
                    out.append(f"action {a.name}: {d} is both added and deleted")
    try:
        check_invariants(spec.reward)
    except ExpressionError as err:
        out.append(f"reward: {err}")
    for _, v in spec.reward.prefix:
        if v.sort not in spec.sorts:
            out.append(f"reward: undeclared sort {v.sort}")
    out += _stray("reward", disj(*(c.condition for c in spec.reward.cases)),
                  set(spec.reward.variables), consts)
    seen = set()
    for e in spec.exogenous:
        if e.sort in seen:
            out.append(f"more than one exogenous event for sort {e.sort}")
        seen.add(e.sort)
        if not 0 <= e.prob <= 1:
            out.append(f"exogenous event on {e.sort}: probability {e.prob} outside [0, 1]")
    return out


def _stray(where: str, f: Formula, allowed: set[Term], consts: Mapping[str, str]) -> list[str]:
    out = []
    for t in sorted(logic.terms(f)):
        if t.kind is Kind.CONST:
            if consts.get(t.name) != t.sort:
                out.append(f"{where}: undeclared constant {t.name}")
        elif t not in allowed:
            out.append(f"{where}: term {t} is not a parameter or formal argument")
    return out
