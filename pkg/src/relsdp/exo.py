"""Additive rewards with independent per-object exogenous events.

A sum over objects is rewritten as ``|S| * avg``, which (unlike sum) is safe
for the agent's max.  Before each agent backup the averaged variable is
replaced by a fixed object ``c``, the event centred at ``c`` is regressed, and
``c`` is turned back into the averaged variable.  Events on other objects are
not accounted for, so the result approximates the true value from below.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from . import logic
from .logic import Term
from .model import ACCUMULATE, GOAL, ActionSchema, RmdpSpec, compile_exogenous, substitute_schema
from .relexpr import (Agg, Op, RelationalExpression, Scale, UnsupportedCombination, apply_binary,
                      canonicalize, max_combine, simplify)
from .sdp import (DEFAULT_MAX_CASES, SolveError, ValueFunction, backup_action, object_maximize,
                  regress)

SKOLEM = "c"


class ApproximationFailure(SolveError):
    """No action's Q-function dominates the others, so their max is not representable."""


@dataclass(frozen=True)
class SkolemGrounding:
    variable: Term
    constant: Term
    position: int
    grounded: RelationalExpression


def sum_to_avg(e: RelationalExpression) -> RelationalExpression:
    """``sum_X f`` as ``|S| * avg_X f`` where ``S`` is the sort of ``X``."""
    if not e.prefix or e.prefix[0][0] is not Agg.SUM:
        raise UnsupportedCombination("sum_to_avg", e.prefix[0][0].value if e.prefix else "none",
                                     "prefix must start with sum")
    v = e.prefix[0][1]
    return RelationalExpression(((Agg.AVG, v),) + e.prefix[1:], e.cases,
                                e.scale * Scale(Fraction(1), (v.sort,)))


def avg_to_sum(e: RelationalExpression) -> RelationalExpression:
    """Inverse of :func:`sum_to_avg`."""
    if not e.prefix or e.prefix[0][0] is not Agg.AVG or e.prefix[0][1].sort not in e.scale.sorts:
        raise UnsupportedCombination("avg_to_sum", e.prefix[0][0].value if e.prefix else "none",
                                     "prefix must start with a scaled avg")
    v = e.prefix[0][1]
    sorts = list(e.scale.sorts)
    sorts.remove(v.sort)
    return RelationalExpression(((Agg.SUM, v),) + e.prefix[1:], e.cases,
                                Scale(e.scale.coeff, tuple(sorts)))


def averaged_variable(e: RelationalExpression, sort: str) -> int:
    for i, (a, v) in enumerate(e.prefix):
        if a is Agg.AVG and v.sort == sort and sort in e.scale.sorts:
            return i
    raise UnsupportedCombination("exogenous", "avg", f"no scaled avg over sort {sort}")


def skolemize(e: RelationalExpression, sort: str) -> SkolemGrounding:
    i = averaged_variable(e, sort)
    v = e.prefix[i][1]
    c = logic.param(SKOLEM, sort)
    cases = tuple(type(k)(logic.apply_substitution(k.condition, {v: c}), k.value) for k in e.cases)
    grounded = RelationalExpression(e.prefix[:i] + e.prefix[i + 1:], cases, e.scale)
    return SkolemGrounding(v, c, i, grounded)


def lift(g: SkolemGrounding, e: RelationalExpression | None = None) -> RelationalExpression:
    """Replace the fixed object by the averaged variable again.

    The variable goes innermost in the prefix, after any max variables the
    regression introduced, so that each object is averaged under the outer
    choices.
    """
    e = g.grounded if e is None else e
    names = {t.name for t in e.variables}
    v = g.variable
    if v.name in names:
        v = logic.var(next(f"{v.name}{k}" for k in range(2, 1000) if f"{v.name}{k}" not in names),
                      v.sort)
    cases = tuple(type(k)(logic.apply_substitution(k.condition, {g.constant: v}), k.value)
                  for k in e.cases)
    return RelationalExpression(e.prefix + ((Agg.AVG, v),), cases, e.scale)


def event_schema(spec: RmdpSpec, sort: str) -> ActionSchema:
    for ev in spec.exogenous:
        if ev.sort == sort:
            a = compile_exogenous(ev, spec.predicates)
            return substitute_schema(a, {a.params[0]: logic.param(SKOLEM, sort)})
    raise UnsupportedCombination("exogenous", sort, f"no exogenous event for sort {sort}")


def regress_exogenous(e: RelationalExpression, spec: RmdpSpec, sort: str | None = None,
                      max_cases: int | None = None) -> RelationalExpression:
    """Expected value of ``e`` after the event on one object of the averaged sort."""
    if not spec.exogenous:
        return e
    sort = sort or spec.exogenous[0].sort
    g = skolemize(e, sort)
    schema = event_schema(spec, sort)
    total = None
    for variant in schema.variants:
        r = regress(g.grounded, variant, spec.predicates)
        term = simplify(apply_binary(Op.TIMES, r, variant.choice_prob), max_cases)
        total = term if total is None else simplify(apply_binary(Op.PLUS, total, term), max_cases)
    assert total is not None
    return canonicalize(simplify(lift(g, total), max_cases))


def _additive_spec(spec: RmdpSpec) -> RmdpSpec:
    reward = spec.reward
    if reward.prefix and reward.prefix[0][0] is Agg.SUM:
        reward = sum_to_avg(reward)
    return replace(spec, reward=reward)


def backup_additive(v: RelationalExpression, spec: RmdpSpec, mode: str | None = None,
                    max_cases: int | None = DEFAULT_MAX_CASES) -> RelationalExpression:
    """One approximate backup: event regression, then the agent's action.

    With ``mode="goal"`` nothing is added and nothing is discounted.
    """
    spec = _additive_spec(spec)
    if v.prefix and v.prefix[0][0] is Agg.SUM:
        v = sum_to_avg(v)
    nxt = regress_exogenous(v, spec, max_cases=max_cases)
    best = None
    for a in spec.actions:
        q = object_maximize(backup_action(nxt, a, spec, mode, max_cases), max_cases).expression
        if best is None:
            best = q
            continue
        try:
            best = max_combine(best, q)
        except UnsupportedCombination as err:
            raise ApproximationFailure(f"action {a.name}: {err}") from None
    assert best is not None
    return canonicalize(simplify(best, max_cases))


def solve_additive(spec: RmdpSpec, horizon: int, mode: str | None = None,
                   max_cases: int = DEFAULT_MAX_CASES) -> ValueFunction:
    """``horizon`` approximate backups starting from the reward."""
    if horizon is None:
        raise SolveError("the exogenous approximation runs for a finite horizon only")
    mode = mode or spec.mode
    if mode not in (GOAL, ACCUMULATE):
        raise ValueError(f"unknown mode {mode!r}")
    v = _additive_spec(spec).reward
    for _ in range(horizon):
        v = backup_additive(v, spec, mode, max_cases)
    return ValueFunction(v, horizon, mode, spec.discount)
