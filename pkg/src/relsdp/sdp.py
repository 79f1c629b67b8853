"""Lifted value iteration by symbolic dynamic programming.

Two implementations of the backup share the same contract:

* the generic route works on :class:`RelationalExpression` values and the
  operations of :mod:`relsdp.relexpr` (any safe aggregation prefix);
* the existential route works on :class:`maxform.XCase` lists and is used by
  :func:`solve` whenever the value function is max-aggregated, which is the
  case for existential goals.  It is much faster and keeps the action
  bindings needed for policy extraction.

Tests check that both give the same value functions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from . import logic, maxform
from .logic import Formula, Kind, Lit, Predicate, Term
from .maxform import XCase
from .model import ACCUMULATE, GOAL, ActionSchema, ActionVariant, RmdpSpec
from .relexpr import (
    Agg,
    Case,
    Op,
    RelationalExpression,
    UnsupportedCombination,
    apply_binary,
    canonicalize,
    fresh_name,
    max_combine,
    scalar_combine,
    simplify,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_CASES = 512
DEFAULT_MAX_ITERATIONS = 1000


class SolveError(Exception):
    pass


class ConvergenceError(SolveError):
    pass


class CaseCapError(SolveError):
    pass


@dataclass(frozen=True)
class ValueFunction:
    expression: RelationalExpression
    horizon: int
    mode: str = ACCUMULATE
    discount: Fraction = Fraction(9, 10)
    converged: bool | None = None
    delta: Fraction | None = None
    cases: tuple[XCase, ...] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class QFunction:
    action: ActionSchema
    expression: RelationalExpression
    params: tuple[Term, ...] = ()


@dataclass(frozen=True)
class Rule:
    """``if exists variables: condition then action(args)``.

    ``prefer`` lists more specific conditions, each with its own value, whose
    witnesses are tried before any witness of ``condition``.
    """

    condition: Formula
    variables: tuple[Term, ...]
    action: str
    args: tuple[Term, ...]
    value: Fraction
    prefer: tuple[tuple[Formula, Fraction], ...] = ()

    def render(self) -> str:
        vs = ", ".join(v.name for v in self.variables)
        head = f"exists {vs}: " if vs else ""
        args = ", ".join(t.name for t in self.args)
        return f"if {head}{self.condition.key} then {self.action}({args})"

    def branches(self) -> list[tuple[Formula, Fraction]]:
        return [*self.prefer, (self.condition, self.value)]


@dataclass(frozen=True)
class DecisionListPolicy:
    rules: tuple[Rule, ...]

    def select(self, interp: logic.Interpretation) -> tuple[str, tuple[str, ...], Fraction]:
        """First rule whose condition holds for some binding; returns ground action."""
        for r in self.rules:
            for cond, value in r.branches():
                for conj in logic.dnf(cond):
                    b = _witness(conj, interp)
                    if b is not None:
                        objs = tuple(interp.constants[t.name] if t.kind is Kind.CONST
                                     else b.get(t, next(iter(interp.objects[t.sort])))
                                     for t in r.args)
                        return r.action, objs, value
        raise SolveError("no policy rule applies")


def _witness(lits, interp) -> dict | None:
    free = []
    for l in lits:
        for t in l.atom.args:
            if t.kind is Kind.VAR and t not in free:
                free.append(t)
    b: dict = {}

    def go(i):
        for l in lits:
            if logic.eval3(l, interp, b) is False:
                return False
        if i == len(free):
            return True
        t = free[i]
        for o in interp.objects.get(t.sort, ()):
            b[t] = o
            if go(i + 1):
                return True
        b.pop(t, None)
        return False

    return dict(b) if go(0) else None


# -- shared helpers --------------------------------------------------------------------


def _tvd_literal(l: Lit, variant: ActionVariant, predicates: Mapping[str, Predicate]) -> Formula:
    if l.atom.is_eq:
        return l
    pred = predicates[l.atom.pred]
    f = variant.tvd(pred).instantiate(l.atom.args)
    return f if l.positive else logic.neg(f)


def is_max_only(e: RelationalExpression) -> bool:
    return e.aggs <= {Agg.MAX} and e.scale.is_one


def reward_of(spec: RmdpSpec) -> RelationalExpression:
    return spec.reward


# -- generic route ----------------------------------------------------------------------


def regress(v: RelationalExpression, variant: ActionVariant,
            predicates: Mapping[str, Predicate], simplified: bool = True) -> RelationalExpression:
    """Replace every atom by the variant's next-state condition for it."""
    cases = tuple(Case(logic.map_literals(c.condition,
                                          lambda l: _tvd_literal(l, variant, predicates)),
                       c.value) for c in v.cases)
    out = RelationalExpression(v.prefix, cases, v.scale)
    return simplify(out) if simplified else out


def expected_next(v: RelationalExpression, a: ActionSchema, spec: RmdpSpec,
                  max_cases: int | None = None) -> RelationalExpression:
    """Sum over variants of choice probability times regressed value."""
    total = None
    for variant in a.variants:
        r = regress(v, variant, spec.predicates)
        term = simplify(apply_binary(Op.TIMES, r, variant.choice_prob), max_cases)
        total = term if total is None else simplify(apply_binary(Op.PLUS, total, term), max_cases)
    assert total is not None
    return total


def backup_action(v: RelationalExpression, a: ActionSchema, spec: RmdpSpec,
                  mode: str | None = None, max_cases: int | None = None) -> QFunction:
    mode = mode or spec.mode
    nxt = expected_next(v, a, spec, max_cases)
    if mode == GOAL:
        return QFunction(a, nxt)
    q = apply_binary(Op.PLUS, spec.reward, scalar_combine(nxt, spec.discount))
    return QFunction(a, simplify(q, max_cases))


def object_maximize(q: QFunction, max_cases: int | None = None) -> QFunction:
    """Turn action parameters into max-aggregated variables at the head of the prefix."""
    e = q.expression
    used = {v.name for v in e.variables} | {t.name for t in e.free_terms()}
    m = {}
    for p in q.action.params:
        n = p.name if p.name not in used else fresh_name(p.name, used)
        used.add(n)
        m[p] = logic.var(n, p.sort)
    cases = tuple(Case(logic.apply_substitution(c.condition, m), c.value) for c in e.cases)
    prefix = tuple((Agg.MAX, m[p]) for p in q.action.params) + e.prefix
    out = simplify(RelationalExpression(prefix, cases, e.scale), max_cases)
    return QFunction(q.action, out, tuple(m[p] for p in q.action.params))


def backup_generic(v: RelationalExpression, spec: RmdpSpec, mode: str | None = None,
                   max_cases: int | None = None) -> RelationalExpression:
    best = None
    for a in spec.actions:
        q = object_maximize(backup_action(v, a, spec, mode, max_cases), max_cases)
        best = q.expression if best is None else max_combine(best, q.expression)
    assert best is not None
    return simplify(best, max_cases)


# -- existential route ------------------------------------------------------------------


def to_xcases(e: RelationalExpression) -> list[XCase]:
    if not is_max_only(e):
        raise UnsupportedCombination("max-form", ",".join(sorted(a.value for a in e.aggs)))
    from .relexpr import relax_max_cases
    return maxform.prune(maxform.from_cases(relax_max_cases(e.cases)))


def from_xcases(cases: Sequence[XCase]) -> RelationalExpression:
    order, new = maxform.to_cases(list(cases))
    out = RelationalExpression(tuple((Agg.MAX, v) for v in order),
                               tuple(Case(logic.minimize(f), val) for f, val in new))
    return out


def _open_cases(e: RelationalExpression) -> list[tuple[frozenset[Lit], Fraction]]:
    return [(lits, c.value) for c in e.cases for lits in logic.dnf(c.condition)]


def regress_x(cases: Sequence[XCase], variant: ActionVariant,
              predicates: Mapping[str, Predicate]) -> list[XCase]:
    out = []
    for c in cases:
        f = logic.conj(*(_tvd_literal(l, variant, predicates) for l in c.lits))
        for lits in logic.dnf(f):
            out.append(XCase(lits, c.value, c.binding))
    return out


def backup_action_x(v: Sequence[XCase], a: ActionSchema, spec: RmdpSpec, reward: Sequence[XCase],
                    mode: str, limit: int | None) -> list[XCase]:
    total: list[XCase] | None = None
    for variant in a.variants:
        r = maxform.prune(regress_x(v, variant, spec.predicates), drop=False)
        r = maxform.prune(maxform.times_open(r, _open_cases(variant.choice_prob)), drop=False)
        total = r if total is None else maxform.plus(total, r, drop=False)
    assert total is not None
    if mode == GOAL:
        return maxform.prune(total, limit=limit)
    return maxform.plus(reward, maxform.scale(total, spec.discount), limit=limit)


def object_maximize_x(q: Sequence[XCase], a: ActionSchema, limit: int | None) -> list[XCase]:
    m = {p: logic.var("_" + p.name, p.sort) for p in a.params}
    binding = tuple(m[p] for p in a.params)
    out = []
    for c in q:
        lits = frozenset(maxform.subst_lit(l, m) for l in c.lits)
        if logic.FALSE in lits:
            continue
        out.append(XCase(frozenset(l for l in lits if l != logic.TRUE), c.value, binding))  # type: ignore[misc]
    return maxform.prune(out, limit=limit)


def backup_x(v: Sequence[XCase], spec: RmdpSpec, reward: Sequence[XCase], mode: str,
             limit: int | None) -> tuple[list[XCase], dict[str, list[XCase]]]:
    per_action = {}
    union: list[XCase] = []
    for a in spec.actions:
        q = object_maximize_x(backup_action_x(v, a, spec, reward, mode, limit), a, limit)
        per_action[a.name] = q
        union.extend(XCase(c.lits, c.value) for c in q)
    return maxform.prune(union, limit=limit), per_action


# -- value iteration ----------------------------------------------------------------------


def _signature(cases: Sequence[XCase]) -> tuple:
    return tuple(sorted(" & ".join(sorted(l.key for l in c.lits)) for c in cases))


def _values_by_signature(cases: Sequence[XCase]) -> dict[str, Fraction]:
    return {" & ".join(sorted(l.key for l in c.lits)): c.value for c in cases}


def solve(spec: RmdpSpec, horizon: int | None, eps: Fraction = Fraction(1, 10000),
          mode: str | None = None, max_cases: int = DEFAULT_MAX_CASES,
          max_iterations: int = DEFAULT_MAX_ITERATIONS, route: str = "auto") -> ValueFunction:
    """Run ``horizon`` backups from the reward, or iterate to convergence if ``None``."""
    mode = mode or spec.mode
    if spec.exogenous:
        from .exo import solve_additive
        return solve_additive(spec, horizon, mode, max_cases)
    if horizon is None and eps <= 0:
        raise ValueError("eps must be positive for an infinite horizon")
    use_x = route == "x" or (route == "auto" and is_max_only(spec.reward))
    if route == "x" and not is_max_only(spec.reward):
        raise UnsupportedCombination("max-form", "reward prefix")
    if use_x:
        return _solve_x(spec, horizon, eps, mode, max_cases, max_iterations)
    return _solve_generic(spec, horizon, eps, mode, max_cases, max_iterations)


def _solve_x(spec, horizon, eps, mode, max_cases, max_iterations) -> ValueFunction:
    reward = to_xcases(spec.reward)
    v = reward
    k = 0
    delta = None
    converged = None
    try:
        while horizon is None or k < horizon:
            if horizon is None and k >= max_iterations:
                raise ConvergenceError(
                    f"no convergence after {k} backups (last change {delta}, {len(v)} cases)")
            nxt, _ = backup_x(v, spec, reward, mode, max_cases)
            k += 1
            if _signature(nxt) == _signature(v):
                old = _values_by_signature(v)
                delta = max((abs(c.value - old[s]) for s, c in
                             zip((" & ".join(sorted(l.key for l in c.lits)) for c in nxt), nxt)),
                            default=Fraction(0))
            else:
                delta = None
            log.debug("backup %d: %d cases, change %s", k, len(nxt), delta)
            v = nxt
            if horizon is None and delta is not None and delta < eps:
                converged = True
                break
    except maxform.CaseLimitExceeded as err:
        raise CaseCapError(f"backup {k + 1}: {err}") from None
    return ValueFunction(from_xcases(v), k, mode, spec.discount, converged, delta, tuple(v))


def _solve_generic(spec, horizon, eps, mode, max_cases, max_iterations) -> ValueFunction:
    v = spec.reward
    k = 0
    delta = None
    converged = None
    while horizon is None or k < horizon:
        if horizon is None and k >= max_iterations:
            raise ConvergenceError(f"no convergence after {k} backups (last change {delta})")
        nxt = canonicalize(backup_generic(v, spec, mode, max_cases))
        if len(nxt.cases) > max_cases:
            raise CaseCapError(f"backup {k + 1}: {len(nxt.cases)} cases exceed the cap")
        k += 1
        delta = _structural_delta(v, nxt)
        v = nxt
        if horizon is None and delta is not None and delta < eps:
            converged = True
            break
    return ValueFunction(v, k, mode, spec.discount, converged, delta)


def _structural_delta(a: RelationalExpression, b: RelationalExpression) -> Fraction | None:
    a, b = canonicalize(a), canonicalize(b)
    if a.prefix != b.prefix or a.scale != b.scale or len(a.cases) != len(b.cases):
        return None
    ka = sorted((c.condition.key, c.value) for c in a.cases)
    kb = sorted((c.condition.key, c.value) for c in b.cases)
    if [k for k, _ in ka] != [k for k, _ in kb]:
        return None
    return max(abs(x - y) for (_, x), (_, y) in zip(ka, kb))


def backup(v: ValueFunction, spec: RmdpSpec, max_cases: int = DEFAULT_MAX_CASES) -> ValueFunction:
    if is_max_only(v.expression) and is_max_only(spec.reward):
        nxt, _ = backup_x(to_xcases(v.expression), spec, to_xcases(spec.reward), v.mode, max_cases)
        return ValueFunction(from_xcases(nxt), v.horizon + 1, v.mode, v.discount, cases=tuple(nxt))
    e = backup_generic(v.expression, spec, v.mode, max_cases)
    return ValueFunction(e, v.horizon + 1, v.mode, v.discount)


# -- policies ---------------------------------------------------------------------------------


def _witness_cases(q: Sequence[XCase], a: ActionSchema) -> list[XCase]:
    """Q cases with parameters turned into variables kept in the condition."""
    m = {p: logic.var("_" + p.name, p.sort) for p in a.params}
    binding = tuple(m[p] for p in a.params)
    out = []
    for c in q:
        lits = frozenset(maxform.subst_lit(l, m) for l in c.lits)
        if logic.FALSE in lits:
            continue
        n = maxform.normalize(XCase(frozenset(l for l in lits if l != logic.TRUE),  # type: ignore[misc]
                                    c.value, binding))
        if n is not None:
            out.append(n)
    prefixes = maxform.sort_prefixes(t.sort for c in out for t in maxform.existential(c))
    return [maxform.rename_case(c, frozenset(), prefixes) for c in out]


def _specializes(general: XCase, specific: XCase) -> bool:
    """Some match of ``general`` into ``specific`` carries binding to binding."""
    tag = logic.Predicate("%binding", tuple(t.sort for t in general.binding))
    g = general.lits | {logic.Lit(logic.atom(tag, *general.binding), True)}
    s = specific.lits | {logic.Lit(logic.atom(tag, *specific.binding), True)}
    return maxform.subsumes(frozenset(g), frozenset(s))


def extract_policy(spec: RmdpSpec, v: ValueFunction, max_cases: int = DEFAULT_MAX_CASES
                   ) -> DecisionListPolicy:
    """Greedy decision list with respect to ``v``.

    Every case of every Q-function becomes a candidate rule; rules are ordered
    by value, then by condition size, action arity and action name, and
    rules that can never fire first are dropped.  A rule immediately followed
    by a more general rule for the same action and binding is folded into it
    as a preferred branch.
    """
    if not (is_max_only(v.expression) and is_max_only(spec.reward)):
        raise UnsupportedCombination("policy", "non-max value function")
    reward = to_xcases(spec.reward)
    vx = to_xcases(v.expression)
    cands = []
    for a in spec.actions:
        q = backup_action_x(vx, a, spec, reward, v.mode, max_cases)
        cands += [(c, a.name) for c in _witness_cases(q, a)]
    arity = {a.name: len(a.params) for a in spec.actions}
    cands.sort(key=lambda x: (-x[0].value, len(x[0].lits), arity[x[1]], x[1]))
    kept: list[tuple[XCase, str]] = []
    for c, name in cands:
        if any(maxform.subsumes(k.lits, c.lits) for k, _ in kept):
            continue
        kept.append((c, name))
    groups: list[list[tuple[XCase, str]]] = []
    for c, name in kept:
        last = groups[-1] if groups else None
        if last and last[-1][1] == name and _specializes(c, last[-1][0]):
            last.append((c, name))
        else:
            groups.append([(c, name)])
    rules = []
    for g in groups:
        c, name = g[-1]
        vs = tuple(sorted(t for t in maxform.existential(c) if t.kind is Kind.VAR))
        prefer = tuple((logic.conj(*k.lits), k.value) for k, _ in g[:-1])
        rules.append(Rule(logic.conj(*c.lits), vs, name, c.binding, c.value, prefer))
    return DecisionListPolicy(tuple(rules))


# -- serialization ----------------------------------------------------------------------------


def render_value_function(v: ValueFunction) -> str:
    from .relexpr import fmt_value, render

    head = [f"# horizon: {'inf' if v.converged else v.horizon}",
            f"# backups: {v.horizon}",
            f"# mode: {v.mode}",
            f"# discount: {fmt_value(v.discount)}"]
    if v.converged is not None:
        head.append(f"# converged: {str(v.converged).lower()}")
    if v.delta is not None:
        head.append(f"# last change: {v.delta} (~{float(v.delta):.4g})")
    return "\n".join(head) + "\n" + render(canonicalize(v.expression)) + "\n"


def render_policy(p: DecisionListPolicy) -> str:
    lines = []
    for i, r in enumerate(p.rules):
        word = "if" if i == 0 else "else if"
        text = r.render()
        if i == len(p.rules) - 1 and r.condition == logic.TRUE:
            text = text.replace("if true then ", "")
            word = "else do"
        else:
            text = text[len("if "):]
        lines.append(f"{word} {text}  (value ~ {float(r.value):.4f} = {r.value})")
        for cond, value in r.prefer:
            lines.append(f"    preferring witnesses of {cond.key}"
                         f"  (value ~ {float(value):.4f} = {value})")
    return "\n".join(lines) + "\n"
