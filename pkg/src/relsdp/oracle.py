"""Brute-force ground truth: enumerate a small instance and run tabular value iteration.

Nothing here uses the lifted machinery.  Relational expressions are evaluated
by enumerating every assignment of their variables, and transitions come from
the TVDs evaluated on concrete states.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterator, Mapping, Sequence

from . import logic
from .logic import And, Const, Formula, Kind, Lit, Or, Term
from .model import ACCUMULATE, GOAL, ActionSchema, RmdpSpec, compile_exogenous, is_wildcard
from .relexpr import RelationalExpression, combine

DEFAULT_ATOM_CAP = 20

State = int
Distribution = list[tuple[State, Fraction]]


class OracleError(Exception):
    pass


def object_names(spec: RmdpSpec, sizes: Mapping[str, int]) -> dict[str, tuple[str, ...]]:
    """Declared constants first, then ``b1, b2, ...`` up to the requested count."""
    taken = set(spec.constants)
    out = {}
    for s, consts in spec.sorts.items():
        n = sizes.get(s, max(len(consts), 1))
        if n < len(consts):
            raise OracleError(f"sort {s} needs at least {len(consts)} objects for its constants")
        if n < 1:
            raise OracleError(f"sort {s} must be nonempty")
        names = list(consts)
        k = 1
        while len(names) < n:
            name = f"{s[0].lower()}{k}"
            k += 1
            if name not in taken:
                names.append(name)
                taken.add(name)
        out[s] = tuple(names)
    return out


@dataclass(frozen=True)
class GroundAction:
    schema: ActionSchema
    args: tuple[str, ...]

    @property
    def name(self) -> str:
        return f"{self.schema.name}({', '.join(self.args)})"


@dataclass
class GroundInstance:
    spec: RmdpSpec
    sizes: Mapping[str, int]
    atom_cap: int = DEFAULT_ATOM_CAP
    objects: dict[str, tuple[str, ...]] = field(init=False)
    atoms: tuple[tuple[str, ...], ...] = field(init=False)
    index: dict[tuple[str, ...], int] = field(init=False)

    def __post_init__(self) -> None:
        for s in self.sizes:
            if s not in self.spec.sorts:
                raise OracleError(f"unknown sort {s}")
        self.objects = object_names(self.spec, self.sizes)
        atoms = []
        for p in self.spec.predicates.values():
            for args in itertools.product(*(self.objects[s] for s in p.sorts)):
                atoms.append((p.name, *args))
        self.atoms = tuple(atoms)
        self.index = {a: i for i, a in enumerate(atoms)}

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_states(self) -> int:
        return 1 << self.n_atoms

    def check_cap(self) -> None:
        if self.n_atoms > self.atom_cap:
            raise OracleError(f"{self.n_atoms} ground atoms exceed the cap of {self.atom_cap}")

    def interpretation(self, s: State) -> logic.Interpretation:
        true = frozenset(a for i, a in enumerate(self.atoms) if s >> i & 1)
        return logic.Interpretation(self.objects, {c: c for c in self.spec.constants}, true)

    def state_of(self, interp: logic.Interpretation) -> State:
        s = 0
        for a in interp.true_atoms:
            if a not in self.index:
                raise OracleError(f"atom {a} is not part of this instance")
            s |= 1 << self.index[a]
        return s

    def describe(self, s: State) -> str:
        true = [f"{a[0]}({','.join(a[1:])})" for i, a in enumerate(self.atoms) if s >> i & 1]
        return " ".join(true) or "(empty)"

    @cached_property
    def actions(self) -> tuple[GroundAction, ...]:
        out = []
        for a in self.spec.actions:
            for args in itertools.product(*(self.objects[p.sort] for p in a.params)):
                out.append(GroundAction(a, args))
        return tuple(out)

    @cached_property
    def events(self) -> tuple[tuple[ActionSchema, str], ...]:
        out = []
        for e in self.spec.exogenous:
            schema = compile_exogenous(e, self.spec.predicates)
            out += [(schema, o) for o in self.objects[e.sort]]
        return tuple(out)


def enumerate_states(gi: GroundInstance) -> Iterator[State]:
    gi.check_cap()
    return iter(range(gi.n_states))


# -- formulas compiled against one instance ----------------------------------------------


Compiled = Callable[[State], bool]


def _true(_: State) -> bool:
    return True


def _false(_: State) -> bool:
    return False


def compile_formula(f: Formula, gi: GroundInstance, binding: Mapping[Term, str]) -> bool | Compiled:
    """Partially evaluate ``f`` under ``binding``; returns a bool or a state predicate."""

    def obj(t: Term) -> str:
        if t.kind is Kind.CONST:
            return t.name
        return binding[t]

    def go(f: Formula):
        if isinstance(f, Const):
            return f.value
        if isinstance(f, Lit):
            args = tuple(obj(t) for t in f.atom.args)
            if f.atom.is_eq:
                return (args[0] == args[1]) == f.positive
            bit = gi.index[(f.atom.pred, *args)]
            if f.positive:
                return lambda s: bool(s >> bit & 1)
            return lambda s: not s >> bit & 1
        parts = [go(p) for p in f.parts]
        if isinstance(f, And):
            if any(p is False for p in parts):
                return False
            fns = [p for p in parts if p is not True]
            if not fns:
                return True
            return fns[0] if len(fns) == 1 else lambda s: all(p(s) for p in fns)
        assert isinstance(f, Or)
        if any(p is True for p in parts):
            return True
        fns = [p for p in parts if p is not False]
        if not fns:
            return False
        return fns[0] if len(fns) == 1 else lambda s: any(p(s) for p in fns)

    return go(f)


def _as_fn(c: bool | Compiled) -> Compiled:
    if c is True:
        return _true
    if c is False:
        return _false
    return c


@dataclass(frozen=True)
class _CompiledVariant:
    probs: tuple[tuple[Compiled, Fraction], ...]
    updates: tuple[tuple[int, Compiled], ...]

    def prob(self, s: State) -> Fraction:
        for cond, p in self.probs:
            if cond(s):
                return p
        raise OracleError("choice probability cases are not exhaustive")

    def apply(self, s: State) -> State:
        out = s
        for bit, fn in self.updates:
            if fn(s):
                out |= 1 << bit
            else:
                out &= ~(1 << bit)
        return out


def _compile_schema(gi: GroundInstance, schema: ActionSchema, args: Sequence[str]
                    ) -> tuple[_CompiledVariant, ...]:
    binding = dict(zip(schema.params, args))
    out = []
    for v in schema.variants:
        probs = tuple((_as_fn(compile_formula(c.condition, gi, binding)), c.value)
                      for c in v.choice_prob.cases)
        updates = []
        for name, tvd in v.tvds.items():
            pred = gi.spec.predicates[name]
            for objs in itertools.product(*(gi.objects[s] for s in pred.sorts)):
                b = dict(binding)
                b.update(zip(tvd.formals, objs))
                fn = _as_fn(compile_formula(tvd.positive, gi, b))
                updates.append((gi.index[(name, *objs)], fn))
        out.append(_CompiledVariant(probs, tuple(updates)))
    return tuple(out)


class Dynamics:
    """Compiled transition model of one ground instance."""

    def __init__(self, gi: GroundInstance):
        self.gi = gi
        self._actions = {a: _compile_schema(gi, a.schema, a.args) for a in gi.actions}
        self._events = [_compile_schema(gi, schema, (o,)) for schema, o in gi.events]

    def variant_outcomes(self, s: State, a: GroundAction) -> list[tuple[str, Fraction, State]]:
        """Each variant of ``a`` with its choice probability and deterministic successor."""
        return [(v.name, c.prob(s), c.apply(s))
                for v, c in zip(a.schema.variants, self._actions[a])]

    def agent_step(self, s: State, a: GroundAction) -> Distribution:
        return _mix(s, self._actions[a])

    def step(self, s: State, a: GroundAction) -> Distribution:
        dist = self.agent_step(s, a)
        for ev in self._events:
            nxt: dict[State, Fraction] = {}
            for t, p in dist:
                for u, q in _mix(t, ev):
                    nxt[u] = nxt.get(u, Fraction(0)) + p * q
            dist = list(nxt.items())
        return dist


def _mix(s: State, variants: Sequence[_CompiledVariant]) -> Distribution:
    out: dict[State, Fraction] = {}
    for v in variants:
        p = v.prob(s)
        if p:
            t = v.apply(s)
            out[t] = out.get(t, Fraction(0)) + p
    return list(out.items())


def ground_step_distribution(gi: GroundInstance, s: State, a: GroundAction,
                             dynamics: Dynamics | None = None) -> Distribution:
    """Successor states with probabilities, including exogenous events if declared."""
    return (dynamics or Dynamics(gi)).step(s, a)


def pstrips_step(gi: GroundInstance, s: State, a: GroundAction) -> Distribution:
    """Apply an add/delete-list action directly, without TVDs."""
    src = a.schema.source
    if src is None:
        raise OracleError(f"action {a.schema.name} has no add/delete description")
    binding = dict(zip(src.params, a.args))
    interp = gi.interpretation(s)
    p = Fraction(0)
    for cond, q in src.prob_cases:
        if logic.eval_formula(cond, interp, binding):
            p = Fraction(q)
            break

    def obj(t: Term) -> str | None:
        if is_wildcard(t):
            return None
        return t.name if t.kind is Kind.CONST else binding[t]

    t = s
    for d in src.delete:
        pattern = [obj(x) for x in d.args]
        for i, atom in enumerate(gi.atoms):
            if atom[0] == d.pred and all(x is None or x == y for x, y in zip(pattern, atom[1:])):
                t &= ~(1 << i)
    for ad in src.add:
        t |= 1 << gi.index[(ad.pred, *(obj(x) for x in ad.args))]
    if p == 0 or t == s:
        return [(s, Fraction(1))]
    if p == 1:
        return [(t, Fraction(1))]
    return [(t, p), (s, 1 - p)]


# -- brute-force expression evaluation --------------------------------------------------


def brute_evaluate(e: RelationalExpression, interp: logic.Interpretation,
                   binding: Mapping[Term, str] | None = None) -> Fraction:
    """Evaluate by enumerating every assignment of the prefix variables."""
    binding = dict(binding or {})

    def case_value(b: dict) -> Fraction:
        hits = [c.value for c in e.cases if logic.eval_formula(c.condition, interp, b)]
        if len(hits) != 1:
            raise OracleError(f"{len(hits)} cases hold under {b}")
        return hits[0]

    def fold(i: int) -> Fraction:
        if i == len(e.prefix):
            return case_value(binding)
        agg, v = e.prefix[i]
        vals = []
        for o in interp.objects[v.sort]:
            binding[v] = o
            vals.append(fold(i + 1))
        del binding[v]
        return combine(agg, vals)

    return e.scale.value(interp) * fold(0)


# -- value iteration -------------------------------------------------------------------------


@dataclass
class TabularValue:
    instance: GroundInstance
    mode: str
    values: list[list[Fraction]]

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, k: int) -> list[Fraction]:
        return self.values[k]


class TabularSolver:
    """Exact finite-horizon value iteration over every state of an instance."""

    def __init__(self, gi: GroundInstance):
        gi.check_cap()
        self.gi = gi
        self.dynamics = Dynamics(gi)
        self.reward = [brute_evaluate(gi.spec.reward, gi.interpretation(s))
                       for s in range(gi.n_states)]
        self._table: list[list[Distribution]] | None = None

    @property
    def table(self) -> list[list[Distribution]]:
        if self._table is None:
            acts = self.gi.actions
            self._table = [[self.dynamics.step(s, a) for a in acts]
                           for s in range(self.gi.n_states)]
        return self._table

    def backup(self, v: Sequence[Fraction], mode: str) -> list[Fraction]:
        gamma = self.gi.spec.discount
        out = []
        for s, rows in enumerate(self.table):
            best = max(sum((p * v[t] for t, p in dist), Fraction(0)) for dist in rows)
            out.append(best if mode == GOAL else self.reward[s] + gamma * best)
        return out

    def run(self, horizon: int, mode: str) -> TabularValue:
        if mode not in (GOAL, ACCUMULATE):
            raise OracleError(f"unknown mode {mode!r}")
        vals = [list(self.reward)]
        for _ in range(horizon):
            vals.append(self.backup(vals[-1], mode))
        return TabularValue(self.gi, mode, vals)

    def converge(self, eps: Fraction, mode: str = ACCUMULATE, max_iterations: int = 10_000
                 ) -> TabularValue:
        """Iterate until no state value changes by ``eps`` or more."""
        v = list(self.reward)
        vals = [v]
        for _ in range(max_iterations):
            nxt = self.backup(v, mode)
            done = max(abs(a - b) for a, b in zip(nxt, v)) < eps
            v = nxt
            if done:
                return TabularValue(self.gi, mode, vals + [v])
        raise OracleError(f"no convergence after {max_iterations} iterations")


def policy_value(solver: TabularSolver, choose: Callable[[State], GroundAction],
                 tol: float = 1e-10, max_iterations: int = 100_000) -> list[float]:
    """Discounted value of following ``choose`` forever, by iteration in floats."""
    gamma = float(solver.gi.spec.discount)
    rewards = [float(r) for r in solver.reward]
    index = {a: k for k, a in enumerate(solver.gi.actions)}
    rows = [[(t, float(p)) for t, p in solver.table[s][index[choose(s)]]]
            for s in range(solver.gi.n_states)]
    v = list(rewards)
    for _ in range(max_iterations):
        nxt = [r + gamma * sum(p * v[t] for t, p in row) for r, row in zip(rewards, rows)]
        if max(abs(x - y) for x, y in zip(nxt, v)) < tol:
            return nxt
        v = nxt
    raise OracleError("policy evaluation did not converge")


def optimal_value(solver: TabularSolver, tol: float = 1e-10, max_iterations: int = 100_000
                  ) -> list[float]:
    """Infinite-horizon optimal values, by iteration in floats."""
    gamma = float(solver.gi.spec.discount)
    rewards = [float(r) for r in solver.reward]
    rows = [[[(t, float(p)) for t, p in dist] for dist in acts] for acts in solver.table]
    v = list(rewards)
    for _ in range(max_iterations):
        nxt = [r + gamma * max(sum(p * v[t] for t, p in d) for d in acts)
               for r, acts in zip(rewards, rows)]
        if max(abs(x - y) for x, y in zip(nxt, v)) < tol:
            return nxt
        v = nxt
    raise OracleError("value iteration did not converge")


def tabular_vi(gi: GroundInstance, horizon: int, mode: str) -> TabularValue:
    return TabularSolver(gi).run(horizon, mode)


# -- conformance -------------------------------------------------------------------------------


@dataclass
class ConformanceReport:
    sizes: Mapping[str, int]
    horizon: int
    mode: str
    tolerance: Fraction
    lower_bound: bool
    rows: list[tuple[State, str, Fraction, Fraction]]

    @property
    def max_deviation(self) -> Fraction:
        return max((abs(l - t) for _, _, l, t in self.rows), default=Fraction(0))

    @property
    def mismatches(self) -> int:
        return sum(1 for _, _, l, t in self.rows if abs(l - t) > self.tolerance)

    @property
    def violations(self) -> int:
        """States where the lifted value exceeds the tabular one."""
        return sum(1 for _, _, l, t in self.rows if l - t > self.tolerance)

    @property
    def ok(self) -> bool:
        return self.violations == 0 if self.lower_bound else self.mismatches == 0

    def text(self) -> str:
        sizes = ",".join(f"{k}={v}" for k, v in self.sizes.items())
        dev = self.max_deviation
        lines = [f"sizes: {sizes}",
                 f"horizon: {self.horizon}",
                 f"mode: {self.mode}",
                 f"states: {len(self.rows)}",
                 f"max deviation: {dev} (~{float(dev):.4f})",
                 f"mismatches above {self.tolerance}: {self.mismatches}"]
        if self.lower_bound:
            lines.append(f"lower-bound violations: {self.violations}")
        lines.append(f"result: {'ok' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        out = ["state\tatoms\tlifted\ttabular\tdelta"]
        for s, desc, l, t in self.rows:
            out.append(f"{s}\t{desc}\t{l}\t{t}\t{l - t}")
        return "\n".join(out) + "\n"


def conformance_check(spec: RmdpSpec, v, sizes: Mapping[str, int], horizon: int,
                      mode: str | None = None, tolerance: Fraction = Fraction(0),
                      lower_bound: bool = False, solver: TabularSolver | None = None,
                      tabular: Sequence[Fraction] | None = None) -> ConformanceReport:
    """Compare a lifted value function with tabular value iteration state by state."""
    from .relexpr import evaluate

    mode = mode or v.mode
    if v.horizon != horizon or v.mode != mode:
        raise OracleError(f"value function is for horizon {v.horizon} ({v.mode}), "
                          f"requested {horizon} ({mode})")
    gi = solver.gi if solver else GroundInstance(spec, sizes)
    if tabular is None:
        tabular = (solver or TabularSolver(gi)).run(horizon, mode)[horizon]
    rows = []
    for s in enumerate_states(gi):
        lifted = evaluate(v.expression, gi.interpretation(s))
        rows.append((s, gi.describe(s), lifted, tabular[s]))
    return ConformanceReport(dict(sizes), horizon, mode, Fraction(tolerance), lower_bound, rows)
