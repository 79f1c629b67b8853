"""Text formats: the domain language, standalone expressions and state files.

Formulas use ``&``, ``|``, ``~``, ``=``, ``!=``, parentheses, ``true`` and
``false``.  Identifiers starting with an upper-case letter are variables,
lower-case ones are constants, ``@Name`` is an action parameter.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from . import logic
from .logic import FALSE, TRUE, Formula, Kind, Predicate, Term
from .model import (
    ACCUMULATE,
    GOAL,
    ExogenousEvent,
    ModelError,
    PstripsAction,
    RmdpSpec,
    compile_pstrips,
    validate_spec,
    wildcard,
)
from .relexpr import Agg, Case, RelationalExpression, Scale, fmt_value


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0) -> None:
        self.line, self.col = line, col
        super().__init__(f"line {line}, column {col}: {msg}" if line else msg)


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?(?:/\d+)?)
  | (?P<param>@[A-Za-z_][A-Za-z0-9_']*)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>!=|[()\[\]{},:;&|~=*])
""", re.VERBOSE)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    out = []
    pos, line, start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        assert kind is not None
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind != "ws":
            out.append(Tok(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    out.append(Tok("eof", "", line, pos - start + 1))
    return out


# raw syntax trees, resolved against sort information afterwards
RawTerm = tuple  # (kind, name, tok)


class Parser:
    def __init__(self, text: str) -> None:
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Tok | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(msg, t.line, t.col)

    def at(self, *texts: str) -> bool:
        return self.tok.text in texts and self.tok.kind in ("op", "id")

    def take(self, text: str | None = None, kind: str | None = None) -> Tok:
        t = self.tok
        if text is not None and t.text != text:
            raise self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        if kind is not None and t.kind != kind:
            raise self.error(f"expected {kind}, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def number(self) -> Fraction:
        t = self.take(kind="num")
        try:
            return Fraction(t.text)
        except (ValueError, ZeroDivisionError):
            raise self.error(f"bad number {t.text!r}", t) from None

    def ident(self) -> Tok:
        return self.take(kind="id")

    # -- formulas
    def formula(self):
        parts = [self.conjunction()]
        while self.accept("|"):
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else ("or", parts)

    def conjunction(self):
        parts = [self.unary()]
        while self.accept("&"):
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else ("and", parts)

    def unary(self):
        if self.accept("~"):
            return ("not", self.unary())
        if self.accept("("):
            f = self.formula()
            self.take(")")
            return f
        if self.at("true"):
            self.i += 1
            return ("const", True)
        if self.at("false"):
            self.i += 1
            return ("const", False)
        left = self.term()
        if self.accept("="):
            return ("eq", left, self.term(), True)
        if self.accept("!="):
            return ("eq", left, self.term(), False)
        if left[0] != "const" or not self.at("("):
            tok = left[2]
            if self.at("("):
                return self.atom_rest(tok)
            raise self.error(f"expected a predicate or comparison after {tok.text!r}", tok)
        return self.atom_rest(left[2])

    def atom_rest(self, name: Tok):
        self.take("(")
        args = []
        if not self.at(")"):
            args.append(self.term(allow_wild=True))
            while self.accept(","):
                args.append(self.term(allow_wild=True))
        self.take(")")
        return ("atom", name, args)

    def term(self, allow_wild: bool = False) -> RawTerm:
        t = self.tok
        if t.kind == "param":
            self.i += 1
            return ("param", t.text[1:], t)
        if t.kind == "id":
            self.i += 1
            return ("var" if t.text[0].isupper() else "const", t.text, t)
        if allow_wild and t.text == "*":
            self.i += 1
            return ("wild", "*", t)
        raise self.error(f"expected a term, found {t.text or 'end of input'!r}")

    # -- expressions
    def expression_raw(self):
        scale_coeff, scale_sorts = Fraction(1), []
        while not self.at("["):
            if self.tok.kind == "num":
                scale_coeff *= self.number()
            elif self.accept("|"):
                scale_sorts.append(self.ident())
                self.take("|")
            else:
                raise self.error("expected '[' to start an expression")
            self.take("*")
        self.take("[")
        prefix = []
        if not self.at("]"):
            prefix.append(self.prefix_item())
            while self.accept(","):
                prefix.append(self.prefix_item())
        self.take("]")
        cases = self.case_block()
        return scale_coeff, scale_sorts, prefix, cases

    def prefix_item(self):
        agg = self.ident()
        if agg.text not in {a.value for a in Agg}:
            raise self.error(f"unknown aggregation {agg.text!r}", agg)
        v = self.ident()
        sort = None
        if self.accept(":"):
            sort = self.ident()
        return agg, v, sort

    def case_block(self):
        self.take("{")
        cases = []
        while True:
            if self.at("otherwise"):
                tok = self.take()
                cond = "otherwise"
            else:
                tok = self.tok
                cond = self.formula()
            self.take(":")
            cases.append((cond, self.number(), tok))
            if not self.accept(";"):
                break
            if self.at("}"):
                break
        self.take("}")
        return cases


# -- resolution of raw trees --------------------------------------------------------


class Env:
    def __init__(self, predicates: Mapping[str, Predicate], constants: Mapping[str, str],
                 variables: Mapping[str, str] | None = None, params: Mapping[str, str] | None = None,
                 params_from_vars: bool = False) -> None:
        self.predicates = predicates
        self.constants = constants
        self.variables = dict(variables or {})
        self.params = dict(params or {})
        self.params_from_vars = params_from_vars

    def term(self, raw: RawTerm, expected: str | None) -> Term:
        kind, name, tok = raw
        if kind == "wild":
            if expected is None:
                raise ParseError("wildcard needs a predicate position", tok.line, tok.col)
            return wildcard(expected)
        if kind == "const":
            sort = self.constants.get(name)
            if sort is None:
                raise ParseError(f"undeclared constant {name!r}", tok.line, tok.col)
            t = logic.const(name, sort)
        elif kind == "param" or (self.params_from_vars and name in self.params):
            sort = self.params.get(name)
            if sort is None:
                raise ParseError(f"unknown parameter @{name}", tok.line, tok.col)
            t = logic.param(name, sort)
        else:
            sort = self.variables.get(name)
            if sort is None:
                raise ParseError(f"unbound variable {name!r}", tok.line, tok.col)
            t = logic.var(name, sort)
        if expected is not None and t.sort != expected:
            raise ParseError(f"{name} has sort {t.sort}, expected {expected}", tok.line, tok.col)
        return t

    def formula(self, raw) -> Formula:
        tag = raw[0]
        if tag == "const":
            return TRUE if raw[1] else FALSE
        if tag == "not":
            return logic.neg(self.formula(raw[1]))
        if tag == "and":
            return logic.conj(*(self.formula(p) for p in raw[1]))
        if tag == "or":
            return logic.disj(*(self.formula(p) for p in raw[1]))
        if tag == "eq":
            a, b = raw[1], raw[2]
            sa = self.sort_of(a)
            sb = self.sort_of(b)
            sort = sa or sb
            if sort is None:
                tok = a[2]
                raise ParseError("cannot infer the sort of an equality", tok.line, tok.col)
            return logic.lit(logic.eq_atom(self.term(a, sort), self.term(b, sort)), raw[3])
        return logic.lit(self.atom(raw))

    def atom(self, raw) -> logic.Atom:
        _, name, args = raw
        pred = self.predicates.get(name.text)
        if pred is None:
            raise ParseError(f"undeclared predicate {name.text!r}", name.line, name.col)
        if len(args) != pred.arity:
            raise ParseError(f"{pred.name} expects {pred.arity} arguments, got {len(args)}",
                             name.line, name.col)
        return logic.Atom(pred.name, tuple(self.term(a, s) for a, s in zip(args, pred.sorts)))

    def sort_of(self, raw: RawTerm) -> str | None:
        kind, name, _ = raw
        if kind == "const":
            return self.constants.get(name)
        if kind == "param" or (self.params_from_vars and name in self.params):
            return self.params.get(name)
        return self.variables.get(name)


def infer_var_sorts(raw, predicates: Mapping[str, Predicate], out: dict[str, str]) -> None:
    """Record the sort of each variable from the predicate positions it fills."""
    tag = raw[0]
    if tag in ("and", "or"):
        for p in raw[1]:
            infer_var_sorts(p, predicates, out)
    elif tag == "not":
        infer_var_sorts(raw[1], predicates, out)
    elif tag == "atom":
        pred = predicates.get(raw[1].text)
        if pred is None:
            return
        for (kind, name, tok), s in zip(raw[2], pred.sorts):
            if kind == "var":
                if out.setdefault(name, s) != s:
                    raise ParseError(f"variable {name} used with sorts {out[name]} and {s}",
                                     tok.line, tok.col)


def build_expression(raw, env: Env) -> RelationalExpression:
    coeff, scale_sorts, prefix_raw, cases_raw = raw
    inferred: dict[str, str] = {}
    for cond, _, _ in cases_raw:
        if cond != "otherwise":
            infer_var_sorts(cond, env.predicates, inferred)
    prefix = []
    env = Env(env.predicates, env.constants, env.variables, env.params, env.params_from_vars)
    for agg, v, sort in prefix_raw:
        s = sort.text if sort is not None else inferred.get(v.text)
        if s is None:
            raise ParseError(f"cannot infer the sort of {v.text}", v.line, v.col)
        env.variables[v.text] = s
        prefix.append((Agg(agg.text), logic.var(v.text, s)))
    for name, s in inferred.items():
        env.variables.setdefault(name, s)
    cases = []
    seen: list[Formula] = []
    for i, (cond, value, tok) in enumerate(cases_raw):
        if cond == "otherwise":
            if i != len(cases_raw) - 1:
                raise ParseError("'otherwise' must be the last case", tok.line, tok.col)
            f = logic.neg(logic.disj(*seen))
        else:
            f = env.formula(cond)
        seen.append(f)
        cases.append(Case(f, value))
    sorts = tuple(sorted(t.text for t in scale_sorts))
    return RelationalExpression(tuple(prefix), tuple(cases), Scale(coeff, sorts))


def parse_formula(text: str, predicates: Mapping[str, Predicate], constants: Mapping[str, str],
                  variables: Mapping[str, str] | None = None,
                  params: Mapping[str, str] | None = None) -> Formula:
    p = Parser(text)
    raw = p.formula()
    p.take(kind="eof")
    inferred = dict(variables or {})
    infer_var_sorts(raw, predicates, inferred)
    return Env(predicates, constants, inferred, params).formula(raw)


def parse_expression(text: str, predicates: Mapping[str, Predicate],
                     constants: Mapping[str, str], params: Mapping[str, str] | None = None
                     ) -> RelationalExpression:
    p = Parser(text)
    raw = p.expression_raw()
    p.take(kind="eof")
    if params is None:
        params = _infer_params(raw, predicates)
    return build_expression(raw, Env(predicates, constants, params=params))


def _infer_params(raw, predicates) -> dict[str, str]:
    out: dict[str, str] = {}

    def walk(r):
        tag = r[0]
        if tag in ("and", "or"):
            for p in r[1]:
                walk(p)
        elif tag == "not":
            walk(r[1])
        elif tag == "atom":
            pred = predicates.get(r[1].text)
            if pred:
                for (kind, name, _), s in zip(r[2], pred.sorts):
                    if kind == "param":
                        out.setdefault(name, s)

    for cond, _, _ in raw[3]:
        if cond != "otherwise":
            walk(cond)
    return out


# -- domain files --------------------------------------------------------------------


def parse_domain(text: str) -> RmdpSpec:
    p = Parser(text)
    sorts: dict[str, tuple[str, ...]] = {}
    predicates: dict[str, Predicate] = {}
    raw_actions = []
    raw_exo = []
    reward_raw = None
    discount = Fraction(9, 10)
    mode = ACCUMULATE
    while p.tok.kind != "eof":
        kw = p.ident()
        if kw.text == "sort":
            name = p.ident().text
            consts: list[str] = []
            if p.accept("["):
                if not p.at("]"):
                    consts.append(p.ident().text)
                    while p.accept(","):
                        consts.append(p.ident().text)
                p.take("]")
            if name in sorts:
                raise p.error(f"sort {name} declared twice", kw)
            sorts[name] = tuple(consts)
        elif kw.text == "pred":
            name = p.ident()
            p.take("(")
            args = []
            if not p.at(")"):
                args.append(p.ident().text)
                while p.accept(","):
                    args.append(p.ident().text)
            p.take(")")
            for s in args:
                if s not in sorts:
                    raise p.error(f"undeclared sort {s}", name)
            predicates[name.text] = Predicate(name.text, tuple(args))
        elif kw.text == "action":
            name = p.ident()
            p.take("(")
            params = []
            if not p.at(")"):
                params.append(_typed(p))
                while p.accept(","):
                    params.append(_typed(p))
            p.take(")")
            raw_actions.append((name, params, _action_body(p)))
        elif kw.text == "exogenous":
            sort = p.ident()
            v = p.ident()
            raw_exo.append((sort, v, _action_body(p)))
        elif kw.text == "reward":
            reward_raw = (p.expression_raw(), kw)
        elif kw.text == "discount":
            discount = p.number()
        elif kw.text == "mode":
            m = p.ident()
            if m.text not in (GOAL, ACCUMULATE):
                raise p.error(f"mode must be {GOAL} or {ACCUMULATE}", m)
            mode = m.text
        else:
            raise p.error(f"unknown declaration {kw.text!r}", kw)
    constants = {c: s for s, cs in sorts.items() for c in cs}
    if not raw_actions:
        raise ParseError("at least one action is required", p.tok.line, p.tok.col)
    if reward_raw is None:
        raise ParseError("missing reward declaration", p.tok.line, p.tok.col)
    actions = []
    for name, params, body in raw_actions:
        ptypes = {}
        for v, s in params:
            if s.text not in sorts:
                raise ParseError(f"undeclared sort {s.text}", s.line, s.col)
            ptypes[v.text] = s.text
        env = Env(predicates, constants, params=ptypes, params_from_vars=True)
        pa = _build_action(name.text, [logic.param(v.text, s.text) for v, s in params], body, env)
        try:
            actions.append(compile_pstrips(pa, predicates))
        except ModelError as err:
            raise ParseError(str(err), name.line, name.col) from None
    exo = []
    for sort, v, body in raw_exo:
        if sort.text not in sorts:
            raise ParseError(f"undeclared sort {sort.text}", sort.line, sort.col)
        env = Env(predicates, constants, params={v.text: sort.text}, params_from_vars=True)
        pa = _build_action("exo", [logic.param(v.text, sort.text)], body, env)
        if len(pa.prob_cases) != 1 or pa.prob_cases[0][0] != TRUE:
            raise ParseError("exogenous events take a constant probability", sort.line, sort.col)
        exo.append(ExogenousEvent(sort.text, pa.params[0], pa.prob_cases[0][1], pa.add, pa.delete))
    reward = build_expression(reward_raw[0], Env(predicates, constants))
    spec = RmdpSpec(sorts, predicates, tuple(actions), reward, discount, mode, tuple(exo))
    problems = validate_spec(spec)
    if problems:
        raise ParseError("; ".join(problems))
    return spec


def _typed(p: Parser):
    v = p.ident()
    p.take(":")
    return v, p.ident()


def _action_body(p: Parser):
    p.take("{")
    p.take("prob")
    if p.at("{"):
        prob = p.case_block()
    else:
        tok = p.tok
        prob = [(("const", True), p.number(), tok)]
    lists = {"add": [], "del": []}
    while not p.at("}"):
        kw = p.ident()
        if kw.text not in lists:
            raise p.error(f"expected add, del or '}}', found {kw.text!r}", kw)
        p.take("[")
        if not p.at("]"):
            lists[kw.text].append(p.atom_rest(p.ident()))
            while p.accept(","):
                lists[kw.text].append(p.atom_rest(p.ident()))
        p.take("]")
    p.take("}")
    return prob, lists["add"], lists["del"]


def _build_action(name: str, params: list[Term], body, env: Env) -> PstripsAction:
    prob_raw, add_raw, del_raw = body
    cases = []
    seen: list[Formula] = []
    for i, (cond, value, tok) in enumerate(prob_raw):
        if cond == "otherwise":
            f = logic.neg(logic.disj(*seen))
        else:
            f = env.formula(cond)
        if not 0 <= value <= 1:
            raise ParseError(f"probability {value} outside [0, 1]", tok.line, tok.col)
        seen.append(f)
        cases.append((f, value))
    adds = tuple(env.atom(a) for a in add_raw)
    for a, raw in zip(adds, add_raw):
        if any(t.name == "*" for t in a.args):
            tok = raw[1]
            raise ParseError("wildcards are only allowed in delete lists", tok.line, tok.col)
    dels = tuple(env.atom(a) for a in del_raw)
    return PstripsAction(name, tuple(params), tuple(cases), adds, dels)


# -- printing ---------------------------------------------------------------------------


def _plain(f: Formula) -> str:
    """Render with parameters printed as ordinary variables."""
    m = {t: logic.var(t.name, t.sort) for t in logic.terms(f) if t.kind is Kind.PARAM}
    return logic.apply_substitution(f, m).key if m else f.key


def _atom_text(a: logic.Atom) -> str:
    return f"{a.pred}({', '.join(t.name for t in a.args)})"


def print_domain(spec: RmdpSpec) -> str:
    lines = []
    for s, cs in spec.sorts.items():
        lines.append(f"sort {s} [ {', '.join(cs)} ]" if cs else f"sort {s}")
    for pr in spec.predicates.values():
        lines.append(f"pred {pr.name}({', '.join(pr.sorts)})")
    for a in spec.actions:
        src = a.source
        if src is None:
            raise ModelError(f"action {a.name} has no add/delete source to print")
        params = ", ".join(f"{t.name}: {t.sort}" for t in src.params)
        lines.append(f"action {src.name}({params}) {{")
        lines.append(f"  prob {_prob_text(src)}")
        lines.append(f"  add [ {', '.join(_atom_text(x) for x in src.add)} ]")
        lines.append(f"  del [ {', '.join(_atom_text(x) for x in src.delete)} ]")
        lines.append("}")
    for e in spec.exogenous:
        lines.append(f"exogenous {e.sort} {e.param.name} {{")
        lines.append(f"  prob {fmt_value(e.prob)}")
        lines.append(f"  add [ {', '.join(_atom_text(x) for x in e.add)} ]")
        lines.append(f"  del [ {', '.join(_atom_text(x) for x in e.delete)} ]")
        lines.append("}")
    lines.append(f"reward {print_expression(spec.reward)}")
    lines.append(f"discount {fmt_value(spec.discount)}")
    lines.append(f"mode {spec.mode}")
    return "\n".join(lines) + "\n"


def _prob_text(a: PstripsAction) -> str:
    if len(a.prob_cases) == 1 and a.prob_cases[0][0] == TRUE:
        return fmt_value(a.prob_cases[0][1])
    body = " ; ".join(f"{_plain(f)} : {fmt_value(v)}" for f, v in a.prob_cases)
    return f"{{ {body} }}"


def print_expression(e: RelationalExpression) -> str:
    from .relexpr import render
    return render(e)


# -- state files -----------------------------------------------------------------------


def parse_state(text: str, spec: RmdpSpec) -> logic.Interpretation:
    """``objects Sort: a, b`` lines followed by one true ground atom per line."""
    objects: dict[str, list[str]] = {s: list(cs) for s, cs in spec.sorts.items()}
    true_atoms = set()
    sort_of = {c: s for s, cs in spec.sorts.items() for c in cs}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("objects"):
            m = re.fullmatch(r"objects\s+(\w+)\s*:\s*(.*)", line)
            if not m or m.group(1) not in spec.sorts:
                raise ParseError(f"bad objects line {line!r}", n, 1)
            for o in (x.strip() for x in m.group(2).split(",")):
                if not o:
                    continue
                if sort_of.setdefault(o, m.group(1)) != m.group(1):
                    raise ParseError(f"object {o} declared with two sorts", n, 1)
                if o not in objects[m.group(1)]:
                    objects[m.group(1)].append(o)
            continue
        m = re.fullmatch(r"(\w+)\s*\(([^)]*)\)", line)
        if not m or m.group(1) not in spec.predicates:
            raise ParseError(f"bad ground atom {line!r}", n, 1)
        pred = spec.predicates[m.group(1)]
        args = tuple(x.strip() for x in m.group(2).split(",")) if m.group(2).strip() else ()
        if len(args) != pred.arity:
            raise ParseError(f"{pred.name} expects {pred.arity} arguments", n, 1)
        for o, s in zip(args, pred.sorts):
            if sort_of.get(o) != s:
                raise ParseError(f"{o} is not a declared object of sort {s}", n, 1)
        true_atoms.add((pred.name, *args))
    return logic.Interpretation({s: tuple(v) for s, v in objects.items()},
                                {c: c for c in spec.constants}, frozenset(true_atoms))


def print_state(interp: logic.Interpretation) -> str:
    lines = [f"objects {s}: {', '.join(objs)}" for s, objs in interp.objects.items()]
    lines += [f"{a[0]}({', '.join(a[1:])})" for a in sorted(interp.true_atoms)]
    return "\n".join(lines) + "\n"


def load_domain(path) -> RmdpSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_domain(fh.read())


def bundled_domain(name: str) -> RmdpSpec:
    from importlib.resources import files
    return parse_domain(files("relsdp.domains").joinpath(name).read_text(encoding="utf-8"))


def domain_names() -> Iterable[str]:
    from importlib.resources import files
    return sorted(p.name for p in files("relsdp.domains").iterdir() if p.name.endswith(".rmdp"))
