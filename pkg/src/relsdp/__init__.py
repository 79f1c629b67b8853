"""Symbolic dynamic programming for relational MDPs.

Value functions are relational expressions: an aggregation prefix over typed
variables applied to exclusive cases of quantifier-free formulas.  They are
computed once, independently of how many objects a concrete problem has, and
can be checked against brute-force value iteration on small instances.
"""

from .exo import backup_additive, regress_exogenous, solve_additive, sum_to_avg
from .model import RmdpSpec
from .oracle import GroundInstance, conformance_check, tabular_vi
from .parser import bundled_domain, load_domain, parse_domain, parse_expression, parse_state
from .relexpr import RelationalExpression, apply_binary, canonicalize, evaluate, render, simplify
from .sdp import DecisionListPolicy, ValueFunction, backup, extract_policy, solve

__all__ = [
    "DecisionListPolicy", "GroundInstance", "RelationalExpression", "RmdpSpec", "ValueFunction",
    "apply_binary", "backup", "backup_additive", "bundled_domain", "canonicalize",
    "conformance_check", "evaluate", "extract_policy", "load_domain", "parse_domain",
    "parse_expression", "parse_state", "regress_exogenous", "render", "simplify", "solve",
    "solve_additive", "sum_to_avg", "tabular_vi",
]
