"""Solver-independent constraint scripts.

Terms are plain tuples; leaves are ("v", name), ("n", number) and
("e", sort, member_index). A small independent evaluator checks decoded
models against every assertion, giving the dual route to the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

NULL_THRESHOLD = -(10 ** 6)   # numeric sentinels descend from here


def v(name: str) -> tuple:
    return ("v", name)


def n(value) -> tuple:
    return ("n", value)


def e(sort: str, idx: int) -> tuple:
    return ("e", sort, idx)


def conj(terms) -> tuple:
    items = [t for t in terms if t != ("b", True)]
    if not items:
        return ("b", True)
    if len(items) == 1:
        return items[0]
    return ("and", *items)


def disj(terms) -> tuple:
    items = [t for t in terms if t != ("b", False)]
    if any(t == ("b", True) for t in items):
        return ("b", True)
    if not items:
        return ("b", False)
    if len(items) == 1:
        return items[0]
    return ("or", *items)


def neg(term: tuple) -> tuple:
    if term == ("b", True):
        return ("b", False)
    if term == ("b", False):
        return ("b", True)
    if term[0] == "not":
        return term[1]
    return ("not", term)


TRUE = ("b", True)
FALSE = ("b", False)


@dataclass
class EnumMember:
    symbol: str
    value: str | None       # decoded text; None for NULL members


@dataclass
class EnumSort:
    name: str
    members: list[EnumMember] = field(default_factory=list)
    index_of_value: dict[str, int] = field(default_factory=dict)

    def add(self, value: str | None, null_tag: str | None = None) -> int:
        if value is not None and value in self.index_of_value:
            return self.index_of_value[value]
        idx = len(self.members)
        symbol = null_tag if null_tag else f"{self.name}_m{idx}"
        self.members.append(EnumMember(symbol, value))
        if value is not None:
            self.index_of_value[value] = idx
        return idx


@dataclass
class ConstraintScript:
    enums: dict[str, EnumSort] = field(default_factory=dict)
    variables: dict[str, str] = field(default_factory=dict)     # name -> sort
    assertions: list[tuple] = field(default_factory=list)
    var_slot: dict[str, tuple[str, int, str]] = field(default_factory=dict)
    slot_count: dict[str, int] = field(default_factory=dict)    # relation -> tuples
    metadata: dict = field(default_factory=dict)

    def declare(self, name: str, sort: str,
                slot: tuple[str, int, str] | None = None) -> tuple:
        if name in self.variables:
            if self.variables[name] != sort:
                raise ValueError(f"{name} redeclared with different sort")
            return v(name)
        self.variables[name] = sort
        if slot is not None:
            self.var_slot[name] = slot
        return v(name)

    def add(self, term: tuple) -> None:
        if term == TRUE:
            return
        self.assertions.append(term)

    def enum_sort(self, name: str) -> EnumSort:
        sort = self.enums.get(name)
        if sort is None:
            sort = self.enums[name] = EnumSort(name)
        return sort


def _sym(text: str) -> str:
    ok = all(c.isalnum() or c in "_-." for c in text) and text and not text[0].isdigit()
    return text if ok else f"|{text}|"


def _emit_number(value) -> str:
    f = Fraction(value)
    if f.denominator == 1:
        x = int(f)
        return str(x) if x >= 0 else f"(- {-x})"
    a = abs(f)
    body = f"(/ {a.numerator} {a.denominator})"
    return body if f >= 0 else f"(- {body})"


def emit_term(term: tuple, enums: dict[str, EnumSort]) -> str:
    tag = term[0]
    if tag == "v":
        return _sym(term[1])
    if tag == "n":
        return _emit_number(term[1])
    if tag == "e":
        return _sym(enums[term[1]].members[term[2]].symbol)
    if tag == "b":
        return "true" if term[1] else "false"
    args = " ".join(emit_term(t, enums) for t in term[1:])
    return f"({tag} {args})"


def emit_smtlib(script: ConstraintScript) -> str:
    """Serialize to a deterministic SMT-LIB v2 document."""
    out = ["(set-logic ALL)"]
    for name in sorted(script.enums):
        sort = script.enums[name]
        ctors = " ".join(f"({_sym(m.symbol)})" for m in sort.members)
        out.append(f"(declare-datatypes (({_sym(name)} 0)) (({ctors})))")
    for name, sort_name in script.variables.items():
        out.append(f"(declare-const {_sym(name)} {_sym(sort_name)})")
    for term in script.assertions:
        out.append(f"(assert {emit_term(term, script.enums)})")
    out.append("(check-sat)")
    out.append("(get-model)")
    out.append("(exit)")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# Independent term evaluation (model revalidation)

def eval_term(term: tuple, assignment: dict[str, object]):
    """Evaluate a term under a model assignment.

    Numeric values are ints/Fractions; enum values are (sort, index) pairs.
    """
    tag = term[0]
    if tag == "v":
        return assignment[term[1]]
    if tag == "n":
        return Fraction(term[1])
    if tag == "e":
        return (term[1], term[2])
    if tag == "b":
        return term[1]
    if tag == "and":
        return all(eval_term(t, assignment) for t in term[1:])
    if tag == "or":
        return any(eval_term(t, assignment) for t in term[1:])
    if tag == "not":
        return not eval_term(term[1], assignment)
    if tag == "=>":
        return (not eval_term(term[1], assignment)) or eval_term(term[2], assignment)
    args = [eval_term(t, assignment) for t in term[1:]]
    if tag == "=":
        return args[0] == args[1]
    if tag == "distinct":
        return len(set(args)) == len(args)
    if tag == "<":
        return args[0] < args[1]
    if tag == "<=":
        return args[0] <= args[1]
    if tag == ">":
        return args[0] > args[1]
    if tag == ">=":
        return args[0] >= args[1]
    if tag == "+":
        return sum(args, Fraction(0))
    if tag == "-":
        if len(args) == 1:
            return -args[0]
        result = args[0]
        for a in args[1:]:
            result -= a
        return result
    if tag == "*":
        result = Fraction(1)
        for a in args:
            result *= a
        return result
    if tag == "/":
        return args[0] / args[1]
    raise ValueError(f"cannot evaluate {tag}")


def check_model(script: ConstraintScript, assignment: dict[str, object]) -> list[tuple]:
    """Return the assertions the assignment violates (empty = model is sound)."""
    failures = []
    for term in script.assertions:
        if not eval_term(term, assignment):
            failures.append(term)
    return failures
