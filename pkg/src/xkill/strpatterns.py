"""Translate string constraints into pattern ASTs and display regexes.

The alphabet order is byte-wise over the configured working alphabet.
"""

from __future__ import annotations

from .errors import Unsatisfiable
from .strautomaton import (Alt, EPSILON, Lit, Plus, Seq, Star, alt, lit, literal,
                           seq)
from .strings_like import parse_pattern


def _chars_lt(alphabet: str, c: str) -> frozenset:
    return frozenset(x for x in alphabet if x < c)


def _chars_gt(alphabet: str, c: str) -> frozenset:
    return frozenset(x for x in alphabet if x > c)


def _any(alphabet: str) -> Lit:
    return lit(alphabet)


def relop_ast(op: str, const: str, alphabet: str):
    """Pattern for {var op const} over the alphabet's total order."""
    anystar = Star(_any(alphabet))
    if op == "=":
        return literal(const)
    if op == "~=":
        items = []
        for c in const:
            variants = {c, c.lower(), c.upper()} & set(alphabet + c)
            items.append(lit(variants))
        return Seq(tuple(items))
    branches = []
    if op in {"<", "<=", "<>"}:
        # strictly smaller: shorter prefix, or smaller char at first difference
        for i in range(len(const)):
            prefix = literal(const[:i])
            smaller = _chars_lt(alphabet, const[i])
            if smaller:
                branches.append(seq(prefix, lit(smaller), anystar))
            branches.append(literal(const[:i]))      # proper prefix (shorter)
        if op == "<=":
            branches.append(literal(const))
    if op in {">", ">=", "<>"}:
        for i in range(len(const)):
            bigger = _chars_gt(alphabet, const[i])
            if bigger:
                branches.append(seq(literal(const[:i]), lit(bigger), anystar))
        branches.append(seq(literal(const), Plus(_any(alphabet))))
        if op == ">=":
            branches.append(literal(const))
    if not branches:
        raise Unsatisfiable(f"no string satisfies {op} {const!r} over this alphabet")
    return Alt(tuple(branches))


def like_ast(pattern: str, alphabet: str, case_insensitive: bool = False):
    items = []
    for kind, c in parse_pattern(pattern):
        if kind == "many":
            items.append(Star(_any(alphabet)))
        elif kind == "any":
            items.append(_any(alphabet))
        else:
            if case_insensitive:
                items.append(lit({c.lower(), c.upper()}))
            else:
                items.append(lit({c}))
    return Seq(tuple(items))


# --------------------------------------------------------------------------
# Display regexes (paper-style, \w = any working-alphabet character)

def _regex_escape(c: str) -> str:
    return "\\" + c if c in r".^$*+?()[]{}|\\" else c


def _class(chars: frozenset, alphabet: str) -> str:
    if len(chars) == 1:
        return _regex_escape(next(iter(chars)))
    ordered = sorted(chars)
    # compress contiguous runs in alphabet order
    pos = {c: i for i, c in enumerate(sorted(alphabet))}
    runs = []
    start = prev = ordered[0]
    for c in ordered[1:]:
        if pos[c] == pos[prev] + 1:
            prev = c
            continue
        runs.append((start, prev))
        start = prev = c
    runs.append((start, prev))
    body = "".join(s if s == e else f"{s}-{e}" for s, e in runs)
    return f"[{body}]"


def to_regex(kind: str, op: str, operand: str, alphabet: str) -> str:
    """Human-readable regex for one constraint (spec surface; tests compare
    against the automaton route on concrete strings)."""
    full = set(alphabet)

    def render(ast) -> str:
        if isinstance(ast, Lit):
            if ast.chars == frozenset(full):
                return r"\w"
            return _class(ast.chars, alphabet)
        if isinstance(ast, Seq):
            return "".join(render(i) for i in ast.items)
        if isinstance(ast, Alt):
            return "|".join(render(i) or "()" for i in ast.items)
        if isinstance(ast, Star):
            return _wrap(ast.item) + "*"
        if isinstance(ast, Plus):
            return _wrap(ast.item) + "+"
        raise TypeError(str(ast))

    def _wrap(item) -> str:
        inner = render(item)
        if isinstance(item, Lit) or len(inner) <= 2:
            return inner
        return f"({inner})"

    if kind == "relop":
        return render(relop_ast(op, operand, alphabet))
    if kind == "like":
        return render(like_ast(operand, alphabet, case_insensitive=False))
    if kind == "ilike":
        return render(like_ast(operand, alphabet, case_insensitive=True))
    raise ValueError(kind)
