"""Direct evaluation of SQL LIKE patterns and string comparisons.

This is the reference semantics used by the executor and by the string
solver's result validation; it never touches the automaton machinery.
"""

from __future__ import annotations


def parse_pattern(pattern: str) -> list[tuple[str, str]]:
    """Tokenize a LIKE pattern into (kind, char) items.

    kinds: "lit" (literal char), "any" (_), "many" (%). Backslash escapes
    the next character.
    """
    out = []
    i = 0
    while i < len(pattern):
        c = pattern[i]
        if c == "\\" and i + 1 < len(pattern):
            out.append(("lit", pattern[i + 1]))
            i += 2
        elif c == "%":
            out.append(("many", c))
            i += 1
        elif c == "_":
            out.append(("any", c))
            i += 1
        else:
            out.append(("lit", c))
            i += 1
    return out


def like_match(pattern: str, text: str, case_insensitive: bool = False) -> bool:
    items = parse_pattern(pattern)
    if case_insensitive:
        text = text.lower()
        items = [(k, c.lower()) for k, c in items]
    # classic two-pointer wildcard matching over tokenized pattern
    ti = pi = 0
    star_pi = star_ti = -1
    n, m = len(text), len(items)
    while ti < n:
        if pi < m and (items[pi][0] == "any" or
                       (items[pi][0] == "lit" and items[pi][1] == text[ti])):
            ti += 1
            pi += 1
        elif pi < m and items[pi][0] == "many":
            star_pi, star_ti = pi, ti
            pi += 1
        elif star_pi >= 0:
            star_ti += 1
            ti = star_ti
            pi = star_pi + 1
        else:
            return False
    while pi < m and items[pi][0] == "many":
        pi += 1
    return pi == m


def str_relop(a: str, op: str, b: str) -> bool:
    """Byte-wise (codepoint) string comparison, '~=' is case-insensitive eq."""
    if op == "~=":
        return a.lower() == b.lower()
    return {
        "=": a == b, "<>": a != b, "<": a < b, "<=": a <= b,
        ">": a > b, ">=": a >= b,
    }[op]


def strlen_relop(s: str, op: str, k: int) -> bool:
    n = len(s)
    return {
        "=": n == k, "<>": n != k, "<": n < k, "<=": n <= k,
        ">": n > k, ">=": n >= k,
    }[op]
