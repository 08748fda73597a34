"""Finite-domain solver for the SMT-LIB v2 fragment this toolkit emits.

Runs as a child process: reads an SMT-LIB script on stdin, answers
``sat``/``unsat``/``unknown`` and a ``(get-model)`` block on stdout.
The fragment: enum datatypes, Int/Real constants, linear arithmetic,
and/or/not/=>/=/distinct.

Internals: linear atoms are normalized to integer coefficients, domains
are integer intervals with holes (exact rational intervals for Real
variables), propagation is bounds consistency driven by per-variable
watch lists, and search interleaves or-branching with interval
bisection, undoing via a trail.

Any external SMT-LIB v2 solver can replace this one via configuration;
conversely this module has no dependency on the rest of the package.
"""

from __future__ import annotations

import sys
import time
from fractions import Fraction

NEG = {"=": "distinct", "distinct": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}

INF = 10 ** 24


# --------------------------------------------------------------------------
# S-expression parsing

def parse_sexprs(text: str) -> list:
    exprs, stack, cur = [], [], []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";":
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
        elif c == "(":
            stack.append(cur)
            cur = []
            i += 1
        elif c == ")":
            done = cur
            cur = stack.pop()
            cur.append(done)
            i += 1
        elif c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise ValueError("unterminated quoted symbol")
            cur.append(text[i + 1:j])
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            cur.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n()|;":
                j += 1
            cur.append(text[i:j])
            i = j
        if not stack and cur:
            exprs.extend(cur)
            cur = []
    if stack:
        raise ValueError("unbalanced parentheses")
    return exprs


def _numeral(tok: str) -> Fraction | None:
    try:
        if "." in tok:
            return Fraction(tok)
        return Fraction(int(tok))
    except ValueError:
        return None


class Problem:
    def __init__(self):
        self.enums: dict[str, list[str]] = {}
        self.member_of: dict[str, tuple[str, int]] = {}
        self.vars: dict[str, str] = {}
        self.defs: dict[str, tuple[list[str], object]] = {}
        self.asserts: list = []

    def load(self, exprs: list) -> None:
        for expr in exprs:
            if not isinstance(expr, list) or not expr:
                continue
            head = expr[0]
            if head == "declare-datatypes":
                decls, bodies = expr[1], expr[2]
                for (name, _arity), ctors in zip(decls, bodies):
                    members = [c[0] if isinstance(c, list) else c for c in ctors]
                    self.enums[name] = members
                    for idx, m in enumerate(members):
                        self.member_of[m] = (name, idx)
            elif head == "declare-const":
                self.vars[expr[1]] = expr[2]
            elif head == "declare-fun" and expr[2] == []:
                self.vars[expr[1]] = expr[3]
            elif head == "define-fun":
                params = [p[0] for p in expr[2]]
                self.defs[expr[1]] = (params, expr[4])
            elif head == "assert":
                self.asserts.append(self.expand(expr[1], {}))

    def expand(self, term, env: dict):
        if isinstance(term, str):
            return env.get(term, term)
        if not term:
            return term
        head = term[0]
        if isinstance(head, str) and head in self.defs:
            params, body = self.defs[head]
            sub = dict(zip(params, (self.expand(a, env) for a in term[1:])))
            return self.expand(body, sub)
        return [self.expand(t, env) for t in term]


# --------------------------------------------------------------------------
# Normalization
#
# Atom forms (all coefficients/constants integers after LCM scaling):
#   ("lin", ((var, coeff), ...), const, op)
#   ("enum=", var, idx) / ("enum!=", var, idx)
#   ("evar=", a, b) / ("evar!=", a, b)
#   ("true",) / ("false",)
# Nodes: ("and", [..]) / ("or", [..])

class Unsupported(Exception):
    pass


class Normalizer:
    def __init__(self, problem: Problem):
        self.p = problem

    def formula(self, term, neg: bool = False):
        if isinstance(term, str):
            if term == "true":
                return ("false",) if neg else ("true",)
            if term == "false":
                return ("true",) if neg else ("false",)
            raise Unsupported(f"bare symbol {term}")
        head = term[0]
        if head == "not":
            return self.formula(term[1], not neg)
        if head == "and":
            items = [self.formula(t, neg) for t in term[1:]]
            return ("or" if neg else "and", items)
        if head == "or":
            items = [self.formula(t, neg) for t in term[1:]]
            return ("and" if neg else "or", items)
        if head == "=>":
            if neg:
                return ("and", [self.formula(term[1], True),
                                self.formula(term[2], True)])
            # consequent first: the search prefers collapsing onto equal
            # tuples over inventing distinct ones
            return ("or", [self.formula(term[2], False),
                           self.formula(term[1], True)])
        if head in {"=", "distinct", "<", "<=", ">", ">="}:
            return self.atom(head, term[1:], neg)
        raise Unsupported(f"operator {head}")

    def atom(self, op: str, args: list, neg: bool):
        if neg:
            op = NEG[op]
        if op in {"=", "distinct"} and len(args) > 2:
            pairs = []
            if op == "distinct":
                for i in range(len(args)):
                    for j in range(i + 1, len(args)):
                        pairs.append(self.atom_pair(op, args[i], args[j]))
            else:
                for i in range(len(args) - 1):
                    pairs.append(self.atom_pair(op, args[i], args[i + 1]))
            return ("and", pairs)
        return self.atom_pair(op, args[0], args[1])

    def _enum_operand(self, t):
        if isinstance(t, str):
            if t in self.p.member_of:
                return ("m", *self.p.member_of[t])
            sort = self.p.vars.get(t)
            if sort in self.p.enums:
                return ("v", t, sort)
        return None

    def atom_pair(self, op: str, a, b):
        ea, eb = self._enum_operand(a), self._enum_operand(b)
        if ea or eb:
            if not (ea and eb):
                raise Unsupported("enum compared with arithmetic")
            if op not in {"=", "distinct"}:
                raise Unsupported(f"enum ordering {op}")
            tag = "=" if op == "=" else "!="
            if ea[0] == "m" and eb[0] == "m":
                same = ea[1:] == eb[1:]
                return ("true",) if (same if tag == "=" else not same) \
                    else ("false",)
            if ea[0] == "m":
                ea, eb = eb, ea
            if eb[0] == "m":
                return (f"enum{tag}", ea[1], eb[2])
            return (f"evar{tag}", ea[1], eb[1])
        coeffs: dict[str, Fraction] = {}
        const = Fraction(0)

        def add(t, mult: Fraction):
            nonlocal const
            if isinstance(t, str):
                num = _numeral(t)
                if num is not None:
                    const += mult * num
                    return
                if t in self.p.vars:
                    coeffs[t] = coeffs.get(t, Fraction(0)) + mult
                    return
                raise Unsupported(f"symbol {t}")
            h = t[0]
            if h == "+":
                for x in t[1:]:
                    add(x, mult)
            elif h == "-":
                if len(t) == 2:
                    add(t[1], -mult)
                else:
                    add(t[1], mult)
                    for x in t[2:]:
                        add(x, -mult)
            elif h == "*":
                sym = [f for f in t[1:] if not self._is_const(f)]
                if len(sym) > 1:
                    raise Unsupported("nonlinear product")
                k = Fraction(1)
                for f in t[1:]:
                    if self._is_const(f):
                        k *= self._const_value(f)
                if sym:
                    add(sym[0], mult * k)
                else:
                    const += mult * k
            elif h == "/":
                if not self._is_const(t[2]):
                    raise Unsupported("division by variable")
                add(t[1], mult / self._const_value(t[2]))
            else:
                raise Unsupported(f"arith operator {h}")

        add(a, Fraction(1))
        add(b, Fraction(-1))
        coeffs = {vv: c for vv, c in coeffs.items() if c != 0}
        if op == "distinct":
            op = "!="
        if not coeffs:
            val = {"=": const == 0, "!=": const != 0, "<": const < 0,
                   "<=": const <= 0, ">": const > 0, ">=": const >= 0}[op]
            return ("true",) if val else ("false",)
        # scale to integer coefficients
        denom = 1
        for c in list(coeffs.values()) + [const]:
            denom = denom * c.denominator // _gcd(denom, c.denominator)
        items = tuple(sorted((vv, int(c * denom)) for vv, c in coeffs.items()))
        # lhs - rhs op 0  <=>  sum(items) op -const
        k = -int(const * denom)
        # strict ops over pure-Int atoms tighten to non-strict
        if op == "<" and self._all_int(items):
            return ("lin", items, k - 1, "<=")
        if op == ">" and self._all_int(items):
            return ("lin", items, k + 1, ">=")
        return ("lin", items, k, op)

    def _all_int(self, items) -> bool:
        return all(self.p.vars.get(vv) != "Real" for vv, _ in items)

    def _is_const(self, t) -> bool:
        if isinstance(t, str):
            return _numeral(t) is not None
        if t and t[0] == "-" and len(t) == 2:
            return self._is_const(t[1])
        if t and t[0] == "/" and len(t) == 3:
            return self._is_const(t[1]) and self._is_const(t[2])
        return False

    def _const_value(self, t) -> Fraction:
        if isinstance(t, str):
            return _numeral(t)
        if t[0] == "-":
            return -self._const_value(t[1])
        return self._const_value(t[1]) / self._const_value(t[2])


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


# --------------------------------------------------------------------------
# Solver state

class Conflict(Exception):
    def __init__(self, involved=()):
        super().__init__()
        self.involved = tuple(involved)


class Dom:
    __slots__ = ("kind", "lo", "hi", "holes", "members")

    def __init__(self, kind, lo=None, hi=None, holes=frozenset(), members=None):
        self.kind = kind
        self.lo = lo
        self.hi = hi
        self.holes = holes
        self.members = members

    def fixed(self):
        if self.kind == "enum":
            return next(iter(self.members)) if len(self.members) == 1 else None
        return self.lo if self.lo == self.hi else None


class Solver:
    def __init__(self, problem: Problem, deadline: float,
                 node_budget: int = 2_000_000):
        self.p = problem
        self.deadline = deadline
        self.budget = node_budget
        self.nodes = 0
        self.doms: dict[str, Dom] = {}
        for name, sort in problem.vars.items():
            if sort == "Int":
                self.doms[name] = Dom("int", -INF, INF)
            elif sort == "Real":
                self.doms[name] = Dom("real", Fraction(-INF), Fraction(INF))
            elif sort == "Bool":
                self.doms[name] = Dom("int", 0, 1)
            elif sort in problem.enums:
                self.doms[name] = Dom(
                    "enum", members=frozenset(range(len(problem.enums[sort]))))
            else:
                raise Unsupported(f"sort {sort}")
        self.formulas: list = []
        self.active: list[bool] = []
        self.watch: dict[str, list[int]] = {name: [] for name in self.doms}
        self.trail: list = []
        self.activity: dict[str, float] = {}
        self._bump = 1.0
        norm = Normalizer(problem)
        roots: list = []
        for a in problem.asserts:
            self._flatten(norm.formula(a), roots)
        roots = self._merge_equalities(roots)
        for f in roots:
            self._add_constraint(f)

    def _merge_equalities(self, roots: list) -> list:
        """Union-find over unconditional equalities; rewrite onto reps."""
        parent: dict[str, str] = {}

        def find(x: str) -> str:
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def prefer(a: str, b: str) -> tuple[str, str]:
            # Int representative beats Real (integrality is the tighter sort)
            ka, kb = self.doms[a].kind, self.doms[b].kind
            if ka == kb:
                return (a, b) if a <= b else (b, a)
            if ka == "int":
                return a, b
            return b, a

        for f in roots:
            if f[0] == "evar=":
                ra, rb = find(f[1]), find(f[2])
                if ra != rb:
                    keep, drop = prefer(ra, rb)
                    parent[drop] = keep
            elif f[0] == "lin" and f[3] == "=" and f[2] == 0 and \
                    len(f[1]) == 2:
                (xa, ca), (xb, cb) = f[1]
                if {ca, cb} == {1, -1}:
                    ra, rb = find(xa), find(xb)
                    if ra != rb and "real" not in (self.doms[ra].kind,
                                                   self.doms[rb].kind):
                        keep, drop = prefer(ra, rb)
                        parent[drop] = keep
        if not parent:
            self.merged = {}
            return roots
        self.merged = {x: find(x) for x in parent if find(x) != x}

        def subst(f):
            tag = f[0]
            if tag in {"and", "or"}:
                items = []
                for x in f[1]:
                    s = subst(x)
                    if s[0] == "true" and tag == "or":
                        return ("true",)
                    if s[0] == "false" and tag == "and":
                        return ("false",)
                    if s[0] == "true" and tag == "and":
                        continue
                    if s[0] == "false" and tag == "or":
                        continue
                    items.append(s)
                if not items:
                    return ("true",) if tag == "and" else ("false",)
                if len(items) == 1:
                    return items[0]
                return (tag, items)
            if tag == "lin":
                _, items, k, op = f
                combined: dict[str, int] = {}
                for vv, c in items:
                    rep = self.merged.get(vv, vv)
                    combined[rep] = combined.get(rep, 0) + c
                combined = {vv: c for vv, c in combined.items() if c}
                if not combined:
                    val = {"=": 0 == k, "!=": 0 != k, "<": 0 < k, "<=": 0 <= k,
                           ">": 0 > k, ">=": 0 >= k}[op]
                    return ("true",) if val else ("false",)
                return ("lin", tuple(sorted(combined.items())), k, op)
            if tag in {"enum=", "enum!="}:
                return (tag, self.merged.get(f[1], f[1]), f[2])
            if tag in {"evar=", "evar!="}:
                a = self.merged.get(f[1], f[1])
                b = self.merged.get(f[2], f[2])
                if a == b:
                    same_ok = tag == "evar="
                    return ("true",) if same_ok else ("false",)
                return (tag, a, b)
            return f

        out = []
        for f in roots:
            s = subst(f)
            if s[0] == "true":
                continue
            out.append(s)
        return out

    # ---------------------------------------------------------------- plumbing

    def _flatten(self, f, out: list) -> None:
        if f[0] == "and":
            for x in f[1]:
                self._flatten(x, out)
        elif f[0] == "true":
            pass
        else:
            out.append(f)

    def _vars_of(self, f):
        tag = f[0]
        if tag in {"and", "or"}:
            for x in f[1]:
                yield from self._vars_of(x)
        elif tag == "lin":
            for vv, _ in f[1]:
                yield vv
        elif tag in {"enum=", "enum!="}:
            yield f[1]
        elif tag in {"evar=", "evar!="}:
            yield f[1]
            yield f[2]

    def _add_constraint(self, f) -> int:
        cid = len(self.formulas)
        self.formulas.append(f)
        self.active.append(True)
        for vv in set(self._vars_of(f)):
            self.watch[vv].append(cid)
        return cid

    def _set_dom(self, var: str, dom: Dom, queue: list) -> None:
        old = self.doms[var]
        if old.kind == "enum":
            if dom.members == old.members:
                return
            if not dom.members:
                raise Conflict((var,))
        else:
            if dom.lo == old.lo and dom.hi == old.hi and dom.holes == old.holes:
                return
            if dom.lo > dom.hi:
                raise Conflict((var,))
            while dom.kind == "int" and dom.lo in dom.holes:
                dom = Dom("int", dom.lo + 1, dom.hi, dom.holes)
                if dom.lo > dom.hi:
                    raise Conflict((var,))
            while dom.kind == "int" and dom.hi in dom.holes:
                dom = Dom("int", dom.lo, dom.hi - 1, dom.holes)
                if dom.lo > dom.hi:
                    raise Conflict((var,))
        self.trail.append(("dom", var, old))
        self.doms[var] = dom
        queue.extend(self.watch[var])

    def _deactivate(self, cid: int) -> None:
        if self.active[cid]:
            self.active[cid] = False
            self.trail.append(("deact", cid))

    def _undo_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            op = self.trail.pop()
            if op[0] == "dom":
                self.doms[op[1]] = op[2]
            elif op[0] == "deact":
                self.active[op[1]] = True
            elif op[0] == "new":
                cid = op[1]
                if cid == len(self.formulas) - 1:
                    f = self.formulas.pop()
                    self.active.pop()
                    for vv in set(self._vars_of(f)):
                        bucket = self.watch[vv]
                        if bucket and bucket[-1] == cid:
                            bucket.pop()
                else:
                    self.active[cid] = False

    # ---------------------------------------------------------------- status

    def status(self, f) -> str:
        tag = f[0]
        if tag == "true":
            return "T"
        if tag == "false":
            return "F"
        if tag == "and":
            result = "T"
            for x in f[1]:
                s = self.status(x)
                if s == "F":
                    return "F"
                if s == "?":
                    result = "?"
            return result
        if tag == "or":
            result = "F"
            for x in f[1]:
                s = self.status(x)
                if s == "T":
                    return "T"
                if s == "?":
                    result = "?"
            return result
        if tag == "lin":
            _, items, k, op = f
            lo = hi = 0
            for vv, c in items:
                d = self.doms[vv]
                if c > 0:
                    lo += c * d.lo
                    hi += c * d.hi
                else:
                    lo += c * d.hi
                    hi += c * d.lo
            # sum(items) op k
            if op == "<=":
                return "T" if hi <= k else ("F" if lo > k else "?")
            if op == ">=":
                return "T" if lo >= k else ("F" if hi < k else "?")
            if op == "<":
                return "T" if hi < k else ("F" if lo >= k else "?")
            if op == ">":
                return "T" if lo > k else ("F" if hi <= k else "?")
            if op == "=":
                if lo == hi == k:
                    return "T"
                return "F" if (lo > k or hi < k) else "?"
            if op == "!=":
                if lo > k or hi < k:
                    return "T"
                if lo == hi == k:
                    return "F"
                return "?"
        if tag == "enum=":
            mem = self.doms[f[1]].members
            if f[2] not in mem:
                return "F"
            return "T" if len(mem) == 1 else "?"
        if tag == "enum!=":
            mem = self.doms[f[1]].members
            if f[2] not in mem:
                return "T"
            return "F" if len(mem) == 1 else "?"
        if tag == "evar=":
            ma, mb = self.doms[f[1]].members, self.doms[f[2]].members
            if not (ma & mb):
                return "F"
            return "T" if len(ma) == 1 and ma == mb else "?"
        if tag == "evar!=":
            ma, mb = self.doms[f[1]].members, self.doms[f[2]].members
            if not (ma & mb):
                return "T"
            return "F" if len(ma) == 1 and ma == mb else "?"
        raise Unsupported(f"formula {tag}")

    # ---------------------------------------------------------------- propagate

    def _tighten(self, var: str, lo=None, hi=None, queue=None) -> None:
        d = self.doms[var]
        new_lo, new_hi = d.lo, d.hi
        if lo is not None and lo > new_lo:
            new_lo = lo
        if hi is not None and hi < new_hi:
            new_hi = hi
        if new_lo != d.lo or new_hi != d.hi:
            self._set_dom(var, Dom(d.kind, new_lo, new_hi, d.holes), queue)

    def _equality_adjacency(self) -> dict:
        """Adjacency over active two-variable equalities (lin and enum)."""
        adj: dict[str, list[str]] = {}
        for cid in range(len(self.formulas)):
            if not self.active[cid]:
                continue
            f = self.formulas[cid]
            pair = None
            if f[0] == "lin" and f[3] == "=" and f[2] == 0 and len(f[1]) == 2:
                (xa, ca), (xb, cb) = f[1]
                if {ca, cb} == {1, -1}:
                    pair = (xa, xb)
            elif f[0] == "evar=":
                pair = (f[1], f[2])
            if pair:
                adj.setdefault(pair[0], []).append(pair[1])
                adj.setdefault(pair[1], []).append(pair[0])
        return adj

    def _forced_equal(self, a: str, b: str) -> bool:
        adj = self._equality_adjacency()
        if a not in adj:
            return False
        seen = {a}
        stack = [a]
        while stack:
            cur = stack.pop()
            for nxt in adj.get(cur, ()):
                if nxt == b:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    def _or_hull(self, f, open_items, queue: list) -> None:
        """When every open branch bounds the same unfixed numeric variable
        (others fixed), tighten it to the union of branch intervals."""
        var = None
        for x in open_items:
            for vv in self._vars_of(x):
                if self.doms[vv].fixed() is not None:
                    continue
                if var is None:
                    var = vv
                elif vv != var:
                    return
        if var is None or self.doms[var].kind == "enum":
            return
        is_real = self.doms[var].kind == "real"
        lo_hull = None
        hi_hull = None
        for x in open_items:
            blo, bhi = -INF, INF
            atoms = [x] if x[0] == "lin" else (x[1] if x[0] == "and" else None)
            if atoms is None:
                return
            ok = True
            for atom in atoms:
                if atom[0] != "lin":
                    return
                coeff = 0
                rest = 0
                for vv, c in atom[1]:
                    if vv == var:
                        coeff = c
                    else:
                        fixed = self.doms[vv].fixed()
                        if fixed is None:
                            return
                        rest += c * fixed
                k, op = atom[2], atom[3]
                if coeff == 0:
                    val = {"=": rest == k, "!=": rest != k, "<": rest < k,
                           "<=": rest <= k, ">": rest > k, ">=": rest >= k}[op]
                    if not val:
                        ok = False
                        break
                    continue
                if op == "!=":
                    continue
                num = k - rest
                # coeff * var op num
                if (op in {"<=", "<", "="} and coeff > 0) or \
                        (op in {">=", ">", "="} and coeff < 0):
                    b = Fraction(num, coeff) if is_real else num // coeff
                    bhi = min(bhi, b)
                if (op in {">=", ">", "="} and coeff > 0) or \
                        (op in {"<=", "<", "="} and coeff < 0):
                    b = Fraction(num, coeff) if is_real else -((-num) // coeff)
                    blo = max(blo, b)
            if not ok:
                continue
            if blo > bhi:
                continue
            lo_hull = blo if lo_hull is None else min(lo_hull, blo)
            hi_hull = bhi if hi_hull is None else max(hi_hull, bhi)
        if lo_hull is None:
            raise Conflict(tuple(self._vars_of(f)))
        if lo_hull > -INF:
            self._tighten(var, lo=lo_hull, queue=queue)
        if hi_hull < INF:
            self._tighten(var, hi=hi_hull, queue=queue)

    def propagate_atom(self, f, queue: list) -> None:
        tag = f[0]
        if tag == "lin":
            _, items, k, op = f
            if op == "!=":
                if k == 0 and len(items) == 2:
                    (xa, ca), (xb, cb) = items
                    if {ca, cb} == {1, -1} and self._forced_equal(xa, xb):
                        raise Conflict((xa, xb))
                unfixed = [vv for vv, _ in items if self.doms[vv].fixed() is None]
                if len(unfixed) == 1:
                    var = unfixed[0]
                    rest = 0
                    coeff = 0
                    for vv, c in items:
                        if vv == var:
                            coeff = c
                        else:
                            rest += c * self.doms[vv].fixed()
                    num = k - rest
                    d = self.doms[var]
                    if d.kind == "int":
                        if num % coeff:
                            return
                        forbidden = num // coeff
                        if d.lo <= forbidden <= d.hi:
                            self._set_dom(var, Dom("int", d.lo, d.hi,
                                                   d.holes | {forbidden}), queue)
                    else:
                        forbidden = Fraction(num, coeff)
                        if d.lo == d.hi == forbidden:
                            raise Conflict((var,))
                return
            for var, c in items:
                rest_lo = rest_hi = 0
                for vv, cc in items:
                    if vv == var:
                        continue
                    d = self.doms[vv]
                    if cc > 0:
                        rest_lo += cc * d.lo
                        rest_hi += cc * d.hi
                    else:
                        rest_lo += cc * d.hi
                        rest_hi += cc * d.lo
                d = self.doms[var]
                is_int = d.kind == "int"
                # Python // is mathematical floor for any sign;
                # ceil(a/b) == -((-a)//b)
                if op in {"<=", "<", "="}:
                    num = k - rest_lo          # c*var <= num
                    if c > 0:
                        bound = num // c if is_int else Fraction(num, c)
                        self._tighten(var, hi=bound, queue=queue)
                    else:                      # var >= num/c
                        bound = -((-num) // c) if is_int else Fraction(num, c)
                        self._tighten(var, lo=bound, queue=queue)
                if op in {">=", ">", "="}:
                    num = k - rest_hi          # c*var >= num
                    if c > 0:
                        bound = -((-num) // c) if is_int else Fraction(num, c)
                        self._tighten(var, lo=bound, queue=queue)
                    else:                      # var <= num/c
                        bound = num // c if is_int else Fraction(num, c)
                        self._tighten(var, hi=bound, queue=queue)
            return
        if tag == "enum=":
            d = self.doms[f[1]]
            if f[2] not in d.members:
                raise Conflict((f[1],))
            if len(d.members) > 1:
                self._set_dom(f[1], Dom("enum", members=frozenset({f[2]})), queue)
            return
        if tag == "enum!=":
            d = self.doms[f[1]]
            if f[2] in d.members:
                if len(d.members) == 1:
                    raise Conflict((f[1],))
                self._set_dom(f[1], Dom("enum", members=d.members - {f[2]}),
                              queue)
            return
        if tag == "evar=":
            a, b = f[1], f[2]
            inter = self.doms[a].members & self.doms[b].members
            if not inter:
                raise Conflict((a, b))
            if inter != self.doms[a].members:
                self._set_dom(a, Dom("enum", members=inter), queue)
            if inter != self.doms[b].members:
                self._set_dom(b, Dom("enum", members=inter), queue)
            return
        if tag == "evar!=":
            if self._forced_equal(f[1], f[2]):
                raise Conflict((f[1], f[2]))
            for x, y in ((f[1], f[2]), (f[2], f[1])):
                fx = self.doms[x].fixed()
                if fx is not None and fx in self.doms[y].members:
                    if len(self.doms[y].members) == 1:
                        raise Conflict((x, y))
                    self._set_dom(y, Dom("enum",
                                         members=self.doms[y].members - {fx}),
                                  queue)
            return

    def _structural_conflicts(self) -> None:
        """Pairwise checks over active two-variable atoms: a disequality on
        an equality-connected pair, or a contradictory inequality cycle."""
        parent: dict[str, str] = {}

        def find(x: str) -> str:
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        diseqs: list[tuple[str, str]] = []
        # pair -> tightest lower bound on (x - y): (k, strict)
        low: dict[tuple[str, str], tuple] = {}

        def note_low(x: str, y: str, k, strict=False) -> None:
            cur = low.get((x, y))
            if cur is None or (k, strict) > cur:
                low[(x, y)] = (k, strict)

        for cid in range(len(self.formulas)):
            if not self.active[cid]:
                continue
            f = self.formulas[cid]
            if f[0] == "evar=":
                ra, rb = find(f[1]), find(f[2])
                if ra != rb:
                    parent[ra] = rb
            elif f[0] == "evar!=":
                diseqs.append((f[1], f[2]))
            elif f[0] == "lin" and len(f[1]) == 2:
                (xa, ca), (xb, cb) = f[1]
                if {ca, cb} != {1, -1}:
                    continue
                pos, neg_ = (xa, xb) if ca == 1 else (xb, xa)
                k, op = f[2], f[3]
                if op == "=":
                    if k == 0:
                        ra, rb = find(pos), find(neg_)
                        if ra != rb:
                            parent[ra] = rb
                    note_low(pos, neg_, k)
                    note_low(neg_, pos, -k)
                elif op == ">=":
                    note_low(pos, neg_, k)
                elif op == ">":
                    note_low(pos, neg_, k, strict=True)
                elif op == "<=":
                    note_low(neg_, pos, -k)
                elif op == "<":
                    note_low(neg_, pos, -k, strict=True)
                elif op == "!=" and k == 0:
                    diseqs.append((pos, neg_))
        for a, b in diseqs:
            if find(a) == find(b):
                raise Conflict((a, b))
        for (x, y), (k1, s1) in low.items():
            entry = low.get((y, x))
            if entry is None:
                continue
            k2, s2 = entry
            if k1 + k2 > 0 or (k1 + k2 == 0 and (s1 or s2)):
                raise Conflict((x, y))
        diseq_pairs = {frozenset((find(a), find(b))) for a, b in diseqs}

        # or-nodes whose every branch is refuted by the equality chains
        def refuted(f) -> bool:
            tag = f[0]
            if tag == "and":
                return any(refuted(x) for x in f[1])
            if tag == "or":
                return all(refuted(x) for x in f[1])
            if tag == "evar!=":
                return find(f[1]) == find(f[2])
            if tag == "evar=":
                return frozenset((find(f[1]), find(f[2]))) in diseq_pairs
            if tag == "lin" and len(f[1]) == 2:
                (xa, ca), (xb, cb) = f[1]
                if {ca, cb} != {1, -1}:
                    return False
                pos, neg_ = (xa, xb) if ca == 1 else (xb, xa)
                k, op = f[2], f[3]
                same = find(pos) == find(neg_)
                if op == "!=":
                    return same and k == 0
                if op == "=" and k == 0 and \
                        frozenset((find(pos), find(neg_))) in diseq_pairs:
                    return True
                if same:
                    val = {"=": 0 == k, "<": 0 < k, "<=": 0 <= k,
                           ">": 0 > k, ">=": 0 >= k}[op]
                    return not val
                entry = low.get((neg_, pos))
                if entry is None:
                    return False
                base, base_strict = entry
                # known: neg - pos >= base  =>  pos - neg <= -base
                if op in {">=", "="} and k + base > 0:
                    return True
                if op == ">" and (k + base > 0 or (k + base == 0 and base_strict)):
                    return True
                return False
            return False

        for cid in range(len(self.formulas)):
            if not self.active[cid]:
                continue
            f = self.formulas[cid]
            if f[0] == "or" and refuted(f):
                raise Conflict(tuple(self._vars_of(f)))

    def propagate(self, seed: list[int]) -> None:
        self._structural_conflicts()
        queue = list(seed)
        guard = 0
        visits: dict[int, int] = {}
        new_structure = False
        while queue:
            guard += 1
            if guard % 4096 == 0 and time.monotonic() > self.deadline:
                raise Budget()
            cid = queue.pop()
            if cid >= len(self.formulas) or not self.active[cid]:
                continue
            visits[cid] = visits.get(cid, 0) + 1
            if visits[cid] > 64:
                continue   # zigzag guard; search finishes the narrowing
            f = self.formulas[cid]
            s = self.status(f)
            if s == "T":
                self._deactivate(cid)
                continue
            if s == "F":
                raise Conflict(tuple(self._vars_of(f)))
            if f[0] == "or":
                open_items = [x for x in f[1] if self.status(x) != "F"]
                if not open_items:
                    raise Conflict(tuple(self._vars_of(f)))
                self._or_hull(f, open_items, queue)
                if len(open_items) == 1:
                    self._deactivate(cid)
                    sub: list = []
                    self._flatten(open_items[0], sub)
                    for g in sub:
                        new_cid = self._add_constraint(g)
                        self.trail.append(("new", new_cid))
                        queue.append(new_cid)
                    new_structure = True
                elif len(open_items) != len(f[1]):
                    self._deactivate(cid)
                    new_cid = self._add_constraint(("or", open_items))
                    self.trail.append(("new", new_cid))
                continue
            self.propagate_atom(f, queue)
            if self.status(f) == "T":
                self._deactivate(cid)
            if new_structure and not queue:
                new_structure = False
                self._structural_conflicts()

    # ---------------------------------------------------------------- search

    def solve(self):
        try:
            self.propagate(list(range(len(self.formulas))))
        except Conflict:
            return "unsat", None
        except Budget:
            return "unknown", None
        base_mark = len(self.trail)
        base_len = len(self.formulas)
        # geometric restarts; conflict activity carries over between runs
        limit = 4000
        while True:
            self._restart_budget = self.nodes + limit
            try:
                result = self._search()
                break
            except Budget:
                if self.nodes > self.budget or time.monotonic() > self.deadline:
                    return "unknown", None
                self._undo_to(base_mark)
                del self.formulas[base_len:]
                del self.active[base_len:]
                for bucket in self.watch.values():
                    while bucket and bucket[-1] >= base_len:
                        bucket.pop()
                limit *= 3
        if result is None:
            return "unsat", None
        return "sat", result

    def _open_constraints(self) -> list[int]:
        return [cid for cid in range(len(self.formulas)) if self.active[cid]]

    def _bump_conflict(self, involved) -> None:
        for vv in involved:
            self.activity[vv] = self.activity.get(vv, 0.0) + self._bump
        self._bump *= 1.05
        if self._bump > 1e90:
            for k in self.activity:
                self.activity[k] *= 1e-90
            self._bump = 1.0

    def _search(self):
        self.nodes += 1
        if self.nodes > min(self.budget, getattr(self, "_restart_budget",
                                                 self.budget)) or \
                (self.nodes % 128 == 0 and time.monotonic() > self.deadline):
            raise Budget()
        # fail-first variable choice over active constraints; or-branching
        # only when just Real variables remain unfixed
        branch_cid = None
        target = None
        best_key = None
        real_target = None
        for cid in range(len(self.formulas)):
            if not self.active[cid]:
                continue
            f = self.formulas[cid]
            if f[0] == "or":
                if branch_cid is None:
                    branch_cid = cid
                continue
            for vv in self._vars_of(f):
                d = self.doms[vv]
                if d.fixed() is not None:
                    continue
                if d.kind == "enum":
                    size = len(d.members)
                elif d.kind == "int":
                    width = min(d.hi, INF) - max(d.lo, -INF)
                    size = 16 + min(width, 10 ** 9).bit_length()
                else:
                    if real_target is None:
                        real_target = vv
                    continue
                key = (-self.activity.get(vv, 0.0), size)
                if best_key is None or key < best_key:
                    best_key = key
                    target = vv
        if target is None and branch_cid is None and real_target is not None:
            target = real_target
        if target is None and branch_cid is not None:
            f = self.formulas[branch_cid]
            for item in f[1]:
                mark = len(self.trail)
                try:
                    self._deactivate(branch_cid)
                    sub: list = []
                    self._flatten(item, sub)
                    seeds = []
                    for g in sub:
                        cid2 = self._add_constraint(g)
                        self.trail.append(("new", cid2))
                        seeds.append(cid2)
                    self.propagate(seeds)
                    result = self._search()
                    if result is not None:
                        return result
                except Conflict as exc:
                    self._bump_conflict(exc.involved)
                self._undo_to(mark)
            return None
        if target is None:
            return self._finish()
        d = self.doms[target]
        if d.kind == "enum":
            for idx in sorted(d.members):
                mark = len(self.trail)
                try:
                    self._set_dom(target, Dom("enum", members=frozenset({idx})),
                                  [])
                    self.propagate(list(self.watch[target]))
                    result = self._search()
                    if result is not None:
                        return result
                except Conflict as exc:
                    self._bump_conflict(exc.involved)
                self._undo_to(mark)
            return None
        lo, hi = d.lo, d.hi
        width = hi - lo
        if d.kind == "int" and width <= 8:
            value = lo
            while value <= hi:
                if value in d.holes:
                    value += 1
                    continue
                mark = len(self.trail)
                try:
                    self._set_dom(target, Dom("int", value, value), [])
                    self.propagate(list(self.watch[target]))
                    result = self._search()
                    if result is not None:
                        return result
                except Conflict as exc:
                    self._bump_conflict(exc.involved)
                self._undo_to(mark)
                value += 1
            return None
        if d.kind == "real" and width <= Fraction(1, 1024):
            for value in (lo, (lo + hi) / 2, hi):
                mark = len(self.trail)
                try:
                    self._set_dom(target, Dom("real", value, value), [])
                    self.propagate(list(self.watch[target]))
                    result = self._search()
                    if result is not None:
                        return result
                except Conflict as exc:
                    self._bump_conflict(exc.involved)
                self._undo_to(mark)
            return None
        if d.kind == "int" and lo <= -(10 ** 6) and hi >= 0:
            # domains mixing NULL sentinels with live values: prefer live
            halves = ((0, hi), (lo, -1))
        else:
            mid = lo + width // 2 if d.kind == "int" else lo + width / 2
            second_lo = mid + 1 if d.kind == "int" else mid
            halves = ((lo, mid), (second_lo, hi))
        for wlo, whi in halves:
            if wlo > whi:
                continue
            mark = len(self.trail)
            try:
                self._set_dom(target, Dom(d.kind, wlo, whi, d.holes), [])
                self.propagate(list(self.watch[target]))
                result = self._search()
                if result is not None:
                    return result
            except Conflict as exc:
                self._bump_conflict(exc.involved)
            self._undo_to(mark)
        return None

    def _finish(self):
        model = {}
        merged = getattr(self, "merged", {})
        for name in self.p.vars:
            d = self.doms[merged.get(name, name)]
            if d.kind == "enum":
                model[name] = ("enum", min(d.members))
            else:
                val = d.fixed()
                if val is None:
                    val = d.lo if d.lo > -INF else (d.hi if d.hi < INF else 0)
                    if d.kind == "int":
                        while val in d.holes:
                            val += 1
                    if val > d.hi:
                        return None
                model[name] = ("num", Fraction(val))
        return model


class Budget(Exception):
    pass


def format_model(problem: Problem, model: dict) -> str:
    lines = ["("]
    for name in problem.vars:
        sort = problem.vars[name]
        kind, val = model[name]
        if kind == "enum":
            text = problem.enums[sort][val]
            safe = all(ch.isalnum() or ch in "_-." for ch in text) and \
                text and not text[0].isdigit()
            if not safe:
                text = f"|{text}|"
        else:
            f: Fraction = Fraction(val)
            if sort == "Int":
                text = str(int(f)) if f >= 0 else f"(- {-int(f)})"
            else:
                if f.denominator == 1:
                    text = f"{f.numerator}.0" if f >= 0 else f"(- {-f.numerator}.0)"
                else:
                    a = abs(f)
                    body = f"(/ {a.numerator} {a.denominator})"
                    text = body if f >= 0 else f"(- {body})"
        lines.append(f"  (define-fun {name} () {sort} {text})")
    lines.append(")")
    return "\n".join(lines)


def run(text: str, timeout: float = 600.0) -> str:
    exprs = parse_sexprs(text)
    problem = Problem()
    out: list[str] = []
    pending = []
    for expr in exprs:
        if isinstance(expr, list) and expr and \
                expr[0] in {"check-sat", "get-model", "exit"}:
            pending.append(expr[0])
        else:
            problem.load([expr])
    deadline = time.monotonic() + timeout
    verdict, model = None, None
    for cmd in pending:
        if cmd == "check-sat":
            try:
                solver = Solver(problem, deadline)
                verdict, model = solver.solve()
            except Unsupported as exc:
                print(f"; unsupported: {exc}", file=sys.stderr)
                verdict, model = "unknown", None
            if verdict == "sat" and model is None:
                verdict = "unknown"
            out.append(verdict)
        elif cmd == "get-model":
            if verdict == "sat" and model is not None:
                out.append(format_model(problem, model))
            else:
                out.append('(error "model is not available")')
        elif cmd == "exit":
            break
    return "\n".join(out) + "\n"


def main() -> int:
    sys.setrecursionlimit(1_000_000)
    args = sys.argv[1:]
    timeout = 600.0
    path = None
    i = 0
    while i < len(args):
        if args[i] in {"-t", "--timeout"} and i + 1 < len(args):
            timeout = float(args[i + 1])
            i += 2
        elif args[i] == "-in":
            i += 1
        else:
            path = args[i]
            i += 1
    text = open(path).read() if path else sys.stdin.read()
    sys.stdout.write(run(text, timeout))
    return 0


if __name__ == "__main__":
    sys.exit(main())
