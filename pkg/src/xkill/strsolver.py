"""Standalone string constraint solver.

Solves comparison/LIKE/length constraints over string variables by
substituting equalities away, grouping dependent variables, and solving
each group smallest-first along the dependency order; single variables
are solved as lexicographically smallest strings over an automaton
product. Every returned binding is validated against the original
constraints with the direct evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import Config, DEFAULT
from .errors import Unsatisfiable, UnsupportedConstraint
from .strautomaton import DFA, DFAMachine, Machine, NFA, smallest_string
from .strings_like import like_match, str_relop, strlen_relop
from .strpatterns import like_ast, relop_ast


@dataclass(frozen=True)
class StringConstraint:
    kind: str          # "cmp" | "vcmp" | "like" | "len"
    var: str
    op: str            # relop / likeop
    other: object      # constant, variable name, pattern, or int length

    def __repr__(self):
        return f"({self.var} {self.op} {self.other!r})"


def cmp_const(var: str, op: str, const: str) -> StringConstraint:
    return StringConstraint("cmp", var, op, const)


def cmp_var(var: str, op: str, other_var: str) -> StringConstraint:
    return StringConstraint("vcmp", var, op, other_var)


def like(var: str, op: str, pattern: str) -> StringConstraint:
    return StringConstraint("like", var, op, pattern)


def strlen(var: str, op: str, length: int) -> StringConstraint:
    return StringConstraint("len", var, op, length)


def check_constraint(c: StringConstraint, binding: dict[str, str]) -> bool:
    """Direct (non-automaton) evaluation of one constraint."""
    val = binding[c.var]
    if c.kind == "cmp":
        return str_relop(val, c.op, str(c.other))
    if c.kind == "vcmp":
        return str_relop(val, c.op, binding[str(c.other)])
    if c.kind == "like":
        ci = "ilike" in c.op
        hit = like_match(str(c.other), val, case_insensitive=ci)
        return (not hit) if c.op.startswith("not_") else hit
    if c.kind == "len":
        return strlen_relop(val, c.op, int(c.other))
    raise ValueError(c.kind)


# --------------------------------------------------------------------------
# Per-variable solve state

@dataclass
class StringVarState:
    name: str
    min_length: int
    max_length: int
    not_equal_lengths: set[int] = field(default_factory=set)
    less: list[str] = field(default_factory=list)        # vars strictly below self
    less_equal: list[str] = field(default_factory=list)
    not_equal: list[str] = field(default_factory=list)
    ci_equal: list[str] = field(default_factory=list)
    other: list[StringConstraint] = field(default_factory=list)

    def add_const_constraint(self, c: StringConstraint) -> None:
        if c.kind == "len":
            k = int(c.other)
            if c.op == "=":
                self.min_length = max(self.min_length, k)
                self.max_length = min(self.max_length, k)
            elif c.op == "<":
                self.max_length = min(self.max_length, k - 1)
            elif c.op == "<=":
                self.max_length = min(self.max_length, k)
            elif c.op == ">":
                self.min_length = max(self.min_length, k + 1)
            elif c.op == ">=":
                self.min_length = max(self.min_length, k)
            elif c.op == "<>":
                self.not_equal_lengths.add(k)
        else:
            self.other.append(c)


# --------------------------------------------------------------------------
# Step 2: equality reduction

def reduce_equalities(constraints: list[StringConstraint]
                      ) -> tuple[list[StringConstraint], dict[str, str],
                                 dict[str, str]]:
    """Substitute var=const and var=var equalities away.

    Returns (residual constraints, var->representative, representative->const).
    Residual const-vs-const checks run through the direct evaluators;
    a failed check raises Unsatisfiable.
    """
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            # keep the lexicographically first as representative (deterministic)
            keep, drop = sorted((ra, rb))
            parent[drop] = keep

    consts: dict[str, str] = {}
    for c in constraints:
        if c.kind == "vcmp" and c.op == "=":
            union(c.var, str(c.other))
    for c in constraints:
        if c.kind == "cmp" and c.op == "=":
            rep = find(c.var)
            value = str(c.other)
            if rep in consts and consts[rep] != value:
                raise Unsatisfiable(
                    f"{c.var} equals both {consts[rep]!r} and {value!r}")
            consts[rep] = value
    # normalize const map onto final representatives
    consts = {find(k): v for k, v in consts.items()}

    residual: list[StringConstraint] = []
    for c in constraints:
        if (c.kind == "vcmp" or c.kind == "cmp") and c.op == "=":
            continue
        var = find(c.var)
        if c.kind == "vcmp":
            other = find(str(c.other))
            if var in consts and other in consts:
                if not str_relop(consts[var], c.op, consts[other]):
                    raise Unsatisfiable(f"{c} fails after substitution")
                continue
            if var in consts:
                # const op var  ->  var (swapped op) const
                swapped = {"<": ">", "<=": ">=", ">": "<", ">=": "<=",
                           "<>": "<>", "~=": "~="}[c.op]
                residual.append(StringConstraint("cmp", other, swapped, consts[var]))
                continue
            if other in consts:
                residual.append(StringConstraint("cmp", var, c.op, consts[other]))
                continue
            if var == other:
                if c.op in {"<", ">", "<>"}:
                    raise Unsatisfiable(f"{c} on a single variable")
                continue
            residual.append(StringConstraint("vcmp", var, c.op, other))
            continue
        if var in consts:
            if not check_constraint(c, {var: consts[var]}):
                raise Unsatisfiable(f"{c} fails for {consts[var]!r}")
            continue
        residual.append(StringConstraint(c.kind, var, c.op, c.other))
    bindings = {x: find(x) for x in parent}
    return residual, bindings, consts


# --------------------------------------------------------------------------
# Step 3: grouping

def group_variables(constraints: list[StringConstraint]) -> list[list[str]]:
    """Connected components over var-var constraints (deterministic order)."""
    adj: dict[str, set[str]] = {}
    order: list[str] = []
    for c in constraints:
        for name in ([c.var, str(c.other)] if c.kind == "vcmp" else [c.var]):
            if name not in adj:
                adj[name] = set()
                order.append(name)
        if c.kind == "vcmp":
            adj[c.var].add(str(c.other))
            adj[str(c.other)].add(c.var)
    seen: set[str] = set()
    groups: list[list[str]] = []
    for name in order:
        if name in seen:
            continue
        comp = []
        stack = [name]
        seen.add(name)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in sorted(adj[x]):
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        groups.append(sorted(comp))
    return groups


# --------------------------------------------------------------------------
# Step 4: solving

def build_machines(state: StringVarState, alphabet: str,
                   minimize_threshold: int) -> list[Machine]:
    machines: list[Machine] = []
    for c in state.other:
        if c.kind == "cmp":
            ast = relop_ast(c.op, str(c.other), alphabet)
            machines.append(Machine(NFA.compile(ast), alphabet))
        elif c.kind == "like":
            ci = "ilike" in c.op
            ast = like_ast(str(c.other), alphabet, case_insensitive=ci)
            negate = c.op.startswith("not_")
            machines.append(Machine(NFA.compile(ast), alphabet, negate=negate))
        else:
            raise ValueError(f"unexpected constraint {c}")
    if len(machines) > minimize_threshold:
        machines = _minimize_batch(machines)
    return machines


def _minimize_batch(machines: list[Machine]) -> list[Machine]:
    """Fold small machines into one minimized DFA to speed up the search."""
    current: DFAMachine | None = None
    out: list[Machine] = []
    for m in machines:
        dfa = DFA.determinize(m, state_cap=3000)
        if dfa is None:
            out.append(m)
            continue
        dm = DFAMachine(dfa.minimize())
        if current is None:
            current = dm
            continue
        merged = _intersect_dfas(current.dfa, dm.dfa, state_cap=6000)
        if merged is None:
            out.append(current)
            current = dm
        else:
            current = DFAMachine(merged.minimize())
    if current is not None:
        out.append(current)
    return out


def _intersect_dfas(a: DFA, b: DFA, state_cap: int) -> DFA | None:
    index: dict[tuple[int, int], int] = {}
    out = DFA(a.alphabet)

    def get(pair):
        if pair not in index:
            index[pair] = len(out.transitions)
            out.transitions.append({})
            if pair[0] in a.accepting and pair[1] in b.accepting:
                out.accepting.add(index[pair])
        return index[pair]

    start = (a.initial, b.initial)
    stack = [start]
    get(start)
    seen = {start}
    while stack:
        if len(out.transitions) > state_cap:
            return None
        pair = stack.pop()
        pi = get(pair)
        for c in a.alphabet:
            nxt = (a.transitions[pair[0]].get(c), b.transitions[pair[1]].get(c))
            if nxt[0] is None or nxt[1] is None:
                continue
            out.transitions[pi][c] = get(nxt)
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    # complete with a dead state for missing transitions
    dead = len(out.transitions)
    needs_dead = any(len(t) < len(a.alphabet) for t in out.transitions)
    if needs_dead:
        out.transitions.append({c: dead for c in a.alphabet})
        for t in out.transitions:
            for c in a.alphabet:
                t.setdefault(c, dead)
    return out


def solve_one_variable(state: StringVarState, config: Config = DEFAULT) -> str:
    """Lexicographically smallest string satisfying the variable's state."""
    if state.min_length > state.max_length:
        raise Unsatisfiable(f"{state.name}: empty length window")
    machines = build_machines(state, config.alphabet, config.minimize_threshold)
    result = smallest_string(machines, config.alphabet, state.min_length,
                             state.max_length,
                             frozenset(state.not_equal_lengths))
    if result is None:
        raise Unsatisfiable(f"{state.name}: no satisfying string")
    return result


def solve_group(group: list[str], constraints: list[StringConstraint],
                config: Config = DEFAULT) -> dict[str, str]:
    states: dict[str, StringVarState] = {
        name: StringVarState(name, config.string_min_length,
                             config.string_max_length)
        for name in group
    }
    # (small, large, strict) dependency pairs; <>/~= tracked separately
    pairs: list[tuple[str, str, bool]] = []
    for c in constraints:
        if c.kind == "vcmp":
            a, b = c.var, str(c.other)
            if c.op == "<":
                pairs.append((a, b, True))
            elif c.op == "<=":
                pairs.append((a, b, False))
            elif c.op == ">":
                pairs.append((b, a, True))
            elif c.op == ">=":
                pairs.append((b, a, False))
            elif c.op == "<>":
                states[a].not_equal.append(b)
                states[b].not_equal.append(a)
            elif c.op == "~=":
                states[a].ci_equal.append(b)
                states[b].ci_equal.append(a)
        else:
            states[c.var].add_const_constraint(c)

    solved: dict[str, str] = {}
    unsolved = sorted(group)
    had_inequality: set[str] = set()
    while unsolved:
        # smaller_than[v] = unsolved vars strictly/weakly below v
        below: dict[str, list[str]] = {v: [] for v in unsolved}
        for small, large, strict in pairs:
            if small in below and large in below:
                below[large].append(small)
        candidates = [v for v in unsolved if not below[v]]
        if not candidates:
            _resolve_cycle(unsolved, pairs, states, solved, config)
            unsolved = [v for v in unsolved if v not in solved]
            continue
        var = candidates[0]
        state = states[var]
        try:
            value = solve_one_variable(state, config)
        except Unsatisfiable:
            if var in had_inequality and (state.other or state.less
                                          or state.less_equal):
                raise UnsupportedConstraint(
                    f"<>/~= between mutually constrained variables ({var})")
            raise
        solved[var] = value
        unsolved.remove(var)
        # propagate to larger and unordered partners
        for small, large, strict in pairs:
            if small == var and large in unsolved:
                op = ">" if strict else ">="
                states[large].add_const_constraint(cmp_const(large, op, value))
        for other in states[var].not_equal:
            if other in unsolved:
                states[other].add_const_constraint(cmp_const(other, "<>", value))
                had_inequality.add(other)
        for other in states[var].ci_equal:
            if other in unsolved:
                states[other].add_const_constraint(cmp_const(other, "~=", value))
                had_inequality.add(other)
    return solved


def _resolve_cycle(unsolved: list[str], pairs, states, solved, config) -> None:
    """No minimal vertex: a dependency cycle. Strict edge => unsat;
    all-<= cycle => members are equal, solve them as one."""
    adj = {v: [] for v in unsolved}
    for small, large, strict in pairs:
        if small in adj and large in adj and large not in solved:
            adj[large].append((small, strict))
    cycle = _find_cycle(adj)
    if cycle is None:
        raise Unsatisfiable("dependency deadlock without cycle (internal)")
    members, any_strict = cycle
    if any_strict:
        raise Unsatisfiable(
            f"cyclic strict ordering among {sorted(members)}")
    merged = StringVarState("+".join(sorted(members)), config.string_min_length,
                            config.string_max_length)
    for m in members:
        st = states[m]
        merged.min_length = max(merged.min_length, st.min_length)
        merged.max_length = min(merged.max_length, st.max_length)
        merged.not_equal_lengths |= st.not_equal_lengths
        merged.other.extend(st.other)
    value = solve_one_variable(merged, config)
    for m in members:
        solved[m] = value


def _find_cycle(adj: dict[str, list[tuple[str, bool]]]):
    for start in sorted(adj):
        path: list[tuple[str, bool]] = []
        seen_local: set[str] = set()

        def dfs(v: str) -> tuple[set[str], bool] | None:
            if v == start and path:
                members = {x for x, _ in path}
                any_strict = any(s for _, s in path)
                return members, any_strict
            if v in seen_local:
                return None
            seen_local.add(v)
            for w, strict in sorted(adj.get(v, [])):
                path.append((w, strict))
                hit = dfs(w)
                if hit:
                    return hit
                path.pop()
            return None

        hit = dfs(start)
        if hit:
            return hit
    return None


def solve_all(constraints: list[StringConstraint],
              config: Config = DEFAULT) -> dict[str, str]:
    """Full pipeline; returns a validated binding for every variable."""
    residual, rep_of, consts = reduce_equalities(constraints)
    bindings: dict[str, str] = {}
    for rep, value in consts.items():
        bindings[rep] = value
    groups = group_variables(residual)
    for group in groups:
        bindings.update(solve_group(group, [
            c for c in residual
            if c.var in group or (c.kind == "vcmp" and str(c.other) in group)
        ], config))
    # copy equality bindings back, then check everything that was asked
    all_vars = {c.var for c in constraints} | \
               {str(c.other) for c in constraints if c.kind == "vcmp"}
    for name in sorted(all_vars):
        rep = rep_of.get(name, name)
        if rep in bindings:
            bindings[name] = bindings[rep]
        elif name not in bindings:
            # unconstrained after reduction: smallest admissible string
            state = StringVarState(name, config.string_min_length,
                                   config.string_max_length)
            bindings[name] = solve_one_variable(state, config)
    for c in constraints:
        if not check_constraint(c, bindings):
            raise AssertionError(f"solver produced invalid binding for {c}")
    return bindings
