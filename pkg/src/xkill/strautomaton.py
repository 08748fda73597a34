"""Automata for string constraint solving.

Pattern ASTs compile to Thompson NFAs. Solving searches the lazy product
of per-constraint machines for the lexicographically smallest accepted
string; per-factor shortest-accept distances prune the search, and eager
determinized/minimized DFAs are used for small machines (negated LIKE
needs complementation, which requires determinism).
"""

from __future__ import annotations

from dataclasses import dataclass, field


# --------------------------------------------------------------------------
# Pattern AST

@dataclass(frozen=True)
class Lit:
    chars: frozenset


@dataclass(frozen=True)
class Seq:
    items: tuple


@dataclass(frozen=True)
class Alt:
    items: tuple


@dataclass(frozen=True)
class Star:
    item: object


@dataclass(frozen=True)
class Plus:
    item: object


@dataclass(frozen=True)
class Repeat:
    item: object
    count: int


EPSILON = Seq(())


def lit(chars) -> Lit:
    return Lit(frozenset(chars))


def seq(*items) -> Seq:
    return Seq(tuple(items))


def alt(*items) -> Alt:
    return Alt(tuple(items))


def literal(text: str) -> Seq:
    return Seq(tuple(Lit(frozenset(c)) for c in text))


# --------------------------------------------------------------------------
# Thompson NFA

class NFA:
    """States 0..n-1; edges[state] = list of (frozenset chars, dest);
    eps[state] = list of dest. One initial, one accepting state."""

    def __init__(self):
        self.edges: list[list[tuple[frozenset, int]]] = []
        self.eps: list[list[int]] = []

    def new_state(self) -> int:
        self.edges.append([])
        self.eps.append([])
        return len(self.edges) - 1

    @staticmethod
    def compile(ast) -> "NFA":
        nfa = NFA()
        nfa.initial = nfa.new_state()
        nfa.accept = nfa._build(ast, nfa.initial)
        nfa._closure_cache: dict[int, frozenset] = {}
        nfa._dist = None
        return nfa

    def _build(self, ast, start: int) -> int:
        if isinstance(ast, Lit):
            end = self.new_state()
            if ast.chars:
                self.edges[start].append((ast.chars, end))
            return end
        if isinstance(ast, Seq):
            cur = start
            for item in ast.items:
                cur = self._build(item, cur)
            return cur
        if isinstance(ast, Alt):
            end = self.new_state()
            for item in ast.items:
                sub_end = self._build(item, start)
                self.eps[sub_end].append(end)
            return end
        if isinstance(ast, Star):
            hub = self.new_state()
            self.eps[start].append(hub)
            body_end = self._build(ast.item, hub)
            self.eps[body_end].append(hub)
            return hub
        if isinstance(ast, Plus):
            mid = self._build(ast.item, start)
            hub = self.new_state()
            self.eps[mid].append(hub)
            body_end = self._build(ast.item, hub)
            self.eps[body_end].append(hub)
            return hub
        if isinstance(ast, Repeat):
            cur = start
            for _ in range(ast.count):
                cur = self._build(ast.item, cur)
            return cur
        raise TypeError(f"bad pattern node {ast!r}")

    def closure(self, state: int) -> frozenset:
        cached = self._closure_cache.get(state)
        if cached is not None:
            return cached
        seen = {state}
        stack = [state]
        while stack:
            s = stack.pop()
            for d in self.eps[s]:
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
        result = frozenset(seen)
        self._closure_cache[state] = result
        return result

    def start_set(self) -> frozenset:
        return self.closure(self.initial)

    def dist_to_accept(self) -> list[int]:
        """Shortest accepting word length from each state (BFS, eps free)."""
        if self._dist is not None:
            return self._dist
        n = len(self.edges)
        INF = 1 << 30
        dist = [INF] * n
        # reverse adjacency over char edges and eps edges
        rev_char: list[list[int]] = [[] for _ in range(n)]
        rev_eps: list[list[int]] = [[] for _ in range(n)]
        for s in range(n):
            for chars, d in self.edges[s]:
                rev_char[d].append(s)
            for d in self.eps[s]:
                rev_eps[d].append(s)
        from collections import deque
        dq = deque()
        dist[self.accept] = 0
        dq.append(self.accept)
        while dq:
            s = dq.popleft()
            for p in rev_eps[s]:
                if dist[p] > dist[s]:
                    dist[p] = dist[s]
                    dq.appendleft(p)     # eps edges cost 0
            for p in rev_char[s]:
                if dist[p] > dist[s] + 1:
                    dist[p] = dist[s] + 1
                    dq.append(p)
        self._dist = dist
        return dist


# --------------------------------------------------------------------------
# Machines: a uniform lazy-DFA view (supports complement)

class Machine:
    """Lazy deterministic view of one constraint automaton."""

    def __init__(self, nfa: NFA, alphabet: str, negate: bool = False):
        self.nfa = nfa
        self.alphabet = alphabet
        self.negate = negate
        self._trans: dict[frozenset, dict[str, frozenset]] = {}
        self._dist = nfa.dist_to_accept()

    @property
    def start(self) -> frozenset:
        return self.nfa.start_set()

    def step_all(self, state: frozenset) -> dict[str, frozenset]:
        cached = self._trans.get(state)
        if cached is not None:
            return cached
        # group destinations by (shared) charset object to avoid per-char loops
        by_charset: dict[frozenset, set] = {}
        for s in state:
            for chars, dest in self.nfa.edges[s]:
                bucket = by_charset.get(chars)
                if bucket is None:
                    bucket = by_charset[chars] = set()
                bucket.add(dest)
        closed_cache: dict[frozenset, frozenset] = {}
        empty = frozenset()
        out: dict[str, frozenset] = {c: empty for c in self.alphabet}
        agg: dict[str, set] = {}
        for chars, dests in by_charset.items():
            closed = closed_cache.get(frozenset(dests))
            if closed is None:
                acc: set = set()
                for t in dests:
                    acc |= self.nfa.closure(t)
                closed = frozenset(acc)
                closed_cache[frozenset(dests)] = closed
            for c in chars:
                if c in out:
                    cur = agg.get(c)
                    if cur is None:
                        agg[c] = set(closed)
                    else:
                        cur |= closed
        for c, acc in agg.items():
            out[c] = frozenset(acc)
        self._trans[state] = out
        return out

    def accepts(self, state: frozenset) -> bool:
        hit = self.nfa.accept in state
        return (not hit) if self.negate else hit

    def min_dist(self, state: frozenset) -> int:
        """Lower bound on remaining length to acceptance."""
        if self.negate:
            return 0
        if not state:
            return 1 << 30
        return min(self._dist[s] for s in state)

    def run(self, text: str) -> bool:
        state = self.start
        for c in text:
            if c not in self.alphabet:
                return False if not self.negate else False
            state = self.step_all(state)[c]
        return self.accepts(state)


# --------------------------------------------------------------------------
# Eager DFA with minimization (used for small machines / the spec surface)

@dataclass
class DFA:
    alphabet: str
    transitions: list[dict[str, int]] = field(default_factory=list)
    accepting: set[int] = field(default_factory=set)
    initial: int = 0

    @staticmethod
    def determinize(machine: Machine, state_cap: int = 5000) -> "DFA | None":
        index: dict[frozenset, int] = {}
        dfa = DFA(machine.alphabet)

        def get(s: frozenset) -> int:
            if s not in index:
                index[s] = len(dfa.transitions)
                dfa.transitions.append({})
                if machine.accepts(s):
                    dfa.accepting.add(index[s])
            return index[s]

        stack = [machine.start]
        get(machine.start)
        seen = {machine.start}
        while stack:
            if len(dfa.transitions) > state_cap:
                return None
            s = stack.pop()
            si = get(s)
            for c, t in machine.step_all(s).items():
                ti = get(t)
                dfa.transitions[si][c] = ti
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return dfa

    def minimize(self) -> "DFA":
        """Moore partition refinement; transitions end up character-sorted."""
        n = len(self.transitions)
        part = [1 if i in self.accepting else 0 for i in range(n)]
        while True:
            signatures: dict[tuple, int] = {}
            new_part = [0] * n
            for i in range(n):
                sig = (part[i],) + tuple(part[self.transitions[i][c]]
                                         for c in self.alphabet)
                if sig not in signatures:
                    signatures[sig] = len(signatures)
                new_part[i] = signatures[sig]
            if new_part == part:
                break
            part = new_part
        blocks = max(part) + 1
        out = DFA(self.alphabet, [{} for _ in range(blocks)],
                  {part[i] for i in self.accepting}, part[self.initial])
        for i in range(n):
            b = part[i]
            if not out.transitions[b]:
                for c in sorted(self.alphabet):
                    out.transitions[b][c] = part[self.transitions[i][c]]
        return out

    def accepts_string(self, text: str) -> bool:
        s = self.initial
        for c in text:
            if c not in self.transitions[s]:
                return False
            s = self.transitions[s][c]
        return s in self.accepting


class DFAMachine(Machine):
    """Adapter letting a minimized DFA participate in products."""

    def __init__(self, dfa: DFA):
        self.dfa = dfa
        self.alphabet = dfa.alphabet
        self._dists = self._compute_dists()

    @property
    def start(self):
        return self.dfa.initial

    def step_all(self, state):
        return self.dfa.transitions[state]

    def accepts(self, state) -> bool:
        return state in self.dfa.accepting

    def min_dist(self, state) -> int:
        return self._dists[state]

    def _compute_dists(self) -> list[int]:
        from collections import deque
        n = len(self.dfa.transitions)
        INF = 1 << 30
        dist = [INF] * n
        rev: list[list[int]] = [[] for _ in range(n)]
        for s in range(n):
            for c, d in self.dfa.transitions[s].items():
                rev[d].append(s)
        dq = deque()
        for a in self.dfa.accepting:
            dist[a] = 0
            dq.append(a)
        while dq:
            s = dq.popleft()
            for p in rev[s]:
                if dist[p] > dist[s] + 1:
                    dist[p] = dist[s] + 1
                    dq.append(p)
        return dist

    def run(self, text: str) -> bool:
        return self.dfa.accepts_string(text)


# --------------------------------------------------------------------------
# Lexicographically smallest string over a product of machines

def smallest_string(machines: list[Machine], alphabet: str, min_len: int,
                    max_len: int, not_equal_lengths: frozenset = frozenset(),
                    node_budget: int = 2_000_000) -> str | None:
    """Sorted DFS over the lazy product; first accepted node is the answer."""
    if not machines:
        length = min_len
        while length in not_equal_lengths:
            length += 1
        if length > max_len:
            return None
        return alphabet[0] * length if length else ""

    chars = sorted(alphabet)
    failed: dict[tuple, int] = {}          # product state -> max budget proven dead
    builder: list[str] = []
    nodes = 0

    def dfs(states: tuple, depth: int) -> str | None:
        nonlocal nodes
        nodes += 1
        if nodes > node_budget:
            raise SearchBudgetExceeded()
        if depth >= min_len and depth not in not_equal_lengths and \
                all(m.accepts(s) for m, s in zip(machines, states)):
            return "".join(builder)
        remaining = max_len - depth
        if remaining <= 0:
            return None
        if failed.get(states, -1) >= remaining:
            return None
        bound = max(m.min_dist(s) for m, s in zip(machines, states))
        if bound > remaining:
            failed[states] = max(failed.get(states, -1), remaining)
            return None
        rows = [m.step_all(s) for m, s in zip(machines, states)]
        for c in chars:
            nxt = tuple(row[c] for row in rows)
            if any(m.min_dist(s) > remaining - 1
                   for m, s in zip(machines, nxt)):
                continue
            builder.append(c)
            result = dfs(nxt, depth + 1)
            builder.pop()
            if result is not None:
                return result
        failed[states] = max(failed.get(states, -1), remaining)
        return None

    start = tuple(m.start for m in machines)
    import sys
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, max_len + 1000))
    try:
        return dfs(start, 0)
    finally:
        sys.setrecursionlimit(old_limit)


class SearchBudgetExceeded(Exception):
    pass
