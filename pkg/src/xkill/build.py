"""Constraint construction over fixed-size tuple allocations.

One GoalBuilder produces one ConstraintScript: it allocates tuple slots
per relation occurrence (plus foreign-key closure tuples), emits domain,
primary-key, unique and foreign-key axioms with the NULL sentinel
encoding, and offers three-valued encoders for predicate atoms. String
atoms are routed through the standalone string solver and re-enter as
enum equalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .catalog import Attribute, Relation, Schema
from .config import Config, DEFAULT
from .errors import CardinalityOverflow, UnsupportedFeature
from .script import (FALSE, NULL_THRESHOLD, TRUE, ConstraintScript, EnumSort,
                     conj, disj, e, n, neg, v)
from .strsolver import StringConstraint, cmp_const, cmp_var
from .strsolver import like as str_like
from .tree import (AggExpr, Arith, Attr, Comparison, Const, Contradiction, Exists,
                   FromSubquery, Func, GroupAgg, Having, IsNull, Join, LikePred,
                   Node, Not, Param, Pred, Project, RelationLeaf, ScalarSub, Select,
                   SetOp, TruePred, find_block_parts, iter_nodes)


class RawTerm:
    """Pre-compiled operand usable where an expression is expected."""

    def __init__(self, term: tuple, anchor: tuple[str, str] | None = None,
                 not_null: tuple | None = None):
        self.term = term
        self.anchor = anchor
        self.not_null = not_null if not_null is not None else TRUE

    def clone(self):
        return self


@dataclass
class Occurrence:
    """One relation occurrence in some block, bound to tuple slots."""
    occ_id: str
    relation: str
    rel: Relation
    alias: str
    slots: list[int] = field(default_factory=list)   # 1-based per relation


@dataclass
class BlockCtx:
    """Scope for compiling expressions of one query block.

    alias -> occurrence for base relations; alias -> (view items, inner ctx)
    for from-clause subqueries. `position` selects the group tuple when an
    occurrence holds several slots.
    """
    occurrences: dict[str, Occurrence] = field(default_factory=dict)
    views: dict[str, tuple[dict[str, object], "BlockCtx"]] = field(default_factory=dict)
    parent: "BlockCtx | None" = None
    position: dict[str, int] = field(default_factory=dict)   # occ_id -> slot offset

    def lookup(self, alias: str):
        ctx: BlockCtx | None = self
        while ctx is not None:
            if alias in ctx.occurrences:
                return ("occ", ctx.occurrences[alias], ctx)
            if alias in ctx.views:
                return ("view", ctx.views[alias], ctx)
            ctx = ctx.parent
        raise UnsupportedFeature("unresolved alias", alias)

    def at(self, occ_id: str, offset: int) -> "BlockCtx":
        clone = BlockCtx(self.occurrences, self.views, self.parent,
                         dict(self.position))
        clone.position[occ_id] = offset
        return clone


class GoalBuilder:
    def __init__(self, schema: Schema, config: Config = DEFAULT, tag: str = "",
                 goal_id: str = ""):
        self.schema = schema
        self.config = config
        self.script = ConstraintScript()
        self.script.metadata.update({"tag": tag, "goal_id": goal_id,
                                     "notes": {}, "parameters": {}})
        self._occ_counter = 0
        self._sentinel_counter = 0
        self._frozen = False
        self._domain_parent: dict[tuple[str, str], tuple[str, str]] = {}
        self._domain_extra: dict[tuple[str, str], set[str]] = {}
        self._null_members: dict[tuple[str, int, str], int] = {}
        self._slot_sentinel: dict[tuple[str, int, str], int] = {}
        self.string_constraints: list[StringConstraint] = []
        self._disj_depth = 0
        # goal-level mutation hooks, keyed by id(atom) across the whole tree
        self.atom_modes: dict[int, object] = {}
        self.having_modes: dict[int, object] = {}
        self.guard_subqueries = False
        self.straddle_links: set[int] = set()
        self.nullify: tuple | None = None
        self.block_overrides: dict[int, dict] = {}   # id(block node) -> options
        self._suppress_modes = 0
        self._string_var_of: dict[tuple[str, int, str], str] = {}
        self._string_bindings: dict[str, str] = {}
        self._seed_domain_classes()

    # ------------------------------------------------------------ text domains

    def _dkey(self, relation: str, attr: str) -> tuple[str, str]:
        return (relation, attr)

    def _dfind(self, key: tuple[str, str]) -> tuple[str, str]:
        parent = self._domain_parent
        parent.setdefault(key, key)
        while parent[key] != key:
            parent[key] = parent[parent[key]]
            key = parent[key]
        return key

    def _dunion(self, a: tuple[str, str], b: tuple[str, str]) -> None:
        ra, rb = self._dfind(a), self._dfind(b)
        if ra != rb:
            keep, drop = sorted((ra, rb))
            self._domain_parent[drop] = keep

    def _seed_domain_classes(self) -> None:
        for fk in self.schema.foreign_keys:
            src = self.schema.relation(fk.source)
            for sa, ta in zip(fk.source_attrs, fk.target_attrs):
                if src.attribute(sa).is_text:
                    self._dunion((fk.source, sa), (fk.target, ta))

    def merge_domains(self, rel_a: str, attr_a: str, rel_b: str, attr_b: str) -> None:
        if self._frozen:
            ra = self._dfind((rel_a, attr_a))
            rb = self._dfind((rel_b, attr_b))
            if ra != rb:
                raise UnsupportedFeature(
                    "text domains merged after freeze",
                    f"{rel_a}.{attr_a} vs {rel_b}.{attr_b}")
            return
        self._dunion((rel_a, attr_a), (rel_b, attr_b))

    def domain_sort_name(self, relation: str, attr: str) -> str:
        root = self._dfind((relation, attr))
        return f"dom_{root[0]}_{root[1]}"

    def add_domain_value(self, relation: str, attr: str, value: str) -> None:
        root = self._dfind((relation, attr))
        self._domain_extra.setdefault(root, set()).add(value)
        if self._frozen:
            sort = self.script.enum_sort(self.domain_sort_name(relation, attr))
            sort.add(value)

    # ------------------------------------------------------------ allocation

    def new_occurrence(self, leaf: RelationLeaf, count: int = 1) -> Occurrence:
        if self._frozen:
            raise RuntimeError("allocation after freeze")
        self._occ_counter += 1
        occ = Occurrence(f"{leaf.alias}#{self._occ_counter}", leaf.relation,
                         leaf.rel, leaf.alias)
        start = self.script.slot_count.get(leaf.relation, 0)
        if start + count > self.config.max_tuples:
            raise CardinalityOverflow(
                f"{leaf.relation} needs {start + count} > MAX_TUPLES")
        if count < 1:
            raise ValueError("occurrence needs at least one tuple")
        occ.slots = list(range(start + 1, start + count + 1))
        self.script.slot_count[leaf.relation] = start + count
        return occ

    def extend_occurrence(self, occ: Occurrence, extra: int) -> None:
        start = self.script.slot_count.get(occ.relation, 0)
        if start + extra > self.config.max_tuples:
            raise CardinalityOverflow(
                f"{occ.relation} needs {start + extra} > MAX_TUPLES")
        occ.slots.extend(range(start + 1, start + extra + 1))
        self.script.slot_count[occ.relation] = start + extra

    def fk_closure(self) -> None:
        """FK targets outside the query grow to match their source counts.

        Query-allocated relations keep their planned cardinality; pure
        closure relations receive one tuple per referencing source tuple
        (the solver may still collapse them onto fewer distinct rows).
        """
        query_counts = dict(self.script.slot_count)
        changed = True
        while changed:
            changed = False
            for fk in self.schema.foreign_keys:
                src = self.script.slot_count.get(fk.source, 0)
                if src == 0:
                    continue
                cur = self.script.slot_count.get(fk.target, 0)
                # one extra target tuple per referencing source tuple; the
                # solver collapses unneeded extras onto existing rows
                want = min(query_counts.get(fk.target, 0) + src,
                           self.config.max_tuples)
                if cur < want:
                    self.script.slot_count[fk.target] = want
                    changed = True

    # ------------------------------------------------------------ base axioms

    def freeze(self) -> None:
        """Emit domain, PK/unique and FK axioms for all allocated slots."""
        if self._frozen:
            return
        self._frozen = True
        sentinel_floor = NULL_THRESHOLD
        for rel_name in sorted(self.script.slot_count):
            rel = self.schema.relation(rel_name)
            for attr in rel.attributes:
                if not attr.is_text and attr.domain is not None:
                    sentinel_floor = min(sentinel_floor, attr.domain.lo - 10 ** 6)
        self._sentinel_base = min(NULL_THRESHOLD, sentinel_floor)
        self.script.metadata["notes"]["sentinel_base"] = self._sentinel_base

        # enum sorts: live values first, then one NULL member per nullable slot
        sorts_used: dict[str, list[tuple[str, str]]] = {}
        for rel_name in sorted(self.script.slot_count):
            rel = self.schema.relation(rel_name)
            for attr in rel.attributes:
                if attr.is_text:
                    sorts_used.setdefault(self.domain_sort_name(rel_name, attr.name),
                                          []).append((rel_name, attr.name))
        for sort_name in sorted(sorts_used):
            sort = self.script.enum_sort(sort_name)
            values: list[str] = []
            roots = set()
            for rel_name, attr_name in sorts_used[sort_name]:
                attr = self.schema.relation(rel_name).attribute(attr_name)
                if attr.domain is not None:
                    values.extend(attr.domain.values)
                roots.add(self._dfind((rel_name, attr_name)))
            for root in roots:
                values.extend(sorted(self._domain_extra.get(root, ())))
            for value in values:
                sort.add(value)

        for rel_name in sorted(self.script.slot_count):
            rel = self.schema.relation(rel_name)
            count = self.script.slot_count[rel_name]
            for idx in range(1, count + 1):
                for attr in rel.attributes:
                    self._declare_slot_attr(rel_name, rel, idx, attr)
            self._emit_keys(rel_name, rel, count)
        for fk in self.schema.foreign_keys:
            self._emit_fk(fk)

    def _var_name(self, rel: str, idx: int, attr: str) -> str:
        return f"{rel}_{idx}_{attr}"

    def _declare_slot_attr(self, rel_name: str, rel: Relation, idx: int,
                           attr: Attribute) -> None:
        name = self._var_name(rel_name, idx, attr.name)
        if attr.is_text:
            sort_name = self.domain_sort_name(rel_name, attr.name)
            self.script.declare(name, sort_name, (rel_name, idx, attr.name))
            sort = self.script.enum_sort(sort_name)
            if attr.nullable:
                tag = f"NULL_{rel_name}_{attr.name}_{idx}"
                member = len(sort.members)
                sort.members.append(_null_member(tag))
                self._null_members[(rel_name, idx, attr.name)] = member
            # a slot may use only its own NULL member (added lazily below)
            return
        self.script.declare(name, "Int", (rel_name, idx, attr.name))
        dom = attr.domain
        lo, hi = (dom.lo, dom.hi) if dom else self.config.default_int_domain
        in_range = conj([(">=", v(name), n(lo)), ("<=", v(name), n(hi))])
        if attr.nullable:
            self._sentinel_counter += 1
            sentinel = self._sentinel_base - self._sentinel_counter
            self._slot_sentinel[(rel_name, idx, attr.name)] = sentinel
            self.script.add(disj([in_range, ("=", v(name), n(sentinel))]))
        else:
            self.script.add(in_range)

    def _finish_null_exclusions(self) -> None:
        """Non-own NULL members are forbidden per slot (nulls incomparable)."""
        by_sort: dict[str, list[int]] = {}
        for (rel, idx, attr), member in self._null_members.items():
            sort_name = self.domain_sort_name(rel, attr)
            by_sort.setdefault(sort_name, []).append(member)
        for var, sort_name in self.script.variables.items():
            slot = self.script.var_slot.get(var)
            if slot is None or sort_name not in by_sort:
                continue
            own = self._null_members.get(slot)
            for member in by_sort[sort_name]:
                if member != own:
                    self.script.add(neg(("=", v(var), e(sort_name, member))))

    def _emit_keys(self, rel_name: str, rel: Relation, count: int) -> None:
        for key in rel.key_sets:
            for i in range(1, count + 1):
                for j in range(i + 1, count + 1):
                    key_eq = conj([("=",
                                    v(self._var_name(rel_name, i, a)),
                                    v(self._var_name(rel_name, j, a)))
                                   for a in key])
                    all_eq = conj([("=",
                                    v(self._var_name(rel_name, i, a.name)),
                                    v(self._var_name(rel_name, j, a.name)))
                                   for a in rel.attributes])
                    self.script.add(("=>", key_eq, all_eq))

    def _emit_fk(self, fk) -> None:
        src_count = self.script.slot_count.get(fk.source, 0)
        tgt_count = self.script.slot_count.get(fk.target, 0)
        if src_count == 0:
            return
        for i in range(1, src_count + 1):
            options = []
            for j in range(1, tgt_count + 1):
                pairs = [("=", v(self._var_name(fk.source, i, sa)),
                          v(self._var_name(fk.target, j, ta)))
                         for sa, ta in zip(fk.source_attrs, fk.target_attrs)]
                options.append(conj(pairs))
            if fk.nullable:
                for a in fk.source_attrs:
                    options.append(self.null_term(fk.source, i, a))
            self.script.add(disj(options))

    # ------------------------------------------------------------ null terms

    def null_term(self, rel: str, idx: int, attr_name: str) -> tuple:
        """is-null predicate instance for one slot attribute."""
        attr = self.schema.relation(rel).attribute(attr_name)
        name = self._var_name(rel, idx, attr_name)
        if not attr.nullable:
            return FALSE
        if attr.is_text:
            member = self._null_members.get((rel, idx, attr_name))
            if member is None:
                return FALSE
            sort_name = self.domain_sort_name(rel, attr_name)
            return ("=", v(name), e(sort_name, member))
        sentinel = self._slot_sentinel.get((rel, idx, attr_name))
        if sentinel is None:
            return FALSE
        return ("=", v(name), n(sentinel))

    def not_null_term(self, rel: str, idx: int, attr_name: str) -> tuple:
        return neg(self.null_term(rel, idx, attr_name))

    # ------------------------------------------------------------ expressions

    def _view_instance(self, binding, ctx: BlockCtx):
        pos = ctx.position.get(binding.occ_id, 0)
        return binding.instances[min(pos, len(binding.instances) - 1)]

    def slot_of(self, attr: Attr, ctx: BlockCtx) -> tuple[str, int, Attribute]:
        kind, target, found_ctx = ctx.lookup(attr.alias)
        if kind == "occ":
            occ: Occurrence = target
            offset = found_ctx.position.get(occ.occ_id, 0)
            offset = ctx.position.get(occ.occ_id, offset)
            idx = occ.slots[min(offset, len(occ.slots) - 1)]
            return occ.relation, idx, occ.rel.attribute(attr.name)
        binding = target
        instance = self._view_instance(binding, ctx)
        expr = binding.items[attr.name]
        if isinstance(expr, Attr):
            return self.slot_of(expr, instance.row_ctxs[0])
        raise UnsupportedFeature("projected expression used as plain column",
                                 attr.name)

    def attr_term(self, attr: Attr, ctx: BlockCtx) -> tuple:
        kind, target, _found = ctx.lookup(attr.alias)
        if kind == "view":
            binding = target
            instance = self._view_instance(binding, ctx)
            expr = binding.items[attr.name]
            from .tree import AggExpr as _Agg
            if isinstance(expr, _Agg):
                return instance.group_term(expr, instance.row_ctxs)
            return self.numeric_expr(expr, instance.row_ctxs[0])
        rel, idx, attribute = self.slot_of(attr, ctx)
        name = self._var_name(rel, idx, attribute.name)
        if attribute.scale:
            return ("*", n(Fraction(1, 10 ** attribute.scale)), v(name))
        return v(name)

    def attr_not_null(self, attr: Attr, ctx: BlockCtx) -> tuple:
        rel, idx, attribute = self.slot_of(attr, ctx)
        return self.not_null_term(rel, idx, attribute.name)

    def attr_is_null(self, attr: Attr, ctx: BlockCtx) -> tuple:
        rel, idx, attribute = self.slot_of(attr, ctx)
        return self.null_term(rel, idx, attribute.name)

    def text_anchor(self, expr, ctx: BlockCtx) -> tuple[str, str] | None:
        """(relation, attr) of the text attribute an expression denotes."""
        if isinstance(expr, RawTerm):
            return expr.anchor
        target = expr
        if isinstance(target, Func) and target.name in {"lower", "upper"}:
            target = target.args[0]
        if isinstance(target, Attr) and target.attribute is not None \
                and target.attribute.is_text:
            rel, idx, attribute = self.slot_of(target, ctx)
            return rel, attribute.name
        return None

    def numeric_expr(self, expr, ctx: BlockCtx) -> tuple:
        """Compile a numeric expression to an arithmetic term."""
        if isinstance(expr, RawTerm):
            return expr.term
        if isinstance(expr, Attr):
            return self.attr_term(expr, ctx)
        if isinstance(expr, Const):
            if expr.value is None:
                raise UnsupportedFeature("NULL literal in arithmetic")
            return n(expr.value if not isinstance(expr.value, bool) else
                     int(expr.value))
        if isinstance(expr, Param):
            return self.param_term(expr)
        if isinstance(expr, Arith):
            a = self.numeric_expr(expr.left, ctx)
            b = self.numeric_expr(expr.right, ctx)
            if expr.op == "/":
                if b[0] != "n":
                    raise UnsupportedFeature("division by a variable expression")
                return ("*", n(Fraction(1, 1) / Fraction(b[1])), a)
            if expr.op == "*":
                if a[0] != "n" and b[0] != "n":
                    raise UnsupportedFeature("nonlinear product in constraints")
            return (expr.op, a, b)
        if isinstance(expr, Func):
            raise UnsupportedFeature(f"function {expr.name} in constraints")
        raise UnsupportedFeature(f"expression {type(expr).__name__} in constraints")

    def numeric_or_enum(self, expr, ctx: BlockCtx) -> tuple:
        """Term for an expression that may be text (enum var) or numeric."""
        anchor = self.text_anchor(expr, ctx)
        if anchor is not None and isinstance(expr, Attr):
            rel, idx, attribute = self.slot_of(expr, ctx)
            return v(self._var_name(rel, idx, attribute.name))
        return self.numeric_expr(expr, ctx)

    def param_term(self, param: Param) -> tuple:
        name = f"param_{param.name}"
        if name not in self.script.variables:
            self.script.declare(name, "Int")
            lo, hi = self.config.default_int_domain
            self.script.add(conj([(">=", v(name), n(lo)), ("<=", v(name), n(hi))]))
            self.script.metadata["parameters"][param.name] = name
        return v(name)

    def expr_not_null(self, expr, ctx: BlockCtx) -> tuple:
        if isinstance(expr, RawTerm):
            return expr.not_null
        terms = []
        for sub in _expr_attrs(expr):
            terms.append(self.attr_not_null(sub, ctx))
        return conj(terms)

    # ------------------------------------------------------------ string routing

    def string_var(self, attr: Attr, ctx: BlockCtx) -> str:
        rel, idx, attribute = self.slot_of(attr, ctx)
        key = (rel, idx, attribute.name)
        name = self._string_var_of.get(key)
        if name is None:
            name = f"str_{rel}_{idx}_{attribute.name}"
            self._string_var_of[key] = name
        return name

    def add_string_constraint(self, c: StringConstraint) -> None:
        if self._disj_depth > 0:
            raise UnsupportedFeature(
                "string constraint under a disjunction cannot be separated")
        self.string_constraints.append(c)

    def solve_strings(self) -> None:
        """Solve collected string constraints; bind solved values as enums."""
        if not self.string_constraints:
            return
        from .strsolver import solve_all
        cfg = self.config
        # make sure every constant's characters are available in the alphabet
        extra = set()
        for c in self.string_constraints:
            if isinstance(c.other, str):
                extra |= set(c.other.replace("\\", ""))
        alphabet = cfg.alphabet + "".join(sorted(extra - set(cfg.alphabet)))
        from dataclasses import replace as dreplace
        solve_cfg = dreplace(cfg, alphabet=alphabet)
        bindings = solve_all(self.string_constraints, solve_cfg)
        self._string_bindings = bindings
        lookup = {name: key for key, name in self._string_var_of.items()}
        for var_name, value in bindings.items():
            key = lookup.get(var_name)
            if key is None:
                continue
            rel, idx, attr_name = key
            self.add_domain_value(rel, attr_name, value)
            sort_name = self.domain_sort_name(rel, attr_name)
            sort = self.script.enum_sort(sort_name)
            member = sort.index_of_value[value]
            self.script.add(("=", v(self._var_name(rel, idx, attr_name)),
                             e(sort_name, member)))
        self.script.metadata["notes"]["strings"] = dict(sorted(
            (k, bindings[k]) for k in bindings if k in lookup))

    # ------------------------------------------------------------ atom encoding

    def enum_const_term(self, rel: str, attr_name: str, value: str) -> tuple:
        self.add_domain_value(rel, attr_name, value)
        sort_name = self.domain_sort_name(rel, attr_name)
        sort = self.script.enum_sort(sort_name)
        if value not in sort.index_of_value:
            sort.add(value)
        return e(sort_name, sort.index_of_value[value])

    def encode_comparison(self, atom: Comparison, ctx: BlockCtx,
                          positive: bool) -> tuple:
        """Definitely-true (or definitely-false) term for a comparison."""
        left, right, op = atom.left, atom.right, atom.op
        if not positive:
            from .tree import NEGATED_RELOP
            if op == "~=":
                # handled by the string route
                return self.encode_string_atom(atom, ctx, positive=False)
            op = NEGATED_RELOP[op]
        la = self.text_anchor(left, ctx)
        ra = self.text_anchor(right, ctx)
        if la or ra:
            return self._encode_text_comparison(
                Comparison(left, op, right), ctx)
        guards = [self.expr_not_null(left, ctx), self.expr_not_null(right, ctx)]
        lt = self.numeric_expr(left, ctx)
        rt = self.numeric_expr(right, ctx)
        if op == "<>":
            body = neg(("=", lt, rt))
        else:
            body = (op, lt, rt)
        return conj(guards + [body])

    def _encode_text_comparison(self, atom: Comparison, ctx: BlockCtx) -> tuple:
        left, right, op = atom.left, atom.right, atom.op
        la = self.text_anchor(left, ctx)
        ra = self.text_anchor(right, ctx)
        if la and ra and op in {"=", "<>"} and \
                isinstance(left, Attr) and isinstance(right, Attr):
            self.merge_domains(la[0], la[1], ra[0], ra[1])
            lt = v(self._var_name(*self.slot_of(left, ctx)[:2], la[1]))
            rt = v(self._var_name(*self.slot_of(right, ctx)[:2], ra[1]))
            if op == "=":
                return ("=", lt, rt)
            return conj([self.attr_not_null(left, ctx),
                         self.attr_not_null(right, ctx), neg(("=", lt, rt))])
        if la and isinstance(right, Const) and op in {"=", "<>"} and \
                isinstance(left, Attr):
            member = self.enum_const_term(la[0], la[1], str(right.value))
            lt = v(self._var_name(*self.slot_of(left, ctx)[:2], la[1]))
            if op == "=":
                return ("=", lt, member)
            return conj([self.attr_not_null(left, ctx), neg(("=", lt, member))])
        if ra and isinstance(left, Const) and op in {"=", "<>"} and \
                isinstance(right, Attr):
            swapped = Comparison(right, {"=": "=", "<>": "<>"}[op], left)
            return self._encode_text_comparison(swapped, ctx)
        for a, b in ((left, right), (right, left)):
            if isinstance(b, RawTerm) and isinstance(a, Attr) and \
                    op in {"=", "<>"}:
                anchor = self.text_anchor(a, ctx)
                if anchor and b.anchor:
                    self.merge_domains(anchor[0], anchor[1],
                                       b.anchor[0], b.anchor[1])
                at = v(self._var_name(*self.slot_of(a, ctx)[:2], anchor[1]))
                if op == "=":
                    return ("=", at, b.term)
                return conj([self.attr_not_null(a, ctx), b.not_null,
                             neg(("=", at, b.term))])
        # ordered / case-insensitive text comparisons go to the string solver
        return self.encode_string_atom(atom, ctx, positive=True)

    def encode_string_atom(self, atom, ctx: BlockCtx, positive: bool) -> tuple:
        """Register a string constraint; the atom's truth is realized by the
        solved binding, so the returned term is TRUE."""
        from .tree import NEGATED_RELOP
        if isinstance(atom, LikePred):
            op = atom.op
            if not positive:
                op = {"like": "not_like", "not_like": "like", "ilike": "not_ilike",
                      "not_ilike": "ilike"}[op]
            target = atom.expr
            if isinstance(target, Func) and target.name in {"lower", "upper"}:
                target = target.args[0]
            if not isinstance(target, Attr):
                raise UnsupportedFeature("LIKE on a non-column expression")
            var = self.string_var(target, ctx)
            self.add_string_constraint(str_like(var, op, atom.pattern))
            return TRUE
        if isinstance(atom, Comparison):
            op = atom.op
            if not positive:
                op = "!~=" if op == "~=" else NEGATED_RELOP[op]
            left, right = atom.left, atom.right
            if isinstance(left, Func) and left.name in {"lower", "upper"}:
                left = left.args[0]
            if isinstance(right, Func) and right.name in {"lower", "upper"}:
                right = right.args[0]
            if isinstance(left, Const) and isinstance(right, Attr):
                from .tree import SWAPPED_RELOP
                left, right = right, left
                if op in SWAPPED_RELOP:
                    op = SWAPPED_RELOP[op]
            if not isinstance(left, Attr):
                raise UnsupportedFeature("string comparison on expression")
            var = self.string_var(left, ctx)
            if op == "!~=":
                # distinct but case-insensitively equal has a dedicated plan;
                # plain negation of ~= is inequality under some case fold
                if isinstance(right, Const):
                    self.add_string_constraint(cmp_const(var, "<>", str(right.value)))
                else:
                    other = self.string_var(right, ctx)
                    lrel = self.text_anchor(left, ctx)
                    rrel = self.text_anchor(right, ctx)
                    self.merge_domains(lrel[0], lrel[1], rrel[0], rrel[1])
                    self.add_string_constraint(cmp_var(var, "<>", other))
                return TRUE
            if isinstance(right, Const):
                self.add_string_constraint(cmp_const(var, op, str(right.value)))
            else:
                other = self.string_var(right, ctx)
                lrel = self.text_anchor(left, ctx)
                rrel = self.text_anchor(right, ctx)
                self.merge_domains(lrel[0], lrel[1], rrel[0], rrel[1])
                self.add_string_constraint(cmp_var(var, op, other))
            return TRUE
        raise UnsupportedFeature(f"string atom {type(atom).__name__}")

    def encode_atom(self, atom: Pred, ctx: BlockCtx, positive: bool = True) -> tuple:
        """Definitely-true / definitely-false term for a scalar atom."""
        if not self._suppress_modes and isinstance(atom, Comparison):
            mode = self.atom_modes.get(id(atom))
            if isinstance(mode, tuple) and mode and mode[0] == "op":
                atom = Comparison(atom.left, mode[1], atom.right,
                                  atom.from_between)
        if isinstance(atom, TruePred):
            return TRUE if positive else FALSE
        if isinstance(atom, Contradiction):
            return FALSE if positive else TRUE
        if isinstance(atom, Not):
            return self.encode_atom(atom.item, ctx, not positive)
        if isinstance(atom, Comparison):
            if atom.op == "~=" or self._needs_string_route(atom, ctx):
                return self.encode_string_atom(atom, ctx, positive)
            return self.encode_comparison(atom, ctx, positive)
        if isinstance(atom, LikePred):
            return self.encode_string_atom(atom, ctx, positive)
        if isinstance(atom, IsNull):
            want_null = atom.negated == (not positive)
            target = atom.expr
            if not isinstance(target, Attr):
                raise UnsupportedFeature("IS NULL on a non-column expression")
            if want_null:
                return self.attr_is_null(target, ctx)
            return self.attr_not_null(target, ctx)
        raise UnsupportedFeature(f"atom {type(atom).__name__} in encoding")

    def encode_pred(self, pred: Pred, ctx: BlockCtx, positive: bool = True) -> tuple:
        """Three-valued encoder over predicate trees (no subquery atoms)."""
        from .tree import And, Or
        if isinstance(pred, And):
            flip = not positive
            self._disj_depth += 1 if flip else 0
            try:
                parts = [self.encode_pred(p, ctx, positive) for p in pred.items]
            finally:
                self._disj_depth -= 1 if flip else 0
            return conj(parts) if positive else disj(parts)
        if isinstance(pred, Or):
            self._disj_depth += 1 if positive else 0
            try:
                parts = [self.encode_pred(p, ctx, positive) for p in pred.items]
            finally:
                self._disj_depth -= 1 if positive else 0
            return disj(parts) if positive else conj(parts)
        if isinstance(pred, Not):
            return self.encode_pred(pred.item, ctx, not positive)
        return self.encode_atom(pred, ctx, positive)

    def _needs_string_route(self, atom: Comparison, ctx: BlockCtx) -> bool:
        la = self.text_anchor(atom.left, ctx)
        ra = self.text_anchor(atom.right, ctx)
        if not (la or ra):
            return False
        if atom.op in {"=", "<>"}:
            has_func = any(isinstance(s, Func) and s.name in {"lower", "upper"}
                           for s in (atom.left, atom.right))
            return has_func
        return True


def _null_member(tag: str):
    from .script import EnumMember
    return EnumMember(tag, None)


def _expr_attrs(expr):
    from .tree import iter_exprs
    for sub in iter_exprs(expr):
        if isinstance(sub, Attr):
            yield sub
