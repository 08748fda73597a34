"""Constraint generation for one query block (joins, clause, groups, guards).

A BlockGen instantiates the block's relation occurrences into tuple slots
(honoring a {1,n} cardinality assignment for constrained aggregation),
asserts join conditions aligned per group row, asserts one DNF clause of
the WHERE predicate while falsifying its siblings, expands aggregates
into arithmetic over the group rows, and guards against extra tuples
reaching the block (Algorithm-style unfolding over slot combinations).

Subquery atoms instantiate nested BlockGens: EXISTS creates fresh tuples
per outer row; NOT EXISTS asserts that every slot combination of the
subquery's relations fails a selection or join condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .analysis import (AttributeInference, BlockInfo, CardinalityAssignment,
                       add_inferred_edges, build_equivalence_classes,
                       collect_block_info, infer_attribute_properties)
from .build import BlockCtx, GoalBuilder, Occurrence
from .errors import EquivalentMutation, InfeasibleNull, UnsupportedFeature
from .normalize import to_dnf
from .script import FALSE, TRUE, conj, disj, e, n, neg, v
from .tree import (AggExpr, Arith, Attr, Comparison, Const, Contradiction,
                   Exists, FromSubquery, Func, GroupAgg, Having, IsNull, Join,
                   LikePred, Node, Not, Param, Pred, Project, RelationLeaf,
                   ScalarSub, Select, SetOp, TruePred, find_block_parts,
                   iter_atoms, iter_exprs, iter_nodes, pred_exprs, render_expr)

MODE_TRUE = "true"
MODE_FALSE = "false"


@dataclass
class GroupSpec:
    n: int = 1
    assignment: CardinalityAssignment | None = None
    groups: int = 1


@dataclass
class BlockOptions:
    clause_index: int = 0
    atom_modes: dict[int, str] = field(default_factory=dict)
    nullify: tuple | None = None          # (preserve_alias, other_alias, cond_index)
    guard: bool = False
    group: GroupSpec | None = None
    falsify_siblings: bool = True
    group_open: bool = False              # skip having assertion (used by kills)
    having_modes: dict[int, str] = field(default_factory=dict)
    distinct_pair: bool = False           # identical-tuple technique
    having_false: bool = False            # group exists but HAVING fails
    not_exists_strategy: str = "having_false"   # or "empty"
    count_null_aggs: frozenset = frozenset()    # COUNT terms forced over NULLs
    count_null_attr: tuple | None = None  # ("attr"|"all", AggExpr|None)
    extra_group_distinct: Attr | None = None


@dataclass
class ViewBinding:
    items: dict[str, object]
    instances: list["BlockGen"]
    occ_id: str = ""
    per_group: int = 1
    inner_group_keys: list = field(default_factory=list)


class BlockGen:
    def __init__(self, builder: GoalBuilder, root: Node,
                 outer_ctx: BlockCtx | None = None,
                 options: BlockOptions | None = None):
        self.builder = builder
        self.root = root
        self.options = options or BlockOptions()
        self.parts = find_block_parts(root)
        self.ctx = BlockCtx(parent=outer_ctx)
        self.occ_of_alias: dict[str, Occurrence] = {}
        self.view_of_alias: dict[str, ViewBinding] = {}
        self.row_ctxs: list[BlockCtx] = []
        self.group_row_ctxs: list[list[BlockCtx]] = []
        self.clauses: list[list[Pred]] = []
        self.agg_terms: dict[str, tuple] = {}
        self.info: BlockInfo | None = None
        self.inference: AttributeInference | None = None
        self._sub_gens: list[BlockGen] = []
        self._view_gens: list[BlockGen] = []
        self._thunks: list = []

    # ------------------------------------------------------------ preparation

    def prepare(self) -> "BlockGen":
        spec = self.options.group or GroupSpec()
        self._instantiate_from(self.parts["from"], spec)
        select = self.parts.get("select")
        pred = select.predicate if select is not None else TruePred()
        self.clauses = to_dnf(pred, self.builder.config.dnf_clause_cap)
        group = self.parts.get("group")
        group_keys = group.keys if group is not None else []
        clause = self.chosen_clause()
        self.info = collect_block_info(self.parts["from"], self.occ_of_alias,
                                       list(clause), group_keys)
        classes = build_equivalence_classes(self.info)
        add_inferred_edges(self.info, classes)
        self.inference = infer_attribute_properties(self.info, classes)
        self._build_row_ctxs(spec)
        self._premerge_text_domains()
        self._plan_atoms()
        return self

    def _premerge_text_domains(self) -> None:
        """Union text domains for attribute pairs equated or compared
        anywhere in this block (must happen before the freeze)."""
        builder = self.builder
        atoms: list[Pred] = []
        for node in _all_join_nodes(self.parts["from"]):
            atoms.extend(node.conditions)
            atoms.extend(node.filters)
        for clause in self.clauses:
            atoms.extend(clause)
        having = self.parts.get("having")
        if having is not None:
            atoms.extend(iter_atoms(having.predicate))
        for atom in atoms:
            refs = []
            for expr in pred_exprs(atom):
                for sub in iter_exprs(expr):
                    if isinstance(sub, Attr) and sub.attribute is not None \
                            and sub.attribute.is_text:
                        try:
                            rel, _idx, attribute = builder.slot_of(sub, self.ctx)
                        except Exception:
                            continue
                        refs.append((rel, attribute.name))
            for i in range(1, len(refs)):
                builder.merge_domains(refs[0][0], refs[0][1],
                                      refs[i][0], refs[i][1])

    def _plan_atoms(self) -> None:
        """Decide per-row atom assertions; instantiate subquery blocks now
        (allocation must precede the base-axiom freeze)."""
        self._atom_plan = []
        select = self.parts.get("select")
        if select is not None and not self.clauses:
            self._atom_plan.append({"kind": "false"})
        clause = self.chosen_clause()
        chosen_idx = min(self.options.clause_index, max(len(self.clauses) - 1, 0))
        for ri, rows in enumerate(self.group_row_ctxs):
            for i, ctx in enumerate(rows):
                for atom in clause:
                    mode = self._mode_of(atom, i)
                    self._plan_one_atom(atom, ctx, mode)
                if self.options.falsify_siblings:
                    for idx, sibling in enumerate(self.clauses):
                        if idx == chosen_idx:
                            continue
                        candidates = [a for a in sibling
                                      if id(a) not in set(map(id, clause))]
                        if not candidates:
                            continue
                        atom = next((a for a in candidates
                                     if not _is_subquery_atom(a)), candidates[0])
                        self._plan_one_atom(atom, ctx, MODE_FALSE)

    def _mode_of(self, atom, row_index: int) -> object:
        mode = self.builder.atom_modes.get(
            id(atom), self.options.atom_modes.get(id(atom), MODE_TRUE))
        if isinstance(mode, tuple) and mode and mode[0] == "per_row":
            seq = mode[1]
            return seq[min(row_index, len(seq) - 1)]
        return mode
        having = self.parts.get("having")
        if having is not None and not self.options.group_open:
            for rows in self.group_row_ctxs:
                for atom in iter_atoms(having.predicate):
                    if _scalar_side(atom) is not None:
                        mode = self.builder.having_modes.get(
                            id(atom), self.options.having_modes.get(
                                id(atom), MODE_TRUE))
                        entry = {"kind": "scalar", "atom": atom,
                                 "ctx": rows[0], "mode": mode, "having": True}
                        self._prepare_scalar(entry)
                        self._atom_plan.append(entry)

    def _plan_one_atom(self, atom: Pred, ctx: BlockCtx, mode: str) -> None:
        if isinstance(atom, Exists):
            want_exists = (not atom.negated) == (mode in (MODE_TRUE, "gt", "lt", "eq"))
            entry = {"kind": "exists" if want_exists else "not_exists",
                     "atom": atom, "ctx": ctx, "mode": mode}
            sub_parts = find_block_parts(atom.link.subtree)
            if want_exists:
                opts = None
                if id(atom.link) in self.builder.straddle_links:
                    opts = BlockOptions(group=GroupSpec(
                        2, all_two_assignment(atom.link.subtree), 1))
                sub = plan_block(self.builder, atom.link.subtree, ctx, opts)
                sub.prepare()
                entry["subgen"] = sub
                self._sub_gens.append(sub)
            elif sub_parts.get("having") is not None and \
                    self.options.not_exists_strategy == "having_false":
                # tuples reach the aggregate but the HAVING condition fails
                sub = plan_block(self.builder, atom.link.subtree, ctx,
                                 BlockOptions(having_false=True, guard=True))
                sub.prepare()
                entry["kind"] = "exists"
                entry["subgen"] = sub
                self._sub_gens.append(sub)
            self._atom_plan.append(entry)
            return
        if _scalar_side(atom) is not None:
            entry = {"kind": "scalar", "atom": atom, "ctx": ctx, "mode": mode}
            self._prepare_scalar(entry)
            self._atom_plan.append(entry)
            return
        self._atom_plan.append({"kind": "plain", "atom": atom, "ctx": ctx,
                                "mode": mode})

    def _prepare_scalar(self, entry) -> None:
        atom = entry["atom"]
        scalar, outer_expr, op = _scalar_parts(atom)
        mode = entry["mode"]
        if mode == MODE_FALSE:
            from .tree import NEGATED_RELOP
            op = NEGATED_RELOP[op]
        elif mode in {"gt", "lt", "eq"}:
            op = {"gt": ">", "lt": "<", "eq": "="}[mode]
        link = scalar.link
        sub_parts = find_block_parts(link.subtree)
        project = sub_parts.get("project")
        if project is None or len(project.items) != 1:
            raise UnsupportedFeature("scalar subquery must project one column")
        target = project.items[0].expr
        sub = plan_block(self.builder, link.subtree, entry["ctx"],
                         scalar_constraint=(target, op, outer_expr))
        sub.prepare()
        self._sub_gens.append(sub)
        entry.update({"subgen": sub, "target": target, "op": op,
                      "outer_expr": outer_expr})

    def chosen_clause(self) -> list[Pred]:
        if not self.clauses:
            return []
        idx = min(self.options.clause_index, len(self.clauses) - 1)
        return self.clauses[idx]

    def _instantiate_from(self, node: Node, spec: GroupSpec) -> None:
        if isinstance(node, RelationLeaf):
            count = 1
            if spec.assignment is not None:
                count = spec.assignment.counts.get(f"{node.alias}", 1)
            occ = self.builder.new_occurrence(node, count * max(spec.groups, 1))
            occ.per_group = count
            self.occ_of_alias[node.alias] = occ
            self.ctx.occurrences[node.alias] = occ
            return
        if isinstance(node, Join):
            self._instantiate_from(node.left, spec)
            self._instantiate_from(node.right, spec)
            return
        if isinstance(node, FromSubquery):
            count = 1
            if spec.assignment is not None:
                count = spec.assignment.counts.get(node.alias, 1)
            count *= max(spec.groups, 1)
            from .tree import output_columns
            inner_parts = find_block_parts(node.child)
            project = inner_parts.get("project")
            if project is None:
                raise UnsupportedFeature("from-subquery without projection")
            items = {}
            for i, item in enumerate(project.items):
                name = node.columns[i] if i < len(node.columns) else item.name
                items[name] = item.expr
            binding = ViewBinding(items, [])
            binding.occ_id = f"view_{node.alias}_{id(node) % 9973}"
            binding.per_group = max(count // max(spec.groups, 1), 1)
            inner_group = inner_parts.get("group")
            if inner_group is not None:
                for key in inner_group.keys:
                    for name, expr in items.items():
                        from .tree import render_expr as _re
                        if _re(expr) == _re(key):
                            binding.inner_group_keys.append(name)
            for i in range(count):
                sub = plan_block(self.builder, node.child, self.ctx)
                sub.prepare()
                binding.instances.append(sub)
                self._view_gens.append(sub)
            self.view_of_alias[node.alias] = binding
            self.ctx.views[node.alias] = binding
            return
        if isinstance(node, SetOp):
            raise UnsupportedFeature("set operator nested in FROM")
        raise UnsupportedFeature(f"FROM node {type(node).__name__}")

    def _build_row_ctxs(self, spec: GroupSpec) -> None:
        groups = max(spec.groups, 1)
        n_rows = max(spec.n, 1)
        self.group_row_ctxs = []
        for g in range(groups):
            rows = []
            for i in range(n_rows):
                ctx = self.ctx
                for alias, occ in self.occ_of_alias.items():
                    per_group = getattr(occ, "per_group", 1)
                    offset = g * per_group + (i if per_group >= n_rows else 0)
                    offset = min(offset, len(occ.slots) - 1)
                    ctx = ctx.at(occ.occ_id, offset)
                for alias, binding in self.view_of_alias.items():
                    per_group = binding.per_group
                    offset = g * per_group + (i if per_group >= n_rows else 0)
                    offset = min(offset, len(binding.instances) - 1)
                    ctx = ctx.at(binding.occ_id, offset)
                rows.append(ctx)
            self.group_row_ctxs.append(rows)
        self.row_ctxs = self.group_row_ctxs[0]

    # ------------------------------------------------------------ emission

    def emit(self) -> None:
        spec = self.options.group or GroupSpec()
        for sub in self._view_gens:
            sub.emit()
        for g, rows in enumerate(self.group_row_ctxs):
            for i, ctx in enumerate(rows):
                self._assert_joins(self.parts["from"], ctx, row=i)
        for entry in self._atom_plan:
            self._emit_entry(entry)
        group = self.parts.get("group")
        if group is not None and not self.options.group_open:
            self._assert_group(group, spec)
        if self.options.distinct_pair:
            self._assert_distinct_pair()
        if self.options.guard:
            self._assert_no_extra_tuples()

    def _emit_entry(self, entry) -> None:
        kind = entry["kind"]
        if kind == "false":
            self.builder.script.add(FALSE)
            return
        if kind == "plain":
            self._assert_atom(entry["atom"], entry["ctx"], entry["mode"])
            return
        if kind == "exists":
            entry["subgen"].emit()
            return
        if kind == "not_exists":
            self.gen_not_exists(entry["atom"].link, entry["ctx"])
            return
        if kind == "scalar":
            self._emit_scalar(entry)
            return
        raise UnsupportedFeature(f"plan entry {kind}")

    def _emit_scalar(self, entry) -> None:
        builder = self.builder
        sub: BlockGen = entry["subgen"]
        sub.emit()
        target, op, outer_expr = entry["target"], entry["op"], entry["outer_expr"]
        outer_ctx = entry["ctx"]
        has_agg = any(isinstance(s, AggExpr) for s in iter_exprs(target))
        bare = (has_agg and len(sub.occ_of_alias) == 1
                and not sub.view_of_alias and not sub.chosen_clause()
                and not (sub.parts.get("group") and sub.parts["group"].keys))
        if bare:
            occ = next(iter(sub.occ_of_alias.values()))
            count = builder.script.slot_count.get(occ.relation, 0)
            rows = []
            for idx in range(1, count + 1):
                rows.append(_ctx_with_slot(sub.ctx, occ, idx))
            inner_term = sub.group_term(_first_agg(target), rows)
        elif has_agg:
            inner_term = sub.group_term(_first_agg(target), sub.row_ctxs)
        else:
            inner_term = builder.numeric_expr(target, sub.row_ctxs[0])
            builder.script.add(builder.expr_not_null(target, sub.row_ctxs[0]))
        if isinstance(outer_expr, Const):
            outer_term = n(outer_expr.value)
        else:
            outer_term = builder.numeric_expr(outer_expr, outer_ctx)
            builder.script.add(builder.expr_not_null(outer_expr, outer_ctx))
        if op == "<>":
            builder.script.add(neg(("=", outer_term, inner_term)))
        else:
            builder.script.add((op, outer_term, inner_term))
        if not bare:
            emit_no_extra_tuples(builder, sub)

    # -- joins

    def _assert_joins(self, node: Node, ctx: BlockCtx, row: int) -> None:
        if isinstance(node, Join):
            self._assert_joins(node.left, ctx, row)
            self._assert_joins(node.right, ctx, row)
            nullify = self.options.nullify or self.builder.nullify
            for k, cond in enumerate(node.conditions):
                if nullify is not None and nullify[2] == id(cond):
                    self._assert_nullified(cond, ctx)
                    continue
                self.builder.script.add(self.builder.encode_atom(cond, ctx, True))
            for f in node.filters:
                if nullify is not None and nullify[2] == id(f):
                    self._assert_nullified(f, ctx)
                    continue
                self._assert_atom(f, ctx, MODE_TRUE)
        elif isinstance(node, (RelationLeaf, FromSubquery)):
            return
        else:
            for child in node.children():
                self._assert_joins(child, ctx, row)

    def _assert_nullified(self, cond: Pred, ctx: BlockCtx) -> None:
        """The preserved side's tuple matches no tuple of the other relation."""
        preserve_alias, other_alias, _ = self.options.nullify or \
            self.builder.nullify
        if not isinstance(cond, Comparison):
            raise UnsupportedFeature("nullify on a non-comparison join condition")
        if other_alias in self.view_of_alias:
            binding = self.view_of_alias[other_alias]
            terms = []
            for i in range(len(binding.instances)):
                shifted = ctx.at(binding.occ_id, i)
                terms.append(neg(self.builder.encode_atom(cond, shifted, True)))
            self.builder.script.add(conj(terms))
            return
        occ = self.occ_of_alias.get(other_alias)
        if occ is None:
            raise UnsupportedFeature("nullify alias not in block", other_alias)
        rel_count = self.builder.script.slot_count[occ.relation]
        terms = []
        for idx in range(1, rel_count + 1):
            shifted = _ctx_with_slot(ctx, occ, idx)
            terms.append(neg(self.builder.encode_atom(cond, shifted, True)))
        self.builder.script.add(conj(terms))

    # -- WHERE clause atoms

    def _assert_atom(self, atom: Pred, ctx: BlockCtx, mode: str) -> None:
        builder = self.builder
        if isinstance(atom, (TruePred,)):
            return
        if isinstance(atom, Contradiction):
            if mode == MODE_TRUE:
                builder.script.add(FALSE)
            return
        if mode == "skip":
            return
        if isinstance(mode, tuple) and mode and mode[0] == "op":
            # operator substitution happens inside encode_atom
            builder.script.add(builder.encode_atom(atom, ctx, True))
            return
        if mode in (MODE_TRUE, MODE_FALSE):
            builder.script.add(builder.encode_atom(atom, ctx, mode == MODE_TRUE))
            return
        if isinstance(atom, Comparison) and mode in {"gt", "lt", "eq"}:
            if builder._needs_string_route(atom, ctx) or atom.op == "~=":
                op = {"gt": ">", "lt": "<", "eq": "="}[mode]
                builder.encode_string_atom(
                    Comparison(atom.left, op, atom.right), ctx, True)
                return
            op = {"gt": ">", "lt": "<", "eq": "="}[mode]
            builder.script.add(builder.encode_atom(
                Comparison(atom.left, op, atom.right), ctx, True))
            return
        if isinstance(atom, Comparison) and isinstance(mode, tuple) and \
                mode[0] == "str_ci":
            # distinct but case-insensitively equal
            builder.encode_string_atom(
                Comparison(atom.left, "<>", atom.right), ctx, True)
            builder.encode_string_atom(
                Comparison(atom.left.clone(), "~=", atom.right.clone()), ctx, True)
            return
        if isinstance(atom, LikePred) and isinstance(mode, tuple):
            target = atom.expr
            if isinstance(target, Func) and target.name in {"lower", "upper"}:
                target = target.args[0]
            var = builder.string_var(target, ctx)
            from .strsolver import like as str_like
            if mode[0] == "like_d1":
                builder.add_string_constraint(str_like(var, "like", atom.pattern))
            elif mode[0] == "like_d2":
                builder.add_string_constraint(str_like(var, "ilike", atom.pattern))
                builder.add_string_constraint(str_like(var, "not_like", atom.pattern))
            elif mode[0] == "like_d3":
                builder.add_string_constraint(str_like(var, "not_like", atom.pattern))
                builder.add_string_constraint(str_like(var, "not_ilike", atom.pattern))
            elif mode[0] == "like_pattern":
                op = "ilike" if "ilike" in atom.op else "like"
                builder.add_string_constraint(str_like(var, op, mode[1]))
            else:
                raise UnsupportedFeature(f"atom mode {mode}")
            return
        raise UnsupportedFeature(f"atom mode {mode}")

    # -- group machinery

    def group_term(self, agg: AggExpr, rows: list[BlockCtx] | None = None) -> tuple:
        """Arithmetic term for an aggregate over the group rows."""
        key = render_expr(agg)
        if rows is None and key in self.agg_terms:
            return self.agg_terms[key]
        rows = rows or self.row_ctxs
        builder = self.builder
        if agg.func == "count_star":
            term = n(len(rows))
        elif agg.func == "count":
            if key in self.options.count_null_aggs:
                # the dataset NULLs this column; COUNT(attr) collapses to 0
                # at execution while the constraints use the mutant's count
                term = n(len(rows))
            else:
                for ctx in rows:
                    builder.script.add(builder.expr_not_null(agg.arg, ctx))
                if agg.distinct:
                    self._assert_rows_distinct(agg.arg, rows)
                term = n(len(rows))
        else:
            row_terms = [builder.numeric_expr(self._subst_aggs(agg.arg), ctx)
                         for ctx in rows]
            for ctx in rows:
                builder.script.add(builder.expr_not_null(agg.arg, ctx))
            if agg.distinct:
                self._assert_rows_distinct(agg.arg, rows)
                row_terms = _dedup_terms(row_terms)
            if agg.func == "sum":
                term = ("+",) + tuple(row_terms) if len(row_terms) > 1 else row_terms[0]
            elif agg.func == "avg":
                total = ("+",) + tuple(row_terms) if len(row_terms) > 1 else row_terms[0]
                term = ("*", n(Fraction(1, len(row_terms))), total)
            elif agg.func in {"min", "max"}:
                aux_name = f"agg_{len(builder.script.variables)}_{agg.func}"
                builder.script.declare(aux_name, "Real")
                op = "<=" if agg.func == "min" else ">="
                builder.script.add(disj([("=", v(aux_name), t) for t in row_terms]))
                for t in row_terms:
                    builder.script.add((op, v(aux_name), t))
                term = v(aux_name)
            else:
                raise UnsupportedFeature(f"aggregate {agg.func}")
        if rows is self.row_ctxs:
            self.agg_terms[key] = term
        return term

    def _subst_aggs(self, expr):
        return expr

    def _assert_rows_distinct(self, arg, rows: list[BlockCtx]) -> None:
        builder = self.builder
        terms = [builder.numeric_or_enum(arg, ctx) for ctx in rows]
        for i in range(len(terms)):
            for j in range(i + 1, len(terms)):
                if terms[i] != terms[j]:
                    builder.script.add(neg(("=", terms[i], terms[j])))

    def _assert_group(self, group: GroupAgg, spec: GroupSpec) -> None:
        builder = self.builder
        for g, rows in enumerate(self.group_row_ctxs):
            # group keys agree across the group's rows
            for key in group.keys:
                base = rows[0]
                for ctx in rows[1:]:
                    self._assert_key_equal(key, base, ctx)
            # distinct tuples within the group per unique elements
            if spec.assignment is not None and spec.n > 1:
                self._assert_group_tuples_distinct(spec, rows)
            self._assert_view_instances_distinct(rows)
            # HAVING with aggregates expanded over this group's rows
            having = self.parts.get("having")
            if having is not None:
                saved_rows = self.row_ctxs
                self.row_ctxs = rows
                self.agg_terms = {}
                try:
                    merged_modes = dict(self.options.having_modes)
                    merged_modes.update(
                        {k: vv for k, vv in self.builder.having_modes.items()})
                    term = self._having_pred_term(
                        having.predicate, rows,
                        positive=not self.options.having_false,
                        modes=merged_modes)
                    self.builder.script.add(term)
                finally:
                    self.row_ctxs = saved_rows
        # separate groups must disagree on at least one group key
        if len(self.group_row_ctxs) > 1:
            for g in range(1, len(self.group_row_ctxs)):
                self._assert_groups_differ(group, self.group_row_ctxs[0],
                                           self.group_row_ctxs[g])

    def _assert_key_equal(self, key, ctx_a: BlockCtx, ctx_b: BlockCtx) -> None:
        builder = self.builder
        if isinstance(key, Attr) and self._key_is_count_nulled(key):
            # the count-NULL dataset groups rows whose key is NULL; SQL
            # groups NULLs together, so both slots go NULL instead of equal
            builder.script.add(builder.attr_is_null(key, ctx_a))
            builder.script.add(builder.attr_is_null(key, ctx_b))
            return
        if isinstance(key, Attr) and key.attribute is not None \
                and key.attribute.is_text:
            ta = v(builder._var_name(*builder.slot_of(key, ctx_a)[:2], key.name))
            tb = v(builder._var_name(*builder.slot_of(key, ctx_b)[:2], key.name))
            builder.script.add(("=", ta, tb))
            return
        if isinstance(key, Func):
            # sufficient condition: equate the underlying attributes
            for sub in iter_exprs(key):
                if isinstance(sub, Attr):
                    self._assert_key_equal(sub, ctx_a, ctx_b)
            return
        ta = builder.numeric_expr(key, ctx_a)
        tb = builder.numeric_expr(key, ctx_b)
        builder.script.add(("=", ta, tb))

    def _key_is_count_nulled(self, key: Attr) -> bool:
        for agg_key in self.options.count_null_aggs:
            if f"({key.alias}.{key.name})" in agg_key or \
                    f"({key.name})" == agg_key[agg_key.find("("):]:
                return True
        return False

    def _assert_group_tuples_distinct(self, spec: GroupSpec,
                                      rows: list[BlockCtx]) -> None:
        builder = self.builder
        for alias, occ in sorted(self.occ_of_alias.items()):
            per_group = getattr(occ, "per_group", 1)
            if per_group < 2:
                continue
            uniq_sets = (spec.assignment.forced_unique.get(alias)
                         if spec.assignment else None) or \
                [frozenset(ks) for ks in occ.rel.key_sets]
            slots = []
            for ctx in rows:
                offset = ctx.position.get(occ.occ_id, 0)
                slots.append(occ.slots[min(offset, len(occ.slots) - 1)])
            for us in uniq_sets:
                if not us:
                    continue
                for i in range(len(slots)):
                    for j in range(i + 1, len(slots)):
                        if slots[i] == slots[j]:
                            continue
                        eqs = [("=",
                                v(builder._var_name(occ.relation, slots[i], a)),
                                v(builder._var_name(occ.relation, slots[j], a)))
                               for a in sorted(us)]
                        builder.script.add(neg(conj(eqs)))

    def _assert_view_instances_distinct(self, rows: list[BlockCtx]) -> None:
        """Rows drawn from different instances of one view realize different
        inner groups: at least one inner group key differs."""
        builder = self.builder
        for alias, binding in sorted(self.view_of_alias.items()):
            used = []
            for ctx in rows:
                pos = min(ctx.position.get(binding.occ_id, 0),
                          len(binding.instances) - 1)
                if pos not in used:
                    used.append(pos)
            if len(used) < 2 or not binding.inner_group_keys:
                continue
            for x in range(len(used)):
                for y in range(x + 1, len(used)):
                    ia = binding.instances[used[x]]
                    ib = binding.instances[used[y]]
                    options = []
                    for col in binding.inner_group_keys:
                        expr = binding.items[col]
                        if isinstance(expr, Attr) and expr.attribute is not None \
                                and expr.attribute.is_text:
                            ta = v(builder._var_name(
                                *builder.slot_of(expr, ia.row_ctxs[0])[:2],
                                expr.name))
                            tb = v(builder._var_name(
                                *builder.slot_of(expr, ib.row_ctxs[0])[:2],
                                expr.name))
                            options.append(neg(("=", ta, tb)))
                        elif isinstance(expr, Attr):
                            ta = builder.numeric_expr(expr, ia.row_ctxs[0])
                            tb = builder.numeric_expr(expr, ib.row_ctxs[0])
                            options.append(neg(("=", ta, tb)))
                    if options:
                        builder.script.add(disj(options))

    def _having_pred_term(self, pred: Pred, rows: list[BlockCtx],
                          positive: bool, modes: dict[int, str]) -> tuple:
        from .tree import And, Or
        if isinstance(pred, And):
            parts = [self._having_pred_term(p, rows, positive, modes)
                     for p in pred.items]
            return conj(parts) if positive else disj(parts)
        if isinstance(pred, Or):
            parts = [self._having_pred_term(p, rows, positive, modes)
                     for p in pred.items]
            return disj(parts) if positive else conj(parts)
        if isinstance(pred, Not):
            return self._having_pred_term(pred.item, rows, not positive, modes)
        if isinstance(pred, TruePred):
            return TRUE if positive else FALSE
        if isinstance(pred, IsNull):
            has_agg = any(isinstance(s, AggExpr)
                          for s in iter_exprs(pred.expr))
            if has_agg:
                # group rows exist with non-null inputs: aggregate is non-null
                null_now = not pred.negated
                truth = not null_now
                return (TRUE if truth else FALSE) if positive else \
                    (FALSE if truth else TRUE)
            want_null = (not pred.negated) == positive
            target = pred.expr
            if not isinstance(target, Attr):
                raise UnsupportedFeature("IS NULL on expression in HAVING")
            ctx = rows[0]
            return self.builder.attr_is_null(target, ctx) if want_null \
                else self.builder.attr_not_null(target, ctx)
        if not isinstance(pred, Comparison):
            raise UnsupportedFeature(f"HAVING atom {type(pred).__name__}")
        if _scalar_side(pred) is not None:
            return TRUE   # asserted via its own scalar plan entry
        op = pred.op
        mode = modes.get(id(pred), self.builder.atom_modes.get(id(pred)))
        if isinstance(mode, str) and mode in {"gt", "lt", "eq"}:
            op = {"gt": ">", "lt": "<", "eq": "="}[mode]
        elif isinstance(mode, tuple) and mode and mode[0] == "op":
            op = mode[1]
        elif mode == MODE_FALSE:
            positive = not positive
        if not positive:
            from .tree import NEGATED_RELOP
            if op == "~=":
                raise UnsupportedFeature("~= in HAVING")
            op = NEGATED_RELOP[op]
        lt = self._having_term(pred.left, rows)
        rt = self._having_term(pred.right, rows)
        if op == "<>":
            return neg(("=", lt, rt))
        return (op, lt, rt)

    def _having_term(self, expr, rows: list[BlockCtx]) -> tuple:
        builder = self.builder
        if isinstance(expr, AggExpr):
            return self.group_term(expr, rows)
        if isinstance(expr, Arith):
            a = self._having_term(expr.left, rows)
            b = self._having_term(expr.right, rows)
            if expr.op == "/":
                if b[0] != "n":
                    raise UnsupportedFeature("division by variable in HAVING")
                return ("*", n(Fraction(1) / Fraction(b[1])), a)
            return (expr.op, a, b)
        if isinstance(expr, Const):
            return n(expr.value)
        if isinstance(expr, (Attr, Param)):
            # group-by attribute or correlation variable
            ctx = rows[0]
            if isinstance(expr, Param):
                return builder.param_term(expr)
            builder.script.add(builder.expr_not_null(expr, ctx))
            return builder.numeric_expr(expr, ctx)
        raise UnsupportedFeature(f"HAVING term {type(expr).__name__}")

    def _assert_groups_differ(self, group: GroupAgg, rows_a, rows_b) -> None:
        """At least one group-by attribute differs across groups."""
        builder = self.builder
        target = self.options.extra_group_distinct
        options = []
        keys = list(group.keys)
        if target is not None:
            keys = [target]
        for key in keys:
            if isinstance(key, Attr) and key.attribute is not None \
                    and key.attribute.is_text:
                ta = v(builder._var_name(*builder.slot_of(key, rows_a[0])[:2],
                                         key.name))
                tb = v(builder._var_name(*builder.slot_of(key, rows_b[0])[:2],
                                         key.name))
                options.append(neg(("=", ta, tb)))
            elif isinstance(key, Attr):
                ta = builder.numeric_expr(key, rows_a[0])
                tb = builder.numeric_expr(key, rows_b[0])
                options.append(conj([builder.expr_not_null(key, rows_a[0]),
                                     builder.expr_not_null(key, rows_b[0]),
                                     neg(("=", ta, tb))]))
        if options:
            builder.script.add(disj(options) if target is None else conj(options))

    # -- DISTINCT kill helper (identical projected tuples, different source)

    def _assert_distinct_pair(self) -> None:
        builder = self.builder
        project = self.parts.get("project")
        if project is None:
            raise UnsupportedFeature("distinct pair without projection")
        rows = self.row_ctxs
        if len(rows) < 2:
            raise UnsupportedFeature("distinct pair needs two rows")
        a, b = rows[0], rows[1]
        for item in project.items:
            self._assert_item_equal(item.expr, a, b)
        # at least one source relation differs on its primary key
        options = []
        for alias, occ in sorted(self.occ_of_alias.items()):
            if getattr(occ, "per_group", 1) < 2 or not occ.rel.primary_key:
                continue
            sa = occ.slots[a.position.get(occ.occ_id, 0)]
            sb = occ.slots[min(b.position.get(occ.occ_id, 0), len(occ.slots) - 1)]
            if sa == sb:
                continue
            diff = disj([neg(("=", v(builder._var_name(occ.relation, sa, k)),
                              v(builder._var_name(occ.relation, sb, k))))
                         for k in occ.rel.primary_key])
            options.append(diff)
        if not options:
            raise EquivalentMutation(
                "projected attributes cover every key; duplicates impossible")
        self.builder.script.add(disj(options))

    def _assert_item_equal(self, expr, ctx_a, ctx_b) -> None:
        builder = self.builder
        if isinstance(expr, Attr) and expr.attribute is not None \
                and expr.attribute.is_text:
            ta = v(builder._var_name(*builder.slot_of(expr, ctx_a)[:2], expr.name))
            tb = v(builder._var_name(*builder.slot_of(expr, ctx_b)[:2], expr.name))
            builder.script.add(("=", ta, tb))
        else:
            ta = builder.numeric_expr(expr, ctx_a)
            tb = builder.numeric_expr(expr, ctx_b)
            builder.script.add(("=", ta, tb))

    # -- subqueries

    def gen_exists(self, link, outer_ctx: BlockCtx) -> "BlockGen":
        sub = plan_block(self.builder, link.subtree, outer_ctx)
        sub.prepare()
        sub.emit()
        return sub

    def gen_not_exists(self, link, outer_ctx: BlockCtx) -> None:
        emit_not_exists(self.builder, link.subtree, outer_ctx)

    # -- no-extra-tuples guard

    def _assert_no_extra_tuples(self) -> None:
        emit_no_extra_tuples(self.builder, self)


# --------------------------------------------------------------------------
# helpers

def _ctx_with_slot(ctx: BlockCtx, occ: Occurrence, slot_idx: int) -> BlockCtx:
    offset = occ.slots.index(slot_idx) if slot_idx in occ.slots else None
    if offset is None:
        # slot outside the occurrence (an FK-closure tuple): temporary view
        occ2 = Occurrence(occ.occ_id, occ.relation, occ.rel, occ.alias,
                          [slot_idx])
        clone = BlockCtx(dict(ctx.occurrences), ctx.views, ctx.parent,
                         dict(ctx.position))
        clone.occurrences[occ.alias] = occ2
        clone.position[occ.occ_id] = 0
        return clone
    return ctx.at(occ.occ_id, offset)


def _is_subquery_atom(atom: Pred) -> bool:
    if isinstance(atom, Exists):
        return True
    return _scalar_side(atom) is not None


def _scalar_side(atom: Pred):
    if not isinstance(atom, Comparison):
        return None
    for side in (atom.left, atom.right):
        if isinstance(side, ScalarSub):
            return side
    return None


def _scalar_parts(atom: Comparison):
    from .tree import SWAPPED_RELOP
    if isinstance(atom.left, ScalarSub):
        return atom.left, atom.right, SWAPPED_RELOP.get(atom.op, atom.op)
    return atom.right, atom.left, atom.op


def _first_agg(expr) -> AggExpr:
    for sub in iter_exprs(expr):
        if isinstance(sub, AggExpr):
            return sub
    raise UnsupportedFeature("no aggregate in scalar target")


def _wrap_target(target, agg_term, builder, sub):
    if isinstance(target, AggExpr):
        return agg_term
    raise UnsupportedFeature("scalar subquery projecting an aggregate expression")


def _dedup_terms(terms: list[tuple]) -> list[tuple]:
    seen = []
    for t in terms:
        if t not in seen:
            seen.append(t)
    return seen


# --------------------------------------------------------------------------
# NOT EXISTS (no tuple reaches the subquery root)

def emit_not_exists(builder: GoalBuilder, subtree: Node,
                    outer_ctx: BlockCtx) -> None:
    term = not_exists_term(builder, subtree, outer_ctx)
    builder.script.add(term)


def not_exists_term(builder: GoalBuilder, subtree: Node,
                    outer_ctx: BlockCtx) -> tuple:
    parts = find_block_parts(subtree)
    select = parts.get("select")
    atoms: list[Pred] = []
    if select is not None:
        atoms = _conjuncts(select.predicate)
        if any(isinstance(a, Contradiction) for a in atoms):
            return TRUE   # contradictory subquery is vacuously empty
    # selections per alias; join conditions handled structurally
    per_alias: dict[str, list[Pred]] = {}
    cross_atoms: list[Pred] = []
    alias_of: dict[str, RelationLeaf] = {
        leaf.alias: leaf for leaf in iter_nodes_of(parts["from"])}
    for atom in atoms:
        aliases = _local_aliases(atom, alias_of)
        if any(_is_subquery_atom(a) for a in _tree_atoms(atom)):
            raise UnsupportedFeature("subquery nested inside NOT EXISTS")
        if len(aliases) <= 1:
            target = next(iter(aliases), None)
            if target is None:
                cross_atoms.append(atom)
            else:
                per_alias.setdefault(target, []).append(atom)
        else:
            cross_atoms.append(atom)
    return _ne_walk(builder, parts["from"], per_alias, cross_atoms, outer_ctx)


def _conjuncts(pred: Pred) -> list[Pred]:
    """Top-level conjuncts; disjunctive subtrees stay composite items."""
    from .tree import And
    if isinstance(pred, And):
        out = []
        for p in pred.items:
            out.extend(_conjuncts(p))
        return out
    if isinstance(pred, TruePred):
        return []
    return [pred]


def _tree_atoms(pred: Pred):
    return list(iter_atoms(pred))


def iter_nodes_of(node: Node):
    from .tree import iter_nodes as _it
    return [x for x in _it(node) if isinstance(x, RelationLeaf)]


def _local_aliases(atom: Pred, alias_of) -> set[str]:
    out = set()
    for piece in _tree_atoms(atom):
        for expr in pred_exprs(piece):
            for sub in iter_exprs(expr):
                if isinstance(sub, Attr) and not sub.outer and \
                        sub.alias in alias_of:
                    out.add(sub.alias)
    return out


def _ne_walk(builder: GoalBuilder, node: Node, per_alias, cross_atoms,
             outer_ctx: BlockCtx) -> tuple:
    if isinstance(node, (GroupAgg, Having, Select, Project)):
        return _ne_walk(builder, node.children()[0], per_alias, cross_atoms,
                        outer_ctx)
    if isinstance(node, RelationLeaf):
        occ_proxy = Occurrence(f"ne_{node.alias}", node.relation, node.rel,
                               node.alias, [1])
        count = builder.script.slot_count.get(node.relation, 0)
        if count == 0:
            return TRUE
        atoms = per_alias.get(node.alias, [])
        terms = []
        for idx in range(1, count + 1):
            ctx = BlockCtx({node.alias: _occ_at(occ_proxy, idx)}, {}, outer_ctx)
            fails = [neg(builder.encode_pred(a, ctx, True)) for a in atoms]
            terms.append(disj(fails) if fails else FALSE)
        return conj(terms)
    if isinstance(node, Join):
        if node.kind == "left":
            return _ne_walk(builder, node.left, per_alias, cross_atoms, outer_ctx)
        if node.kind == "right":
            return _ne_walk(builder, node.right, per_alias, cross_atoms, outer_ctx)
        options = []
        conds = list(node.conditions) + list(node.filters) + [
            a for a in cross_atoms
            if _within(a, node)]
        left_leaves = {l.alias: l for l in iter_nodes_of(node.left)}
        right_leaves = {l.alias: l for l in iter_nodes_of(node.right)}
        for cond in conds:
            pair_terms = []
            la = _local_aliases(cond, {**left_leaves, **right_leaves})
            combos = _leaf_combos(builder, la, {**left_leaves, **right_leaves},
                                  outer_ctx)
            for ctx in combos:
                pair_terms.append(neg(builder.encode_pred(cond, ctx, True)))
            if pair_terms:
                options.append(conj(pair_terms))
        options.append(_ne_walk(builder, node.left, per_alias, cross_atoms,
                                outer_ctx))
        options.append(_ne_walk(builder, node.right, per_alias, cross_atoms,
                                outer_ctx))
        return disj(options)
    if isinstance(node, FromSubquery):
        return _ne_walk(builder, node.child, per_alias, cross_atoms, outer_ctx)
    raise UnsupportedFeature(f"NOT EXISTS over {type(node).__name__}")


def _within(atom: Pred, node: Node) -> bool:
    aliases = {l.alias for l in iter_nodes_of(node)}
    refs = _local_aliases(atom, {a: True for a in aliases})
    return len(refs) >= 2 and refs <= aliases


def _occ_at(occ: Occurrence, slot: int) -> Occurrence:
    return Occurrence(occ.occ_id, occ.relation, occ.rel, occ.alias, [slot])


def _leaf_combos(builder: GoalBuilder, aliases: set[str], leaves, outer_ctx):
    """All slot combinations for the aliases an atom touches."""
    ordered = sorted(aliases)
    combos: list[BlockCtx] = []

    def rec(i: int, ctx_occ: dict):
        if i == len(ordered):
            combos.append(BlockCtx(dict(ctx_occ), {}, outer_ctx))
            return
        alias = ordered[i]
        leaf = leaves[alias]
        count = builder.script.slot_count.get(leaf.relation, 0)
        base = Occurrence(f"ne_{alias}", leaf.relation, leaf.rel, leaf.alias, [1])
        for idx in range(1, count + 1):
            ctx_occ[alias] = _occ_at(base, idx)
            rec(i + 1, ctx_occ)
        ctx_occ.pop(alias, None)

    rec(0, {})
    return combos


# --------------------------------------------------------------------------
# no-extra-tuples over a prepared block

def emit_no_extra_tuples(builder: GoalBuilder, block: BlockGen) -> None:
    """Any slot combination with a tuple outside the block's designated
    slots must fail a selection or join condition (flattened tree).

    Encodes with the original atoms (mode substitutions express what the
    designated tuples satisfy, not what extras must avoid)."""
    builder._suppress_modes += 1
    try:
        _emit_no_extra_tuples(builder, block)
    finally:
        builder._suppress_modes -= 1


def _emit_no_extra_tuples(builder: GoalBuilder, block: BlockGen) -> None:
    flat = _flatten(block.parts["from"])
    occs = [block.occ_of_alias[a] for a in flat if a in block.occ_of_alias]
    if not occs:
        return
    allowed = {occ.alias: set(occ.slots) for occ in occs}
    clause = block.chosen_clause()
    select_atoms: dict[str, list[Pred]] = {}
    join_conds: list[Pred] = []
    alias_map = {occ.alias: occ for occ in occs}
    for atom in clause:
        if _is_subquery_atom(atom):
            continue
        refs = {a for a in _atom_aliases(atom) if a in alias_map}
        if len(refs) == 1:
            select_atoms.setdefault(next(iter(refs)), []).append(atom)
        elif len(refs) >= 2:
            join_conds.append(atom)
    for node in _join_nodes(block.parts["from"]):
        for cond in node.conditions:
            join_conds.append(cond)
        join_conds.extend(node.filters)

    counts = {occ.alias: builder.script.slot_count.get(occ.relation, 0)
              for occ in occs}
    aliases = sorted(counts)
    if not aliases:
        return

    def outside_term(alias: str, slot: int) -> tuple:
        """Tuple lies outside the allowed set: its primary key differs from
        every allowed tuple's (identical keys mean the same tuple)."""
        if slot in allowed[alias]:
            return FALSE
        occ = alias_map[alias]
        pk = occ.rel.primary_key
        if not pk:
            return TRUE   # bag relation: extra slots are genuine extras
        parts = []
        for a_slot in sorted(allowed[alias]):
            diffs = [neg(("=",
                          v(builder._var_name(occ.relation, slot, k)),
                          v(builder._var_name(occ.relation, a_slot, k))))
                     for k in pk]
            parts.append(disj(diffs))
        return conj(parts)

    def rec(i: int, chosen: dict[str, int], any_extra_slot: bool):
        if i == len(aliases):
            if not any_extra_slot:
                return
            ctx = block.ctx
            for alias, slot in chosen.items():
                ctx = _ctx_with_slot(ctx, alias_map[alias], slot)
            outs = [outside_term(alias, slot) for alias, slot in chosen.items()]
            terms = [disj(outs)]
            for alias, slot in chosen.items():
                for atom in select_atoms.get(alias, []):
                    terms.append(builder.encode_atom(atom, ctx, True))
            for cond in join_conds:
                refs = {a for a in _atom_aliases(cond) if a in alias_map}
                if refs <= set(chosen):
                    terms.append(builder.encode_atom(cond, ctx, True))
            extra = getattr(block, "guard_extra_selections", None) or []
            for fn in extra:
                terms.append(fn(ctx))
            builder.script.add(neg(conj(terms)))
            return
        alias = aliases[i]
        for slot in range(1, counts[alias] + 1):
            chosen[alias] = slot
            rec(i + 1, chosen, any_extra_slot or slot not in allowed[alias])
        chosen.pop(alias, None)

    # guard only kicks in when some relation has extra tuples
    if any(counts[a] > len(allowed[a]) for a in aliases):
        rec(0, {}, False)


def _flatten(node: Node) -> list[str]:
    if isinstance(node, RelationLeaf):
        return [node.alias]
    if isinstance(node, Join):
        if node.kind == "left":
            return _flatten(node.left)
        if node.kind == "right":
            return _flatten(node.right)
        return _flatten(node.left) + _flatten(node.right)
    if isinstance(node, FromSubquery):
        return []
    return []


def _all_join_nodes(node: Node):
    return [x for x in iter_nodes(node) if isinstance(x, Join)]


def _join_nodes(node: Node):
    out = []

    def walk(x: Node):
        if isinstance(x, Join):
            out.append(x)
            if x.kind in {"inner"}:
                walk(x.left)
                walk(x.right)
            elif x.kind == "left":
                walk(x.left)
            else:
                walk(x.right)

    walk(node)
    return out


def _atom_aliases(atom: Pred) -> set[str]:
    out = set()
    for expr in pred_exprs(atom):
        for sub in iter_exprs(expr):
            if isinstance(sub, Attr) and not sub.outer:
                out.add(sub.alias)
    return out


def all_two_assignment(root: Node):
    from .agg import pseudo_occurrences
    from .analysis import CardinalityAssignment
    occs = pseudo_occurrences(root)
    counts = {alias: 2 for alias in occs}
    unique = {alias: [frozenset(ks) for ks in occ.rel.key_sets]
              for alias, occ in occs.items()}
    return CardinalityAssignment(counts, 2, unique)


# --------------------------------------------------------------------------
# entry point used by the planner

def plan_block(builder: GoalBuilder, root: Node, outer_ctx: BlockCtx | None,
               options: BlockOptions | None = None,
               scalar_constraint=None) -> BlockGen:
    """Create a BlockGen with a group spec derived from the block's own
    constrained aggregation (HAVING or an enclosing scalar comparison)."""
    from .agg import derive_group_spec
    options = options or BlockOptions()
    overrides = builder.block_overrides.get(id(root))
    if overrides:
        for attr_name, value in overrides.items():
            setattr(options, attr_name, value)
    if builder.guard_subqueries and outer_ctx is not None:
        options.guard = True
    if options.group is None:
        options.group = derive_group_spec(builder, root, scalar_constraint,
                                          options.clause_index)
    return BlockGen(builder, root, outer_ctx, options)


def build_goal_script(schema, config, root: Node,
                      options: BlockOptions | None = None, tag: str = "",
                      goal_id: str = "", outer_ctx: BlockCtx | None = None):
    """Full single-tree pipeline: instantiate, freeze, assert, solve strings."""
    builder = GoalBuilder(schema, config, tag, goal_id)
    gen = plan_block(builder, root, outer_ctx, options)
    gen.prepare()
    builder.fk_closure()
    builder.freeze()
    gen.emit()
    builder.solve_strings()
    builder._finish_null_exclusions()
    return builder, gen
