"""Dataset planning: one goal per targeted mutation class.

plan() walks the normalized tree and emits the deduplicated, deterministic
goal list; each goal carries one or more candidate script builders (DNF
clause retries, sentinel-vs-outer-join NULL routes, set-operator
fallbacks). Solving happens in generate.py.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .agg import pseudo_occurrences
from .analysis import (add_inferred_edges, build_equivalence_classes,
                       collect_block_info, infer_attribute_properties)
from .blockgen import (BlockCtx, BlockOptions, GroupSpec, build_goal_script,
                       emit_no_extra_tuples, not_exists_term, plan_block)
from .build import GoalBuilder
from .catalog import Schema
from .config import Config, DEFAULT
from .errors import EquivalentMutation, UnsupportedFeature
from .normalize import to_dnf
from .script import TRUE as TRUE_TERM
from .script import ConstraintScript, conj, disj, neg, v
from .tree import (AggExpr, Attr, Comparison, Const, Exists, FromSubquery, Func,
                   GroupAgg, Having, InList, IsNull, Join, LikePred, Node, Not,
                   OrderBy, Param, Pred, Project, QueryTree, RelationLeaf,
                   ScalarSub, Select, SetOp, TruePred, find_block_parts,
                   iter_atoms, iter_exprs, iter_links, iter_nodes, pred_exprs,
                   render_expr, render_pred)


@dataclass
class DatasetGoal:
    goal_id: str
    klass: str
    tag: str
    candidates: list[Callable[[], ConstraintScript]]
    only_if_failed: list[str] = field(default_factory=list)
    status: str = "pending"          # pending | solved | unsat | error | skipped
    note: str = ""


def _first_clause_with(clauses: list[list[Pred]], atom: Pred) -> int:
    for i, clause in enumerate(clauses):
        if any(a is atom for a in clause):
            return i
    return 0


class Planner:
    def __init__(self, schema: Schema, tree: QueryTree, config: Config = DEFAULT):
        self.schema = schema
        self.tree = tree
        self.config = config
        self.goals: list[DatasetGoal] = []
        self._counter = 0

    # ------------------------------------------------------------ helpers

    def _goal(self, klass: str, tag: str, candidates, only_if_failed=()) -> DatasetGoal:
        self._counter += 1
        goal = DatasetGoal(f"g{self._counter:03d}", klass, tag, list(candidates),
                           only_if_failed=list(only_if_failed))
        self.goals.append(goal)
        return goal

    def _candidate(self, root: Node, *, atom_modes=None, having_modes=None,
                   clause_index=0, options: BlockOptions | None = None,
                   guard_subqueries=False, post=None, tag="", goal_id="",
                   straddle_link=None, block_overrides=None):
        schema, config = self.schema, self.config

        def build() -> ConstraintScript:
            builder = GoalBuilder(schema, config, tag, goal_id)
            builder.atom_modes = dict(atom_modes or {})
            builder.having_modes = dict(having_modes or {})
            builder.guard_subqueries = guard_subqueries
            if straddle_link is not None:
                builder.straddle_links.add(id(straddle_link))
            if options is not None and options.nullify is not None:
                builder.nullify = options.nullify
            if block_overrides:
                builder.block_overrides = {k: dict(vv)
                                           for k, vv in block_overrides.items()}
            opts = options if options is not None else BlockOptions()
            opts = BlockOptions(**{**opts.__dict__})
            opts.clause_index = clause_index
            gen = plan_block(builder, root, None, opts)
            gen.prepare()
            builder.fk_closure()
            builder.freeze()
            gen.emit()
            if post is not None:
                post(builder, gen)
            builder.solve_strings()
            builder._finish_null_exclusions()
            return builder.script

        return build

    def _clause_candidates(self, root: Node, **kw):
        """One candidate per DNF clause (clause-at-a-time retry)."""
        parts = find_block_parts(root)
        select = parts.get("select")
        count = 1
        if select is not None:
            clauses = to_dnf(select.predicate, self.config.dnf_clause_cap)
            count = max(len(clauses), 1)
        return [self._candidate(root, clause_index=i, **kw) for i in range(count)]

    # ------------------------------------------------------------ planning

    def plan(self) -> list[DatasetGoal]:
        root = self.tree.root
        if isinstance(root, OrderBy):
            self.plan_orderby(root)
            root = root.child
        if isinstance(root, SetOp):
            self.plan_setop(root)
            return self.dedupe()
        self._goal("NonEmptyBase", "base", self._clause_candidates(root))
        self._goal("IsNull", "null-fill",
                   [self._candidate(root, post=_null_fill_post)])
        self.plan_block_goals(root, prefix="", build_root=root)
        for link in iter_links(root):
            self.plan_connective_kills(root, link)
            self.plan_inner_mutation_kills(root, link)
        self.plan_distinct(root)
        return self.dedupe()

    # -- per-block goals (joins, relops, strings, nulls, aggregates, group by)

    def plan_block_goals(self, root: Node, prefix: str, build_root: Node) -> None:
        parts = find_block_parts(root)
        top = root is build_root
        select = parts.get("select")
        clauses = to_dnf(select.predicate, self.config.dnf_clause_cap) \
            if select is not None else [[]]
        self.plan_jointype(root, parts, prefix, build_root)
        self.plan_extra_join_conditions(root, parts, prefix, build_root)
        seen_atoms: set[int] = set()
        for clause in clauses:
            for atom in clause:
                if id(atom) in seen_atoms:
                    continue
                seen_atoms.add(id(atom))
                ci = _first_clause_with(clauses, atom) if top else 0
                self.plan_atom_kills(build_root, atom, ci, prefix)
        self.plan_having_kills(build_root, parts, prefix)
        self.plan_groupby_kills(root, parts, prefix, build_root)
        self.plan_agg_kills(root, parts, prefix, build_root)
        if not top:
            self.plan_agg_kills_nested(root, parts, prefix, build_root)
        for node in iter_nodes(parts["from"]):
            if isinstance(node, FromSubquery):
                self.plan_block_goals(node.child, prefix + f"{node.alias}.",
                                      build_root)

    def plan_agg_kills_nested(self, root: Node, parts, prefix: str,
                              build_root: Node) -> None:
        """Aggregate and count-NULL kills for a nested block, built on the
        full tree so outer conditions hold."""
        group = parts.get("group")
        if group is None or not group.aggs:
            return
        constrained = parts.get("having") is not None
        for agg in group.aggs:
            if agg.func == "count" and agg.arg is not None and constrained:
                attr = _plain_attr(agg.arg)
                if attr is not None and attr.attribute is not None and \
                        attr.attribute.nullable:
                    opts = BlockOptions(
                        count_null_aggs=frozenset({render_expr(agg)}))
                    self._goal("CountStar",
                               f"{prefix}count-null[{render_expr(agg)}]",
                               [self._candidate(build_root,
                                                post=_count_null_nested_post(agg),
                                                options=opts)])

    def plan_jointype(self, root: Node, parts, prefix: str,
                      build_root: Node) -> None:
        for node in _block_joins(parts["from"]):
            for cond in node.conditions:
                aliases = sorted({a.alias for e in (cond.left, cond.right)
                                  for a in iter_exprs(e)
                                  if isinstance(a, Attr) and not a.outer})
                if len(aliases) != 2:
                    continue
                for preserve, other in ((aliases[0], aliases[1]),
                                        (aliases[1], aliases[0])):
                    opts = BlockOptions(nullify=(preserve, other, id(cond)))
                    tag = (f"{prefix}join-type[{render_pred(cond)}]"
                           f" preserve={preserve}")
                    self._goal("JoinType", tag,
                               [self._candidate(build_root, options=opts,
                                                tag=tag)])

    def plan_extra_join_conditions(self, root: Node, parts, prefix: str,
                                   build_root: Node | None = None) -> None:
        build_root = build_root if build_root is not None else root
        from .tree import output_columns
        seen_pairs: set[tuple] = set()
        # equivalence classes: names already equated are not candidates
        occs = pseudo_occurrences(root)
        info = collect_block_info(parts["from"], {o.alias: o for o in occs.values()},
                                  [], [])
        classes = build_equivalence_classes(info)
        equated = {frozenset({a, b}) for cls in classes
                   for a in cls for b in cls if a != b}
        for node in _block_joins(parts["from"]):
            left_cols = [(al, nm) for al, nm, _ in output_columns(node.left) if al]
            right_cols = [(al, nm) for al, nm, _ in output_columns(node.right) if al]
            for la, lname in left_cols:
                for ra, rname in right_cols:
                    if lname != rname or la == ra:
                        continue
                    pair = frozenset({(la, lname), (ra, rname)})
                    if pair in seen_pairs or \
                            frozenset({(la, lname), (ra, rname)}) in equated:
                        continue
                    if any(frozenset({x, y}) in equated
                           for x in [(la, lname)] for y in [(ra, rname)]):
                        continue
                    seen_pairs.add(pair)
                    tag = f"{prefix}extra-join-cond[{la}.{lname}<>{ra}.{rname}]"
                    post = _inequality_post(la, lname, ra, rname)
                    self._goal("JoinCondExtra", tag,
                               [self._candidate(build_root, post=post, tag=tag)])

    def plan_atom_kills(self, root: Node, atom: Pred, ci: int, prefix: str) -> None:
        if isinstance(atom, Exists):
            return   # planned via connective kills
        if isinstance(atom, Comparison) and _has_scalar(atom):
            return   # planned via connective kills
        if isinstance(atom, LikePred):
            tag0 = f"{prefix}like[{render_pred(atom)}]"
            for variant in ("like_d1", "like_d2", "like_d3"):
                self._goal("LikeOp", f"{tag0} {variant[-2:]}",
                           [self._candidate(root, clause_index=ci,
                                            atom_modes={id(atom): (variant,)})])
            self.plan_pattern_kills(root, atom, ci, prefix)
            return
        if isinstance(atom, IsNull):
            tag = f"{prefix}isnull[{render_pred(atom)}]"
            sat_goal = self._goal(
                "IsNull", f"{tag} satisfied",
                [self._candidate(root, clause_index=ci,
                                 atom_modes={id(atom): "true"})])
            self._null_route_fallback(root, atom, ci, sat_goal,
                                      want_null=not atom.negated)
            neg_goal = self._goal(
                "IsNull", f"{tag} negated",
                [self._candidate(root, clause_index=ci,
                                 atom_modes={id(atom): "false"})])
            self._null_route_fallback(root, atom, ci, neg_goal,
                                      want_null=atom.negated)
            return
        if isinstance(atom, Comparison):
            text = _is_text_comparison(atom)
            klass = "StringRelop" if text else "Relop"
            tag0 = f"{prefix}relop[{render_pred(atom)}]"
            for variant in ("gt", "eq", "lt"):
                self._goal(klass, f"{tag0} {variant}",
                           [self._candidate(root, clause_index=ci,
                                            atom_modes={id(atom): variant})])
            if text and atom.op in {"=", "~="}:
                self._goal("CaseInsensitiveEq", f"{tag0} ci",
                           [self._candidate(root, clause_index=ci,
                                            atom_modes={id(atom): ("str_ci",)})])

    def _null_route_fallback(self, root, atom, ci, goal, want_null: bool) -> None:
        """Second candidate: NULL via outer-join non-match (§5.2 option b)."""
        if not want_null or not isinstance(atom.expr, Attr):
            return
        target_alias = atom.expr.alias
        parts = find_block_parts(root)
        for node in iter_nodes(parts["from"]):
            if not isinstance(node, Join) or node.kind == "inner":
                continue
            inner_side = node.right if node.kind == "left" else node.left
            aliases = {leaf.alias for leaf in iter_nodes(inner_side)
                       if isinstance(leaf, RelationLeaf)}
            if target_alias not in aliases or not node.conditions:
                continue
            cond = node.conditions[0]
            preserve_side = node.left if node.kind == "left" else node.right
            preserve = next(leaf.alias for leaf in iter_nodes(preserve_side)
                            if isinstance(leaf, RelationLeaf))
            opts = BlockOptions(nullify=(preserve, target_alias, id(cond)))
            goal.candidates.append(self._candidate(
                root, clause_index=ci, options=opts,
                atom_modes={id(atom): "skip"}))
            goal.note = "outer-join no-match route available"
            return

    def plan_pattern_kills(self, root: Node, atom: LikePred, ci: int,
                           prefix: str) -> None:
        from .strings_like import parse_pattern
        items = parse_pattern(atom.pattern)
        percent_positions = [i for i, (k, _) in enumerate(items) if k == "many"]
        underscore_positions = [i for i, (k, _) in enumerate(items) if k == "any"]

        def rebuild(skip_idx=None, replace_idx=None, replacement="") -> str:
            out = []
            for i, (kind, c) in enumerate(items):
                if i == skip_idx:
                    continue
                if i == replace_idx:
                    out.append(replacement)
                    continue
                if kind == "lit" and c in "%_\\":
                    out.append("\\" + c)
                elif kind == "lit":
                    out.append(c)
                elif kind == "many":
                    out.append("%")
                else:
                    out.append("_")
            return "".join(out)

        for k, pos in enumerate(percent_positions):
            pattern = rebuild(replace_idx=pos, replacement="__")
            tag = f"{prefix}like-pattern[%#{k + 1} of {atom.pattern!r}]"
            self._goal("LikePattern", tag,
                       [self._candidate(root, clause_index=ci,
                                        atom_modes={id(atom): ("like_pattern",
                                                               pattern)})])
        for k, pos in enumerate(underscore_positions):
            pattern = rebuild(skip_idx=pos)
            tag = f"{prefix}like-pattern[_#{k + 1} of {atom.pattern!r}]"
            self._goal("LikePattern", tag,
                       [self._candidate(root, clause_index=ci,
                                        atom_modes={id(atom): ("like_pattern",
                                                               pattern)})])

    def plan_having_kills(self, root: Node, parts, prefix: str) -> None:
        having = parts.get("having")
        if having is None:
            return
        for atom in iter_atoms(having.predicate):
            if not isinstance(atom, Comparison) or _has_scalar(atom):
                continue
            tag0 = f"{prefix}having[{render_pred(atom)}]"
            for variant in ("gt", "eq", "lt"):
                self._goal("HavingRelop", f"{tag0} {variant}",
                           [self._candidate(root,
                                            having_modes={id(atom): variant})])

    def plan_groupby_kills(self, root: Node, parts, prefix: str,
                           build_root: Node | None = None) -> None:
        build_root = build_root if build_root is not None else root
        group = parts.get("group")
        if group is None:
            return
        constrained = parts.get("having") is not None
        occs = pseudo_occurrences(root)
        select = parts.get("select")
        clause = []
        if select is not None:
            clauses = to_dnf(select.predicate, self.config.dnf_clause_cap)
            clause = clauses[0] if clauses else []
        info = collect_block_info(parts["from"], {o.alias: o for o in occs.values()},
                                  list(clause), group.keys)
        classes = build_equivalence_classes(info)
        add_inferred_edges(info, classes)
        inference = infer_attribute_properties(info, classes)
        key_refs = {(k.alias, k.name) for k in group.keys if isinstance(k, Attr)}
        candidates = []
        for alias, occ in sorted(occs.items()):
            if occ.rel is None:
                continue
            for a in occ.rel.attributes:
                ref = (alias, a.name)
                if ref in key_refs or ref in inference.single_valued:
                    continue
                candidates.append(ref)
        for alias, attr_name in candidates:
            target = Attr(alias, attr_name)
            target.alias = alias
            occ = occs[alias]
            try:
                target.attribute = occ.rel.attribute(attr_name)
            except Exception:
                continue
            tag = f"{prefix}group-by-extra[{alias}.{attr_name}]"
            self._emit_groupby_goal(root, target, tag, constrained,
                                    klass="GroupByExtra", build_root=build_root)
        # missing attribute: role swap per group key
        for key in group.keys:
            if not isinstance(key, Attr) or len(group.keys) < 2:
                continue
            variant = root.clone()
            vparts = find_block_parts(variant)
            vgroup = vparts.get("group")
            kept = [k for k in vgroup.keys
                    if not (isinstance(k, Attr) and k.alias == key.alias
                            and k.name == key.name)]
            if len(kept) == len(vgroup.keys):
                continue
            vgroup.keys = kept
            vproject = vparts.get("project")
            if vproject is not None:
                vproject.items = [item for item in vproject.items
                                  if not (isinstance(item.expr, Attr)
                                          and item.expr.alias == key.alias
                                          and item.expr.name == key.name)]
            vkey = key.clone()
            vkey.alias = key.alias
            tag = f"{prefix}group-by-missing[{key.alias}.{key.name}]"
            build_variant = build_root if root is build_root else None
            if build_variant is None:
                continue   # nested missing-key handled via whole-tree variants
            self._emit_groupby_goal(variant, vkey, tag, constrained,
                                    klass="GroupByMissing", build_root=variant)

    def _emit_groupby_goal(self, root: Node, target: Attr, tag: str,
                           constrained: bool, klass: str,
                           build_root: Node | None = None) -> None:
        build_root = build_root if build_root is not None else root
        nested = root is not build_root
        overrides = None
        if not constrained:
            spec = group_override(root, 2, target)
            if spec is None:
                return
            if nested:
                overrides = {id(root): {"extra_group_distinct": target,
                                        "group": spec}}
                opts = None
            else:
                opts = BlockOptions(extra_group_distinct=target, group=spec)
            self._goal(klass, tag,
                       [self._candidate(build_root, options=opts,
                                        post=_two_groups_nested_post(target),
                                        block_overrides=overrides)])
            return
        if nested:
            combined = self._candidate(
                build_root, post=_combined_split_post(target),
                block_overrides={id(root): {"guard": True}}, tag=tag)
            split = self._candidate(
                build_root, post=_split_groups_post(target),
                block_overrides={id(root): {"extra_group_distinct": target,
                                            "guard": True}}, tag=tag)
        else:
            combined = self._candidate(build_root,
                                       post=_combined_split_post(target),
                                       options=BlockOptions(guard=True), tag=tag)
            split = self._candidate(
                build_root,
                options=BlockOptions(extra_group_distinct=target, guard=True),
                post=_split_groups_post(target), tag=tag)
        self._goal(klass, tag, [combined, split])

    def plan_agg_kills(self, root: Node, parts, prefix: str,
                       build_root: Node | None = None) -> None:
        build_root = build_root if build_root is not None else root
        nested = root is not build_root
        group = parts.get("group")
        if group is None or not group.aggs:
            return
        constrained = parts.get("having") is not None
        for agg in group.aggs:
            tag = f"{prefix}agg[{render_expr(agg)}]"
            candidates = []
            if not constrained:
                spec = group_override(root, 3, _plain_attr(agg.arg)
                                      if agg.arg is not None else None)
                if spec is not None:
                    overrides = {id(root): {"group": spec}} if nested else None
                    candidates.append(self._candidate(
                        build_root, post=_agg_pattern_post(agg),
                        options=None if nested else BlockOptions(group=spec),
                        block_overrides=overrides))
            else:
                overrides = {id(root): {"guard": True}} if nested else None
                candidates.append(self._candidate(
                    build_root, post=_agg_pattern_post(agg),
                    options=None if nested else BlockOptions(guard=True),
                    block_overrides=overrides))
            if candidates:
                self._goal("AggFunc", f"{tag} 2+1", candidates)
            if agg.func == "count" and agg.arg is not None:
                attr = _plain_attr(agg.arg)
                if attr is not None and attr.attribute is not None:
                    if attr.attribute.nullable:
                        cn = frozenset({render_expr(agg)})
                        overrides = {id(root): {"count_null_aggs": cn,
                                                "guard": constrained}} \
                            if nested else None
                        opts = None if nested else BlockOptions(
                            guard=constrained, count_null_aggs=cn)
                        self._goal("CountStar",
                                   f"{prefix}count-null[{render_expr(agg)}]",
                                   [self._candidate(
                                       build_root,
                                       post=_count_null_nested_post(agg),
                                       options=opts,
                                       block_overrides=overrides)])
                    else:
                        goal = self._goal("CountStar",
                                          f"{prefix}count-null[{render_expr(agg)}]",
                                          [])
                        goal.status = "unsat"
                        goal.note = "COUNT(attr) on non-nullable attribute is " \
                                    "equivalent to COUNT(*)"
            if constrained:
                for alt in _alternative_funcs(agg):
                    overrides = {id(root): {"guard": True}} if nested else None
                    self._goal("AggFunc", f"{tag} straddle->{alt}",
                               [self._candidate(
                                   build_root, post=_straddle_post(agg, alt),
                                   options=None if nested else
                                   BlockOptions(guard=True),
                                   block_overrides=overrides)])

    # -- subquery connective kills

    def plan_connective_kills(self, root: Node, link) -> None:
        atom = _find_link_atom(root, link)
        if atom is None:
            return
        if isinstance(atom, Exists):
            kind = link.origin
            base_tag = f"connective[{kind}]"
            # the base dataset kills EXISTS<->NOT EXISTS; add the flipped one
            self._goal("SubqueryConnective", f"{base_tag} flipped",
                       [self._candidate(root, atom_modes={id(atom): "false"})])
            if kind in {"rewritten-any", "rewritten-all"} and link.correlations:
                corr = link.correlations[-1]
                tag = f"connective[{kind}] any-all straddle"
                modes = {id(atom): "true" if not atom.negated else "false",
                         id(corr): ("per_row", ["true", "false"])}
                self._goal("SubqueryConnective", tag,
                           [self._candidate(root, atom_modes=modes,
                                            straddle_link=link)])
                for variant in ("gt", "eq", "lt"):
                    surface = {"gt": ">", "eq": "=", "lt": "<"}[variant]
                    # realize the variant on a designated nonempty subquery
                    # tuple; the guard keeps other tuples out of the subquery
                    modes = {id(corr): ("op", surface)}
                    if atom.negated:
                        modes[id(atom)] = "false"   # generate as EXISTS
                    self._goal("SubqueryConnective",
                               f"connective[{kind}] relop {variant}",
                               [self._candidate(
                                   root, atom_modes=modes,
                                   having_modes={id(corr): ("op", surface)},
                                   guard_subqueries=True)])
            return
        if isinstance(atom, Comparison):
            tag0 = f"connective[scalar {render_pred(atom)}]"
            for variant in ("gt", "eq", "lt"):
                self._goal("SubqueryConnective", f"{tag0} {variant}",
                           [self._candidate(root,
                                            atom_modes={id(atom): variant},
                                            having_modes={id(atom): variant})])

    def plan_inner_mutation_kills(self, root: Node, link) -> None:
        atom = _find_link_atom(root, link)
        if atom is None:
            return
        flip = {}
        if isinstance(atom, Exists) and atom.negated:
            # generate as if EXISTS; flipped emptiness kills the inner mutation
            flip = {id(atom): "false"}
        sub_parts = find_block_parts(link.subtree)
        select = sub_parts.get("select")
        if select is None:
            return
        clauses = to_dnf(select.predicate, self.config.dnf_clause_cap)
        seen: set[int] = set()
        for clause in clauses:
            for inner_atom in clause:
                if id(inner_atom) in seen or _is_correlation(inner_atom, link):
                    continue
                seen.add(id(inner_atom))
                if isinstance(inner_atom, (Exists,)) or _has_scalar(inner_atom) \
                        or isinstance(inner_atom, IsNull):
                    continue
                if isinstance(inner_atom, LikePred):
                    for variant in ("like_d1", "like_d2", "like_d3"):
                        tag = f"sub-inner[{render_pred(inner_atom)}] {variant[-2:]}"
                        self._goal("SubqueryInner", tag,
                                   [self._candidate(
                                       root, guard_subqueries=True,
                                       atom_modes={**flip,
                                                   id(inner_atom): (variant,)})])
                    continue
                if not isinstance(inner_atom, Comparison):
                    continue
                for variant in ("gt", "eq", "lt"):
                    tag = f"sub-inner[{render_pred(inner_atom)}] {variant}"
                    self._goal("SubqueryInner", tag,
                               [self._candidate(
                                   root, guard_subqueries=True,
                                   atom_modes={**flip, id(inner_atom): variant})])

    # -- DISTINCT

    def plan_distinct(self, root: Node) -> None:
        parts = find_block_parts(root)
        project = parts.get("project")
        if project is None:
            return
        group = parts.get("group")
        if group is not None and group.keys:
            key_names = {render_expr(k) for k in group.keys}
            proj_names = {render_expr(i.expr) for i in project.items}
            if proj_names <= key_names:
                goal = self._goal("Distinct", "distinct", [])
                goal.status = "unsat"
                goal.note = "projection equals the GROUP BY attributes"
                return
        if group is not None and group.aggs:
            return   # aggregate outputs make duplicate rows a non-issue
        opts = BlockOptions(distinct_pair=True,
                            group=GroupSpec(2, _all_two_assignment(root), 1))
        self._goal("Distinct", "distinct", [self._candidate(root, options=opts)])

    # -- ORDER BY

    def plan_orderby(self, node: OrderBy) -> None:
        if not node.keys:
            return
        expr, _asc = node.keys[0]
        if not isinstance(expr, Attr):
            return
        opts = BlockOptions(group=GroupSpec(2, _all_two_assignment(node.child), 1))
        self._goal("OrderByDirection", f"order-by[{render_expr(expr)}]",
                   [self._candidate(node.child, options=opts,
                                    post=_order_distinct_post(expr))])

    # -- set operators

    def plan_setop(self, node: SetOp) -> None:
        self._goal("NonEmptyBase", "base",
                   [_setop_candidate(self, node, kind) for kind in
                    _setop_base_kinds(node)])
        ids = []
        for k in range(1, 7):
            goal = self._goal("SetOp", f"setop-dataset-{k}",
                              [_setop_candidate(self, node, k)])
            ids.append(goal.goal_id)
        d3, d4 = ids[2], ids[3]
        self.goals[-2].only_if_failed = [d3, d4]   # dataset 5
        self.goals[-1].only_if_failed = [d3, d4]   # dataset 6
        # inner mutation kills: P side masked by NOT EXISTS of Q, and vice versa
        for side, label in ((node.left, "P"), (node.right, "Q")):
            self.plan_block_goals(side, prefix=f"{label}.", subquery_of=None)

    # ------------------------------------------------------------ dedupe

    def dedupe(self) -> list[DatasetGoal]:
        return self.goals


# --------------------------------------------------------------------------
# post-build hooks

def _null_fill_post(builder: GoalBuilder, gen) -> None:
    """NULL every nullable attribute not referenced by the query."""
    used: set[tuple[str, str]] = set()
    for var, slot in builder.script.var_slot.items():
        pass
    for term in builder.script.assertions:
        _collect_vars(term, used)
    for var, sort in builder.script.variables.items():
        slot = builder.script.var_slot.get(var)
        if slot is None:
            continue
        rel, idx, attr_name = slot
        attr = builder.schema.relation(rel).attribute(attr_name)
        if not attr.nullable:
            continue
        if var in {u for u, _ in used} and _hard_used(var, builder):
            continue
        term = builder.null_term(rel, idx, attr_name)
        if term != ("b", False):
            builder.script.add(term)


def _collect_vars(term, out: set) -> None:
    if not isinstance(term, tuple):
        return
    if term[0] == "v":
        out.add((term[1], True))
        return
    for t in term[1:]:
        _collect_vars(t, out)


def _hard_used(var: str, builder: GoalBuilder) -> bool:
    """Used = mentioned in an assertion beyond its own domain axiom."""
    count = 0
    for term in builder.script.assertions:
        seen: set = set()
        _collect_vars(term, seen)
        if (var, True) in seen:
            count += 1
    return count > 1


def _inequality_post(la, lname, ra, rname):
    def post(builder: GoalBuilder, gen) -> None:
        def resolve(alias, name):
            target = _find_gen_with_alias(gen, alias)
            if target is not None:
                attr = Attr(alias, name)
                attr.alias = alias
                attr.attribute = target.occ_of_alias[alias].rel.attribute(name)
                return attr, target
            vgen = _find_gen_with_view(gen, alias)
            if vgen is not None:
                attr = Attr(alias, name)
                attr.alias = alias
                binding = vgen.view_of_alias[alias]
                inner = binding.items.get(name)
                if isinstance(inner, Attr):
                    attr.attribute = inner.attribute
                return attr, vgen
            raise UnsupportedFeature("extra-join-cond alias missing", alias)

        lhs, gl = resolve(la, lname)
        rhs, gr = resolve(ra, rname)
        raw = _proj_raw_for(builder, gr, rhs)
        builder.script.add(builder.encode_atom(
            Comparison(lhs, "<>", raw), gl.row_ctxs[0], True))
    return post


def _find_gen_with_view(gen, alias: str):
    if alias in getattr(gen, "view_of_alias", {}):
        return gen
    for sub in list(getattr(gen, "_view_gens", [])) + \
            list(getattr(gen, "_sub_gens", [])):
        hit = _find_gen_with_view(sub, alias)
        if hit is not None:
            return hit
    return None


def _proj_raw_for(builder: GoalBuilder, gen, expr):
    from .build import RawTerm
    ctx = gen.row_ctxs[0]
    anchor = builder.text_anchor(expr, ctx)
    if anchor is not None:
        rel, idx, attribute = builder.slot_of(expr, ctx)
        return RawTerm(v(builder._var_name(rel, idx, attribute.name)),
                       anchor, builder.attr_not_null(expr, ctx))
    return RawTerm(builder.attr_term(expr, ctx), None, TRUE_TERM)


def _agg_pattern_post(agg: AggExpr):
    """Two equal non-zero values plus one different on the aggregated column."""
    def post(builder: GoalBuilder, top_gen) -> None:
        anchor = _plain_attr(agg.arg) if agg.arg is not None else None
        gen = _find_gen_with_alias(top_gen, anchor.alias) if anchor else top_gen
        if gen is None:
            gen = top_gen
        rows = gen.row_ctxs
        arg = agg.arg
        if arg is None:   # count(*): group size differences come elsewhere
            return
        attr = _plain_attr(arg)
        if attr is None:
            raise UnsupportedFeature("aggregate over a complex expression")
        terms = []
        is_text = attr.attribute is not None and attr.attribute.is_text
        for ctx in rows[:3]:
            if is_text:
                rel, idx, attribute = builder.slot_of(attr, ctx)
                terms.append(v(builder._var_name(rel, idx, attribute.name)))
            else:
                terms.append(builder.numeric_expr(attr, ctx))
                builder.script.add(builder.expr_not_null(attr, ctx))
        if len(terms) >= 3:
            builder.script.add(("=", terms[0], terms[1]))
            builder.script.add(neg(("=", terms[0], terms[2])))
        elif len(terms) == 2:
            builder.script.add(neg(("=", terms[0], terms[1])))
        else:
            raise UnsupportedFeature("aggregate pattern needs >= 2 group rows")
        if not is_text and not agg.distinct:
            builder.script.add(neg(("=", terms[0], ("n", 0))))
        # other attributes of the aggregated expression stay constant
        others = [a for a in _expr_attrs_list(arg) if a is not attr]
        for other in others:
            base = builder.numeric_or_enum(other, rows[0])
            for ctx in rows[1:3]:
                builder.script.add(("=", base,
                                    builder.numeric_or_enum(other, ctx)))
    return post


def _count_null_nested_post(agg: AggExpr):
    def post(builder: GoalBuilder, gen) -> None:
        attr = _plain_attr(agg.arg)
        target = _find_gen_with_alias(gen, attr.alias)
        if target is None:
            raise UnsupportedFeature("count-null alias missing", attr.alias)
        for ctx in target.row_ctxs:
            rel, idx, attribute = builder.slot_of(attr, ctx)
            term = builder.null_term(rel, idx, attribute.name)
            if term == ("b", False):
                raise EquivalentMutation("attribute cannot be NULL")
            builder.script.add(term)
    return post


def _find_gen_with_alias(gen, alias: str):
    if alias in gen.occ_of_alias:
        return gen
    for sub in list(getattr(gen, "_view_gens", [])) + \
            list(getattr(gen, "_sub_gens", [])):
        hit = _find_gen_with_alias(sub, alias)
        if hit is not None:
            return hit
    return None


def _count_null_post(agg: AggExpr):
    def post(builder: GoalBuilder, gen) -> None:
        attr = _plain_attr(agg.arg)
        for ctx in gen.row_ctxs:
            rel, idx, attribute = builder.slot_of(attr, ctx)
            term = builder.null_term(rel, idx, attribute.name)
            if term == ("b", False):
                raise EquivalentMutation("attribute cannot be NULL")
            builder.script.add(term)
    return post


def _straddle_post(agg: AggExpr, alt: str):
    """Assert HAVING holds for the query but fails with the aggregate swapped."""
    def post(builder: GoalBuilder, top_gen) -> None:
        anchor = _plain_attr(agg.arg) if agg.arg is not None else None
        gen = (_find_gen_with_alias(top_gen, anchor.alias) if anchor else None) \
            or top_gen
        having = gen.parts.get("having")
        if having is None:
            return
        rows = gen.row_ctxs
        if alt == "distinct_toggle":
            # duplicate the first two rows' value; the distinct variant then
            # aggregates over the deduplicated remainder
            if len(rows) < 2 or anchor is None:
                raise UnsupportedFeature("distinct straddle needs >= 2 rows")
            a = builder.numeric_or_enum(anchor, rows[0])
            b = builder.numeric_or_enum(anchor, rows[1])
            builder.script.add(("=", a, b))
            if not agg.distinct:
                dedup_agg = AggExpr(agg.func, agg.arg, False)
                alt_term = gen.group_term(dedup_agg, rows[1:])
            else:
                alt_term = gen.group_term(AggExpr(agg.func, agg.arg, False),
                                          rows)
        else:
            alt_agg = AggExpr(alt if alt != "count_star" else "count_star",
                              None if alt == "count_star" else agg.arg,
                              agg.distinct)
            alt_term = gen.group_term(alt_agg, rows)
        orig_key = render_expr(agg)
        saved = dict(gen.agg_terms)
        gen.agg_terms[orig_key] = alt_term
        try:
            substituted = gen._having_pred_term(having.predicate, rows,
                                                positive=False, modes={})
        finally:
            gen.agg_terms = saved
        builder.script.add(substituted)
    return post


def _two_groups_nested_post(target: Attr):
    def post(builder: GoalBuilder, top_gen) -> None:
        gen = _find_gen_with_alias(top_gen, target.alias) or top_gen
        _two_groups_post(builder, gen)
    return post


def _two_groups_post(builder: GoalBuilder, gen) -> None:
    """Two rows that the mutant splits into different groups."""
    spec = gen.options.group or GroupSpec()
    if spec.n < 2 or len(gen.row_ctxs) < 2:
        raise UnsupportedFeature("group split goal needs >= 2 rows")
    target = gen.options.extra_group_distinct
    if target is None:
        return
    rows = gen.row_ctxs[:2]
    a = builder.numeric_or_enum(target, rows[0])
    b = builder.numeric_or_enum(target, rows[1])
    builder.script.add(builder.expr_not_null(target, rows[0]))
    builder.script.add(builder.expr_not_null(target, rows[1]))
    builder.script.add(neg(("=", a, b)))


def _split_groups_post(target: Attr):
    """Two separate groups agreeing on GROUP BY keys but not the extra
    attribute, each satisfying HAVING; their union fails it."""
    def post(builder: GoalBuilder, top_gen) -> None:
        gen = _find_gen_with_alias(top_gen, target.alias) or top_gen
        having = gen.parts.get("having")
        rows = gen.row_ctxs
        if len(rows) < 2:
            raise UnsupportedFeature("split-groups goal needs >= 2 rows")
        half = max(len(rows) // 2, 1)
        first, second = rows[:half], rows[half:]
        a = builder.numeric_or_enum(target, first[0])
        b = builder.numeric_or_enum(target, second[0])
        builder.script.add(builder.expr_not_null(target, first[0]))
        builder.script.add(builder.expr_not_null(target, second[0]))
        builder.script.add(neg(("=", a, b)))
        if having is None:
            return
        for part_rows in (first, second):
            for ctx in part_rows[1:]:
                builder.script.add(("=",
                                    builder.numeric_or_enum(target, part_rows[0]),
                                    builder.numeric_or_enum(target, ctx)))
            term = gen._having_pred_term(having.predicate, part_rows,
                                         positive=True, modes={})
            builder.script.add(term)
            gen.agg_terms = {}
        union_fail = gen._having_pred_term(having.predicate, rows,
                                           positive=False, modes={})
        builder.script.add(union_fail)
        gen.agg_terms = {}
    return post


def _combined_split_post(target: Attr):
    def post(builder: GoalBuilder, top_gen) -> None:
        gen = _find_gen_with_alias(top_gen, target.alias) or top_gen
        having = gen.parts.get("having")
        spec = gen.options.group or GroupSpec()
        rows = gen.row_ctxs
        if len(rows) < 2:
            raise UnsupportedFeature("combined-split goal needs >= 2 rows")
        a = builder.numeric_or_enum(target, rows[0])
        b = builder.numeric_or_enum(target, rows[-1])
        builder.script.add(builder.expr_not_null(target, rows[0]))
        builder.script.add(builder.expr_not_null(target, rows[-1]))
        builder.script.add(neg(("=", a, b)))
        if having is None:
            return
        # sub-groups partitioned by the target attribute value fail HAVING
        half = max(len(rows) // 2, 1)
        first, second = rows[:half], rows[half:]
        for part_rows in (first, second):
            if not part_rows:
                continue
            for ctx in part_rows[1:]:
                builder.script.add(("=",
                                    builder.numeric_or_enum(target, part_rows[0]),
                                    builder.numeric_or_enum(target, ctx)))
            term = gen._having_pred_term(having.predicate, part_rows,
                                         positive=False, modes={})
            builder.script.add(term)
            gen.agg_terms = {}
    return post


def _order_distinct_post(expr: Attr):
    def post(builder: GoalBuilder, gen) -> None:
        rows = gen.row_ctxs[:2]
        if len(rows) < 2:
            raise UnsupportedFeature("order-by goal needs two rows")
        a = builder.numeric_or_enum(expr, rows[0])
        b = builder.numeric_or_enum(expr, rows[1])
        builder.script.add(builder.expr_not_null(expr, rows[0]))
        builder.script.add(builder.expr_not_null(expr, rows[1]))
        builder.script.add(neg(("=", a, b)))
    return post


def group_override(root: Node, n: int, anchor: Attr | None = None):
    """A {1,n} assignment for goals that need multi-row groups on blocks
    whose own derivation gives fewer rows."""
    from .analysis import assign_cardinalities
    occs = pseudo_occurrences(root)
    parts = find_block_parts(root)
    select = parts.get("select")
    clause = []
    if select is not None:
        clauses = to_dnf(select.predicate, DEFAULT.dnf_clause_cap)
        clause = clauses[0] if clauses else []
    group = parts.get("group")
    keys = group.keys if group is not None else []
    info = collect_block_info(parts["from"], {o.alias: o for o in occs.values()},
                              list(clause), keys)
    classes = build_equivalence_classes(info)
    add_inferred_edges(info, classes)
    inference = infer_attribute_properties(info, classes)
    roots = []
    if anchor is not None and anchor.alias in occs:
        roots.append(anchor.alias)
    degree = {a: 0 for a in occs}
    for e in info.edges:
        if e.a in degree:
            degree[e.a] += 1
        if e.b in degree:
            degree[e.b] += 1
    roots.extend(sorted((a for a in occs if a not in roots),
                        key=lambda a: (-degree[a], a)))
    for r in roots:
        assignment = assign_cardinalities(info, inference, n, r, set())
        if assignment is not None:
            return GroupSpec(n, assignment, 1)
    return None


# --------------------------------------------------------------------------
# small helpers

def _block_joins(node: Node) -> list[Join]:
    """Join nodes of one block, not descending into from-subqueries."""
    out = []

    def walk(x: Node) -> None:
        if isinstance(x, Join):
            out.append(x)
            walk(x.left)
            walk(x.right)

    walk(node)
    return out


def _expr_attrs_list(expr) -> list[Attr]:
    return [e for e in iter_exprs(expr) if isinstance(e, Attr)]


def _plain_attr(expr) -> Attr | None:
    for e in iter_exprs(expr):
        if isinstance(e, Attr):
            return e
    return None


def _alternative_funcs(agg: AggExpr) -> list[str]:
    attr = _plain_attr(agg.arg) if agg.arg is not None else None
    is_text = attr is not None and attr.attribute is not None \
        and attr.attribute.is_text
    if agg.func == "count_star":
        return []
    if is_text:
        return ["distinct_toggle"] if agg.func == "count" else []
    out = [f for f in ("sum", "min", "max", "avg", "count")
           if f != agg.func]
    out.append("distinct_toggle")
    return out


def _has_scalar(atom: Pred) -> bool:
    if not isinstance(atom, Comparison):
        return False
    return any(isinstance(e, ScalarSub)
               for side in (atom.left, atom.right)
               for e in iter_exprs(side))


def _is_text_comparison(atom: Comparison) -> bool:
    for side in (atom.left, atom.right):
        target = side
        if isinstance(target, Func) and target.name in {"lower", "upper"}:
            target = target.args[0]
        if isinstance(target, Attr) and target.attribute is not None \
                and target.attribute.is_text:
            return True
    return False


def _is_correlation(atom: Pred, link) -> bool:
    # only the membership conditions the IN/ANY/ALL rewrites added are
    # excluded; hand-written correlation conditions are inner atoms
    return getattr(atom, "membership_rewrite", False)


def _find_link_atom(root: Node, link) -> Pred | None:
    for node in iter_nodes(root):
        preds = []
        if isinstance(node, Select):
            preds.append(node.predicate)
        elif isinstance(node, Having):
            preds.append(node.predicate)
        for p in preds:
            for atom in iter_atoms(p):
                if isinstance(atom, Exists) and atom.link is link:
                    return atom
                if isinstance(atom, Comparison):
                    for side in (atom.left, atom.right):
                        for e in iter_exprs(side):
                            if isinstance(e, ScalarSub) and e.link is link:
                                return atom
    # look into from-subqueries
    for node in iter_nodes(root):
        if isinstance(node, FromSubquery):
            hit = _find_link_atom(node.child, link)
            if hit is not None:
                return hit
    return None


def _all_two_assignment(root: Node):
    from .analysis import CardinalityAssignment
    occs = pseudo_occurrences(root)
    counts = {alias: 2 for alias in occs}
    unique = {alias: [frozenset(ks) for ks in occ.rel.key_sets]
              for alias, occ in occs.items()}
    return CardinalityAssignment(counts, 2, unique)


# --------------------------------------------------------------------------
# set operators

def _setop_base_kinds(node: SetOp) -> list[int]:
    if node.op == "union":
        return [1, 2]
    if node.op == "intersect":
        return [7]      # t1 in both
    return [1]          # except: t1 in P only


def _setop_candidate(planner: Planner, node: SetOp, kind: int):
    schema, config = planner.schema, planner.config

    def build() -> ConstraintScript:
        builder = GoalBuilder(schema, config, f"setop-{kind}", "")
        p_dup = kind in (3, 4, 5)
        q_dup = kind in (4, 6)
        p_needed = kind in (1, 3, 4, 5, 7)
        q_needed = kind in (2, 4, 6, 7)
        p_gen = q_gen = None
        if p_needed:
            opts = BlockOptions()
            if p_dup:
                opts.distinct_pair = True
                opts.group = GroupSpec(2, _all_two_assignment(node.left), 1)
            p_gen = plan_block(builder, node.left, None, opts)
            p_gen.prepare()
        if q_needed:
            opts = BlockOptions()
            if q_dup:
                opts.distinct_pair = True
                opts.group = GroupSpec(2, _all_two_assignment(node.right), 1)
            q_gen = plan_block(builder, node.right, None, opts)
            q_gen.prepare()
        p_parts = find_block_parts(node.left)
        q_parts = find_block_parts(node.right)
        p_items = p_parts["project"].items if p_parts.get("project") else []
        q_items = q_parts["project"].items if q_parts.get("project") else []
        # corresponding text output columns share one enum domain
        for pi, qi in zip(p_items, q_items):
            pa = _gen_anchor(builder, p_gen, pi.expr)
            qa = _gen_anchor(builder, q_gen, qi.expr)
            if pa and qa:
                builder.merge_domains(pa[0], pa[1], qa[0], qa[1])
        builder.fk_closure()
        builder.freeze()
        if p_gen:
            p_gen.emit()
        if q_gen:
            q_gen.emit()
        if kind in (1, 3):
            _assert_not_in_other(builder, p_gen, node.right, p_items, q_items)
        if kind == 2:
            _assert_not_in_other(builder, q_gen, node.left, q_items, p_items)
        if kind in (4, 7):
            for pi, qi in zip(p_items, q_items):
                a = _proj_raw(builder, p_gen, pi.expr)
                b = _proj_raw(builder, q_gen, qi.expr)
                if a.anchor and b.anchor:
                    builder.merge_domains(a.anchor[0], a.anchor[1],
                                          b.anchor[0], b.anchor[1])
                builder.script.add(("=", a.term, b.term))
        builder.solve_strings()
        builder._finish_null_exclusions()
        return builder.script

    return build


def _proj_raw(builder: GoalBuilder, gen, expr):
    from .build import RawTerm
    ctx = gen.row_ctxs[0]
    anchor = builder.text_anchor(expr, ctx)
    if anchor is not None and isinstance(expr, Attr):
        rel, idx, attribute = builder.slot_of(expr, ctx)
        return RawTerm(v(builder._var_name(rel, idx, attribute.name)),
                       anchor, builder.attr_not_null(expr, ctx))
    return RawTerm(builder.numeric_expr(expr, ctx), None,
                   builder.expr_not_null(expr, ctx))


def _assert_not_in_other(builder: GoalBuilder, gen, other_side: Node,
                         items, other_items) -> None:
    """This side's row must not appear in the other side's result."""
    preds = []
    for pi, qi in zip(items, other_items):
        raw = _proj_raw(builder, gen, pi.expr)
        preds.append(Comparison(qi.expr.clone(), "=", raw))
    ctx = gen.row_ctxs[0]
    term = not_exists_term(builder, _with_extra_selections(other_side, preds),
                           ctx)
    builder.script.add(term)


def _gen_anchor(builder: GoalBuilder, gen, expr):
    if gen is None:
        return None
    try:
        return builder.text_anchor(expr, gen.row_ctxs[0])
    except Exception:
        return None


def _with_extra_selections(root: Node, preds: list[Pred]) -> Node:
    clone = root  # structural reuse is safe: not_exists_term only reads
    parts = find_block_parts(clone)
    select = parts.get("select")
    combined = list(preds)
    if select is not None:
        from .tree import And
        new_pred = And(combined + [select.predicate])
        return _rewrap(clone, parts, new_pred)
    from .tree import And
    new_pred = And(combined) if len(combined) > 1 else combined[0]
    return _rewrap(clone, parts, new_pred)


def _rewrap(root: Node, parts, new_pred: Pred) -> Node:
    import copy
    from .tree import Select as _Select
    select = parts.get("select")
    target = parts["from"]
    new_select = _Select(new_pred, target)
    # rebuild the chain above FROM without mutating the original tree
    node: Node = new_select
    if parts.get("group") is not None:
        g = parts["group"]
        node = GroupAgg(g.keys, g.aggs, node)
    if parts.get("having") is not None:
        node = Having(parts["having"].predicate, node)
    if parts.get("project") is not None:
        p = parts["project"]
        node = Project(p.items, p.distinct, node, star=p.star)
    return node


def plan(tree: QueryTree, schema: Schema, config: Config = DEFAULT
         ) -> list[DatasetGoal]:
    return Planner(schema, tree, config).plan()
