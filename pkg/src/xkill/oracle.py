"""Mutation oracle: enumerate single-change mutants, execute, build kill
matrices via multiset comparison on the embedded engine."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .catalog import Schema
from .errors import ExecError
from .normalize import normalize
from .parser import parse_query
from .solver import Dataset
from .tree import (AGG_FUNCS, AggExpr, Attr, Between, Comparison, Exists,
                   FromSubquery, GroupAgg, Having, InList, InSub, IsNull, Join,
                   LikePred, Node, Not, OrderBy, Pred, Project, QuantSub,
                   QueryTree, RelationLeaf, Select, SetOp, TruePred, iter_atoms,
                   iter_exprs, iter_links, iter_nodes, render_sql)
from .treeval import Database, execute_tree

RELOP_SET = ["=", "<>", "<", "<=", ">", ">="]
LIKEOP_SET = ["like", "ilike", "not_like", "not_ilike"]
SETOP_SET = [("union", False), ("union", True), ("intersect", False),
             ("intersect", True), ("except", False), ("except", True)]


@dataclass
class Mutant:
    descriptor: str
    klass: str
    tree: QueryTree
    sql: str = ""

    def __post_init__(self):
        if not self.sql:
            try:
                self.sql = render_sql(self.tree.root)
            except Exception:
                self.sql = f"<unrenderable: {self.descriptor}>"


@dataclass
class KillMatrix:
    mutants: list[Mutant]
    dataset_ids: list[str]
    cells: dict[tuple[int, str], str] = field(default_factory=dict)
    # cell values: "killed" | "survived" | "exec-error"

    def killed(self, idx: int) -> bool:
        return any(self.cells.get((idx, d)) == "killed"
                   for d in self.dataset_ids)

    def summary(self) -> dict[str, tuple[int, int]]:
        out: dict[str, list[int]] = {}
        for i, m in enumerate(self.mutants):
            bucket = out.setdefault(m.klass, [0, 0])
            bucket[1] += 1
            if self.killed(i):
                bucket[0] += 1
        return {k: (a, b) for k, (a, b) in sorted(out.items())}


# --------------------------------------------------------------------------
# mutant enumeration

def _blocks(tree: QueryTree) -> list[Node]:
    """The root plus every subquery/from-subquery block root."""
    roots = [tree.root]
    seen = 0
    while seen < len(roots):
        node = roots[seen]
        seen += 1
        for n in iter_nodes(node):
            if isinstance(n, FromSubquery):
                roots.append(n.child)
        for link in iter_links(node):
            roots.append(link.subtree)
    return roots


def _all_preds(tree: QueryTree):
    for root in _blocks(tree):
        for n in iter_nodes(root):
            if isinstance(n, Select):
                yield n.predicate
            elif isinstance(n, Having):
                yield n.predicate
            elif isinstance(n, Join):
                yield from n.filters


def enumerate_mutants(tree: QueryTree, schema: Schema) -> list[Mutant]:
    """All single substitutions within the targeted mutation classes."""
    mutants: list[Mutant] = []

    def emit(desc: str, klass: str, mutate) -> None:
        clone = tree.clone()
        try:
            mutate(clone)
        except (IndexError, StopIteration):
            return
        mutants.append(Mutant(desc, klass, clone))

    # join type
    joins = [n for root in _blocks(tree) for n in iter_nodes(root)
             if isinstance(n, Join) and (n.conditions or n.filters)]
    for i, join in enumerate(joins):
        for kind in ("inner", "left", "right"):
            if kind == join.kind:
                continue
            emit(f"join#{i}: {join.kind} -> {kind}", "JoinType",
                 _nth_join_setter(i, kind))

    # join condition removal
    for i, join in enumerate(joins):
        for c in range(len(join.conditions)):
            if len(join.conditions) + len(join.filters) <= 1 and \
                    join.kind != "inner":
                continue
            emit(f"join#{i}: drop condition {c}", "JoinCondMissing",
                 _drop_join_cond(i, c))

    # comparison operators (selection + having + quantified)
    comparisons = [a for p in _all_preds(tree) for a in iter_atoms(p)
                   if isinstance(a, Comparison) and a.op in RELOP_SET]
    for i, atom in enumerate(comparisons):
        for op in RELOP_SET:
            if op == atom.op:
                continue
            emit(f"relop#{i}: {atom.op} -> {op}", "Relop", _nth_relop(i, op))

    # LIKE operators and patterns
    likes = [a for p in _all_preds(tree) for a in iter_atoms(p)
             if isinstance(a, LikePred)]
    for i, atom in enumerate(likes):
        for op in LIKEOP_SET:
            if op == atom.op:
                continue
            emit(f"like#{i}: {atom.op} -> {op}", "LikeOp", _nth_likeop(i, op))
        for j, variant in enumerate(_pattern_mutations(atom.pattern)):
            emit(f"like#{i}: pattern -> {variant!r}", "LikePattern",
                 _nth_like_pattern(i, variant))

    # IS NULL direction
    nulls = [a for p in _all_preds(tree) for a in iter_atoms(p)
             if isinstance(a, IsNull)]
    for i, atom in enumerate(nulls):
        emit(f"isnull#{i}: negate", "IsNull", _nth_isnull_flip(i))

    # aggregates
    aggs = [a for root in _blocks(tree) for n in iter_nodes(root)
            if isinstance(n, GroupAgg) for a in n.aggs]
    for i, agg in enumerate(aggs):
        arg_attr = next((e for e in iter_exprs(agg.arg) if isinstance(e, Attr)),
                        None) if agg.arg is not None else None
        is_text = arg_attr is not None and arg_attr.attribute is not None \
            and arg_attr.attribute.is_text
        for func in ("sum", "min", "max", "avg", "count"):
            if agg.func == func or agg.func == "count_star":
                continue
            if is_text and func in {"sum", "avg"}:
                continue
            emit(f"agg#{i}: {agg.func} -> {func}", "AggFunc",
                 _nth_agg_func(i, func))
        if agg.func != "count_star":
            emit(f"agg#{i}: distinct toggle", "AggFunc", _nth_agg_distinct(i))
        if agg.func == "count" and not agg.distinct:
            emit(f"agg#{i}: count -> count(*)", "CountStar",
                 _nth_agg_to_star(i))

    # subquery connectives
    conn_atoms = []
    for p in _all_preds(tree):
        for a in iter_atoms(p):
            if isinstance(a, (Exists, InSub, QuantSub)):
                conn_atoms.append(a)
    for i, atom in enumerate(conn_atoms):
        if isinstance(atom, (Exists, InSub)):
            emit(f"connective#{i}: negate", "SubqueryConnective",
                 _nth_connective_flip(i))
        if isinstance(atom, QuantSub):
            emit(f"connective#{i}: any/all swap", "SubqueryConnective",
                 _nth_quant_swap(i))
            for op in RELOP_SET:
                if op != atom.relop:
                    emit(f"connective#{i}: quant relop -> {op}",
                         "SubqueryConnective", _nth_quant_relop(i, op))

    # set operators
    setops = [n for root in _blocks(tree) for n in iter_nodes(root)
              if isinstance(n, SetOp)]
    for i, node in enumerate(setops):
        for op, allf in SETOP_SET:
            if (op, allf) == (node.op, node.all):
                continue
            emit(f"setop#{i}: -> {op}{' all' if allf else ''}", "SetOp",
                 _nth_setop(i, op, allf))

    # distinct
    projects = [n for root in _blocks(tree) for n in iter_nodes(root)
                if isinstance(n, Project)]
    for i, proj in enumerate(projects):
        emit(f"distinct#{i}: toggle", "Distinct", _nth_distinct_toggle(i))

    # group by add/remove
    groups = [n for root in _blocks(tree) for n in iter_nodes(root)
              if isinstance(n, GroupAgg) and n.keys]
    for i, group in enumerate(groups):
        for k in range(len(group.keys)):
            if len(group.keys) > 1:
                emit(f"group#{i}: drop key {k}", "GroupByMissing",
                     _nth_group_drop(i, k))
        extra = _extra_group_candidates(tree, group, schema)
        for alias, name in extra:
            emit(f"group#{i}: add {alias}.{name}", "GroupByExtra",
                 _nth_group_add(i, alias, name))

    # AND <-> OR
    bools = [p for pr in _all_preds(tree) for p in _walk_bool(pr)]
    for i, node in enumerate(bools):
        emit(f"bool#{i}: and/or swap", "BoolOp", _nth_bool_swap(i))

    # ORDER BY direction
    orders = [n for root in _blocks(tree) for n in iter_nodes(root)
              if isinstance(n, OrderBy)]
    for i, node in enumerate(orders):
        for k in range(len(node.keys)):
            emit(f"order#{i}: flip key {k}", "OrderByDirection",
                 _nth_order_flip(i, k))

    return mutants


def _walk_bool(pred: Pred):
    from .tree import And, Or
    if isinstance(pred, (And, Or)):
        yield pred
        for p in pred.items:
            yield from _walk_bool(p)
    elif isinstance(pred, Not):
        yield from _walk_bool(pred.item)


def _pattern_mutations(pattern: str) -> list[str]:
    from .strings_like import parse_pattern
    items = parse_pattern(pattern)

    def rebuild(mutated: list) -> str:
        out = []
        for kind, c in mutated:
            if kind == "lit" and c in "%_\\":
                out.append("\\" + c)
            elif kind == "lit":
                out.append(c)
            else:
                out.append("%" if kind == "many" else "_")
        return "".join(out)

    variants = []
    for i, (kind, c) in enumerate(items):
        if kind == "many":
            variants.append(rebuild(items[:i] + [("any", "_")] + items[i + 1:]))
            variants.append(rebuild(items[:i] + items[i + 1:]))
        elif kind == "any":
            variants.append(rebuild(items[:i] + [("many", "%")] + items[i + 1:]))
            variants.append(rebuild(items[:i] + items[i + 1:]))
    seen = set()
    out = []
    for vv in variants:
        if vv not in seen and vv != pattern:
            seen.add(vv)
            out.append(vv)
    return out


def _extra_group_candidates(tree: QueryTree, group: GroupAgg,
                            schema: Schema) -> list[tuple[str, str]]:
    # attributes of relations in the same block, not already keys
    for root in _blocks(tree):
        for n in iter_nodes(root):
            if n is group:
                parts_from = group.child
                leaves = [x for x in iter_nodes(parts_from)
                          if isinstance(x, RelationLeaf)]
                keys = {(k.alias, k.name) for k in group.keys
                        if isinstance(k, Attr)}
                out = []
                for leaf in leaves:
                    for a in leaf.rel.attributes:
                        if (leaf.alias, a.name) not in keys:
                            out.append((leaf.alias, a.name))
                return out
    return []


# ---- clone-relative mutators (walk the clone in the same order) ----------

def _clone_joins(clone: QueryTree) -> list[Join]:
    return [n for root in _blocks(clone) for n in iter_nodes(root)
            if isinstance(n, Join) and (n.conditions or n.filters)]


def _nth_join_setter(i: int, kind: str):
    def mutate(clone: QueryTree) -> None:
        _clone_joins(clone)[i].kind = kind
    return mutate


def _drop_join_cond(i: int, c: int):
    def mutate(clone: QueryTree) -> None:
        del _clone_joins(clone)[i].conditions[c]
    return mutate


def _clone_comparisons(clone: QueryTree) -> list[Comparison]:
    return [a for p in _all_preds(clone) for a in iter_atoms(p)
            if isinstance(a, Comparison) and a.op in RELOP_SET]


def _nth_relop(i: int, op: str):
    def mutate(clone: QueryTree) -> None:
        _clone_comparisons(clone)[i].op = op
    return mutate


def _clone_likes(clone: QueryTree) -> list[LikePred]:
    return [a for p in _all_preds(clone) for a in iter_atoms(p)
            if isinstance(a, LikePred)]


def _nth_likeop(i: int, op: str):
    def mutate(clone: QueryTree) -> None:
        _clone_likes(clone)[i].op = op
    return mutate


def _nth_like_pattern(i: int, pattern: str):
    def mutate(clone: QueryTree) -> None:
        _clone_likes(clone)[i].pattern = pattern
    return mutate


def _nth_isnull_flip(i: int):
    def mutate(clone: QueryTree) -> None:
        atoms = [a for p in _all_preds(clone) for a in iter_atoms(p)
                 if isinstance(a, IsNull)]
        atoms[i].negated = not atoms[i].negated
    return mutate


def _clone_aggs(clone: QueryTree) -> list[AggExpr]:
    return [a for root in _blocks(clone) for n in iter_nodes(root)
            if isinstance(n, GroupAgg) for a in n.aggs]


def _nth_agg_func(i: int, func: str):
    def mutate(clone: QueryTree) -> None:
        _clone_aggs(clone)[i].func = func
    return mutate


def _nth_agg_distinct(i: int):
    def mutate(clone: QueryTree) -> None:
        agg = _clone_aggs(clone)[i]
        agg.distinct = not agg.distinct
    return mutate


def _nth_agg_to_star(i: int):
    def mutate(clone: QueryTree) -> None:
        agg = _clone_aggs(clone)[i]
        agg.func = "count_star"
        agg.arg = None
        agg.distinct = False
    return mutate


def _nth_connective_flip(i: int):
    def mutate(clone: QueryTree) -> None:
        atoms = [a for p in _all_preds(clone) for a in iter_atoms(p)
                 if isinstance(a, (Exists, InSub, QuantSub))]
        atom = atoms[i]
        atom.negated = not atom.negated
    return mutate


def _nth_quant_swap(i: int):
    def mutate(clone: QueryTree) -> None:
        atoms = [a for p in _all_preds(clone) for a in iter_atoms(p)
                 if isinstance(a, (Exists, InSub, QuantSub))]
        atom = atoms[i]
        atom.quant = "all" if atom.quant == "any" else "any"
    return mutate


def _nth_quant_relop(i: int, op: str):
    def mutate(clone: QueryTree) -> None:
        atoms = [a for p in _all_preds(clone) for a in iter_atoms(p)
                 if isinstance(a, (Exists, InSub, QuantSub))]
        atoms[i].relop = op
    return mutate


def _nth_setop(i: int, op: str, allf: bool):
    def mutate(clone: QueryTree) -> None:
        nodes = [n for root in _blocks(clone) for n in iter_nodes(root)
                 if isinstance(n, SetOp)]
        nodes[i].op = op
        nodes[i].all = allf
    return mutate


def _nth_distinct_toggle(i: int):
    def mutate(clone: QueryTree) -> None:
        nodes = [n for root in _blocks(clone) for n in iter_nodes(root)
                 if isinstance(n, Project)]
        nodes[i].distinct = not nodes[i].distinct
    return mutate


def _clone_groups(clone: QueryTree) -> list[GroupAgg]:
    return [n for root in _blocks(clone) for n in iter_nodes(root)
            if isinstance(n, GroupAgg) and n.keys]


def _nth_group_drop(i: int, k: int):
    def mutate(clone: QueryTree) -> None:
        group = _clone_groups(clone)[i]
        removed = group.keys.pop(k)
        # drop the projected copy so arity stays comparable where possible
        for root in _blocks(clone):
            for n in iter_nodes(root):
                if isinstance(n, Project):
                    for item in list(n.items):
                        if isinstance(item.expr, Attr) and \
                                isinstance(removed, Attr) and \
                                item.expr.alias == removed.alias and \
                                item.expr.name == removed.name:
                            pass  # keep projection; engines allow key-only drop
    return mutate


def _nth_group_add(i: int, alias: str, name: str):
    def mutate(clone: QueryTree) -> None:
        group = _clone_groups(clone)[i]
        leaves = [x for root in _blocks(clone) for x in iter_nodes(root)
                  if isinstance(x, RelationLeaf) and x.alias == alias]
        attr = Attr(alias, name)
        attr.alias = alias
        if leaves:
            attr.attribute = leaves[0].rel.attribute(name)
        group.keys.append(attr)
    return mutate


def _nth_bool_swap(i: int):
    def mutate(clone: QueryTree) -> None:
        from .tree import And, Or
        nodes = [p for pr in _all_preds(clone) for p in _walk_bool(pr)]
        node = nodes[i]
        items = node.items
        swapped = Or(items) if isinstance(node, And) else And(items)
        # in-place class swap via replacement in parent structures
        for pred_root in _all_preds(clone):
            _replace_pred(pred_root, node, swapped)
        for root in _blocks(clone):
            for n in iter_nodes(root):
                if isinstance(n, Select) and n.predicate is node:
                    n.predicate = swapped
                elif isinstance(n, Having) and n.predicate is node:
                    n.predicate = swapped
    return mutate


def _replace_pred(root: Pred, old: Pred, new: Pred) -> None:
    from .tree import And, Or
    if isinstance(root, (And, Or)):
        root.items = [new if p is old else p for p in root.items]
        for p in root.items:
            _replace_pred(p, old, new)
    elif isinstance(root, Not):
        if root.item is old:
            root.item = new
        else:
            _replace_pred(root.item, old, new)


def _nth_order_flip(i: int, k: int):
    def mutate(clone: QueryTree) -> None:
        nodes = [n for root in _blocks(clone) for n in iter_nodes(root)
                 if isinstance(n, OrderBy)]
        expr, asc = nodes[i].keys[k]
        nodes[i].keys[k] = (expr, not asc)
    return mutate


# --------------------------------------------------------------------------
# execution + kill matrix

def _freeze_row(row: tuple) -> tuple:
    out = []
    for x in row:
        if x is None:
            out.append(("\0null",))
        elif isinstance(x, Fraction):
            out.append(x)
        elif isinstance(x, bool):
            out.append(int(x))
        else:
            out.append(x)
    return tuple(out)


def result_multiset(rows: list[tuple]) -> Counter:
    return Counter(_freeze_row(r) for r in rows)


def execute(sql_text: str, schema: Schema, dataset: Dataset,
            parameters: dict | None = None) -> list[tuple]:
    """Parse, normalize for execution, evaluate on the dataset."""
    tree = parse_query(sql_text, schema)
    tree = normalize(tree, "exec")
    db = Database(schema, dataset, parameters)
    return execute_tree(tree, db)


def execute_prepared(tree: QueryTree, schema: Schema, dataset: Dataset,
                     parameters: dict | None = None) -> list[tuple]:
    db = Database(schema, dataset, parameters)
    return execute_tree(normalize(tree, "exec"), db)


def kill_matrix(original: QueryTree, mutants: list[Mutant],
                datasets: list[Dataset], schema: Schema) -> KillMatrix:
    matrix = KillMatrix(mutants, [d.goal_id or str(i)
                                  for i, d in enumerate(datasets)])
    baselines: dict[str, tuple] = {}
    for d_idx, dataset in enumerate(datasets):
        ds_id = matrix.dataset_ids[d_idx]
        try:
            base_rows = execute_prepared(original, schema, dataset,
                                         dataset.parameters)
        except ExecError:
            baselines[ds_id] = None
            continue
        ordered = dataset.notes.get("class") == "OrderByDirection"
        baselines[ds_id] = (result_multiset(base_rows),
                            [_freeze_row(r) for r in base_rows], ordered)
    for m_idx, mutant in enumerate(mutants):
        for d_idx, dataset in enumerate(datasets):
            ds_id = matrix.dataset_ids[d_idx]
            base = baselines.get(ds_id)
            if base is None:
                matrix.cells[(m_idx, ds_id)] = "exec-error"
                continue
            try:
                rows = execute_prepared(mutant.tree, schema, dataset,
                                        dataset.parameters)
            except ExecError:
                matrix.cells[(m_idx, ds_id)] = "exec-error"
                continue
            base_ms, base_list, ordered = base
            if ordered and mutant.klass == "OrderByDirection":
                differs = [_freeze_row(r) for r in rows] != base_list
            else:
                differs = result_multiset(rows) != base_ms
            matrix.cells[(m_idx, ds_id)] = "killed" if differs else "survived"
    return matrix
