"""Embedded SQL engine: evaluates resolved QueryTrees over in-memory datasets.

Implements bag semantics and SQL three-valued logic directly, including
native IN/ANY/ALL/EXISTS/BETWEEN atoms, so trees can be executed before
or after the planner's source rewrites.
"""

from __future__ import annotations

from fractions import Fraction

from .catalog import Schema, int_to_date
from .errors import ExecError
from .solver import Dataset
from .strings_like import like_match
from .tree import (AggExpr, And, Arith, Attr, Between, Comparison, Const,
                   Contradiction, Exists, FromSubquery, Func, GroupAgg, Having,
                   InList, InSub, IsNull, Join, LikePred, Node, Not, Or, OrderBy,
                   Param, Pred, Project, QuantSub, QueryTree, RelationLeaf,
                   ScalarSub, Select, SetOp, TruePred, render_expr)

_NULL = ("\0null",)


def _freeze(value):
    if value is None:
        return _NULL
    if isinstance(value, Fraction):
        return value
    return value


class Database:
    """Dataset plus parameter bindings, with values in true (descaled) form."""

    def __init__(self, schema: Schema, dataset: Dataset,
                 parameters: dict[str, object] | None = None):
        self.schema = schema
        self.tables: dict[str, list[dict[str, object]]] = {}
        for rel_name, rows in dataset.rows.items():
            rel = schema.relation(rel_name)
            out = []
            for row in rows:
                vals = {}
                for attr in rel.attributes:
                    raw = row.get(attr.name)
                    if raw is not None and attr.base == "rational" and attr.scale:
                        raw = Fraction(raw, 10 ** attr.scale)
                    vals[attr.name] = raw
                out.append(vals)
            self.tables[rel_name] = out
        self.parameters = dict(parameters or {})
        if not self.parameters:
            self.parameters = dict(dataset.parameters)

    def relation_rows(self, name: str) -> list[dict[str, object]]:
        return self.tables.get(name, [])


def execute_tree(tree: QueryTree | Node, db: Database) -> list[tuple]:
    """Evaluate and return the result as a list of row tuples (a bag)."""
    node = tree.root if isinstance(tree, QueryTree) else tree
    try:
        return _eval_result(node, db, {})
    except ExecError:
        raise
    except ZeroDivisionError as exc:
        raise ExecError("division by zero") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ExecError(f"execution failed: {exc!r}") from exc


def _eval_result(node: Node, db: Database, env: dict) -> list[tuple]:
    if isinstance(node, SetOp):
        left = _eval_result(node.left, db, env)
        right = _eval_result(node.right, db, env)
        return _apply_setop(node.op, node.all, left, right)
    if isinstance(node, OrderBy):
        rows = _eval_result(node.child, db, env)
        # ordering applies to projected tuples via key positions when possible
        proj = node.child
        keys = []
        if isinstance(proj, Project):
            names = [item.name for item in proj.items]
            rendered = [render_expr(item.expr) for item in proj.items]
            for expr, asc in node.keys:
                target = render_expr(expr)
                pos = None
                if isinstance(expr, Attr) and expr.name in names:
                    pos = names.index(expr.name)
                elif target in rendered:
                    pos = rendered.index(target)
                if pos is not None:
                    keys.append((pos, asc))

        def sort_key(row):
            out = []
            for pos, asc in keys:
                val = row[pos]
                null_rank = 1 if val is None else 0
                rank = (null_rank, val if val is not None else 0)
                out.append(rank if asc else _Reverse(rank))
            return out

        return sorted(rows, key=sort_key) if keys else rows
    if isinstance(node, Project):
        rows = _eval_rows(node.child, db, env)
        out = []
        for row in rows:
            merged = {**env, **row}
            out.append(tuple(_eval_expr(item.expr, merged, db) for item in node.items))
        if node.distinct:
            seen = set()
            dedup = []
            for t in out:
                key = tuple(_freeze(x) for x in t)
                if key not in seen:
                    seen.add(key)
                    dedup.append(t)
            out = dedup
        return out
    # bare fragment (e.g. a rewritten DML without projection): project everything
    rows = _eval_rows(node, db, env)
    cols = _columns_of(node)
    return [tuple(r.get(c) for c in cols) for r in rows]


class _Reverse:
    __slots__ = ("val",)

    def __init__(self, val):
        self.val = val

    def __lt__(self, other):
        return other.val < self.val


def _apply_setop(op: str, all_flag: bool, left: list[tuple],
                 right: list[tuple]) -> list[tuple]:
    if left and right and len(left[0]) != len(right[0]):
        raise ExecError("set operands have different arity")
    fl = [tuple(_freeze(x) for x in t) for t in left]
    fr = [tuple(_freeze(x) for x in t) for t in right]
    if op == "union":
        result = left + right
        if all_flag:
            return result
        seen, out = set(), []
        for t, k in zip(result, fl + fr):
            if k not in seen:
                seen.add(k)
                out.append(t)
        return out
    from collections import Counter
    cl, cr = Counter(fl), Counter(fr)
    if op == "intersect":
        out = []
        if all_flag:
            used = Counter()
            for t, k in zip(left, fl):
                if used[k] < min(cl[k], cr[k]):
                    used[k] += 1
                    out.append(t)
            return out
        seen = set()
        for t, k in zip(left, fl):
            if k in cr and k not in seen:
                seen.add(k)
                out.append(t)
        return out
    if op == "except":
        out = []
        if all_flag:
            used = Counter()
            for t, k in zip(left, fl):
                allowed = cl[k] - cr[k]
                if used[k] < allowed:
                    used[k] += 1
                    out.append(t)
            return out
        seen = set()
        for t, k in zip(left, fl):
            if k not in cr and k not in seen:
                seen.add(k)
                out.append(t)
        return out
    raise ExecError(f"unknown set operator {op}")


def _columns_of(node: Node) -> list[tuple[str, str]]:
    if isinstance(node, RelationLeaf):
        return [(node.alias, a.name) for a in node.rel.attributes]
    if isinstance(node, Join):
        return _columns_of(node.left) + _columns_of(node.right)
    if isinstance(node, (Select, Having)):
        return _columns_of(node.child)
    if isinstance(node, GroupAgg):
        cols = []
        for k in node.keys:
            if isinstance(k, Attr):
                cols.append((k.alias, k.name))
            else:
                cols.append(("#key", render_expr(k)))
        for agg in node.aggs:
            cols.append(("#agg", render_expr(agg)))
        return cols
    if isinstance(node, FromSubquery):
        inner = node.child
        from .tree import output_columns
        return [(node.alias, name) for _, name, _ in output_columns(node)]
    raise ExecError(f"no columns for {type(node).__name__}")


def _eval_rows(node: Node, db: Database, env: dict) -> list[dict]:
    if isinstance(node, RelationLeaf):
        out = []
        for stored in db.relation_rows(node.relation):
            out.append({(node.alias, k): vv for k, vv in stored.items()})
        return out
    if isinstance(node, FromSubquery):
        tuples = _eval_result(node.child, db, env)
        from .tree import output_columns
        names = [name for _, name, _ in output_columns(node)]
        out = []
        for t in tuples:
            out.append({(node.alias, names[i]): t[i] for i in range(len(names))})
        return out
    if isinstance(node, Join):
        left = _eval_rows(node.left, db, env)
        right = _eval_rows(node.right, db, env)
        conds: list[Pred] = list(node.conditions) + list(node.filters)
        merged_cols = [c for _, c in node.desugared]
        out = []
        matched_right = [False] * len(right)
        for lrow in left:
            matched = False
            for ridx, rrow in enumerate(right):
                row = {**lrow, **rrow}
                ok = True
                for c in conds:
                    if _eval_pred(c, {**env, **row}, db) is not True:
                        ok = False
                        break
                if ok:
                    matched = True
                    matched_right[ridx] = True
                    out.append(row)
            if not matched and node.kind == "left":
                row = dict(lrow)
                for key in _columns_of(node.right):
                    row[key] = None
                out.append(row)
        if node.kind == "right":
            left_cols = _columns_of(node.left)
            for ridx, rrow in enumerate(right):
                if not matched_right[ridx]:
                    row = dict(rrow)
                    for key in left_cols:
                        row[key] = None
                    # merged USING/NATURAL columns take the preserved side's value
                    for col in merged_cols:
                        for alias, name in left_cols:
                            if name == col:
                                src = [vv for (a2, n2), vv in rrow.items() if n2 == col]
                                row[(alias, name)] = src[0] if src else None
                    out.append(row)
        return out
    if isinstance(node, Select):
        rows = _eval_rows(node.child, db, env)
        return [r for r in rows
                if _eval_pred(node.predicate, {**env, **r}, db) is True]
    if isinstance(node, GroupAgg):
        rows = _eval_rows(node.child, db, env)
        return _eval_group(node, rows, db, env)
    if isinstance(node, Having):
        rows = _eval_rows(node.child, db, env)
        return [r for r in rows
                if _eval_pred(node.predicate, {**env, **r}, db) is True]
    if isinstance(node, Project):
        # projection in FROM position is wrapped by FromSubquery; elsewhere
        # (set-op operands) results are positional
        raise ExecError("Project cannot be evaluated as a row source")
    raise ExecError(f"cannot evaluate {type(node).__name__}")


def _eval_group(node: GroupAgg, rows: list[dict], db: Database,
                env: dict) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for row in rows:
        key = tuple(_freeze(_eval_expr(k, {**env, **row}, db)) for k in node.keys)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    if not node.keys and not groups:
        groups[()] = []
        order.append(())
    out = []
    for key in order:
        members = groups[key]
        grow: dict = {}
        rep = members[0] if members else {}
        for k in node.keys:
            val = _eval_expr(k, {**env, **rep}, db) if members else None
            if isinstance(k, Attr):
                grow[(k.alias, k.name)] = val
            grow[("#key", render_expr(k))] = val
        for agg in node.aggs:
            grow[("#agg", render_expr(agg))] = _eval_agg(agg, members, db, env)
        out.append(grow)
    return out


def _eval_agg(agg: AggExpr, members: list[dict], db: Database, env: dict):
    if agg.func == "count_star":
        return len(members)
    values = []
    for row in members:
        val = _eval_expr(agg.arg, {**env, **row}, db)
        if val is not None:
            values.append(val)
    if agg.distinct:
        seen, dedup = set(), []
        for x in values:
            k = _freeze(x)
            if k not in seen:
                seen.add(k)
                dedup.append(x)
        values = dedup
    if agg.func == "count":
        return len(values)
    if not values:
        return None
    if agg.func == "sum":
        return sum(values)
    if agg.func == "min":
        return min(values)
    if agg.func == "max":
        return max(values)
    if agg.func == "avg":
        total = sum(values)
        if isinstance(total, Fraction) or isinstance(total, int):
            return Fraction(total) / len(values)
        raise ExecError("AVG over non-numeric values")
    raise ExecError(f"unknown aggregate {agg.func}")


def _eval_expr(expr, row: dict, db: Database):
    if isinstance(expr, Attr):
        key = (expr.alias, expr.name)
        if key in row:
            return row[key]
        raise ExecError(f"unbound column {expr.alias}.{expr.name}")
    if isinstance(expr, Const):
        if expr.base == "rational" and not isinstance(expr.value, Fraction) \
                and expr.value is not None:
            return Fraction(expr.value)
        return expr.value
    if isinstance(expr, Param):
        if expr.name not in db.parameters:
            raise ExecError(f"unbound parameter :{expr.name}")
        return db.parameters[expr.name]
    if isinstance(expr, Arith):
        a = _eval_expr(expr.left, row, db)
        b = _eval_expr(expr.right, row, db)
        if a is None or b is None:
            return None
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if expr.op == "/":
            if b == 0:
                raise ExecError("division by zero")
            return Fraction(a) / Fraction(b)
        raise ExecError(f"unknown operator {expr.op}")
    if isinstance(expr, Func):
        args = [_eval_expr(a, row, db) for a in expr.args]
        if args[0] is None:
            return None
        if expr.name == "lower":
            return str(args[0]).lower()
        if expr.name == "upper":
            return str(args[0]).upper()
        if expr.name == "extract_year":
            return int_to_date(int(args[0])).year
        if expr.name == "prefix":
            return str(args[0])[:int(args[1])]
        raise ExecError(f"unknown function {expr.name}")
    if isinstance(expr, AggExpr):
        key = ("#agg", render_expr(expr))
        if key in row:
            return row[key]
        raise ExecError(f"aggregate {render_expr(expr)} outside group context")
    if isinstance(expr, ScalarSub):
        rows = _eval_result(expr.link.subtree, db, dict(row))
        if not rows:
            return None
        if len(rows) > 1:
            raise ExecError("scalar subquery returned more than one row")
        if len(rows[0]) != 1:
            raise ExecError("scalar subquery must project one column")
        return rows[0][0]
    raise ExecError(f"cannot evaluate expression {type(expr).__name__}")


def _compare(a, b, op: str):
    if a is None or b is None:
        return None
    if op == "~=":
        return str(a).lower() == str(b).lower()
    if isinstance(a, str) != isinstance(b, str):
        raise ExecError(f"type mismatch comparing {a!r} and {b!r}")
    if op == "=":
        return a == b
    if op == "<>":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ExecError(f"unknown relop {op}")


def _eval_pred(pred: Pred, row: dict, db: Database):
    if isinstance(pred, TruePred):
        return True
    if isinstance(pred, Contradiction):
        return False
    if isinstance(pred, And):
        result = True
        for p in pred.items:
            val = _eval_pred(p, row, db)
            if val is False:
                return False
            if val is None:
                result = None
        return result
    if isinstance(pred, Or):
        result = False
        for p in pred.items:
            val = _eval_pred(p, row, db)
            if val is True:
                return True
            if val is None:
                result = None
        return result
    if isinstance(pred, Not):
        val = _eval_pred(pred.item, row, db)
        return None if val is None else (not val)
    if isinstance(pred, Comparison):
        return _compare(_eval_expr(pred.left, row, db),
                        _eval_expr(pred.right, row, db), pred.op)
    if isinstance(pred, LikePred):
        val = _eval_expr(pred.expr, row, db)
        if val is None:
            return None
        ci = "ilike" in pred.op
        hit = like_match(pred.pattern, str(val), case_insensitive=ci)
        return (not hit) if pred.op.startswith("not_") else hit
    if isinstance(pred, IsNull):
        val = _eval_expr(pred.expr, row, db)
        return (val is not None) if pred.negated else (val is None)
    if isinstance(pred, Between):
        x = _eval_expr(pred.expr, row, db)
        lo = _eval_expr(pred.lo, row, db)
        hi = _eval_expr(pred.hi, row, db)
        low = _compare(x, lo, ">=")
        high = _compare(x, hi, "<=")
        inside = _and3(low, high)
        return _not3(inside) if pred.negated else inside
    if isinstance(pred, InList):
        x = _eval_expr(pred.expr, row, db)
        result = False
        for vconst in pred.values:
            hit = _compare(x, _eval_expr(vconst, row, db), "=")
            if hit is True:
                result = True
                break
            if hit is None:
                result = None
        return _not3(result) if pred.negated else result
    if isinstance(pred, Exists):
        rows = _eval_result(pred.link.subtree, db, dict(row))
        return (len(rows) == 0) if pred.negated else (len(rows) > 0)
    if isinstance(pred, InSub):
        x = _eval_expr(pred.expr, row, db)
        rows = _eval_result(pred.link.subtree, db, dict(row))
        result = False
        for t in rows:
            hit = _compare(x, t[0], "=")
            if hit is True:
                result = True
                break
            if hit is None:
                result = None
        return _not3(result) if pred.negated else result
    if isinstance(pred, QuantSub):
        x = _eval_expr(pred.expr, row, db)
        rows = _eval_result(pred.link.subtree, db, dict(row))
        if pred.quant == "any":
            result = False
            for t in rows:
                hit = _compare(x, t[0], pred.relop)
                if hit is True:
                    return True
                if hit is None:
                    result = None
            return result
        result = True
        for t in rows:
            hit = _compare(x, t[0], pred.relop)
            if hit is False:
                return False
            if hit is None:
                result = None
        return result
    raise ExecError(f"cannot evaluate predicate {type(pred).__name__}")


def _and3(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _not3(a):
    return None if a is None else (not a)
