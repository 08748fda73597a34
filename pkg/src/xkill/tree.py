"""Algebraic query tree: expressions, predicates, operator nodes, SQL rendering.

Nodes use identity equality (they carry resolution state and get tagged by
later passes); use clone() to derive modified trees.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .catalog import Attribute, Relation

RELOPS = ("=", "<>", "<", "<=", ">", ">=")
LIKEOPS = ("like", "ilike", "not_like", "not_ilike")
AGG_FUNCS = ("sum", "min", "max", "avg", "count", "count_star")
SETOPS = ("union", "intersect", "except")
JOIN_KINDS = ("inner", "left", "right")

NEGATED_RELOP = {"=": "<>", "<>": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
SWAPPED_RELOP = {"=": "=", "<>": "<>", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


# --------------------------------------------------------------------------
# Expressions

class Expr:
    def clone(self) -> "Expr":
        return copy.deepcopy(self)


@dataclass(eq=False)
class Attr(Expr):
    qualifier: Optional[str]
    name: str
    # filled by the resolver:
    alias: Optional[str] = None          # source alias within the block
    attribute: Optional[Attribute] = None
    relation: Optional[str] = None       # base relation name, when traceable
    outer: bool = False                  # resolved in an enclosing block

    @property
    def key(self) -> tuple[str, str]:
        return (self.alias or self.qualifier or "", self.name)


@dataclass(eq=False)
class Const(Expr):
    value: object          # int for numeric/temporal, str for text, None for NULL
    base: str = "integer"


@dataclass(eq=False)
class Param(Expr):
    name: str
    base: str = "integer"


@dataclass(eq=False)
class Arith(Expr):
    op: str                # + - * /
    left: Expr
    right: Expr


@dataclass(eq=False)
class Func(Expr):
    """Supported scalar functions: extract_year, lower, upper, prefix."""
    name: str
    args: list[Expr]


@dataclass(eq=False)
class AggExpr(Expr):
    func: str              # one of AGG_FUNCS
    arg: Optional[Expr]    # None for count_star
    distinct: bool = False


@dataclass(eq=False)
class ScalarSub(Expr):
    link: "SubqueryLink"


# --------------------------------------------------------------------------
# Predicates

class Pred:
    def clone(self) -> "Pred":
        return copy.deepcopy(self)


@dataclass(eq=False)
class TruePred(Pred):
    pass


@dataclass(eq=False)
class Contradiction(Pred):
    reason: str = ""


@dataclass(eq=False)
class And(Pred):
    items: list[Pred]


@dataclass(eq=False)
class Or(Pred):
    items: list[Pred]


@dataclass(eq=False)
class Not(Pred):
    item: Pred


@dataclass(eq=False)
class Comparison(Pred):
    left: Expr
    op: str                # RELOPS or "~=" (case-insensitive text equality)
    right: Expr
    from_between: bool = False


@dataclass(eq=False)
class LikePred(Pred):
    expr: Expr
    op: str                # LIKEOPS
    pattern: str


@dataclass(eq=False)
class IsNull(Pred):
    expr: Expr
    negated: bool = False


@dataclass(eq=False)
class Between(Pred):
    expr: Expr
    lo: Expr
    hi: Expr
    negated: bool = False


@dataclass(eq=False)
class InList(Pred):
    expr: Expr
    values: list[Const]
    negated: bool = False


@dataclass(eq=False)
class Exists(Pred):
    link: "SubqueryLink"
    negated: bool = False


@dataclass(eq=False)
class InSub(Pred):
    expr: Expr
    link: "SubqueryLink"
    negated: bool = False


@dataclass(eq=False)
class QuantSub(Pred):
    expr: Expr
    relop: str
    quant: str             # "any" | "all"
    link: "SubqueryLink"


@dataclass(eq=False)
class SubqueryLink:
    subtree: "Node"
    correlations: list[Comparison] = field(default_factory=list)
    origin: str = "native-exists"   # native-exists | rewritten-in | rewritten-any |
                                    # rewritten-all | scalar


# --------------------------------------------------------------------------
# Operator nodes

class Node:
    def clone(self) -> "Node":
        return copy.deepcopy(self)

    def children(self) -> list["Node"]:
        return []


@dataclass(eq=False)
class RelationLeaf(Node):
    relation: str
    alias: str
    rel: Optional[Relation] = None


@dataclass(eq=False)
class Join(Node):
    kind: str                       # JOIN_KINDS
    conditions: list[Comparison]    # equality atoms
    filters: list[Pred]             # residual non-equality ON atoms
    left: Node
    right: Node
    desugared: list[tuple[str, str]] = field(default_factory=list)  # NATURAL/USING column names

    def children(self):
        return [self.left, self.right]


@dataclass(eq=False)
class Select(Node):
    predicate: Pred
    child: Node

    def children(self):
        return [self.child]


@dataclass(eq=False)
class ProjItem:
    expr: Expr
    name: str
    had_alias: bool = False


@dataclass(eq=False)
class Project(Node):
    items: list[ProjItem]
    distinct: bool
    child: Node
    star: bool = False

    def children(self):
        return [self.child]


@dataclass(eq=False)
class GroupAgg(Node):
    keys: list[Expr]
    aggs: list[AggExpr]
    child: Node

    def children(self):
        return [self.child]


@dataclass(eq=False)
class Having(Node):
    predicate: Pred
    child: Node

    def children(self):
        return [self.child]


@dataclass(eq=False)
class SetOp(Node):
    op: str                 # SETOPS
    all: bool
    left: Node
    right: Node

    def children(self):
        return [self.left, self.right]


@dataclass(eq=False)
class OrderBy(Node):
    keys: list[tuple[Expr, bool]]   # (expr, ascending)
    child: Node

    def children(self):
        return [self.child]


@dataclass(eq=False)
class FromSubquery(Node):
    alias: str
    child: Node
    columns: list[str] = field(default_factory=list)

    def children(self):
        return [self.child]


@dataclass(eq=False)
class QueryTree:
    root: Node
    parameters: list[Param] = field(default_factory=list)

    def clone(self) -> "QueryTree":
        return copy.deepcopy(self)


# --------------------------------------------------------------------------
# Traversal helpers

def iter_nodes(node: Node) -> Iterator[Node]:
    """Pre-order walk of one query block tree (does not enter subquery links)."""
    yield node
    for child in node.children():
        yield from iter_nodes(child)


def iter_preds(pred: Pred) -> Iterator[Pred]:
    yield pred
    if isinstance(pred, And) or isinstance(pred, Or):
        for p in pred.items:
            yield from iter_preds(p)
    elif isinstance(pred, Not):
        yield from iter_preds(pred.item)


def iter_atoms(pred: Pred) -> Iterator[Pred]:
    for p in iter_preds(pred):
        if not isinstance(p, (And, Or, Not, TruePred)):
            yield p


def iter_exprs(expr: Expr) -> Iterator[Expr]:
    yield expr
    if isinstance(expr, Arith):
        yield from iter_exprs(expr.left)
        yield from iter_exprs(expr.right)
    elif isinstance(expr, Func):
        for a in expr.args:
            yield from iter_exprs(a)
    elif isinstance(expr, AggExpr) and expr.arg is not None:
        yield from iter_exprs(expr.arg)


def pred_exprs(pred: Pred) -> Iterator[Expr]:
    if isinstance(pred, Comparison):
        yield from iter_exprs(pred.left)
        yield from iter_exprs(pred.right)
    elif isinstance(pred, LikePred):
        yield from iter_exprs(pred.expr)
    elif isinstance(pred, IsNull):
        yield from iter_exprs(pred.expr)
    elif isinstance(pred, Between):
        yield from iter_exprs(pred.expr)
        yield from iter_exprs(pred.lo)
        yield from iter_exprs(pred.hi)
    elif isinstance(pred, InList):
        yield from iter_exprs(pred.expr)
    elif isinstance(pred, (InSub, QuantSub)):
        yield from iter_exprs(pred.expr)


def iter_links(node: Node) -> Iterator[SubqueryLink]:
    """All subquery links reachable from predicates of this block."""
    for n in iter_nodes(node):
        preds: list[Pred] = []
        if isinstance(n, Select):
            preds.append(n.predicate)
        elif isinstance(n, Having):
            preds.append(n.predicate)
        elif isinstance(n, Join):
            preds.extend(n.filters)
        for p in preds:
            for atom in iter_atoms(p):
                if isinstance(atom, (Exists, InSub)):
                    yield atom.link
                elif isinstance(atom, QuantSub):
                    yield atom.link
                elif isinstance(atom, Comparison):
                    for e in (atom.left, atom.right):
                        for sub in iter_exprs(e):
                            if isinstance(sub, ScalarSub):
                                yield sub.link


def relation_leaves(node: Node) -> list[RelationLeaf]:
    return [n for n in iter_nodes(node) if isinstance(n, RelationLeaf)]


def find_block_parts(node: Node) -> dict[str, Node]:
    """Decompose one block: orderby/project/having/group/select/from."""
    parts: dict[str, Node] = {}
    cur = node
    if isinstance(cur, OrderBy):
        parts["orderby"] = cur
        cur = cur.child
    if isinstance(cur, Project):
        parts["project"] = cur
        cur = cur.child
    if isinstance(cur, Having):
        parts["having"] = cur
        cur = cur.child
    if isinstance(cur, GroupAgg):
        parts["group"] = cur
        cur = cur.child
    if isinstance(cur, Select):
        parts["select"] = cur
        cur = cur.child
    parts["from"] = cur
    return parts


# --------------------------------------------------------------------------
# Output schema

def output_columns(node: Node) -> list[tuple[Optional[str], str, Optional[Attribute]]]:
    """(alias, column name, attribute metadata) triples in output order."""
    if isinstance(node, RelationLeaf):
        return [(node.alias, a.name, a) for a in node.rel.attributes]
    if isinstance(node, Join):
        cols = output_columns(node.left) + output_columns(node.right)
        merged = {name for _, name in node.desugared}
        if merged:
            seen: set[str] = set()
            out = []
            for alias, name, attr in cols:
                if name in merged:
                    if name in seen:
                        continue
                    seen.add(name)
                out.append((alias, name, attr))
            return out
        return cols
    if isinstance(node, (Select, Having, OrderBy)):
        return output_columns(node.child)
    if isinstance(node, GroupAgg):
        out = []
        for k in node.keys:
            if isinstance(k, Attr):
                out.append((k.alias, k.name, k.attribute))
            else:
                out.append((None, render_expr(k), None))
        for agg in node.aggs:
            out.append((None, render_expr(agg), None))
        return out
    if isinstance(node, Project):
        out = []
        for item in node.items:
            attr = item.expr.attribute if isinstance(item.expr, Attr) else None
            out.append((None, item.name, attr))
        return out
    if isinstance(node, SetOp):
        return output_columns(node.left)
    if isinstance(node, FromSubquery):
        inner = output_columns(node.child)
        names = node.columns or [name for _, name, _ in inner]
        return [(node.alias, names[i], inner[i][2] if i < len(inner) else None)
                for i in range(len(names))]
    raise TypeError(f"no output schema for {type(node).__name__}")


# --------------------------------------------------------------------------
# SQL rendering

def render_expr(expr: Expr) -> str:
    if isinstance(expr, Attr):
        q = expr.alias or expr.qualifier
        return f"{q}.{expr.name}" if q else expr.name
    if isinstance(expr, Const):
        if expr.value is None:
            return "NULL"
        if expr.base == "text":
            return "'" + str(expr.value).replace("'", "''") + "'"
        return str(expr.value)
    if isinstance(expr, Param):
        return f":{expr.name}"
    if isinstance(expr, Arith):
        return f"({render_expr(expr.left)} {expr.op} {render_expr(expr.right)})"
    if isinstance(expr, Func):
        return f"{expr.name}({', '.join(render_expr(a) for a in expr.args)})"
    if isinstance(expr, AggExpr):
        if expr.func == "count_star":
            return "COUNT(*)"
        inner = ("DISTINCT " if expr.distinct else "") + render_expr(expr.arg)
        return f"{expr.func.upper()}({inner})"
    if isinstance(expr, ScalarSub):
        return f"({render_sql(expr.link.subtree)})"
    raise TypeError(f"cannot render {type(expr).__name__}")


def render_pred(pred: Pred) -> str:
    if isinstance(pred, TruePred):
        return "TRUE"
    if isinstance(pred, Contradiction):
        return "FALSE"
    if isinstance(pred, And):
        return "(" + " AND ".join(render_pred(p) for p in pred.items) + ")"
    if isinstance(pred, Or):
        return "(" + " OR ".join(render_pred(p) for p in pred.items) + ")"
    if isinstance(pred, Not):
        return f"NOT ({render_pred(pred.item)})"
    if isinstance(pred, Comparison):
        if pred.op == "~=":
            return (f"lower({render_expr(pred.left)}) = lower({render_expr(pred.right)})")
        return f"{render_expr(pred.left)} {pred.op} {render_expr(pred.right)}"
    if isinstance(pred, LikePred):
        op = {"like": "LIKE", "ilike": "ILIKE",
              "not_like": "NOT LIKE", "not_ilike": "NOT ILIKE"}[pred.op]
        pat = pred.pattern.replace("'", "''")
        return f"{render_expr(pred.expr)} {op} '{pat}'"
    if isinstance(pred, IsNull):
        return f"{render_expr(pred.expr)} IS {'NOT ' if pred.negated else ''}NULL"
    if isinstance(pred, Between):
        return (f"{render_expr(pred.expr)} {'NOT ' if pred.negated else ''}BETWEEN "
                f"{render_expr(pred.lo)} AND {render_expr(pred.hi)}")
    if isinstance(pred, InList):
        vals = ", ".join(render_expr(v) for v in pred.values)
        return f"{render_expr(pred.expr)} {'NOT ' if pred.negated else ''}IN ({vals})"
    if isinstance(pred, Exists):
        return f"{'NOT ' if pred.negated else ''}EXISTS ({render_sql(pred.link.subtree)})"
    if isinstance(pred, InSub):
        return (f"{render_expr(pred.expr)} {'NOT ' if pred.negated else ''}IN "
                f"({render_sql(pred.link.subtree)})")
    if isinstance(pred, QuantSub):
        return (f"{render_expr(pred.expr)} {pred.relop} {pred.quant.upper()} "
                f"({render_sql(pred.link.subtree)})")
    raise TypeError(f"cannot render {type(pred).__name__}")


def _render_from(node: Node) -> str:
    if isinstance(node, RelationLeaf):
        if node.alias != node.relation:
            return f"{node.relation} {node.alias}"
        return node.relation
    if isinstance(node, Join):
        kw = {"inner": "INNER JOIN", "left": "LEFT OUTER JOIN",
              "right": "RIGHT OUTER JOIN"}[node.kind]
        conds = [render_pred(c) for c in node.conditions] + \
                [render_pred(f) for f in node.filters]
        on = " ON (" + " AND ".join(conds) + ")" if conds else ""
        return f"{_render_from(node.left)} {kw} {_render_from(node.right)}{on}"
    if isinstance(node, FromSubquery):
        cols = f" ({', '.join(node.columns)})" if node.columns else ""
        return f"({render_sql(node.child)}) AS {node.alias}{cols}"
    # degenerate: a full block in FROM position
    return f"({render_sql(node)})"


def render_sql(node: Node) -> str:
    if isinstance(node, SetOp):
        op = node.op.upper() + (" ALL" if node.all else "")
        return f"({render_sql(node.left)}) {op} ({render_sql(node.right)})"
    if isinstance(node, OrderBy):
        keys = ", ".join(render_expr(e) + ("" if asc else " DESC") for e, asc in node.keys)
        return f"{render_sql(node.child)} ORDER BY {keys}"

    parts = find_block_parts(node)
    project = parts.get("project")
    if project is None:
        # bare algebra fragment: materialize as SELECT *
        sel = "*"
        distinct = ""
    else:
        distinct = "DISTINCT " if project.distinct else ""
        if project.star:
            sel = "*"
        else:
            rendered = []
            for item in project.items:
                txt = render_expr(item.expr)
                if item.had_alias:
                    txt += f" AS {item.name}"
                rendered.append(txt)
            sel = ", ".join(rendered)
    sql = f"SELECT {distinct}{sel} FROM {_render_from(parts['from'])}"
    select = parts.get("select")
    if select is not None and not isinstance(select.predicate, TruePred):
        sql += f" WHERE {render_pred(select.predicate)}"
    group = parts.get("group")
    if group is not None and group.keys:
        sql += " GROUP BY " + ", ".join(render_expr(k) for k in group.keys)
    having = parts.get("having")
    if having is not None:
        sql += f" HAVING {render_pred(having.predicate)}"
    return sql
