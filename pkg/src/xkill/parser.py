"""SQL frontend: parse the supported query class into a resolved QueryTree.

Covers single/multi-block SELECTs (one level of WHERE-subquery nesting),
set operators, WITH/views, and DML statements rewritten to SELECTs.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

from .catalog import Attribute, Schema, date_to_int, encode_value
from .errors import ParseError, UnsupportedFeature
from .lexer import Token, TokenStream, tokenize
from .tree import (AggExpr, And, Arith, Attr, Between, Comparison, Const, Exists,
                   FromSubquery, Func, GroupAgg, Having, InList, InSub, IsNull, Join,
                   LikePred, Node, Not, Or, OrderBy, Param, Pred, Project, ProjItem,
                   QuantSub, QueryTree, RelationLeaf, ScalarSub, Select, SetOp,
                   SubqueryLink, TruePred, iter_atoms, iter_exprs, iter_links,
                   iter_nodes, output_columns, pred_exprs)

AGG_NAMES = {"SUM": "sum", "MIN": "min", "MAX": "max", "AVG": "avg", "COUNT": "count"}
SCALAR_FUNCS = {"LOWER": "lower", "UPPER": "upper"}
CLAUSE_STOPPERS = {"FROM", "WHERE", "GROUP", "HAVING", "ORDER", "UNION", "INTERSECT",
                   "EXCEPT", "ON", "AND", "OR", "NOT", "AS", "JOIN", "INNER", "LEFT",
                   "RIGHT", "FULL", "NATURAL", "CROSS", "USING", "LIMIT", "BY", "ASC",
                   "DESC", "WHEN", "THEN", "ELSE", "END", "IN", "LIKE", "ILIKE",
                   "BETWEEN", "IS", "EXISTS", "ALL", "ANY", "SOME", "SET", "VALUES"}


@dataclass
class Scope:
    """Visible FROM aliases of one block, innermost last in the chain."""
    columns: dict[str, list[tuple[str, Attribute | None]]] = field(default_factory=dict)
    parent: "Scope | None" = None

    def add(self, alias: str, cols: list[tuple[str, Attribute | None]]) -> None:
        if alias in self.columns:
            raise ParseError(f"duplicate alias {alias}")
        self.columns[alias] = cols

    def resolve(self, qualifier: str | None, name: str) -> tuple[str, Attribute | None, bool]:
        """Return (alias, attribute, is_outer)."""
        scope: Scope | None = self
        outer = False
        while scope is not None:
            if qualifier is not None:
                if qualifier in scope.columns:
                    for cname, attr in scope.columns[qualifier]:
                        if cname == name:
                            return qualifier, attr, outer
                    raise ParseError(f"column {qualifier}.{name} does not exist")
            else:
                hits = [(alias, attr) for alias, cols in scope.columns.items()
                        for cname, attr in cols if cname == name]
                if len(hits) >= 1:
                    # NATURAL/USING-merged columns resolve to the leftmost source
                    return hits[0][0], hits[0][1], outer
            scope = scope.parent
            outer = True
        where = f"{qualifier}.{name}" if qualifier else name
        raise ParseError(f"cannot resolve column {where}")


class Parser:
    def __init__(self, text: str, schema: Schema,
                 views: dict[str, tuple[list[str], Node]] | None = None):
        self.ts = TokenStream(tokenize(text))
        self.schema = schema
        self.views = dict(views or {})
        self.parameters: dict[str, Param] = {}
        self.where_depth = 0

    # ---------------------------------------------------------------- statements

    def parse_statement(self) -> QueryTree:
        ts = self.ts
        if ts.at_keyword("WITH"):
            node = self.parse_with()
        elif ts.at_keyword("SELECT") or ts.at_op("("):
            node = self.parse_select(Scope())
        elif ts.at_keyword("INSERT"):
            node = self.parse_insert()
        elif ts.at_keyword("DELETE"):
            node = self.parse_delete()
        elif ts.at_keyword("UPDATE"):
            node = self.parse_update()
        else:
            tok = ts.peek()
            raise ParseError(f"expected a statement, got {tok.value!r}", tok.line, tok.column)
        ts.accept_op(";")
        tok = ts.peek()
        if tok.kind != "EOF":
            raise ParseError(f"trailing input {tok.value!r}", tok.line, tok.column)
        return QueryTree(node, sorted(self.parameters.values(), key=lambda p: p.name))

    def parse_with(self) -> Node:
        self.ts.expect_keyword("WITH")
        if self.ts.accept_keyword("RECURSIVE"):
            raise UnsupportedFeature("recursive WITH")
        while True:
            name = self.ts.expect_ident().value.lower()
            cols: list[str] = []
            if self.ts.at_op("("):
                self.ts.expect_op("(")
                cols.append(self.ts.expect_ident().value.lower())
                while self.ts.accept_op(","):
                    cols.append(self.ts.expect_ident().value.lower())
                self.ts.expect_op(")")
            self.ts.expect_keyword("AS")
            self.ts.expect_op("(")
            if name in self.views:
                raise UnsupportedFeature("recursive WITH", name)
            body = self.parse_select(Scope())
            self.ts.expect_op(")")
            self.views[name] = (cols, body)
            if not self.ts.accept_op(","):
                break
        return self.parse_select(Scope())

    def parse_insert(self) -> Node:
        self.ts.expect_keyword("INSERT")
        self.ts.expect_keyword("INTO")
        self.ts.expect_ident()
        if self.ts.at_op("("):
            # column list
            self.ts.expect_op("(")
            while not self.ts.at_op(")"):
                self.ts.next()
            self.ts.expect_op(")")
        if self.ts.at_keyword("VALUES"):
            raise UnsupportedFeature("INSERT VALUES", "only INSERT ... SELECT is rewritable")
        return self.parse_select(Scope())

    def parse_delete(self) -> Node:
        self.ts.expect_keyword("DELETE")
        self.ts.expect_keyword("FROM")
        return self._single_table_block(project_all=True)

    def parse_update(self) -> Node:
        self.ts.expect_keyword("UPDATE")
        return self._single_table_block(project_all=False)

    def _single_table_block(self, project_all: bool) -> Node:
        name_tok = self.ts.expect_ident()
        rel_name = name_tok.value.lower()
        alias = rel_name
        if self.ts.peek().kind == "IDENT" and not self.ts.at_keyword(*CLAUSE_STOPPERS):
            alias = self.ts.expect_ident().value.lower()
        if not self.schema.has_relation(rel_name):
            raise ParseError(f"unknown relation {rel_name}", name_tok.line, name_tok.column)
        rel = self.schema.relation(rel_name)
        leaf = RelationLeaf(rel_name, alias, rel)
        scope = Scope()
        scope.add(alias, [(a.name, a) for a in rel.attributes])
        items: list[ProjItem] = []
        if project_all:
            for a in rel.attributes:
                items.append(ProjItem(self._mk_attr(alias, a), a.name))
        else:
            self.ts.expect_keyword("SET")
            updated: list[tuple[str, "object"]] = []
            while True:
                col = self.ts.expect_ident().value.lower()
                self.ts.expect_op("=")
                expr = self.parse_expr(scope)
                updated.append((col, expr))
                if not self.ts.accept_op(","):
                    break
            # projection = primary key of the updated table + new value expressions
            for pk in rel.primary_key:
                items.append(ProjItem(self._mk_attr(alias, rel.attribute(pk)), pk))
            for col, expr in updated:
                items.append(ProjItem(expr, col, had_alias=True))
        node: Node = leaf
        if self.ts.accept_keyword("WHERE"):
            node = Select(self.parse_pred(scope), node)
        return Project(items, False, node, star=project_all)

    def _mk_attr(self, alias: str, attr: Attribute) -> Attr:
        a = Attr(alias, attr.name)
        a.alias, a.attribute, a.relation = alias, attr, None
        return a

    # ---------------------------------------------------------------- selects

    def parse_select(self, outer_scope: Scope) -> Node:
        node = self.parse_select_core(outer_scope)
        while True:
            setop = None
            for kw in ("UNION", "INTERSECT", "EXCEPT"):
                if self.ts.accept_keyword(kw):
                    setop = kw.lower()
                    break
            if setop is None:
                break
            all_flag = bool(self.ts.accept_keyword("ALL"))
            right = self.parse_select_core(outer_scope)
            left_cols = output_columns(node)
            right_cols = output_columns(right)
            if len(left_cols) != len(right_cols):
                raise ParseError("set operands have different arity")
            node = SetOp(setop, all_flag, node, right)
        if self.ts.accept_keyword("ORDER"):
            self.ts.expect_keyword("BY")
            keys = []
            scope = getattr(node, "_scope", None) or Scope()
            while True:
                expr = self.parse_expr(scope)
                asc = True
                if self.ts.accept_keyword("DESC"):
                    asc = False
                else:
                    self.ts.accept_keyword("ASC")
                keys.append((expr, asc))
                if not self.ts.accept_op(","):
                    break
            node = OrderBy(keys, node)
        if self.ts.at_keyword("LIMIT", "OFFSET", "FETCH"):
            raise UnsupportedFeature(self.ts.peek().upper)
        return node

    def parse_select_core(self, outer_scope: Scope) -> Node:
        if self.ts.accept_op("("):
            node = self.parse_select(outer_scope)
            self.ts.expect_op(")")
            return node
        self.ts.expect_keyword("SELECT")
        distinct = bool(self.ts.accept_keyword("DISTINCT"))
        self.ts.accept_keyword("ALL")

        # scan ahead: items are parsed after FROM so the scope exists
        item_start = self.ts.pos
        depth = 0
        while True:
            tok = self.ts.peek()
            if tok.kind == "EOF":
                raise ParseError("SELECT without FROM", tok.line, tok.column)
            if tok.kind == "OP" and tok.value == "(":
                depth += 1
            elif tok.kind == "OP" and tok.value == ")":
                depth -= 1
            elif depth == 0 and tok.kind == "IDENT" and tok.upper == "FROM":
                break
            self.ts.next()
        item_end = self.ts.pos
        self.ts.expect_keyword("FROM")

        scope = Scope(parent=outer_scope.parent if not outer_scope.columns else outer_scope)
        if outer_scope.columns:
            scope = Scope(parent=outer_scope)
        from_node = self.parse_from(scope)

        # now parse the select list against the populated scope
        saved = self.ts.pos
        self.ts.pos = item_start
        items, star = self.parse_select_items(scope, stop=item_end)
        self.ts.pos = saved

        where_pred: Pred = TruePred()
        if self.ts.accept_keyword("WHERE"):
            self.where_depth += 0  # depth accounting happens at subquery boundaries
            where_pred = self.parse_pred(scope)
        group_keys: list = []
        if self.ts.accept_keyword("GROUP"):
            self.ts.expect_keyword("BY")
            while True:
                group_keys.append(self.parse_group_key(scope, items))
                if not self.ts.accept_op(","):
                    break
        having_pred = None
        if self.ts.accept_keyword("HAVING"):
            having_pred = self.parse_pred(scope)

        node: Node = from_node
        if not isinstance(where_pred, TruePred):
            node = Select(where_pred, node)

        aggs: list[AggExpr] = []

        def collect_aggs(expr) -> None:
            for e in iter_exprs(expr):
                if isinstance(e, AggExpr) and e not in aggs:
                    aggs.append(e)

        for item in items:
            collect_aggs(item.expr)
        if having_pred is not None:
            for atom in iter_atoms(having_pred):
                for e in pred_exprs(atom):
                    for sub in iter_exprs(e):
                        if isinstance(sub, AggExpr) and sub not in aggs:
                            aggs.append(sub)
        if group_keys or aggs:
            node = GroupAgg(group_keys, aggs, node)
            if having_pred is not None:
                node = Having(having_pred, node)
        elif having_pred is not None:
            node = Having(having_pred, GroupAgg([], [], node))
        proj = Project(items, distinct, node, star=star)
        proj._scope = scope  # for ORDER BY resolution
        return proj

    def parse_select_items(self, scope: Scope, stop: int) -> tuple[list[ProjItem], bool]:
        items: list[ProjItem] = []
        star = False
        while self.ts.pos < stop:
            if self.ts.accept_op("*"):
                star = True
                for alias, cols in scope.columns.items():
                    seen = {i.name for i in items}
                    for cname, attr in cols:
                        if cname in seen:
                            continue
                        a = Attr(alias, cname)
                        a.alias, a.attribute = alias, attr
                        items.append(ProjItem(a, cname))
            elif (self.ts.peek().kind == "IDENT" and self.ts.peek(1).kind == "OP"
                  and self.ts.peek(1).value == "." and self.ts.peek(2).kind == "OP"
                  and self.ts.peek(2).value == "*"):
                alias = self.ts.next().value.lower()
                self.ts.next()
                self.ts.next()
                if alias not in scope.columns:
                    raise ParseError(f"unknown alias {alias}")
                for cname, attr in scope.columns[alias]:
                    a = Attr(alias, cname)
                    a.alias, a.attribute = alias, attr
                    items.append(ProjItem(a, cname))
            else:
                expr = self.parse_expr(scope)
                name = None
                had_alias = False
                if self.ts.accept_keyword("AS"):
                    name = self.ts.expect_ident().value.lower()
                    had_alias = True
                elif (self.ts.pos < stop and self.ts.peek().kind == "IDENT"
                      and not self.ts.at_keyword(*CLAUSE_STOPPERS)):
                    name = self.ts.expect_ident().value.lower()
                    had_alias = True
                if name is None:
                    if isinstance(expr, Attr):
                        name = expr.name
                    elif isinstance(expr, AggExpr):
                        name = expr.func.replace("_star", "")
                    else:
                        name = f"col{len(items) + 1}"
                items.append(ProjItem(expr, name, had_alias))
            if not self.ts.accept_op(","):
                break
        return items, star and len(items) > 0

    def parse_group_key(self, scope: Scope, items: list[ProjItem]):
        # group keys may reference select-list aliases (GROUP BY t)
        tok = self.ts.peek()
        if tok.kind == "IDENT" and self.ts.peek(1).value != ".":
            name = tok.value.lower()
            try:
                scope.resolve(None, name)
            except ParseError:
                for item in items:
                    if item.name == name:
                        self.ts.next()
                        return item.expr
        return self.parse_expr(scope)

    # ---------------------------------------------------------------- FROM clause

    def parse_from(self, scope: Scope) -> Node:
        node = self.parse_table_ref(scope)
        while True:
            if self.ts.accept_op(","):
                right = self.parse_table_ref(scope)
                node = Join("inner", [], [], node, right)
                continue
            natural = bool(self.ts.accept_keyword("NATURAL"))
            kind = None
            if self.ts.accept_keyword("INNER"):
                kind = "inner"
            elif self.ts.accept_keyword("LEFT"):
                self.ts.accept_keyword("OUTER")
                kind = "left"
            elif self.ts.accept_keyword("RIGHT"):
                self.ts.accept_keyword("OUTER")
                kind = "right"
            elif self.ts.at_keyword("FULL"):
                raise UnsupportedFeature("FULL OUTER JOIN")
            elif self.ts.accept_keyword("CROSS"):
                kind = "inner"
            if kind is None and not natural and not self.ts.at_keyword("JOIN"):
                break
            if kind is None:
                kind = "inner"
            self.ts.expect_keyword("JOIN")
            if self.ts.at_keyword("LATERAL"):
                raise UnsupportedFeature("LATERAL")
            right = self.parse_table_ref(scope)
            conditions: list[Comparison] = []
            filters: list[Pred] = []
            desugared: list[tuple[str, str]] = []
            if natural:
                left_cols = {name for _, name, _ in output_columns(node)}
                right_cols = [name for _, name, _ in output_columns(right)]
                common = [c for c in right_cols if c in left_cols]
                for c in common:
                    conditions.append(self._join_eq(node, right, c, scope))
                    desugared.append(("natural", c))
            elif self.ts.accept_keyword("USING"):
                self.ts.expect_op("(")
                while True:
                    c = self.ts.expect_ident().value.lower()
                    conditions.append(self._join_eq(node, right, c, scope))
                    desugared.append(("using", c))
                    if not self.ts.accept_op(","):
                        break
                self.ts.expect_op(")")
            elif self.ts.accept_keyword("ON"):
                if self.ts.accept_op("("):
                    # Postgres-lab shorthand ON(col) acts like USING
                    first = self.ts.peek()
                    lookahead = self.ts.peek(1)
                    if (first.kind == "IDENT" and lookahead.kind == "OP"
                            and lookahead.value in {")", ","}):
                        while True:
                            c = self.ts.expect_ident().value.lower()
                            conditions.append(self._join_eq(node, right, c, scope))
                            desugared.append(("using", c))
                            if not self.ts.accept_op(","):
                                break
                        self.ts.expect_op(")")
                    else:
                        pred = self.parse_pred(scope)
                        self.ts.expect_op(")")
                        conditions, filters = self._split_on_pred(pred)
                else:
                    pred = self.parse_pred(scope)
                    conditions, filters = self._split_on_pred(pred)
            node = Join(kind, conditions, filters, node, right, desugared)
        return node

    def _split_on_pred(self, pred: Pred) -> tuple[list[Comparison], list[Pred]]:
        atoms: list[Pred] = []

        def flatten(p: Pred) -> None:
            if isinstance(p, And):
                for q in p.items:
                    flatten(q)
            elif isinstance(p, (Or,)):
                raise UnsupportedFeature("disjunctive join condition")
            else:
                atoms.append(p)

        flatten(pred)
        conditions, filters = [], []
        for a in atoms:
            if isinstance(a, Comparison) and a.op == "=":
                conditions.append(a)
            else:
                filters.append(a)
        return conditions, filters

    def _join_eq(self, left: Node, right: Node, col: str, scope: Scope) -> Comparison:
        def locate(node: Node) -> tuple[str, Attribute | None]:
            for alias, name, attr in output_columns(node):
                if name == col:
                    return alias or "", attr
            raise ParseError(f"join column {col} not found")

        la, lattr = locate(left)
        ra, rattr = locate(right)
        lhs = Attr(la, col)
        lhs.alias, lhs.attribute = la, lattr
        rhs = Attr(ra, col)
        rhs.alias, rhs.attribute = ra, rattr
        return Comparison(lhs, "=", rhs)

    def parse_table_ref(self, scope: Scope) -> Node:
        if self.ts.accept_op("("):
            inner = self.parse_select(Scope(parent=scope.parent))
            self.ts.expect_op(")")
            self.ts.accept_keyword("AS")
            alias_tok = self.ts.expect_ident()
            alias = alias_tok.value.lower()
            columns: list[str] = []
            if self.ts.at_op("("):
                self.ts.expect_op("(")
                while True:
                    columns.append(self.ts.expect_ident().value.lower())
                    if not self.ts.accept_op(","):
                        break
                self.ts.expect_op(")")
            sub = FromSubquery(alias, inner, columns)
            cols = output_columns(sub)
            scope.add(alias, [(name, attr) for _, name, attr in cols])
            return sub
        name_tok = self.ts.expect_ident()
        name = name_tok.value.lower()
        alias = name
        if self.ts.accept_keyword("AS"):
            alias = self.ts.expect_ident().value.lower()
        elif (self.ts.peek().kind == "IDENT"
              and not self.ts.at_keyword(*CLAUSE_STOPPERS)):
            alias = self.ts.expect_ident().value.lower()
        if name in self.views:
            vcols, vbody = self.views[name]
            sub = FromSubquery(alias, vbody.clone(), list(vcols))
            cols = output_columns(sub)
            scope.add(alias, [(cname, attr) for _, cname, attr in cols])
            return sub
        if not self.schema.has_relation(name):
            raise ParseError(f"unknown relation {name}", name_tok.line, name_tok.column)
        rel = self.schema.relation(name)
        scope.add(alias, [(a.name, a) for a in rel.attributes])
        return RelationLeaf(name, alias, rel)

    # ---------------------------------------------------------------- predicates

    def parse_pred(self, scope: Scope) -> Pred:
        return self.parse_or(scope)

    def parse_or(self, scope: Scope) -> Pred:
        left = self.parse_and(scope)
        items = [left]
        while self.ts.accept_keyword("OR"):
            items.append(self.parse_and(scope))
        return Or(items) if len(items) > 1 else left

    def parse_and(self, scope: Scope) -> Pred:
        left = self.parse_not(scope)
        items = [left]
        while self.ts.accept_keyword("AND"):
            items.append(self.parse_not(scope))
        return And(items) if len(items) > 1 else left

    def parse_not(self, scope: Scope) -> Pred:
        if self.ts.accept_keyword("NOT"):
            inner = self.parse_not(scope)
            if isinstance(inner, Exists):
                inner.negated = not inner.negated
                return inner
            return Not(inner)
        return self.parse_atom(scope)

    def parse_atom(self, scope: Scope) -> Pred:
        if self.ts.at_keyword("EXISTS"):
            self.ts.next()
            self.ts.expect_op("(")
            link = self.parse_subquery(scope, origin="native-exists")
            self.ts.expect_op(")")
            return Exists(link)
        if self.ts.at_op("("):
            # backtrack to disambiguate "(pred)" from "(expr) relop ..."
            save = self.ts.pos
            self.ts.next()
            try:
                pred = self.parse_pred(scope)
                self.ts.expect_op(")")
                nxt = self.ts.peek()
                if not (nxt.kind == "OP" and nxt.value in
                        {"=", "<", ">", "<=", ">=", "<>", "!=", "+", "-", "*", "/"}):
                    return pred
            except (ParseError, UnsupportedFeature):
                pass
            self.ts.pos = save
        left = self.parse_expr(scope)
        return self.parse_pred_tail(scope, left)

    def parse_pred_tail(self, scope: Scope, left) -> Pred:
        negated = bool(self.ts.accept_keyword("NOT"))
        if self.ts.accept_keyword("BETWEEN"):
            lo = self.parse_expr(scope)
            self.ts.expect_keyword("AND")
            hi = self.parse_expr(scope)
            return Between(left, lo, hi, negated)
        if self.ts.at_keyword("LIKE", "ILIKE"):
            op = self.ts.next().value.lower()
            pat_tok = self.ts.next()
            if pat_tok.kind != "STRING":
                raise ParseError("LIKE pattern must be a string literal",
                                 pat_tok.line, pat_tok.column)
            full_op = ("not_" if negated else "") + op
            if self.ts.accept_keyword("ESCAPE"):
                esc = self.ts.next()
                if esc.value != "\\":
                    raise UnsupportedFeature("non-backslash LIKE escape")
            return LikePred(left, full_op, pat_tok.value)
        if self.ts.accept_keyword("IN"):
            self.ts.expect_op("(")
            if self.ts.at_keyword("SELECT", "WITH"):
                link = self.parse_subquery(scope, origin="rewritten-in")
                self.ts.expect_op(")")
                return InSub(left, link, negated)
            values = []
            while True:
                values.append(self.parse_expr(scope))
                if not self.ts.accept_op(","):
                    break
            self.ts.expect_op(")")
            consts = []
            for v in values:
                if not isinstance(v, Const):
                    raise UnsupportedFeature("non-constant IN list")
                consts.append(v)
            return InList(left, consts, negated)
        if negated:
            tok = self.ts.peek()
            raise ParseError(f"expected BETWEEN/LIKE/IN after NOT, got {tok.value!r}",
                             tok.line, tok.column)
        if self.ts.accept_keyword("IS"):
            neg = bool(self.ts.accept_keyword("NOT"))
            self.ts.expect_keyword("NULL")
            return IsNull(left, neg)
        op_tok = self.ts.peek()
        if op_tok.kind == "OP" and op_tok.value in {"=", "<", ">", "<=", ">=", "<>", "!="}:
            self.ts.next()
            op = "<>" if op_tok.value == "!=" else op_tok.value
            if self.ts.at_keyword("ALL", "ANY", "SOME"):
                quant = "all" if self.ts.next().upper == "ALL" else "any"
                self.ts.expect_op("(")
                link = self.parse_subquery(scope, origin=f"rewritten-{quant}")
                self.ts.expect_op(")")
                return QuantSub(left, op, quant, link)
            right = self.parse_expr(scope)
            return Comparison(left, op, right)
        raise ParseError(f"expected a predicate, got {op_tok.value!r}",
                         op_tok.line, op_tok.column)

    def parse_subquery(self, scope: Scope, origin: str) -> SubqueryLink:
        if self.where_depth >= 1:
            raise UnsupportedFeature("nested subquery",
                                     "only a single level of WHERE-clause nesting")
        self.where_depth += 1
        try:
            subtree = self.parse_select(Scope(parent=scope))
        finally:
            self.where_depth -= 1
        link = SubqueryLink(subtree, [], origin)
        link.correlations = collect_correlations(subtree)
        return link

    # ---------------------------------------------------------------- expressions

    def parse_expr(self, scope: Scope):
        left = self.parse_term(scope)
        while self.ts.at_op("+", "-"):
            op = self.ts.next().value
            right = self.parse_term(scope)
            folded = fold_arith(op, left, right)
            left = folded if folded is not None else Arith(op, left, right)
        return left

    def parse_term(self, scope: Scope):
        left = self.parse_factor(scope)
        while self.ts.at_op("*", "/"):
            op = self.ts.next().value
            right = self.parse_factor(scope)
            folded = fold_arith(op, left, right)
            left = folded if folded is not None else Arith(op, left, right)
        return left

    def parse_factor(self, scope: Scope):
        ts = self.ts
        tok = ts.peek()
        if tok.kind == "NUMBER":
            ts.next()
            if "." in tok.value:
                from fractions import Fraction
                return Const(Fraction(tok.value), "rational")
            return Const(int(tok.value), "integer")
        if tok.kind == "STRING":
            ts.next()
            return Const(tok.value, "text")
        if tok.kind == "PARAM":
            ts.next()
            param = self.parameters.get(tok.value)
            if param is None:
                param = Param(tok.value)
                self.parameters[tok.value] = param
            return param
        if tok.kind == "OP" and tok.value == "-":
            ts.next()
            inner = self.parse_factor(scope)
            if isinstance(inner, Const) and inner.base in {"integer", "rational"}:
                return Const(-inner.value, inner.base)
            return Arith("-", Const(0), inner)
        if tok.kind == "OP" and tok.value == "(":
            ts.next()
            if ts.at_keyword("SELECT", "WITH"):
                link = self.parse_subquery(scope, origin="scalar")
                ts.expect_op(")")
                return ScalarSub(link)
            inner = self.parse_expr(scope)
            ts.expect_op(")")
            return inner
        if tok.kind != "IDENT":
            raise ParseError(f"expected an expression, got {tok.value!r}",
                             tok.line, tok.column)
        up = tok.upper
        if up == "NULL":
            ts.next()
            return Const(None, "null")
        if up in {"TRUE", "FALSE"}:
            ts.next()
            return Const(1 if up == "TRUE" else 0, "boolean")
        if up == "CASE":
            raise UnsupportedFeature("CASE expression")
        if up == "CAST":
            raise UnsupportedFeature("CAST")
        if up == "DATE" and ts.peek(1).kind == "STRING":
            ts.next()
            lit = ts.next().value
            return Const(date_to_int(datetime.date.fromisoformat(lit)), "date")
        if up == "TIME" and ts.peek(1).kind == "STRING":
            ts.next()
            lit = ts.next().value
            t = datetime.time.fromisoformat(lit)
            return Const(t.hour * 3600 + t.minute * 60 + t.second, "time")
        if up == "INTERVAL" and ts.peek(1).kind == "STRING":
            ts.next()
            amount = int(ts.next().value)
            unit_tok = ts.expect_ident()
            return Const(amount, "interval_" + unit_tok.value.lower().rstrip("s"))
        if up == "EXTRACT" and ts.peek(1).value == "(":
            ts.next()
            ts.expect_op("(")
            part = ts.expect_ident().upper
            ts.expect_keyword("FROM")
            arg = self.parse_expr(scope)
            ts.expect_op(")")
            if part != "YEAR":
                raise UnsupportedFeature(f"EXTRACT({part})")
            return Func("extract_year", [arg])
        if up == "SUBSTRING" and ts.peek(1).value == "(":
            ts.next()
            ts.expect_op("(")
            arg = self.parse_expr(scope)
            if ts.accept_keyword("FROM"):
                start = self.parse_expr(scope)
                ts.expect_keyword("FOR")
                length = self.parse_expr(scope)
            else:
                ts.expect_op(",")
                start = self.parse_expr(scope)
                ts.expect_op(",")
                length = self.parse_expr(scope)
            ts.expect_op(")")
            if not (isinstance(start, Const) and start.value == 1
                    and isinstance(length, Const)):
                raise UnsupportedFeature("SUBSTRING", "only constant prefixes")
            return Func("prefix", [arg, length])
        if ts.peek(1).kind == "OP" and ts.peek(1).value == "(":
            fname = up
            ts.next()
            ts.expect_op("(")
            if fname in AGG_NAMES:
                if ts.accept_op("*"):
                    ts.expect_op(")")
                    if fname != "COUNT":
                        raise ParseError(f"{fname}(*) is not valid", tok.line, tok.column)
                    return AggExpr("count_star", None)
                distinct = bool(ts.accept_keyword("DISTINCT"))
                arg = self.parse_expr(scope)
                ts.expect_op(")")
                return AggExpr(AGG_NAMES[fname], arg, distinct)
            if fname in SCALAR_FUNCS:
                arg = self.parse_expr(scope)
                ts.expect_op(")")
                return Func(SCALAR_FUNCS[fname], [arg])
            raise UnsupportedFeature(f"function {fname}")
        # plain or qualified column reference
        ts.next()
        qualifier = None
        name = tok.value.lower()
        if ts.at_op(".") and ts.peek(1).kind == "IDENT":
            ts.next()
            qualifier = name
            name = ts.expect_ident().value.lower()
        attr = Attr(qualifier, name)
        alias, attribute, outer = scope.resolve(qualifier, name)
        attr.alias, attr.attribute, attr.outer = alias, attribute, outer
        return attr


def fold_arith(op: str, left, right):
    """Constant folding, including date +/- interval arithmetic."""
    if not (isinstance(left, Const) and isinstance(right, Const)):
        return None
    if left.base == "date" and right.base.startswith("interval_"):
        unit = right.base.split("_", 1)[1]
        sign = 1 if op == "+" else -1
        from .catalog import int_to_date
        d = int_to_date(left.value)
        if unit == "day":
            d = d + datetime.timedelta(days=sign * right.value)
        elif unit in {"month", "year"}:
            months = right.value * (12 if unit == "year" else 1) * sign
            total = d.year * 12 + (d.month - 1) + months
            y, m = divmod(total, 12)
            import calendar
            day = min(d.day, calendar.monthrange(y, m + 1)[1])
            d = datetime.date(y, m + 1, day)
        else:
            raise UnsupportedFeature(f"interval unit {unit}")
        return Const(date_to_int(d), "date")
    if left.base in {"integer", "rational"} and right.base in {"integer", "rational"}:
        from fractions import Fraction
        a, b = Fraction(left.value), Fraction(right.value)
        val = {"+": a + b, "-": a - b, "*": a * b,
               "/": a / b if b else None}[op]
        if val is None:
            return None
        base = "rational" if val.denominator != 1 else "integer"
        return Const(val if base == "rational" else int(val), base)
    return None


def collect_correlations(subtree: Node) -> list[Comparison]:
    """Comparison atoms inside the subquery referencing outer-block attributes."""
    out = []
    for n in iter_nodes(subtree):
        if isinstance(n, Select):
            for atom in iter_atoms(n.predicate):
                if isinstance(atom, Comparison):
                    refs_outer = any(
                        isinstance(e, Attr) and e.outer
                        for side in (atom.left, atom.right)
                        for e in iter_exprs(side))
                    if refs_outer:
                        out.append(atom)
    return out


# --------------------------------------------------------------------------
# Public operations

def parse_query(sql_text: str, schema: Schema,
                views: dict[str, tuple[list[str], Node]] | None = None) -> QueryTree:
    """Parse one SELECT statement into a resolved QueryTree."""
    parser = Parser(sql_text, schema, views)
    if not parser.ts.at_keyword("SELECT", "WITH") and not parser.ts.at_op("("):
        tok = parser.ts.peek()
        raise ParseError(f"expected SELECT, got {tok.value!r}", tok.line, tok.column)
    tree = parser.parse_statement()
    _coerce_constants(tree.root)
    return tree


def rewrite_dml(sql_text: str, schema: Schema,
                views: dict[str, tuple[list[str], Node]] | None = None) -> QueryTree:
    """Rewrite INSERT...SELECT / DELETE / UPDATE into SELECT trees.

    Plain SELECTs pass through unchanged.
    """
    parser = Parser(sql_text, schema, views)
    tree = parser.parse_statement()
    _coerce_constants(tree.root)
    return tree


def expand_views(sql_text: str, schema: Schema,
                 view_sql: dict[str, str]) -> QueryTree:
    """Parse with named views available for expansion (inlined as subqueries)."""
    views = {}
    for name, text in view_sql.items():
        body = parse_query(text, schema)
        views[name.lower()] = ([], body.root)
    return parse_query(sql_text, schema, views)


def _coerce_constants(root: Node) -> None:
    """Align literal types with the attribute they are compared against."""
    def target_of(expr) -> Attribute | None:
        if isinstance(expr, AggExpr):
            # COUNT yields an integer whatever it counts; value aggregates
            # take their argument's type
            if expr.func in {"count", "count_star"}:
                return None
            return target_of(expr.arg) if expr.arg is not None else None
        if isinstance(expr, Func) and expr.name in {"extract_year", "prefix"}:
            return None
        for e in iter_exprs(expr):
            if isinstance(e, AggExpr):
                return target_of(e)
            if isinstance(e, Attr) and e.attribute is not None:
                return e.attribute
        return None

    def coerce(const: Const, attr: Attribute | None) -> None:
        if attr is None or const.value is None:
            return
        if attr.base == "text":
            const.value = str(const.value)
            const.base = "text"
            return
        if attr.base == "rational":
            # keep true (unscaled) values; scaling happens at constraint build
            if const.base == "text" or not isinstance(const.value, (int,)):
                from fractions import Fraction
                const.value = Fraction(str(const.value))
            const.base = "rational"
            return
        if const.base == "text":
            const.value = encode_value(attr, str(const.value))
            const.base = attr.base

    def visit_pred(pred: Pred) -> None:
        for atom in iter_atoms(pred):
            if isinstance(atom, Comparison):
                tgt = target_of(atom.left) or target_of(atom.right)
                for side in (atom.left, atom.right):
                    if isinstance(side, Const):
                        coerce(side, tgt)
            elif isinstance(atom, Between):
                tgt = target_of(atom.expr)
                for side in (atom.lo, atom.hi):
                    if isinstance(side, Const):
                        coerce(side, tgt)
            elif isinstance(atom, InList):
                tgt = target_of(atom.expr)
                for v in atom.values:
                    coerce(v, tgt)
            elif isinstance(atom, (InSub, QuantSub)):
                pass

    for node in iter_nodes(root):
        if isinstance(node, Select):
            visit_pred(node.predicate)
        elif isinstance(node, Having):
            visit_pred(node.predicate)
        elif isinstance(node, Join):
            for f in node.filters:
                visit_pred(f)
    for link in iter_links(root):
        _coerce_constants(link.subtree)
