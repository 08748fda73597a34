"""Source-level rewrites applied before planning, plus DNF conversion.

Two modes share all the connective rewrites (IN/ANY/ALL to EXISTS,
upper/lower elimination, extract-year and prefix folding):

* "plan": BETWEEN becomes the strict range (attr > a AND attr < b), which
  drives boundary datasets; the range intent is kept on the comparisons.
* "exec": BETWEEN becomes the inclusive range, preserving SQL semantics
  for execution-equivalence checks.
"""

from __future__ import annotations

import datetime

from .catalog import date_to_int
from .errors import ClauseExplosion
from .tree import (AggExpr, And, Attr, Between, Comparison, Const, Contradiction,
                   Exists, FromSubquery, Func, GroupAgg, Having, InList, InSub,
                   IsNull, Join, LikePred, NEGATED_RELOP, Node, Not, Or, Pred,
                   Project, QuantSub, QueryTree, Select, SubqueryLink, SWAPPED_RELOP,
                   TruePred, find_block_parts, iter_nodes)


def normalize(tree: QueryTree, mode: str = "plan") -> QueryTree:
    out = tree.clone()
    _normalize_node(out.root, mode)
    return out


def normalize_predicates(tree: QueryTree, mode: str = "plan") -> QueryTree:
    return normalize(tree, mode)


def _normalize_node(node: Node, mode: str) -> None:
    for n in iter_nodes(node):
        if isinstance(n, Select):
            n.predicate = _rewrite(n.predicate, mode)
        elif isinstance(n, Having):
            n.predicate = _rewrite(n.predicate, mode)
        elif isinstance(n, Join):
            n.filters = [_rewrite(f, mode) for f in n.filters]
    # descend into subquery links and from-clause subqueries
    for n in iter_nodes(node):
        if isinstance(n, FromSubquery):
            pass  # already walked by iter_nodes
    from .tree import iter_links
    for link in iter_links(node):
        _normalize_node(link.subtree, mode)


def _rewrite(pred: Pred, mode: str) -> Pred:
    if isinstance(pred, And):
        return And([_rewrite(p, mode) for p in pred.items])
    if isinstance(pred, Or):
        return Or([_rewrite(p, mode) for p in pred.items])
    if isinstance(pred, Not):
        return Not(_rewrite(pred.item, mode))
    if isinstance(pred, Between):
        strict = mode == "plan"
        lo_op = ">" if strict else ">="
        hi_op = "<" if strict else "<="
        lo = Comparison(pred.expr, lo_op, pred.lo, from_between=True)
        hi = Comparison(pred.expr.clone(), hi_op, pred.hi, from_between=True)
        rng: Pred = And([lo, hi])
        if pred.negated:
            rng = Or([Comparison(pred.expr, NEGATED_RELOP[lo_op], pred.lo,
                                 from_between=True),
                      Comparison(pred.expr.clone(), NEGATED_RELOP[hi_op], pred.hi,
                                 from_between=True)])
        return rng
    if isinstance(pred, InList):
        eqs: list[Pred] = [Comparison(pred.expr.clone(), "=", vconst)
                           for vconst in pred.values]
        out: Pred = Or(eqs) if len(eqs) > 1 else eqs[0]
        if pred.negated:
            out = And([Comparison(pred.expr.clone(), "<>", vconst)
                       for vconst in pred.values])
        return _rewrite(out, mode)
    if isinstance(pred, Comparison):
        return _rewrite_comparison(pred)
    if isinstance(pred, LikePred):
        return _rewrite_like(pred)
    if isinstance(pred, InSub):
        member = _projected_expr(pred.link)
        cond = Comparison(pred.expr, "=", member)
        cond.membership_rewrite = True
        _membership_condition(pred.link, cond)
        pred.link.origin = "rewritten-in"
        pred.link.correlations.append(cond)
        return Exists(pred.link, negated=pred.negated)
    if isinstance(pred, QuantSub):
        member = _projected_expr(pred.link)
        if pred.quant == "any":
            cond = Comparison(pred.expr, pred.relop, member)
            cond.membership_rewrite = True
            _membership_condition(pred.link, cond)
            pred.link.origin = "rewritten-any"
            pred.link.correlations.append(cond)
            return Exists(pred.link, negated=False)
        negated_cmp = Comparison(pred.expr, NEGATED_RELOP[pred.relop], member)
        negated_cmp.membership_rewrite = True
        cond = Or([negated_cmp,
                   IsNull(pred.expr.clone()),
                   IsNull(member.clone())])
        cond.membership_rewrite = True
        _membership_condition(pred.link, cond)
        pred.link.origin = "rewritten-all"
        pred.link.correlations.append(negated_cmp)
        return Exists(pred.link, negated=True)
    return pred


def _projected_expr(link: SubqueryLink):
    parts = find_block_parts(link.subtree)
    project = parts.get("project")
    if project is None or not project.items:
        raise ValueError("membership subquery must project one column")
    return project.items[0].expr


def _membership_condition(link: SubqueryLink, cond: Pred) -> Pred:
    """Attach the membership comparison inside the subquery block.

    Aggregate projections turn into HAVING conditions; everything else
    joins the WHERE conjunction.
    """
    parts = find_block_parts(link.subtree)
    project = parts.get("project")
    target = project.items[0].expr if project else None
    is_agg = isinstance(target, AggExpr) or (
        target is not None and any(isinstance(e, AggExpr)
                                   for e in _walk_expr(target)))
    if is_agg or "group" in parts:
        having = parts.get("having")
        if having is not None:
            having.predicate = And([having.predicate, cond])
        else:
            group = parts.get("group")
            if group is None:
                below = parts.get("select") or parts["from"]
                grp = GroupAgg([], [a for a in _walk_expr(target)
                                    if isinstance(a, AggExpr)], below)
                project.child = Having(cond, grp)
            else:
                new_having = Having(cond, group)
                project.child = new_having
        for agg in _walk_expr(cond if is_agg else target):
            if isinstance(agg, AggExpr):
                gparts = find_block_parts(link.subtree)
                group = gparts.get("group")
                if group is not None and not _contains(group.aggs, agg):
                    group.aggs.append(agg)
    else:
        select = parts.get("select")
        if select is not None:
            select.predicate = And([select.predicate, cond])
        else:
            new_select = Select(cond, parts["from"])
            _replace_child(link.subtree, parts["from"], new_select)
    return cond


def _contains(aggs, agg) -> bool:
    from .tree import render_expr
    return any(render_expr(a) == render_expr(agg) for a in aggs)


def _walk_expr(expr):
    from .tree import iter_exprs, pred_exprs, Pred as _P
    if isinstance(expr, _P):
        for atom in _iter_pred_atoms(expr):
            yield from pred_exprs(atom)
    else:
        yield from iter_exprs(expr)


def _iter_pred_atoms(pred):
    from .tree import iter_atoms
    yield from iter_atoms(pred)


def _replace_child(root: Node, old: Node, new: Node) -> None:
    for n in iter_nodes(root):
        for attr_name in ("child", "left", "right"):
            if getattr(n, attr_name, None) is old:
                setattr(n, attr_name, new)
                return


def _rewrite_comparison(pred: Comparison) -> Pred:
    left, right = pred.left, pred.right
    # upper/lower folding on constants
    for side_name in ("left", "right"):
        side = getattr(pred, side_name)
        if isinstance(side, Func) and side.name in {"upper", "lower"} and \
                isinstance(side.args[0], Const):
            const = side.args[0]
            value = str(const.value)
            setattr(pred, side_name,
                    Const(value.upper() if side.name == "upper" else value.lower(),
                          "text"))
    left, right = pred.left, pred.right
    for a, b in ((left, right), (right, left)):
        if isinstance(a, Func) and a.name in {"upper", "lower"}:
            if isinstance(b, Const) and pred.op in {"=", "~="}:
                text = str(b.value)
                bad = any(c.islower() for c in text) if a.name == "upper" \
                    else any(c.isupper() for c in text)
                if bad:
                    return Contradiction(f"{a.name}() compared with mixed-case constant")
                return Comparison(a.args[0], "~=", b)
    # extract-year comparisons fold into date ranges
    for a, b, flip in ((left, right, False), (right, left, True)):
        if isinstance(a, Func) and a.name == "extract_year" and isinstance(b, Const):
            op = SWAPPED_RELOP[pred.op] if flip else pred.op
            return _year_range(a.args[0], op, int(b.value))
    # prefix comparisons fold into LIKE patterns
    for a, b in ((left, right), (right, left)):
        if isinstance(a, Func) and a.name == "prefix" and isinstance(b, Const) \
                and pred.op in {"=", "<>"}:
            k = int(a.args[1].value)
            text = str(b.value)
            if len(text) > k:
                out: Pred = Contradiction("prefix shorter than constant")
            elif len(text) < k:
                out = Comparison(a.args[0], "=", Const(text, "text"))
            else:
                escaped = "".join("\\" + c if c in "%_\\" else c for c in text)
                out = LikePred(a.args[0], "like", escaped + "%")
            if pred.op == "<>":
                out = Not(out)
            return out
    return pred


def _year_range(expr, op: str, year: int) -> Pred:
    first = Const(date_to_int(datetime.date(year, 1, 1)), "date")
    last = Const(date_to_int(datetime.date(year, 12, 31)), "date")
    if op == "=":
        return And([Comparison(expr, ">=", first), Comparison(expr.clone(), "<=", last)])
    if op == "<>":
        return Or([Comparison(expr, "<", first), Comparison(expr.clone(), ">", last)])
    if op == "<":
        return Comparison(expr, "<", first)
    if op == "<=":
        return Comparison(expr, "<=", last)
    if op == ">":
        return Comparison(expr, ">", last)
    if op == ">=":
        return Comparison(expr, ">=", first)
    raise ValueError(op)


def _rewrite_like(pred: LikePred) -> Pred:
    expr = pred.expr
    if isinstance(expr, Func) and expr.name in {"upper", "lower"}:
        op = pred.op
        if "ilike" not in op:
            # upper(S) LIKE p: a mixed-case pattern can never match
            letters = [c for c in pred.pattern if c.isalpha()]
            bad = any(c.islower() for c in letters) if expr.name == "upper" \
                else any(c.isupper() for c in letters)
            if bad:
                out: Pred = Contradiction(f"{expr.name}() LIKE mixed-case pattern")
                return Not(out) if op.startswith("not_") else out
            op = op.replace("like", "ilike")
        return LikePred(expr.args[0], op, pred.pattern)
    return pred


# --------------------------------------------------------------------------
# DNF

def negate_atom(atom: Pred) -> Pred:
    if isinstance(atom, Comparison):
        if atom.op == "~=":
            return Not(atom)
        return Comparison(atom.left, NEGATED_RELOP[atom.op], atom.right,
                          atom.from_between)
    if isinstance(atom, LikePred):
        flip = {"like": "not_like", "not_like": "like",
                "ilike": "not_ilike", "not_ilike": "ilike"}[atom.op]
        return LikePred(atom.expr, flip, atom.pattern)
    if isinstance(atom, IsNull):
        return IsNull(atom.expr, not atom.negated)
    if isinstance(atom, Exists):
        return Exists(atom.link, not atom.negated)
    if isinstance(atom, TruePred):
        return Contradiction("negated TRUE")
    if isinstance(atom, Contradiction):
        return TruePred()
    if isinstance(atom, Not):
        return atom.item
    return Not(atom)


def to_dnf(pred: Pred, cap: int = 64) -> list[list[Pred]]:
    """Disjunctive normal form as a list of conjunct clauses (source order)."""

    def nnf(p: Pred, neg: bool) -> Pred:
        if isinstance(p, And):
            items = [nnf(x, neg) for x in p.items]
            return Or(items) if neg else And(items)
        if isinstance(p, Or):
            items = [nnf(x, neg) for x in p.items]
            return And(items) if neg else Or(items)
        if isinstance(p, Not):
            return nnf(p.item, not neg)
        return negate_atom(p) if neg else p

    def expand(p: Pred) -> list[list[Pred]]:
        if isinstance(p, And):
            clauses: list[list[Pred]] = [[]]
            for item in p.items:
                sub = expand(item)
                new: list[list[Pred]] = []
                for left in clauses:
                    for right in sub:
                        new.append(left + right)
                        if len(new) > cap:
                            raise ClauseExplosion(
                                f"DNF exceeds {cap} clauses")
                clauses = new
            return clauses
        if isinstance(p, Or):
            out: list[list[Pred]] = []
            for item in p.items:
                out.extend(expand(item))
                if len(out) > cap:
                    raise ClauseExplosion(f"DNF exceeds {cap} clauses")
            return out
        if isinstance(p, TruePred):
            return [[]]
        if isinstance(p, Contradiction):
            return []
        return [[p]]

    clauses = expand(nnf(pred, False))
    # drop clauses containing an explicit contradiction
    return [c for c in clauses if not any(isinstance(a, Contradiction) for a in c)]
