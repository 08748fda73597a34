"""Constrained aggregation: estimate group sizes, pick per-relation counts.

The estimate iterates candidate group sizes 1..MAX_TUPLES, checking a
small arithmetic system (per-attribute min/max/sum/avg bounds, domain
bounds, selection-derived bounds, the aggregation constraints) through
the solver and keeping the smallest satisfiable size. Cardinalities are
then assigned via the join-graph heuristic with validation, retrying
roots and finally falling back to exhaustive {1,n} search.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .analysis import (AttributeInference, BlockInfo, CardinalityAssignment,
                       add_inferred_edges, assign_cardinalities,
                       build_equivalence_classes, collect_block_info,
                       infer_attribute_properties)
from .build import GoalBuilder, Occurrence
from .catalog import Attribute, Relation
from .errors import UnsupportedFeature
from .normalize import to_dnf
from .script import ConstraintScript, conj, n, v
from .tree import (AggExpr, Attr, Comparison, Const, FromSubquery, GroupAgg,
                   Having, Join, Node, Param, Pred, Project, RelationLeaf,
                   Select, TruePred, find_block_parts, iter_atoms, iter_exprs,
                   output_columns, render_expr)


@dataclass
class AggConstraint:
    agg: AggExpr
    op: str                      # relop with the aggregate on the left
    rhs: object                  # Const | Attr | Param

    def __repr__(self):
        return f"{render_expr(self.agg)} {self.op} {render_expr(self.rhs)}"


@dataclass
class GroupEstimate:
    group_size: int
    needs_n: set[str]            # aliases whose relation must hold n tuples


def pseudo_occurrences(root: Node) -> dict[str, Occurrence]:
    """Alias -> unallocated occurrence map for pre-allocation analysis.

    From-clause subqueries become pseudo relations whose unique sets are
    the inner group keys (grouped outputs are unique on their keys).
    """
    parts = find_block_parts(root)
    out: dict[str, Occurrence] = {}

    def walk(node: Node) -> None:
        if isinstance(node, RelationLeaf):
            occ = Occurrence(node.alias, node.relation, node.rel, node.alias)
            out[node.alias] = occ
        elif isinstance(node, Join):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, FromSubquery):
            cols = output_columns(node)
            attrs = []
            for _, name, attr in cols:
                attrs.append(attr if attr is not None and attr.name == name
                             else Attribute(name, attr.base if attr else "integer",
                                            True, attr.domain if attr else None,
                                            attr.scale if attr else 0))
            inner_parts = find_block_parts(node.child)
            group = inner_parts.get("group")
            keys: tuple[str, ...] = ()
            if group is not None:
                names = []
                project = inner_parts.get("project")
                items = {render_expr(i.expr): (node.columns[j] if j < len(node.columns)
                                               else i.name)
                         for j, i in enumerate(project.items)} if project else {}
                for key in group.keys:
                    name = items.get(render_expr(key))
                    if name is None:
                        break
                    names.append(name)
                else:
                    keys = tuple(names)
            rel = Relation(node.alias, tuple(attrs), (),
                           (keys,) if keys else ())
            out[node.alias] = Occurrence(node.alias, node.alias, rel, node.alias)

    walk(parts["from"])
    return out


def collect_agg_constraints(having: Having | None,
                            scalar_constraint=None,
                            having_modes: dict[int, object] | None = None
                            ) -> list[AggConstraint]:
    out: list[AggConstraint] = []
    having_modes = having_modes or {}

    def add(atom: Comparison) -> None:
        from .tree import SWAPPED_RELOP, NEGATED_RELOP
        left, right, op = atom.left, atom.right, atom.op
        mode = having_modes.get(id(atom))
        if mode in {"gt", "lt", "eq"}:
            op = {"gt": ">", "lt": "<", "eq": "="}[mode]
        elif mode == "false":
            op = NEGATED_RELOP.get(op, op)
        l_agg = isinstance(left, AggExpr)
        r_agg = isinstance(right, AggExpr)
        if l_agg and r_agg:
            raise UnsupportedFeature("aggregate compared with aggregate")
        if r_agg:
            left, right, op = right, left, SWAPPED_RELOP.get(op, op)
        if isinstance(left, AggExpr):
            out.append(AggConstraint(left, op, right))

    if having is not None:
        for atom in iter_atoms(having.predicate):
            if isinstance(atom, Comparison):
                from .tree import Or
                add(atom)
    if scalar_constraint is not None:
        target, op, outer_expr = scalar_constraint
        from .tree import SWAPPED_RELOP
        if isinstance(target, AggExpr):
            out.append(AggConstraint(target, SWAPPED_RELOP.get(op, op), outer_expr))
    return out


def _agg_attr(agg: AggExpr) -> Attr | None:
    if agg.arg is None:
        return None
    for sub in iter_exprs(agg.arg):
        if isinstance(sub, Attr):
            return sub
    return None


def _selection_bounds(attr: Attr, clause: list[Pred]) -> list[tuple[str, Fraction]]:
    """Constant bounds a clause imposes on one attribute."""
    bounds = []
    for atom in clause:
        if not isinstance(atom, Comparison):
            continue
        from .tree import SWAPPED_RELOP
        left, right, op = atom.left, atom.right, atom.op
        if isinstance(right, Attr) and isinstance(left, Const):
            left, right, op = right, left, SWAPPED_RELOP[op]
        if isinstance(left, Attr) and isinstance(right, Const) and \
                left.alias == attr.alias and left.name == attr.name and \
                right.value is not None and not isinstance(right.value, str):
            bounds.append((op, Fraction(right.value)))
    return bounds


def estimate_group_count(builder: GoalBuilder, constraints: list[AggConstraint],
                         clause: list[Pred], inference: AttributeInference,
                         occs: dict[str, Occurrence]) -> GroupEstimate:
    """Smallest group size for which the arithmetic system is satisfiable."""
    from .solver import solve

    config = builder.config
    if not constraints:
        return GroupEstimate(1, set())

    def probe(size: int, force_single: str | None = None) -> bool:
        script = ConstraintScript()
        script.metadata.update({"tag": "estimate", "goal_id": "estimate",
                                "notes": {}, "parameters": {}})
        made: dict[str, tuple] = {}

        def attr_vars(attr: Attr) -> tuple:
            key = f"{attr.alias}_{attr.name}"
            if key in made:
                return made[key]
            attribute = attr.attribute
            scale = 10 ** attribute.scale if attribute else 1
            lo = Fraction(attribute.domain.lo, scale) if attribute and \
                attribute.domain else Fraction(config.default_int_domain[0])
            hi = Fraction(attribute.domain.hi, scale) if attribute and \
                attribute.domain else Fraction(config.default_int_domain[1])
            names = {}
            for stem in ("min", "max", "sum"):
                name = f"{stem}_{key}"
                script.declare(name, "Real")
                names[stem] = v(name)
            script.add((">=", names["min"], n(lo)))
            script.add(("<=", names["max"], n(hi)))
            script.add(("<=", names["min"], names["max"]))
            for op, bound in _selection_bounds(attr, clause):
                if op in {"<", "<=", "="}:
                    script.add((op if op != "=" else "<=", names["max"], n(bound)))
                if op in {">", ">=", "="}:
                    script.add((op if op != "=" else ">=", names["min"], n(bound)))
            # sum bounds from per-tuple bounds
            script.add(("<=", names["sum"], ("*", n(size), names["max"])))
            script.add((">=", names["sum"], ("*", n(size), names["min"])))
            unique = _is_unique_in_group(attr, inference, occs)
            made[key] = (names, unique, attribute)
            return made[key]

        for c in constraints:
            agg = c.agg
            attr = _agg_attr(agg)
            is_text = attr is not None and attr.attribute is not None and \
                attr.attribute.is_text
            if is_text and agg.func not in {"count", "count_star"}:
                raise UnsupportedFeature(f"{agg.func} over a text attribute")
            names = None
            unique = agg.distinct
            if attr is not None and not is_text:
                names, inferred_unique, attribute = attr_vars(attr)
                unique = unique or inferred_unique
                grain = Fraction(1, 10 ** attribute.scale) if attribute else \
                    Fraction(1)
                if unique and size > 1:
                    pad = Fraction(size * (size - 1), 2) * grain
                    script.add((">=", names["sum"],
                                ("+", ("*", n(size), names["min"]), n(pad))))
                    script.add(("<=", names["sum"],
                                ("-", ("*", n(size), names["max"]), n(pad))))
            term = None
            if agg.func in {"count", "count_star"}:
                count_val = size
                term = n(count_val)
            elif agg.func == "sum":
                term = names["sum"]
            elif agg.func == "min":
                term = names["min"]
            elif agg.func == "max":
                term = names["max"]
            elif agg.func == "avg":
                term = ("*", n(Fraction(1, size)), names["sum"])
            else:
                raise UnsupportedFeature(f"aggregate {agg.func}")
            rhs = c.rhs
            if isinstance(rhs, Const):
                rhs_term = n(rhs.value)
            elif isinstance(rhs, Attr):
                rname = f"rhs_{rhs.alias}_{rhs.name}"
                if rname not in script.variables:
                    script.declare(rname, "Real")
                    attribute = rhs.attribute
                    if attribute is not None and attribute.domain is not None:
                        scale = 10 ** attribute.scale
                        script.add((">=", v(rname),
                                    n(Fraction(attribute.domain.lo, scale))))
                        script.add(("<=", v(rname),
                                    n(Fraction(attribute.domain.hi, scale))))
                rhs_term = v(rname)
            elif isinstance(rhs, Param):
                rname = f"rhs_param_{rhs.name}"
                if rname not in script.variables:
                    script.declare(rname, "Real")
                    lo, hi = config.default_int_domain
                    script.add((">=", v(rname), n(lo)))
                    script.add(("<=", v(rname), n(hi)))
                rhs_term = v(rname)
            else:
                raise UnsupportedFeature("aggregate compared with expression")
            if c.op == "<>":
                from .script import neg
                script.add(neg(("=", term, rhs_term)))
            else:
                script.add((c.op, term, rhs_term))
        if force_single is not None:
            entry = made.get(force_single)
            if entry is not None:
                names = entry[0]
                script.add(("=", names["min"], names["max"]))
        verdict = solve(script, timeout=5.0, config=config)
        return verdict.verdict == "sat"

    chosen = None
    for size in range(1, config.max_tuples + 1):
        if probe(size):
            chosen = size
            break
    if chosen is None:
        from .errors import Unsatisfiable
        raise Unsatisfiable("no group size within MAX_TUPLES satisfies "
                            "the aggregation constraints")
    needs_n: set[str] = set()
    if chosen > 1:
        for c in constraints:
            attr = _agg_attr(c.agg)
            if attr is None or (attr.attribute is not None
                                and attr.attribute.is_text):
                if attr is not None and c.agg.distinct and \
                        c.op in {">", ">="}:
                    needs_n.add(attr.alias)
                continue
            key = f"{attr.alias}_{attr.name}"
            if not probe(chosen, force_single=key):
                needs_n.add(attr.alias)
    return GroupEstimate(chosen, needs_n)


def _is_unique_in_group(attr: Attr, inference: AttributeInference,
                        occs: dict[str, Occurrence]) -> bool:
    occ = occs.get(attr.alias)
    if occ is None:
        return False
    sets = inference.unique_elements.get(occ.occ_id, [])
    return frozenset({attr.name}) in sets


# --------------------------------------------------------------------------
# Group spec derivation (estimation + cardinality assignment)

_SPEC_MEMO: dict = {}


def derive_group_spec(builder: GoalBuilder, root: Node, scalar_constraint=None,
                      clause_index: int = 0):
    from .blockgen import GroupSpec
    modes_key = tuple(sorted(
        (k, str(vv)) for k, vv in getattr(builder, "having_modes", {}).items()))
    sc_key = None
    if scalar_constraint is not None:
        target, op, outer_expr = scalar_constraint
        sc_key = (render_expr(target), op, render_expr(outer_expr)
                  if not isinstance(outer_expr, (int, float)) else outer_expr)
    memo_key = (id(root), clause_index, modes_key, sc_key)
    if memo_key in _SPEC_MEMO:
        return _SPEC_MEMO[memo_key]
    spec = _derive_group_spec(builder, root, scalar_constraint, clause_index)
    _SPEC_MEMO[memo_key] = spec
    return spec


def _derive_group_spec(builder: GoalBuilder, root: Node, scalar_constraint=None,
                       clause_index: int = 0):
    from .blockgen import GroupSpec
    parts = find_block_parts(root)
    having = parts.get("having")
    group = parts.get("group")
    if having is None and scalar_constraint is None:
        return GroupSpec(1, None)
    constraints = collect_agg_constraints(having, scalar_constraint,
                                           getattr(builder, "having_modes", {}))
    if not constraints:
        return GroupSpec(1, None)
    occs = pseudo_occurrences(root)
    select = parts.get("select")
    pred = select.predicate if select is not None else TruePred()
    clauses = to_dnf(pred, builder.config.dnf_clause_cap)
    clause = clauses[min(clause_index, len(clauses) - 1)] if clauses else []
    group_keys = group.keys if group is not None else []
    info = collect_block_info(parts["from"], {o.alias: o for o in occs.values()},
                              list(clause), group_keys)
    classes = build_equivalence_classes(info)
    add_inferred_edges(info, classes)
    inference = infer_attribute_properties(info, classes)
    estimate = estimate_group_count(builder, constraints, clause, inference, occs)
    if estimate.group_size <= 1:
        return GroupSpec(1, CardinalityAssignment(
            {a: 1 for a in occs}, 1, inference.unique_elements))
    assignment = pick_assignment(info, inference, estimate, constraints, occs)
    return GroupSpec(estimate.group_size, assignment)


def pick_assignment(info: BlockInfo, inference: AttributeInference,
                    estimate: GroupEstimate, constraints: list[AggConstraint],
                    occs: dict[str, Occurrence]) -> CardinalityAssignment:
    n_size = estimate.group_size
    roots: list[str] = []
    for c in constraints:
        attr = _agg_attr(c.agg)
        if attr is not None and attr.alias in occs and attr.alias not in roots:
            roots.append(attr.alias)
    degree = {alias: 0 for alias in occs}
    for edge in info.edges:
        if edge.a in degree:
            degree[edge.a] += 1
        if edge.b in degree:
            degree[edge.b] += 1
    for alias in sorted(occs, key=lambda a: (-degree[a], a)):
        if alias not in roots:
            roots.append(alias)
    for root in roots:
        assignment = assign_cardinalities(info, inference, n_size, root,
                                          estimate.needs_n)
        if assignment is not None:
            return assignment
    # exhaustive {1,n} fallback (the "constraint formulation")
    aliases = sorted(occs)
    from itertools import combinations
    for k in range(1, len(aliases) + 1):
        for combo in combinations(aliases, k):
            if not estimate.needs_n <= set(combo):
                continue
            counts = {a: (n_size if a in combo else 1) for a in aliases}
            candidate = CardinalityAssignment(counts, n_size,
                                              dict(inference.unique_elements))
            from .analysis import _validates
            if _validates(info, inference,
                          {a: list(inference.unique_elements.get(a, []))
                           for a in aliases}, counts, n_size, set()):
                return candidate
    from .errors import Unsatisfiable
    raise Unsatisfiable("no {1,n} cardinality assignment found")
