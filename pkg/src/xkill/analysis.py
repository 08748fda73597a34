"""Join-graph analysis for one query block.

Covers equivalence classes over equijoined attributes, the attribute
inference fixpoint (group-by and constant-equated attributes are single
valued, keys are unique, uniqueness shrinks under single-valuedness),
and the cardinality assignment heuristic that picks 1 or n tuples per
relation occurrence so the join yields exactly n group rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .build import Occurrence
from .tree import (Attr, Comparison, Const, Join, Node, Param, Pred,
                   RelationLeaf, iter_exprs)

AttrRef = tuple[str, str]          # (occ_id, attr name)


@dataclass
class JoinEdge:
    a: str                         # occurrence ids
    b: str
    # attribute-equality conds as ((occ,attr),(occ,attr)); expression
    # equalities keep their atom plus the attrs touched per side
    attr_conds: list[tuple[AttrRef, AttrRef]] = field(default_factory=list)
    expr_conds: list[tuple[Comparison, list[AttrRef], list[AttrRef]]] = \
        field(default_factory=list)
    inferred: bool = False

    def join_attrs(self, occ: str) -> set[str]:
        out = set()
        for (oa, aa), (ob, ab) in self.attr_conds:
            if oa == occ:
                out.add(aa)
            if ob == occ:
                out.add(ab)
        for _, left_refs, right_refs in self.expr_conds:
            for o, a in left_refs + right_refs:
                if o == occ:
                    out.add(a)
        return out


@dataclass
class BlockInfo:
    occurrences: dict[str, Occurrence]
    edges: list[JoinEdge]
    selections: list[Pred]                     # conjunctive atoms of the clause
    group_keys: list[object]                   # exprs
    outer_single: set[AttrRef] = field(default_factory=set)

    def edge_between(self, a: str, b: str) -> JoinEdge | None:
        for edge in self.edges:
            if {edge.a, edge.b} == {a, b}:
                return edge
        return None


@dataclass
class AttributeInference:
    unique_elements: dict[str, list[frozenset[str]]]
    single_valued: set[AttrRef]


def _attr_ref(expr, occ_of_alias: dict[str, Occurrence]) -> AttrRef | None:
    if isinstance(expr, Attr) and not expr.outer and expr.alias in occ_of_alias:
        return (occ_of_alias[expr.alias].occ_id, expr.name)
    return None


def _expr_refs(expr, occ_of_alias) -> list[AttrRef]:
    out = []
    for sub in iter_exprs(expr):
        ref = _attr_ref(sub, occ_of_alias)
        if ref is not None:
            out.append(ref)
    return out


def collect_block_info(from_node: Node, occ_of_alias: dict[str, Occurrence],
                       selections: list[Pred], group_keys: list[object]
                       ) -> BlockInfo:
    """Walk the FROM tree and the clause atoms into a BlockInfo."""
    occurrences = {occ.occ_id: occ for occ in occ_of_alias.values()}
    edges: dict[frozenset, JoinEdge] = {}

    def add_cond(cond: Comparison) -> bool:
        left_refs = _expr_refs(cond.left, occ_of_alias)
        right_refs = _expr_refs(cond.right, occ_of_alias)
        if not left_refs or not right_refs:
            return False
        la, ra = left_refs[0][0], right_refs[0][0]
        if la == ra:
            return False
        key = frozenset((la, ra))
        edge = edges.get(key)
        if edge is None:
            edge = edges[key] = JoinEdge(min(la, ra), max(la, ra))
        simple = (isinstance(cond.left, Attr) and isinstance(cond.right, Attr)
                  and not cond.left.outer and not cond.right.outer)
        if simple:
            edge.attr_conds.append((left_refs[0], right_refs[0]))
        else:
            edge.expr_conds.append((cond, left_refs, right_refs))
        return True

    def walk(node: Node) -> None:
        if isinstance(node, Join):
            for cond in node.conditions:
                add_cond(cond)
            walk(node.left)
            walk(node.right)

    walk(from_node)
    residual_selections = []
    for atom in selections:
        if isinstance(atom, Comparison) and atom.op == "=":
            if add_cond(atom):
                continue
        residual_selections.append(atom)
    return BlockInfo(occurrences, list(edges.values()), residual_selections,
                     group_keys)


def build_equivalence_classes(info: BlockInfo) -> list[list[AttrRef]]:
    """Transitive closure of attribute equalities (deterministic order)."""
    parent: dict[AttrRef, AttrRef] = {}

    def find(x: AttrRef) -> AttrRef:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: AttrRef, y: AttrRef) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            keep, drop = sorted((rx, ry))
            parent[drop] = keep

    for edge in info.edges:
        for a, b in edge.attr_conds:
            union(a, b)
    groups: dict[AttrRef, list[AttrRef]] = {}
    for ref in sorted(parent):
        groups.setdefault(find(ref), []).append(ref)
    return [sorted(members) for _, members in sorted(groups.items())
            if len(members) > 1]


def add_inferred_edges(info: BlockInfo, classes: list[list[AttrRef]]) -> None:
    """Equivalence classes imply transitive join conditions (may add cycles)."""
    for cls in classes:
        for i in range(len(cls)):
            for j in range(i + 1, len(cls)):
                (oa, aa), (ob, ab) = cls[i], cls[j]
                if oa == ob:
                    continue
                edge = info.edge_between(oa, ob)
                if edge is None:
                    edge = JoinEdge(min(oa, ob), max(oa, ob), inferred=True)
                    info.edges.append(edge)
                if ((cls[i], cls[j]) not in edge.attr_conds and
                        (cls[j], cls[i]) not in edge.attr_conds):
                    edge.attr_conds.append((cls[i], cls[j]))


def infer_attribute_properties(info: BlockInfo,
                               classes: list[list[AttrRef]]
                               ) -> AttributeInference:
    unique_elements: dict[str, list[frozenset[str]]] = {}
    for occ_id, occ in sorted(info.occurrences.items()):
        unique_elements[occ_id] = [frozenset(ks) for ks in occ.rel.key_sets]

    single: set[AttrRef] = set(info.outer_single)
    occ_of_alias = {occ.alias: occ for occ in info.occurrences.values()}
    # Rule 1: group-by attributes are single valued
    for key in info.group_keys:
        if isinstance(key, Attr):
            ref = _attr_ref(key, occ_of_alias)
            if ref is not None:
                single.add(ref)
    # Rule 3: attributes equated to constants
    for atom in info.selections:
        if isinstance(atom, Comparison) and atom.op == "=":
            for a, b in ((atom.left, atom.right), (atom.right, atom.left)):
                if isinstance(a, Attr) and isinstance(b, (Const, Param)):
                    ref = _attr_ref(a, occ_of_alias)
                    if ref is not None:
                        single.add(ref)

    class_of: dict[AttrRef, int] = {}
    for i, cls in enumerate(classes):
        for ref in cls:
            class_of[ref] = i

    changed = True
    while changed:
        changed = False
        # Rule 5: single-valuedness propagates through equivalence classes
        for ref in list(single):
            ci = class_of.get(ref)
            if ci is not None:
                for other in classes[ci]:
                    if other not in single:
                        single.add(other)
                        changed = True
        # Rule 6: drop single-valued attrs from unique sets, keep minimal sets
        for occ_id in sorted(unique_elements):
            new_sets = []
            for us in unique_elements[occ_id]:
                reduced = frozenset(a for a in us if (occ_id, a) not in single)
                new_sets.append(reduced)
            minimal = []
            for us in new_sets:
                if any(other < us for other in new_sets):
                    continue
                if us not in minimal:
                    minimal.append(us)
            if minimal != unique_elements[occ_id]:
                unique_elements[occ_id] = minimal
                changed = True
        # Rule 4: an empty (fully single-valued) unique set pins the relation
        for occ_id, occ in sorted(info.occurrences.items()):
            if any(len(us) == 0 for us in unique_elements[occ_id]):
                for a in occ.rel.attributes:
                    ref = (occ_id, a.name)
                    if ref not in single:
                        single.add(ref)
                        changed = True
    return AttributeInference(unique_elements, single)


def rerun_is_idempotent(info: BlockInfo, classes) -> bool:
    first = infer_attribute_properties(info, classes)
    second = infer_attribute_properties(info, classes)
    return (first.unique_elements == second.unique_elements and
            first.single_valued == second.single_valued)


# --------------------------------------------------------------------------
# Cardinality assignment

@dataclass
class CardinalityAssignment:
    counts: dict[str, int]                 # occ_id -> 1 or n
    n: int
    forced_unique: dict[str, list[frozenset[str]]]


def _unique_over(unique_elements: dict[str, list[frozenset[str]]],
                 occ: str, attrs: set[str]) -> bool:
    return any(us and us <= attrs for us in unique_elements[occ])


def assign_cardinalities(info: BlockInfo, inference: AttributeInference,
                         n: int, root: str, needs_n: set[str] = frozenset()
                         ) -> CardinalityAssignment | None:
    """BFS propagation of Rule 7 and Implementation Rule 1 from a root.

    Returns None when the resulting assignment cannot yield exactly n rows
    (the caller retries other roots or falls back to the solver form).
    """
    counts: dict[str, int] = {}
    unique_elements = {k: list(vv) for k, vv in inference.unique_elements.items()}
    pinned_single = set()
    for occ_id in sorted(info.occurrences):
        if any(len(us) == 0 for us in unique_elements[occ_id]):
            pinned_single.add(occ_id)
        counts[occ_id] = 1
    if n <= 1:
        return CardinalityAssignment(counts, max(n, 1), unique_elements)
    if root in pinned_single:
        return None
    counts[root] = n
    queue = [root]
    for forced in sorted(needs_n):
        if forced in pinned_single:
            return None
        if counts.get(forced) == 1:
            counts[forced] = n
            queue.append(forced)

    while queue:
        occ = queue.pop(0)
        for edge in sorted(info.edges, key=lambda ed: (ed.a, ed.b)):
            if occ not in (edge.a, edge.b):
                continue
            other = edge.b if edge.a == occ else edge.a
            join_here = edge.join_attrs(occ)
            join_there = edge.join_attrs(other)
            # Rule 7
            if counts[occ] == n and _unique_over(unique_elements, occ, join_here):
                prev = counts[other]
                changed_unique = False
                if other not in pinned_single:
                    counts[other] = n
                matched = _matched_attrs(edge, occ, other)
                for us in unique_elements[occ]:
                    if us and us <= join_here:
                        image = frozenset(matched.get(a) for a in us)
                        if None not in image and image not in unique_elements[other]:
                            unique_elements[other].append(image)
                            changed_unique = True
                if (prev == 1 and counts[other] == n) or changed_unique:
                    queue.append(other)
        # Implementation Rule 1
        if counts[occ] == n:
            partner = _implementation_rule_1(info, unique_elements, counts, occ, n,
                                             pinned_single)
            if partner is not None:
                queue.append(partner)
    # validation: every n-count occurrence must sit in one aligned component
    if not _validates(info, inference, unique_elements, counts, n, pinned_single):
        return None
    return CardinalityAssignment(counts, n, unique_elements)


def _matched_attrs(edge: JoinEdge, occ: str, other: str) -> dict[str, str]:
    out = {}
    for (oa, aa), (ob, ab) in edge.attr_conds:
        if oa == occ and ob == other:
            out[aa] = ab
        elif ob == occ and oa == other:
            out[ab] = aa
    return out


def _implementation_rule_1(info, unique_elements, counts, occ, n, pinned_single):
    for mu in unique_elements[occ]:
        if len(mu) < 2:
            continue
        neighbors = []
        covered: set[str] = set()
        fully_covered_by_one = False
        for edge in info.edges:
            if occ not in (edge.a, edge.b):
                continue
            other = edge.b if edge.a == occ else edge.a
            attrs = edge.join_attrs(occ) & mu
            if attrs:
                neighbors.append((other, attrs, edge))
                covered |= attrs
                if mu <= edge.join_attrs(occ):
                    fully_covered_by_one = True
        if covered != set(mu) or fully_covered_by_one or not neighbors:
            continue
        # pick the partner with lowest cardinality, then name order
        neighbors.sort(key=lambda t: (counts[t[0]], t[0]))
        for other, attrs, edge in neighbors:
            if other in pinned_single:
                continue
            prev = counts[other]
            counts[other] = n
            mine = frozenset(edge.join_attrs(occ))
            theirs = frozenset(edge.join_attrs(other))
            if mine and mine not in unique_elements[occ]:
                unique_elements[occ].append(mine)
            if theirs and theirs not in unique_elements[other]:
                unique_elements[other].append(theirs)
            if prev == 1:
                return other
            return None
    return None


def _validates(info, inference, unique_elements, counts, n, pinned_single) -> bool:
    n_occs = sorted(o for o, c in counts.items() if c == n)
    if not n_occs:
        return False
    if len(n_occs) == 1:
        return True
    # edges usable for 1:1 alignment: some attr condition whose two sides are
    # not single valued (their values can be made distinct across the group)
    aligned: dict[str, set[str]] = {o: set() for o in n_occs}
    for edge in info.edges:
        if edge.a in aligned and edge.b in aligned:
            for ra, rb in edge.attr_conds:
                if ra not in inference.single_valued and \
                        rb not in inference.single_valued:
                    aligned[edge.a].add(edge.b)
                    aligned[edge.b].add(edge.a)
                    break
    seen = {n_occs[0]}
    stack = [n_occs[0]]
    while stack:
        cur = stack.pop()
        for nxt in aligned[cur]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(n_occs)
