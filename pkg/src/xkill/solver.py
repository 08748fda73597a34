"""Solver bridge: run the child solver, decode models into datasets.

The solver is any SMT-LIB v2 binary reachable as a subprocess; the
bundled fallback is ``python -m xkill.smtsolver``. The XKILL_SOLVER
environment variable overrides the command line.
"""

from __future__ import annotations

import json
import os
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction

from .catalog import Schema, decode_value
from .config import Config, DEFAULT
from .errors import DomainViolation, SolverCrash
from .script import NULL_THRESHOLD, ConstraintScript, check_model, emit_smtlib


@dataclass
class SolverModel:
    verdict: str                          # sat | unsat | unknown | timeout | error
    assignment: dict[str, object] = field(default_factory=dict)
    wall_time: float = 0.0
    stderr: str = ""


@dataclass
class Dataset:
    rows: dict[str, list[dict[str, object]]]     # relation -> rows (internal values)
    tag: str = ""
    goal_id: str = ""
    parameters: dict[str, object] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def row_count(self, relation: str) -> int:
        return len(self.rows.get(relation, []))


def solve(script: ConstraintScript, timeout: float | None = None,
          config: Config = DEFAULT) -> SolverModel:
    """Serialize, run the child solver, parse verdict + model."""
    text = emit_smtlib(script)
    cmd = list(config.solver_cmd)
    budget = timeout if timeout is not None else config.goal_timeout
    began = time.monotonic()
    try:
        proc = subprocess.run(cmd, input=text, capture_output=True, text=True,
                              timeout=budget + 5.0)
    except subprocess.TimeoutExpired:
        return SolverModel("timeout", wall_time=time.monotonic() - began)
    except OSError as exc:
        raise SolverCrash(f"cannot run solver {cmd!r}: {exc}") from exc
    wall = time.monotonic() - began
    out = proc.stdout.strip()
    if proc.returncode != 0 and not out:
        return SolverModel("error", wall_time=wall,
                           stderr=proc.stderr.strip()[:2000])
    first = out.splitlines()[0].strip() if out else ""
    if first == "unsat":
        return SolverModel("unsat", wall_time=wall)
    if first == "unknown":
        return SolverModel("unknown", wall_time=wall, stderr=proc.stderr.strip()[:2000])
    if first != "sat":
        return SolverModel("error", wall_time=wall, stderr=(out + proc.stderr)[:2000])
    assignment = _parse_model(out, script)
    return SolverModel("sat", assignment, wall)


def _parse_model(out: str, script: ConstraintScript) -> dict[str, object]:
    from .smtsolver import parse_sexprs
    body = out.split("\n", 1)[1] if "\n" in out else ""
    exprs = parse_sexprs(body)
    # model may come wrapped in one list, possibly starting with the "model" symbol
    defs = []
    for item in exprs:
        if isinstance(item, list):
            if item and item[0] == "define-fun":
                defs.append(item)
            else:
                defs.extend(x for x in item if isinstance(x, list)
                            and x and x[0] == "define-fun")
    symbol_to_member: dict[str, tuple[str, int]] = {}
    for sort_name, sort in script.enums.items():
        for idx, m in enumerate(sort.members):
            symbol_to_member[m.symbol] = (sort_name, idx)
    assignment: dict[str, object] = {}
    for d in defs:
        # (define-fun name () Sort value)
        name, value = d[1], d[4]
        assignment[name] = _parse_value(value, symbol_to_member)
    missing = [name for name in script.variables if name not in assignment]
    if missing:
        raise SolverCrash(f"model missing variables: {missing[:5]}")
    return assignment


def _parse_value(value, symbols: dict[str, tuple[str, int]]):
    if isinstance(value, str):
        if value in symbols:
            return symbols[value]
        if "." in value:
            return Fraction(value)
        return Fraction(int(value))
    if value and value[0] == "-":
        return -_parse_value(value[1], symbols)
    if value and value[0] == "/":
        return (_parse_value(value[1], symbols) / _parse_value(value[2], symbols))
    raise SolverCrash(f"unparseable model value {value!r}")


def decode(model: SolverModel, schema: Schema, script: ConstraintScript) -> Dataset:
    """Turn a sat model into per-relation rows with NULLs restored."""
    if model.verdict != "sat":
        raise ValueError("decode requires a sat model")
    failures = check_model(script, model.assignment)
    if failures:
        raise DomainViolation(
            f"model violates {len(failures)} assertion(s); first: {failures[0]!r}")

    slot_values: dict[tuple[str, int], dict[str, object]] = {}
    for var, (relation, idx, attr_name) in script.var_slot.items():
        value = model.assignment[var]
        rel = schema.relation(relation)
        attr = rel.attribute(attr_name)
        if isinstance(value, tuple):            # enum member
            sort_name, member_idx = value
            decoded = script.enums[sort_name].members[member_idx].value
        else:
            f = Fraction(value)
            if f.denominator != 1:
                raise DomainViolation(f"non-integral value for {var}: {value}")
            decoded = int(f)
            if decoded <= NULL_THRESHOLD:
                decoded = None
        if decoded is not None:
            if attr.is_text and not isinstance(decoded, str):
                raise DomainViolation(f"{var}: text attribute got {decoded!r}")
            if not attr.is_text and isinstance(decoded, str):
                raise DomainViolation(f"{var}: numeric attribute got text")
            if decoded is None and not attr.nullable:
                raise DomainViolation(f"{var}: NULL in non-nullable column")
        slot_values.setdefault((relation, idx), {})[attr_name] = decoded

    rows: dict[str, list[dict[str, object]]] = {}
    for relation in sorted(script.slot_count):
        rel = schema.relation(relation)
        rel_rows = []
        for idx in range(1, script.slot_count[relation] + 1):
            cells = slot_values.get((relation, idx))
            if cells is None:
                continue
            row = {a.name: cells.get(a.name) for a in rel.attributes}
            rel_rows.append(row)
        # relations with a primary key collapse identical tuples (the PK
        # constraint forces equal-key slots to be the same tuple)
        if rel.primary_key:
            seen: dict[tuple, dict] = {}
            for row in rel_rows:
                key = tuple(sorted((k, _freeze(vv)) for k, vv in row.items()))
                if key not in seen:
                    seen[key] = row
            rel_rows = list(seen.values())
        rows[relation] = rel_rows
    parameters = {}
    for pname, var in script.metadata.get("parameters", {}).items():
        val = model.assignment.get(var)
        if isinstance(val, tuple):
            parameters[pname] = script.enums[val[0]].members[val[1]].value
        elif val is not None:
            parameters[pname] = int(val) if Fraction(val).denominator == 1 else val
    return Dataset(rows, tag=script.metadata.get("tag", ""),
                   goal_id=script.metadata.get("goal_id", ""),
                   parameters=parameters,
                   notes=dict(script.metadata.get("notes", {})))


def _freeze(value):
    return ("\0null",) if value is None else value


def revalidate(dataset: Dataset, schema: Schema) -> None:
    """PK/FK/domain re-check on decoded rows (internal bug guard)."""
    for rel_name, rows in dataset.rows.items():
        rel = schema.relation(rel_name)
        if rel.primary_key:
            seen = {}
            for row in rows:
                key = tuple(_freeze(row[k]) for k in rel.primary_key)
                if any(row[k] is None for k in rel.primary_key):
                    raise DomainViolation(f"{rel_name}: NULL in primary key")
                if key in seen and seen[key] != row:
                    raise DomainViolation(f"{rel_name}: duplicate primary key {key}")
                seen[key] = row
        for row in rows:
            for attr in rel.attributes:
                if row[attr.name] is None and not attr.nullable:
                    raise DomainViolation(f"{rel_name}.{attr.name}: NULL not allowed")
    for fk in schema.foreign_keys:
        src_rows = dataset.rows.get(fk.source, [])
        tgt_rows = dataset.rows.get(fk.target, [])
        tgt_keys = {tuple(_freeze(r[a]) for a in fk.target_attrs) for r in tgt_rows}
        for row in src_rows:
            vals = [row[a] for a in fk.source_attrs]
            if any(x is None for x in vals):
                continue
            if tuple(_freeze(x) for x in vals) not in tgt_keys:
                raise DomainViolation(
                    f"FK violation {fk.source}->{fk.target}: {vals}")


def materialize(dataset: Dataset, schema: Schema, out_dir: str) -> dict:
    """Write INSERT script, CSV bundle and manifest; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    inserts = []
    for rel_name in sorted(dataset.rows):
        rel = schema.relation(rel_name)
        for row in dataset.rows[rel_name]:
            rendered = []
            for attr in rel.attributes:
                val = decode_value(attr, row[attr.name])
                if val is None:
                    rendered.append("NULL")
                elif attr.is_text:
                    rendered.append("'" + str(val).replace("'", "''") + "'")
                elif attr.base in {"date", "time", "timestamp"}:
                    rendered.append(f"'{val}'")
                else:
                    rendered.append(str(val))
            cols = ", ".join(a.name for a in rel.attributes)
            inserts.append(
                f"INSERT INTO {rel_name} ({cols}) VALUES ({', '.join(rendered)});")
    with open(os.path.join(out_dir, "insert.sql"), "w") as fh:
        fh.write("\n".join(inserts) + ("\n" if inserts else ""))
    for rel_name in sorted(dataset.rows):
        rel = schema.relation(rel_name)
        path = os.path.join(out_dir, f"{rel_name}.csv")
        with open(path, "w") as fh:
            fh.write(",".join(a.name for a in rel.attributes) + "\n")
            for row in dataset.rows[rel_name]:
                cells = []
                for attr in rel.attributes:
                    val = decode_value(attr, row[attr.name])
                    cells.append("" if val is None else str(val))
                fh.write(",".join(cells) + "\n")
    manifest = {
        "goal_id": dataset.goal_id,
        "tag": dataset.tag,
        "parameters": {k: str(vv) for k, vv in dataset.parameters.items()},
        "relations": {r: len(rows) for r, rows in sorted(dataset.rows.items())},
        "notes": dataset.notes,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
