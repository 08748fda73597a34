"""Schema catalog: DDL ingestion, attribute domains, keys.

All temporal values are normalized to integer encodings at this layer
(days since 1970-01-01 for DATE, seconds for TIME/TIMESTAMP) and fixed
precision numerics are scaled to integers, so every downstream module
sees only integers and text enumerations.
"""

from __future__ import annotations

import csv
import datetime
import os
from dataclasses import dataclass, field, replace

from .config import Config, DEFAULT
from .errors import DanglingForeignKey, ParseError, TypeMismatch, UnsupportedConstraint
from .lexer import TokenStream, tokenize

EPOCH = datetime.date(1970, 1, 1)

INTEGER_TYPES = {"INT", "INTEGER", "SMALLINT", "BIGINT", "INT2", "INT4", "INT8"}
TEXT_TYPES = {"VARCHAR", "CHAR", "TEXT", "CHARACTER", "STRING"}
RATIONAL_TYPES = {"NUMERIC", "DECIMAL", "REAL", "FLOAT", "DOUBLE"}


def date_to_int(d: datetime.date) -> int:
    return (d - EPOCH).days


def int_to_date(n: int) -> datetime.date:
    return EPOCH + datetime.timedelta(days=n)


@dataclass(frozen=True)
class Domain:
    """Value universe of one attribute.

    Text domains are enumerations; numeric/temporal domains are inclusive
    integer ranges (already scaled/encoded).
    """

    kind: str                     # "enum" | "range"
    values: tuple[str, ...] = ()  # enum only
    lo: int = 0
    hi: int = 0

    def __post_init__(self):
        if self.kind == "enum":
            seen, out = set(), []
            for v in self.values:
                if v not in seen:
                    seen.add(v)
                    out.append(v)
            object.__setattr__(self, "values", tuple(out))
        elif self.lo > self.hi:
            raise ValueError(f"empty range domain [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Attribute:
    name: str
    base: str                  # integer | rational | text | date | time | timestamp | boolean
    nullable: bool = True
    domain: Domain | None = None
    scale: int = 0             # rational only: values are ints scaled by 10**scale

    @property
    def is_text(self) -> bool:
        return self.base == "text"


@dataclass(frozen=True)
class Relation:
    name: str
    attributes: tuple[Attribute, ...]
    primary_key: tuple[str, ...] = ()
    unique_sets: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate attribute names in {self.name}")
        for k in self.primary_key:
            if k not in names:
                raise ValueError(f"primary key column {k} not in {self.name}")

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(f"{self.name}.{name}")

    def has_attribute(self, name: str) -> bool:
        return any(a.name == name for a in self.attributes)

    @property
    def key_sets(self) -> tuple[tuple[str, ...], ...]:
        out = []
        if self.primary_key:
            out.append(self.primary_key)
        out.extend(self.unique_sets)
        return tuple(out)


@dataclass(frozen=True)
class ForeignKey:
    source: str
    source_attrs: tuple[str, ...]
    target: str
    target_attrs: tuple[str, ...]
    nullable: bool = False


@dataclass
class Schema:
    relations: dict[str, Relation] = field(default_factory=dict)
    foreign_keys: list[ForeignKey] = field(default_factory=list)

    def relation(self, name: str) -> Relation:
        key = name.lower()
        if key not in self.relations:
            raise KeyError(f"unknown relation {name}")
        return self.relations[key]

    def has_relation(self, name: str) -> bool:
        return name.lower() in self.relations

    def fks_from(self, relation: str) -> list[ForeignKey]:
        return [fk for fk in self.foreign_keys if fk.source == relation.lower()]

    def validate(self) -> None:
        for fk in self.foreign_keys:
            if fk.source not in self.relations or fk.target not in self.relations:
                raise DanglingForeignKey(f"{fk.source} -> {fk.target}: unknown relation")
            src, tgt = self.relations[fk.source], self.relations[fk.target]
            for a in fk.source_attrs:
                if not src.has_attribute(a):
                    raise DanglingForeignKey(f"{fk.source}.{a} does not exist")
            for a in fk.target_attrs:
                if not tgt.has_attribute(a):
                    raise DanglingForeignKey(f"{fk.target}.{a} does not exist")
            if len(fk.source_attrs) != len(fk.target_attrs):
                raise DanglingForeignKey(f"{fk.source} -> {fk.target}: arity mismatch")
            if tuple(fk.target_attrs) not in tgt.key_sets:
                raise DanglingForeignKey(
                    f"{fk.source} -> {fk.target}({','.join(fk.target_attrs)}) "
                    "is not the primary key or a unique set of the target")
            for sa, ta in zip(fk.source_attrs, fk.target_attrs):
                if src.attribute(sa).base != tgt.attribute(ta).base:
                    raise DanglingForeignKey(
                        f"type mismatch on {fk.source}.{sa} -> {fk.target}.{ta}")


def default_domain(base: str, scale: int = 0, config: Config = DEFAULT) -> Domain:
    lo, hi = config.default_int_domain
    if base == "integer":
        return Domain("range", lo=lo, hi=hi)
    if base == "rational":
        return Domain("range", lo=lo * 10 ** scale, hi=hi * 10 ** scale)
    if base == "text":
        return Domain("enum", values=tuple(f"T{i}" for i in range(config.text_tokens)))
    if base == "date":
        return Domain("range", lo=date_to_int(datetime.date(2000, 1, 1)),
                      hi=date_to_int(datetime.date(2030, 12, 31)))
    if base == "time":
        return Domain("range", lo=0, hi=86399)
    if base == "timestamp":
        d0 = date_to_int(datetime.date(2000, 1, 1)) * 86400
        d1 = date_to_int(datetime.date(2030, 12, 31)) * 86400 + 86399
        return Domain("range", lo=d0, hi=d1)
    if base == "boolean":
        return Domain("range", lo=0, hi=1)
    raise ValueError(f"unknown base type {base}")


def _parse_type(ts: TokenStream) -> tuple[str, int]:
    tok = ts.expect_ident()
    name = tok.upper
    if name == "CHARACTER" and ts.at_keyword("VARYING"):
        ts.next()
        name = "VARCHAR"
    elif name == "DOUBLE" and ts.at_keyword("PRECISION"):
        ts.next()
    args: list[int] = []
    if ts.accept_op("("):
        while not ts.at_op(")"):
            num = ts.next()
            if num.kind != "NUMBER":
                raise ParseError(f"expected number in type, got {num.value!r}",
                                 num.line, num.column)
            args.append(int(num.value))
            ts.accept_op(",")
        ts.expect_op(")")
    if name in INTEGER_TYPES:
        return "integer", 0
    if name in TEXT_TYPES:
        return "text", 0
    if name in RATIONAL_TYPES:
        scale = args[1] if len(args) > 1 else (2 if name in {"NUMERIC", "DECIMAL"} else 2)
        return "rational", scale
    if name == "DATE":
        return "date", 0
    if name == "TIME":
        return "time", 0
    if name == "TIMESTAMP":
        return "timestamp", 0
    if name in {"BOOLEAN", "BOOL"}:
        return "boolean", 0
    raise UnsupportedConstraint(f"column type {name}")


def _parse_name_list(ts: TokenStream) -> tuple[str, ...]:
    ts.expect_op("(")
    names = [ts.expect_ident().value.lower()]
    while ts.accept_op(","):
        names.append(ts.expect_ident().value.lower())
    ts.expect_op(")")
    return tuple(names)


def load_schema(ddl_text: str, config: Config = DEFAULT) -> Schema:
    """Parse a script of CREATE TABLE statements into a Schema."""
    ts = TokenStream(tokenize(ddl_text))
    schema = Schema()
    while ts.peek().kind != "EOF":
        if ts.accept_op(";"):
            continue
        if ts.accept_keyword("DROP"):
            # tolerate leading DROP TABLE boilerplate in scripts
            while ts.peek().kind != "EOF" and not ts.at_op(";"):
                ts.next()
            continue
        ts.expect_keyword("CREATE")
        if not ts.at_keyword("TABLE"):
            bad = ts.peek()
            raise UnsupportedConstraint(f"CREATE {bad.upper}")
        ts.next()
        ts.accept_keyword("IF") and (ts.expect_keyword("NOT"), ts.expect_keyword("EXISTS"))
        rel_name = ts.expect_ident().value.lower()
        ts.expect_op("(")
        attrs: list[Attribute] = []
        pk: tuple[str, ...] = ()
        uniques: list[tuple[str, ...]] = []
        fks: list[ForeignKey] = []
        while True:
            if ts.at_keyword("PRIMARY"):
                ts.next()
                ts.expect_keyword("KEY")
                pk = _parse_name_list(ts)
            elif ts.at_keyword("UNIQUE"):
                ts.next()
                uniques.append(_parse_name_list(ts))
            elif ts.at_keyword("FOREIGN"):
                ts.next()
                ts.expect_keyword("KEY")
                src_attrs = _parse_name_list(ts)
                ts.expect_keyword("REFERENCES")
                target = ts.expect_ident().value.lower()
                tgt_attrs = _parse_name_list(ts) if ts.at_op("(") else src_attrs
                fks.append(ForeignKey(rel_name, src_attrs, target, tgt_attrs))
                _skip_fk_actions(ts)
            elif ts.at_keyword("CHECK", "CONSTRAINT", "TRIGGER"):
                raise UnsupportedConstraint(ts.peek().upper)
            else:
                col = ts.expect_ident().value.lower()
                base, scale = _parse_type(ts)
                nullable = True
                col_pk = False
                while True:
                    if ts.accept_keyword("NOT"):
                        ts.expect_keyword("NULL")
                        nullable = False
                    elif ts.at_keyword("PRIMARY"):
                        ts.next()
                        ts.expect_keyword("KEY")
                        col_pk = True
                    elif ts.accept_keyword("UNIQUE"):
                        uniques.append((col,))
                    elif ts.accept_keyword("REFERENCES"):
                        target = ts.expect_ident().value.lower()
                        tgt_attrs = _parse_name_list(ts) if ts.at_op("(") else (col,)
                        fks.append(ForeignKey(rel_name, (col,), target, tgt_attrs))
                        _skip_fk_actions(ts)
                    elif ts.at_keyword("CHECK"):
                        raise UnsupportedConstraint("CHECK")
                    elif ts.accept_keyword("DEFAULT"):
                        ts.next()  # single literal
                    else:
                        break
                if col_pk:
                    pk = (col,)
                    nullable = False
                attrs.append(Attribute(col, base, nullable,
                                       default_domain(base, scale, config), scale))
            if not ts.accept_op(","):
                break
        ts.expect_op(")")
        ts.accept_op(";")
        # PK members are non-nullable by definition
        attrs = [replace(a, nullable=False) if a.name in pk else a for a in attrs]
        if rel_name in schema.relations:
            raise ParseError(f"duplicate relation {rel_name}")
        schema.relations[rel_name] = Relation(rel_name, tuple(attrs), pk, tuple(uniques))
        for fk in fks:
            schema.foreign_keys.append(fk)
    # FK nullability: nullable iff every source attribute is nullable
    resolved = []
    for fk in schema.foreign_keys:
        src = schema.relations.get(fk.source)
        if src is None:
            raise DanglingForeignKey(f"{fk.source} -> {fk.target}: unknown relation")
        nullable = all(src.attribute(a).nullable for a in fk.source_attrs
                       if src.has_attribute(a))
        resolved.append(replace(fk, nullable=nullable))
    schema.foreign_keys = resolved
    schema.validate()
    return schema


def _skip_fk_actions(ts: TokenStream) -> None:
    while ts.accept_keyword("ON"):
        ts.next()  # DELETE / UPDATE
        if ts.accept_keyword("SET"):
            ts.next()
        else:
            ts.next()  # CASCADE / RESTRICT / NO (ACTION handled below)
            ts.accept_keyword("ACTION")


def render_ddl(schema: Schema) -> str:
    """Emit CREATE TABLE statements; load_schema(render_ddl(s)) == s."""
    out = []
    for rel in schema.relations.values():
        cols = []
        for a in rel.attributes:
            ty = {
                "integer": "int", "text": "varchar", "date": "date", "time": "time",
                "timestamp": "timestamp", "boolean": "boolean",
            }.get(a.base) or f"numeric(12,{a.scale})"
            null = "" if a.nullable else " not null"
            cols.append(f"  {a.name} {ty}{null}")
        if rel.primary_key:
            cols.append(f"  primary key ({', '.join(rel.primary_key)})")
        for us in rel.unique_sets:
            cols.append(f"  unique ({', '.join(us)})")
        for fk in schema.fks_from(rel.name):
            cols.append(f"  foreign key ({', '.join(fk.source_attrs)}) references "
                        f"{fk.target} ({', '.join(fk.target_attrs)})")
        out.append(f"create table {rel.name} (\n" + ",\n".join(cols) + "\n);")
    return "\n".join(out)


def encode_value(attr: Attribute, raw: str):
    """Parse one external cell into the internal value space."""
    if raw is None or raw == "":
        return None
    if attr.base == "text":
        return raw
    try:
        if attr.base == "integer":
            return int(raw)
        if attr.base == "boolean":
            return {"true": 1, "t": 1, "1": 1, "false": 0, "f": 0, "0": 0}[raw.lower()]
        if attr.base == "rational":
            from fractions import Fraction
            scaled = Fraction(raw) * 10 ** attr.scale
            if scaled.denominator != 1:
                raise ValueError(f"{raw} exceeds scale {attr.scale}")
            return int(scaled)
        if attr.base == "date":
            return date_to_int(datetime.date.fromisoformat(raw))
        if attr.base == "time":
            t = datetime.time.fromisoformat(raw)
            return t.hour * 3600 + t.minute * 60 + t.second
        if attr.base == "timestamp":
            dt = datetime.datetime.fromisoformat(raw)
            return date_to_int(dt.date()) * 86400 + dt.hour * 3600 + dt.minute * 60 + dt.second
    except (ValueError, KeyError) as exc:
        raise TypeMismatch(f"{attr.name}: cannot read {raw!r} as {attr.base}") from exc
    raise TypeMismatch(f"{attr.name}: unknown base {attr.base}")


def decode_value(attr: Attribute, value):
    """Inverse of encode_value, for rendering datasets."""
    if value is None:
        return None
    if attr.base == "text":
        return value
    if attr.base == "integer":
        return int(value)
    if attr.base == "boolean":
        return bool(value)
    if attr.base == "rational":
        from decimal import Decimal
        return Decimal(value) / (10 ** attr.scale)
    if attr.base == "date":
        return int_to_date(value).isoformat()
    if attr.base == "time":
        return f"{value // 3600:02d}:{value % 3600 // 60:02d}:{value % 60:02d}"
    if attr.base == "timestamp":
        day, sec = divmod(value, 86400)
        return f"{int_to_date(day).isoformat()} {sec // 3600:02d}:{sec % 3600 // 60:02d}:{sec % 60:02d}"
    return value


def ingest_sample_db(schema: Schema, rows_by_relation: dict[str, list[dict[str, str]]],
                     config: Config = DEFAULT) -> Schema:
    """Tighten attribute domains to the observed sample values.

    Text domains become the distinct observed values; numeric domains the
    observed range widened by the configured margin. Domains never shrink
    below the observed value set, and empty tables leave defaults alone.
    """
    new_schema = Schema(dict(schema.relations), list(schema.foreign_keys))
    observed: dict[tuple[str, str], list] = {}
    for rel_name, rows in rows_by_relation.items():
        rel = schema.relation(rel_name)
        for row in rows:
            extra = set(row) - {a.name for a in rel.attributes}
            if extra:
                raise TypeMismatch(f"{rel_name}: unknown columns {sorted(extra)}")
            for attr in rel.attributes:
                if attr.name not in row:
                    continue
                val = encode_value(attr, row[attr.name])
                if val is not None:
                    observed.setdefault((rel.name, attr.name), []).append(val)
    for rel_name in list(new_schema.relations):
        rel = new_schema.relations[rel_name]
        new_attrs = []
        for attr in rel.attributes:
            vals = observed.get((rel_name, attr.name))
            if not vals:
                new_attrs.append(attr)
                continue
            if attr.is_text:
                dom = Domain("enum", values=tuple(dict.fromkeys(vals)))
            else:
                lo, hi = min(vals), max(vals)
                pad = max(1, int(abs(hi - lo) * config.numeric_margin))
                dom = Domain("range", lo=lo - pad, hi=hi + pad)
            new_attrs.append(replace(attr, domain=dom))
        new_schema.relations[rel_name] = replace(rel, attributes=tuple(new_attrs))
    return new_schema


def load_sample_dir(schema: Schema, directory: str) -> dict[str, list[dict[str, str]]]:
    """Read one CSV per relation (header row = attribute names, empty cell = NULL)."""
    rows_by_relation: dict[str, list[dict[str, str]]] = {}
    for fname in sorted(os.listdir(directory)):
        if not fname.endswith(".csv"):
            continue
        rel_name = fname[:-4].lower()
        if not schema.has_relation(rel_name):
            continue
        with open(os.path.join(directory, fname), newline="") as fh:
            reader = csv.DictReader(fh)
            rows_by_relation[rel_name] = [dict(r) for r in reader]
    return rows_by_relation
