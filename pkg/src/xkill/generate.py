"""End-to-end dataset generation: plan goals, solve, decode, verify."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

from .catalog import Schema
from .config import Config, DEFAULT
from .errors import (ClauseExplosion, EquivalentMutation, UnsupportedFeature,
                     Unsatisfiable, XKillError)
from .normalize import normalize
from .parser import parse_query, rewrite_dml
from .planner import DatasetGoal, plan
from .script import emit_smtlib
from .solver import Dataset, decode, revalidate, solve
from .tree import QueryTree


@dataclass
class GenerationResult:
    goals: list[DatasetGoal]
    datasets: list[Dataset]
    tree: QueryTree | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def solved(self) -> list[DatasetGoal]:
        return [g for g in self.goals if g.status == "solved"]

    def summary(self) -> dict:
        counts: dict[str, int] = {}
        for g in self.goals:
            counts[g.status] = counts.get(g.status, 0) + 1
        return {"goals": len(self.goals), **counts,
                "datasets": len(self.datasets)}


def generate_for_tree(tree: QueryTree, schema: Schema,
                      config: Config = DEFAULT,
                      only_classes: set[str] | None = None,
                      list_only: bool = False) -> GenerationResult:
    began = time.monotonic()
    goals = plan(tree, schema, config)
    if only_classes:
        goals = [g for g in goals if g.klass in only_classes]
    result = GenerationResult(goals, [], tree)
    if list_only:
        return result
    solved_scripts: dict[str, Dataset] = {}
    status_of: dict[str, str] = {}
    for goal in goals:
        if goal.status != "pending":
            status_of[goal.goal_id] = goal.status
            continue
        if goal.only_if_failed and any(
                status_of.get(gid) == "solved" for gid in goal.only_if_failed):
            goal.status = "skipped"
            goal.note = "covered by earlier set-operator datasets"
            status_of[goal.goal_id] = goal.status
            continue
        deadline = time.monotonic() + config.goal_timeout * 2
        verdicts = []
        for candidate in goal.candidates:
            if time.monotonic() > deadline:
                verdicts.append("timeout")
                break
            try:
                script = candidate()
            except (EquivalentMutation, Unsatisfiable) as exc:
                verdicts.append("unsat")
                goal.note = goal.note or str(exc)
                continue
            except (UnsupportedFeature, ClauseExplosion) as exc:
                verdicts.append("error")
                goal.note = goal.note or str(exc)
                continue
            except XKillError as exc:
                verdicts.append("error")
                goal.note = goal.note or f"{type(exc).__name__}: {exc}"
                continue
            text = emit_smtlib(script)
            # enum member symbols hide their decoded values; hash those too
            values = repr(sorted(
                (name, tuple(m.value for m in sort.members))
                for name, sort in script.enums.items()))
            digest = hashlib.sha256((text + values).encode()).hexdigest()
            if digest in solved_scripts:
                goal.status = "solved"
                goal.note = "merged with identical dataset"
                existing = solved_scripts[digest]
                existing.notes.setdefault("tags", []).append(goal.tag)
                break
            model = solve(script, timeout=config.goal_timeout, config=config)
            verdicts.append(model.verdict)
            if model.verdict == "sat":
                try:
                    dataset = decode(model, schema, script)
                    revalidate(dataset, schema)
                except XKillError as exc:
                    goal.status = "error"
                    goal.note = f"decode failed: {exc}"
                    break
                dataset.tag = goal.tag
                dataset.goal_id = goal.goal_id
                dataset.notes["class"] = goal.klass
                dataset.notes.setdefault("tags", [goal.tag])
                solved_scripts[digest] = dataset
                result.datasets.append(dataset)
                goal.status = "solved"
                break
        if goal.status == "pending":
            if verdicts and all(v == "unsat" for v in verdicts):
                goal.status = "unsat"
            elif "timeout" in verdicts or "unknown" in verdicts:
                goal.status = "error"
                goal.note = goal.note or "solver timeout/unknown"
            else:
                goal.status = "error"
        status_of[goal.goal_id] = goal.status
    result.timings["total"] = time.monotonic() - began
    return result


def generate_datasets(sql_text: str, schema: Schema, config: Config = DEFAULT,
                      only_classes: set[str] | None = None,
                      list_only: bool = False,
                      views: dict[str, str] | None = None) -> GenerationResult:
    """Parse, rewrite DML, normalize and run the full pipeline."""
    tree = rewrite_dml(sql_text, schema)
    tree = normalize(tree, "plan")
    return generate_for_tree(tree, schema, config, only_classes, list_only)
