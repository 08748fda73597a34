"""Run-wide knobs. Everything the paper leaves open lives here."""

from __future__ import annotations

import os
import shlex
import sys
from dataclasses import dataclass, field


def _default_solver_cmd() -> list[str]:
    env = os.environ.get("XKILL_SOLVER")
    if env:
        return shlex.split(env)
    return [sys.executable, "-m", "xkill.smtsolver"]


@dataclass
class Config:
    max_tuples: int = 32
    default_int_domain: tuple[int, int] = (0, 100000)
    text_tokens: int = 16              # synthetic enum size when no sample db
    numeric_margin: float = 0.10       # widening of observed numeric ranges
    dnf_clause_cap: int = 64
    goal_timeout: float = 30.0         # seconds per solver call
    solver_cmd: list[str] = field(default_factory=_default_solver_cmd)
    # String solver
    string_min_length: int = 0
    string_max_length: int = 40
    minimize_threshold: int = 4        # constraints per variable before DFA minimization
    # Working alphabet: letters, digits, space and pattern-relevant punctuation.
    alphabet: str = (
        " 0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz.-"
    )
    workers: int = 0                   # 0 = cpu count


DEFAULT = Config()
