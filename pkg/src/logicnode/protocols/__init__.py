"""Shipped protocol programs and their native drivers."""

from __future__ import annotations

from pathlib import Path

from ..reader import Clause, Program, parse_program, parse_term
from ..terms import Atom

ASSET_DIR = Path(__file__).parent / "assets"


def asset_path(name: str) -> Path:
    p = ASSET_DIR / ("%s.dahl" % name)
    if not p.exists():
        raise FileNotFoundError("no protocol asset %r" % name)
    return p


def load_asset(name: str) -> Program:
    return parse_program(asset_path(name).read_text(encoding="utf-8"))


def facts(*texts: str) -> list:
    """Build fact clauses from term texts."""
    return [Clause(parse_term(t), Atom("true")) for t in texts]
