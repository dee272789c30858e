from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import Expr
from .formatter import format_expr
from .parser import parse

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def is_identifier(name: str) -> bool:
    return bool(_NAME_RE.match(name))


@dataclass(frozen=True)
class Transformation:
    """A named feature definition plus the reasoning that produced it."""

    name: str
    expr: Expr
    justification: str
    explanation: str
    created_iter: int = 0

    def __post_init__(self):
        if not is_identifier(self.name):
            raise ValueError(f"feature name {self.name!r} is not a valid identifier")
        if not self.justification.strip() or not self.explanation.strip():
            raise ValueError(f"feature {self.name!r} needs a justification and an explanation")

    @property
    def source_text(self) -> str:
        return format_expr(self.expr)

    @classmethod
    def from_source(cls, name: str, source: str, justification: str, explanation: str,
                    created_iter: int = 0) -> "Transformation":
        return cls(name, parse(source), justification, explanation, created_iter)
