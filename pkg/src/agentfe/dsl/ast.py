"""Expression tree for row-local feature transformations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

UNARY_OPS = ("neg", "log", "log1p", "sqrt", "abs", "square")
BINARY_OPS = ("add", "sub", "mul", "div", "min", "max", "pow")
COMPARE_OPS = ("lt", "le", "gt", "ge", "eq")


@dataclass(frozen=True)
class ColumnRef:
    name: str


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {self.op!r}")


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in COMPARE_OPS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class CatFlag:
    column: str
    token: str


@dataclass(frozen=True)
class IfThenElse:
    cond: "Expr"
    then: "Expr"
    other: "Expr"


Expr = Union[ColumnRef, Const, Unary, Binary, Compare, CatFlag, IfThenElse]


def children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, Unary):
        return (expr.child,)
    if isinstance(expr, (Binary, Compare)):
        return (expr.left, expr.right)
    if isinstance(expr, IfThenElse):
        return (expr.cond, expr.then, expr.other)
    return ()


def walk(expr: Expr) -> Iterator[Expr]:
    """Pre-order traversal."""
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_columns(expr: Expr) -> frozenset[str]:
    """Names of every column referenced by a ColumnRef or CatFlag."""
    names = set()
    for node in walk(expr):
        if isinstance(node, ColumnRef):
            names.add(node.name)
        elif isinstance(node, CatFlag):
            names.add(node.column)
    return frozenset(names)


def depth(expr: Expr) -> int:
    kids = children(expr)
    return 1 + (max(depth(k) for k in kids) if kids else 0)
