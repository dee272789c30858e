"""Canonical text for expression trees, with minimal parentheses."""

from __future__ import annotations

import math
import re

from .ast import Binary, CatFlag, ColumnRef, Compare, Const, Expr, IfThenElse, Unary

CMP, SUM, TERM, POW, UNARY, ATOM = range(1, 7)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_BINARY_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_COMPARE_SYMBOL = {"lt": "<", "le": "<=", "gt": ">", "ge": ">=", "eq": "=="}


def format_ident(name: str) -> str:
    if _IDENT_RE.match(name):
        return name
    return "`" + name.replace("\\", "\\\\").replace("`", "\\`") + "`"


def format_string(token: str) -> str:
    return '"' + token.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15 and not (value == 0 and math.copysign(1, value) < 0):
        return str(int(value))
    return repr(value)


def _paren(text: str, prec: int, need: int) -> str:
    return f"({text})" if prec < need else text


def _fmt(expr: Expr) -> tuple[str, int]:
    if isinstance(expr, ColumnRef):
        return format_ident(expr.name), ATOM
    if isinstance(expr, Const):
        return format_number(expr.value), ATOM
    if isinstance(expr, CatFlag):
        return f"{format_ident(expr.column)} == {format_string(expr.token)}", ATOM
    if isinstance(expr, Unary):
        text, prec = _fmt(expr.child)
        if expr.op != "neg":
            return f"{expr.op}({text})", ATOM
        # -<literal> would re-parse as a negative constant
        literal = isinstance(expr.child, Const) and not text.startswith("-")
        if literal or prec < UNARY:
            text = f"({text})"
        return f"-{text}", UNARY
    if isinstance(expr, Binary):
        if expr.op in ("min", "max"):
            return f"{expr.op}({_fmt(expr.left)[0]}, {_fmt(expr.right)[0]})", ATOM
        left, lp = _fmt(expr.left)
        right, rp = _fmt(expr.right)
        sym = _BINARY_SYMBOL[expr.op]
        if expr.op in ("add", "sub"):
            return f"{_paren(left, lp, SUM)} {sym} {_paren(right, rp, TERM)}", SUM
        if expr.op in ("mul", "div"):
            return f"{_paren(left, lp, TERM)} {sym} {_paren(right, rp, POW)}", TERM
        return f"{_paren(left, lp, UNARY)} ^ {_paren(right, rp, POW)}", POW
    if isinstance(expr, Compare):
        left, lp = _fmt(expr.left)
        right, rp = _fmt(expr.right)
        sym = _COMPARE_SYMBOL[expr.op]
        return f"{_paren(left, lp, SUM)} {sym} {_paren(right, rp, SUM)}", CMP
    if isinstance(expr, IfThenElse):
        parts = ", ".join(_fmt(e)[0] for e in (expr.cond, expr.then, expr.other))
        return f"if({parts})", ATOM
    raise TypeError(f"not an expression node: {expr!r}")


def format_expr(expr: Expr) -> str:
    """Canonical source; ``parse(format_expr(e)) == e`` for every tree."""
    return _fmt(expr)[0]

