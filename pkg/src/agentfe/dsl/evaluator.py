"""Schema checks and vectorized evaluation of expression trees.

Evaluation is row-local and total. A row becomes missing (NaN) when an
operand is missing, the operation is undefined there (division by zero,
log of x <= 0, log1p of x <= -1, sqrt of x < 0, 0 raised to a negative
power) or the IEEE result is not finite. ``if`` only looks at the branch
its condition selects.
"""

from __future__ import annotations

import math

import numpy as np

from ..dataset import CATEGORICAL, NUMERIC, Dataset
from .ast import Binary, CatFlag, ColumnRef, Compare, Const, Expr, IfThenElse, Unary, walk
from .parser import DslError, parse


class DslSchemaError(DslError):
    """Expression does not fit the dataset's columns."""


class UnknownColumnError(DslSchemaError):
    pass


class KindError(DslSchemaError):
    pass


def validate(expr: Expr, dataset: Dataset) -> Expr:
    for node in walk(expr):
        if isinstance(node, ColumnRef):
            if not dataset.has_column(node.name):
                raise UnknownColumnError(f"unknown column {node.name!r}")
            if dataset.column(node.name).kind == CATEGORICAL:
                raise KindError(
                    f"arithmetic on raw categorical column {node.name!r}; "
                    f"use {node.name} == \"<category>\" flags"
                )
        elif isinstance(node, CatFlag):
            if not dataset.has_column(node.column):
                raise UnknownColumnError(f"unknown column {node.column!r}")
            if dataset.column(node.column).kind == NUMERIC:
                raise KindError(f"category flag on numeric column {node.column!r}")
        elif isinstance(node, Const) and not np.isfinite(node.value):
            raise KindError("constants must be finite")
    return expr


def compile_source(source: str, dataset: Dataset) -> Expr:
    return validate(parse(source), dataset)


def _finite(values: np.ndarray) -> np.ndarray:
    values[~np.isfinite(values)] = np.nan
    return values


def _masked(values: np.ndarray, ok: np.ndarray) -> np.ndarray:
    return np.where(ok, values, np.nan)


def _libm(fn, ok: np.ndarray, *args: np.ndarray) -> np.ndarray:
    """Apply a ``math`` function on the rows where ``ok`` holds.

    numpy's SIMD log/log1p/pow can differ from libm by an ulp depending on the
    CPU; going through ``math`` keeps feature values identical across machines.
    """
    out = np.full(ok.shape, np.nan)
    idx = np.flatnonzero(ok)
    cols = [a[idx].tolist() for a in args]
    vals = []
    for row in zip(*cols):
        try:
            vals.append(fn(*row))
        except (ValueError, OverflowError):
            vals.append(math.nan)
    out[idx] = vals
    return out


def _unary(op: str, x: np.ndarray) -> np.ndarray:
    if op == "neg":
        return -x
    if op == "log":
        return _libm(math.log, x > 0, x)
    if op == "log1p":
        return _libm(math.log1p, x > -1, x)
    if op == "sqrt":
        return _masked(np.sqrt(np.where(x >= 0, x, 0.0)), x >= 0)
    if op == "abs":
        return np.abs(x)
    if op == "square":
        return x * x
    raise ValueError(op)


def _binary(op: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return _masked(a / np.where(b != 0, b, 1.0), b != 0)
    if op == "min":
        return np.minimum(a, b)
    if op == "max":
        return np.maximum(a, b)
    if op == "pow":
        ok = ~np.isnan(a) & ~np.isnan(b) & ~((a == 0) & (b < 0))
        return _libm(math.pow, ok, a, b)
    raise ValueError(op)


_COMPARE = {
    "lt": np.less, "le": np.less_equal, "gt": np.greater,
    "ge": np.greater_equal, "eq": np.equal,
}


def _eval(expr: Expr, dataset: Dataset) -> np.ndarray:
    n = dataset.n_rows
    if isinstance(expr, ColumnRef):
        return np.array(dataset.column(expr.name).values, dtype=float)
    if isinstance(expr, Const):
        return np.full(n, float(expr.value))
    if isinstance(expr, CatFlag):
        cells = dataset.column(expr.column).values
        out = np.array([np.nan if c is None else float(c == expr.token) for c in cells])
        return out.reshape(n)
    if isinstance(expr, Unary):
        return _finite(_unary(expr.op, _eval(expr.child, dataset)))
    if isinstance(expr, Binary):
        a = _eval(expr.left, dataset)
        b = _eval(expr.right, dataset)
        out = _finite(_binary(expr.op, a, b))
        # IEEE pow(nan, 0) and pow(1, nan) are 1; missing must stay missing
        out[np.isnan(a) | np.isnan(b)] = np.nan
        return out
    if isinstance(expr, Compare):
        a = _eval(expr.left, dataset)
        b = _eval(expr.right, dataset)
        out = _COMPARE[expr.op](a, b).astype(float)
        out[np.isnan(a) | np.isnan(b)] = np.nan
        return out
    if isinstance(expr, IfThenElse):
        cond = _eval(expr.cond, dataset)
        out = np.where(cond != 0, _eval(expr.then, dataset), _eval(expr.other, dataset))
        out[np.isnan(cond)] = np.nan
        return out
    raise TypeError(f"not an expression node: {expr!r}")


def evaluate(expr: Expr, dataset: Dataset) -> np.ndarray:
    """Column h(X): one float per row, NaN where missing."""
    with np.errstate(all="ignore"):
        return _eval(expr, dataset)
