"""Symbolic feature transformation language."""

from .ast import (
    BINARY_OPS,
    COMPARE_OPS,
    UNARY_OPS,
    Binary,
    CatFlag,
    ColumnRef,
    Compare,
    Const,
    Expr,
    IfThenElse,
    Unary,
    free_columns,
    walk,
)
from .evaluator import (
    DslSchemaError,
    KindError,
    UnknownColumnError,
    compile_source,
    evaluate,
    validate,
)
from .formatter import format_expr, format_ident
from .parser import DslArityError, DslError, DslSyntaxError, parse
from .transformation import Transformation, is_identifier

__all__ = [
    "BINARY_OPS", "COMPARE_OPS", "UNARY_OPS",
    "Binary", "CatFlag", "ColumnRef", "Compare", "Const", "Expr", "IfThenElse", "Unary",
    "free_columns", "walk",
    "DslSchemaError", "KindError", "UnknownColumnError", "compile_source", "evaluate", "validate",
    "format_expr", "format_ident",
    "DslArityError", "DslError", "DslSyntaxError", "parse",
    "Transformation", "is_identifier",
]
