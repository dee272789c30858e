"""Recursive-descent parser for the feature DSL.

Grammar, loosest binding first::

    expr   := sum (('<' | '<=' | '>' | '>=' | '==') sum)?
    sum    := term (('+' | '-') term)*
    term   := power (('*' | '/') power)*
    power  := unary ('^' power)?             # right-associative
    unary  := '-' NUMBER | '-' unary | atom  # '-' before a literal folds into it
    atom   := NUMBER | ident '==' STRING | func '(' args ')' | ident | '(' expr ')'

Identifiers are ``[A-Za-z_][A-Za-z0-9_]*`` or backtick-quoted for
arbitrary column names. Comparisons do not chain.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .ast import Binary, CatFlag, ColumnRef, Compare, Const, Expr, IfThenElse, Unary, walk


class DslError(ValueError):
    pass


class DslSyntaxError(DslError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class DslArityError(DslSyntaxError):
    pass


FUNCTIONS = {
    "log": 1, "log1p": 1, "sqrt": 1, "abs": 1, "square": 1,
    "min": 2, "max": 2, "if": 3,
}
COMPARE_TOKENS = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "==": "eq"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<quoted>`(?:[^`\\]|\\.)*`)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<op><=|>=|==|[-+*/^<>(),])
    """,
    re.VERBOSE,
)
_UNESCAPE_RE = re.compile(r"\\(.)")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int
    value: object = None


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        raw = m.group()
        if kind == "number":
            tokens.append(Token(kind, raw, pos, float(raw)))
        elif kind == "ident":
            tokens.append(Token(kind, raw, pos, raw))
        elif kind == "quoted":
            tokens.append(Token("ident", raw, pos, _UNESCAPE_RE.sub(r"\1", raw[1:-1])))
        elif kind == "string":
            tokens.append(Token(kind, raw, pos, _UNESCAPE_RE.sub(r"\1", raw[1:-1])))
        elif kind == "op":
            tokens.append(Token(kind, raw, pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def is_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def expect(self, op: str) -> Token:
        if not self.is_op(op):
            found = self.tok.text or "end of input"
            raise DslSyntaxError(f"expected {op!r}, found {found!r}", self.tok.pos)
        return self.advance()

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise DslSyntaxError("empty expression", 0)
        expr = self.expr()
        if self.tok.kind != "end":
            raise DslSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return expr

    def expr(self) -> Expr:
        left = self.sum()
        if self.tok.kind == "op" and self.tok.text in COMPARE_TOKENS:
            op = COMPARE_TOKENS[self.advance().text]
            right = self.sum()
            if self.tok.kind == "op" and self.tok.text in COMPARE_TOKENS:
                raise DslSyntaxError("comparisons cannot be chained", self.tok.pos)
            return Compare(op, left, right)
        return left

    def sum(self) -> Expr:
        left = self.term()
        while self.is_op("+", "-"):
            op = "add" if self.advance().text == "+" else "sub"
            left = Binary(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.power()
        while self.is_op("*", "/"):
            op = "mul" if self.advance().text == "*" else "div"
            left = Binary(op, left, self.power())
        return left

    def power(self) -> Expr:
        base = self.unary()
        if self.is_op("^"):
            self.advance()
            return Binary("pow", base, self.power())
        return base

    def unary(self) -> Expr:
        if self.is_op("-"):
            self.advance()
            if self.tok.kind == "number":
                return Const(-self.advance().value)
            return Unary("neg", self.unary())
        return self.atom()

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Const(tok.value)
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(" and tok.text in FUNCTIONS:
                return self.call()
            if nxt.kind == "op" and nxt.text == "(":
                raise DslSyntaxError(f"unknown function {tok.value!r}", tok.pos)
            if nxt.kind == "op" and nxt.text == "==" and self.peek(2).kind == "string":
                self.advance()
                self.advance()
                return CatFlag(tok.value, self.advance().value)
            self.advance()
            return ColumnRef(tok.value)
        if self.is_op("("):
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "string":
            raise DslSyntaxError("string literals only appear as `column == \"token\"`", tok.pos)
        found = tok.text or "end of input"
        raise DslSyntaxError(f"unexpected {found!r}", tok.pos)

    def call(self) -> Expr:
        name_tok = self.advance()
        self.expect("(")
        args = []
        if not self.is_op(")"):
            args.append(self.expr())
            while self.is_op(","):
                self.advance()
                args.append(self.expr())
        self.expect(")")
        arity = FUNCTIONS[name_tok.text]
        if len(args) != arity:
            raise DslArityError(
                f"{name_tok.text}() takes {arity} argument(s), got {len(args)}", name_tok.pos
            )
        name = name_tok.text
        if arity == 1:
            return Unary(name, args[0])
        if arity == 2:
            return Binary(name, args[0], args[1])
        return IfThenElse(*args)


def parse(text: str) -> Expr:
    """Parse DSL source into an expression tree."""
    expr = _Parser(text).parse()
    for node in walk(expr):
        if isinstance(node, Const) and not math.isfinite(node.value):
            raise DslSyntaxError("numeric literal overflows", 0)
    return expr
