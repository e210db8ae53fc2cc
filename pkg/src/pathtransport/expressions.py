"""Arithmetic expressions over chart coordinates.

Small recursive-descent parser for the expression language used to define
connection coefficients, vector fields and parametric curves in configs:
numeric literals, variables, ``+ - * /``, unary minus, parentheses and the
functions sin, cos, tan, exp, log, sqrt, pow, abs.  Trees support numeric
evaluation, symbolic differentiation and printing back to parseable source.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ExpressionError

FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "tan": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "pow": 2,
    "abs": 1,
}

_FUNC_IMPL = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "pow": pow,
    "abs": abs,
}

_VAR_PATTERN = re.compile(r"x\d+\Z")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[+\-*/(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            raise ExpressionError(f"unexpected character {stripped[0]!r}", pos)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(src)))
    return tokens


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, value, pos = self.next()
        if kind != "op" or value != op:
            raise ExpressionError(f"expected {op!r}", pos)

    def parse_expr(self):
        node = self.parse_term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.next()
                node = Bin(value, node, self.parse_term())
            else:
                return node

    def parse_term(self):
        node = self.parse_unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.next()
                node = Bin(value, node, self.parse_unary())
            else:
                return node

    def parse_unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.next()
            return Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self):
        kind, value, pos = self.next()
        if kind == "num":
            return Num(value)
        if kind == "ident":
            peek_kind, peek_value, _ = self.peek()
            if peek_kind == "op" and peek_value == "(":
                if value not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {value!r}", pos)
                self.next()
                args = [self.parse_expr()]
                while True:
                    k, v, p = self.peek()
                    if k == "op" and v == ",":
                        self.next()
                        args.append(self.parse_expr())
                    else:
                        break
                self.expect_op(")")
                if len(args) != FUNCTIONS[value]:
                    raise ExpressionError(
                        f"{value} takes {FUNCTIONS[value]} argument(s), got {len(args)}",
                        pos,
                    )
                return Call(value, tuple(args))
            if self.variables is not None:
                if value not in self.variables:
                    raise ExpressionError(f"unknown identifier {value!r}", pos)
            elif not _VAR_PATTERN.match(value):
                raise ExpressionError(f"unknown identifier {value!r}", pos)
            return Var(value)
        if kind == "op" and value == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ExpressionError("expected a value", pos)


def parse_expression(src, variables=None):
    """Parse ``src`` into an expression tree.

    ``variables`` is an optional collection of allowed identifiers; when
    omitted, any name of the form ``x1, x2, ...`` is accepted.
    """
    if not src or not src.strip():
        raise ExpressionError("empty expression", 0)
    parser = _Parser(_tokenize(src), set(variables) if variables is not None else None)
    node = parser.parse_expr()
    kind, _, pos = parser.peek()
    if kind != "end":
        raise ExpressionError("trailing input", pos)
    return node


def evaluate(node, env):
    """Evaluate a tree against ``env``, a name -> value mapping."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise ExpressionError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -evaluate(node.arg, env)
    if isinstance(node, Bin):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    return _FUNC_IMPL[node.fn](*(evaluate(a, env) for a in node.args))


def _is_num(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if _is_num(a, 0.0):
        return _neg(b)
    return Bin("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return Bin("/", a, b)


def _neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def differentiate(node, var):
    """Symbolic derivative of ``node`` with respect to variable name ``var``."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return _neg(differentiate(node.arg, var))
    if isinstance(node, Bin):
        da = differentiate(node.left, var)
        db = differentiate(node.right, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, node.right), _mul(node.left, db))
        # quotient rule
        num = _sub(_mul(da, node.right), _mul(node.left, db))
        return _div(num, _mul(node.right, node.right))
    a = node.args[0]
    da = differentiate(a, var)
    if node.fn == "sin":
        return _mul(Call("cos", (a,)), da)
    if node.fn == "cos":
        return _neg(_mul(Call("sin", (a,)), da))
    if node.fn == "tan":
        sec2 = _add(Num(1.0), _mul(Call("tan", (a,)), Call("tan", (a,))))
        return _mul(sec2, da)
    if node.fn == "exp":
        return _mul(Call("exp", (a,)), da)
    if node.fn == "log":
        return _div(da, a)
    if node.fn == "sqrt":
        return _div(da, _mul(Num(2.0), Call("sqrt", (a,))))
    if node.fn == "abs":
        # sign(a) * da; undefined at a = 0
        return _mul(_div(a, Call("abs", (a,))), da)
    # pow(a, b)
    b = node.args[1]
    db = differentiate(b, var)
    if _is_num(db, 0.0):
        down = _mul(b, Call("pow", (a, _sub(b, Num(1.0)))))
        return _mul(down, da)
    inner = _add(_mul(db, Call("log", (a,))), _div(_mul(b, da), a))
    return _mul(Call("pow", (a, b)), inner)


def to_string(node):
    """Print a tree back to source that parses to an equivalent tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"-({to_string(node.arg)})"
    if isinstance(node, Bin):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    args = ", ".join(to_string(a) for a in node.args)
    return f"{node.fn}({args})"


def compile_expression(node, var_names):
    """Compile a tree into a fast positional callable of ``var_names``."""
    source = f"lambda {', '.join(var_names)}: {to_string(node)}"
    return eval(source, {"__builtins__": {}, **_FUNC_IMPL})  # noqa: S307 - AST-printed source


def compile_array(trees, var_names):
    """Compile a nested sequence of trees into one callable.

    The callable takes the variables positionally and returns the same
    nesting as tuples of floats; one compiled function keeps per-point
    evaluation of whole coefficient arrays cheap.
    """

    def emit(obj):
        if isinstance(obj, (list, tuple)):
            inner = ", ".join(emit(o) for o in obj)
            return f"({inner},)"
        return to_string(obj)

    source = f"lambda {', '.join(var_names)}: {emit(trees)}"
    return eval(source, {"__builtins__": {}, **_FUNC_IMPL})  # noqa: S307
