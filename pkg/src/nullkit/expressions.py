"""Recursive-descent parser and analytic differentiation for scalar expressions.

Grammar (loosest binding first)::

    expr    := term (('+'|'-') term)*
    term    := factor (('*'|'/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' factor)?          # right associative
    atom    := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

``pi`` and ``e`` are constants, every other identifier is a free variable
unless it is one of the known function names (which then must be called).
Printing and parsing round-trip to an identical AST; floats are printed with
repr so the round trip is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainEvalError, ParseError

UNARY_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "asin": np.arcsin,
    "acos": np.arccos,
    "atan": np.arctan,
    "asinh": np.arcsinh,
    "acosh": np.arccosh,
    "atanh": np.arctanh,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

BINARY_FUNCTIONS = {"min": np.minimum, "max": np.maximum}

FUNCTION_ARITY = {name: 1 for name in UNARY_FUNCTIONS}
FUNCTION_ARITY.update({name: 2 for name in BINARY_FUNCTIONS})

CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Const:
    name: str  # 'pi' or 'e'


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Node = Num | Const | Var | Neg | Bin | Call


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_PUNCT = {"+", "-", "*", "/", "^", "(", ")", ","}


def _tokenize(text: str):
    tokens = []  # (kind, value, position)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c in _PUNCT:
            tokens.append(("punct", c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ParseError(f"bad number literal '{lit}'", i, ("number",))
            tokens.append(("number", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i, ())
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_punct(self, value):
        kind, val, offset = self.peek()
        if kind == "punct" and val == value:
            return self.advance()
        raise ParseError(f"expected {value!r}, found {val!r}", offset, (value,))

    def parse(self):
        node = self.expr()
        kind, val, offset = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected trailing input {val!r}", offset, ("end of input",))
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "punct" and val in "+-":
                self.advance()
                node = Bin(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "punct" and val in "*/":
                self.advance()
                node = Bin(val, node, self.factor())
            else:
                return node

    def factor(self):
        kind, val, _ = self.peek()
        if kind == "punct" and val == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "punct" and val == "^":
            self.advance()
            return Bin("^", base, self.factor())
        return base

    def atom(self):
        kind, val, offset = self.advance()
        if kind == "number":
            return Num(val)
        if kind == "ident":
            nxt_kind, nxt_val, _ = self.peek()
            if nxt_kind == "punct" and nxt_val == "(":
                if val not in FUNCTION_ARITY:
                    raise ParseError(f"unknown function '{val}'", offset,
                                     tuple(sorted(FUNCTION_ARITY)))
                self.advance()
                args = [self.expr()]
                while True:
                    k, v, _ = self.peek()
                    if k == "punct" and v == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_punct(")")
                if len(args) != FUNCTION_ARITY[val]:
                    raise ParseError(
                        f"'{val}' takes {FUNCTION_ARITY[val]} argument(s), got {len(args)}",
                        offset, ())
                return Call(val, tuple(args))
            if val in CONSTANTS:
                return Const(val)
            if val in FUNCTION_ARITY:
                raise ParseError(f"function '{val}' must be called", offset, ("(",))
            return Var(val)
        if kind == "punct" and val == "(":
            node = self.expr()
            self.expect_punct(")")
            return node
        raise ParseError(f"expected an operand, found {val!r}", offset,
                         ("number", "identifier", "("))


def parse(text: str) -> Node:
    """Parse ``text`` into an AST; raises ParseError with a byte offset."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node) -> int:
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def to_text(node: Node) -> str:
    """Render an AST; parse(to_text(node)) == node."""
    if isinstance(node, Num):
        if node.value < 0:  # keep negatives printable inside the grammar
            return f"-{_fmt(-node.value)}"
        return _fmt(node.value)
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_text(node.arg)
        if _prec(node.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Bin):
        lhs, rhs = to_text(node.left), to_text(node.right)
        p = _PREC[node.op]
        if node.op == "^":  # right associative
            if _prec(node.left) <= p:
                lhs = f"({lhs})"
            if _prec(node.right) < p:
                rhs = f"({rhs})"
        else:  # left associative: parenthesize equal-precedence right children
            if _prec(node.left) < p:
                lhs = f"({lhs})"
            if _prec(node.right) <= p:
                rhs = f"({rhs})"
        return f"{lhs} {node.op} {rhs}" if node.op in "+-" else f"{lhs}{node.op}{rhs}"
    raise TypeError(f"not an AST node: {node!r}")


def _fmt(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(node: Node, env: dict):
    """Evaluate an AST against variable bindings; arrays broadcast."""
    try:
        with np.errstate(all="ignore"):
            out = _eval(node, env)
    except (ZeroDivisionError, OverflowError, ValueError) as err:
        raise DomainEvalError(f"expression '{to_text(node)}': {err}",
                              position=0) from None
    if np.isscalar(out) or isinstance(out, (float, np.floating)):
        if not math.isfinite(out):
            raise DomainEvalError(f"expression '{to_text(node)}' is not finite "
                                  f"at {env}", position=0)
    return out


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise DomainEvalError(f"unbound variable '{node.name}'") from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Bin):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        if node.op == "^":
            return _power(a, b)
        raise TypeError(node.op)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        fn = UNARY_FUNCTIONS.get(node.fn) or BINARY_FUNCTIONS[node.fn]
        return fn(*args)
    raise TypeError(f"not an AST node: {node!r}")


def _power(a, b):
    # integer exponents keep negative bases legal (r^2, 1/r, ...)
    if np.isscalar(b) and float(b) == int(b):
        return np.power(a, int(b))
    return np.power(a, b)


def variables(node: Node) -> set:
    """Free variable names used by the expression."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return variables(node.arg)
    if isinstance(node, Bin):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= variables(a)
        return out
    return set()


def bind(node: Node, values: dict) -> Node:
    """Substitute numeric values for a subset of the variables."""
    if isinstance(node, Var) and node.name in values:
        return Num(float(values[node.name]))
    if isinstance(node, Neg):
        return _neg(bind(node.arg, values))
    if isinstance(node, Bin):
        return _mk_bin(node.op, bind(node.left, values), bind(node.right, values))
    if isinstance(node, Call):
        return Call(node.fn, tuple(bind(a, values) for a in node.args))
    return node


# ---------------------------------------------------------------------------
# differentiation (with light simplification so third derivatives stay small)
# ---------------------------------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


def _add(a, b):
    if _is_num(a, 0):
        return b
    if _is_num(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a, b):
    if _is_num(b, 0):
        return a
    if _is_num(a, 0):
        return _neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_num(a, 0) or _is_num(b, 0):
        return ZERO
    if _is_num(a, 1):
        return b
    if _is_num(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def _div(a, b):
    if _is_num(a, 0):
        return ZERO
    if _is_num(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0:
        return Num(a.value / b.value)
    return Bin("/", a, b)


def _pow(a, b):
    if _is_num(b, 0):
        return ONE
    if _is_num(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value ** b.value)
    return Bin("^", a, b)


def _mk_bin(op, a, b):
    return {"+": _add, "-": _sub, "*": _mul, "/": _div, "^": _pow}[op](a, b)


_DERIV_RULES = {
    "sin": lambda u: Call("cos", (u,)),
    "cos": lambda u: _neg(Call("sin", (u,))),
    "tan": lambda u: _div(ONE, _pow(Call("cos", (u,)), Num(2))),
    "sinh": lambda u: Call("cosh", (u,)),
    "cosh": lambda u: Call("sinh", (u,)),
    "tanh": lambda u: _div(ONE, _pow(Call("cosh", (u,)), Num(2))),
    "asin": lambda u: _div(ONE, Call("sqrt", (_sub(ONE, _pow(u, Num(2))),))),
    "acos": lambda u: _neg(_div(ONE, Call("sqrt", (_sub(ONE, _pow(u, Num(2))),)))),
    "atan": lambda u: _div(ONE, _add(ONE, _pow(u, Num(2)))),
    "asinh": lambda u: _div(ONE, Call("sqrt", (_add(ONE, _pow(u, Num(2))),))),
    "acosh": lambda u: _div(ONE, Call("sqrt", (_sub(_pow(u, Num(2)), ONE),))),
    "atanh": lambda u: _div(ONE, _sub(ONE, _pow(u, Num(2)))),
    "exp": lambda u: Call("exp", (u,)),
    "ln": lambda u: _div(ONE, u),
    "sqrt": lambda u: _div(ONE, _mul(Num(2), Call("sqrt", (u,)))),
    "abs": lambda u: _div(u, Call("abs", (u,))),
}


def derivative(node: Node, var: str, order: int = 1) -> Node:
    """Analytic derivative of ``node`` with respect to ``var``."""
    out = node
    for _ in range(order):
        out = _diff(out, var)
    return out


def _diff(node, var):
    if isinstance(node, (Num, Const)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return _neg(_diff(node.arg, var))
    if isinstance(node, Bin):
        a, b = node.left, node.right
        da, db = _diff(a, var), _diff(b, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2)))
        if node.op == "^":
            if isinstance(b, Num):
                return _mul(_mul(b, _pow(a, Num(b.value - 1))), da)
            # u^v = exp(v ln u)
            term = _add(_mul(db, Call("ln", (a,))), _div(_mul(b, da), a))
            return _mul(_pow(a, b), term)
        raise TypeError(node.op)
    if isinstance(node, Call):
        if node.fn in ("min", "max"):
            raise DomainEvalError(f"'{node.fn}' is not differentiable")
        (u,) = node.args
        return _mul(_DERIV_RULES[node.fn](u), _diff(u, var))
    raise TypeError(f"not an AST node: {node!r}")
