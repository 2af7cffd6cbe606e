"""Mixed trigonometric-polynomial expressions.

An expression is a small immutable tree (:class:`Const`, :class:`Var`,
:class:`Add`, :class:`Mul`, :class:`Pow`, :class:`Cos`, :class:`Sin`).
Trigonometric arguments must be affine in the variables, which keeps the
class closed under linear changes of variables and makes expansion finite.

Grammar accepted by :func:`parse`::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*     divisors must be constant
    unary   := "-" unary | power
    power   := atom ("^" INTEGER)?
    atom    := NUMBER | "pi" | IDENT | ("cos" | "sin") "(" expr ")" | "(" expr ")"

:func:`flatten` turns an expression into a canonical sum of
:class:`MonomialTerm`, each a coefficient times a product over distinct
variables of ``v^p cos^c(a v) sin^s(a v)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Union

import numpy as np

from .distributions import _frequency_weights

__all__ = [
    "DEFAULT_TERM_LIMIT",
    "ExprError",
    "ExprSyntaxError",
    "NonAffineError",
    "TermLimitError",
    "Expr",
    "Const",
    "Var",
    "Add",
    "Mul",
    "Pow",
    "Cos",
    "Sin",
    "MonomialTerm",
    "as_expr",
    "parse",
    "to_text",
    "affine_form",
    "variables",
    "evaluate",
    "substitute",
    "diff",
    "flatten",
    "flatten_poly",
    "terms_to_expr",
    "evaluate_terms",
    "poly_add",
    "poly_mul",
    "poly_pow",
    "trig_of_affine",
]

DEFAULT_TERM_LIMIT = 10**6


class ExprError(ValueError):
    """Malformed expression."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class NonAffineError(ExprError):
    """A trigonometric argument is not affine in the variables."""


class TermLimitError(MemoryError):
    """Expansion produced more terms than the configured cap."""


Number = Union[int, float]


class Expr:
    """Base node.  Arithmetic operators build new trees."""

    __slots__ = ()

    def __add__(self, other):
        return Add((self, as_expr(other)))

    def __radd__(self, other):
        return Add((as_expr(other), self))

    def __sub__(self, other):
        return Add((self, _negate(as_expr(other))))

    def __rsub__(self, other):
        return Add((as_expr(other), _negate(self)))

    def __mul__(self, other):
        return Mul((self, as_expr(other)))

    def __rmul__(self, other):
        return Mul((as_expr(other), self))

    def __neg__(self):
        return _negate(self)

    def __pow__(self, n):
        return Pow(self, n)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Add(Expr):
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(as_expr(t) for t in self.terms))
        if not self.terms:
            raise ExprError("empty sum")

    def __repr__(self):
        return f"Add{list(self.terms)!r}"


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(as_expr(f) for f in self.factors))
        if not self.factors:
            raise ExprError("empty product")

    def __repr__(self):
        return f"Mul{list(self.factors)!r}"


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr
    exp: int

    def __post_init__(self):
        object.__setattr__(self, "base", as_expr(self.base))
        exp = self.exp
        if isinstance(exp, float) and exp.is_integer():
            exp = int(exp)
        if not isinstance(exp, (int, np.integer)) or isinstance(exp, bool) or exp < 0:
            raise ExprError(f"exponent must be a nonnegative integer, got {self.exp!r}")
        object.__setattr__(self, "exp", int(exp))

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exp})"


@dataclass(frozen=True, repr=False)
class Cos(Expr):
    arg: Expr

    def __post_init__(self):
        object.__setattr__(self, "arg", as_expr(self.arg))
        affine_form(self.arg)

    def __repr__(self):
        return f"Cos({self.arg!r})"


@dataclass(frozen=True, repr=False)
class Sin(Expr):
    arg: Expr

    def __post_init__(self):
        object.__setattr__(self, "arg", as_expr(self.arg))
        affine_form(self.arg)

    def __repr__(self):
        return f"Sin({self.arg!r})"


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool):
        return Const(float(x))
    if isinstance(x, str):
        return parse(x)
    raise TypeError(f"cannot convert {type(x).__name__} to an expression")


def _negate(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        return Mul((Const(-e.factors[0].value),) + e.factors[1:])
    if isinstance(e, Mul):
        return Mul((Const(-1.0),) + e.factors)
    return Mul((Const(-1.0), e))


# ---------------------------------------------------------------------------
# Parsing and printing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)

_FUNCTIONS = {"cos": Cos, "sin": Sin}


class _Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        else:
            for i, ch in enumerate(m.group()):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, tok.line, tok.column)

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            found = tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}", tok)
        return tok

    def parse(self) -> Expr:
        if self.peek().kind == "eof":
            raise self.error("empty expression")
        e = self.expr()
        if self.peek().kind != "eof":
            raise self.error(f"unexpected {self.peek().text!r}")
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek().text in ("+", "-"):
            op = self.next().text
            t = self.term()
            terms.append(t if op == "+" else _negate(t))
        return terms[0] if len(terms) == 1 else Add(tuple(terms))

    def term(self) -> Expr:
        factors = [self.unary()]
        while self.peek().text in ("*", "/"):
            op = self.next()
            f = self.unary()
            if op.text == "/":
                if variables(f):
                    raise self.error("divisor must be a constant", op)
                value = float(evaluate(f, {}))
                if value == 0.0:
                    raise self.error("division by zero", op)
                f = Const(1.0 / value)
            factors.append(f)
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.next()
            return _negate(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().text == "^":
            self.next()
            tok = self.next()
            if tok.kind != "num":
                raise self.error("exponent must be a nonnegative integer literal", tok)
            value = float(tok.text)
            if not value.is_integer():
                raise self.error(f"non-integer exponent {tok.text}", tok)
            return Pow(base, int(value))
        return base

    def atom(self) -> Expr:
        tok = self.next()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "ident":
            if tok.text in _FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                try:
                    return _FUNCTIONS[tok.text](arg)
                except NonAffineError as exc:
                    raise ExprSyntaxError(str(exc), tok.line, tok.column) from None
            if tok.text == "pi":
                return Const(math.pi)
            return Var(tok.text)
        if tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}", tok)


def parse(text: str) -> Expr:
    """Parse expression text into a tree.

    Raises :class:`ExprSyntaxError` (carrying ``line`` and ``column``) on
    malformed input, non-integer exponents and non-affine trig arguments.
    """
    return _Parser(text).parse()


def to_text(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_text(e))`` rebuilds the same tree."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return " + ".join(
            f"({to_text(t)})" if isinstance(t, Add) else to_text(t) for t in e.terms
        )
    if isinstance(e, Mul):
        return " * ".join(
            f"({to_text(f)})" if isinstance(f, (Add, Mul)) else to_text(f)
            for f in e.factors
        )
    if isinstance(e, Pow):
        b = e.base
        simple = isinstance(b, Var) or (isinstance(b, Const) and math.copysign(1.0, b.value) > 0)
        simple = simple or isinstance(b, (Cos, Sin))
        base = to_text(b) if simple else f"({to_text(b)})"
        return f"{base}^{e.exp}"
    if isinstance(e, Cos):
        return f"cos({to_text(e.arg)})"
    if isinstance(e, Sin):
        return f"sin({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Structural helpers


def variables(e: Expr) -> frozenset:
    """Names of all variables occurring in ``e``."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    return frozenset().union(*(variables(c) for c in _children(e)))


def _children(e: Expr) -> tuple:
    if isinstance(e, Add):
        return e.terms
    if isinstance(e, Mul):
        return e.factors
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, (Cos, Sin)):
        return (e.arg,)
    return ()


def affine_form(e: Expr) -> tuple[dict[str, float], float]:
    """Return ``(coefficients, offset)`` with ``e == sum a_v v + b``.

    Raises :class:`NonAffineError` when ``e`` is not affine.
    """
    if isinstance(e, Const):
        return {}, e.value
    if isinstance(e, Var):
        return {e.name: 1.0}, 0.0
    if not variables(e):
        return {}, float(evaluate(e, {}))
    if isinstance(e, Add):
        coeffs: dict[str, float] = {}
        offset = 0.0
        for t in e.terms:
            c, b = affine_form(t)
            for k, v in c.items():
                coeffs[k] = coeffs.get(k, 0.0) + v
            offset += b
        return coeffs, offset
    if isinstance(e, Mul):
        varying = [f for f in e.factors if variables(f)]
        if len(varying) != 1:
            raise NonAffineError(f"non-affine trigonometric argument: {to_text(e)}")
        scale = 1.0
        for f in e.factors:
            if f is not varying[0]:
                scale *= float(evaluate(f, {}))
        c, b = affine_form(varying[0])
        return {k: scale * v for k, v in c.items()}, scale * b
    if isinstance(e, Pow):
        if e.exp == 1:
            return affine_form(e.base)
        if e.exp == 0:
            return {}, 1.0
    raise NonAffineError(f"non-affine trigonometric argument: {to_text(e)}")


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate ``e`` pointwise; ``env`` values may be floats or numpy arrays."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise KeyError(f"no value for variable {e.name!r}") from None
    if isinstance(e, Add):
        total = evaluate(e.terms[0], env)
        for t in e.terms[1:]:
            total = total + evaluate(t, env)
        return total
    if isinstance(e, Mul):
        prod = evaluate(e.factors[0], env)
        for f in e.factors[1:]:
            prod = prod * evaluate(f, env)
        return prod
    if isinstance(e, Pow):
        return evaluate(e.base, env) ** e.exp
    if isinstance(e, Cos):
        return np.cos(evaluate(e.arg, env))
    if isinstance(e, Sin):
        return np.sin(evaluate(e.arg, env))
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expr, mapping: Mapping[str, object]) -> Expr:
    """Replace variables by expressions (or numbers)."""
    if isinstance(e, Var):
        return as_expr(mapping[e.name]) if e.name in mapping else e
    if isinstance(e, Const):
        return e
    if isinstance(e, Add):
        return Add(tuple(substitute(t, mapping) for t in e.terms))
    if isinstance(e, Mul):
        return Mul(tuple(substitute(f, mapping) for f in e.factors))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exp)
    if isinstance(e, Cos):
        return Cos(substitute(e.arg, mapping))
    if isinstance(e, Sin):
        return Sin(substitute(e.arg, mapping))
    raise TypeError(f"not an expression: {e!r}")


def diff(e: Expr, name: str) -> Expr:
    """Symbolic partial derivative with respect to variable ``name``."""
    if name not in variables(e):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0)
    if isinstance(e, Add):
        parts = [diff(t, name) for t in e.terms if name in variables(t)]
        return parts[0] if len(parts) == 1 else Add(tuple(parts))
    if isinstance(e, Mul):
        parts = []
        for i, f in enumerate(e.factors):
            if name not in variables(f):
                continue
            rest = e.factors[:i] + e.factors[i + 1 :]
            parts.append(Mul(rest + (diff(f, name),)) if rest else diff(f, name))
        return parts[0] if len(parts) == 1 else Add(tuple(parts))
    if isinstance(e, Pow):
        if e.exp == 0:
            return Const(0.0)
        inner = diff(e.base, name)
        if e.exp == 1:
            return inner
        return Mul((Const(float(e.exp)), Pow(e.base, e.exp - 1), inner))
    if isinstance(e, Cos):
        return Mul((Const(-1.0), Sin(e.arg), diff(e.arg, name)))
    if isinstance(e, Sin):
        return Mul((Cos(e.arg), diff(e.arg, name)))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Canonical expansion
#
# A polynomial is a dict mapping a key to its coefficient.  A key is a tuple
# of (name, (p, c, s, a)) sorted by name, meaning the product over entries
# of name^p * cos(a*name)^c * sin(a*name)^s.  Trig-free factors use a = 1.0.


class MonomialTerm(NamedTuple):
    coefficient: float
    factors: tuple

    @property
    def factor_map(self) -> dict:
        return dict(self.factors)


Poly = dict


def _normalize_trig(kind: str, freq: float, p: int) -> tuple[float, tuple | None]:
    """Canonical single trig factor; returns (sign, factor) or (0, None)."""
    if freq == 0.0:
        if kind == "cos":
            return 1.0, (p, 0, 0, 1.0)
        return 0.0, None
    if freq < 0:
        if kind == "cos":
            return 1.0, (p, 1, 0, -freq)
        return -1.0, (p, 0, 1, -freq)
    return 1.0, ((p, 1, 0, freq) if kind == "cos" else (p, 0, 1, freq))


@lru_cache(maxsize=None)
def _linearize(c: int, s: int) -> tuple:
    """cos^c sin^s as a sum of (coef, kind, m) meaning coef * kind(m x)."""
    out = []
    denom = 2 ** (c + s)
    if s % 2 == 0:
        sign = (-1) ** (s // 2)
        for m, w in _frequency_weights(c, s):
            out.append((w / (denom * sign), "cos", m))
    else:
        sign = (-1) ** ((s - 1) // 2)
        for m, w in _frequency_weights(c, s):
            out.append((w / (denom * sign), "sin", m))
    return tuple(out)


_PRODUCT_TO_SUM = {
    ("cos", "cos"): (("cos", -1, 0.5), ("cos", 1, 0.5)),
    ("sin", "sin"): (("cos", -1, 0.5), ("cos", 1, -0.5)),
    ("sin", "cos"): (("sin", 1, 0.5), ("sin", -1, 0.5)),
    ("cos", "sin"): (("sin", 1, 0.5), ("sin", -1, -0.5)),
}


def _combine_factors(f1: tuple, f2: tuple) -> list[tuple[float, tuple]]:
    """Product of two factors on the same variable as a list of (coef, factor)."""
    p1, c1, s1, a1 = f1
    p2, c2, s2, a2 = f2
    if c2 == 0 and s2 == 0:
        return [(1.0, (p1 + p2, c1, s1, a1))]
    if c1 == 0 and s1 == 0:
        return [(1.0, (p1 + p2, c2, s2, a2))]
    if a1 == a2:
        return [(1.0, (p1 + p2, c1 + c2, s1 + s2, a1))]
    # Distinct frequencies: product-to-sum on the linearized powers.
    p = p1 + p2
    acc: dict[tuple, float] = {}
    for w1, k1, m1 in _linearize(c1, s1):
        for w2, k2, m2 in _linearize(c2, s2):
            fa, fb = m1 * a1, m2 * a2
            for kind, sgn, half in _PRODUCT_TO_SUM[(k1, k2)]:
                sign, factor = _normalize_trig(kind, fa + sgn * fb, p)
                if factor is None:
                    continue
                acc[factor] = acc.get(factor, 0.0) + w1 * w2 * half * sign
    return [(w, f) for f, w in acc.items() if w != 0.0]


def _mul_keys(k1: tuple, k2: tuple) -> list[tuple[float, tuple]]:
    if not k1:
        return [(1.0, k2)]
    if not k2:
        return [(1.0, k1)]
    merged = dict(k1)
    clash = []
    for name, f in k2:
        if name in merged:
            clash.append((name, f))
        else:
            merged[name] = f
    if not clash:
        return [(1.0, tuple(sorted(merged.items())))]
    results = [(1.0, merged)]
    for name, f in clash:
        nxt = []
        for coef, m in results:
            for w, nf in _combine_factors(m[name], f):
                mm = dict(m)
                mm[name] = nf
                nxt.append((coef * w, mm))
        results = nxt
    return [(c, tuple(sorted(m.items()))) for c, m in results]


def _check_limit(n: int, limit: int) -> None:
    if n > limit:
        raise TermLimitError(f"expansion exceeded the term limit of {limit}")


def poly_add(a: Poly, b: Poly, scale: float = 1.0) -> Poly:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + scale * v
    return out


def poly_mul(a: Poly, b: Poly, limit: int = DEFAULT_TERM_LIMIT) -> Poly:
    out: dict = {}
    get = out.get
    for k1, c1 in a.items():
        for k2, c2 in b.items():
            c = c1 * c2
            for w, k in _mul_keys(k1, k2):
                out[k] = get(k, 0.0) + c * w
        _check_limit(len(out), limit)
    return out


def poly_pow(a: Poly, n: int, limit: int = DEFAULT_TERM_LIMIT) -> Poly:
    result: Poly = {(): 1.0}
    base = a
    while n:
        if n & 1:
            result = poly_mul(result, base, limit)
        n >>= 1
        if n:
            base = poly_mul(base, base, limit)
    return result


def trig_of_affine(
    kind: str,
    coeffs: Mapping[str, float],
    offset: float,
    power: int = 1,
    limit: int = DEFAULT_TERM_LIMIT,
) -> Poly:
    """Expand ``kind(sum a_v v + offset)^power`` by repeated angle addition."""
    c_acc: Poly = {(): math.cos(offset)}
    s_acc: Poly = {(): math.sin(offset)}
    for name in sorted(coeffs):
        a = coeffs[name]
        if a == 0.0:
            continue
        mag = abs(a)
        cos_t = {((name, (0, 1, 0, mag)),): 1.0}
        sin_t = {((name, (0, 0, 1, mag)),): 1.0 if a > 0 else -1.0}
        c_new = poly_add(poly_mul(c_acc, cos_t, limit), poly_mul(s_acc, sin_t, limit), -1.0)
        s_new = poly_add(poly_mul(s_acc, cos_t, limit), poly_mul(c_acc, sin_t, limit))
        c_acc, s_acc = c_new, s_new
    base = c_acc if kind == "cos" else s_acc
    base = {k: v for k, v in base.items() if v != 0.0}
    return base if power == 1 else poly_pow(base, power, limit)


def flatten_poly(e: Expr, limit: int = DEFAULT_TERM_LIMIT) -> Poly:
    """Expand ``e`` into the unsorted canonical dictionary form."""
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0.0 else {}
    if isinstance(e, Var):
        return {((e.name, (1, 0, 0, 1.0)),): 1.0}
    if isinstance(e, Add):
        out: Poly = {}
        for t in e.terms:
            out = poly_add(out, flatten_poly(t, limit))
            _check_limit(len(out), limit)
        return out
    if isinstance(e, Mul):
        out = {(): 1.0}
        for f in e.factors:
            out = poly_mul(out, flatten_poly(f, limit), limit)
        return out
    if isinstance(e, Pow):
        return poly_pow(flatten_poly(e.base, limit), e.exp, limit)
    if isinstance(e, (Cos, Sin)):
        coeffs, offset = affine_form(e.arg)
        return trig_of_affine("cos" if isinstance(e, Cos) else "sin", coeffs, offset, 1, limit)
    raise TypeError(f"not an expression: {e!r}")


def _sorted_terms(poly: Poly) -> list[MonomialTerm]:
    return [MonomialTerm(c, k) for k, c in sorted(poly.items()) if c != 0.0]


@lru_cache(maxsize=4096)
def _flatten_cached(e: Expr, limit: int) -> tuple:
    return tuple(_sorted_terms(flatten_poly(e, limit)))


def flatten(e: Expr | str, limit: int = DEFAULT_TERM_LIMIT) -> list[MonomialTerm]:
    """Canonical expansion of ``e`` as a sorted list of :class:`MonomialTerm`.

    Products are distributed, integer powers expanded and trigonometric
    functions of sums split by angle addition until every trig factor has a
    single scaled variable as argument.  Like terms are merged and zero
    coefficients dropped.  Results are memoized per expression.
    """
    return list(_flatten_cached(as_expr(e), limit))


def terms_to_expr(terms: Iterable[MonomialTerm]) -> Expr:
    """Rebuild an expression tree from flattened terms."""
    parts = []
    for coef, factors in terms:
        fs: list[Expr] = [Const(coef)]
        for name, (p, c, s, a) in factors:
            v = Var(name)
            if p:
                fs.append(v if p == 1 else Pow(v, p))
            arg = v if a == 1.0 else Mul((Const(a), v))
            if c:
                fs.append(Cos(arg) if c == 1 else Pow(Cos(arg), c))
            if s:
                fs.append(Sin(arg) if s == 1 else Pow(Sin(arg), s))
        parts.append(fs[0] if len(fs) == 1 else Mul(tuple(fs)))
    if not parts:
        return Const(0.0)
    return parts[0] if len(parts) == 1 else Add(tuple(parts))


def evaluate_terms(terms: Iterable[MonomialTerm], env: Mapping[str, object]):
    """Evaluate flattened terms pointwise."""
    total = 0.0
    for coef, factors in terms:
        value = coef
        for name, (p, c, s, a) in factors:
            x = env[name]
            if p:
                value = value * x**p
            if c:
                value = value * np.cos(a * x) ** c
            if s:
                value = value * np.sin(a * x) ** s
        total = total + value
    return total
