"""Sparse multivariate polynomials with exact rational coefficients.

Terms are stored as ``{exponent tuple: Fraction}`` over an ordered tuple of
variable names. Zero coefficients are never stored. Two polynomials can only
be combined when their variable tuples are identical; use :meth:`MultiPoly.embed`
to move a polynomial into a larger variable list first.
"""

from __future__ import annotations

import re
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping

import numpy as np


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot use {value!r} as an exact coefficient")


class MultiPoly:
    __slots__ = ("variables", "terms")

    def __init__(self, variables: Iterable[str], terms: Mapping[tuple, object] | None = None):
        self.variables = tuple(variables)
        nv = len(self.variables)
        clean: dict[tuple[int, ...], Fraction] = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nv or any(e < 0 for e in exps):
                raise ValueError(f"bad exponent vector {exps} for variables {self.variables}")
            c = _to_fraction(coef)
            if c:
                clean[exps] = clean.get(exps, Fraction(0)) + c
                if not clean[exps]:
                    del clean[exps]
        self.terms = clean

    @classmethod
    def _raw(cls, variables: tuple, terms: dict) -> "MultiPoly":
        # Trusted constructor: terms already canonical.
        obj = cls.__new__(cls)
        obj.variables = variables
        obj.terms = terms
        return obj

    # -- constructors --------------------------------------------------
    @classmethod
    def zero(cls, variables) -> "MultiPoly":
        return cls._raw(tuple(variables), {})

    @classmethod
    def constant(cls, value, variables) -> "MultiPoly":
        variables = tuple(variables)
        c = _to_fraction(value)
        return cls._raw(variables, {(0,) * len(variables): c} if c else {})

    @classmethod
    def variable(cls, name: str, variables) -> "MultiPoly":
        variables = tuple(variables)
        if name not in variables:
            raise ValueError(f"unknown variable {name!r}; have {variables}")
        exps = tuple(int(v == name) for v in variables)
        return cls._raw(variables, {exps: Fraction(1)})

    # -- basic queries -------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self, variables: Iterable[str] | None = None) -> int:
        """Total degree, optionally restricted to a subset of the variables; -1 for zero."""
        if not self.terms:
            return -1
        if variables is None:
            return max(sum(e) for e in self.terms)
        idx = [self._index(v) for v in variables]
        return max(sum(e[i] for i in idx) for e in self.terms)

    def constant_term(self) -> Fraction:
        return self.terms.get((0,) * len(self.variables), Fraction(0))

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def free_variables(self) -> tuple[str, ...]:
        used = [any(e[i] for e in self.terms) for i in range(len(self.variables))]
        return tuple(v for v, u in zip(self.variables, used) if u)

    def _index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise ValueError(f"unknown variable {name!r}; have {self.variables}") from None

    def _check(self, other: "MultiPoly"):
        if self.variables != other.variables:
            raise ValueError(f"variable mismatch: {self.variables} vs {other.variables}")

    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            self._check(other)
            return other
        return MultiPoly.constant(other, self.variables)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other) -> "MultiPoly":
        other = self._coerce(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            s = terms.get(e)
            if s is None:
                terms[e] = c
            else:
                s += c
                if s:
                    terms[e] = s
                else:
                    del terms[e]
        return MultiPoly._raw(self.variables, terms)

    __radd__ = __add__

    def __neg__(self) -> "MultiPoly":
        return MultiPoly._raw(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "MultiPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "MultiPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "MultiPoly":
        if not isinstance(other, MultiPoly):
            c = _to_fraction(other)
            if not c:
                return MultiPoly.zero(self.variables)
            return MultiPoly._raw(self.variables, {e: v * c for e, v in self.terms.items()})
        self._check(other)
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return MultiPoly._raw(self.variables, {e: c for e, c in terms.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            if not other.is_constant() or other.is_zero():
                raise ZeroDivisionError("can only divide by a nonzero constant")
            other = other.constant_term()
        c = _to_fraction(other)
        if not c:
            raise ZeroDivisionError("division by zero")
        return self * (1 / c)

    def __pow__(self, k: int) -> "MultiPoly":
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = MultiPoly.constant(1, self.variables)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, MultiPoly):
            return self.variables == other.variables and self.terms == other.terms
        try:
            return self == MultiPoly.constant(other, self.variables)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash((self.variables, frozenset(self.terms.items())))

    # -- calculus and evaluation ---------------------------------------
    def diff(self, var: str) -> "MultiPoly":
        i = self._index(var)
        terms = {}
        for e, c in self.terms.items():
            if e[i]:
                ne = e[:i] + (e[i] - 1,) + e[i + 1 :]
                terms[ne] = c * e[i]
        return MultiPoly._raw(self.variables, terms)

    def substitute(self, assignment: Mapping[str, object]) -> "MultiPoly":
        """Exact substitution of values (numbers or polynomials over ``self.variables``).

        The variable list is unchanged; substituted variables simply no longer occur.
        """
        idx = {self._index(v): val for v, val in assignment.items()}
        result = MultiPoly.zero(self.variables)
        powers: dict = {}
        for e, c in self.terms.items():
            factor = Fraction(1)
            poly_factor = None
            kept = list(e)
            for i, val in idx.items():
                if not e[i]:
                    continue
                kept[i] = 0
                if isinstance(val, MultiPoly):
                    key = (i, e[i])
                    if key not in powers:
                        powers[key] = val**e[i]
                    poly_factor = powers[key] if poly_factor is None else poly_factor * powers[key]
                else:
                    factor *= _to_fraction(val) ** e[i]
            if not factor:
                continue
            term = MultiPoly._raw(self.variables, {tuple(kept): c * factor})
            if poly_factor is not None:
                term = term * poly_factor
            result = result + term
        return result

    def embed(self, variables: Iterable[str]) -> "MultiPoly":
        """Re-express over a variable list that contains all variables in use."""
        variables = tuple(variables)
        used = self.free_variables()
        missing = [v for v in used if v not in variables]
        if missing:
            raise ValueError(f"variables {missing} are not in target list {variables}")
        pos = [variables.index(v) if v in variables else None for v in self.variables]
        terms = {}
        for e, c in self.terms.items():
            ne = [0] * len(variables)
            for i, p in enumerate(pos):
                if p is not None:
                    ne[p] = e[i]
            terms[tuple(ne)] = c
        return MultiPoly._raw(variables, terms)

    def restrict(self, variables: Iterable[str]) -> "MultiPoly":
        """Drop unused variables, keeping ``variables`` (must cover those in use)."""
        return self.embed(variables)

    def evaluate(self, assignment: Mapping[str, object]) -> float:
        missing = [v for v in self.variables if v not in assignment]
        if missing:
            raise KeyError(f"no value for variables {missing}")
        vals = [_to_fraction(assignment[v]) for v in self.variables]
        total = Fraction(0)
        for e, c in self.terms.items():
            term = c
            for x, k in zip(vals, e):
                if k:
                    term *= x**k
            total += term
        return float(total)

    def coefficients(self) -> dict:
        return dict(self.terms)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(exponents, coefficients)`` arrays for fast vectorised float evaluation."""
        if not self.terms:
            return np.zeros((0, len(self.variables)), dtype=int), np.zeros(0)
        exps = np.array(list(self.terms.keys()), dtype=int)
        coefs = np.array([float(c) for c in self.terms.values()])
        return exps, coefs

    # -- printing ------------------------------------------------------
    def sorted_terms(self) -> list:
        return sorted(self.terms.items(), key=lambda t: (sum(t[0]), tuple(-x for x in t[0])))

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.sorted_terms():
            factors = []
            for v, k in zip(self.variables, e):
                if k == 1:
                    factors.append(v)
                elif k > 1:
                    factors.append(f"{v}^{k}")
            mag = abs(c)
            if not factors:
                body = str(mag)
            elif mag == 1:
                body = "*".join(factors)
            else:
                body = str(mag) + "*" + "*".join(factors)
            parts.append(("-" if c < 0 else "+", body))
        out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"MultiPoly({self.variables}, {str(self)!r})"


def poly_add(p: MultiPoly, q: MultiPoly) -> MultiPoly:
    return p + q


def poly_mul(p: MultiPoly, q: MultiPoly) -> MultiPoly:
    return p * q


def poly_diff(p: MultiPoly, var: str) -> MultiPoly:
    return p.diff(var)


def poly_eval(p: MultiPoly, assignment: Mapping[str, object]) -> float:
    return p.evaluate(assignment)


def unify(polys: Iterable[MultiPoly], order: Iterable[str] | None = None) -> list[MultiPoly]:
    """Embed polynomials into the union of their variable lists."""
    polys = list(polys)
    names: list[str] = list(order or [])
    for p in polys:
        for v in p.variables:
            if v not in names:
                names.append(v)
    return [p.embed(names) for p in polys]


# -- parsing -------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


class PolynomialSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {line}, column {col}: {text!r}")
        self.line, self.column = line, col


class _Parser:
    def __init__(self, text: str, variables: tuple[str, ...]):
        self.text = text
        self.variables = variables
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                break
            if m.group(0).strip():
                kind = "num" if m.group(1) else "id" if m.group(2) else "op"
                self.tokens.append((kind, m.group(m.lastindex), m.start(m.lastindex)))
            pos = m.end()
        self.i = 0

    def error(self, msg):
        pos = self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.text)
        raise PolynomialSyntaxError(msg, self.text, pos)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self) -> MultiPoly:
        if not self.tokens:
            self.error("empty expression")
        p = self.expr()
        if self.i != len(self.tokens):
            self.error(f"unexpected {self.peek()[1]!r}")
        return p

    def expr(self):
        p = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if not q.is_constant() or q.is_zero():
                    self.i -= 1
                    self.error("division only by nonzero constants")
                p = p / q
        return p

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^",) or (self.peek()[1] == "*" and self._double_star()):
            if self.take()[1] == "*":
                self.take()
            kind, val, _ = self.take()
            if kind != "num" or not val.isdigit():
                self.i -= 1
                self.error("exponent must be a non-negative integer")
            base = base ** int(val)
        return base

    def _double_star(self):
        nxt = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else None
        return nxt is not None and nxt[1] == "*"

    def atom(self):
        kind, val, _ = self.peek()
        if kind == "num":
            self.take()
            return MultiPoly.constant(Fraction(val), self.variables)
        if kind == "id":
            if val not in self.variables:
                self.error(f"unknown identifier {val!r}")
            self.take()
            return MultiPoly.variable(val, self.variables)
        if val == "(":
            self.take()
            p = self.expr()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return p
        self.error("expected a number, identifier or '('" if val else "unexpected end of input")


def parse_poly(text: str, variables: Iterable[str]) -> MultiPoly:
    """Parse ``text`` (identifiers, rationals, ``+ - * / ^``, parentheses).

    >>> str(parse_poly("a*(1-y)", ["a", "y"]))
    'a - a*y'
    """
    return _Parser(text, tuple(variables)).parse()
