"""Loader for plain-text polynomial systems.

Format: one equation per line, ``fK = <expr>``, where <expr> is built from
variables x1..xd, real literals, and the operators +, -, * and ^ with
positive integer powers.  '#' starts a comment, blank lines are ignored.
The dimension d is inferred as the largest variable index and must match
the number of equations.
"""

from __future__ import annotations

import re
from typing import Iterator

import numpy as np

from .problems import ProblemDefinition


class ParseError(Exception):
    """Malformed input text; carries the 1-based line number and a reason."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DimensionMismatch(Exception):
    """Equation count and inferred variable count disagree."""


_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x\d+)"
    r"|(?P<op>[-+*^])"
    r")"
)

_HEAD_RE = re.compile(r"^\s*f(\d+)\s*=\s*(.*?)\s*$")

# A monomial is (coefficient, powers) with powers a tuple of (var, exp).
Monomial = tuple[float, tuple[tuple[int, int], ...]]


def _tokenize(expr: str, line_no: int) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(expr):
        m = _TOKEN_RE.match(expr, pos)
        if m is None or m.end() == pos:
            rest = expr[pos:].strip()
            if not rest:
                break
            raise ParseError(line_no, f"unexpected character {rest[0]!r}")
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    return tokens


class _TermParser:
    """Recursive-descent parser for a single right-hand side."""

    def __init__(self, tokens: list[tuple[str, str]], line_no: int):
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no

    def _peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> tuple[str, str]:
        tok = self._peek()
        if tok is None:
            raise ParseError(self.line_no, "unexpected end of expression")
        self.pos += 1
        return tok

    def parse(self) -> dict[tuple[tuple[int, int], ...], float]:
        if not self.tokens:
            raise ParseError(self.line_no, "empty expression")
        poly: dict[tuple[tuple[int, int], ...], float] = {}
        sign = 1.0
        tok = self._peek()
        if tok is not None and tok == ("op", "-"):
            self._next()
            sign = -1.0
        elif tok is not None and tok == ("op", "+"):
            self._next()
        while True:
            coeff, powers = self._term()
            key = powers
            poly[key] = poly.get(key, 0.0) + sign * coeff
            tok = self._peek()
            if tok is None:
                break
            if tok[0] != "op" or tok[1] not in "+-":
                raise ParseError(self.line_no, f"expected '+' or '-', got {tok[1]!r}")
            self._next()
            sign = 1.0 if tok[1] == "+" else -1.0
        return poly

    def _term(self) -> Monomial:
        coeff, powers = self._factor()
        while True:
            tok = self._peek()
            if tok is None or tok != ("op", "*"):
                break
            self._next()
            c2, p2 = self._factor()
            coeff *= c2
            powers = _merge_powers(powers, p2)
        return coeff, powers

    def _factor(self) -> Monomial:
        tok = self._next()
        if tok[0] == "num":
            base_coeff = float(tok[1])
            base_powers: tuple[tuple[int, int], ...] = ()
        elif tok[0] == "var":
            base_coeff = 1.0
            base_powers = ((int(tok[1][1:]), 1),)
        else:
            raise ParseError(self.line_no, f"expected a number or variable, got {tok[1]!r}")
        nxt = self._peek()
        if nxt is not None and nxt == ("op", "^"):
            self._next()
            exp_tok = self._next()
            if exp_tok[0] != "num" or not re.fullmatch(r"\d+", exp_tok[1]):
                raise ParseError(self.line_no, "exponent must be a positive integer")
            exp = int(exp_tok[1])
            if exp < 1:
                raise ParseError(self.line_no, "exponent must be a positive integer")
            base_coeff = base_coeff**exp
            base_powers = tuple((v, p * exp) for v, p in base_powers)
        return base_coeff, base_powers


def _merge_powers(
    a: tuple[tuple[int, int], ...], b: tuple[tuple[int, int], ...]
) -> tuple[tuple[int, int], ...]:
    merged: dict[int, int] = {}
    for v, p in a + b:
        merged[v] = merged.get(v, 0) + p
    return tuple(sorted(merged.items()))


def _iter_content_lines(text: str) -> Iterator[tuple[int, str]]:
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def _eval_poly(poly: list[Monomial], x: np.ndarray) -> float:
    total = 0.0
    for coeff, powers in poly:
        term = coeff
        for v, p in powers:
            term *= x[v - 1] ** p
        total += term
    return total


def _grad_poly(poly: list[Monomial], x: np.ndarray, d: int) -> np.ndarray:
    grad = np.zeros(d)
    for coeff, powers in poly:
        for j, (v, p) in enumerate(powers):
            term = coeff * p * x[v - 1] ** (p - 1)
            for v2, p2 in powers[:j] + powers[j + 1:]:
                term *= x[v2 - 1] ** p2
            grad[v - 1] += term
    return grad


def _hess_poly(poly: list[Monomial], x: np.ndarray, d: int) -> np.ndarray:
    hess = np.zeros((d, d))
    for coeff, powers in poly:
        for j, (v, p) in enumerate(powers):
            # d^2 / dx_v^2
            if p >= 2:
                term = coeff * p * (p - 1) * x[v - 1] ** (p - 2)
                for v2, p2 in powers[:j] + powers[j + 1:]:
                    term *= x[v2 - 1] ** p2
                hess[v - 1, v - 1] += term
            # mixed terms
            for l, (v2, p2) in enumerate(powers):
                if l <= j:
                    continue
                term = coeff * p * p2
                term *= x[v - 1] ** (p - 1) * x[v2 - 1] ** (p2 - 1)
                for i3, (v3, p3) in enumerate(powers):
                    if i3 != j and i3 != l:
                        term *= x[v3 - 1] ** p3
                hess[v - 1, v2 - 1] += term
                hess[v2 - 1, v - 1] += term
    return hess


def load_polynomial_system(text: str, name: str = "polynomial") -> ProblemDefinition:
    """Parse a polynomial system into a ProblemDefinition.

    Raises ParseError (with line number) on malformed text and
    DimensionMismatch when the equation count does not equal the largest
    variable index.
    """
    equations: dict[int, list[Monomial]] = {}
    max_var = 0
    for line_no, line in _iter_content_lines(text):
        head = _HEAD_RE.match(line)
        if head is None:
            raise ParseError(line_no, "expected 'fK = <expression>'")
        idx = int(head.group(1))
        if idx < 1:
            raise ParseError(line_no, "equation index must be >= 1")
        if idx in equations:
            raise ParseError(line_no, f"duplicate equation f{idx}")
        tokens = _tokenize(head.group(2), line_no)
        poly_map = _TermParser(tokens, line_no).parse()
        poly = [(c, p) for p, c in sorted(poly_map.items()) if c != 0.0]
        if not poly:
            poly = [(0.0, ())]
        equations[idx] = poly
        for _, powers in poly:
            for v, _ in powers:
                max_var = max(max_var, v)

    if not equations:
        raise ParseError(0, "no equations found")
    m = len(equations)
    if sorted(equations) != list(range(1, m + 1)):
        raise DimensionMismatch(
            f"equation indices {sorted(equations)} are not contiguous from f1"
        )
    if max_var != m:
        raise DimensionMismatch(
            f"{m} equations but largest variable index is x{max_var}"
        )
    d = m
    polys = [equations[i] for i in range(1, d + 1)]

    def f(x: np.ndarray) -> np.ndarray:
        return np.array([_eval_poly(p, x) for p in polys])

    def jac(x: np.ndarray) -> np.ndarray:
        return np.array([_grad_poly(p, x, d) for p in polys])

    def d2f(x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.array([u @ _hess_poly(p, x, d) @ w for p in polys])

    return ProblemDefinition(
        name=name,
        dimension=d,
        f=f,
        jac=jac,
        d2f=d2f,
        jacobian_mode="analytic",
        d2f_mode="analytic",
    )
