"""Task formulas: affine predicates, a bounded temporal-logic AST, and a parser.

Formulas are built from predicates ``mu(x) >= 0`` over the stacked agent state
and the operators ``! & | G[a,b] F[a,b] U[a,b]`` with inclusive integer
intervals. Parsing normalizes to negation normal form: ``!`` survives only
directly above a predicate, ``true``, or an until (there is no release
operator to push it through).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping


class FormulaError(ValueError):
    """Syntax or binding error while parsing a formula."""

    def __init__(self, message: str, line: int = 1, col: int = 0):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class AffineExpr:
    """Affine function of the stacked state: sum of coef * x_agent[coord] + const.

    Agent indices are 1-based (agent 1 is the first agent); coordinates are
    0-based within an agent's state vector.
    """

    coeffs: tuple[tuple[int, int, float], ...]
    const: float = 0.0

    @staticmethod
    def from_terms(terms: Mapping[tuple[int, int], float], const: float = 0.0) -> "AffineExpr":
        items = tuple(sorted((a, c, float(v)) for (a, c), v in terms.items() if v != 0.0))
        return AffineExpr(items, float(const))

    def stacked_weights(self, offsets: list[int], dims: list[int], n_total: int):
        """Dense weight vector over the stacked state, plus the constant."""
        import numpy as np

        w = np.zeros(n_total)
        for agent, coord, coef in self.coeffs:
            if not (1 <= agent <= len(offsets)):
                raise IndexError(f"predicate references missing agent {agent}")
            if not (0 <= coord < dims[agent - 1]):
                raise IndexError(f"predicate references missing coordinate {coord} of agent {agent}")
            w[offsets[agent - 1] + coord] += coef
        return w, self.const

    def evaluate(self, stacked, offsets: list[int]) -> float:
        total = self.const
        for agent, coord, coef in self.coeffs:
            total += coef * float(stacked[offsets[agent - 1] + coord])
        return total

    def __str__(self) -> str:
        parts = [f"{coef:+g}*x{agent}_{coord}" for agent, coord, coef in self.coeffs]
        parts.append(f"{self.const:+g}")
        return " ".join(parts)


@dataclass(frozen=True)
class Predicate:
    """Named atomic proposition, true iff its expression is >= 0.

    ``expr`` is the affine form used by the encoder. ``fn`` is an optional
    evaluator ``fn(stacked_state) -> float`` for predicates that are not
    affine; such predicates can be counted and checked by the oracle but not
    encoded.
    """

    label: str
    expr: AffineExpr | None = None
    fn: Callable | None = field(default=None, compare=False)

    @property
    def affine(self) -> bool:
        return self.expr is not None

    def value(self, stacked, offsets: list[int]) -> float:
        if self.fn is not None:
            return float(self.fn(stacked))
        if self.expr is None:
            raise ValueError(f"predicate {self.label!r} has no evaluator")
        return self.expr.evaluate(stacked, offsets)


# --- AST ----------------------------------------------------------------
#
# Nodes use identity equality/hash on purpose: per-node tables (required
# instants, variable registries) must distinguish structurally equal subtrees
# sitting at different tree positions. Use structurally_equal() to compare.


@dataclass(frozen=True, eq=False)
class Formula:
    pass


@dataclass(frozen=True, eq=False)
class TrueNode(Formula):
    pass


@dataclass(frozen=True, eq=False)
class Pred(Formula):
    pred: Predicate


@dataclass(frozen=True, eq=False)
class Not(Formula):
    child: Formula


@dataclass(frozen=True, eq=False)
class And(Formula):
    children: tuple[Formula, ...]


@dataclass(frozen=True, eq=False)
class Or(Formula):
    children: tuple[Formula, ...]


@dataclass(frozen=True, eq=False)
class Always(Formula):
    a: int
    b: int
    child: Formula


@dataclass(frozen=True, eq=False)
class Eventually(Formula):
    a: int
    b: int
    child: Formula


@dataclass(frozen=True, eq=False)
class Until(Formula):
    a: int
    b: int
    left: Formula
    right: Formula


def iter_nodes(phi: Formula) -> Iterator[Formula]:
    """Preorder traversal."""
    yield phi
    if isinstance(phi, Not):
        yield from iter_nodes(phi.child)
    elif isinstance(phi, (And, Or)):
        for c in phi.children:
            yield from iter_nodes(c)
    elif isinstance(phi, (Always, Eventually)):
        yield from iter_nodes(phi.child)
    elif isinstance(phi, Until):
        yield from iter_nodes(phi.left)
        yield from iter_nodes(phi.right)


def structurally_equal(a: Formula, b: Formula) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, TrueNode):
        return True
    if isinstance(a, Pred):
        return a.pred == b.pred
    if isinstance(a, Not):
        return structurally_equal(a.child, b.child)
    if isinstance(a, (And, Or)):
        return len(a.children) == len(b.children) and all(
            structurally_equal(x, y) for x, y in zip(a.children, b.children)
        )
    if isinstance(a, (Always, Eventually)):
        return a.a == b.a and a.b == b.b and structurally_equal(a.child, b.child)
    if isinstance(a, Until):
        return (
            a.a == b.a
            and a.b == b.b
            and structurally_equal(a.left, b.left)
            and structurally_equal(a.right, b.right)
        )
    raise TypeError(f"unknown node {type(a).__name__}")


def horizon(phi: Formula) -> int:
    """Number of instants past the evaluation point the formula can read."""
    if isinstance(phi, (TrueNode, Pred)):
        return 0
    if isinstance(phi, Not):
        return horizon(phi.child)
    if isinstance(phi, (And, Or)):
        return max((horizon(c) for c in phi.children), default=0)
    if isinstance(phi, (Always, Eventually)):
        return phi.b + horizon(phi.child)
    if isinstance(phi, Until):
        return phi.b + max(horizon(phi.left), horizon(phi.right))
    raise TypeError(f"unknown node {type(phi).__name__}")


def required_instants(phi: Formula, root_instant: int = 0) -> dict[Formula, tuple[int, ...]]:
    """Instants at which each node's truth value is needed.

    Keyed by node identity. The root is needed at ``root_instant``; Boolean
    children inherit their parent's instants; a temporal operator shifts its
    child's instants by the operator window ([a,b] for G/F and the right arm
    of U, [0,b] for the left arm of U).
    """
    table: dict[Formula, set[int]] = {}

    def visit(node: Formula, instants: set[int]) -> None:
        table.setdefault(node, set()).update(instants)
        if isinstance(node, Not):
            visit(node.child, instants)
        elif isinstance(node, (And, Or)):
            for c in node.children:
                visit(c, instants)
        elif isinstance(node, (Always, Eventually)):
            visit(node.child, {k + t for k in instants for t in range(node.a, node.b + 1)})
        elif isinstance(node, Until):
            visit(node.right, {k + t for k in instants for t in range(node.a, node.b + 1)})
            visit(node.left, {k + t for k in instants for t in range(0, node.b + 1)})

    visit(phi, {root_instant})
    return {node: tuple(sorted(s)) for node, s in table.items()}


# --- normal form ---------------------------------------------------------


def normalize(phi: Formula) -> Formula:
    """Push negations down; after this, Not sits only above Pred, True, or Until."""
    if isinstance(phi, (TrueNode, Pred)):
        return phi
    if isinstance(phi, Not):
        return _negated(phi.child)
    if isinstance(phi, And):
        return And(tuple(normalize(c) for c in phi.children))
    if isinstance(phi, Or):
        return Or(tuple(normalize(c) for c in phi.children))
    if isinstance(phi, Always):
        return Always(phi.a, phi.b, normalize(phi.child))
    if isinstance(phi, Eventually):
        return Eventually(phi.a, phi.b, normalize(phi.child))
    if isinstance(phi, Until):
        return Until(phi.a, phi.b, normalize(phi.left), normalize(phi.right))
    raise TypeError(f"unknown node {type(phi).__name__}")


def _negated(phi: Formula) -> Formula:
    if isinstance(phi, (TrueNode, Pred)):
        return Not(phi)
    if isinstance(phi, Not):
        return normalize(phi.child)
    if isinstance(phi, And):
        return Or(tuple(_negated(c) for c in phi.children))
    if isinstance(phi, Or):
        return And(tuple(_negated(c) for c in phi.children))
    if isinstance(phi, Always):
        return Eventually(phi.a, phi.b, _negated(phi.child))
    if isinstance(phi, Eventually):
        return Always(phi.a, phi.b, _negated(phi.child))
    if isinstance(phi, Until):
        # No release operator in the grammar; keep the negation explicit and
        # let the encoder use the complement of the until variable.
        return Not(Until(phi.a, phi.b, normalize(phi.left), normalize(phi.right)))
    raise TypeError(f"unknown node {type(phi).__name__}")


# --- parser ---------------------------------------------------------------
#
# Grammar (ASCII tokens, inclusive integer intervals):
#   formula := or
#   or      := and ('|' and)*
#   and     := until ('&' until)*
#   until   := unary ('U[' INT ',' INT ']' until)?      # right associative
#   unary   := '!' unary | ('G'|'F') '[' INT ',' INT ']' unary | atom
#   atom    := 'true' | IDENT | '(' formula ')'
# Precedence: ! and temporal prefixes bind tightest, then U, then &, then |.

_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|[!&|()\[\],]|\S")


class _Token:
    __slots__ = ("text", "line", "col")

    def __init__(self, text: str, line: int, col: int):
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    for lineno, line in enumerate(text.splitlines() or [""], start=1):
        for m in _TOKEN_RE.finditer(line):
            tok = _Token(m.group(), lineno, m.start() + 1)
            if tok.text not in "!&|()[]," and not tok.text.isdigit() and not re.fullmatch(
                r"[A-Za-z_][A-Za-z0-9_]*", tok.text
            ):
                raise FormulaError(f"unexpected character {tok.text!r}", lineno, tok.col)
            tokens.append(tok)
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], predicates: Mapping[str, Formula | Predicate]):
        self.tokens = tokens
        self.pos = 0
        self.predicates = predicates

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 0)
            raise FormulaError("unexpected end of formula", last.line, last.col + len(last.text))
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise FormulaError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def interval(self, op_tok: _Token) -> tuple[int, int]:
        self.expect("[")
        a_tok = self.next()
        if not a_tok.text.isdigit():
            raise FormulaError(f"malformed interval bound {a_tok.text!r}", a_tok.line, a_tok.col)
        self.expect(",")
        b_tok = self.next()
        if not b_tok.text.isdigit():
            raise FormulaError(f"malformed interval bound {b_tok.text!r}", b_tok.line, b_tok.col)
        self.expect("]")
        a, b = int(a_tok.text), int(b_tok.text)
        if a > b:
            raise FormulaError(f"malformed interval [{a},{b}]: lower bound exceeds upper", op_tok.line, op_tok.col)
        return a, b

    def parse(self) -> Formula:
        phi = self.or_expr()
        tok = self.peek()
        if tok is not None:
            raise FormulaError(f"unexpected token {tok.text!r}", tok.line, tok.col)
        return phi

    def or_expr(self) -> Formula:
        parts = [self.and_expr()]
        while (tok := self.peek()) is not None and tok.text == "|":
            self.next()
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self) -> Formula:
        parts = [self.until_expr()]
        while (tok := self.peek()) is not None and tok.text == "&":
            self.next()
            parts.append(self.until_expr())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def until_expr(self) -> Formula:
        left = self.unary()
        tok = self.peek()
        if tok is not None and tok.text == "U" and self._next_is_bracket():
            op = self.next()
            a, b = self.interval(op)
            right = self.until_expr()
            return Until(a, b, left, right)
        return left

    def _next_is_bracket(self) -> bool:
        nxt = self.pos + 1
        return nxt < len(self.tokens) and self.tokens[nxt].text == "["

    def unary(self) -> Formula:
        tok = self.peek()
        if tok is None:
            self.next()  # raises with position info
        if tok.text == "!":
            self.next()
            return Not(self.unary())
        if tok.text in ("G", "F") and self._next_is_bracket():
            op = self.next()
            a, b = self.interval(op)
            child = self.unary()
            return Always(a, b, child) if op.text == "G" else Eventually(a, b, child)
        return self.atom()

    def atom(self) -> Formula:
        tok = self.next()
        if tok.text == "(":
            phi = self.or_expr()
            self.expect(")")
            return phi
        if tok.text == "true":
            return TrueNode()
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok.text):
            bound = self.predicates.get(tok.text)
            if bound is None:
                raise FormulaError(f"unknown predicate label {tok.text!r}", tok.line, tok.col)
            if isinstance(bound, Predicate):
                return Pred(bound)
            return _clone(bound)
        raise FormulaError(f"unexpected token {tok.text!r}", tok.line, tok.col)


def _clone(phi: Formula) -> Formula:
    """Fresh node objects so identity-keyed tables stay per-occurrence."""
    if isinstance(phi, TrueNode):
        return TrueNode()
    if isinstance(phi, Pred):
        return Pred(phi.pred)
    if isinstance(phi, Not):
        return Not(_clone(phi.child))
    if isinstance(phi, And):
        return And(tuple(_clone(c) for c in phi.children))
    if isinstance(phi, Or):
        return Or(tuple(_clone(c) for c in phi.children))
    if isinstance(phi, Always):
        return Always(phi.a, phi.b, _clone(phi.child))
    if isinstance(phi, Eventually):
        return Eventually(phi.a, phi.b, _clone(phi.child))
    if isinstance(phi, Until):
        return Until(phi.a, phi.b, _clone(phi.left), _clone(phi.right))
    raise TypeError(f"unknown node {type(phi).__name__}")


def parse_formula(text: str, predicates: Mapping[str, Formula | Predicate]) -> Formula:
    """Parse and normalize a formula.

    ``predicates`` maps label -> Predicate, or label -> Formula for labels
    that stand for a compound (e.g. a region expanded to a conjunction of
    half-planes). Unknown labels are errors.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise FormulaError("empty formula")
    return normalize(_Parser(tokens, predicates).parse())


def to_text(phi: Formula) -> str:
    """Render a formula; parse_formula(to_text(phi)) is structurally equal to phi."""
    return _render(phi, 0)


# Precedence levels for rendering: | = 0, & = 1, U = 2, unary = 3.
def _render(phi: Formula, parent_level: int) -> str:
    if isinstance(phi, TrueNode):
        return "true"
    if isinstance(phi, Pred):
        return phi.pred.label
    if isinstance(phi, Not):
        return "!" + _render(phi.child, 3)
    if isinstance(phi, Or):
        body = " | ".join(_render(c, 1) for c in phi.children)
        return f"({body})" if parent_level > 0 else body
    if isinstance(phi, And):
        body = " & ".join(_render(c, 2) for c in phi.children)
        return f"({body})" if parent_level > 1 else body
    if isinstance(phi, Until):
        body = f"{_render(phi.left, 3)} U[{phi.a},{phi.b}] {_render(phi.right, 2)}"
        return f"({body})" if parent_level > 2 else body
    if isinstance(phi, Always):
        return f"G[{phi.a},{phi.b}] {_render(phi.child, 3)}"
    if isinstance(phi, Eventually):
        return f"F[{phi.a},{phi.b}] {_render(phi.child, 3)}"
    raise TypeError(f"unknown node {type(phi).__name__}")
