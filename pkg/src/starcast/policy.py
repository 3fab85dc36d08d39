"""Boolean access policies and their monotone span programs.

Grammar (AND binds tighter than OR, both left-associative)::

    expr   := term ("OR" term)*
    term   := factor ("AND" factor)*
    factor := ATTRIBUTE | "(" expr ")"

Attributes are double-quoted strings (``\\"`` and ``\\\\`` escapes) or bare
identifiers made of letters, digits and ``_ . : - @ /``.  Keywords are
case-insensitive.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from typing import Iterable, Union

from .errors import InvalidAttribute, MalformedInput, PolicySyntaxError

__all__ = [
    "And",
    "Leaf",
    "Msp",
    "Or",
    "Reconstruction",
    "accepts",
    "compile_policy",
    "evaluate",
    "leaves",
    "parse_policy",
    "reconstruct",
    "render",
    "to_msp",
    "validate_attribute",
    "validate_attributes",
]

# BLS12-381 group order; the default scalar field for reconstruction.
DEFAULT_MODULUS = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001


def validate_attribute(name: str) -> str:
    if not isinstance(name, str):
        raise InvalidAttribute(f"attribute must be a string, got {type(name).__name__}")
    raw = name.encode("utf-8")
    if not 1 <= len(raw) <= 255:
        raise InvalidAttribute(f"attribute {name!r} must be 1..255 UTF-8 bytes")
    if raw[0] == 0:
        raise InvalidAttribute("attribute may not start with a NUL byte")
    return name


def validate_attributes(attrs: Iterable[str]) -> frozenset[str]:
    return frozenset(validate_attribute(a) for a in attrs)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    name: str


@dataclass(frozen=True)
class And:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Or:
    left: "Node"
    right: "Node"


Node = Union[Leaf, And, Or]


def leaves(node: Node) -> list[str]:
    if isinstance(node, Leaf):
        return [node.name]
    return leaves(node.left) + leaves(node.right)


def evaluate(node: Node, attrs: Iterable[str]) -> bool:
    """Plain boolean evaluation of the formula against an attribute set."""
    attrs = attrs if isinstance(attrs, (set, frozenset)) else set(attrs)
    if isinstance(node, Leaf):
        return node.name in attrs
    if isinstance(node, And):
        return evaluate(node.left, attrs) and evaluate(node.right, attrs)
    return evaluate(node.left, attrs) or evaluate(node.right, attrs)


def _quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render(node: Node) -> str:
    """Canonical text: fully parenthesized, attributes quoted."""
    if isinstance(node, Leaf):
        return _quote(node.name)
    op = "AND" if isinstance(node, And) else "OR"
    return f"({render(node.left)} {op} {render(node.right)})"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_BARE = re.compile(r"[A-Za-z0-9_.:\-@/]+")


def _tokenize(text: str):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, ch, i))
            i += 1
        elif ch == '"':
            start = i
            i += 1
            buf = []
            while True:
                if i >= n:
                    raise PolicySyntaxError("unterminated quoted attribute", start)
                c = text[i]
                if c == "\\":
                    if i + 1 >= n or text[i + 1] not in '"\\':
                        raise PolicySyntaxError("bad escape in quoted attribute", i)
                    buf.append(text[i + 1])
                    i += 2
                elif c == '"':
                    i += 1
                    break
                else:
                    buf.append(c)
                    i += 1
            tokens.append(("ATTR", "".join(buf), start))
        else:
            m = _BARE.match(text, i)
            if not m:
                raise PolicySyntaxError(f"unexpected character {ch!r}", i)
            word = m.group(0)
            upper = word.upper()
            if upper in ("AND", "OR"):
                tokens.append((upper, word, i))
            else:
                tokens.append(("ATTR", word, i))
            i = m.end()
    tokens.append(("EOF", "", n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[0] == "OR":
            self.take()
            node = Or(node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "AND":
            self.take()
            node = And(node, self.factor())
        return node

    def factor(self):
        kind, value, at = self.take()
        if kind == "ATTR":
            try:
                return Leaf(validate_attribute(value))
            except InvalidAttribute as exc:
                raise PolicySyntaxError(str(exc), at) from None
        if kind == "(":
            node = self.expr()
            closing = self.take()
            if closing[0] != ")":
                raise PolicySyntaxError("expected ')'", closing[2])
            return node
        if kind == "EOF":
            raise PolicySyntaxError("unexpected end of policy", at)
        raise PolicySyntaxError(f"unexpected {value!r}", at)


def parse_policy(text: str) -> Node:
    if not text or not text.strip():
        raise PolicySyntaxError("empty policy", 0)
    parser = _Parser(text)
    node = parser.expr()
    kind, value, at = parser.peek()
    if kind != "EOF":
        raise PolicySyntaxError(f"unexpected {value!r}", at)
    return node


# ---------------------------------------------------------------------------
# Span programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Msp:
    """Span program: ``rows[i]`` is row i of M, ``labels[i]`` is pi(i)."""

    rows: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...]
    policy: str = ""

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def to_bytes(self) -> bytes:
        out = [struct.pack(">II", self.n_rows, self.n_cols)]
        for row in self.rows:
            out.append(struct.pack(f">{len(row)}b", *row))
        for name in self.labels:
            raw = name.encode("utf-8")
            out.append(bytes([len(raw)]) + raw)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes, policy: str = "") -> "Msp":
        if len(data) < 8:
            raise MalformedInput("truncated span program", len(data))
        n1, n2 = struct.unpack_from(">II", data, 0)
        off = 8
        if n1 * n2 > len(data):
            raise MalformedInput("span program dimensions exceed input", 0)
        if len(data) < off + n1 * n2:
            raise MalformedInput("truncated span program matrix", len(data))
        rows = []
        for _ in range(n1):
            row = struct.unpack_from(f">{n2}b", data, off)
            if any(v not in (-1, 0, 1) for v in row):
                raise MalformedInput("span program entry outside {-1, 0, 1}", off)
            rows.append(tuple(row))
            off += n2
        labels = []
        for _ in range(n1):
            if off >= len(data):
                raise MalformedInput("truncated span program label", off)
            ln = data[off]
            if off + 1 + ln > len(data):
                raise MalformedInput("truncated span program label", off)
            try:
                labels.append(validate_attribute(data[off + 1 : off + 1 + ln].decode("utf-8")))
            except (UnicodeDecodeError, InvalidAttribute):
                raise MalformedInput("invalid span program label", off) from None
            off += 1 + ln
        if off != len(data):
            raise MalformedInput("trailing bytes after span program", off)
        return cls(tuple(rows), tuple(labels), policy)

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()


def to_msp(node: Node, policy: str | None = None) -> Msp:
    """Lewko-Waters labelling; the left child of an AND takes ``v || 1``."""
    counter = 1
    assigned: list[tuple[list[int], str]] = []

    # Depth-first, left before right, so the counter advances in reading order.
    stack: list[tuple[Node, list[int]]] = [(node, [1])]
    while stack:
        current, vec = stack.pop()
        if isinstance(current, Leaf):
            assigned.append((vec, current.name))
        elif isinstance(current, Or):
            stack.append((current.right, vec))
            stack.append((current.left, vec))
        else:
            padded = vec + [0] * (counter - len(vec))
            left_vec = padded + [1]
            right_vec = [0] * counter + [-1]
            counter += 1
            stack.append((current.right, right_vec))
            stack.append((current.left, left_vec))
    rows = tuple(tuple(vec + [0] * (counter - len(vec))) for vec, _ in assigned)
    labels = tuple(name for _, name in assigned)
    return Msp(rows, labels, render(node) if policy is None else policy)


def compile_policy(text: str) -> Msp:
    node = parse_policy(text)
    return to_msp(node, render(node))


@dataclass(frozen=True)
class Reconstruction:
    """Rows (0-based) with their nonzero coefficients mod p."""

    rows: tuple[int, ...]
    coefficients: tuple[int, ...]

    def items(self):
        return zip(self.rows, self.coefficients)


def _solve_mod_p(columns: list[list[int]], target: list[int], p: int) -> list[int] | None:
    """Solve ``sum_k x_k * columns[k] = target`` over Z_p.

    Reduced row echelon form with the lowest-index pivot; free variables are 0.
    """
    n_vars = len(columns)
    n_eq = len(target)
    aug = [[columns[k][r] % p for k in range(n_vars)] + [target[r] % p] for r in range(n_eq)]
    pivots = []
    r = 0
    for c in range(n_vars):
        pivot = next((i for i in range(r, n_eq) if aug[i][c]), None)
        if pivot is None:
            continue
        aug[r], aug[pivot] = aug[pivot], aug[r]
        inv = pow(aug[r][c], -1, p)
        aug[r] = [(v * inv) % p for v in aug[r]]
        for i in range(n_eq):
            if i != r and aug[i][c]:
                f = aug[i][c]
                aug[i] = [(a - f * b) % p for a, b in zip(aug[i], aug[r])]
        pivots.append(c)
        r += 1
        if r == n_eq:
            break
    for i in range(r, n_eq):
        if aug[i][n_vars]:
            return None
    x = [0] * n_vars
    for i, c in enumerate(pivots):
        x[c] = aug[i][n_vars]
    return x


def reconstruct(msp: Msp, attrs: Iterable[str], p: int = DEFAULT_MODULUS) -> Reconstruction | None:
    """Coefficients combining authorized rows into (1, 0, ..., 0), or None."""
    attrs = attrs if isinstance(attrs, (set, frozenset)) else set(attrs)
    usable = [i for i, name in enumerate(msp.labels) if name in attrs]
    if not usable or msp.n_cols == 0:
        return None
    target = [1] + [0] * (msp.n_cols - 1)
    x = _solve_mod_p([list(msp.rows[i]) for i in usable], target, p)
    if x is None:
        return None
    picked = [(i, g) for i, g in zip(usable, x) if g]
    return Reconstruction(tuple(i for i, _ in picked), tuple(g for _, g in picked))


def accepts(msp: Msp, attrs: Iterable[str], p: int = DEFAULT_MODULUS) -> bool:
    return reconstruct(msp, attrs, p) is not None
