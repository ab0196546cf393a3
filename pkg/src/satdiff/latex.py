"""Lexer, parser and canonical renderer for a restricted LaTeX math dialect.

The dialect covers single-character symbols, a closed set of symbol
commands (Greek letters, operators, function names), brace groups,
superscripts, subscripts, ``\\frac`` and ``\\sqrt``.  Whitespace is
insignificant.  Rendering produces a canonical form in which every script
argument, script base and command argument is brace-wrapped, so that
``normalize`` is idempotent.
"""

from __future__ import annotations

import enum
import re
import string
from dataclasses import dataclass
from typing import Optional, Union

from .errors import (
    ArityError,
    DanglingScript,
    UnbalancedBraces,
    UnknownCharacter,
    UnknownCommand,
)

COMMAND_SET_VERSION = 1

GREEK = (
    "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi "
    "pi rho sigma tau upsilon phi chi psi omega "
    "Gamma Delta Theta Lambda Xi Pi Sigma Upsilon Phi Psi Omega"
).split()

SYMBOL_COMMANDS = frozenset(
    ["\\" + g for g in GREEK]
    + [
        "\\sum", "\\int", "\\infty", "\\cdot", "\\pm", "\\leq", "\\geq",
        "\\neq", "\\times", "\\log", "\\sin", "\\cos", "\\tan", "\\lim",
        "\\rightarrow",
    ]
)
STRUCTURAL_COMMANDS = frozenset(["\\frac", "\\sqrt"])
COMMANDS = SYMBOL_COMMANDS | STRUCTURAL_COMMANDS

SYMBOL_CHARS = frozenset(string.ascii_letters + string.digits + "+-=()[],./<>!|")


class TokenKind(enum.Enum):
    COMMAND = "command"
    SYMBOL = "symbol"
    OPEN = "open-brace"
    CLOSE = "close-brace"
    CARET = "caret"
    UNDERSCORE = "underscore"


@dataclass(frozen=True)
class RawToken:
    kind: TokenKind
    text: str
    position: int = -1

    def __eq__(self, other):
        # position is bookkeeping only
        if not isinstance(other, RawToken):
            return NotImplemented
        return self.kind == other.kind and self.text == other.text

    def __hash__(self):
        return hash((self.kind, self.text))


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Symbol:
    name: str


@dataclass(frozen=True)
class Row:
    children: tuple = ()


@dataclass(frozen=True)
class Group:
    child: "Node"


@dataclass(frozen=True)
class Frac:
    numerator: "Node"
    denominator: "Node"


@dataclass(frozen=True)
class Sqrt:
    radicand: "Node"


@dataclass(frozen=True)
class Scripted:
    base: "Node"
    sup: Optional["Node"] = None
    sub: Optional["Node"] = None


Node = Union[Symbol, Row, Group, Frac, Sqrt, Scripted]


def make_row(children) -> Node:
    """Collapse a child list: one child stands alone, otherwise a flat Row."""
    flat = []
    for c in children:
        if isinstance(c, Row):
            flat.extend(c.children)
        else:
            flat.append(c)
    if len(flat) == 1:
        return flat[0]
    return Row(tuple(flat))


def row_children(node: Node) -> tuple:
    return node.children if isinstance(node, Row) else (node,)


# --------------------------------------------------------------------------
# lexing


def lex(text: str) -> list[RawToken]:
    """Split LaTeX text into raw tokens, dropping whitespace."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == "\\":
            j = i + 1
            while j < n and text[j] in string.ascii_letters:
                j += 1
            if j == i + 1:
                raise UnknownCharacter(i, c)
            name = text[i:j]
            if name not in COMMANDS:
                raise UnknownCommand(name, i)
            tokens.append(RawToken(TokenKind.COMMAND, name, i))
            i = j
        elif c == "{":
            tokens.append(RawToken(TokenKind.OPEN, c, i))
            i += 1
        elif c == "}":
            tokens.append(RawToken(TokenKind.CLOSE, c, i))
            i += 1
        elif c == "^":
            tokens.append(RawToken(TokenKind.CARET, c, i))
            i += 1
        elif c == "_":
            tokens.append(RawToken(TokenKind.UNDERSCORE, c, i))
            i += 1
        elif c in SYMBOL_CHARS:
            tokens.append(RawToken(TokenKind.SYMBOL, c, i))
            i += 1
        else:
            raise UnknownCharacter(i, c)
    return tokens


# --------------------------------------------------------------------------
# parsing


class _Parser:
    def __init__(self, tokens):
        self.toks = list(tokens)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def parse(self) -> Node:
        nodes = self.row(inside_group=False)
        return make_row(nodes)

    def row(self, inside_group):
        nodes = []
        while True:
            tok = self.peek()
            if tok is None:
                return nodes
            if tok.kind is TokenKind.CLOSE:
                if inside_group:
                    return nodes
                raise UnbalancedBraces(self.pos)
            if tok.kind in (TokenKind.CARET, TokenKind.UNDERSCORE):
                raise DanglingScript(self.pos, "script has no base")
            self.item(nodes)

    def item(self, nodes):
        start = self.pos
        atom = self.atom()
        sup = sub = None
        while (tok := self.peek()) is not None and tok.kind in (TokenKind.CARET, TokenKind.UNDERSCORE):
            at = self.pos
            self.pos += 1
            arg = self.script_arg(at)
            if tok.kind is TokenKind.CARET:
                if sup is not None:
                    raise DanglingScript(at, "double superscript")
                sup = arg
            else:
                if sub is not None:
                    raise DanglingScript(at, "double subscript")
                sub = arg
        if sup is None and sub is None:
            if isinstance(atom, list):
                nodes.extend(atom)
            else:
                nodes.append(atom)
            return
        if isinstance(atom, list):
            if not atom:
                raise DanglingScript(start, "script base is empty")
            if len(atom) == 1 and not isinstance(atom[0], Scripted):
                base = atom[0]
            else:
                base = Group(make_row(atom))
        else:
            base = atom
        nodes.append(Scripted(base, sup, sub))

    def atom(self):
        """Returns a node, or a list of nodes for a brace group."""
        tok = self.peek()
        if tok.kind is TokenKind.SYMBOL:
            self.pos += 1
            return Symbol(tok.text)
        if tok.kind is TokenKind.COMMAND:
            at = self.pos
            self.pos += 1
            if tok.text == "\\frac":
                num = self.command_arg(tok.text, at)
                den = self.command_arg(tok.text, at)
                return Frac(num, den)
            if tok.text == "\\sqrt":
                return Sqrt(self.command_arg(tok.text, at))
            return Symbol(tok.text)
        if tok.kind is TokenKind.OPEN:
            return self.group()
        raise AssertionError(f"unexpected token {tok}")  # pragma: no cover

    def group(self):
        open_at = self.pos
        self.pos += 1
        nodes = self.row(inside_group=True)
        if self.peek() is None:
            raise UnbalancedBraces(open_at)
        self.pos += 1
        return nodes

    def _single(self):
        tok = self.peek()
        if tok is None:
            return None
        if tok.kind is TokenKind.SYMBOL or (
            tok.kind is TokenKind.COMMAND and tok.text in SYMBOL_COMMANDS
        ):
            self.pos += 1
            return Symbol(tok.text)
        if tok.kind is TokenKind.OPEN:
            nodes = self.group()
            return make_row(nodes) if nodes else None
        return None

    def command_arg(self, command, at):
        arg = self._single()
        if arg is None:
            raise ArityError(command, at)
        return arg

    def script_arg(self, at):
        arg = self._single()
        if arg is None:
            raise DanglingScript(at, "script has no argument")
        return arg


def parse(tokens: list[RawToken]) -> Node:
    """Parse lexed tokens into a flattened AST."""
    return _Parser(tokens).parse()


# --------------------------------------------------------------------------
# rendering

_TRAILING_COMMAND = re.compile(r"\\[A-Za-z]+$")


def _join(pieces):
    out = ""
    for p in pieces:
        if out and p and _TRAILING_COMMAND.search(out) and (p[0] in string.ascii_letters or p[0] == "\\"):
            out += " "
        out += p
    return out


def render(node: Node) -> str:
    if isinstance(node, Symbol):
        return node.name
    if isinstance(node, Row):
        return _join(render(c) for c in node.children)
    if isinstance(node, Group):
        return "{" + render(node.child) + "}"
    if isinstance(node, Frac):
        return "\\frac{" + render(node.numerator) + "}{" + render(node.denominator) + "}"
    if isinstance(node, Sqrt):
        return "\\sqrt{" + render(node.radicand) + "}"
    if isinstance(node, Scripted):
        base = node.base
        out = render(base) if isinstance(base, Group) else "{" + render(base) + "}"
        if node.sup is not None:
            out += "^{" + render(node.sup) + "}"
        if node.sub is not None:
            out += "_{" + render(node.sub) + "}"
        return out
    raise TypeError(f"not an AST node: {node!r}")


def parse_text(text: str) -> Node:
    return parse(lex(text))


def normalize(text: str) -> str:
    """Canonical LaTeX for ``text``; idempotent."""
    return render(parse(lex(text)))


def depth(node: Node) -> int:
    """Maximum number of structural roles above any visible leaf."""
    if isinstance(node, Symbol):
        return 0
    if isinstance(node, Row):
        return max((depth(c) for c in node.children), default=0)
    if isinstance(node, Group):
        return depth(node.child)
    if isinstance(node, Frac):
        return 1 + max(depth(node.numerator), depth(node.denominator))
    if isinstance(node, Sqrt):
        return 1 + depth(node.radicand)
    if isinstance(node, Scripted):
        d = depth(node.base)
        for arg in (node.sup, node.sub):
            if arg is not None:
                d = max(d, 1 + depth(arg))
        return d
    raise TypeError(node)


def iter_nodes(node: Node):
    """Pre-order traversal over every node in the tree."""
    yield node
    if isinstance(node, Row):
        for c in node.children:
            yield from iter_nodes(c)
    elif isinstance(node, Group):
        yield from iter_nodes(node.child)
    elif isinstance(node, Frac):
        yield from iter_nodes(node.numerator)
        yield from iter_nodes(node.denominator)
    elif isinstance(node, Sqrt):
        yield from iter_nodes(node.radicand)
    elif isinstance(node, Scripted):
        yield from iter_nodes(node.base)
        for arg in (node.sup, node.sub):
            if arg is not None:
                yield from iter_nodes(arg)
