"""Symbol-aware tokenization.

An expression is split into its visible symbols, in reading order, and for
each symbol the path of structural roles (superscript, subscript, fraction
numerator/denominator, radical argument) leading from the root to it.  The
two lists always have equal length.  Braces carry no tokens of their own;
they are re-derived from the paths on the way back.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DepthExceeded,
    EmptyCorpus,
    IncoherentStructure,
    OutOfVocabulary,
    SatFormatError,
    SequenceTooLong,
)
from .latex import Frac, Group, Node, Row, Scripted, Sqrt, Symbol, lex, make_row

D_MAX = 4


class Tag(str, enum.Enum):
    SUP = "SUP"
    SUB = "SUB"
    FRAC_NUM = "FRAC_NUM"
    FRAC_DEN = "FRAC_DEN"
    SQRT_ARG = "SQRT_ARG"

    def __str__(self):
        return self.value


Path = tuple  # tuple[Tag, ...], root to leaf


@dataclass(frozen=True)
class SatSequence:
    symbols: tuple = ()
    paths: tuple = ()

    def __post_init__(self):
        if len(self.symbols) != len(self.paths):
            raise ValueError("symbols and paths must have equal length")

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(zip(self.symbols, self.paths))

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "SatSequence":
        pairs = list(pairs)
        return cls(tuple(s for s, _ in pairs), tuple(tuple(Tag(t) for t in p) for _, p in pairs))


# --------------------------------------------------------------------------
# AST <-> SAT


def sat_tokenize(ast: Node, max_depth: int = D_MAX) -> SatSequence:
    """Decompose an AST into aligned (symbol, modifier path) pairs."""
    symbols, paths = [], []

    def visit(node, path):
        if isinstance(node, Symbol):
            if len(path) > max_depth:
                raise DepthExceeded(len(symbols), len(path), max_depth)
            symbols.append(node.name)
            paths.append(path)
        elif isinstance(node, Row):
            for c in node.children:
                visit(c, path)
        elif isinstance(node, Group):
            visit(node.child, path)
        elif isinstance(node, Frac):
            visit(node.numerator, path + (Tag.FRAC_NUM,))
            visit(node.denominator, path + (Tag.FRAC_DEN,))
        elif isinstance(node, Sqrt):
            visit(node.radicand, path + (Tag.SQRT_ARG,))
        elif isinstance(node, Scripted):
            visit(node.base, path)
            if node.sup is not None:
                visit(node.sup, path + (Tag.SUP,))
            if node.sub is not None:
                visit(node.sub, path + (Tag.SUB,))
        else:
            raise TypeError(f"not an AST node: {node!r}")

    visit(ast, ())
    return SatSequence(tuple(symbols), tuple(paths))


def sat_detokenize(seq: SatSequence, strict: bool = True) -> Node:
    """Rebuild an AST from a SAT sequence.

    Consecutive tokens sharing a role at the same depth are grouped into one
    structural node.  With ``strict=False`` an unrealizable run is repaired
    by dropping the offending role from its paths, so any sequence yields a
    well-formed tree; this is what decoding uses.
    """
    items = [(i, s, tuple(p)) for i, (s, p) in enumerate(seq)]
    return make_row(_build(items, 0, strict))


def _run_end(items, start, depth, tag):
    j = start
    while j < len(items) and len(items[j][2]) > depth and items[j][2][depth] == tag:
        j += 1
    return j


def _build(items, depth, strict):
    items = list(items)
    nodes = []
    i = 0
    while i < len(items):
        idx, sym, path = items[i]
        if len(path) == depth:
            nodes.append(Symbol(sym))
            i += 1
            continue
        tag = path[depth]
        j = _run_end(items, i, depth, tag)
        problem = None
        if tag == Tag.SQRT_ARG:
            nodes.append(Sqrt(make_row(_build(items[i:j], depth + 1, strict))))
        elif tag == Tag.FRAC_NUM:
            k = _run_end(items, j, depth, Tag.FRAC_DEN)
            if k == j:
                problem = "numerator without denominator"
            else:
                num = make_row(_build(items[i:j], depth + 1, strict))
                den = make_row(_build(items[j:k], depth + 1, strict))
                nodes.append(Frac(num, den))
                j = k
        elif tag == Tag.FRAC_DEN:
            problem = "denominator without numerator"
        elif tag in (Tag.SUP, Tag.SUB):
            if not nodes:
                problem = f"{tag.value} with no base symbol"
            else:
                base = nodes[-1]
                slot = "sup" if tag == Tag.SUP else "sub"
                if isinstance(base, Scripted) and getattr(base, slot) is not None:
                    problem = f"second {tag.value} on one base"
                else:
                    arg = make_row(_build(items[i:j], depth + 1, strict))
                    if isinstance(base, Scripted):
                        nodes[-1] = Scripted(base.base, **{"sup": base.sup, "sub": base.sub, slot: arg})
                    else:
                        nodes[-1] = Scripted(base, **{slot: arg})
        else:
            problem = f"unknown role {tag!r}"
        if problem is not None:
            if strict:
                raise IncoherentStructure(idx, problem)
            items[i:j] = [(x, s, p[:depth] + p[depth + 1:]) for x, s, p in items[i:j]]
            continue
        i = j
    return nodes


# --------------------------------------------------------------------------
# vocabulary and canvases

MASK = "<mask>"
PAD = "<pad>"
MASK_ID = 0
PAD_ID = 1
PAD_PATH = "<pad>"
MASK_PATH = "<mask>"
PAD_PATH_ID = 0
MASK_PATH_ID = 1


def _path_key(p):
    return tuple(t.value for t in p)


@dataclass(frozen=True)
class Vocabulary:
    """Symbol and modifier-path tables, indexed separately."""

    symbols: tuple
    paths: tuple
    _sym_index: dict = field(init=False, repr=False, compare=False)
    _path_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_sym_index", {s: i for i, s in enumerate(self.symbols)})
        object.__setattr__(self, "_path_index", {p: i for i, p in enumerate(self.paths)})

    @property
    def n_symbols(self):
        return len(self.symbols)

    @property
    def n_paths(self):
        return len(self.paths)

    def symbol_id(self, s):
        try:
            return self._sym_index[s]
        except KeyError:
            raise OutOfVocabulary(s) from None

    def path_id(self, p):
        try:
            return self._path_index[tuple(p) if not isinstance(p, str) else p]
        except KeyError:
            raise OutOfVocabulary(p) from None

    def has_symbol(self, s):
        return s in self._sym_index

    def structural_path_ids(self):
        """Ids of every real (non-PAD, non-MASK) path."""
        return [i for i, p in enumerate(self.paths) if not isinstance(p, str)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "symbols": list(self.symbols),
                "paths": [p if isinstance(p, str) else list(_path_key(p)) for p in self.paths],
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        d = json.loads(text)
        paths = tuple(p if isinstance(p, str) else tuple(Tag(t) for t in p) for p in d["paths"])
        return cls(tuple(d["symbols"]), paths)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def build_vocabulary(corpus: Sequence[SatSequence], extra_symbols=(), extra_paths=()) -> Vocabulary:
    """Collect every observed symbol and path into sorted, deterministic tables.

    ``extra_symbols`` lets callers reserve ids for symbols that only appear in
    observations (for example the targets of a confusion channel).
    """
    if not corpus:
        raise EmptyCorpus()
    syms, paths = set(extra_symbols), {tuple(p) for p in extra_paths}
    for seq in corpus:
        syms.update(seq.symbols)
        paths.update(seq.paths)
    syms -= {MASK, PAD}
    return Vocabulary(
        (MASK, PAD) + tuple(sorted(syms)),
        (PAD_PATH, MASK_PATH) + tuple(sorted(paths, key=_path_key)),
    )


class Canvas:
    """Fixed-length pair of id arrays: symbol channel and modifier channel."""

    __slots__ = ("symbols", "modifiers")

    def __init__(self, symbols, modifiers):
        self.symbols = np.asarray(symbols, dtype=np.int64)
        self.modifiers = np.asarray(modifiers, dtype=np.int64)
        if self.symbols.shape != self.modifiers.shape or self.symbols.ndim != 1:
            raise ValueError("canvas channels must be 1-d arrays of equal length")

    def __len__(self):
        return len(self.symbols)

    def __eq__(self, other):
        if not isinstance(other, Canvas):
            return NotImplemented
        return np.array_equal(self.symbols, other.symbols) and np.array_equal(self.modifiers, other.modifiers)

    def __hash__(self):
        return hash((self.symbols.tobytes(), self.modifiers.tobytes()))

    def __repr__(self):
        return f"Canvas({self.symbols.tolist()}, {self.modifiers.tolist()})"

    def copy(self):
        return Canvas(self.symbols.copy(), self.modifiers.copy())


def encode(seq: SatSequence, vocab: Vocabulary, canvas_len: int) -> Canvas:
    if len(seq) > canvas_len:
        raise SequenceTooLong(len(seq), canvas_len)
    syms = np.full(canvas_len, PAD_ID, dtype=np.int64)
    mods = np.full(canvas_len, PAD_PATH_ID, dtype=np.int64)
    for i, (s, p) in enumerate(seq):
        syms[i] = vocab.symbol_id(s)
        mods[i] = vocab.path_id(p)
    return Canvas(syms, mods)


def decode_canvas(canvas: Canvas, vocab: Vocabulary) -> SatSequence:
    """Turn a decoded canvas back into a SAT sequence.

    The trailing PAD run is stripped.  Stray PAD/MASK symbols inside the
    sequence are dropped and special paths on real symbols read as baseline.
    """
    syms = canvas.symbols
    end = len(syms)
    while end > 0 and syms[end - 1] == PAD_ID:
        end -= 1
    out_s, out_p = [], []
    for i in range(end):
        s = int(syms[i])
        if s in (PAD_ID, MASK_ID):
            continue
        p = vocab.paths[int(canvas.modifiers[i])]
        out_s.append(vocab.symbols[s])
        out_p.append(() if isinstance(p, str) else p)
    return SatSequence(tuple(out_s), tuple(out_p))


# --------------------------------------------------------------------------
# text format: "x/_ 2/SUP"


def format_path(p) -> str:
    if isinstance(p, str):
        return p
    return ".".join(t.value for t in p) if p else "_"


def format_sat(seq: SatSequence) -> str:
    return " ".join(f"{s}/{format_path(p)}" for s, p in seq)


def parse_path(text: str) -> Path:
    if text == "_":
        return ()
    try:
        return tuple(Tag(t) for t in text.split("."))
    except ValueError:
        raise SatFormatError(text, "unknown modifier tag") from None


def parse_sat(line: str) -> SatSequence:
    line = line.rstrip("\n")
    if not line:
        return SatSequence()
    syms, paths = [], []
    for item in line.split(" "):
        sym, sep, ptext = item.rpartition("/")
        if not sep or not sym:
            raise SatFormatError(item, "expected symbol/PATH")
        syms.append(sym)
        paths.append(parse_path(ptext))
    return SatSequence(tuple(syms), tuple(paths))


def format_canvas(canvas: Canvas, vocab: Vocabulary, mask_glyph="☐") -> str:
    """Debug rendering of a canvas, MASK positions shown as a box glyph."""
    items = []
    for s, m in zip(canvas.symbols, canvas.modifiers):
        if s == MASK_ID:
            items.append(mask_glyph)
        else:
            items.append(f"{vocab.symbols[s]}/{format_path(vocab.paths[m])}")
    return " ".join(items)


def length_ratio(text: str, seq: SatSequence) -> float:
    """SAT length divided by raw lex-token count."""
    n_raw = len(lex(text))
    return len(seq) / n_raw if n_raw else 1.0
