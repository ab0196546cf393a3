"""Synthetic expression grammar, corpus loaders and dataset splits."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadRatios, MissingTruthAnnotation, SatDiffError
from .latex import Frac, Node, Scripted, Sqrt, Symbol, iter_nodes, lex, make_row, parse
from .sat import D_MAX, format_sat, parse_sat

DEFAULT_SYMBOL_WEIGHTS = {
    "0": 3.0, "1": 5.0, "2": 8.0, "3": 3.0, "4": 2.5, "5": 2.0, "6": 1.5, "7": 1.5, "8": 1.5, "9": 1.5,
    "x": 6.0, "y": 4.0, "a": 3.0, "b": 3.0, "c": 2.0, "n": 3.0, "i": 2.0, "k": 2.0, "t": 2.0,
    "m": 1.5, "e": 1.0, "f": 1.0, "z": 0.6, "l": 0.5, "O": 0.3,
    "+": 5.0, "-": 4.0, "=": 4.0, "(": 1.5, ")": 1.5, ",": 1.0, "<": 0.5, ">": 0.5,
    "\\cdot": 1.0, "\\pi": 1.0, "\\alpha": 1.0, "\\theta": 1.0, "\\gamma": 0.4, "\\infty": 0.5,
    "\\sum": 0.5, "\\int": 0.5, "\\times": 0.5, "\\leq": 0.3, "\\sin": 0.5, "\\log": 0.5,
}

CONSTRUCTS = ("symbol", "frac", "sqrt", "sup", "sub")


@dataclass
class GrammarConfig:
    max_depth: int = 3
    max_row_len: int = 12
    max_inner_row_len: int = 3
    p_symbol: float = 0.76
    p_frac: float = 0.06
    p_sqrt: float = 0.04
    p_sup: float = 0.09
    p_sub: float = 0.05
    # chance a superscripted base also gets a subscript
    p_both_scripts: float = 0.2
    # chance a scripted base is a fraction or radical instead of a symbol
    p_compound_base: float = 0.1
    symbol_weights: dict = field(default_factory=lambda: dict(DEFAULT_SYMBOL_WEIGHTS))
    # expressions with more visible symbols are redrawn; None disables the cap
    max_symbols: int | None = 48
    seed: int = 0

    def __post_init__(self):
        probs = self.construct_probs
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-9:
            raise ValueError(f"construct probabilities must be non-negative and sum to 1, got {probs}")
        if not 0 <= self.max_depth <= D_MAX:
            raise ValueError(f"max_depth must lie in [0, {D_MAX}]")
        if self.max_row_len < 1 or self.max_inner_row_len < 1:
            raise ValueError("row lengths must be positive")

    @property
    def construct_probs(self):
        return (self.p_symbol, self.p_frac, self.p_sqrt, self.p_sup, self.p_sub)


class _Grammar:
    def __init__(self, cfg: GrammarConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self.alphabet = list(cfg.symbol_weights)
        w = np.array([cfg.symbol_weights[s] for s in self.alphabet], dtype=float)
        self.sym_p = w / w.sum()
        self.con_p = np.array(cfg.construct_probs)

    def symbol(self):
        return Symbol(self.alphabet[self.rng.choice(len(self.alphabet), p=self.sym_p)])

    def row(self, depth, max_len):
        n = int(self.rng.integers(1, max_len + 1))
        nodes = []
        for _ in range(n):
            nodes.append(self.item(depth, nodes[-1] if nodes else None))
        return nodes

    def arg(self, depth):
        return make_row(self.row(depth, self.cfg.max_inner_row_len))

    def item(self, depth, prev):
        kind = CONSTRUCTS[self.rng.choice(5, p=self.con_p)]
        if kind != "symbol" and depth + 1 > self.cfg.max_depth:
            kind = "symbol"
        # adjacent radicals would merge into one under SAT grouping
        if kind == "sqrt" and isinstance(prev, Sqrt):
            kind = "symbol"
        if kind == "symbol":
            return self.symbol()
        if kind == "frac":
            return Frac(self.arg(depth + 1), self.arg(depth + 1))
        if kind == "sqrt":
            return Sqrt(self.arg(depth + 1))
        base = self.symbol()
        if self.rng.random() < self.cfg.p_compound_base:
            if self.rng.random() < 0.5 or isinstance(prev, Sqrt):
                base = Frac(self.arg(depth + 1), self.arg(depth + 1))
            else:
                base = Sqrt(self.arg(depth + 1))
        if kind == "sup":
            sub = self.arg(depth + 1) if self.rng.random() < self.cfg.p_both_scripts else None
            return Scripted(base, self.arg(depth + 1), sub)
        return Scripted(base, None, self.arg(depth + 1))


def generate(cfg: GrammarConfig, n: int) -> list:
    """Sample ``n`` expressions from the probabilistic grammar."""
    g = _Grammar(cfg, np.random.default_rng(cfg.seed))
    out = []
    while len(out) < n:
        ast = make_row(g.row(0, cfg.max_row_len))
        if cfg.max_symbols is None or _n_symbols(ast) <= cfg.max_symbols:
            out.append(ast)
    return out


def _n_symbols(ast: Node) -> int:
    return sum(isinstance(x, Symbol) for x in iter_nodes(ast))


# --------------------------------------------------------------------------
# loaders


@dataclass
class LineError:
    lineno: int
    text: str
    error: Exception

    def __str__(self):
        return f"line {self.lineno}: {self.error}"


def load_lines(path) -> tuple:
    """Parse a one-expression-per-line file; returns ``(asts, errors)``.

    Blank lines are skipped; a bad line is recorded and never aborts the file.
    """
    asts, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.rstrip("\n")
            if not text.strip():
                continue
            try:
                asts.append(parse(lex(text)))
            except SatDiffError as exc:
                errors.append(LineError(lineno, text, exc))
    return asts, errors


def load_inkml_truth(path) -> str:
    """LaTeX truth label of an InkML file; stroke data is not read."""
    root = ET.parse(path).getroot()
    for el in root.iter():
        tag = el.tag.rsplit("}", 1)[-1]
        if tag == "annotation" and el.get("type") == "truth":
            text = (el.text or "").strip()
            if len(text) >= 2 and text[0] == "$" and text[-1] == "$":
                text = text[1:-1].strip()
            return text
    raise MissingTruthAnnotation(f"{path}: no <annotation type=\"truth\"> element")


def save_sat_corpus(path, seqs) -> None:
    Path(path).write_text("".join(format_sat(s) + "\n" for s in seqs), encoding="utf-8")


def load_sat_corpus(path) -> tuple:
    """Read a SAT text corpus; returns ``(sequences, errors)``."""
    seqs, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                seqs.append(parse_sat(line))
            except SatDiffError as exc:
                errors.append(LineError(lineno, line.rstrip("\n"), exc))
    return seqs, errors


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple
    valid: tuple
    test: tuple
    ratios: tuple
    seed: int


def split(ids, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> CorpusSplit:
    """Deterministic shuffled train/valid/test partition (largest-remainder sizes)."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(math.fsum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"need three positive ratios summing to 1, got {ratios}")
    ids = list(ids)
    n = len(ids)
    raw = [r * n for r in ratios]
    sizes = [int(math.floor(x + 1e-9)) for x in raw]
    order = sorted(range(3), key=lambda i: -(raw[i] - sizes[i]))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    a, b = sizes[0], sizes[0] + sizes[1]
    return CorpusSplit(tuple(shuffled[:a]), tuple(shuffled[a:b]), tuple(shuffled[b:]), ratios, seed)
