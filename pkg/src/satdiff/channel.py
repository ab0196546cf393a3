"""Symbol-confusion channel standing in for a visual encoder.

A channel maps each ground-truth symbol to a categorical distribution over
observed symbols and, independently, replaces each modifier path with a
uniformly drawn real path with probability ``eps_mod``.  PAD is never
corrupted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .errors import ChannelConfigError, MissingRow
from .sat import MASK_ID, PAD_ID, PAD_PATH_ID, Canvas, Vocabulary

ROW_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ConfusionChannel:
    rows: dict = field(default_factory=dict)
    eps_mod: float = 0.0
    # symbols without an explicit row pass through unchanged
    identity_fallback: bool = True

    def __post_init__(self):
        if not 0.0 <= self.eps_mod < 1.0:
            raise ChannelConfigError(f"eps_mod must lie in [0, 1), got {self.eps_mod}")
        for sym, row in self.rows.items():
            if any(p < 0 for p in row.values()):
                raise ChannelConfigError(f"negative probability in row {sym!r}")
            total = math.fsum(row.values())
            if abs(total - 1.0) > ROW_TOLERANCE:
                raise ChannelConfigError(f"row {sym!r} sums to {total}, not 1")

    def row(self, symbol: str) -> dict:
        if symbol in self.rows:
            return self.rows[symbol]
        if self.identity_fallback:
            return {symbol: 1.0}
        raise MissingRow(symbol)

    def symbols(self) -> set:
        """Every symbol named anywhere in the table."""
        out = set(self.rows)
        for row in self.rows.values():
            out.update(row)
        return out

    def matrix(self, vocab: Vocabulary) -> np.ndarray:
        """Row-stochastic (V, V) transition matrix over vocabulary ids.

        Rows for symbols with no channel row are NaN unless the channel falls
        back to identity; ``observe`` raises on those only when they occur.
        """
        V = vocab.n_symbols
        m = np.zeros((V, V))
        m[MASK_ID, MASK_ID] = 1.0
        m[PAD_ID, PAD_ID] = 1.0
        for sid in range(2, V):
            name = vocab.symbols[sid]
            try:
                row = self.row(name)
            except MissingRow:
                m[sid] = np.nan
                continue
            for obs, p in row.items():
                m[sid, vocab.symbol_id(obs)] += p
        return m


def identity_channel() -> ConfusionChannel:
    return ConfusionChannel({}, 0.0, True)


AMBIGUITY_GROUPS = (("z", "2"), ("2", "\\gamma"), ("1", "l"), ("O", "0"))
AMBIGUITY_FLIP = 0.25
AMBIGUITY_EPS_MOD = 0.1


def default_ambiguity_preset() -> ConfusionChannel:
    """Confusable pairs z/2, 2/gamma, 1/l, O/0, each flipping with mass 0.25.

    A symbol in several pairs (``2``) loses 0.25 to each partner.
    """
    rows = {}
    for group in AMBIGUITY_GROUPS:
        for a in group:
            row = rows.setdefault(a, {})
            for b in group:
                if b != a:
                    row[b] = row.get(b, 0.0) + AMBIGUITY_FLIP
    for a, row in rows.items():
        row[a] = 1.0 - math.fsum(row.values())
    return ConfusionChannel(rows, AMBIGUITY_EPS_MOD, True)


class ChannelSampler:
    """A channel bound to a vocabulary, with its transition matrix cached."""

    def __init__(self, channel: ConfusionChannel, vocab: Vocabulary):
        self.channel = channel
        self.vocab = vocab
        self.matrix = channel.matrix(vocab)
        self._cdf = np.cumsum(np.nan_to_num(self.matrix, nan=0.0), axis=1)
        self._missing = np.isnan(self.matrix[:, 0])
        self._real_paths = np.asarray(vocab.structural_path_ids(), dtype=np.int64)

    def sample(self, symbols: np.ndarray, modifiers: np.ndarray, rng: np.random.Generator):
        """Corrupt id arrays of any (matching) shape; returns new arrays."""
        symbols = np.asarray(symbols)
        modifiers = np.asarray(modifiers)
        if self._missing[symbols].any():
            bad = symbols[self._missing[symbols]].flat[0]
            raise MissingRow(self.vocab.symbols[int(bad)])
        shape = symbols.shape
        u_sym = rng.random(shape)
        u_mod = rng.random(shape)
        if len(self._real_paths):
            repl = self._real_paths[rng.integers(0, len(self._real_paths), size=shape)]
        else:
            repl = modifiers

        cdf = self._cdf[symbols]
        # scaling u by the row total keeps rounding slack off trailing zeros
        obs_sym = (cdf <= u_sym[..., None] * cdf[..., -1:]).sum(axis=-1)
        is_pad = symbols == PAD_ID
        obs_sym = np.where(is_pad, PAD_ID, obs_sym)

        flip = (u_mod < self.channel.eps_mod) & ~is_pad
        obs_mod = np.where(flip, repl, modifiers)
        obs_mod = np.where(is_pad, PAD_PATH_ID, obs_mod)
        return obs_sym.astype(np.int64), obs_mod.astype(np.int64)


def observe(truth: Canvas, channel, vocab: Vocabulary, rng: np.random.Generator) -> Canvas:
    """Sample an observation canvas for ``truth`` through ``channel``.

    ``channel`` may be a ConfusionChannel or an already-bound ChannelSampler.
    """
    sampler = channel if isinstance(channel, ChannelSampler) else ChannelSampler(channel, vocab)
    syms, mods = sampler.sample(truth.symbols, truth.modifiers, rng)
    return Canvas(syms, mods)


# --------------------------------------------------------------------------
# config files: "eps_mod <x>", optional "default identity|strict", then
# "symbol observed probability" triples; '#' starts a comment


def load_channel(path) -> ConfusionChannel:
    text = FsPath(path).read_text(encoding="utf-8")
    eps = None
    fallback = True
    rows: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "eps_mod" and len(parts) == 2:
            eps = float(parts[1])
        elif parts[0] == "default" and len(parts) == 2 and parts[1] in ("identity", "strict"):
            fallback = parts[1] == "identity"
        elif len(parts) == 3:
            try:
                p = float(parts[2])
            except ValueError:
                raise ChannelConfigError(f"line {lineno}: bad probability {parts[2]!r}") from None
            row = rows.setdefault(parts[0], {})
            row[parts[1]] = row.get(parts[1], 0.0) + p
        else:
            raise ChannelConfigError(f"line {lineno}: cannot parse {raw!r}")
    if eps is None:
        raise ChannelConfigError("missing eps_mod header line")
    return ConfusionChannel(rows, eps, fallback)


def save_channel(channel: ConfusionChannel, path) -> None:
    lines = [f"eps_mod {channel.eps_mod!r}", "default " + ("identity" if channel.identity_fallback else "strict")]
    for sym in sorted(channel.rows):
        for obs in sorted(channel.rows[sym]):
            lines.append(f"{sym} {obs} {channel.rows[sym][obs]!r}")
    FsPath(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
