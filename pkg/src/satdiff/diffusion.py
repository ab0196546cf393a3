"""Masked discrete diffusion over SAT canvases.

Forward: each position is independently replaced by MASK with probability
t/T.  Reverse: starting from an all-MASK canvas, every step predicts the
argmax token at every position (already-visible ones included) and then
re-masks ``ceil(L * (t-1) / T)`` positions, so after the last step nothing
is masked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import InvalidTime, ShapeMismatch
from .sat import MASK_ID, MASK_PATH_ID, Canvas

LOWCONF = "lowconf"
RANDOM = "random"
POLICIES = (LOWCONF, RANDOM)


@dataclass(frozen=True)
class DiffusionState:
    canvas: Canvas
    t: int
    T: int

    @property
    def mask_flags(self) -> np.ndarray:
        return self.canvas.symbols == MASK_ID

    @property
    def n_masked(self) -> int:
        return int(self.mask_flags.sum())


@dataclass(frozen=True)
class TokenDistribution:
    """Per-position categorical weights, shape (L, V_sym) and (L, V_mod)."""

    symbol: np.ndarray
    modifier: np.ndarray

    def __post_init__(self):
        if self.symbol.ndim != 2 or self.modifier.ndim != 2 or len(self.symbol) != len(self.modifier):
            raise ShapeMismatch("distribution channels must be (L, V) arrays of equal L")

    def argmax(self) -> Canvas:
        return Canvas(self.symbol.argmax(axis=1), self.modifier.argmax(axis=1))

    def confidence(self) -> np.ndarray:
        return self.symbol.max(axis=1) * self.modifier.max(axis=1)

    def is_normalized(self, tol=1e-9) -> bool:
        return bool(
            np.all(self.symbol >= 0) and np.all(self.modifier >= 0)
            and np.allclose(self.symbol.sum(axis=1), 1.0, atol=tol, rtol=0)
            and np.allclose(self.modifier.sum(axis=1), 1.0, atol=tol, rtol=0)
        )


class Denoiser(Protocol):
    def __call__(self, observation: Canvas, state: DiffusionState) -> TokenDistribution: ...


def _check_time(t, T, lo=0):
    if not (isinstance(T, (int, np.integer)) and T >= 1 and lo <= t <= T):
        raise InvalidTime(t, T)


def masked_canvas(length: int) -> Canvas:
    return Canvas(np.full(length, MASK_ID), np.full(length, MASK_PATH_ID))


def forward_mask(x0: Canvas, t: int, T: int, rng: np.random.Generator) -> DiffusionState:
    """Mask each position independently when u_i < t/T, u_i ~ U(0, 1)."""
    _check_time(t, T)
    u = rng.random(len(x0))
    mask = u < t / T
    syms = np.where(mask, MASK_ID, x0.symbols)
    mods = np.where(mask, MASK_PATH_ID, x0.modifiers)
    return DiffusionState(Canvas(syms, mods), t, T)


def remask_count(length: int, t: int, T: int) -> int:
    """Number of positions left masked after reverse step t: ceil(L(t-1)/T)."""
    return -(-length * (t - 1) // T)


def remask(pred: Canvas, dist: TokenDistribution, t: int, T: int, policy: str = LOWCONF,
           rng: Optional[np.random.Generator] = None) -> DiffusionState:
    _check_time(t, T, lo=1)
    L = len(pred)
    k = remask_count(L, t, T)
    if policy == LOWCONF:
        conf = dist.confidence()
        # stable sort keeps lower index first among equal confidences
        chosen = np.argsort(conf, kind="stable")[:k]
    elif policy == RANDOM:
        if rng is None:
            raise ValueError("random remask policy needs an rng")
        chosen = rng.permutation(L)[:k]
    else:
        raise ValueError(f"unknown remask policy {policy!r}")
    syms = pred.symbols.copy()
    mods = pred.modifiers.copy()
    syms[chosen] = MASK_ID
    mods[chosen] = MASK_PATH_ID
    return DiffusionState(Canvas(syms, mods), t - 1, T)


def reverse_decode(observation: Canvas, denoiser: Denoiser, T: int, canvas_len: int,
                   policy: str = LOWCONF, rng: Optional[np.random.Generator] = None,
                   trace: Optional[Callable[[DiffusionState, int], None]] = None) -> Canvas:
    """Run T predict-then-remask steps from a fully masked canvas.

    ``trace`` is called after every step with the new state and the step
    index t it came from.
    """
    _check_time(T, T, lo=1)
    state = DiffusionState(masked_canvas(canvas_len), T, T)
    for t in range(T, 0, -1):
        dist = denoiser(observation, state)
        if dist.symbol.shape[0] != canvas_len:
            raise ShapeMismatch(f"denoiser returned {dist.symbol.shape[0]} positions, expected {canvas_len}")
        state = remask(dist.argmax(), dist, t, T, policy, rng)
        if trace is not None:
            trace(state, t)
    return state.canvas


def decode_n(observation: Canvas, denoiser: Denoiser, T: int, canvas_len: int, seeds,
             policy: str = RANDOM) -> list:
    """Independent reverse decodes, one per seed."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("decode_n needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    return [
        reverse_decode(observation, denoiser, T, canvas_len, policy, np.random.default_rng(s))
        for s in seeds
    ]
