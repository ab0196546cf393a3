"""Denoisers and training.

Three denoisers share the ``Denoiser`` call signature: an oracle that
returns point masses on the truth, a copy baseline that returns point
masses on the observation, and a small trainable model.  The trainable
model sums symbol, modifier and position embeddings of both the current
diffusion state and the observation, adds linear maps of the neighbouring
observation features and a linearly projected mean over positions as global
context, passes the result through a residual ReLU layer and reads logits
off two linear heads.

Training minimises masked cross-entropy, optionally plus the symmetric KL
between predictions on two independently masked views of the same input
(random-masking mutual learning).  Gradients are derived by hand.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import ChannelSampler, ConfusionChannel
from .diffusion import DiffusionState, TokenDistribution, reverse_decode
from .errors import CheckpointMismatch, NonFiniteLoss, ShapeMismatch
from .sat import (
    MASK_ID,
    MASK_PATH_ID,
    PAD_ID,
    Canvas,
    SatSequence,
    Vocabulary,
    build_vocabulary,
    decode_canvas,
    encode,
)

log = logging.getLogger(__name__)

KL_EPS = 1e-12
CHECKPOINT_VERSION = 1
PARAM_BLOCKS = ("sym_emb", "mod_emb", "pos_emb", "ctx", "sym_head", "mod_head", "local",
                "mlp_in", "mlp_bias", "mlp_out")


# --------------------------------------------------------------------------
# fixed denoisers


def point_mass(canvas: Canvas, n_symbols: int, n_paths: int) -> TokenDistribution:
    L = len(canvas)
    ps = np.zeros((L, n_symbols))
    pm = np.zeros((L, n_paths))
    ps[np.arange(L), canvas.symbols] = 1.0
    pm[np.arange(L), canvas.modifiers] = 1.0
    return TokenDistribution(ps, pm)


def oracle_denoiser(truth: Canvas, vocab: Vocabulary):
    dist = point_mass(truth, vocab.n_symbols, vocab.n_paths)

    def denoise(observation, state):
        return dist

    return denoise


def copy_denoiser(vocab: Vocabulary):
    def denoise(observation, state):
        return point_mass(observation, vocab.n_symbols, vocab.n_paths)

    return denoise


# --------------------------------------------------------------------------
# trainable model


@dataclass
class ModelParams:
    sym_emb: np.ndarray   # (V_sym, d)
    mod_emb: np.ndarray   # (V_mod, d)
    pos_emb: np.ndarray   # (canvas_len, d)
    ctx: np.ndarray       # (d, d)
    sym_head: np.ndarray  # (d, V_sym)
    mod_head: np.ndarray  # (d, V_mod)
    # (2w, d, d): maps from the token features at offsets -w..-1, 1..w;
    # w = 0 gives the pure mean-context model
    local: np.ndarray = None
    # residual ReLU layer h + relu(h @ mlp_in + mlp_bias) @ mlp_out; width 0 disables it
    mlp_in: np.ndarray = None    # (d, m)
    mlp_bias: np.ndarray = None  # (m,)
    mlp_out: np.ndarray = None   # (m, d)

    def __post_init__(self):
        d = self.d
        if self.local is None:
            self.local = np.zeros((0, d, d))
        if self.mlp_in is None:
            self.mlp_in, self.mlp_bias, self.mlp_out = np.zeros((d, 0)), np.zeros(0), np.zeros((0, d))

    @property
    def hidden(self):
        return self.mlp_bias.shape[0]

    @property
    def d(self):
        return self.ctx.shape[0]

    @property
    def window(self):
        return self.local.shape[0] // 2

    def offsets(self):
        w = self.window
        return [o for o in range(-w, w + 1) if o != 0]

    @property
    def canvas_len(self):
        return self.pos_emb.shape[0]

    def blocks(self):
        return {k: getattr(self, k) for k in PARAM_BLOCKS}

    def copy(self):
        return ModelParams(**{k: v.copy() for k, v in self.blocks().items()})

    def all_finite(self):
        return all(np.isfinite(v).all() for v in self.blocks().values())


def init_params(n_symbols, n_paths, canvas_len, d, rng, scale=0.1, window=0, hidden=0) -> ModelParams:
    if d < 2:
        raise ValueError("embedding width d must be at least 2")
    if window < 0 or hidden < 0:
        raise ValueError("window and hidden width must be non-negative")
    return ModelParams(
        sym_emb=rng.normal(0, scale, (n_symbols, d)),
        mod_emb=rng.normal(0, scale, (n_paths, d)),
        pos_emb=rng.normal(0, scale, (canvas_len, d)),
        ctx=rng.normal(0, scale, (d, d)),
        sym_head=rng.normal(0, scale, (d, n_symbols)),
        mod_head=rng.normal(0, scale, (d, n_paths)),
        local=rng.normal(0, scale / max(window, 1), (2 * window, d, d)),
        mlp_in=rng.normal(0, 1 / math.sqrt(d), (d, hidden)),
        mlp_bias=np.zeros(hidden),
        mlp_out=rng.normal(0, scale, (hidden, d)),
    )


def _shift(x, o):
    """out[:, i] = x[:, i + o], zero where i + o falls off the canvas."""
    out = np.zeros_like(x)
    L = x.shape[1]
    if o > 0:
        out[:, :L - o] = x[:, o:]
    elif o < 0:
        out[:, -o:] = x[:, :L + o]
    else:
        out[:] = x
    return out


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _forward(params: ModelParams, st_s, st_m, ob_s, ob_m):
    """Batched forward pass over (B, L) id arrays; returns probabilities and a cache."""
    B, L = st_s.shape
    if L != params.canvas_len:
        raise ShapeMismatch(f"canvas length {L} != model canvas length {params.canvas_len}")
    go = params.sym_emb[ob_s] + params.mod_emb[ob_m]
    g = params.sym_emb[st_s] + params.mod_emb[st_m] + go
    f = g + params.pos_emb[None]
    # neighbours are read from the observation only, so decoding never
    # conditions the local term on its own earlier guesses
    for k, o in enumerate(params.offsets()):
        f += _shift(go, o) @ params.local[k]
    fbar = f.mean(axis=1)
    c = fbar @ params.ctx
    h0 = f + c[:, None, :]
    a = h0 @ params.mlp_in + params.mlp_bias
    u = np.maximum(a, 0.0)
    h = h0 + u @ params.mlp_out
    zs = h @ params.sym_head
    zm = h @ params.mod_head
    cache = dict(ids=(st_s, st_m, ob_s, ob_m), go=go, fbar=fbar, h0=h0, a=a, u=u, h=h, zs=zs, zm=zm)
    return _softmax(zs), _softmax(zm), cache


def _backward(params: ModelParams, cache, dzs, dzm, grads: dict):
    """Accumulate parameter gradients for upstream logit gradients into ``grads``."""
    st_s, st_m, ob_s, ob_m = cache["ids"]
    h, fbar = cache["h"], cache["fbar"]
    B, L, d = h.shape
    h2 = h.reshape(-1, d)
    grads["sym_head"] += h2.T @ dzs.reshape(B * L, -1)
    grads["mod_head"] += h2.T @ dzm.reshape(B * L, -1)
    dh = dzs @ params.sym_head.T + dzm @ params.mod_head.T
    if params.hidden:
        u2 = cache["u"].reshape(B * L, -1)
        grads["mlp_out"] += u2.T @ dh.reshape(B * L, d)
        da = (dh @ params.mlp_out.T) * (cache["a"] > 0)
        da2 = da.reshape(B * L, -1)
        grads["mlp_in"] += cache["h0"].reshape(B * L, d).T @ da2
        grads["mlp_bias"] += da2.sum(axis=0)
        dh = dh + da @ params.mlp_in.T
    dc = dh.sum(axis=1)
    grads["ctx"] += fbar.T @ dc
    df = dh + (dc @ params.ctx.T)[:, None, :] / L
    dgo = df.copy()
    if params.window:
        go = cache["go"]
        for k, o in enumerate(params.offsets()):
            grads["local"][k] += _shift(go, o).reshape(B * L, d).T @ df.reshape(B * L, d)
            dgo += _shift(df @ params.local[k].T, -o)
    flat, flat_o = df.reshape(-1, d), dgo.reshape(-1, d)
    grads["sym_emb"] += _scatter(st_s, flat, grads["sym_emb"].shape[0]) + _scatter(ob_s, flat_o, grads["sym_emb"].shape[0])
    grads["mod_emb"] += _scatter(st_m, flat, grads["mod_emb"].shape[0]) + _scatter(ob_m, flat_o, grads["mod_emb"].shape[0])
    grads["pos_emb"] += df.sum(axis=0)


def _scatter(ids, rows, n):
    """Sum ``rows`` into an (n, d) table at ``ids`` (embedding backward)."""
    counts = np.zeros((n, len(rows)))
    np.add.at(counts, (ids.ravel(), np.arange(len(rows))), 1.0)
    return counts @ rows


def forward_model(params: ModelParams, observation: Canvas, state: DiffusionState) -> TokenDistribution:
    if len(observation) != len(state.canvas):
        raise ShapeMismatch("observation and state canvases differ in length")
    ps, pm, _ = _forward(
        params,
        state.canvas.symbols[None], state.canvas.modifiers[None],
        observation.symbols[None], observation.modifiers[None],
    )
    return TokenDistribution(ps[0], pm[0])


class ContextDenoiser:
    """Callable denoiser backed by trained parameters."""

    def __init__(self, params: ModelParams, vocab: Vocabulary | None = None):
        self.params = params
        self.vocab = vocab

    def __call__(self, observation, state):
        return forward_model(self.params, observation, state)


# --------------------------------------------------------------------------
# losses on distributions


def loss_ce(dist: TokenDistribution, truth: Canvas, mask_flags) -> float:
    """Mean over masked positions of -log p(truth), summed over both channels."""
    mask = np.asarray(mask_flags, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        log.debug("loss_ce called with no masked positions; returning 0")
        return 0.0
    idx = np.flatnonzero(mask)
    ps = dist.symbol[idx, truth.symbols[idx]]
    pm = dist.modifier[idx, truth.modifiers[idx]]
    nll = -np.log(np.maximum(ps, KL_EPS)) - np.log(np.maximum(pm, KL_EPS))
    return float(nll.sum() / n)


def _sym_kl(p, q):
    """Per-row D(p||q) + D(q||p) = sum (p - q)(log p - log q)."""
    return ((p - q) * (np.log(np.maximum(p, KL_EPS)) - np.log(np.maximum(q, KL_EPS)))).sum(axis=-1)


def _sym_kl_grad(p, q):
    """d/dp of the symmetric KL (logs floored at KL_EPS)."""
    lp = np.log(np.maximum(p, KL_EPS))
    lq = np.log(np.maximum(q, KL_EPS))
    return (lp - lq) + np.where(p > KL_EPS, (p - q) / np.maximum(p, KL_EPS), 0.0)


def loss_rmml(dist1: TokenDistribution, dist2: TokenDistribution, positions) -> float:
    """Symmetric KL, summed over both channels, averaged over ``positions``.

    ``positions`` is a boolean mask or an index array.
    """
    pos = np.asarray(positions)
    if pos.dtype == bool:
        pos = np.flatnonzero(pos)
    if len(pos) == 0:
        return 0.0
    kl = _sym_kl(dist1.symbol[pos], dist2.symbol[pos]) + _sym_kl(dist1.modifier[pos], dist2.modifier[pos])
    return float(kl.mean())


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 25
    batch_size: int = 32
    d: int = 64
    canvas_len: int = 64
    T: int = 10
    rmml_enabled: bool = True
    lambda_kl: float = 1.0
    seed: int = 0
    init_scale: float = 0.1
    valid_T: int = 10
    # neighbourhood half-width of the local feature term; 0 = mean context only
    window: int = 1
    # width of the residual ReLU layer; 0 = linear read-out
    hidden: int = 128
    # global gradient-norm clip per step; None disables
    clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.lambda_kl < 0:
            raise ValueError("lambda_kl must be non-negative")
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.window < 0 or self.hidden < 0:
            raise ValueError("window and hidden must be non-negative")


@dataclass
class Batch:
    """Everything needed to evaluate the training loss deterministically."""

    truth_s: np.ndarray
    truth_m: np.ndarray
    obs_s: np.ndarray
    obs_m: np.ndarray
    mask1: np.ndarray
    mask2: np.ndarray


def _masked_state(truth_s, truth_m, mask):
    return np.where(mask, MASK_ID, truth_s), np.where(mask, MASK_PATH_ID, truth_m)


def _ce_part(ps, pm, cache, truth_s, truth_m, mask):
    """Per-example masked CE (mean over batch) and its logit gradients."""
    B, L = truth_s.shape
    n = mask.sum(axis=1)
    w = np.where(n > 0, 1.0 / np.maximum(n, 1), 0.0)[:, None] * mask / B
    lsz = _log_softmax(cache["zs"])
    lmz = _log_softmax(cache["zm"])
    bi, li = np.indices((B, L))
    nll = -lsz[bi, li, truth_s] - lmz[bi, li, truth_m]
    loss = float((nll * w).sum())
    dzs = ps.copy()
    dzs[bi, li, truth_s] -= 1.0
    dzm = pm.copy()
    dzm[bi, li, truth_m] -= 1.0
    return loss, dzs * w[..., None], dzm * w[..., None]


def _softmax_back(p, g):
    return p * (g - (p * g).sum(axis=-1, keepdims=True))


def batch_loss(params: ModelParams, batch: Batch, rmml: bool = True, lambda_kl: float = 1.0,
               with_grad: bool = True):
    """Total training loss for a batch, its parts and (optionally) gradients.

    Returns ``(loss, parts, grads)`` where parts has ``ce1``, ``ce2`` and
    ``kl``; loss = ce1 + ce2 + lambda_kl * kl with RMML, else ce1.
    """
    B, L = batch.truth_s.shape
    grads = {k: np.zeros_like(v) for k, v in params.blocks().items()} if with_grad else None

    s1, m1 = _masked_state(batch.truth_s, batch.truth_m, batch.mask1)
    ps1, pm1, c1 = _forward(params, s1, m1, batch.obs_s, batch.obs_m)
    ce1, dzs1, dzm1 = _ce_part(ps1, pm1, c1, batch.truth_s, batch.truth_m, batch.mask1)
    parts = {"ce1": ce1, "ce2": 0.0, "kl": 0.0}
    if not rmml:
        if with_grad:
            _backward(params, c1, dzs1, dzm1, grads)
        return ce1, parts, grads

    s2, m2 = _masked_state(batch.truth_s, batch.truth_m, batch.mask2)
    ps2, pm2, c2 = _forward(params, s2, m2, batch.obs_s, batch.obs_m)
    ce2, dzs2, dzm2 = _ce_part(ps2, pm2, c2, batch.truth_s, batch.truth_m, batch.mask2)

    # KL over non-PAD positions of the truth
    keep = batch.truth_s != PAD_ID
    n = keep.sum(axis=1)
    w = np.where(n > 0, 1.0 / np.maximum(n, 1), 0.0)[:, None] * keep / B
    kl = float(((_sym_kl(ps1, ps2) + _sym_kl(pm1, pm2)) * w).sum())
    parts.update(ce2=ce2, kl=kl)
    loss = ce1 + ce2 + lambda_kl * kl
    if with_grad:
        wk = (lambda_kl * w)[..., None]
        dzs1 = dzs1 + _softmax_back(ps1, _sym_kl_grad(ps1, ps2)) * wk
        dzm1 = dzm1 + _softmax_back(pm1, _sym_kl_grad(pm1, pm2)) * wk
        dzs2 = dzs2 + _softmax_back(ps2, _sym_kl_grad(ps2, ps1)) * wk
        dzm2 = dzm2 + _softmax_back(pm2, _sym_kl_grad(pm2, pm1)) * wk
        _backward(params, c1, dzs1, dzm1, grads)
        _backward(params, c2, dzs2, dzm2, grads)
    return loss, parts, grads


def sample_batch(truth_s, truth_m, sampler: ChannelSampler, T: int, rng: np.random.Generator) -> Batch:
    """Observation once, a shared t ~ U{1..T} per example, two independent maskings."""
    B, L = truth_s.shape
    obs_s, obs_m = sampler.sample(truth_s, truth_m, rng)
    t = rng.integers(1, T + 1, size=B)
    rate = (t / T)[:, None]
    mask1 = rng.random((B, L)) < rate
    mask2 = rng.random((B, L)) < rate
    return Batch(truth_s, truth_m, obs_s, obs_m, mask1, mask2)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)

    def add(self, **row):
        self.epochs.append(row)

    @property
    def losses(self):
        return [r["loss"] for r in self.epochs]


def training_vocabulary(corpus, channel: ConfusionChannel) -> Vocabulary:
    return build_vocabulary(corpus, extra_symbols=channel.symbols())


def train(corpus, channel: ConfusionChannel, cfg: TrainConfig, vocab: Vocabulary | None = None,
          valid=None):
    """Fit a context denoiser with SGD.

    ``valid`` is an optional list of SAT sequences used for a per-epoch
    validation CER (decoded with ``cfg.valid_T`` steps).  Returns
    ``(params, vocab, log)``.
    """
    from .metrics import corpus_cer, metric_tokens
    from .latex import render
    from .sat import sat_detokenize

    if vocab is None:
        vocab = training_vocabulary(corpus, channel)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(vocab.n_symbols, vocab.n_paths, cfg.canvas_len, cfg.d, rng, cfg.init_scale, cfg.window, cfg.hidden)
    sampler = ChannelSampler(channel, vocab)
    canvases = [encode(seq, vocab, cfg.canvas_len) for seq in corpus]
    all_s = np.stack([c.symbols for c in canvases])
    all_m = np.stack([c.modifiers for c in canvases])
    N = len(canvases)

    valid_obs = None
    if valid:
        vrng = np.random.default_rng([cfg.seed, 1])
        valid_truth = [encode(seq, vocab, cfg.canvas_len) for seq in valid]
        valid_obs = [Canvas(*sampler.sample(c.symbols, c.modifiers, vrng)) for c in valid_truth]
        valid_refs = [metric_tokens(render(sat_detokenize(seq))) for seq in valid]

    tlog = TrainLog()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(N)
        totals = {"loss": 0.0, "ce1": 0.0, "ce2": 0.0, "kl": 0.0}
        n_batches = 0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = sample_batch(all_s[idx], all_m[idx], sampler, cfg.T, rng)
            loss, parts, grads = batch_loss(params, batch, cfg.rmml_enabled, cfg.lambda_kl)
            if not math.isfinite(loss):
                raise NonFiniteLoss(step, f"epoch {epoch}, parts {parts}")
            scale = cfg.learning_rate
            if cfg.clip_norm is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > cfg.clip_norm:
                    scale *= cfg.clip_norm / norm
            for k, g in grads.items():
                getattr(params, k)[...] -= scale * g
            totals["loss"] += loss
            for k in parts:
                totals[k] += parts[k]
            n_batches += 1
            step += 1
        row = {k: v / n_batches for k, v in totals.items()}
        row["epoch"] = epoch
        row["valid_cer"] = None
        if valid_obs is not None:
            den = ContextDenoiser(params, vocab)
            hyps = [
                metric_tokens(render(sat_detokenize(decode_canvas(
                    reverse_decode(o, den, cfg.valid_T, cfg.canvas_len), vocab), strict=False)))
                for o in valid_obs
            ]
            row["valid_cer"] = corpus_cer(valid_refs, hyps)
        tlog.add(**row)
        log.info("epoch %d loss %.4f valid_cer %s", epoch, row["loss"], row["valid_cer"])
    return params, vocab, tlog


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: ModelParams, vocab: Vocabulary, extra: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "vocab": vocab.to_json(),
        "vocab_hash": vocab.hash,
        "d": params.d,
        "canvas_len": params.canvas_len,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **params.blocks())


def load_checkpoint(path, expected_vocab_hash: str | None = None):
    """Returns ``(params, vocab, meta)``; raises CheckpointMismatch on a bad hash."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        params = ModelParams(**{k: data[k].copy() for k in PARAM_BLOCKS})
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"unsupported checkpoint version {meta.get('version')}")
    vocab = Vocabulary.from_json(meta["vocab"])
    if vocab.hash != meta["vocab_hash"]:
        raise CheckpointMismatch("stored vocabulary does not match its recorded hash")
    if expected_vocab_hash is not None and expected_vocab_hash != vocab.hash:
        raise CheckpointMismatch(f"vocabulary hash {vocab.hash} != expected {expected_vocab_hash}")
    if params.sym_emb.shape[0] != vocab.n_symbols or params.mod_emb.shape[0] != vocab.n_paths:
        raise CheckpointMismatch("parameter shapes do not match the stored vocabulary")
    return params, vocab, meta
