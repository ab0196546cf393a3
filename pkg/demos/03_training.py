"""
Training a small denoiser
=========================

Fit the context denoiser on synthetic expressions corrupted by the
ambiguity channel, then compare it with the copy baseline at a few step
counts.  Takes a couple of minutes on a laptop.
"""

import numpy as np

from satdiff.channel import ChannelSampler, default_ambiguity_preset
from satdiff.corpus import GrammarConfig, generate
from satdiff.diffusion import reverse_decode
from satdiff.latex import render
from satdiff.metrics import evaluate
from satdiff.models import ContextDenoiser, TrainConfig, copy_denoiser, train
from satdiff.sat import Canvas, decode_canvas, encode, sat_detokenize, sat_tokenize

L = 32
seqs = [sat_tokenize(a) for a in generate(GrammarConfig(seed=1, max_symbols=L), 3300)]
train_set, test_set = seqs[:3000], seqs[3000:]
channel = default_ambiguity_preset()

cfg = TrainConfig(canvas_len=L, epochs=15)
params, vocab, log = train(train_set, channel, cfg, valid=test_set[:50])
for row in log.epochs[::3]:
    print(f"epoch {row['epoch']:2d}  loss {row['loss']:.3f}  kl {row['kl']:.3f}  valid CER {row['valid_cer']:.3f}")

# one fixed set of observations for every decoder
sampler = ChannelSampler(channel, vocab)
rng = np.random.default_rng(7)
obs = [Canvas(*sampler.sample(c.symbols, c.modifiers, rng)) for c in (encode(s, vocab, L) for s in test_set)]
refs = [render(sat_detokenize(s)) for s in test_set]


def score(denoiser, steps):
    hyps = [render(sat_detokenize(decode_canvas(reverse_decode(o, denoiser, steps, L), vocab), strict=False))
            for o in obs]
    return evaluate(refs, hyps)


print("\ncopy baseline\n" + score(copy_denoiser(vocab), 1).table())
model = ContextDenoiser(params, vocab)
for steps in (1, 2, 10):
    print(f"\ntrained, T={steps}\n" + score(model, steps).table())
