"""
Decoding diversity
==================

Decode each observation ten times with the random remask policy and count
how many distinct symbol sequences come out.
"""

import numpy as np

from satdiff.channel import ChannelSampler, default_ambiguity_preset
from satdiff.corpus import GrammarConfig, generate
from satdiff.diffusion import decode_n
from satdiff.metrics import diversity_histogram
from satdiff.models import ContextDenoiser, TrainConfig, oracle_denoiser, train, training_vocabulary
from satdiff.sat import Canvas, decode_canvas, encode, sat_tokenize

L = 24
seqs = [sat_tokenize(a) for a in generate(GrammarConfig(seed=4, max_symbols=L), 700)]
channel = default_ambiguity_preset()
# one vocabulary over everything, so held-out expressions encode cleanly
vocab = training_vocabulary(seqs, channel)
params, vocab, _ = train(seqs[:600], channel, TrainConfig(canvas_len=L, epochs=8), vocab=vocab)

sampler = ChannelSampler(channel, vocab)
rng = np.random.default_rng(1)
truths = [encode(s, vocab, L) for s in seqs[600:]]
obs = [Canvas(*sampler.sample(c.symbols, c.modifiers, rng)) for c in truths]


def histogram(make_denoiser):
    runs = []
    for i, o in enumerate(obs):
        outs = decode_n(o, make_denoiser(i), 10, L, seeds=range(10))
        runs.append([decode_canvas(c, vocab).symbols for c in outs])
    return diversity_histogram(runs, 10)


# the oracle ignores the remask draws, so every input lands in bucket 1
print("oracle: ", histogram(lambda i: oracle_denoiser(truths[i], vocab)))
model = ContextDenoiser(params, vocab)
print("trained:", histogram(lambda i: model))
