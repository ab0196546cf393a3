"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are printed in the pytest terminal summary.  Run this file alone
with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from satdiff.channel import ChannelSampler, default_ambiguity_preset, identity_channel
from satdiff.cli import main as cli_main
from satdiff.corpus import GrammarConfig, generate, save_sat_corpus
from satdiff.diffusion import RANDOM, DiffusionState, TokenDistribution, decode_n, forward_mask, reverse_decode
from satdiff.latex import render
from satdiff.metrics import ER_KS, diversity_histogram, evaluate, syntax_error_rate, token_edit_distance
from satdiff.models import (
    PARAM_BLOCKS,
    Batch,
    ContextDenoiser,
    TrainConfig,
    batch_loss,
    copy_denoiser,
    init_params,
    loss_rmml,
    oracle_denoiser,
    train,
)
from satdiff.sat import Canvas, SatSequence, build_vocabulary, decode_canvas, encode, sat_detokenize, sat_tokenize

CANVAS = 32
N_TRAIN = 5000
N_TEST = 1000
SEEDS = range(5)
TRAIN_CFG = dict(canvas_len=CANVAS)
IDENTITY_CFG = dict(canvas_len=CANVAS, epochs=10)

# reports from every evaluated corpus, checked for the ER ordering
REPORTS = []


def record(n, name, ok, detail):
    ACCEPTANCE_LINES.append(f"C{n} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


# --------------------------------------------------------------------------
# shared data and models


@pytest.fixture(scope="module")
def data():
    asts = generate(GrammarConfig(seed=1, max_symbols=CANVAS), N_TRAIN + N_TEST)
    seqs = [sat_tokenize(a) for a in asts]
    return seqs[:N_TRAIN], seqs[N_TRAIN:]


@pytest.fixture(scope="module")
def ambiguity_model(data):
    t0 = time.perf_counter()
    params, vocab, _ = train(data[0], default_ambiguity_preset(), TrainConfig(**TRAIN_CFG))
    return params, vocab, time.perf_counter() - t0


def decode_corpus(denoiser_for, observations, vocab, T, policy="lowconf", seed=0):
    rng = np.random.default_rng(seed)
    return [
        render(sat_detokenize(decode_canvas(reverse_decode(o, denoiser_for(i), T, CANVAS, policy, rng), vocab),
                              strict=False))
        for i, o in enumerate(observations)
    ]


def observations(seqs, vocab, channel, seed):
    sampler = ChannelSampler(channel, vocab)
    rng = np.random.default_rng(100 + seed)
    truths = [encode(s, vocab, CANVAS) for s in seqs]
    return truths, [Canvas(*sampler.sample(c.symbols, c.modifiers, rng)) for c in truths]


@pytest.fixture(scope="module")
def trend_runs(data, ambiguity_model):
    """Per seed: reports for the copy baseline and the trained model at T=2 and T=10."""
    params, vocab, train_time = ambiguity_model
    test = data[1]
    refs = [render(sat_detokenize(s)) for s in test]
    model = ContextDenoiser(params, vocab)
    t0 = time.perf_counter()
    runs = []
    for seed in SEEDS:
        _, obs = observations(test, vocab, default_ambiguity_preset(), seed)
        row = {"copy": evaluate(refs, decode_corpus(lambda i: copy_denoiser(vocab), obs, vocab, 1))}
        for T in (2, 10):
            row[T] = evaluate(refs, decode_corpus(lambda i: model, obs, vocab, T))
        REPORTS.extend(row.values())
        runs.append(row)
    return runs, train_time + time.perf_counter() - t0


# --------------------------------------------------------------------------


def test_c01_round_trip():
    t0 = time.perf_counter()
    asts = generate(GrammarConfig(seed=2024, max_depth=4), 10_000)
    ok = sum(sat_detokenize(sat_tokenize(a)) == a and render(sat_detokenize(sat_tokenize(a))) == render(a)
             for a in asts)
    elapsed = time.perf_counter() - t0
    passed = record(1, "tokenization round-trip", ok == 10_000 and elapsed < 30,
                    f"{ok}/10000 exact, {elapsed:.1f}s incl. generation, limit 30s")
    assert passed


def test_c02_alignment():
    asts = generate(GrammarConfig(seed=7, max_depth=4), 10_000)
    ok = sum(len(s.symbols) == len(s.paths) for s in map(sat_tokenize, asts))
    assert record(2, "one-to-one alignment", ok == 10_000, f"{ok}/10000")


def test_c03_masking_law():
    rng = np.random.default_rng(3)
    T, n, L = 50, 10_000, 32
    x0 = Canvas(rng.integers(2, 20, L), rng.integers(2, 9, L))
    fracs = {}
    for t in (0, 12, 25, 37, 50):
        fracs[t] = np.mean([forward_mask(x0, t, T, rng).n_masked for _ in range(n)]) / L
    ok = (fracs[0] == 0.0 and fracs[50] == 1.0
          and all(abs(fracs[t] - t / T) <= 0.01 for t in fracs))
    detail = ", ".join(f"t={t}: {f:.4f}" for t, f in fracs.items())
    assert record(3, "masking-rate law", ok, detail)


def test_c04_oracle_exactness(data):
    seqs = data[1]
    vocab = build_vocabulary(seqs)
    truths = [encode(s, vocab, CANVAS) for s in seqs]
    refs = [render(sat_detokenize(s)) for s in seqs]
    results = {}
    for T in (1, 2, 10, 50):
        hyps = decode_corpus(lambda i: oracle_denoiser(truths[i], vocab), truths, vocab, T)
        r = evaluate(refs, hyps)
        REPORTS.append(r)
        results[T] = (r.em, r.cer)
    ok = all(em == 1.0 and cer == 0.0 for em, cer in results.values())
    detail = ", ".join(f"T={T}: EM {em:.3f} CER {cer:.3f}" for T, (em, cer) in results.items())
    assert record(4, "oracle exactness", ok, detail + f", n={len(seqs)}")


def _fd_worst(params, f, grads, rng, n=20, h=1e-5):
    worst = 0.0
    for name in PARAM_BLOCKS:
        arr = getattr(params, name)
        if arr.size == 0:
            continue
        for _ in range(n):
            idx = tuple(rng.integers(0, s) for s in arr.shape)
            old = arr[idx]
            arr[idx] = old + h
            up = f()
            arr[idx] = old - h
            down = f()
            arr[idx] = old
            num, ana = (up - down) / (2 * h), grads[name][idx]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    return worst


def test_c05_gradients():
    rng = np.random.default_rng(5)
    B, L, Vs, Vm = 4, 8, 9, 6
    worst = {}
    for arch in (dict(window=0, hidden=0), dict(window=1, hidden=6)):
        p = init_params(Vs, Vm, L, 5, rng, scale=0.5, **arch)
        ts, tm = rng.integers(2, Vs, (B, L)), rng.integers(2, Vm, (B, L))
        ts[:, -2:], tm[:, -2:] = 1, 0
        b = Batch(ts, tm, rng.integers(1, Vs, (B, L)), rng.integers(0, Vm, (B, L)),
                  rng.random((B, L)) < 0.5, rng.random((B, L)) < 0.5)
        g_ce = batch_loss(p, b, rmml=False)[2]
        g1 = batch_loss(p, b, True, 1.0)[2]
        g0 = batch_loss(p, b, True, 0.0)[2]
        g_kl = {k: g1[k] - g0[k] for k in g1}
        tag = f"w{arch['window']}h{arch['hidden']}"
        worst[f"CE/{tag}"] = _fd_worst(p, lambda: batch_loss(p, b, False, with_grad=False)[0], g_ce, rng)
        worst[f"KL/{tag}"] = _fd_worst(p, lambda: batch_loss(p, b, True, 1.0, with_grad=False)[1]["kl"], g_kl, rng)
        worst[f"total/{tag}"] = _fd_worst(p, lambda: batch_loss(p, b, True, 1.0, with_grad=False)[0], g1, rng)
    ok = all(v < 1e-4 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record(5, "gradient correctness", ok, "worst relative error " + detail)


def test_c06_rmml_algebra():
    rng = np.random.default_rng(6)
    nonneg = symmetric = True
    self_max = 0.0
    for _ in range(500):
        a = TokenDistribution(rng.dirichlet(np.ones(7) * 0.5, 5), rng.dirichlet(np.ones(4), 5))
        b = TokenDistribution(rng.dirichlet(np.ones(7) * 0.5, 5), rng.dirichlet(np.ones(4), 5))
        pos = np.arange(5)
        nonneg &= loss_rmml(a, b, pos) >= 0
        symmetric &= loss_rmml(a, b, pos) == loss_rmml(b, a, pos)
        self_max = max(self_max, loss_rmml(a, a, pos))
    p, q = [0.2, 0.3, 0.5], [0.1, 0.6, 0.3]
    hand = sum(x * math.log(x / y) for x, y in zip(p, q)) + sum(y * math.log(y / x) for x, y in zip(p, q))
    one = np.ones((1, 1))
    got = loss_rmml(TokenDistribution(np.array([p]), one), TokenDistribution(np.array([q]), one), [0])
    ok = nonneg and symmetric and self_max < 1e-9 and abs(got - hand) < 1e-12
    assert record(6, "RMML algebra", ok,
                  f"nonneg {nonneg}, symmetric {symmetric}, max KL(p,p) {self_max:.1e}, hand case diff {abs(got - hand):.1e}")


def _brute(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(_brute(a[1:], b) + 1, _brute(a, b[1:]) + 1, _brute(a[1:], b[1:]) + (a[0] != b[0]))


def test_c07_metric_oracles(trend_runs, identity_runs):
    rng = np.random.default_rng(7)
    agree = 0
    for _ in range(1000):
        a = tuple(rng.choice(list("xy2{}"), rng.integers(0, 7)))
        b = tuple(rng.choice(list("xy2{}"), rng.integers(0, 7)))
        agree += token_edit_distance(a, b) == _brute(a, b)
    ordered = all([r.em] + [r.er_le[k] for k in ER_KS] == sorted([r.em] + [r.er_le[k] for k in ER_KS])
                  for r in REPORTS)
    ok = agree == 1000 and ordered and len(REPORTS) > 0
    assert record(7, "metric oracles", ok,
                  f"edit distance {agree}/1000 match brute force, EM<=ER1..ER4 on {len(REPORTS)} corpora: {ordered}")


def test_c08_ser(data, ambiguity_model):
    params, vocab, _ = ambiguity_model
    seqs = data[1][:300]
    _, obs = observations(seqs, vocab, default_ambiguity_preset(), 99)
    hyps = decode_corpus(lambda i: ContextDenoiser(params, vocab), obs, vocab, 10, RANDOM, seed=3)
    # raw garbage through the lenient detokenizer is also brace-balanced
    rng = np.random.default_rng(8)
    paths = [p for p in vocab.paths if not isinstance(p, str)]

    noise = []
    for _ in range(300):
        n = int(rng.integers(1, 12))
        noise.append(render(sat_detokenize(SatSequence(
            tuple(str(c) for c in rng.choice(["x", "2", "+"], n)),
            tuple(paths[i] for i in rng.integers(0, len(paths), n))),
            strict=False)))
    control = [h[:-1] if h.endswith("}") else h + "{" for h in hyps]
    ser_h, ser_n, ser_c = syntax_error_rate(hyps), syntax_error_rate(noise), syntax_error_rate(control)
    ok = ser_h == 0 and ser_n == 0 and ser_c > 0
    assert record(8, "SER structural consistency", ok,
                  f"decoded SER {ser_h}, random-SAT SER {ser_n}, brace-corrupted control SER {ser_c:.2f}")


def test_c09_step_trend(trend_runs):
    runs, elapsed = trend_runs
    cer = {T: np.mean([r[T].cer for r in runs]) for T in (2, 10)}
    em = {T: np.mean([r[T].em for r in runs]) for T in (2, 10)}
    ok = cer[10] <= cer[2] and em[10] >= em[2] and elapsed < 600
    assert record(9, "step-count trend", ok,
                  f"CER T2 {cer[2]:.4f} -> T10 {cer[10]:.4f}, EM T2 {em[2]:.4f} -> T10 {em[10]:.4f}, "
                  f"{len(SEEDS)} seeds x {N_TEST} exprs, {elapsed:.0f}s incl. training")


@pytest.fixture(scope="module")
def identity_runs(data):
    train_set, test = data
    params, vocab, _ = train(train_set, identity_channel(), TrainConfig(**IDENTITY_CFG))
    model = ContextDenoiser(params, vocab)
    refs = [render(sat_detokenize(s)) for s in test]
    _, obs = observations(test, vocab, identity_channel(), 0)
    r = evaluate(refs, decode_corpus(lambda i: model, obs, vocab, 10))
    REPORTS.append(r)
    return r


def test_c10_learning_signal(trend_runs, identity_runs):
    runs, _ = trend_runs
    copy = np.mean([r["copy"].cer for r in runs])
    model = np.mean([r[10].cer for r in runs])
    gain = (copy - model) / copy
    ok = gain >= 0.20 and identity_runs.em >= 0.95
    assert record(10, "learning signal", ok,
                  f"CER copy {copy:.4f} vs trained {model:.4f} = {100 * gain:.1f}% relative gain (need 20%), "
                  f"identity-channel EM {identity_runs.em:.4f} (need 0.95)")


def test_c11_diversity(data, ambiguity_model):
    params, vocab, _ = ambiguity_model
    seqs = data[1][:200]
    truths, obs = observations(seqs, vocab, default_ambiguity_preset(), 11)
    oracle_runs, model_runs = [], []
    model = ContextDenoiser(params, vocab)
    for truth, o in zip(truths, obs):
        outs = decode_n(o, oracle_denoiser(truth, vocab), 10, CANVAS, seeds=range(10), policy=RANDOM)
        oracle_runs.append([decode_canvas(c, vocab).symbols for c in outs])
        outs = decode_n(o, model, 10, CANVAS, seeds=range(10), policy=RANDOM)
        model_runs.append([decode_canvas(c, vocab).symbols for c in outs])
    h_oracle = diversity_histogram(oracle_runs, 10)
    h_model = diversity_histogram(model_runs, 10)
    ok = h_oracle == {1: len(seqs)} and sum(h_model.values()) == len(seqs)
    assert record(11, "diversity protocol", ok, f"oracle {h_oracle}, trained random-policy {h_model}")


def test_c12_reproducibility(tmp_path):
    seqs = [sat_tokenize(a) for a in generate(GrammarConfig(seed=12, max_symbols=16), 80)]
    save_sat_corpus(tmp_path / "truth.sat", seqs)
    steps = [
        ["corrupt", tmp_path / "truth.sat", tmp_path / "obs.sat", "--channel", "ambiguity", "--seed", "5"],
        ["train", tmp_path / "truth.sat", tmp_path / "m.npz", "--epochs", "2", "--d", "8", "--canvas-len", "16",
         "--steps", "5", "--rmml", "--seed", "5"],
        ["decode", tmp_path / "m.npz", tmp_path / "obs.sat", tmp_path / "hyp.tex", "--steps", "5",
         "--policy", "random", "--seed", "5", "--trace", tmp_path / "trace.txt"],
    ]
    outputs = [tmp_path / n for n in ("obs.sat", "m.npz", "m.npz.log.jsonl", "hyp.tex", "trace.txt")]
    codes = [cli_main([str(a) for a in s]) for s in steps]
    first = {p.name: p.read_bytes() for p in outputs}
    for p in outputs:
        p.unlink()
    manifests = [tmp_path / m for m in ("obs.sat.manifest.json", "m.npz.manifest.json", "hyp.tex.manifest.json")]
    codes += [cli_main(["replay", str(m)]) for m in manifests]
    second = {p.name: p.read_bytes() for p in outputs}
    same = [n for n in first if first[n] == second[n]]
    recorded = all(json.loads(m.read_text())["seeds"] for m in manifests)
    ok = all(c == 0 for c in codes) and len(same) == len(outputs) and recorded
    assert record(12, "reproducibility", ok, f"{len(same)}/{len(outputs)} artifacts bitwise identical after replay")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
