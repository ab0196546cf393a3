"""Command-line front end: ``satdiff <subcommand> ...``.

Every artifact-producing run writes ``<output>.manifest.json`` next to its
output; ``satdiff replay <manifest>`` re-executes it.  Exit codes: 0 success,
1 input/parse error, 2 config error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelSampler, default_ambiguity_preset, identity_channel, load_channel
from .corpus import load_sat_corpus
from .diffusion import POLICIES, reverse_decode
from .errors import ChannelConfigError, CheckpointMismatch, SatDiffError
from .latex import lex, normalize, parse, render
from .metrics import MetricsReport, diversity_histogram, evaluate
from .models import (
    ContextDenoiser,
    TrainConfig,
    load_checkpoint,
    oracle_denoiser,
    save_checkpoint,
    train,
)
from .sat import (
    Canvas,
    build_vocabulary,
    decode_canvas,
    encode,
    format_canvas,
    format_sat,
    sat_detokenize,
    sat_tokenize,
)

log = logging.getLogger("satdiff")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_CANVAS_LEN = 64
DEFAULT_STEPS = 50
DEFAULT_RUNS = 10


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


def derive_rng(seed: int, stream: str, *counters: int) -> np.random.Generator:
    """Independent generator for (seed, stream name, counters...)."""
    return np.random.default_rng([seed, zlib.crc32(stream.encode()), *counters])


def _read_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _write_text(path, lines):
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _write_manifest(args, outputs, vocab_hash=None, seeds=None):
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "options": opts,
        "seeds": seeds if seeds is not None else {"seed": getattr(args, "seed", None)},
        "inputs": [v for k, v in opts.items() if k in ("input", "refs", "hyps", "observations", "checkpoint", "channel", "oracle_truth") and v],
        "outputs": [str(o) for o in outputs],
        "tool_version": __version__,
        "vocab_hash": vocab_hash,
    }
    path = Path(str(outputs[0]) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _report_errors(errors, lenient, what="line"):
    for lineno, msg in errors:
        print(f"{'warning' if lenient else 'error'}: {what} {lineno}: {msg}", file=sys.stderr)
    if errors and not lenient:
        raise InputError(f"{len(errors)} malformed {what}(s); use --lenient to skip them")


def _load_channel_arg(spec):
    if spec in (None, "identity"):
        return identity_channel()
    if spec == "ambiguity":
        return default_ambiguity_preset()
    if not Path(spec).is_file():
        raise ConfigError(f"channel file not found: {spec}")
    try:
        return load_channel(spec)
    except ChannelConfigError as exc:
        raise ConfigError(f"bad channel file {spec}: {exc}") from None


def _load_sat(path, lenient=False):
    if not Path(path).is_file():
        raise InputError(f"cannot read {path}")
    seqs, errors = load_sat_corpus(path)
    _report_errors([(e.lineno, e.error) for e in errors], lenient)
    return seqs


# --------------------------------------------------------------------------
# subcommands


def cmd_tokenize(args):
    out, errors = [], []
    for lineno, text in enumerate(_read_lines(args.input), 1):
        try:
            out.append(format_sat(sat_tokenize(parse(lex(text)))))
        except SatDiffError as exc:
            errors.append((lineno, exc))
    _report_errors(errors, args.lenient)
    _write_text(args.output, out)
    _write_manifest(args, [args.output])
    return EXIT_OK


def cmd_detokenize(args):
    from .sat import parse_sat

    out, errors = [], []
    for lineno, text in enumerate(_read_lines(args.input), 1):
        try:
            out.append(render(sat_detokenize(parse_sat(text))))
        except SatDiffError as exc:
            errors.append((lineno, exc))
    _report_errors(errors, args.lenient)
    _write_text(args.output, out)
    _write_manifest(args, [args.output])
    return EXIT_OK


def cmd_corrupt(args):
    channel = _load_channel_arg(args.channel)
    seqs = _load_sat(args.input)
    if not seqs:
        raise InputError("input corpus is empty")
    vocab = build_vocabulary(seqs, extra_symbols=channel.symbols())
    sampler = ChannelSampler(channel, vocab)
    out = []
    for i, seq in enumerate(seqs):
        truth = encode(seq, vocab, len(seq))
        syms, mods = sampler.sample(truth.symbols, truth.modifiers, derive_rng(args.seed, "corrupt", i))
        out.append(format_sat(decode_canvas(Canvas(syms, mods), vocab)))
    _write_text(args.output, out)
    _write_manifest(args, [args.output], vocab.hash)
    return EXIT_OK


def cmd_train(args):
    channel = _load_channel_arg(args.channel)
    seqs = _load_sat(args.input)
    if not seqs:
        raise InputError("training corpus is empty")
    valid = _load_sat(args.valid) if args.valid else None
    try:
        cfg = TrainConfig(
            learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, d=args.d,
            canvas_len=args.canvas_len, T=args.steps, rmml_enabled=args.rmml,
            lambda_kl=args.lambda_kl, seed=args.seed, window=args.window, hidden=args.hidden,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    too_long = [i + 1 for i, s in enumerate(seqs) if len(s) > cfg.canvas_len]
    if too_long:
        raise InputError(f"{len(too_long)} sequence(s) longer than --canvas-len {cfg.canvas_len}, first on line {too_long[0]}")
    params, vocab, tlog = train(seqs, channel, cfg, valid=valid)
    save_checkpoint(args.output, params, vocab, extra={"train_config": asdict(cfg)})
    log_path = Path(str(args.output) + ".log.jsonl")
    log_path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in tlog.epochs), encoding="utf-8")
    for r in tlog.epochs:
        parts = f"ce1={r['ce1']:.6f}" + (f" ce2={r['ce2']:.6f} kl={r['kl']:.6f}" if args.rmml else "")
        if r["valid_cer"] is not None:
            parts += f" valid_cer={r['valid_cer']:.6f}"
        print(f"epoch={r['epoch']} loss={r['loss']:.6f} {parts}")
    _write_manifest(args, [args.output, log_path], vocab.hash)
    return EXIT_OK


def _denoiser_source(args, observations):
    """Returns (vocab, canvas_len, factory(i) -> denoiser)."""
    if args.oracle_truth:
        truths = _load_sat(args.oracle_truth)
        if len(truths) != len(observations):
            raise InputError("oracle truth and observation corpora differ in length")
        vocab = build_vocabulary(truths + observations)
        canvas_len = args.canvas_len
        canv = [encode(t, vocab, canvas_len) for t in truths]
        return vocab, canvas_len, lambda i: oracle_denoiser(canv[i], vocab)
    if not args.checkpoint:
        raise ConfigError("need a checkpoint or --oracle-truth")
    try:
        params, vocab, meta = load_checkpoint(args.checkpoint)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
    den = ContextDenoiser(params, vocab)
    return vocab, params.canvas_len, lambda i: den


def _decode_one(obs_seq, vocab, canvas_len, denoiser, T, policy, rng, trace_lines=None):
    observation = encode(obs_seq, vocab, canvas_len)

    def trace(state, t):
        trace_lines.append(f"t={t} masked={state.n_masked} canvas={format_canvas(state.canvas, vocab)}")

    canvas = reverse_decode(observation, denoiser, T, canvas_len, policy, rng,
                            trace if trace_lines is not None else None)
    return decode_canvas(canvas, vocab)


def cmd_decode(args):
    observations = _load_sat(args.observations)
    vocab, canvas_len, factory = _denoiser_source(args, observations)
    trace_lines = [] if args.trace else None
    out, errors = [], []
    for i, obs in enumerate(observations):
        try:
            seq = _decode_one(obs, vocab, canvas_len, factory(i), args.steps, args.policy,
                              derive_rng(args.seed, "decode", i), trace_lines)
        except SatDiffError as exc:
            errors.append((i + 1, exc))
            continue
        out.append(render(sat_detokenize(seq, strict=False)))
    _report_errors(errors, args.lenient)
    _write_text(args.output, out)
    outputs = [args.output]
    if args.trace:
        _write_text(args.trace, trace_lines)
        outputs.append(args.trace)
    _write_manifest(args, outputs, vocab.hash)
    return EXIT_OK


def cmd_eval(args):
    refs = _read_lines(args.refs)
    hyps = _read_lines(args.hyps)
    if len(refs) != len(hyps):
        raise InputError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    report = evaluate(refs, hyps)
    _emit_report(report, args.json)
    return EXIT_OK


def _emit_report(report: MetricsReport, as_json):
    if as_json:
        print(report.to_json())
    else:
        print(report.key_value_lines())
        print()
        print(report.table())


def cmd_diversity(args):
    observations = _load_sat(args.observations)
    vocab, canvas_len, factory = _denoiser_source(args, observations)
    runs = []
    for i, obs in enumerate(observations):
        outs = []
        for r in range(args.runs):
            seq = _decode_one(obs, vocab, canvas_len, factory(i), args.steps, args.policy,
                              derive_rng(args.seed, "diversity", i, r))
            outs.append(seq.symbols)
        runs.append(outs)
    hist = diversity_histogram(runs, args.runs)
    full = {k: hist.get(k, 0) for k in range(1, args.runs + 1)}
    if sum(full.values()) != len(observations):
        raise AssertionError("diversity histogram does not cover every input")
    if args.json:
        print(json.dumps({"runs": args.runs, "n_inputs": len(observations),
                          **{f"distinct_{k}": v for k, v in full.items()}}))
    else:
        for k, v in full.items():
            print(f"distinct={k} count={v}")
    if args.output:
        Path(args.output).write_text(json.dumps(full, sort_keys=True) + "\n", encoding="utf-8")
        _write_manifest(args, [args.output], vocab.hash)
    return EXIT_OK


def cmd_replay(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from None
    return main(manifest["argv"])


# --------------------------------------------------------------------------


def _common(p, seed=True, canvas=False, steps=False, policy=None, lenient=False):
    if seed:
        p.add_argument("--seed", type=int, default=0)
    if canvas:
        p.add_argument("--canvas-len", type=int, default=DEFAULT_CANVAS_LEN)
    if steps:
        p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="diffusion horizon T")
    if policy:
        p.add_argument("--policy", choices=("lowconf", "random"), default=policy)
    if lenient:
        p.add_argument("--lenient", action="store_true", help="skip malformed lines with a warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satdiff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="LaTeX lines -> SAT lines")
    p.add_argument("input")
    p.add_argument("output")
    _common(p, seed=False, lenient=True)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", help="SAT lines -> canonical LaTeX lines")
    p.add_argument("input")
    p.add_argument("output")
    _common(p, seed=False, lenient=True)
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("corrupt", help="pass a SAT corpus through a confusion channel")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--channel", required=True, help="channel file, or 'identity' / 'ambiguity'")
    _common(p)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train a context denoiser")
    p.add_argument("input", help="SAT training corpus")
    p.add_argument("output", help="checkpoint path")
    p.add_argument("--channel", default="ambiguity")
    p.add_argument("--valid", help="SAT corpus for the per-epoch validation CER")
    p.add_argument("--rmml", action="store_true", help="add the two-view symmetric KL term")
    defaults = TrainConfig()
    p.add_argument("--lambda-kl", type=float, default=defaults.lambda_kl)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--d", type=int, default=defaults.d)
    p.add_argument("--window", type=int, default=defaults.window, help="local neighbourhood half-width")
    p.add_argument("--hidden", type=int, default=defaults.hidden, help="residual ReLU layer width")
    _common(p, canvas=True, steps=True)
    p.set_defaults(func=cmd_train)

    for name, func in (("decode", cmd_decode), ("diversity", cmd_diversity)):
        p = sub.add_parser(name, help="reverse diffusion decoding" if name == "decode"
                           else "distinct-output histogram over repeated decodes")
        p.add_argument("checkpoint", nargs="?")
        p.add_argument("observations", help="SAT observation corpus")
        p.add_argument("--oracle-truth", help="decode with the oracle denoiser on this SAT truth corpus")
        if name == "decode":
            p.add_argument("output")
            p.add_argument("--trace", help="write per-step trace lines here")
            _common(p, canvas=True, steps=True, policy="lowconf", lenient=True)
        else:
            p.add_argument("--runs", type=int, default=DEFAULT_RUNS)
            p.add_argument("--output", help="also write the histogram as JSON")
            p.add_argument("--json", action="store_true")
            _common(p, canvas=True, steps=True, policy="random")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="metrics for reference/hypothesis LaTeX line files")
    p.add_argument("refs")
    p.add_argument("hyps")
    p.add_argument("--json", action="store_true", help="one flat JSON record")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "steps", 1) is not None and getattr(args, "steps", 1) < 1:
        print("error: --steps must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, SatDiffError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
