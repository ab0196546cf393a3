"""Evaluation metrics: CER, exact match, ER<=k, syntax error rate, diversity."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field

from .errors import LatexError, SizeMismatch, UnevenRunCounts
from .latex import lex, normalize

ER_KS = (1, 2, 3, 4)

_FALLBACK_TOKEN = re.compile(r"\\[A-Za-z]+|\S")


def token_edit_distance(ref, hyp) -> int:
    """Levenshtein distance with unit costs over arbitrary token sequences."""
    ref, hyp = list(ref), list(hyp)
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def metric_tokens(text: str) -> list:
    """Token unit for CER/EM: lex tokens of the normalized string.

    Text that does not parse (possible for raw decoder output) falls back to
    a plain command-or-character split so it can still be scored.
    """
    try:
        return [t.text for t in lex(normalize(text))]
    except LatexError:
        return _FALLBACK_TOKEN.findall(text)


def _check_sizes(refs, hyps):
    if len(refs) != len(hyps):
        raise SizeMismatch(len(refs), len(hyps))


def corpus_cer(refs, hyps) -> float:
    """Pooled edit distance over pooled reference length (micro-average)."""
    _check_sizes(refs, hyps)
    errors = sum(token_edit_distance(r, h) for r, h in zip(refs, hyps))
    total = sum(len(r) for r in refs)
    if total == 0:
        return 0.0 if errors == 0 else float("inf")
    return errors / total


def er_le_k(refs, hyps, k: int) -> float:
    _check_sizes(refs, hyps)
    if not refs:
        return 0.0
    return sum(token_edit_distance(r, h) <= k for r, h in zip(refs, hyps)) / len(refs)


def exact_match_rate(refs, hyps) -> float:
    _check_sizes(refs, hyps)
    if not refs:
        return 0.0
    return sum(list(r) == list(h) for r, h in zip(refs, hyps)) / len(refs)


def syntax_error_rate(hyps) -> float:
    """Fraction of raw strings whose '{' and '}' counts differ."""
    hyps = list(hyps)
    if not hyps:
        return 0.0
    return sum(h.count("{") != h.count("}") for h in hyps) / len(hyps)


@dataclass
class MetricsReport:
    cer: float
    em: float
    er_le: dict
    ser: float
    n_samples: int
    diversity: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {"cer": self.cer, "em": self.em}
        for k in sorted(self.er_le):
            rec[f"er_le_{k}"] = self.er_le[k]
        rec["ser"] = self.ser
        rec["n_samples"] = self.n_samples
        for k in sorted(self.diversity):
            rec[f"diversity_{k}"] = self.diversity[k]
        return rec

    def to_json(self) -> str:
        return json.dumps(self.as_record(), sort_keys=False)

    def key_value_lines(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.as_record().items())

    def table(self) -> str:
        head = ["CER", "EM"] + [f"ER<={k}" for k in sorted(self.er_le)] + ["SER", "N"]
        vals = ([f"{100 * self.cer:.2f}", f"{100 * self.em:.2f}"]
                + [f"{100 * self.er_le[k]:.2f}" for k in sorted(self.er_le)]
                + [f"{100 * self.ser:.2f}", str(self.n_samples)])
        widths = [max(len(h), len(v)) for h, v in zip(head, vals)]
        fmt = "  ".join("{:>%d}" % w for w in widths)
        return fmt.format(*head) + "\n" + fmt.format(*vals)


def evaluate(ref_texts, hyp_texts) -> MetricsReport:
    """Full report for parallel LaTeX corpora (both sides normalized)."""
    ref_texts, hyp_texts = list(ref_texts), list(hyp_texts)
    _check_sizes(ref_texts, hyp_texts)
    refs = [metric_tokens(r) for r in ref_texts]
    hyps = [metric_tokens(h) for h in hyp_texts]
    return MetricsReport(
        cer=corpus_cer(refs, hyps),
        em=exact_match_rate(refs, hyps),
        er_le={k: er_le_k(refs, hyps, k) for k in ER_KS},
        ser=syntax_error_rate(hyp_texts),
        n_samples=len(refs),
    )


def distinct_count(outputs) -> int:
    return len({tuple(o) for o in outputs})


def diversity_histogram(decoded_runs, n: int | None = None) -> dict:
    """Map distinct-output count to number of inputs.

    ``decoded_runs`` holds, per input, the n outputs of independent decodes,
    each given as a symbol sequence.
    """
    decoded_runs = [list(r) for r in decoded_runs]
    counts = {len(r) for r in decoded_runs}
    if len(counts) > 1 or (n is not None and counts and counts != {n}):
        raise UnevenRunCounts(f"inputs have differing run counts {sorted(counts)}")
    hist = Counter(distinct_count(r) for r in decoded_runs)
    return dict(sorted(hist.items()))
