"""
Symbol-aware tokenization
=========================

Parse a few LaTeX strings, split them into aligned symbol and modifier
lists, and put them back together.
"""

from satdiff.latex import lex, normalize, parse_text, render
from satdiff.metrics import token_edit_distance
from satdiff.sat import format_sat, length_ratio, sat_detokenize, sat_tokenize

# every visible symbol keeps one slot; structure lives in its modifier path
for text in ["x^2", r"\frac{a+b}{\sqrt{c}}", "x_i^{n+1}", r"\alpha \leq \frac{1}{2}"]:
    seq = sat_tokenize(parse_text(text))
    print(f"{text:28s} -> {format_sat(seq)}")

# the reverse direction rebuilds the canonical string
seq = sat_tokenize(parse_text("x_i^{n+1}"))
print("\nrebuilt:", render(sat_detokenize(seq)), " normalized input:", normalize("x_i^{n+1}"))

# turning x2 into x^2 is one modifier flip, but several raw-token edits
plain, sup = sat_tokenize(parse_text("x2")), sat_tokenize(parse_text("x^2"))
changed = sum(a != b for a, b in zip(plain, sup))
raw = token_edit_distance([t.text for t in lex("x2")], [t.text for t in lex("{x}^{2}")])
print(f"\nSAT tokens changed: {changed}, raw LaTeX tokens changed: {raw}")

# sequences shrink because braces and carets carry no slot of their own
text = r"\frac{x^{2}+1}{y_{0}}"
print(f"length ratio for {text}: {length_ratio(text, sat_tokenize(parse_text(text))):.2f}")
