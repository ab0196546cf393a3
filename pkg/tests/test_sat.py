import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satdiff.corpus import GrammarConfig, generate
from satdiff.errors import (
    DepthExceeded,
    EmptyCorpus,
    IncoherentStructure,
    OutOfVocabulary,
    SatFormatError,
    SequenceTooLong,
)
from satdiff.latex import Frac, Row, Scripted, Sqrt, Symbol, lex, parse_text, render
from satdiff.sat import (
    MASK_ID,
    MASK_PATH_ID,
    PAD_ID,
    PAD_PATH_ID,
    Canvas,
    SatSequence,
    Tag,
    build_vocabulary,
    decode_canvas,
    encode,
    format_canvas,
    format_sat,
    length_ratio,
    parse_sat,
    sat_detokenize,
    sat_tokenize,
)

SUP, SUB, NUM, DEN, RAD = Tag.SUP, Tag.SUB, Tag.FRAC_NUM, Tag.FRAC_DEN, Tag.SQRT_ARG


def seeds(n=300, **kw):
    return generate(GrammarConfig(**kw), n)


class TestTokenize:
    def test_superscript(self):
        seq = sat_tokenize(parse_text("{x}^{2}"))
        assert list(seq) == [("x", ()), ("2", (SUP,))]

    def test_frac(self):
        seq = sat_tokenize(parse_text(r"\frac{a}{b}"))
        assert list(seq) == [("a", (NUM,)), ("b", (DEN,))]

    def test_nested_paths_root_to_leaf(self):
        seq = sat_tokenize(parse_text(r"\sqrt{x^{2}}"))
        assert list(seq) == [("x", (RAD,)), ("2", (RAD, SUP))]

    def test_sub_and_sup(self):
        seq = sat_tokenize(parse_text("x_i^2"))
        assert list(seq) == [("x", ()), ("2", (SUP,)), ("i", (SUB,))]

    def test_empty(self):
        assert len(sat_tokenize(parse_text(""))) == 0

    def test_depth_limit(self):
        text = "x^{x^{x^{x^{x^{2}}}}}"
        with pytest.raises(DepthExceeded) as exc:
            sat_tokenize(parse_text(text))
        assert exc.value.depth == 5
        assert len(sat_tokenize(parse_text("x^{x^{x^{x^{2}}}}"))) == 5

    def test_alignment_on_corpus(self):
        for ast in seeds(500, seed=5):
            seq = sat_tokenize(ast)
            assert len(seq.symbols) == len(seq.paths)


class TestDetokenize:
    def test_example(self):
        seq = SatSequence.from_pairs([("x", ()), ("2", ("SUP",))])
        assert render(sat_detokenize(seq)) == "{x}^{2}"

    def test_runs_group(self):
        seq = SatSequence.from_pairs([("a", ("FRAC_NUM",)), ("b", ("FRAC_NUM",)), ("c", ("FRAC_DEN",))])
        assert sat_detokenize(seq) == Frac(Row((Symbol("a"), Symbol("b"))), Symbol("c"))

    @pytest.mark.parametrize("pairs", [
        [("2", ("SUP",))],
        [("a", ("FRAC_NUM",))],
        [("a", ("FRAC_DEN",))],
        [("x", ()), ("2", ("SUP",)), ("y", ()), ("3", ("SUB",)), ("4", ("SUB",)), ("z", ()),
         ("5", ("SUP",)), ("w", ("SUB",)), ("q", ("SUP",))],
    ])
    def test_incoherent(self, pairs):
        seq = SatSequence.from_pairs(pairs)
        with pytest.raises(IncoherentStructure):
            sat_detokenize(seq)
        # the lenient mode always produces a tree
        render(sat_detokenize(seq, strict=False))

    def test_lenient_strips_role(self):
        seq = SatSequence.from_pairs([("2", ("SUP",)), ("x", ())])
        assert render(sat_detokenize(seq, strict=False)) == "2x"

    def test_round_trip_corpus(self):
        for ast in seeds(2000, seed=1, max_depth=4):
            back = sat_detokenize(sat_tokenize(ast))
            assert back == ast
            assert render(back) == render(ast)

    @settings(max_examples=200)
    @given(st.integers(0, 2**31 - 1))
    def test_round_trip_property(self, seed):
        for ast in generate(GrammarConfig(seed=seed, max_depth=4), 3):
            assert sat_detokenize(sat_tokenize(ast)) == ast

    @settings(max_examples=300)
    @given(st.lists(st.tuples(st.sampled_from("xy2"),
                              st.lists(st.sampled_from(list(Tag)), max_size=3)), max_size=8))
    def test_lenient_is_total(self, pairs):
        seq = SatSequence.from_pairs(pairs)
        tree = sat_detokenize(seq, strict=False)
        # whatever comes out is parseable canonical LaTeX with all symbols kept
        text = render(tree)
        assert render(parse_text(text)) == text
        assert sorted(sat_tokenize(tree).symbols) == sorted(seq.symbols)


class TestEditLocality:
    def test_single_flip_vs_raw(self):
        plain = sat_tokenize(parse_text("x2"))
        sup = sat_tokenize(parse_text("{x}^{2}"))
        changed = [i for i, (a, b) in enumerate(zip(plain, sup)) if a != b]
        assert len(plain) == len(sup) and changed == [1]

        raw_a = [t.text for t in lex("x2")]
        raw_b = [t.text for t in lex("{x}^{2}")]
        from satdiff.metrics import token_edit_distance

        assert token_edit_distance(raw_a, raw_b) >= 3

    def test_length_ratio_below_one(self):
        ratios = []
        for ast in seeds(1000, seed=2):
            text = render(ast)
            ratios.append(length_ratio(text, sat_tokenize(ast)))
        assert all(r <= 1.0 for r in ratios)
        assert sum(ratios) / len(ratios) < 0.8


class TestVocabularyAndCanvas:
    def test_reserved_ids(self, small_vocab):
        assert small_vocab.symbols[MASK_ID] == "<mask>"
        assert small_vocab.symbols[PAD_ID] == "<pad>"
        assert small_vocab.paths[PAD_PATH_ID] == "<pad>"
        assert small_vocab.paths[MASK_PATH_ID] == "<mask>"

    def test_deterministic(self, small_corpus):
        seqs = small_corpus[1]
        assert build_vocabulary(seqs).hash == build_vocabulary(list(reversed(seqs))).hash

    def test_json_round_trip(self, small_vocab):
        from satdiff.sat import Vocabulary

        again = Vocabulary.from_json(small_vocab.to_json())
        assert again == small_vocab and again.hash == small_vocab.hash

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_vocabulary([])

    def test_oov(self, small_vocab):
        with pytest.raises(OutOfVocabulary):
            small_vocab.symbol_id(r"\aleph")

    def test_encode_decode(self, small_corpus, small_vocab):
        for seq in small_corpus[1][:100]:
            c = encode(seq, small_vocab, 24)
            assert len(c) == 24
            assert (c.symbols[len(seq):] == PAD_ID).all()
            assert (c.modifiers[len(seq):] == PAD_PATH_ID).all()
            assert decode_canvas(c, small_vocab) == seq

    def test_too_long(self, small_vocab):
        seq = sat_tokenize(parse_text("x+2"))
        with pytest.raises(SequenceTooLong):
            encode(seq, small_vocab, 2)

    def test_decode_drops_inner_specials(self, small_vocab):
        x, two = small_vocab.symbol_id("x"), small_vocab.symbol_id("2")
        base = small_vocab.path_id(())
        c = Canvas([x, MASK_ID, two, PAD_ID, PAD_ID], [base, MASK_PATH_ID, MASK_PATH_ID, 0, 0])
        assert decode_canvas(c, small_vocab) == SatSequence(("x", "2"), ((), ()))

    def test_format_canvas(self, small_vocab):
        x = small_vocab.symbol_id("x")
        c = Canvas([x, MASK_ID], [small_vocab.path_id(()), MASK_PATH_ID])
        assert format_canvas(c, small_vocab) == "x/_ ☐"


class TestTextFormat:
    def test_format(self):
        seq = sat_tokenize(parse_text(r"\frac{x^{2}}{/}"))
        assert format_sat(seq) == "x/FRAC_NUM 2/FRAC_NUM.SUP //FRAC_DEN"

    def test_round_trip_corpus(self):
        for ast in seeds(500, seed=9):
            seq = sat_tokenize(ast)
            assert parse_sat(format_sat(seq)) == seq

    def test_empty_line(self):
        assert parse_sat("\n") == SatSequence()

    @pytest.mark.parametrize("bad", ["x", "x/UP", "/_", "x/SUP..SUB"])
    def test_errors(self, bad):
        with pytest.raises(SatFormatError):
            parse_sat(bad)
