import numpy as np
import pytest

from satdiff.corpus import GrammarConfig, generate
from satdiff.sat import build_vocabulary, sat_tokenize


@pytest.fixture(scope="session")
def small_corpus():
    asts = generate(GrammarConfig(seed=7, max_symbols=20), 200)
    return asts, [sat_tokenize(a) for a in asts]


@pytest.fixture(scope="session")
def small_vocab(small_corpus):
    from satdiff.channel import default_ambiguity_preset

    return build_vocabulary(small_corpus[1], extra_symbols=default_ambiguity_preset().symbols())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
