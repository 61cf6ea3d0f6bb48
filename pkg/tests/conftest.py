import string

import pytest
import torch
from hypothesis import settings

from edcec.text import SPECIAL_TOKENS, Vocab, build_vocab

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def letter_vocab() -> Vocab:
    """Every lowercase letter in both forms plus a few merged pieces."""
    chars = list(string.ascii_lowercase)
    extra = ["th", "##he", "##ing", "the", "cat", "ab"]
    return Vocab(tuple(SPECIAL_TOKENS) + tuple(chars) + tuple("##" + c for c in chars) + tuple(extra))


@pytest.fixture(scope="session")
def small_vocab() -> Vocab:
    corpus = [s.split() for s in [
        "the cat sat on the mat", "a dog ran to the park", "mister quixotic visited halcyon town",
        "the cormorant and the zephyrs", "she said hello to the captain",
    ]]
    return build_vocab(corpus, max_size=120)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
