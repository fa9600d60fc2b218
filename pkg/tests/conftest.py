import numpy as np
import pytest
from hypothesis import settings

from oracles import FIG1_EDGES
from taxocomplete.tasks import decompose
from taxocomplete.taxonomy import load_taxonomy

settings.register_profile("repeatable", derandomize=True, print_blob=True)
settings.load_profile("repeatable")

# label ids follow first appearance in FIG1_EDGES
CS, NLP, DB, ML, VOCAB, LLMS, RL, UNSUP = range(8)


@pytest.fixture
def fig1():
    return load_taxonomy(FIG1_EDGES)


@pytest.fixture
def fig1_tasks(fig1):
    return decompose(fig1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
