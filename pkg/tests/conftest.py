import json
from pathlib import Path

import pytest

from seqwm import ActionVocabulary, PolicySpec, SecretKey
from seqwm.policy import make_rng

VECTORS = Path(__file__).parent / "vectors"


def load_vectors(name):
    return json.loads((VECTORS / name).read_text())


@pytest.fixture
def rng():
    return make_rng(20240611)


@pytest.fixture
def key():
    return SecretKey(bytes(range(32)))


@pytest.fixture
def uniform10():
    return PolicySpec("uniform", ActionVocabulary.numbered(10))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
