import numpy as np
import pytest

from sewgpt.codec import QuantConfig, fit_stats
from sewgpt.synth import KINDS, TemplateSpec, synth_pattern


@pytest.fixture(scope="session")
def skirts():
    return [synth_pattern(TemplateSpec("skirt_2panel"), s)[0] for s in range(20)]


@pytest.fixture(scope="session")
def corpus():
    """A few patterns of every template."""
    return [synth_pattern(TemplateSpec(k), s)[0] for k in KINDS for s in range(15)]


@pytest.fixture(scope="session")
def corpus_stats(corpus):
    return fit_stats(corpus)


@pytest.fixture(scope="session")
def qcfg():
    return QuantConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed once at the end of the session
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
