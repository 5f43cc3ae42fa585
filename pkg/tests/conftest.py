import numpy as np
import pytest

from augforge.audio import AudioBuffer
from augforge.minicorpus import make_mini_corpus


def tone(freq, secs=1.0, rate=16000, amp=0.5, phase=0.0):
    t = np.arange(int(round(secs * rate))) / rate
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), rate)


def random_speech(rng, n=16000, rate=16000):
    """Broadband, non-silent stand-in for speech."""
    x = rng.standard_normal(n) * np.abs(np.sin(np.linspace(0, 6 * np.pi, n))) + 0.01
    return AudioBuffer(0.1 * x / np.max(np.abs(x)), rate)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    return make_mini_corpus(tmp_path_factory.mktemp("mini"), seed=0)


# Acceptance criteria register their outcome here; printed after the run.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
