import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dtft(taps, freqs, rate):
    """Direct DTFT evaluation, independent of scipy."""
    n = np.arange(len(taps))
    return np.exp(-2j * np.pi * np.outer(np.asarray(freqs) / rate, n)) @ np.asarray(taps)


_VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record one acceptance line: verdict(number, passed, detail)."""
    def record(number: int, passed: bool, detail: str):
        _VERDICTS[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_VERDICTS[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[k])
