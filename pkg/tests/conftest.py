import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from aloha_uncertainty.policy import AccessPolicy, NetworkConfig
from aloha_uncertainty.source import SourceParams

settings.register_profile("default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

probabilities = st.floats(0.0, 1.0, allow_nan=False)
rates = st.floats(0.001, 0.5, allow_nan=False)


@st.composite
def sources(draw, lo=0.001, hi=0.5):
    return SourceParams(draw(st.floats(lo, hi)), draw(st.floats(lo, hi)))


@st.composite
def policies(draw, lo=0.0):
    vec = draw(st.lists(st.floats(lo, 1.0), min_size=4, max_size=4))
    if not any(vec):
        vec[1] = 1.0
    return AccessPolicy.from_vector(vec)


@st.composite
def networks(draw, m_max=200, lo=0.001):
    return NetworkConfig(draw(st.integers(1, m_max)), draw(sources(lo)), draw(policies()))


@pytest.fixture
def fig3_network():
    return NetworkConfig(50, SourceParams(0.02, 0.02), AccessPolicy(0.0, 1.0, 1.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
