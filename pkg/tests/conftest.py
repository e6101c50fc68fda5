import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from bellmem.model import LhvModel

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


_prob = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@st.composite
def lhv_models(draw, max_k=5, deterministic=False):
    k = draw(st.integers(1, max_k))
    raw = draw(st.lists(st.floats(min_value=1e-3, max_value=1.0), min_size=k, max_size=k))
    w = np.array(raw) / sum(raw)
    cell = st.sampled_from([0.0, 1.0]) if deterministic else _prob
    ra = draw(st.lists(st.tuples(cell, cell), min_size=k, max_size=k))
    rb = draw(st.lists(st.tuples(cell, cell), min_size=k, max_size=k))
    return LhvModel(weights=w, resp_a=ra, resp_b=rb)
