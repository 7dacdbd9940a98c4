import json
from datetime import date

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def post_line(pid, ts, text="x", retweets=0, likes=0, **extra):
    return json.dumps(dict(id=pid, created_at=ts, text=text, retweets=retweets,
                           likes=likes, **extra))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def start():
    return date(2018, 1, 1)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
