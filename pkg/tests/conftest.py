import random

import pytest

from starcast import abe
from starcast.groups import generate_context
from starcast.policy import compile_policy

TEAM_POLICY = '"Alpha" AND ("Leader" OR ("Blue" AND "Member"))'
S1 = {"Alpha", "Blue", "Leader"}
S4 = {"Beta", "Blue", "Member"}


def det_rng(seed=0):
    """Deterministic test RNG; only ``getrandbits`` is used by the library."""
    return random.Random(seed)


@pytest.fixture(scope="session")
def ctx():
    return generate_context("128-bit")


@pytest.fixture(scope="session")
def keys(ctx):
    return abe.setup(ctx, det_rng(1))


@pytest.fixture(scope="session")
def pk(keys):
    return keys[0]


@pytest.fixture(scope="session")
def mk(keys):
    return keys[1]


@pytest.fixture(scope="session")
def team_msp():
    return compile_policy(TEAM_POLICY)


@pytest.fixture(scope="session")
def sk_s1(mk):
    return abe.keygen(mk, S1, det_rng(2))


@pytest.fixture(scope="session")
def sk_s4(mk):
    return abe.keygen(mk, S4, det_rng(3))


# Acceptance results, echoed at the end of the run as one line per criterion.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
