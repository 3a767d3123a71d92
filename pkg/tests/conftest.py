import numpy as np
import pytest

from lead.denoiser import OracleDenoiser
from lead.harness import reference_toy_denoiser
from lead.schedule import build_schedule
from lead.synthetic import SyntheticMixtureTask, make_context


@pytest.fixture(scope="session")
def sched():
    return build_schedule()


@pytest.fixture(scope="session")
def task():
    return SyntheticMixtureTask()


@pytest.fixture(scope="session")
def ctx(task):
    return make_context(m=task.m)


@pytest.fixture(scope="session")
def oracle(task, sched):
    return OracleDenoiser(task, sched)


@pytest.fixture(scope="session")
def toy():
    return reference_toy_denoiser()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
