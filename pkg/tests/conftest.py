import numpy as np
import pytest

from activediag.circuit import small_circuit
from activediag.faults import compile_model
from activediag.generate import random_fault_model, random_models
from activediag.model import DiagnosisModel


def two_state_model(extra_actions: int = 0) -> DiagnosisModel:
    """Uniform healthy instance: ``v0`` separates ``a`` from ``b``; any extra
    actions report the same outcome for both states."""
    table = np.zeros((1 + extra_actions, 2, 1), dtype=int)
    table[0, 1, 0] = 1
    return DiagnosisModel(
        ["a", "b"], ["H"], [f"v{i}" for i in range(1 + extra_actions)], ["0", "1"], [[0.5], [0.5]], table
    )


@pytest.fixture
def two_state():
    return two_state_model()


@pytest.fixture(scope="session")
def generated():
    return random_models(11, 50)


@pytest.fixture(scope="session")
def circuit():
    return small_circuit()


@pytest.fixture(scope="session")
def circuit_model(circuit):
    return compile_model(circuit, circuit.fault_spec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sized_model(seed, nx=5, nq=3, nv=4):
    """A generated model with exactly the requested sizes."""
    rng = np.random.default_rng(seed)
    while True:
        m = random_fault_model(rng, max_states=nx, max_actions=nv, n_modes=nq)
        if m.shape[0] == nx and m.shape[2] == nv:
            return m


# PASS/FAIL lines from the acceptance module, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
