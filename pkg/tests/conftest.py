import numpy as np
import pytest
from hypothesis import settings

from qets.qsim import Circuit, CNot, RotY

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def bell() -> Circuit:
    return Circuit(2, (RotY(0, np.pi / 2), CNot(0, 1)))


def random_circuit(n_qubits: int, n_gates: int, rng: np.random.Generator) -> Circuit:
    gates = []
    for _ in range(n_gates):
        if n_qubits > 1 and rng.random() < 0.4:
            c, t = rng.choice(n_qubits, size=2, replace=False)
            gates.append(CNot(int(c), int(t)))
        else:
            gates.append(RotY(int(rng.integers(n_qubits)), float(rng.uniform(-np.pi, np.pi))))
    return Circuit(n_qubits, tuple(gates))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        name, ok, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {name}: {'PASS' if ok else 'FAIL'} | {detail}")
