import numpy as np
import pytest

from qte.qsim import Circuit, GateKind

ROTATIONS = (GateKind.RY, GateKind.RZ, GateKind.ISING_XX, GateKind.ISING_ZZ)


def random_circuit(rng, n, depth, kinds=tuple(GateKind)):
    """Random gates on ``n`` qubits; two-qubit kinds are skipped when n == 1."""
    circuit = Circuit(n)
    usable = [k for k in kinds if k.num_qubits <= n]
    for _ in range(depth):
        kind = usable[rng.integers(len(usable))]
        targets = rng.choice(n, size=kind.num_qubits, replace=False)
        circuit.add(kind, targets, *rng.uniform(-7, 7, kind.num_params))
    return circuit


def random_state(rng, n, batch=None):
    shape = (2 ** n,) if batch is None else (batch, 2 ** n)
    v = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Keep one pass/fail line per acceptance criterion for the terminal summary."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
