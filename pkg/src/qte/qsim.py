"""Exact statevector simulation.

Bit ordering is little-endian everywhere: qubit 0 is the least-significant bit
of the basis index, so ``|q2 q1 q0>`` has index ``4*q2 + 2*q1 + q0``.

Every routine accepts a batch of states with shape ``(batch, 2**n)``. Gate
angles may be scalars (same gate for the whole batch) or arrays of shape
``(batch,)`` (one angle per sample, as used by data-embedding circuits).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import ConfigError, UsageError

MAX_QUBITS = 20
DENSE_ORACLE_MAX_QUBITS = 5


class GateKind(str, Enum):
    U3 = "U3"
    RY = "RY"
    RZ = "RZ"
    H = "H"
    X = "X"
    CZ = "CZ"
    CX = "CX"
    ISING_XX = "IsingXX"
    ISING_ZZ = "IsingZZ"

    @property
    def num_qubits(self) -> int:
        return 2 if self in _TWO_QUBIT else 1

    @property
    def num_params(self) -> int:
        return _NUM_PARAMS[self]


_TWO_QUBIT = {GateKind.CZ, GateKind.CX, GateKind.ISING_XX, GateKind.ISING_ZZ}
DIAGONAL = {GateKind.RZ, GateKind.CZ, GateKind.ISING_ZZ}
_NUM_PARAMS = {
    GateKind.U3: 3, GateKind.RY: 1, GateKind.RZ: 1, GateKind.H: 0, GateKind.X: 0,
    GateKind.CZ: 0, GateKind.CX: 0, GateKind.ISING_XX: 1, GateKind.ISING_ZZ: 1,
}


@dataclass(frozen=True)
class Gate:
    """One gate application. For two-qubit gates ``targets[0]`` is the control
    (CX) and the more significant index of the gate's 4x4 matrix."""

    kind: GateKind
    targets: tuple[int, ...]
    params: tuple = ()

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.targets) != kind.num_qubits:
            raise UsageError(f"{kind.value} acts on {kind.num_qubits} qubit(s), got targets {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise UsageError(f"{kind.value} needs distinct targets, got {self.targets}")
        if any(t < 0 for t in self.targets):
            raise UsageError(f"negative qubit index in {self.targets}")
        if len(self.params) != kind.num_params:
            raise UsageError(f"{kind.value} takes {kind.num_params} parameter(s), got {len(self.params)}")

    def matrix(self) -> np.ndarray:
        """Unitary of shape ``(d, d)``, or ``(batch, d, d)`` for per-sample angles."""
        return gate_matrix(self.kind, self.params)


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def add(self, kind, targets, *params) -> "Circuit":
        gate = Gate(GateKind(kind), tuple(targets), params)
        if max(gate.targets) >= self.num_qubits:
            raise UsageError(f"target {max(gate.targets)} outside a {self.num_qubits}-qubit circuit")
        self.gates.append(gate)
        return self

    def extend(self, other: "Circuit", offset: int = 0) -> "Circuit":
        """Append ``other``'s gates, shifting its qubit indices by ``offset``."""
        for g in other.gates:
            self.add(g.kind, [t + offset for t in g.targets], *g.params)
        return self

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def run(self, state: "StateVector | None" = None) -> "StateVector":
        state = new_zero_state(self.num_qubits) if state is None else state
        return run_gates(state, self.gates)


@dataclass(frozen=True)
class StateVector:
    """Amplitudes of an n-qubit register; ``amplitudes`` is ``(2**n,)`` or ``(batch, 2**n)``."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape[-1] != 2 ** self.num_qubits:
            raise UsageError(f"expected {2 ** self.num_qubits} amplitudes, got {amps.shape[-1]}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def batched(self) -> bool:
        return self.amplitudes.ndim == 2

    def norm(self):
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1)


# --- gate matrices -----------------------------------------------------------

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)
_CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_XX = np.kron(_X, _X)


def _u3(theta, phi, lam):
    theta, phi, lam = np.broadcast_arrays(*(np.asarray(p, dtype=float) for p in (theta, phi, lam)))
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    m = np.empty(theta.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = c
    m[..., 0, 1] = -np.exp(1j * lam) * s
    m[..., 1, 0] = np.exp(1j * phi) * s
    m[..., 1, 1] = np.exp(1j * (phi + lam)) * c
    return m


def _diag(phases):
    """Stack of diagonal matrices from phases of shape (..., d)."""
    d = phases.shape[-1]
    m = np.zeros(phases.shape[:-1] + (d, d), dtype=complex)
    idx = np.arange(d)
    m[..., idx, idx] = phases
    return m


def gate_matrix(kind: GateKind, params=()) -> np.ndarray:
    kind = GateKind(kind)
    if kind is GateKind.U3:
        return _u3(*params)
    if kind is GateKind.RY:
        return _u3(params[0], 0.0, 0.0)
    if kind is GateKind.RZ:
        t = np.asarray(params[0], dtype=float)[..., None]
        return _diag(np.exp(1j * t * np.array([-0.5, 0.5])))
    if kind is GateKind.ISING_ZZ:
        t = np.asarray(params[0], dtype=float)[..., None]
        return _diag(np.exp(1j * t * np.array([-0.5, 0.5, 0.5, -0.5])))
    if kind is GateKind.ISING_XX:
        t = np.asarray(params[0], dtype=float)[..., None, None]
        return np.cos(t / 2) * np.eye(4) - 1j * np.sin(t / 2) * _XX
    return {GateKind.H: _H, GateKind.X: _X, GateKind.CZ: _CZ, GateKind.CX: _CX}[kind]


# --- state operations --------------------------------------------------------

def new_zero_state(n: int, batch: int | None = None) -> StateVector:
    if not 1 <= n <= MAX_QUBITS:
        raise ConfigError(f"qubit count must be in 1..{MAX_QUBITS}, got {n}")
    shape = (2 ** n,) if batch is None else (batch, 2 ** n)
    amps = np.zeros(shape, dtype=complex)
    amps[..., 0] = 1.0
    return StateVector(n, amps)


@lru_cache(maxsize=None)
def _bit_table(n: int) -> np.ndarray:
    """(2**n, n) table; column q is bit q of each basis index."""
    idx = np.arange(2 ** n)
    table = (idx[:, None] >> np.arange(n)) & 1
    table.setflags(write=False)
    return table


def _apply_diag(amps, m, targets, n):
    diag = np.diagonal(m, axis1=-2, axis2=-1)
    bits = _bit_table(n)
    local = bits[:, targets[0]] if len(targets) == 1 else 2 * bits[:, targets[0]] + bits[:, targets[1]]
    return amps * diag[..., local]


def _apply_1q(amps, m, q, n):
    b = amps.shape[0]
    s = amps.reshape(b, 2 ** (n - 1 - q), 2, 2 ** q)
    if m.ndim == 3:
        return np.matmul(m[:, None], s).reshape(b, -1)
    if q <= 1:
        # low qubits: one BLAS product with m (x) I beats many tiny 2x2 products
        block = 2 ** (q + 1)
        return (amps.reshape(-1, block) @ np.kron(m, np.eye(2 ** q)).T).reshape(b, -1)
    return np.matmul(m, s).reshape(b, -1)


def _apply_2q(amps, m, t0, t1, n):
    b = amps.shape[0]
    hi, lo = max(t0, t1), min(t0, t1)
    s = amps.reshape(b, 2 ** (n - 1 - hi), 2, 2 ** (hi - lo - 1), 2, 2 ** lo)
    s = s.transpose(0, 1, 3, 2, 4, 5).reshape(b, 2 ** (n - 1 - hi), 2 ** (hi - lo - 1), 4, 2 ** lo)
    if t0 < t1:
        # matrix index is 2*bit(t0) + bit(t1); the state axis order is (hi, lo)
        perm = [0, 2, 1, 3]
        m = m[..., perm, :][..., :, perm]
    if m.ndim == 3:
        m = m[:, None, None]
    out = np.matmul(m, s).reshape(b, 2 ** (n - 1 - hi), 2 ** (hi - lo - 1), 2, 2, 2 ** lo)
    return out.transpose(0, 1, 3, 2, 4, 5).reshape(b, -1)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    n = state.num_qubits
    if max(gate.targets) >= n:
        raise UsageError(f"gate {gate.kind.value} targets {gate.targets} on a {n}-qubit state")
    amps = state.amplitudes if state.batched else state.amplitudes[None, :]
    m = gate.matrix()
    if m.ndim == 3 and m.shape[0] != amps.shape[0]:
        if amps.shape[0] != 1:
            raise UsageError(f"{m.shape[0]} per-sample angles for a batch of {amps.shape[0]}")
        amps = np.broadcast_to(amps, (m.shape[0], amps.shape[1]))
    if gate.kind in DIAGONAL:
        out = _apply_diag(amps, m, gate.targets, n)
    elif gate.kind.num_qubits == 1:
        out = _apply_1q(amps, m, gate.targets[0], n)
    else:
        out = _apply_2q(amps, m, gate.targets[0], gate.targets[1], n)
    if not state.batched and out.shape[0] == 1:
        out = out[0]
    return StateVector(n, out)


def _full_diagonal(gate: Gate, n: int) -> np.ndarray:
    """Diagonal of a diagonal gate over the whole register: (2**n,) or (batch, 2**n)."""
    diag = np.diagonal(gate.matrix(), axis1=-2, axis2=-1)
    bits = _bit_table(n)
    t = gate.targets
    local = bits[:, t[0]] if len(t) == 1 else 2 * bits[:, t[0]] + bits[:, t[1]]
    return diag[..., local]


def run_gates(state: StateVector, gates) -> StateVector:
    """Apply ``gates`` in order, multiplying each run of consecutive diagonal gates
    into one phase vector before touching the amplitudes."""
    n = state.num_qubits
    pending = None
    for gate in gates:
        if max(gate.targets) >= n:
            raise UsageError(f"gate {gate.kind.value} targets {gate.targets} on a {n}-qubit state")
        if gate.kind in DIAGONAL:
            d = _full_diagonal(gate, n)
            pending = d if pending is None else pending * d
            continue
        if pending is not None:
            state = _apply_phases(state, pending)
            pending = None
        state = apply_gate(state, gate)
    if pending is not None:
        state = _apply_phases(state, pending)
    return state


def _apply_phases(state: StateVector, phases: np.ndarray) -> StateVector:
    amps = state.amplitudes
    if phases.ndim == 2 and amps.ndim == 2 and phases.shape[0] != amps.shape[0] and amps.shape[0] != 1:
        raise UsageError(f"{phases.shape[0]} per-sample angles for a batch of {amps.shape[0]}")
    out = amps * phases
    return StateVector(state.num_qubits, out)


def run_circuit(circuit: Circuit, batch: int | None = None) -> StateVector:
    return circuit.run(new_zero_state(circuit.num_qubits, batch))


def probabilities(state: StateVector) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def marginal_probability(state: StateVector, qubit: int, outcome: int) -> np.ndarray | float:
    n = state.num_qubits
    if not 0 <= qubit < n:
        raise UsageError(f"qubit {qubit} outside a {n}-qubit state")
    if outcome not in (0, 1):
        raise UsageError(f"outcome must be 0 or 1, got {outcome}")
    probs = probabilities(state)
    mask = ((np.arange(2 ** n) >> qubit) & 1) == outcome
    return probs[..., mask].sum(axis=-1)


def odd_parity_probability(state: StateVector) -> np.ndarray | float:
    """Total probability of basis states whose bits have odd parity."""
    n = state.num_qubits
    odd = _bit_table(n).sum(axis=1) % 2 == 1
    return probabilities(state)[..., odd].sum(axis=-1)


def sample_counts(state: StateVector, shots: int, seed: int) -> dict[str, int]:
    """Histogram of ``shots`` measurements keyed by bitstring (qubit n-1 first)."""
    if state.batched:
        raise UsageError("sample_counts takes a single state")
    if shots < 1:
        raise UsageError(f"shots must be >= 1, got {shots}")
    p = probabilities(state)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, p / p.sum())
    n = state.num_qubits
    return {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c}


def sample_probability(p, shots: int, rng: np.random.Generator):
    """Shot-noise estimate of a binary-outcome probability."""
    return rng.binomial(shots, np.clip(p, 0.0, 1.0)) / shots


# --- dense reference -----------------------------------------------------------

def _embed_dense(op_by_qubit: dict[int, np.ndarray], n: int) -> np.ndarray:
    full = np.ones((1, 1), dtype=complex)
    for q in reversed(range(n)):  # most-significant factor first
        full = np.kron(full, op_by_qubit.get(q, np.eye(2)))
    return full


def dense_gate_matrix(gate: Gate, n: int) -> np.ndarray:
    """Full 2**n x 2**n unitary of a (non-batched) gate via Kronecker products."""
    if n > DENSE_ORACLE_MAX_QUBITS:
        raise UsageError(f"dense oracle refuses {n} > {DENSE_ORACLE_MAX_QUBITS} qubits")
    m = gate.matrix()
    if m.ndim != 2:
        raise UsageError("dense oracle needs scalar gate angles")
    if gate.kind.num_qubits == 1:
        return _embed_dense({gate.targets[0]: m}, n)
    t0, t1 = gate.targets
    full = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    coeff = m[2 * i + k, 2 * j + l]
                    if coeff == 0:
                        continue
                    a = np.zeros((2, 2), dtype=complex)
                    a[i, j] = 1
                    b = np.zeros((2, 2), dtype=complex)
                    b[k, l] = 1
                    full += coeff * _embed_dense({t0: a, t1: b}, n)
    return full


def dense_oracle_apply(state: StateVector, gate: Gate) -> StateVector:
    """Reference path for tests: multiply by the full Kronecker-built matrix."""
    n = state.num_qubits
    if n > DENSE_ORACLE_MAX_QUBITS:
        raise UsageError(f"dense oracle refuses {n} > {DENSE_ORACLE_MAX_QUBITS} qubits")
    if max(gate.targets) >= n:
        raise UsageError(f"gate targets {gate.targets} on a {n}-qubit state")
    full = dense_gate_matrix(gate, n)
    return StateVector(n, state.amplitudes @ full.T)
