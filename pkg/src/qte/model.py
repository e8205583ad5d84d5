"""Classifier circuits: the RyRz variational classifier and the two-layer Ising QNN."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encode
from .encode import EmbeddingTable, EncodingScheme, SchemeKind
from .errors import UsageError
from .qsim import Circuit, GateKind, StateVector, marginal_probability, odd_parity_probability, run_gates

ENTANGLEMENTS = ("full", "linear")


@dataclass(frozen=True)
class RyRzAnsatz:
    num_qubits: int
    depth: int = 3
    entanglement: str = "full"

    def __post_init__(self):
        if self.entanglement not in ENTANGLEMENTS:
            raise UsageError(f"entanglement must be one of {ENTANGLEMENTS}, got {self.entanglement!r}")
        if self.depth < 0 or self.num_qubits < 1:
            raise UsageError("need depth >= 0 and at least one qubit")

    @property
    def num_params(self) -> int:
        return (self.depth + 1) * 2 * self.num_qubits

    def entangling_pairs(self) -> list[tuple[int, int]]:
        n = self.num_qubits
        if self.entanglement == "linear":
            return [(i, i + 1) for i in range(n - 1)]
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def circuit(self, params) -> Circuit:
        return build_ryrz(self.num_qubits, self.depth, self.entanglement, params)


def build_ryrz(num_qubits: int, depth: int, entanglement: str, params) -> Circuit:
    """``depth`` blocks of [RY layer, RZ layer, CZ layer] and a closing RY+RZ layer."""
    ansatz = RyRzAnsatz(num_qubits, depth, entanglement)
    params = np.asarray(params, dtype=float)
    if params.shape != (ansatz.num_params,):
        raise UsageError(f"RyRz({num_qubits} qubits, depth {depth}) takes {ansatz.num_params} params, got {params.shape}")
    n = num_qubits
    circuit = Circuit(n)
    for block in range(depth + 1):
        angles = params[2 * n * block: 2 * n * (block + 1)]
        for q in range(n):
            circuit.add(GateKind.RY, [q], angles[q])
        for q in range(n):
            circuit.add(GateKind.RZ, [q], angles[n + q])
        if block < depth:
            for i, j in ansatz.entangling_pairs():
                circuit.add(GateKind.CZ, [i, j])
    return circuit


def _run(state: StateVector, circuit: Circuit) -> StateVector:
    if circuit.num_qubits != state.num_qubits:
        raise UsageError(f"circuit on {circuit.num_qubits} qubits applied to a {state.num_qubits}-qubit state")
    return run_gates(state, circuit.gates)


def vqc_predict(embedding, ansatz: RyRzAnsatz, params) -> float | np.ndarray:
    """P(class 1) = probability of an odd-parity measurement outcome.

    ``embedding`` is an embedding Circuit or an already-prepared (batched) StateVector.
    """
    if isinstance(embedding, Circuit):
        if embedding.num_qubits != ansatz.num_qubits:
            raise UsageError(f"embedding has {embedding.num_qubits} qubits, ansatz {ansatz.num_qubits}")
        embedding = embedding.run()
    if embedding.num_qubits != ansatz.num_qubits:
        raise UsageError(f"embedding has {embedding.num_qubits} qubits, ansatz {ansatz.num_qubits}")
    return odd_parity_probability(_run(embedding, ansatz.circuit(params)))


def label_from_probability(p) -> np.ndarray:
    """Label 1 iff P(1) > 0.5; a tie goes to label 0."""
    return (np.asarray(p) > 0.5).astype(int)


# --- QNN ------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class QnnReadout:
    num_inputs: int

    @property
    def num_params(self) -> int:
        return 2 * self.num_inputs

    @property
    def readout_qubit(self) -> int:
        return self.num_inputs

    def circuit(self, params) -> Circuit:
        return build_qnn_readout(self.num_inputs, params)


def build_qnn_readout(k: int, params) -> Circuit:
    """IsingXX(params[i]) on (input i, readout), then IsingZZ(params[k+i]) on the same pairs."""
    params = np.asarray(params, dtype=float)
    if params.shape != (2 * k,):
        raise UsageError(f"QNN readout over {k} inputs takes {2 * k} params, got {params.shape}")
    circuit = Circuit(k + 1)
    for i in range(k):
        circuit.add(GateKind.ISING_XX, [i, k], params[i])
    for i in range(k):
        circuit.add(GateKind.ISING_ZZ, [i, k], params[k + i])
    return circuit


def qnn_predict(inputs, params, scheme: EncodingScheme | None = None,
                table: EmbeddingTable | None = None) -> float | np.ndarray:
    """P(readout = 1) for bits (with a scheme), an input-register circuit, or a prepared state."""
    params = np.asarray(params, dtype=float)
    k = len(params) // 2
    if isinstance(inputs, StateVector):
        state = inputs
    elif isinstance(inputs, Circuit):
        if inputs.num_qubits != k:
            raise UsageError(f"input register has {inputs.num_qubits} qubits, readout expects {k}")
        state = Circuit(k + 1).extend(inputs).run()
    else:
        if scheme is None:
            raise UsageError("bit inputs need an encoding scheme")
        state = QnnModel(scheme).input_state(inputs, table)
    if state.num_qubits != k + 1:
        raise UsageError(f"state has {state.num_qubits} qubits, readout over {k} inputs needs {k + 1}")
    return marginal_probability(_run(state, build_qnn_readout(k, params)), k, 1)


@dataclass(frozen=True)
class QnnModel:
    """Input register prepared by ``scheme`` plus one readout qubit in |0>."""

    scheme: EncodingScheme

    @property
    def num_inputs(self) -> int:
        return self.scheme.num_qubits

    @property
    def num_qubits(self) -> int:
        return self.num_inputs + 1

    @property
    def readout(self) -> QnnReadout:
        return QnnReadout(self.num_inputs)

    def angles(self, bits, table=None) -> np.ndarray:
        return np.atleast_3d(encode.embedding_angles(bits, self.scheme, table))

    def state_from_angles(self, angles) -> StateVector:
        return encode.product_state(encode.qubit_states_from_angles(angles), self.num_qubits)

    def input_state(self, bits, table=None) -> StateVector:
        if self.scheme.kind is SchemeKind.NAIVE:
            qs = encode.qubit_states_from_bits(bits, self.scheme)
            return encode.product_state(qs, self.num_qubits)
        return self.state_from_angles(self.angles(bits, table))

    def predict_from_state(self, state: StateVector, params) -> np.ndarray:
        return marginal_probability(_run(state, build_qnn_readout(self.num_inputs, params)), self.num_inputs, 1)

    def predict(self, bits, params, table=None) -> np.ndarray:
        return self.predict_from_state(self.input_state(bits, table), params)


# --- VQC over mixed discrete/continuous inputs -------------------------------------------------------

@dataclass(frozen=True)
class VqcModel:
    """Discrete bits on the first qubits (``scheme``), then ``zz_features`` continuous
    features through the ZZ map on the following qubits, then the RyRz ansatz."""

    scheme: EncodingScheme | None
    ansatz: RyRzAnsatz
    zz_features: int = 0
    zz_depth: int = 2

    def __post_init__(self):
        discrete = 0 if self.scheme is None else self.scheme.num_qubits
        if discrete + self.zz_features != self.ansatz.num_qubits:
            raise UsageError(f"embedding uses {discrete + self.zz_features} qubits, ansatz {self.ansatz.num_qubits}")

    @property
    def num_qubits(self) -> int:
        return self.ansatz.num_qubits

    @property
    def discrete_qubits(self) -> int:
        return 0 if self.scheme is None else self.scheme.num_qubits

    def zz_state(self, reals) -> StateVector:
        """The ZZ-map register alone (``zz_features`` qubits), batched over samples."""
        reals = np.atleast_2d(np.asarray(reals, dtype=float))
        if reals.shape[-1] != self.zz_features:
            raise UsageError(f"expected {self.zz_features} continuous features, got {reals.shape[-1]}")
        start = encode.product_state(np.zeros((len(reals), 0, 2), dtype=complex), self.zz_features)
        return _run(start, encode.zz_feature_map(reals, self.zz_depth))

    def embed(self, bits=None, reals=None, table=None, zz: StateVector | None = None) -> StateVector:
        """Full input state; ``zz`` may carry a precomputed :meth:`zz_state` of ``reals``."""
        n_batch = len(bits) if bits is not None else len(reals)
        if self.scheme is None:
            qs = np.zeros((n_batch, 0, 2), dtype=complex)
        elif self.scheme.kind is SchemeKind.NAIVE:
            qs = encode.qubit_states_from_bits(bits, self.scheme)
        else:
            qs = encode.qubit_states_from_angles(np.atleast_3d(encode.embedding_angles(bits, self.scheme, table)))
        discrete = encode.product_state(qs)
        if not self.zz_features:
            return discrete
        zz = self.zz_state(reals) if zz is None else zz
        # the ZZ qubits sit above the discrete ones, so they index the high bits
        amps = (zz.amplitudes[:, :, None] * discrete.amplitudes[:, None, :]).reshape(n_batch, -1)
        return StateVector(self.num_qubits, amps)

    def predict_from_state(self, state: StateVector, ansatz_params) -> np.ndarray:
        return vqc_predict(state, self.ansatz, ansatz_params)
