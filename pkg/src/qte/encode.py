"""Discrete-feature encoders: fixed QRACs, trainable embedding tables,
convolutional chunking, the ZZ feature map, and the spread regularizer.

A bitstring of length S is cut into chunks; chunk ``i`` is written onto qubit
``i`` as the single-qubit state ``u3(theta, phi, 0)|0>``. Within a chunk the
first bit is the most significant bit of the chunk's integer code, so the code
of ``"110"`` is 6.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import UsageError
from .qsim import Circuit, GateKind, StateVector


class SchemeKind(str, Enum):
    NAIVE = "naive"
    QRAC = "qrac"
    TE = "te"
    NCOPIES_QRAC = "ncopies-qrac"
    CONV_ROWCOL31 = "conv-rowcol31"
    CONV_BLOCK41 = "conv-block41"
    ZZ_MAP = "zz"


TRAINABLE = {SchemeKind.TE, SchemeKind.CONV_ROWCOL31, SchemeKind.CONV_BLOCK41}


@dataclass(frozen=True)
class EncodingScheme:
    """How a bitstring is chunked onto qubits.

    ``chunks[q]`` lists the bit positions written onto qubit ``q``. Positions
    equal to ``num_bits`` or beyond are padding and read as 0.
    """

    kind: SchemeKind
    num_bits: int
    chunk_bits: int
    chunks: tuple[tuple[int, ...], ...]
    trainable: bool = False

    @property
    def num_qubits(self) -> int:
        return len(self.chunks)

    @property
    def slots(self) -> int:
        return len(self.chunks)


def _check_bits(num_bits):
    if num_bits < 1:
        raise UsageError(f"need at least one bit, got {num_bits}")


def sequential_scheme(num_bits: int, chunk_bits: int = 3, trainable: bool = False) -> EncodingScheme:
    """ceil(S/m) consecutive chunks; the last one is right-padded with zeros."""
    _check_bits(num_bits)
    if chunk_bits not in (2, 3, 4):
        raise UsageError(f"chunk size must be 2, 3 or 4, got {chunk_bits}")
    if chunk_bits == 4 and not trainable:
        raise UsageError("no (4,1)-QRAC exists; 4-bit chunks need a trainable table")
    n_chunks = math.ceil(num_bits / chunk_bits)
    chunks = tuple(tuple(range(i * chunk_bits, (i + 1) * chunk_bits)) for i in range(n_chunks))
    kind = SchemeKind.TE if trainable else SchemeKind.QRAC
    return EncodingScheme(kind, num_bits, chunk_bits, chunks, trainable)


def n_copies_scheme(num_bits: int, copies: int) -> EncodingScheme:
    """The sequential (3,1)-QRAC repeated on ``copies`` disjoint qubit groups."""
    if copies < 1:
        raise UsageError(f"copies must be >= 1, got {copies}")
    base = sequential_scheme(num_bits, 3)
    return EncodingScheme(SchemeKind.NCOPIES_QRAC, num_bits, 3, base.chunks * copies)


def naive_scheme(num_bits: int, positions=None) -> EncodingScheme:
    """One qubit per bit; ``positions`` keeps only those bits (e.g. 8 of 16 pixels)."""
    _check_bits(num_bits)
    positions = range(num_bits) if positions is None else positions
    return EncodingScheme(SchemeKind.NAIVE, num_bits, 1, tuple((int(p),) for p in positions))


def conv_rowcol31_scheme(trainable: bool = True) -> EncodingScheme:
    """3x1 windows, stride 1, over a row-major 4x4 image: 8 row windows then 8 column windows."""
    px = lambda i, j: 4 * i + j  # noqa: E731
    rows = [(px(i, j), px(i, j + 1), px(i, j + 2)) for i in range(4) for j in range(2)]
    cols = [(px(i, j), px(i + 1, j), px(i + 2, j)) for i in range(2) for j in range(4)]
    kind = SchemeKind.CONV_ROWCOL31
    return EncodingScheme(kind, 16, 3, tuple(rows + cols), trainable)


def conv_block41_scheme() -> EncodingScheme:
    """2x2 blocks, stride 1, over a row-major 4x4 image (9 blocks, row-major)."""
    px = lambda i, j: 4 * i + j  # noqa: E731
    blocks = [(px(i, j), px(i, j + 1), px(i + 1, j), px(i + 1, j + 1)) for i in range(3) for j in range(3)]
    return EncodingScheme(SchemeKind.CONV_BLOCK41, 16, 4, tuple(blocks), True)


def qubits_required(num_bits: int, chunk_bits: int, copies: int = 1) -> int:
    return copies * math.ceil(num_bits / chunk_bits)


# --- bit handling ---------------------------------------------------------------

def as_bit_array(bits) -> np.ndarray:
    """'0110', [0,1,1,0] or an (N, S) array -> uint8 array."""
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise UsageError(f"not a bitstring: {bits!r}")
        return np.array([int(c) for c in bits], dtype=np.uint8)
    arr = np.asarray(bits, dtype=np.uint8)
    if np.any(arr > 1):
        raise UsageError("bits must be 0 or 1")
    return arr


def chunk_codes(bits, scheme: EncodingScheme) -> np.ndarray:
    """Integer code of every chunk: shape (N, slots), or (slots,) for one sample."""
    arr = as_bit_array(bits)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != scheme.num_bits:
        raise UsageError(f"scheme expects {scheme.num_bits} bits, got {arr.shape[1]}")
    m = scheme.chunk_bits
    padded = np.concatenate([arr, np.zeros((arr.shape[0], m), dtype=np.uint8)], axis=1)
    index = np.array([list(c) + [scheme.num_bits] * (m - len(c)) for c in scheme.chunks])
    weights = 1 << np.arange(m - 1, -1, -1)
    codes = (padded[:, index] * weights).sum(axis=-1)
    return codes[0] if single else codes


def code_to_bits(code: int, m: int) -> str:
    return format(int(code), f"0{m}b")


# --- QRAC -----------------------------------------------------------------------

def bloch_vector(theta, phi) -> np.ndarray:
    theta, phi = np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


def angles_of_bloch(r) -> tuple[float, float]:
    x, y, z = r
    return float(np.arccos(np.clip(z, -1.0, 1.0))), float(np.arctan2(y, x))


def qrac_bloch(bits) -> np.ndarray:
    """Codeword on the Bloch sphere: cube corner for m=3, x-z square for m=2."""
    b = as_bit_array(bits)
    if b.ndim != 1 or len(b) not in (2, 3):
        raise UsageError(f"QRAC encodes 2 or 3 bits, got {len(np.atleast_1d(b))}")
    signs = 1.0 - 2.0 * b
    if len(b) == 3:
        return signs / np.sqrt(3)
    return np.array([signs[0], 0.0, signs[1]]) / np.sqrt(2)


def qrac_angles(bits) -> tuple[float, float]:
    return angles_of_bloch(qrac_bloch(bits))


# --- embedding tables -------------------------------------------------------------

@dataclass
class EmbeddingTable:
    """(theta, phi) for each slot and each m-bit code: ``params[slot, code] = (theta, phi)``."""

    chunk_bits: int
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.params.ndim != 3 or self.params.shape[1:] != (2 ** self.chunk_bits, 2):
            raise UsageError(f"table params must have shape (slots, {2 ** self.chunk_bits}, 2)")

    @property
    def slots(self) -> int:
        return self.params.shape[0]

    @property
    def num_params(self) -> int:
        return self.params.size

    def flat(self) -> np.ndarray:
        return self.params.reshape(-1).copy()

    def with_flat(self, vector) -> "EmbeddingTable":
        return EmbeddingTable(self.chunk_bits, np.asarray(vector, dtype=float).reshape(self.params.shape))

    def lookup(self, codes) -> np.ndarray:
        """Angles for chunk codes of shape (..., slots) -> (..., slots, 2)."""
        codes = np.asarray(codes)
        return self.params[np.arange(self.slots), codes]

    def bloch(self) -> np.ndarray:
        return bloch_vector(self.params[..., 0], self.params[..., 1])


def qrac_table(scheme: EncodingScheme) -> EmbeddingTable:
    m = scheme.chunk_bits
    if m not in (2, 3):
        raise UsageError(f"no ({m},1)-QRAC exists")
    entries = np.array([qrac_angles(code_to_bits(c, m)) for c in range(2 ** m)])
    return EmbeddingTable(m, np.broadcast_to(entries, (scheme.slots,) + entries.shape).copy())


def te_init(scheme: EncodingScheme, mode: str = "random", seed: int = 0) -> EmbeddingTable:
    """Initial trainable table: uniform random angles, or the QRAC codewords."""
    if not scheme.trainable:
        raise UsageError(f"scheme {scheme.kind.value} has no trainable table")
    m = scheme.chunk_bits
    if mode == "qrac":
        if m == 4:
            raise UsageError("QRAC-corner initialisation is unsupported for 4-bit chunks: no (4,1)-QRAC exists")
        return qrac_table(scheme)
    if mode != "random":
        raise UsageError(f"unknown init mode {mode!r}")
    rng = np.random.default_rng(seed)
    shape = (scheme.slots, 2 ** m)
    theta = rng.uniform(0.0, np.pi, shape)
    phi = rng.uniform(0.0, 2 * np.pi, shape)
    return EmbeddingTable(m, np.stack([theta, phi], axis=-1))


def bloch_of(table: EmbeddingTable, slot: int, bits) -> np.ndarray:
    b = as_bit_array(bits)
    if b.shape != (table.chunk_bits,):
        raise UsageError(f"table entries are keyed by {table.chunk_bits}-bit strings")
    code = int(b @ (1 << np.arange(table.chunk_bits - 1, -1, -1)))
    theta, phi = table.params[slot, code]
    return bloch_vector(theta, phi)


# --- circuits and states ------------------------------------------------------------

def embedding_angles(bits, scheme: EncodingScheme, table: EmbeddingTable | None = None) -> np.ndarray:
    """Per-qubit (theta, phi) for a QRAC/TE scheme: (N, qubits, 2) or (qubits, 2)."""
    if scheme.kind is SchemeKind.NAIVE:
        raise UsageError("naive scheme has no rotation angles")
    if scheme.trainable and table is None:
        raise UsageError("trainable scheme needs an embedding table")
    if not scheme.trainable and table is not None:
        raise UsageError("fixed QRAC scheme takes no table")
    table = qrac_table(scheme) if table is None else table
    if table.slots != scheme.slots:
        raise UsageError(f"table has {table.slots} slots, scheme needs {scheme.slots}")
    return table.lookup(chunk_codes(bits, scheme))


def embed_bitstring(bits, scheme: EncodingScheme, table: EmbeddingTable | None = None) -> Circuit:
    """Embedding circuit of one bitstring: u3 per chunk-qubit, or X per set bit (naive)."""
    arr = as_bit_array(bits)
    if arr.ndim != 1:
        raise UsageError("embed_bitstring takes a single bitstring")
    circuit = Circuit(scheme.num_qubits)
    if scheme.kind is SchemeKind.NAIVE:
        if len(arr) != scheme.num_bits:
            raise UsageError(f"scheme expects {scheme.num_bits} bits, got {len(arr)}")
        for q, (pos,) in enumerate(scheme.chunks):
            if arr[pos]:
                circuit.add(GateKind.X, [q])
        return circuit
    for q, (theta, phi) in enumerate(embedding_angles(arr, scheme, table)):
        circuit.add(GateKind.U3, [q], theta, phi, 0.0)
    return circuit


def n_copies_qrac(bits, copies: int) -> Circuit:
    arr = as_bit_array(bits)
    return embed_bitstring(arr, n_copies_scheme(len(arr), copies))


def qubit_states_from_angles(angles: np.ndarray) -> np.ndarray:
    """u3(theta, phi, 0)|0> per qubit: (..., 2) angles -> (..., 2) amplitudes."""
    theta, phi = angles[..., 0], angles[..., 1]
    return np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=-1).astype(complex)


def qubit_states_from_bits(bits, scheme: EncodingScheme) -> np.ndarray:
    """Naive basis states: (N, qubits, 2)."""
    arr = np.atleast_2d(as_bit_array(bits))
    picked = arr[:, [c[0] for c in scheme.chunks]].astype(float)
    return np.stack([1.0 - picked, picked], axis=-1).astype(complex)


def product_state(qubit_states: np.ndarray, num_qubits: int | None = None) -> StateVector:
    """Tensor product of per-qubit states (N, k, 2); qubit 0 is least significant.

    Extra qubits up to ``num_qubits`` are left in |0>.
    """
    qubit_states = np.asarray(qubit_states, dtype=complex)
    n_batch, k, _ = qubit_states.shape
    num_qubits = k if num_qubits is None else num_qubits
    amps = np.ones((n_batch, 1), dtype=complex)
    zero = np.array([1.0, 0.0], dtype=complex)
    for q in reversed(range(num_qubits)):
        v = qubit_states[:, q] if q < k else np.broadcast_to(zero, (n_batch, 2))
        amps = (amps[:, :, None] * v[:, None, :]).reshape(n_batch, -1)
    return StateVector(num_qubits, amps)


# --- ZZ feature map --------------------------------------------------------------------

def zz_feature_map(x, depth: int = 2, offset: int = 0, num_qubits: int | None = None) -> Circuit:
    """Second-order Pauli-Z evolution map with full pairwise entanglement.

    ``x`` is (d,) or (N, d); batched features give per-sample gate angles.
    Features are written onto qubits ``offset .. offset+d-1``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 0 or x.ndim == 0:
        raise UsageError("ZZ feature map needs at least one feature")
    if depth < 1:
        raise UsageError(f"ZZ feature map depth must be >= 1, got {depth}")
    d = x.shape[-1]
    cols = [x[..., i] for i in range(d)]
    circuit = Circuit(offset + d if num_qubits is None else num_qubits)
    for _ in range(depth):
        for i in range(d):
            circuit.add(GateKind.H, [offset + i])
        for i in range(d):
            circuit.add(GateKind.RZ, [offset + i], 2.0 * cols[i])
        for i in range(d):
            for j in range(i + 1, d):
                circuit.add(GateKind.CX, [offset + i, offset + j])
                circuit.add(GateKind.RZ, [offset + j], 2.0 * (np.pi - cols[i]) * (np.pi - cols[j]))
                circuit.add(GateKind.CX, [offset + i, offset + j])
    return circuit


# --- spread regularizer --------------------------------------------------------------------

def _adjugate3(m: np.ndarray) -> np.ndarray:
    """Adjugate of a 3x3 matrix (cofactor transpose); defined for singular input."""
    adj = np.empty_like(m)
    for i in range(3):
        for j in range(3):
            minor = np.delete(np.delete(m, j, axis=0), i, axis=1)
            adj[i, j] = (-1) ** (i + j) * (minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0])
    return adj


def _slot_covariance(table: EmbeddingTable, slot: int):
    r = table.bloch()[slot]
    centred = r - r.mean(axis=0)
    return centred, centred.T @ centred / len(r)


def spread_loss(table: EmbeddingTable, slot: int) -> float:
    """-det of the covariance of one slot's Bloch vectors."""
    _, cov = _slot_covariance(table, slot)
    return -float(np.linalg.det(cov))


def spread_grad(table: EmbeddingTable, slot: int) -> np.ndarray:
    """Gradient of ``spread_loss`` w.r.t. the slot's (theta, phi) entries, shape (2**m, 2)."""
    centred, cov = _slot_covariance(table, slot)
    n = len(centred)
    # d det = tr(adj(S) dS) and dS/dr_i = (v c_i^T + c_i v^T)/n
    d_det_dr = 2.0 / n * centred @ _adjugate3(cov)
    theta, phi = table.params[slot, :, 0], table.params[slot, :, 1]
    dr_dtheta = np.stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)], axis=-1)
    dr_dphi = np.stack([-np.sin(theta) * np.sin(phi), np.sin(theta) * np.cos(phi), np.zeros_like(theta)], axis=-1)
    grad = np.stack([(d_det_dr * dr_dtheta).sum(-1), (d_det_dr * dr_dphi).sum(-1)], axis=-1)
    return -grad


def total_spread_loss(table: EmbeddingTable) -> float:
    return sum(spread_loss(table, s) for s in range(table.slots))


def total_spread_grad(table: EmbeddingTable) -> np.ndarray:
    return np.stack([spread_grad(table, s) for s in range(table.slots)])


def bloch_rows(table: EmbeddingTable) -> list[dict]:
    """Rows of the Bloch export: one per (slot, bitstring)."""
    r = table.bloch()
    rows = []
    for slot in range(table.slots):
        for code in range(2 ** table.chunk_bits):
            theta, phi = table.params[slot, code]
            x, y, z = r[slot, code]
            rows.append({"slot": slot, "bits": code_to_bits(code, table.chunk_bits),
                         "x": x, "y": y, "z": z, "theta": theta, "phi": phi})
    return rows
