import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qte import encode
from qte.encode import EmbeddingTable
from qte.errors import UsageError
from qte.qsim import Circuit, GateKind, StateVector, marginal_probability, probabilities

CUBE_STRINGS = ["".join(b) for b in itertools.product("01", repeat=3)]


def qrac_state(bits):
    theta, phi = encode.qrac_angles(bits)
    return Circuit(1).add(GateKind.U3, [0], theta, phi, 0.0).run()


def axis_decode_probability(state, axis, bit):
    """P(measuring along x/y/z returns ``bit``); the axis is rotated onto z first."""
    c = Circuit(1)
    if axis == 0:
        c.add(GateKind.H, [0])
    elif axis == 1:
        c.add(GateKind.RZ, [0], -np.pi / 2).add(GateKind.H, [0])
    return float(marginal_probability(c.run(state), 0, bit))


# --- QRAC ---

def test_qrac_000_corner():
    theta, phi = encode.qrac_angles("000")
    assert theta == pytest.approx(np.arccos(1 / np.sqrt(3)), abs=1e-12)
    assert phi == pytest.approx(np.pi / 4, abs=1e-12)
    np.testing.assert_allclose(encode.bloch_vector(theta, phi), np.ones(3) / np.sqrt(3), atol=1e-12)


def test_qrac_111_is_antipode():
    np.testing.assert_allclose(encode.qrac_bloch("111"), -encode.qrac_bloch("000"))


def test_qrac_two_bit_square():
    np.testing.assert_allclose(encode.qrac_bloch("00"), np.array([1, 0, 1]) / np.sqrt(2))
    state = Circuit(1).add(GateKind.U3, [0], *encode.qrac_angles("00"), 0.0).run()
    for axis in (0, 2):
        assert axis_decode_probability(state, axis, 0) == pytest.approx((1 + 2 ** -0.5) / 2, abs=1e-9)


@pytest.mark.parametrize("bits", ["0", "0101", ""])
def test_qrac_rejects_bad_length(bits):
    with pytest.raises(UsageError):
        encode.qrac_angles(bits)


@pytest.mark.parametrize("bits", CUBE_STRINGS)
def test_qrac_decode_probability(bits):
    state = qrac_state(bits)
    for axis in range(3):
        p = axis_decode_probability(state, axis, int(bits[axis]))
        assert p == pytest.approx((1 + 1 / np.sqrt(3)) / 2, abs=1e-9)


def test_qrac_pairwise_fidelities():
    expected = {1: 2 / 3, 2: 1 / 3, 3: 0.0}
    for a, b in itertools.combinations(CUBE_STRINGS, 2):
        dist = sum(x != y for x, y in zip(a, b))
        fid = abs(np.vdot(qrac_state(a).amplitudes, qrac_state(b).amplitudes)) ** 2
        assert fid == pytest.approx(expected[dist], abs=1e-9)


def test_parity_classes_share_the_origin_centroid():
    odd = [encode.qrac_bloch(s) for s in CUBE_STRINGS if s.count("1") % 2]
    even = [encode.qrac_bloch(s) for s in CUBE_STRINGS if not s.count("1") % 2]
    np.testing.assert_allclose(np.mean(odd, axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(np.mean(even, axis=0), 0, atol=1e-12)


def test_perceptron_cannot_separate_parity_on_the_cube():
    x = np.array([np.append(encode.qrac_bloch(s), 1.0) for s in CUBE_STRINGS])
    y = np.array([1 if s.count("1") % 2 else -1 for s in CUBE_STRINGS])
    w = np.zeros(4)
    converged = False
    for _ in range(10 ** 5 // len(x)):
        mistakes = 0
        for xi, yi in zip(x, y):
            if yi * (w @ xi) <= 0:
                w += yi * xi
                mistakes += 1
        if mistakes == 0:
            converged = True
            break
    assert not converged


# --- tables ---

def test_te_init_sizes_and_determinism():
    one = encode.te_init(encode.sequential_scheme(3, 3, True), "random", seed=5)
    assert one.num_params == 16
    again = encode.te_init(encode.sequential_scheme(3, 3, True), "random", seed=5)
    np.testing.assert_array_equal(one.params, again.params)
    four = encode.te_init(encode.sequential_scheme(4, 4, True), "random", seed=5)
    assert four.num_params == 32


def test_te_init_ranges():
    t = encode.te_init(encode.sequential_scheme(30, 3, True), "random", seed=1)
    assert (t.params[..., 0] >= 0).all() and (t.params[..., 0] <= np.pi).all()
    assert (t.params[..., 1] >= 0).all() and (t.params[..., 1] < 2 * np.pi).all()


def test_te_init_qrac_corners_and_m4_refusal():
    t = encode.te_init(encode.sequential_scheme(6, 3, True), "qrac")
    for code, s in enumerate(CUBE_STRINGS):
        np.testing.assert_allclose(encode.bloch_of(t, 1, s), encode.qrac_bloch(s), atol=1e-12)
    with pytest.raises(UsageError):
        encode.te_init(encode.conv_block41_scheme(), "qrac")
    with pytest.raises(UsageError):
        encode.te_init(encode.sequential_scheme(6, 3), "random")


def test_bloch_of_simple_points():
    t = EmbeddingTable(2, np.zeros((1, 4, 2)))
    np.testing.assert_allclose(encode.bloch_of(t, 0, "01"), [0, 0, 1])
    t.params[0, 2] = (np.pi / 2, 0.0)
    np.testing.assert_allclose(encode.bloch_of(t, 0, "10"), [1, 0, 0], atol=1e-15)


# --- schemes and circuits ---

@pytest.mark.parametrize("S, m, qubits", [(12, 3, 4), (16, 3, 6), (7, 3, 3), (9, 3, 3)])
def test_sequential_qubit_counts(S, m, qubits):
    assert encode.sequential_scheme(S, m).num_qubits == qubits


def test_qubit_formula_exhaustive():
    for S in range(1, 31):
        for m in (2, 3, 4):
            scheme = encode.sequential_scheme(S, m, trainable=(m == 4))
            assert scheme.num_qubits == encode.qubits_required(S, m) == -(-S // m)
            for copies in (1, 2, 3):
                if m == 3:
                    assert encode.n_copies_scheme(S, copies).num_qubits == copies * -(-S // 3)


def test_conv_schemes():
    rowcol = encode.conv_rowcol31_scheme()
    assert rowcol.num_qubits == 16
    assert rowcol.chunks[0] == (0, 1, 2) and rowcol.chunks[1] == (1, 2, 3)
    assert rowcol.chunks[8] == (0, 4, 8) and rowcol.chunks[15] == (7, 11, 15)
    block = encode.conv_block41_scheme()
    assert block.num_qubits == 9
    assert block.chunks[0] == (0, 1, 4, 5) and block.chunks[8] == (10, 11, 14, 15)


def test_last_chunk_is_right_padded():
    scheme = encode.sequential_scheme(4, 3)
    np.testing.assert_array_equal(encode.chunk_codes("1011", scheme), [0b101, 0b100])


@pytest.mark.parametrize("copies, S, qubits", [(3, 3, 3), (2, 6, 4), (1, 9, 3)])
def test_n_copies_circuit(copies, S, qubits):
    c = encode.n_copies_qrac("1" * S, copies)
    assert c.num_qubits == qubits
    assert all(g.kind is GateKind.U3 for g in c)


def test_embed_bitstring_naive_and_length_check():
    c = encode.embed_bitstring("101", encode.naive_scheme(3))
    assert [(g.kind, g.targets) for g in c] == [(GateKind.X, (0,)), (GateKind.X, (2,))]
    with pytest.raises(UsageError):
        encode.embed_bitstring("10", encode.naive_scheme(3))
    with pytest.raises(UsageError):
        encode.embed_bitstring("101", encode.sequential_scheme(3, 3, True))  # table missing


def test_product_state_matches_circuit(rng):
    scheme = encode.sequential_scheme(7, 3, True)
    table = encode.te_init(scheme, "random", 3)
    bits = rng.integers(0, 2, (5, 7))
    states = encode.product_state(encode.qubit_states_from_angles(encode.embedding_angles(bits, scheme, table)))
    for i in range(5):
        ref = encode.embed_bitstring(bits[i], scheme, table).run().amplitudes
        np.testing.assert_allclose(states.amplitudes[i], ref, atol=1e-14)


# --- ZZ map ---

def test_zz_map_structure():
    c = encode.zz_feature_map([0.0, 0.0], depth=1)
    kinds = [g.kind for g in c]
    assert kinds == [GateKind.H, GateKind.H, GateKind.RZ, GateKind.RZ, GateKind.CX, GateKind.RZ, GateKind.CX]
    rz = [g for g in c if g.kind is GateKind.RZ]
    assert rz[0].params == (0.0,) and rz[1].params == (0.0,)
    assert rz[2].params[0] == pytest.approx(2 * np.pi ** 2)


def test_zz_map_qubits_and_guards():
    assert encode.zz_feature_map(np.ones(4)).num_qubits == 4
    with pytest.raises(UsageError):
        encode.zz_feature_map([])
    with pytest.raises(UsageError):
        encode.zz_feature_map([0.1], depth=0)


# --- spread regularizer ---

def random_table(rng, slots=1, m=3):
    return EmbeddingTable(m, np.stack([rng.uniform(0, np.pi, (slots, 2 ** m)),
                                       rng.uniform(0, 2 * np.pi, (slots, 2 ** m))], axis=-1))


def fd_spread_grad(table, slot, step=1e-5):
    grad = np.zeros(table.params.shape[1:])
    for idx in np.ndindex(*grad.shape):
        plus, minus = table.params.copy(), table.params.copy()
        plus[(slot,) + idx] += step
        minus[(slot,) + idx] -= step
        grad[idx] = (encode.spread_loss(EmbeddingTable(table.chunk_bits, plus), slot)
                     - encode.spread_loss(EmbeddingTable(table.chunk_bits, minus), slot)) / (2 * step)
    return grad


def test_cube_corner_spread():
    t = encode.qrac_table(encode.sequential_scheme(3, 3))
    assert encode.spread_loss(t, 0) == pytest.approx(-1 / 27, abs=1e-12)
    assert np.linalg.norm(encode.spread_grad(t, 0)) < 1e-8


def test_degenerate_spreads():
    same = EmbeddingTable(3, np.tile([0.4, 1.0], (1, 8, 1)))
    assert encode.spread_loss(same, 0) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(encode.spread_grad(same, 0), 0, atol=1e-15)
    circle = EmbeddingTable(3, np.stack([np.full(8, np.pi / 2), np.linspace(0, 2 * np.pi, 8, endpoint=False)], -1)[None])
    assert encode.spread_loss(circle, 0) == pytest.approx(0.0, abs=1e-15)


def test_spread_grad_matches_finite_differences(rng):
    for _ in range(100):
        t = random_table(rng)
        np.testing.assert_allclose(encode.spread_grad(t, 0), fd_spread_grad(t, 0), atol=1e-6)


def test_descent_direction_increases_spread(rng):
    t = encode.qrac_table(encode.sequential_scheme(3, 3))
    t.params[0, 3] += rng.normal(0, 0.3, 2)
    g = encode.spread_grad(t, 0)
    stepped = EmbeddingTable(3, t.params - 1e-3 * g[None])
    assert encode.spread_loss(stepped, 0) < encode.spread_loss(t, 0)


def _rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.linalg.det(q))


def test_spread_is_rotation_invariant(rng):
    for _ in range(20):
        t = random_table(rng)
        r = t.bloch()[0] @ _rotation(rng).T
        angles = np.array([encode.angles_of_bloch(v) for v in r])
        rotated = EmbeddingTable(3, angles[None])
        assert encode.spread_loss(rotated, 0) == pytest.approx(encode.spread_loss(t, 0), abs=1e-10)


def test_total_spread_sums_slots(rng):
    t = random_table(rng, slots=3)
    assert encode.total_spread_loss(t) == pytest.approx(sum(encode.spread_loss(t, s) for s in range(3)))


def test_bloch_rows_layout():
    rows = encode.bloch_rows(encode.qrac_table(encode.sequential_scheme(3, 3)))
    assert len(rows) == 8
    assert list(rows[0]) == ["slot", "bits", "x", "y", "z", "theta", "phi"]
    assert rows[5]["bits"] == "101"


@settings(max_examples=50, deadline=None)
@given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=30), m=st.sampled_from([2, 3]))
def test_chunk_codes_round_trip(bits, m):
    scheme = encode.sequential_scheme(len(bits), m)
    codes = encode.chunk_codes(bits, scheme)
    text = "".join(encode.code_to_bits(c, m) for c in codes)
    assert text[:len(bits)] == "".join(map(str, bits))
    assert set(text[len(bits):]) <= {"0"}


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_embedded_states_are_normalised(seed):
    rng = np.random.default_rng(seed)
    scheme = encode.conv_block41_scheme()
    table = encode.te_init(scheme, "random", seed)
    bits = rng.integers(0, 2, (3, 16))
    qs = encode.qubit_states_from_angles(encode.embedding_angles(bits, scheme, table))
    np.testing.assert_allclose(np.abs(qs) ** 2 @ np.ones(2), 1.0, atol=1e-12)
    assert isinstance(encode.product_state(qs[:, :4]), StateVector)
    np.testing.assert_allclose(probabilities(encode.product_state(qs[:, :4])).sum(-1), 1.0, atol=1e-10)
