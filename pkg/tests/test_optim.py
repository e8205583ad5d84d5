import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qte import encode
from qte.errors import NumericalError, UsageError
from qte.model import QnnModel
from qte.optim import (AdamState, LossReport, ParameterVector, SpsaGains, adam_step, bce_loss, calibrate_gains,
                       finite_difference_grad, hinge_loss, metrics, minimize_spsa, parameter_shift_grad,
                       parameter_shift_gradient, spsa_gradient_estimate, spsa_step, total_loss)
from qte.qsim import Circuit, GateKind, StateVector

from conftest import ROTATIONS, random_circuit


def bowl(x):
    return float(np.sum(np.asarray(x) ** 2))


# --- losses ---

def test_bce_values():
    assert bce_loss(0.5, 1) == pytest.approx(np.log(2))
    assert bce_loss(0.5, 0) == pytest.approx(np.log(2))
    assert bce_loss(1.0, 1) == pytest.approx(0.0, abs=1e-11)
    assert bce_loss(0.0, 1) == pytest.approx(-np.log(1e-12))


def test_hinge_values():
    np.testing.assert_allclose(hinge_loss([1.0, 0.0, 0.5], [1, 1, 0]), [0.0, 2.0, 1.0])


def test_total_loss_lambda_terms():
    table = encode.qrac_table(encode.sequential_scheme(3, 3))
    p, y = np.array([0.2, 0.9]), np.array([0, 1])
    plain = total_loss(p, y, table, 0.0)
    assert plain.total == plain.data
    reg = total_loss(p, y, table, 0.02)
    assert reg.total == pytest.approx(reg.data + 0.02 * reg.spread, abs=1e-12)
    assert total_loss(p, y, table, 1.0).spread == pytest.approx(-1 / 27, abs=1e-12)
    with pytest.raises(UsageError):
        total_loss(p, y, table, -1.0)


def test_additivity_grid(rng):
    for _ in range(20):
        table = encode.te_init(encode.sequential_scheme(9, 3, True), "random", int(rng.integers(1000)))
        p, y = rng.uniform(0, 1, 10), rng.integers(0, 2, 10)
        for lam in (0.0, 1e-5, 0.02, 1.0, 100.0):
            diff = total_loss(p, y, table, lam).total - total_loss(p, y, table, 0.0).total
            assert diff == pytest.approx(lam * encode.total_spread_loss(table), abs=1e-12)


def test_loss_report_dict():
    r = LossReport.build(3, 0.5, -0.1, 0.02)
    assert r.as_dict() == {"epoch": 3, "total": 0.5 - 0.002, "data": 0.5, "spread": -0.1, "lambda": 0.02}


def test_parameter_vector_layout():
    v = ParameterVector.concat(ansatz=np.zeros(4), embedding=np.ones(16))
    assert len(v) == 20
    np.testing.assert_array_equal(v.segment("embedding"), np.ones(16))
    assert v.segment("missing").size == 0
    with pytest.raises(UsageError):
        ParameterVector(np.zeros(3), {"a": slice(0, 2)})


# --- SPSA ---

def test_spsa_uses_two_evaluations():
    calls = []

    def f(x):
        calls.append(1)
        return bowl(x)
    minimize_spsa(f, [1.0, 1.0], epochs=400, seed=0)
    assert len(calls) == 800


def test_spsa_gain_sequences_decrease():
    g = SpsaGains()
    assert (g.a, g.c, g.alpha, g.gamma, g.A) == (0.2, 0.1, 0.602, 0.101, 0.0)
    ck = [g.c_k(k) for k in range(50)]
    assert all(b < a for a, b in zip(ck, ck[1:]))


def test_spsa_converges_on_bowl():
    converged = sum(np.linalg.norm(minimize_spsa(bowl, [1.0, 1.0], 400, seed=s)) < 0.1 for s in range(100))
    assert converged >= 90


def test_spsa_estimator_is_unbiased():
    rng = np.random.default_rng(0)
    x = np.array([0.7, -1.2, 0.3])
    n = 10 ** 4
    mean = np.mean([spsa_gradient_estimate(x, bowl, 0.1, rng) for _ in range(n)], axis=0)
    # cross terms 2 x_j delta_j / delta_i have zero mean; allow 4 standard errors
    stderr = np.sqrt([np.sum(np.delete(2 * x, i) ** 2) for i in range(3)] ) / np.sqrt(n)
    assert np.all(np.abs(mean - 2 * x) < 4 * stderr)


def test_spsa_skips_non_finite(caplog):
    x = np.array([1.0, 2.0])
    new, _ = spsa_step(x, lambda v: float("nan"), 0, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(new, x)
    assert "skipped" in caplog.text


def test_calibration_sets_first_step():
    rng = np.random.default_rng(3)
    x0 = np.array([1.0, -0.5, 2.0])
    gains = calibrate_gains(bowl, x0, SpsaGains(), target_step=0.5, rng=rng)
    steps = [np.abs(spsa_step(x0, bowl, 0, gains, np.random.default_rng(s))[0] - x0).mean() for s in range(200)]
    assert np.mean(steps) == pytest.approx(0.5, rel=0.3)
    flat = calibrate_gains(lambda v: 1.0, x0, SpsaGains(), rng=rng)
    assert flat == SpsaGains()


# --- Adam ---

def test_adam_first_step_is_lr():
    new, state = adam_step(np.zeros(3), np.array([5.0, -0.01, 2.0]), lr=0.02)
    np.testing.assert_allclose(np.abs(new), 0.02, rtol=1e-4)
    assert state.t == 1


def test_adam_zero_grad_and_shape_checks():
    x = np.array([1.0, 2.0])
    new, _ = adam_step(x, np.zeros(2))
    np.testing.assert_array_equal(new, x)
    with pytest.raises(UsageError):
        adam_step(x, np.zeros(3))
    with pytest.raises(NumericalError):
        adam_step(x, np.array([np.nan, 0.0]))


def test_adam_on_bowl():
    x, state, losses = np.array([1.0, 1.0]), AdamState.zeros(2), []
    for _ in range(500):
        x, state = adam_step(x, 2 * x, state, lr=0.02)
        losses.append(bowl(x))
    assert losses[-1] < 1e-6
    # steady descent until the iterate reaches the lr-sized neighbourhood of the minimum
    assert all(b < a for a, b in zip(losses[:60], losses[1:60]))


# --- gradients ---

def test_shift_rule_on_ry_expectation():
    def z_expectation(params):
        probs = np.abs(Circuit(1).add(GateKind.RY, [0], params[0]).run().amplitudes) ** 2
        return probs[0] - probs[1]
    for theta in np.linspace(-np.pi, np.pi, 20):
        assert parameter_shift_grad(z_expectation, np.array([theta]), 0) == pytest.approx(-np.sin(theta), abs=1e-9)
    assert parameter_shift_grad(z_expectation, np.array([0.0]), 0) == pytest.approx(0.0, abs=1e-12)


def test_unsupported_gate_falls_back(caplog):
    import logging
    caplog.set_level(logging.INFO)
    g = parameter_shift_grad(lambda p: np.sin(p[0]) ** 3, np.array([0.4]), 0, kind=GateKind.H)
    assert g == pytest.approx(3 * np.sin(0.4) ** 2 * np.cos(0.4), abs=1e-8)
    assert "finite differences" in caplog.text


def _expectation_fn(template, n, observable_qubit):
    def fn(params):
        c = Circuit(n)
        for i, (kind, targets) in enumerate(template):
            c.add(kind, targets, params[i])
        probs = np.abs(c.run().amplitudes) ** 2
        sign = 1 - 2 * ((np.arange(2 ** n) >> observable_qubit) & 1)
        return float(probs @ sign)
    return fn


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 4), depth=st.integers(1, 10))
def test_shift_rule_matches_finite_difference(seed, n, depth):
    rng = np.random.default_rng(seed)
    base = random_circuit(rng, n, depth, ROTATIONS)
    # put a Hadamard layer first so Z-type rotations are not trivial
    template = [(g.kind, g.targets) for g in base]
    fn = _expectation_fn(template, n, int(rng.integers(n)))

    def wrapped(params):
        c = Circuit(n)
        for q in range(n):
            c.add(GateKind.H, [q])
        for i, (kind, targets) in enumerate(template):
            c.add(kind, targets, params[i])
        probs = np.abs(c.run().amplitudes) ** 2
        return float(probs @ (1 - 2 * (np.arange(2 ** n) & 1)))
    params = np.array([g.params[0] for g in base])
    for f in (fn, wrapped):
        for i in range(len(params)):
            assert parameter_shift_grad(f, params, i, template[i][0]) == pytest.approx(
                finite_difference_grad(f, params, i), abs=1e-6)


def test_shift_rule_on_random_qnn(rng):
    scheme = encode.sequential_scheme(9, 3)
    model = QnnModel(scheme)
    bits = rng.integers(0, 2, (6, 9))
    state = model.input_state(bits)
    w = rng.uniform(0, 2 * np.pi, model.readout.num_params)
    fn = lambda p: model.predict_from_state(state, p)  # noqa: E731
    shift = parameter_shift_gradient(fn, w)
    fd = np.array([finite_difference_grad(fn, w, i) for i in range(len(w))])
    np.testing.assert_allclose(shift, fd, atol=1e-6)


def test_u3_angles_obey_shift_rule(rng):
    for _ in range(10):
        theta, phi = rng.uniform(0, 2 * np.pi, 2)
        w = rng.uniform(0, 2 * np.pi, 2)
        model = QnnModel(encode.sequential_scheme(3, 3, True))

        def fn(a):
            angles = np.array([[[a[0], a[1]]]])
            return float(model.predict_from_state(model.state_from_angles(angles), w)[0])
        a = np.array([theta, phi])
        for i in range(2):
            assert parameter_shift_grad(fn, a, i, GateKind.U3) == pytest.approx(finite_difference_grad(fn, a, i), abs=1e-7)


# --- metrics ---

def test_metrics_basics():
    m = metrics([1, 0, 1], [1, 0, 1])
    assert m == {"accuracy": 1.0, "f1": 1.0, "classified_ratio": 1.0}
    assert metrics([0, 0], [1, 0])["f1"] == 0.0
    with pytest.raises(UsageError):
        metrics([], [])
    with pytest.raises(UsageError):
        metrics([1], [1, 0])


def test_affine_readout_of_qrac_parity_is_capped():
    """Best affine separator on the 8 cube corners gets at most 6 of 8 parity labels right."""
    import itertools
    corners = {s: encode.qrac_bloch(s) for s in ("".join(b) for b in itertools.product("01", repeat=3))}
    labels = np.array([s.count("1") % 2 for s in corners])
    pts = np.array(list(corners.values()))
    best = 0.0
    # every dichotomy realisable by a plane through the corners is reached by planes
    # with normals from {-1,0,1}^3 and offsets between projected values
    for normal in itertools.product((-1, 0, 1), repeat=3):
        proj = pts @ np.array(normal, dtype=float)
        cuts = np.concatenate([[proj.min() - 1], (np.sort(proj)[1:] + np.sort(proj)[:-1]) / 2, [proj.max() + 1]])
        for c in cuts:
            for sign in (1, -1):
                preds = (sign * (proj - c) > 0).astype(int)
                best = max(best, metrics(preds, labels)["classified_ratio"])
    assert best <= 0.75
