"""Training loops: SPSA for the RyRz classifier, Adam with parameter-shift gradients for the QNN."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import encode
from .encode import EmbeddingTable
from .model import QnnModel, VqcModel, label_from_probability
from .optim import (LOSSES, AdamState, LossReport, ParameterVector, SpsaGains, adam_step,
                    calibrate_gains, metrics, spsa_step, total_loss)
from .qsim import sample_probability

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    params: np.ndarray
    table: EmbeddingTable | None
    history: list[LossReport] = field(default_factory=list)

    @property
    def final_spread(self) -> float:
        return encode.total_spread_loss(self.table) if self.table is not None else 0.0


def init_table(scheme, mode: str, seed: int) -> EmbeddingTable | None:
    if scheme is None or not scheme.trainable:
        return None
    return encode.te_init(scheme, mode, seed)


def _maybe_shots(p, shots: int, rng):
    return sample_probability(p, shots, rng) if shots else p


# --- VQC / SPSA ------------------------------------------------------------------------------------

def vqc_probabilities(model: VqcModel, params, table, bits=None, reals=None, shots: int = 0, rng=None):
    p = model.predict_from_state(model.embed(bits, reals, table), params)
    return _maybe_shots(p, shots, rng)


def train_vqc(model: VqcModel, labels, bits=None, reals=None, *, epochs: int = 400, lam: float = 0.0,
              gains: SpsaGains = SpsaGains(), seed: int = 0, init: str = "random", loss: str = "bce",
              shots: int = 0, calibrate: bool = True, log_every: int = 0, tag: str = "") -> TrainResult:
    """Jointly optimise ansatz angles and (for TE schemes) the embedding table with SPSA.

    One epoch is one SPSA step; its LossReport averages the two perturbed evaluations.
    With ``calibrate`` the gain ``a`` is rescaled from probe evaluations at the start point.
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    table0 = init_table(model.scheme, init, seed)
    theta0 = rng.uniform(-np.pi, np.pi, model.ansatz.num_params)
    vector = ParameterVector.concat(ansatz=theta0, embedding=table0.flat() if table0 is not None else [])
    shot_rng = np.random.default_rng(seed + 1)
    fixed_state = model.embed(bits, reals) if table0 is None else None
    zz = model.zz_state(reals) if table0 is not None and model.zz_features else None

    def unpack(x):
        table = table0.with_flat(vector.segment("embedding", x)) if table0 is not None else None
        return vector.segment("ansatz", x), table

    def loss_fn(x):
        theta, table = unpack(x)
        state = fixed_state if table is None else model.embed(bits, reals, table, zz)
        p = _maybe_shots(model.predict_from_state(state, theta), shots, shot_rng)
        return total_loss(p, labels, table, lam, loss=loss)

    x = vector.values.copy()
    if calibrate:
        gains = calibrate_gains(loss_fn, x, gains, rng=rng)
    history = []
    for k in range(epochs):
        x, (plus, minus) = spsa_step(x, loss_fn, k, gains, rng)
        report = LossReport.build(k, (plus.data + minus.data) / 2, (plus.spread + minus.spread) / 2, lam)
        history.append(report)
        if log_every and (k % log_every == 0 or k == epochs - 1):
            log.info("%sepoch %d loss %.5f (data %.5f spread %.5f)", tag, k, report.total, report.data, report.spread)
    theta, table = unpack(x)
    return TrainResult(theta, table, history)


def evaluate_vqc(model: VqcModel, result: TrainResult, labels, bits=None, reals=None, shots=0, seed=0):
    p = vqc_probabilities(model, result.params, result.table, bits, reals, shots, np.random.default_rng(seed))
    return metrics(label_from_probability(p), labels)


# --- QNN / Adam ------------------------------------------------------------------------------------

def qnn_loss_and_grad(model: QnnModel, w, table, bits, labels, lam: float = 0.0, loss: str = "bce"):
    """Mean loss of a batch and its exact gradient w.r.t. readout angles and table entries.

    Every derivative of P(readout=1) comes from the two-term shift rule; the loss is
    chained on outside. Table entries receive the per-sample derivative of the angle
    pair they were looked up for.
    """
    loss_fn, dloss_dp = LOSSES[loss]
    labels = np.asarray(labels)
    n = len(labels)
    shift = np.pi / 2
    trainable = table is not None
    if trainable:
        codes = encode.chunk_codes(bits, model.scheme)
        angles = table.lookup(codes)
        state = model.state_from_angles(angles)
    else:
        state = model.input_state(bits)
    p = model.predict_from_state(state, w)
    weight = dloss_dp(p, labels) / n

    grad_w = np.zeros_like(w)
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = shift
        dp = (model.predict_from_state(state, w + e) - model.predict_from_state(state, w - e)) / 2
        grad_w[i] = np.sum(weight * dp)

    grad_table = None
    spread = 0.0
    if trainable:
        grad_table = np.zeros_like(table.params)
        for s in range(model.num_inputs):
            for a in range(2):
                shifted = angles.copy()
                shifted[:, s, a] += shift
                p_plus = model.predict_from_state(model.state_from_angles(shifted), w)
                shifted[:, s, a] -= 2 * shift
                p_minus = model.predict_from_state(model.state_from_angles(shifted), w)
                np.add.at(grad_table[s, :, a], codes[:, s], weight * (p_plus - p_minus) / 2)
        if lam:
            spread = encode.total_spread_loss(table)
            grad_table += lam * encode.total_spread_grad(table)
    data = float(np.mean(loss_fn(p, labels)))
    return data + lam * spread, data, spread, grad_w, grad_table


def train_qnn(model: QnnModel, bits, labels, *, epochs: int = 10, batch_size: int = 32, lr: float = 0.02,
              lam: float = 0.0, seed: int = 0, init: str = "random", loss: str = "bce",
              log_every: int = 1, tag: str = "") -> TrainResult:
    """Mini-batch Adam; one epoch is one shuffled pass over the training set."""
    rng = np.random.default_rng(seed)
    bits = np.asarray(bits)
    labels = np.asarray(labels)
    table = init_table(model.scheme, init, seed)
    w = rng.uniform(0.0, 2 * np.pi, model.readout.num_params)
    vector = ParameterVector.concat(readout=w, embedding=table.flat() if table is not None else [])
    x = vector.values.copy()
    state = AdamState.zeros(len(x))
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(labels))
        data_sum = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            w = vector.segment("readout", x)
            tab = table.with_flat(vector.segment("embedding", x)) if table is not None else None
            _, data, _, gw, gt = qnn_loss_and_grad(model, w, tab, bits[idx], labels[idx], lam, loss)
            grads = np.concatenate([gw, gt.reshape(-1)]) if gt is not None else gw
            x, state = adam_step(x, grads, state, lr=lr)
            data_sum += data * len(idx)
        tab = table.with_flat(vector.segment("embedding", x)) if table is not None else None
        spread = encode.total_spread_loss(tab) if tab is not None else 0.0
        report = LossReport.build(epoch, data_sum / len(labels), spread, lam)
        history.append(report)
        if log_every and (epoch % log_every == 0 or epoch == epochs - 1):
            log.info("%sepoch %d loss %.5f", tag, epoch, report.total)
    tab = table.with_flat(vector.segment("embedding", x)) if table is not None else None
    return TrainResult(vector.segment("readout", x), tab, history)


def evaluate_qnn(model: QnnModel, result: TrainResult, bits, labels):
    p = model.predict(bits, result.params, result.table)
    return metrics(label_from_probability(p), labels)
