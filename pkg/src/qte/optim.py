"""Losses, metrics, gradient estimators and the SPSA / Adam optimizers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .encode import total_spread_loss
from .errors import NumericalError, UsageError
from .qsim import GateKind

log = logging.getLogger(__name__)

P_CLAMP = 1e-12


# --- losses -------------------------------------------------------------------------------

def bce_loss(p, y):
    """Binary cross entropy per sample; probabilities are clamped to [1e-12, 1-1e-12]."""
    p = np.clip(np.asarray(p, dtype=float), P_CLAMP, 1 - P_CLAMP)
    y = np.asarray(y, dtype=float)
    return -(y * np.log(p) + (1 - y) * np.log(1 - p))


def bce_dloss_dp(p, y):
    p = np.clip(np.asarray(p, dtype=float), P_CLAMP, 1 - P_CLAMP)
    y = np.asarray(y, dtype=float)
    return -y / p + (1 - y) / (1 - p)


def hinge_loss(p, y):
    """Hinge loss on the score 2p-1 with labels mapped to -1/+1."""
    score = 2 * np.asarray(p, dtype=float) - 1
    sign = 2 * np.asarray(y, dtype=float) - 1
    return np.maximum(0.0, 1 - sign * score)


def hinge_dloss_dp(p, y):
    score = 2 * np.asarray(p, dtype=float) - 1
    sign = 2 * np.asarray(y, dtype=float) - 1
    return np.where(1 - sign * score > 0, -2 * sign, 0.0)


LOSSES = {"bce": (bce_loss, bce_dloss_dp), "hinge": (hinge_loss, hinge_dloss_dp)}


@dataclass(frozen=True)
class LossReport:
    epoch: int
    total: float
    data: float
    spread: float
    lam: float

    @classmethod
    def build(cls, epoch: int, data: float, spread: float, lam: float) -> "LossReport":
        return cls(epoch, float(data + lam * spread), float(data), float(spread), float(lam))

    def as_dict(self) -> dict:
        return {"epoch": self.epoch, "total": self.total, "data": self.data,
                "spread": self.spread, "lambda": self.lam}


def total_loss(p, labels, table=None, lam: float = 0.0, epoch: int = 0, loss: str = "bce") -> LossReport:
    """Mean data loss over the batch plus ``lam`` times the summed spread term."""
    if lam < 0:
        raise UsageError(f"lambda must be >= 0, got {lam}")
    data = float(np.mean(LOSSES[loss][0](p, labels)))
    spread = total_spread_loss(table) if table is not None else 0.0
    return LossReport.build(epoch, data, spread, lam)


# --- parameter vector ------------------------------------------------------------------------

@dataclass
class ParameterVector:
    """Flat parameters with named contiguous segments, e.g. ``ansatz`` then ``embedding``."""

    values: np.ndarray
    layout: dict[str, slice] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        covered = np.zeros(len(self.values), dtype=int)
        for sl in self.layout.values():
            covered[sl] += 1
        if len(self.values) and not np.all(covered == 1):
            raise UsageError("layout must cover every parameter exactly once")

    @classmethod
    def concat(cls, **segments) -> "ParameterVector":
        layout, parts, start = {}, [], 0
        for name, seg in segments.items():
            seg = np.asarray(seg, dtype=float).reshape(-1)
            layout[name] = slice(start, start + len(seg))
            parts.append(seg)
            start += len(seg)
        return cls(np.concatenate(parts) if parts else np.zeros(0), layout)

    def segment(self, name: str, values=None) -> np.ndarray:
        values = self.values if values is None else values
        return values[self.layout[name]] if name in self.layout else np.zeros(0)

    def __len__(self):
        return len(self.values)


# --- SPSA ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class SpsaGains:
    a: float = 0.2
    c: float = 0.1
    alpha: float = 0.602
    gamma: float = 0.101
    A: float = 0.0

    def a_k(self, k: int) -> float:
        return self.a / (k + 1 + self.A) ** self.alpha

    def c_k(self, k: int) -> float:
        return self.c / (k + 1) ** self.gamma


def calibrate_gains(loss_fn, x0, gains: SpsaGains = SpsaGains(), target_step: float = 2 * np.pi * 0.1,
                    trials: int = 25, rng=None) -> SpsaGains:
    """Choose ``a`` so the first SPSA update moves each coordinate by about ``target_step``.

    Averages |f(x0 + c*delta) - f(x0 - c*delta)| over ``trials`` random perturbations
    (2*trials loss evaluations, all before the first step).
    """
    rng = np.random.default_rng() if rng is None else rng
    x0 = np.asarray(x0, dtype=float)
    spread = 0.0
    for _ in range(trials):
        delta = rng.choice([-1.0, 1.0], size=x0.shape)
        spread += abs(_scalar(loss_fn(x0 + gains.c * delta)) - _scalar(loss_fn(x0 - gains.c * delta))) / trials
    if not np.isfinite(spread) or spread <= 0:
        log.warning("SPSA calibration saw a flat objective; keeping a=%g", gains.a)
        return gains
    a = target_step * 2 * gains.c * (gains.A + 1) ** gains.alpha / spread
    return replace(gains, a=float(a))


def _scalar(value) -> float:
    return float(value.total if isinstance(value, LossReport) else value)


def spsa_step(params, loss_fn, k: int, gains: SpsaGains = SpsaGains(), rng=None):
    """One SPSA iteration using exactly two loss evaluations.

    ``loss_fn`` may return a float or a LossReport. Returns ``(new_params, (loss_plus, loss_minus))``
    with the raw loss_fn outputs; a non-finite loss leaves the parameters unchanged.
    """
    rng = np.random.default_rng() if rng is None else rng
    params = np.asarray(params, dtype=float)
    delta = rng.choice([-1.0, 1.0], size=params.shape)
    ck = gains.c_k(k)
    plus = loss_fn(params + ck * delta)
    minus = loss_fn(params - ck * delta)
    diff = _scalar(plus) - _scalar(minus)
    if not np.isfinite(diff):
        log.warning("SPSA step %d skipped: non-finite loss", k)
        return params.copy(), (plus, minus)
    grad = diff / (2 * ck) / delta
    new = params - gains.a_k(k) * grad
    if not np.all(np.isfinite(new)):
        log.warning("SPSA step %d skipped: non-finite update", k)
        return params.copy(), (plus, minus)
    return new, (plus, minus)


def spsa_gradient_estimate(params, loss_fn, ck: float, rng) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    delta = rng.choice([-1.0, 1.0], size=params.shape)
    return (_scalar(loss_fn(params + ck * delta)) - _scalar(loss_fn(params - ck * delta))) / (2 * ck) / delta


def minimize_spsa(loss_fn, x0, epochs: int, gains: SpsaGains = SpsaGains(), seed: int = 0, callback=None):
    """Run ``epochs`` SPSA steps; ``callback(k, params, plus, minus)`` sees every step."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float).copy()
    for k in range(epochs):
        x, (plus, minus) = spsa_step(x, loss_fn, k, gains, rng)
        if callback is not None:
            callback(k, x, plus, minus)
    return x


# --- Adam ------------------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState | None = None, lr: float = 0.02,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape:
        raise UsageError(f"gradient shape {grads.shape} != parameter shape {params.shape}")
    state = AdamState.zeros(len(params)) if state is None else state
    if state.m.shape != params.shape:
        raise UsageError("optimizer state does not match the parameters")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grads
    v = beta2 * state.v + (1 - beta2) * grads ** 2
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    if not np.all(np.isfinite(new)):
        raise NumericalError(f"Adam produced non-finite parameters at step {t}")
    return new, AdamState(m, v, t)


# --- gradients ------------------------------------------------------------------------------------

SHIFT_RULE_KINDS = {GateKind.RY, GateKind.RZ, GateKind.ISING_XX, GateKind.ISING_ZZ, GateKind.U3}
FD_STEP = 1e-5


def finite_difference_grad(fn, params, index: int, step: float = FD_STEP):
    params = np.asarray(params, dtype=float)
    e = np.zeros_like(params)
    e[index] = step
    return (np.asarray(fn(params + e)) - np.asarray(fn(params - e))) / (2 * step)


def parameter_shift_grad(fn, params, index: int, kind=GateKind.RY):
    """d fn / d params[index] by the two-term shift rule.

    ``fn`` must be an expectation value (possibly a per-sample vector) of a circuit in which
    ``params[index]`` enters through a single gate of form exp(-i t G/2) with G**2 = I.
    Gates outside that family fall back to a central finite difference.
    """
    if kind is not None and GateKind(kind) not in SHIFT_RULE_KINDS:
        log.info("parameter %d drives a %s gate; using finite differences", index, GateKind(kind).value)
        return finite_difference_grad(fn, params, index)
    params = np.asarray(params, dtype=float)
    e = np.zeros_like(params)
    e[index] = np.pi / 2
    return (np.asarray(fn(params + e)) - np.asarray(fn(params - e))) / 2


def parameter_shift_gradient(fn, params, kinds=None) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    kinds = [GateKind.RY] * len(params) if kinds is None else kinds
    return np.array([parameter_shift_grad(fn, params, i, kinds[i]) for i in range(len(params))])


# --- metrics ------------------------------------------------------------------------------------

def metrics(preds, labels) -> dict[str, float]:
    """Accuracy, F1 of the positive class, and the classified ratio.

    The classified ratio is the accuracy; it is the reported name when ``preds`` covers the
    complete truth table of a Boolean function.
    """
    preds = np.asarray(preds).astype(int)
    labels = np.asarray(labels).astype(int)
    if preds.shape != labels.shape:
        raise UsageError(f"{len(preds)} predictions for {len(labels)} labels")
    if preds.size == 0:
        raise UsageError("metrics of an empty set")
    accuracy = float(np.mean(preds == labels))
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": accuracy, "f1": float(f1), "classified_ratio": accuracy}
