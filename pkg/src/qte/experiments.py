"""Experiment runners: configuration, embedding catalogue, training drivers and reports."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import data, encode
from .encode import EncodingScheme
from .errors import ConfigError
from .model import QnnModel, RyRzAnsatz, VqcModel
from .optim import AdamState, SpsaGains, adam_step, minimize_spsa
from .train import evaluate_qnn, evaluate_vqc, train_qnn, train_vqc

log = logging.getLogger(__name__)

EXPERIMENTS = ("parity", "bc", "titanic", "mnist", "optimizer-selftest")
REG_TE_LAMBDA = 0.02
LAMBDA_GRID = tuple(float(x) for x in np.logspace(-5, 2, 8))
NAIVE8_PIXELS = tuple(range(4, 12))  # second and third rows of the 4x4 image

# embeddings valid for each experiment
CATALOGUE = {
    "parity": ("naive", "qrac", "ncopies-qrac", "te", "reg-te"),
    "bc": ("zz", "qrac", "te", "reg-te"),
    "titanic": ("zz", "qrac", "te", "reg-te", "qrac+zz", "te+zz", "reg-te+zz"),
    "mnist": ("naive8", "naive16", "qrac", "te", "reg-te", "conv-qrac", "conv-te", "conv41-te"),
}
DEFAULT_DEPTH = {"parity": 3, "bc": 3, "titanic": 4}
DEFAULT_EPOCHS = {"parity": 400, "bc": 200, "titanic": 300, "mnist": 10}


@dataclass
class ExperimentConfig:
    experiment: str = "parity"
    embedding: str = "te"
    lam: float | None = None
    epochs: int | None = None
    depth: int | None = None
    entanglement: str = "full"
    seed: int = 0
    runs: int = 5
    shots: int = 0
    optimizer: str | None = None
    gains: dict = field(default_factory=dict)
    calibrate: bool = True
    lr: float = 0.02
    batch_size: int = 32
    init: str = "random"
    loss: str = "bce"
    nbits: int = 3
    folds: int = 4
    titanic_mode: str = "discrete"
    data_root: str | None = None
    train_cap: int | None = None
    test_cap: int | None = None
    sweep: bool = False
    output: str = "results"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw or {})
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        return cls(**raw).resolved()

    def as_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def resolved(self) -> "ExperimentConfig":
        """Fill experiment-dependent defaults and validate; raises ConfigError."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        cfg = self
        if cfg.experiment == "optimizer-selftest":
            return replace(cfg, epochs=cfg.epochs or 400, lam=cfg.lam or 0.0, optimizer=cfg.optimizer or "spsa",
                           depth=cfg.depth or 0)
        base, _ = parse_embedding(cfg.embedding)
        if base not in CATALOGUE[cfg.experiment]:
            raise ConfigError(f"embedding {cfg.embedding!r} is not available for {cfg.experiment}; "
                              f"choose from {CATALOGUE[cfg.experiment]}")
        if cfg.titanic_mode not in data.TITANIC_MODES:
            raise ConfigError(f"titanic_mode must be one of {data.TITANIC_MODES}, got {cfg.titanic_mode!r}")
        if cfg.experiment == "titanic" and base != "zz":
            # only the pure ZZ baseline exists in both modes
            cfg = replace(cfg, titanic_mode="mixed" if "+zz" in base else "discrete")
        lam = cfg.lam
        if lam is None:
            lam = REG_TE_LAMBDA if base.startswith("reg-te") else 0.0
        if lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {lam}")
        if base.startswith("reg-te") and lam <= 0:
            raise ConfigError("reg-te needs lambda > 0")
        if lam > 0 and not is_trainable(base):
            raise ConfigError(f"lambda > 0 only applies to trainable embeddings, not {base}")
        optimizer = cfg.optimizer or ("adam" if cfg.experiment == "mnist" else "spsa")
        if (optimizer == "adam") != (cfg.experiment == "mnist"):
            raise ConfigError(f"{cfg.experiment} is trained with {'adam' if cfg.experiment == 'mnist' else 'spsa'}")
        if cfg.runs < 1 or cfg.folds < 2 or cfg.shots < 0:
            raise ConfigError("need runs >= 1, folds >= 2 and shots >= 0")
        if cfg.experiment == "parity" and not 1 <= cfg.nbits <= 12:
            raise ConfigError(f"parity size must be in 1..12, got {cfg.nbits}")
        if cfg.entanglement not in ("full", "linear"):
            raise ConfigError(f"entanglement must be full or linear, got {cfg.entanglement!r}")
        if cfg.init not in ("random", "qrac"):
            raise ConfigError(f"init must be random or qrac, got {cfg.init!r}")
        if cfg.init == "qrac" and base == "conv41-te":
            raise ConfigError("no (4,1)-QRAC exists to initialise conv41-te from")
        bad = set(cfg.gains) - {f.name for f in fields(SpsaGains)}
        if bad:
            raise ConfigError(f"unknown SPSA gain(s): {sorted(bad)}")
        epochs = cfg.epochs if cfg.epochs is not None else DEFAULT_EPOCHS[cfg.experiment]
        depth = cfg.depth if cfg.depth is not None else DEFAULT_DEPTH.get(cfg.experiment, 0)
        if epochs < 1 or depth < 0:
            raise ConfigError("need epochs >= 1 and depth >= 0")
        return replace(cfg, lam=float(lam), optimizer=optimizer, epochs=int(epochs), depth=int(depth))


def parse_embedding(name: str) -> tuple[str, int]:
    """``ncopies-qrac:2`` -> ("ncopies-qrac", 2); other names carry one copy."""
    base, _, count = name.partition(":")
    if base == "ncopies-qrac":
        try:
            copies = int(count or 1)
        except ValueError:
            raise ConfigError(f"bad copy count in {name!r}") from None
        if copies < 1:
            raise ConfigError(f"copy count must be >= 1 in {name!r}")
        return base, copies
    if count:
        raise ConfigError(f"only ncopies-qrac takes a count, got {name!r}")
    return base, 1


def is_trainable(base: str) -> bool:
    return base in ("te", "reg-te", "te+zz", "reg-te+zz", "conv-te", "conv41-te")


def discrete_scheme(base: str, copies: int, num_bits: int) -> EncodingScheme | None:
    """Encoding of the discrete part for an embedding name (None for pure ZZ)."""
    head = base.split("+")[0]
    table = {
        "naive": lambda: encode.naive_scheme(num_bits),
        "naive16": lambda: encode.naive_scheme(num_bits),
        "naive8": lambda: encode.naive_scheme(num_bits, NAIVE8_PIXELS),
        "qrac": lambda: encode.sequential_scheme(num_bits, 3),
        "ncopies-qrac": lambda: encode.n_copies_scheme(num_bits, copies),
        "te": lambda: encode.sequential_scheme(num_bits, 3, trainable=True),
        "reg-te": lambda: encode.sequential_scheme(num_bits, 3, trainable=True),
        "conv-qrac": lambda: encode.conv_rowcol31_scheme(trainable=False),
        "conv-te": lambda: encode.conv_rowcol31_scheme(trainable=True),
        "conv41-te": lambda: encode.conv_block41_scheme(),
        "zz": lambda: None,
    }
    return table[head]()


# --- reports ---------------------------------------------------------------------------------

def report_schema() -> dict:
    return json.loads(resources.files("qte").joinpath("report.schema.json").read_text())


def _mean_history(histories: list[list]) -> list[dict]:
    """Per-epoch mean of LossReports across runs (runs share the epoch count)."""
    out = []
    for epoch, reports in enumerate(zip(*histories)):
        out.append({"epoch": epoch,
                    "total": float(np.mean([r.total for r in reports])),
                    "data": float(np.mean([r.data for r in reports])),
                    "spread": float(np.mean([r.spread for r in reports]))})
    return out


def _aggregate(runs: list[dict], split: str) -> dict:
    """Mean over folds per seed, then mean/best/std over seeds."""
    by_seed: dict[int, list] = {}
    for r in runs:
        by_seed.setdefault(r["seed"], []).append(r[split])
    per_seed = {k: {m: float(np.mean([x[m] for x in v])) for m in ("accuracy", "f1")} for k, v in by_seed.items()}
    acc = np.array([v["accuracy"] for v in per_seed.values()])
    f1 = np.array([v["f1"] for v in per_seed.values()])
    return {"accuracy_mean": float(acc.mean()), "accuracy_best": float(acc.max()),
            "accuracy_std": float(acc.std()), "f1_mean": float(f1.mean()), "f1_best": float(f1.max()),
            "per_seed": [{"seed": int(k), **v} for k, v in per_seed.items()]}


def _report(cfg: ExperimentConfig, runs, histories, start, num_qubits, num_params, notes=(), extra=None):
    report = {
        "config": cfg.as_dict(),
        "num_qubits": int(num_qubits),
        "num_params": int(num_params),
        "runs": runs,
        "aggregate": {"train": _aggregate(runs, "train")},
        "losses": _mean_history(histories) if histories else [],
        "wall_time_s": time.time() - start,
        "notes": list(notes),
        "bloch_csv": None,
    }
    if any("test" in r for r in runs):
        report["aggregate"]["test"] = _aggregate([r for r in runs if "test" in r], "test")
    if extra:
        report.update(extra)
    return report


# --- VQC experiments -------------------------------------------------------------------------

@dataclass
class VqcTask:
    """Training data of one VQC experiment, already split into discrete bits and ZZ reals."""

    bits: np.ndarray | None
    reals: np.ndarray | None
    labels: np.ndarray
    scheme: EncodingScheme | None
    zz_features: int
    notes: tuple = ()


def _vqc_task(cfg: ExperimentConfig) -> VqcTask:
    base, copies = parse_embedding(cfg.embedding)
    root = Path(cfg.data_root) if cfg.data_root else data.data_root()
    if cfg.experiment == "parity":
        ds = data.parity_dataset(cfg.nbits)
        return VqcTask(ds.bits, None, ds.labels, discrete_scheme(base, copies, cfg.nbits), 0)
    if cfg.experiment == "bc":
        ds = data.load_breast_cancer(root / "breast-cancer.data")
        if base == "zz":
            return VqcTask(None, data.bc_zz_reals(ds), ds.labels, None, 4, ds.notes)
        return VqcTask(ds.bits, None, ds.labels, discrete_scheme(base, copies, ds.num_bits), 0, ds.notes)
    ds = data.load_titanic(root / "titanic" / "train.csv", mode=cfg.titanic_mode)
    if base == "zz":
        return VqcTask(None, data.titanic_zz_reals(ds), ds.labels, None, 4, ds.notes)
    zz = ds.reals.shape[1] if "+zz" in base else 0
    return VqcTask(ds.bits, ds.reals if zz else None, ds.labels,
                   discrete_scheme(base, copies, ds.num_bits), zz, ds.notes)


def _take(arr, idx):
    return None if arr is None else arr[idx]


def _train_one(cfg: ExperimentConfig, task: VqcTask, train_idx, test_idx, seed: int, tag: str):
    n_qubits = (task.scheme.num_qubits if task.scheme else 0) + task.zz_features
    model = VqcModel(task.scheme, RyRzAnsatz(n_qubits, cfg.depth, cfg.entanglement), task.zz_features)
    bits, reals, labels = _take(task.bits, train_idx), _take(task.reals, train_idx), task.labels[train_idx]
    result = train_vqc(model, labels, bits, reals, epochs=cfg.epochs, lam=cfg.lam,
                       gains=SpsaGains(**cfg.gains), seed=seed, init=cfg.init, loss=cfg.loss,
                       shots=cfg.shots, calibrate=cfg.calibrate, log_every=max(1, cfg.epochs // 20), tag=tag)
    run = {"seed": seed, "train": evaluate_vqc(model, result, labels, bits, reals, cfg.shots, seed),
           "final_spread": result.final_spread}
    if test_idx is not None:
        run["test"] = evaluate_vqc(model, result, task.labels[test_idx], _take(task.bits, test_idx),
                                   _take(task.reals, test_idx), cfg.shots, seed)
    table_params = result.table.num_params if result.table is not None else 0
    return model, result, run, model.ansatz.num_params + table_params


def _write_bloch_for(result, out_dir: Path | None, name: str = "bloch.csv"):
    if out_dir is None or result is None or result.table is None:
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "table.npy", result.table.params)
    return str(export_bloch(result.table, out_dir / name))


def run_parity(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Full-truth-table training, one run per seed; classified ratio = training accuracy."""
    cfg = cfg.resolved()
    start = time.time()
    task = _vqc_task(cfg)
    idx = np.arange(len(task.labels))
    runs, histories, best = [], [], None
    for seed in range(cfg.seed, cfg.seed + cfg.runs):
        model, result, run, n_params = _train_one(cfg, task, idx, None, seed, f"[seed {seed}] ")
        run["fold"] = 0
        run["classified_ratio"] = run["train"]["classified_ratio"]
        runs.append(run)
        histories.append(result.history)
        if best is None or run["classified_ratio"] > best[0]:
            best = (run["classified_ratio"], result)
    ratios = [r["classified_ratio"] for r in runs]
    report = _report(cfg, runs, histories, start, model.num_qubits, n_params, task.notes,
                     {"classified_ratio": {"best": max(ratios), "mean": float(np.mean(ratios))}})
    report["bloch_csv"] = _write_bloch_for(best[1], out_dir)
    return report


def run_cv(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Stratified k-fold cross validation, repeated for each seed (bc and titanic)."""
    cfg = cfg.resolved()
    start = time.time()
    task = _vqc_task(cfg)
    runs, histories, last = [], [], None
    for seed in range(cfg.seed, cfg.seed + cfg.runs):
        for fold, (train_idx, test_idx) in enumerate(data.kfold_split(task.labels, cfg.folds, seed)):
            if cfg.experiment == "bc":
                train_idx = _oversample_index(task.labels, train_idx, seed)
            model, result, run, n_params = _train_one(cfg, task, train_idx, test_idx, seed,
                                                      f"[seed {seed} fold {fold}] ")
            run["fold"] = fold
            runs.append(run)
            histories.append(result.history)
            last = result
    notes = list(task.notes) + (["positive training samples doubled in every fold"] if cfg.experiment == "bc" else [])
    report = _report(cfg, runs, histories, start, model.num_qubits, n_params, notes)
    report["bloch_csv"] = _write_bloch_for(last, out_dir)
    return report


def _oversample_index(labels, train_idx, seed):
    pos = train_idx[labels[train_idx] == 1]
    return np.random.default_rng(seed).permutation(np.concatenate([train_idx, pos]))


run_bc = run_cv
run_titanic = run_cv


def lambda_sweep(cfg: ExperimentConfig, grid=LAMBDA_GRID, out_dir: Path | None = None) -> dict:
    """Repeat a trainable-embedding experiment over a log grid of lambda values."""
    cfg = cfg.resolved()
    base, _ = parse_embedding(cfg.embedding)
    if not is_trainable(base):
        raise ConfigError(f"lambda sweep needs a trainable embedding, got {base}")
    name = base.replace("reg-", "")
    rows, best = [], None
    for lam in grid:
        sub = replace(cfg, embedding=name if lam == 0 else "reg-" + name, lam=float(lam), sweep=False)
        sub_dir = out_dir / f"lambda_{lam:.0e}" if out_dir is not None else None
        report = RUNNERS[cfg.experiment](sub, sub_dir)
        split = "test" if "test" in report["aggregate"] else "train"
        rows.append({"lambda": float(lam), "accuracy_mean": report["aggregate"][split]["accuracy_mean"],
                     "f1_mean": report["aggregate"][split]["f1_mean"]})
        if best is None or rows[-1]["accuracy_mean"] > best[0]:
            best = (rows[-1]["accuracy_mean"], report)
    # the full report of the best lambda, with the whole sweep attached
    report = best[1]
    report["config"]["sweep"] = True
    report["sweep"] = rows
    report["best_lambda"] = report["config"]["lambda"]
    return report


# --- MNIST / QNN -----------------------------------------------------------------------------

def mnist_model(embedding: str) -> QnnModel:
    base, copies = parse_embedding(embedding)
    return QnnModel(discrete_scheme(base, copies, 16))


def run_mnist(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """QNN with Adam, ``runs`` seeded repetitions on the fixed train/test split."""
    cfg = cfg.resolved()
    start = time.time()
    root = Path(cfg.data_root) / "mnist" if cfg.data_root else None
    train = data.mnist_split(root, "train", cap=cfg.train_cap)
    test = data.mnist_split(root, "test", cap=cfg.test_cap)
    model = mnist_model(cfg.embedding)
    runs, histories, best = [], [], None
    for seed in range(cfg.seed, cfg.seed + cfg.runs):
        result = train_qnn(model, train.bits, train.labels, epochs=cfg.epochs, batch_size=cfg.batch_size,
                           lr=cfg.lr, lam=cfg.lam, seed=seed, init=cfg.init, loss=cfg.loss, tag=f"[seed {seed}] ")
        run = {"seed": seed, "fold": 0, "final_spread": result.final_spread,
               "train": evaluate_qnn(model, result, train.bits, train.labels),
               "test": evaluate_qnn(model, result, test.bits, test.labels)}
        runs.append(run)
        histories.append(result.history)
        if best is None or run["train"]["accuracy"] > best[0]:
            best = (run["train"]["accuracy"], result)
    table_params = best[1].table.num_params if best[1].table is not None else 0
    notes = list(train.notes) + [f"test split: {n}" for n in test.notes]
    notes.append(f"{len(train)} training and {len(test)} test samples")
    report = _report(cfg, runs, histories, start, model.num_qubits, model.readout.num_params + table_params, notes)
    report["bloch_csv"] = _write_bloch_for(best[1], out_dir)
    return report


# --- optimizer self test ---------------------------------------------------------------------

def run_selftest(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """SPSA and Adam on the quadratic bowl f(x) = |x|^2 from (1, 1)."""
    cfg = cfg.resolved()
    start = time.time()
    bowl = lambda x: float(np.sum(x ** 2))  # noqa: E731
    gains = SpsaGains(**cfg.gains)
    norms = [float(np.linalg.norm(minimize_spsa(bowl, [1.0, 1.0], cfg.epochs, gains, seed)))
             for seed in range(cfg.seed, cfg.seed + max(cfg.runs, 100))]
    x, state = np.array([1.0, 1.0]), None
    for _ in range(500):
        x, state = adam_step(x, 2 * x, state if state is not None else AdamState.zeros(2), lr=cfg.lr)
    spsa_ok = sum(n < 0.1 for n in norms)
    runs = [{"seed": cfg.seed, "fold": 0, "train": {"accuracy": spsa_ok / len(norms), "f1": 0.0,
                                                     "classified_ratio": spsa_ok / len(norms)}}]
    return _report(cfg, runs, [], start, 0, 2, [], {
        "selftest": {"spsa_converged": spsa_ok, "spsa_runs": len(norms), "spsa_median_norm": float(np.median(norms)),
                     "adam_final_loss": bowl(x), "passed": bool(spsa_ok >= 0.9 * len(norms) and bowl(x) < 1e-3)}})


RUNNERS = {"parity": run_parity, "bc": run_bc, "titanic": run_titanic, "mnist": run_mnist,
           "optimizer-selftest": run_selftest}


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> dict:
    cfg = cfg.resolved()
    out = Path(out_dir) if out_dir is not None else None
    if cfg.sweep:
        return lambda_sweep(cfg, out_dir=out)
    return RUNNERS[cfg.experiment](cfg, out)


# --- output files ----------------------------------------------------------------------------

def export_bloch(table, path: str | Path) -> Path:
    """Bloch coordinates of every (slot, bitstring) entry as CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["slot", "bits", "x", "y", "z", "theta", "phi"])
        writer.writeheader()
        for row in encode.bloch_rows(table):
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    return path


def write_outputs(report: dict, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"report": out_dir / "report.json", "losses": out_dir / "losses.csv"}
    paths["report"].write_text(json.dumps(report, indent=2, default=_json_default))
    with open(paths["losses"], "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "total", "data", "spread"])
        writer.writeheader()
        for row in report.get("losses", []):
            writer.writerow(row)
    return paths


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
