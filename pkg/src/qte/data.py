"""Datasets: parity truth tables, UCI Breast Cancer, Titanic and binarized MNIST.

Every loader returns a :class:`Dataset` holding a bit matrix (discrete part), an
optional matrix of pre-scaled reals (continuous part, in [0, 2*pi)) and binary
labels. Categorical features are turned into ordinal indices over a
lexicographically sorted vocabulary and then into big-endian bit groups.
"""
from __future__ import annotations

import csv
import gzip
import hashlib
import itertools
import logging
import math
import os
import struct
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import IngestionError, UsageError

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
DATA_ROOT_ENV = "QTE_DATA_ROOT"


def data_root(default: str | os.PathLike = "data") -> Path:
    """Dataset directory: ``$QTE_DATA_ROOT`` if set, else ``default``."""
    return Path(os.environ.get(DATA_ROOT_ENV, default))


# --- containers ------------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    bits: np.ndarray | None
    reals: np.ndarray | None
    label: int

    def __post_init__(self):
        if self.bits is None and self.reals is None:
            raise UsageError("a sample needs bits or reals")
        if self.label not in (0, 1):
            raise UsageError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class Feature:
    """One column of a codec.

    ``kind`` is ``categorical``, ``binned-continuous`` or ``rescaled-continuous``.
    Rescaled features carry no vocabulary; they live in the reals matrix.
    """

    name: str
    kind: str
    vocabulary: tuple[str, ...] = ()
    lo: float = 0.0
    hi: float = 0.0

    @property
    def width(self) -> int:
        if self.kind == "rescaled-continuous":
            return 0
        return max(1, math.ceil(math.log2(len(self.vocabulary))))

    def index(self, value: str) -> int:
        try:
            return self.vocabulary.index(value)
        except ValueError:
            raise UsageError(f"{value!r} is not in the vocabulary of {self.name}") from None

    def encode(self, value: str) -> str:
        return ordinal_to_bits(self.index(value), self.width)

    def decode(self, bits: str) -> str:
        return self.vocabulary[int(bits, 2)]


@dataclass(frozen=True)
class FeatureCodec:
    features: tuple[Feature, ...]

    @property
    def discrete(self) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.kind != "rescaled-continuous")

    @property
    def continuous(self) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.kind == "rescaled-continuous")

    @property
    def num_bits(self) -> int:
        return sum(f.width for f in self.discrete)

    def encode(self, values: dict[str, str]) -> str:
        return "".join(f.encode(values[f.name]) for f in self.discrete)

    def decode(self, bits: str) -> dict[str, str]:
        out, pos = {}, 0
        for f in self.discrete:
            out[f.name] = f.decode(bits[pos:pos + f.width])
            pos += f.width
        return out

    def fingerprint(self) -> str:
        text = repr([(f.name, f.kind, f.vocabulary) for f in self.features])
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Dataset:
    bits: np.ndarray | None
    reals: np.ndarray | None
    labels: np.ndarray
    codec: FeatureCodec | None = None
    notes: tuple[str, ...] = ()
    oversampled: bool = False

    def __post_init__(self):
        n = len(self.labels)
        for part in (self.bits, self.reals):
            if part is not None and len(part) != n:
                raise UsageError("bits, reals and labels must have the same length")
        if self.bits is None and self.reals is None:
            raise UsageError("a dataset needs bits or reals")
        if not np.isin(self.labels, (0, 1)).all():
            raise UsageError("labels must be binary")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> Sample:
        bits = None if self.bits is None else self.bits[i]
        reals = None if self.reals is None else self.reals[i]
        return Sample(bits, reals, int(self.labels[i]))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=int)
        return replace(self,
                       bits=None if self.bits is None else self.bits[index],
                       reals=None if self.reals is None else self.reals[index],
                       labels=self.labels[index])

    @property
    def num_bits(self) -> int:
        return 0 if self.bits is None else self.bits.shape[1]

    def bitstrings(self) -> list[str]:
        return ["".join(map(str, row)) for row in self.bits]


def ordinal_to_bits(index: int, width: int) -> str:
    """Big-endian binary of ``index`` padded to ``width`` characters."""
    if width < 1 or not 0 <= index < 2 ** width:
        raise UsageError(f"index {index} does not fit in {width} bits")
    return format(index, f"0{width}b")


def _bit_matrix(strings: list[str]) -> np.ndarray:
    return np.array([[int(c) for c in s] for s in strings], dtype=np.uint8)


def ordinal_reals(dataset_bits_idx: np.ndarray, sizes) -> np.ndarray:
    """Ordinal indices ``k`` of a ``c``-valued feature mapped to ``2*pi*k/c`` (inside [0, 2*pi))."""
    sizes = np.asarray(sizes, dtype=float)
    return TWO_PI * np.asarray(dataset_bits_idx, dtype=float) / sizes


def minmax_reals(values) -> tuple[np.ndarray, float, float]:
    """Rescale to [0, 2*pi); the maximum lands just below 2*pi."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values), lo, hi
    scaled = (values - lo) / (hi - lo) * TWO_PI
    return np.minimum(scaled, np.nextafter(TWO_PI, 0)), lo, hi


# --- parity ----------------------------------------------------------------------------------

def parity_dataset(nbits: int) -> Dataset:
    """All 2^n bitstrings, labelled by the XOR of their bits."""
    if not 1 <= nbits <= 12:
        raise UsageError(f"parity size must be in 1..12, got {nbits}")
    bits = np.array(list(itertools.product((0, 1), repeat=nbits)), dtype=np.uint8)
    return Dataset(bits, None, bits.sum(axis=1) % 2)


# --- breast cancer ---------------------------------------------------------------------------

BC_COLUMNS = ("class", "age", "menopause", "tumor-size", "inv-nodes", "node-caps",
              "deg-malig", "breast", "breast-quad", "irradiat")
BC_FEATURES = ("tumor-size", "breast-quad", "deg-malig", "age")
BC_POSITIVE = "recurrence-events"
BC_BITS = 12


def _read_rows(path: Path, ncols: int | None = None, header: bool = False) -> tuple[list[str] | None, list[list[str]]]:
    if not path.is_file():
        raise IngestionError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    head = rows.pop(0) if header and rows else None
    width = ncols if ncols is not None else (len(head) if head else None)
    if width is not None:
        for lineno, row in enumerate(rows, start=2 if header else 1):
            if len(row) != width:
                raise IngestionError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
    return head, rows


def _categorical(name: str, values: list[str]) -> Feature:
    return Feature(name, "categorical", tuple(sorted(set(values))))


def load_breast_cancer(path: str | os.PathLike | None = None) -> Dataset:
    """UCI breast-cancer.data restricted to tumor-size, breast-quad, deg-malig and age.

    A '?' is replaced by the most frequent value of its column before the
    vocabulary is built. Labels: 1 = recurrence.
    """
    path = Path(path) if path is not None else data_root() / "breast-cancer.data"
    _, rows = _read_rows(path, ncols=len(BC_COLUMNS))
    columns = {name: [r[i].strip() for r in rows] for i, name in enumerate(BC_COLUMNS)}
    for lineno, label in enumerate(columns["class"], start=1):
        if label not in (BC_POSITIVE, "no-recurrence-events"):
            raise IngestionError(f"{path}: row {lineno} has unknown class {label!r}")
    notes = []
    features = []
    for name in BC_FEATURES:
        values = columns[name]
        missing = values.count("?")
        if missing:
            mode = Counter(v for v in values if v != "?").most_common(1)[0][0]
            values = [mode if v == "?" else v for v in values]
            columns[name] = values
            notes.append(f"{name}: {missing} missing value(s) replaced by mode {mode!r}")
        features.append(_categorical(name, values))
    codec = FeatureCodec(tuple(features))
    if codec.num_bits != BC_BITS:
        raise IngestionError(f"{path}: selected features need {codec.num_bits} bits, expected {BC_BITS}")
    for f in features:
        log.debug("breast cancer %s: %d categories, %d bits", f.name, len(f.vocabulary), f.width)
    strings = [codec.encode({n: columns[n][i] for n in BC_FEATURES}) for i in range(len(rows))]
    labels = np.array([int(c == BC_POSITIVE) for c in columns["class"]])
    return Dataset(_bit_matrix(strings), None, labels, codec, tuple(notes))


def bc_zz_reals(dataset: Dataset) -> np.ndarray:
    """Ordinal value of each breast-cancer feature as a ZZ-map angle in [0, 2*pi)."""
    return _ordinal_angles(dataset)


def _ordinal_angles(dataset: Dataset) -> np.ndarray:
    cols, pos = [], 0
    for f in dataset.codec.discrete:
        chunk = dataset.bits[:, pos:pos + f.width]
        idx = chunk @ (1 << np.arange(f.width - 1, -1, -1))
        cols.append(ordinal_reals(idx, len(f.vocabulary)))
        pos += f.width
    return np.stack(cols, axis=1)


# --- titanic ---------------------------------------------------------------------------------

TITANIC_FEATURES = ("Sex", "Age", "Pclass", "Fare")
TITANIC_MODES = ("mixed", "discrete")


def _quartile_bins(values: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
    edges = np.quantile(values, [0.25, 0.5, 0.75])
    idx = np.searchsorted(edges, values, side="right")
    return idx, ("q1", "q2", "q3", "q4")


def load_titanic(path: str | os.PathLike | None = None, mode: str = "discrete") -> Dataset:
    """Kaggle Titanic train.csv with sex, age, pclass and fare.

    ``discrete``: age and fare are quartile-binned (2 bits each), giving
    sex(1) + age(2) + pclass(2) + fare(2) = 7 bits.
    ``mixed``: sex and pclass are bits (3 in total); age and fare are min-max
    rescaled into the reals matrix. Missing ages take the median age.
    """
    if mode not in TITANIC_MODES:
        raise UsageError(f"titanic mode must be one of {TITANIC_MODES}, got {mode!r}")
    path = Path(path) if path is not None else data_root() / "titanic" / "train.csv"
    head, rows = _read_rows(path, header=True)
    needed = ("Survived",) + TITANIC_FEATURES
    missing_cols = [c for c in needed if c not in (head or [])]
    if missing_cols:
        raise IngestionError(f"{path}: missing column(s) {missing_cols}")
    col = {name: head.index(name) for name in needed}

    def numbers(name, allow_missing=False):
        out = []
        for lineno, row in enumerate(rows, start=2):
            text = row[col[name]].strip()
            if text == "" and allow_missing:
                out.append(np.nan)
                continue
            try:
                out.append(float(text))
            except ValueError:
                raise IngestionError(f"{path}: row {lineno} has bad {name} {text!r}") from None
        return np.array(out)

    labels = numbers("Survived").astype(int)
    age = numbers("Age", allow_missing=True)
    fare = numbers("Fare", allow_missing=True)
    notes = []
    for name, arr in (("Age", age), ("Fare", fare)):
        holes = np.isnan(arr)
        if holes.any():
            median = float(np.nanmedian(arr))
            arr[holes] = median
            notes.append(f"{name}: {int(holes.sum())} missing value(s) replaced by median {median:g}")
    sex = [row[col["Sex"]].strip() for row in rows]
    pclass = [row[col["Pclass"]].strip() for row in rows]

    sex_f = _categorical("Sex", sex)
    pclass_f = _categorical("Pclass", pclass)
    if mode == "discrete":
        age_idx, bins = _quartile_bins(age)
        fare_idx, _ = _quartile_bins(fare)
        age_f = Feature("Age", "binned-continuous", bins)
        fare_f = Feature("Fare", "binned-continuous", bins)
        codec = FeatureCodec((sex_f, age_f, pclass_f, fare_f))
        strings = [sex_f.encode(sex[i]) + ordinal_to_bits(int(age_idx[i]), 2)
                   + pclass_f.encode(pclass[i]) + ordinal_to_bits(int(fare_idx[i]), 2) for i in range(len(rows))]
        return Dataset(_bit_matrix(strings), None, labels, codec, tuple(notes))

    age_r, alo, ahi = minmax_reals(age)
    fare_r, flo, fhi = minmax_reals(fare)
    codec = FeatureCodec((sex_f, Feature("Age", "rescaled-continuous", lo=alo, hi=ahi),
                          pclass_f, Feature("Fare", "rescaled-continuous", lo=flo, hi=fhi)))
    strings = [sex_f.encode(sex[i]) + pclass_f.encode(pclass[i]) for i in range(len(rows))]
    return Dataset(_bit_matrix(strings), np.stack([age_r, fare_r], axis=1), labels, codec, tuple(notes))


def titanic_zz_reals(dataset: Dataset) -> np.ndarray:
    """All four titanic features as ZZ angles: ordinal ones as 2*pi*k/c, rescaled ones as is.

    Column order follows the codec (sex, age, pclass, fare).
    """
    ordinal = _ordinal_angles(dataset)
    if dataset.reals is None:
        return ordinal
    # mixed mode: discrete columns are sex, pclass; reals are age, fare
    return np.stack([ordinal[:, 0], dataset.reals[:, 0], ordinal[:, 1], dataset.reals[:, 1]], axis=1)


# --- MNIST -----------------------------------------------------------------------------------

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_DIGITS = (3, 6)


def _open_idx(path: Path) -> bytes:
    if not path.is_file():
        raise IngestionError(f"dataset file not found: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise IngestionError(f"{path}: corrupt gzip stream ({exc})") from None
    return raw


def read_idx_images(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    raw = _open_idx(path)
    if len(raw) < 16:
        raise IngestionError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise IngestionError(f"{path}: bad image magic {magic:#010x}")
    if len(raw) != 16 + count * rows * cols:
        raise IngestionError(f"{path}: expected {count}x{rows}x{cols} pixels, file has {len(raw) - 16} bytes")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    raw = _open_idx(path)
    if len(raw) < 8:
        raise IngestionError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise IngestionError(f"{path}: bad label magic {magic:#010x}")
    if len(raw) != 8 + count:
        raise IngestionError(f"{path}: expected {count} labels, file has {len(raw) - 8} bytes")
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def downscale(images: np.ndarray, size: int = 4) -> np.ndarray:
    """Block-average (N, H, W) images down to (N, size, size); H and W must be multiples of size."""
    n, h, w = images.shape
    if h % size or w % size:
        raise UsageError(f"{h}x{w} images cannot be area-averaged to {size}x{size}")
    return images.reshape(n, size, h // size, size, w // size).mean(axis=(2, 4))


def binarize(images: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where a pixel reaches ``threshold`` times its own image's brightest pixel; blank images stay 0."""
    peak = images.reshape(len(images), -1).max(axis=1)
    peak = np.where(peak > 0, peak, np.inf)
    return (images >= threshold * peak[:, None, None]).astype(np.uint8)


def remove_contradictions(bits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Drop every sample whose bitstring also occurs with the other label."""
    seen: dict[bytes, set] = {}
    for row, y in zip(bits, labels):
        seen.setdefault(row.tobytes(), set()).add(int(y))
    keep = np.array([len(seen[row.tobytes()]) == 1 for row in bits], dtype=bool)
    return bits[keep], labels[keep], int((~keep).sum())


def load_mnist(images_path: str | os.PathLike, labels_path: str | os.PathLike,
               threshold: float = 0.5, cap: int | None = None) -> Dataset:
    """Digits 3 (label 0) and 6 (label 1) as 16-bit row-major 4x4 images.

    ``cap`` keeps the first ``cap`` samples after contradiction removal.
    """
    images = read_idx_images(images_path)
    digits = read_idx_labels(labels_path)
    if len(images) != len(digits):
        raise IngestionError(f"{len(images)} images but {len(digits)} labels")
    keep = np.isin(digits, MNIST_DIGITS)
    small = downscale(images[keep].astype(float))
    bits = binarize(small, threshold).reshape(-1, 16)
    labels = (digits[keep] == MNIST_DIGITS[1]).astype(int)
    bits, labels, dropped = remove_contradictions(bits, labels)
    if cap is not None:
        bits, labels = bits[:cap], labels[:cap]
    notes = (f"{dropped} sample(s) with contradictory bitstrings removed",)
    return Dataset(bits, None, labels, None, notes)


def mnist_split(root: str | os.PathLike | None = None, split: str = "train", **kwargs) -> Dataset:
    root = Path(root) if root is not None else data_root() / "mnist"
    prefix = {"train": "train", "test": "t10k"}[split]
    def pick(stem):
        for name in (f"{stem}.gz", stem):
            if (root / name).is_file():
                return root / name
        return root / f"{stem}.gz"
    return load_mnist(pick(f"{prefix}-images-idx3-ubyte"), pick(f"{prefix}-labels-idx1-ubyte"), **kwargs)


# --- processed corpus cache --------------------------------------------------------------------

def write_corpus(dataset: Dataset, path: str | os.PathLike) -> None:
    """One ``bits,label`` record per line."""
    with open(path, "w", newline="\n") as fh:
        for s, y in zip(dataset.bitstrings(), dataset.labels):
            fh.write(f"{s},{int(y)}\n")


def read_corpus(path: str | os.PathLike) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"corpus file not found: {path}")
    strings, labels = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        bits, _, label = line.partition(",")
        if not bits or set(bits) - {"0", "1"} or label not in ("0", "1"):
            raise IngestionError(f"{path}: malformed record on line {lineno}: {line!r}")
        if strings and len(bits) != len(strings[0]):
            raise IngestionError(f"{path}: line {lineno} has {len(bits)} bits, expected {len(strings[0])}")
        strings.append(bits)
        labels.append(int(label))
    if not strings:
        raise IngestionError(f"{path}: empty corpus")
    return Dataset(_bit_matrix(strings), None, np.array(labels))


# --- resampling and splits -------------------------------------------------------------------

def oversample_positive(dataset: Dataset, seed: int = 0) -> Dataset:
    """Duplicate every label-1 sample once and shuffle; refuses an already oversampled set."""
    if dataset.oversampled:
        raise UsageError("dataset is already oversampled")
    pos = np.flatnonzero(dataset.labels == 1)
    index = np.concatenate([np.arange(len(dataset)), pos])
    index = np.random.default_rng(seed).permutation(index)
    return replace(dataset.subset(index), oversampled=True)


def kfold_split(labels, k: int = 4, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold: each class is shuffled and dealt round-robin onto the folds.

    Returns ``(train_index, validation_index)`` pairs.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise UsageError(f"k must be >= 2, got {k}")
    if k > len(labels):
        raise UsageError(f"cannot make {k} folds from {len(labels)} samples")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    start = 0
    for cls in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        for j, idx in enumerate(members):
            folds[(start + j) % k].append(idx)
        start = (start + len(members)) % k
    out = []
    for i in range(k):
        val = np.sort(np.array(folds[i], dtype=int))
        train = np.sort(np.concatenate([np.array(folds[j], dtype=int) for j in range(k) if j != i]))
        out.append((train, val))
    return out
