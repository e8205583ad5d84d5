"""Rebuild the bundled ``data/`` directory from upstream package archives.

The UCI, Kaggle and LeCun hosts are not always reachable, but the same files
ship inside packages on PyPI:

* ``Orange-2.7.8.tar.gz``      Orange/datasets/breast-cancer.tab (UCI Ljubljana set)
* ``explainerdashboard`` wheel  datasets/titanic_{train,test}.csv (Kaggle train.csv, 891 rows)
* ``mlxtend`` wheel             data/mnist_5k.csv.gz (500 images per digit)

Usage::

    pip download --no-deps mlxtend explainerdashboard -d /tmp/dl
    curl -o /tmp/dl/Orange-2.7.8.tar.gz <files.pythonhosted.org url>
    python tools/build_datasets.py /tmp/dl data/
"""
import glob
import gzip
import io
import os
import struct
import sys
import tarfile
import zipfile

import numpy as np
import pandas as pd


def build_breast_cancer(src_dir, out_dir):
    tar = tarfile.open(glob.glob(os.path.join(src_dir, "Orange-2.7.8.tar.gz"))[0])
    text = tar.extractfile("Orange-2.7.8/Orange/datasets/breast-cancer.tab").read().decode()
    lines = text.splitlines()[3:]  # header, type row, flag row
    rows = [",".join(v if v else "?" for v in line.split("\t")) for line in lines if line.strip()]
    with open(os.path.join(out_dir, "breast-cancer.data"), "w") as f:
        f.write("\n".join(rows) + "\n")
    return len(rows)


def build_titanic(src_dir, out_dir):
    wheel = zipfile.ZipFile(glob.glob(os.path.join(src_dir, "explainerdashboard-*.whl"))[0])
    parts = [pd.read_csv(io.BytesIO(wheel.read(f"explainerdashboard/datasets/titanic_{s}.csv")))
             for s in ("train", "test")]
    df = pd.concat(parts, ignore_index=True)
    out = pd.DataFrame({
        "PassengerId": np.arange(1, len(df) + 1),
        "Survived": df["Survival"],
        "Pclass": df["PassengerClass"],
        "Name": df["Name"],
        "Sex": np.where(df["Sex_female"] == 1, "female", "male"),
        "Age": df["Age"].where(df["Age"] >= 0),
        "Fare": df["Fare"],
    })
    out.to_csv(os.path.join(out_dir, "titanic", "train.csv"), index=False)
    return len(out)


def _write_idx(path, array, magic):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for dim in array.shape:
            f.write(struct.pack(">I", dim))
        f.write(array.astype(np.uint8).tobytes())


def build_mnist(src_dir, out_dir, n_train_per_digit=350):
    wheel = zipfile.ZipFile(glob.glob(os.path.join(src_dir, "mlxtend-*.whl"))[0])
    raw = gzip.decompress(wheel.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    table = np.loadtxt(io.StringIO(raw), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1].astype(int)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        train_idx.extend(idx[:n_train_per_digit])
        test_idx.extend(idx[n_train_per_digit:])
    train_idx, test_idx = np.sort(train_idx), np.sort(test_idx)
    d = os.path.join(out_dir, "mnist")
    _write_idx(os.path.join(d, "train-images-idx3-ubyte.gz"), images[train_idx], 0x00000803)
    _write_idx(os.path.join(d, "train-labels-idx1-ubyte.gz"), labels[train_idx], 0x00000801)
    _write_idx(os.path.join(d, "t10k-images-idx3-ubyte.gz"), images[test_idx], 0x00000803)
    _write_idx(os.path.join(d, "t10k-labels-idx1-ubyte.gz"), labels[test_idx], 0x00000801)
    return len(train_idx), len(test_idx)


def main(src_dir, out_dir):
    os.makedirs(os.path.join(out_dir, "titanic"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "mnist"), exist_ok=True)
    print("breast-cancer rows:", build_breast_cancer(src_dir, out_dir))
    print("titanic rows:", build_titanic(src_dir, out_dir))
    print("mnist train/test:", build_mnist(src_dir, out_dir))


if __name__ == "__main__":
    main(*sys.argv[1:3])
