"""Regenerate the small datasets under tests/data.

Wine comes from the copy bundled with scikit-learn. The MNIST subset is the
5000-image sample (500 per digit) shipped inside the mlxtend wheel; it is
shuffled, split 4000/1000 stratified, and written as gzipped IDX files.

    pip download --no-deps -d /tmp/wheels mlxtend
    python scripts/make_test_data.py /tmp/wheels/mlxtend-*.whl
"""

import csv
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"


def write_wine():
    from sklearn.datasets import load_wine

    ds = load_wine()
    with open(OUT / "wine.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(list(ds.feature_names) + ["class"])
        for row, label in zip(ds.data, ds.target):
            w.writerow([repr(float(v)) for v in row] + [f"class_{label}"])


def write_idx(path, arr):
    arr = np.asarray(arr, dtype=np.uint8)
    magic = 0x0803 if arr.ndim == 3 else 0x0801
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in arr.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + arr.tobytes())


def write_mnist(wheel):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.StringIO(gzip.decompress(raw).decode()), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)

    rng = np.random.default_rng(20190214)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(labels == c))
        train_idx.extend(idx[:400])
        test_idx.extend(idx[400:])
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)

    d = OUT / "mnist-subset"
    d.mkdir(parents=True, exist_ok=True)
    write_idx(d / "train-images-idx3-ubyte.gz", images[train_idx])
    write_idx(d / "train-labels-idx1-ubyte.gz", labels[train_idx])
    write_idx(d / "test-images-idx3-ubyte.gz", images[test_idx])
    write_idx(d / "test-labels-idx1-ubyte.gz", labels[test_idx])


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    write_wine()
    if len(sys.argv) > 1:
        write_mnist(sys.argv[1])
