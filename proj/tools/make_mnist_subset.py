#!/usr/bin/env python3
"""Write a small MNIST subset as IDX files.

The source is the 5,000-image MNIST sample bundled with mlxtend
(mlxtend/data/data/mnist_5k.csv.gz: 784 pixel columns + label, rows sorted
by class). Rows are shuffled with a fixed seed and split into train/test.

    python3 tools/make_mnist_subset.py [--csv PATH] [--out data/mnist] [--test 1000]
"""
import argparse
import gzip
import os
import struct

import numpy as np


def find_bundled_csv():
    import importlib.util

    spec = importlib.util.find_spec("mlxtend")
    if spec is None or not spec.submodule_search_locations:
        raise SystemExit("mlxtend not installed; pass --csv or `pip install mlxtend`")
    return os.path.join(spec.submodule_search_locations[0], "data", "data", "mnist_5k.csv.gz")


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, images.shape[0], 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--csv", default=None)
    parser.add_argument("--out", default="data/mnist")
    parser.add_argument("--test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    csv = args.csv or find_bundled_csv()
    rows = np.loadtxt(gzip.open(csv), delimiter=",")
    rows = rows[np.random.default_rng(args.seed).permutation(rows.shape[0])]
    images, labels = rows[:, :-1], rows[:, -1].astype(int)
    n_train = rows.shape[0] - args.test

    os.makedirs(args.out, exist_ok=True)
    write_images(os.path.join(args.out, "train-images-idx3-ubyte"), images[:n_train])
    write_labels(os.path.join(args.out, "train-labels-idx1-ubyte"), labels[:n_train])
    write_images(os.path.join(args.out, "t10k-images-idx3-ubyte"), images[n_train:])
    write_labels(os.path.join(args.out, "t10k-labels-idx1-ubyte"), labels[n_train:])
    print(f"wrote {n_train} train / {args.test} test images to {args.out}")


if __name__ == "__main__":
    main()
