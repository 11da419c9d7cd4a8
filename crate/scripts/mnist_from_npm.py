#!/usr/bin/env python3
"""Build gzipped IDX files from the 10,000 MNIST digits bundled in the npm
`mnist` package (MIT, Juan Cazala).

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist-10k

Pixels are stored in the package as value/255 rounded to three decimals, so
round(v * 255) recovers the original bytes exactly. Rows are shuffled with a
fixed seed so that prefixes are not sorted by class.
"""
import gzip
import json
import os
import random
import struct
import sys


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            data = json.load(fh)["data"]
        count = len(data) // 784
        for i in range(count):
            row = data[i * 784:(i + 1) * 784]
            images.append(bytes(int(round(v * 255)) for v in row))
            labels.append(digit)
    order = list(range(len(labels)))
    random.Random(20180612).shuffle(order)
    os.makedirs(dst, exist_ok=True)
    n = len(order)
    with gzip.GzipFile(os.path.join(dst, "images-idx3-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for i in order:
            fh.write(images[i])
    with gzip.GzipFile(os.path.join(dst, "labels-idx1-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x801, n))
        fh.write(bytes(labels[i] for i in order))
    print(f"wrote {n} digits to {dst}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
